//! Generalized measurements (POVMs), their moment operators, and exact or
//! Monte Carlo error matrices.
//!
//! A measurement is stored as a finite list of effects `Π_j ⪰ 0` with
//! strictly positive quadrature weights `w_j` and a label vector
//! `λ_j ∈ C^m` per outcome, such that `Σ_j w_j Π_j ≈ I`. Outcome `j` occurs
//! with probability `p_j = w_j Tr(ϱ Π_j)` and reports the estimate `λ_j`.
//! Continuous measurements enter as midpoint-rule discretizations; the
//! completeness residual this introduces is measured and gated, never
//! silently absorbed.
//!
//! The statistical error matrix of a measurement at a reference point `ϑ` is
//!
//! ```text
//! R_ik = Σ_j p_j (λ_{j,i} - ϑ_i) conj(λ_{j,k} - ϑ_k),
//! ```
//!
//! and splits as `R = ⟨σ²⟩ + Q` (for exactly complete measurements) into a
//! measurement-noise part and the operator part
//! `Q_ik = Tr ϱ Δq̂_i Δq̂_k^H` built from the moment operators
//! `q̂_i = Σ_j w_j λ_{j,i} Π_j`. `Q` is what the lower bounds constrain, so
//! `Σ = R - Q ⪰ 0` measures how much statistical error the measurement adds
//! on top of the intrinsic quantum fluctuations.

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha12Rng;

use crate::error::{Error, Result};
use crate::matkernel::{
    cplx, frob, hermitian_eigen, hermitize, require_hermitian, spectral_norm_hermitian, CMatrix,
    CVector,
};
use crate::states::DensityOperator;
use crate::tol::Tolerances;

/// How the outcome set was obtained; selects the completeness gate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PovmKind {
    /// Genuinely finite outcome set: completeness must hold to roundoff.
    Finite,
    /// Midpoint-rule discretization of a continuous measurement: a looser
    /// completeness gate applies and the residual is a quadrature artifact.
    Discretized,
}

/// Validation facts recorded when a [`Povm`] is built.
#[derive(Debug, Clone)]
pub struct PovmDiagnostics {
    /// Spectral norm of `Σ_j w_j Π_j - I`.
    pub completeness_residual: f64,
    /// Gate the residual was checked against.
    pub completeness_tol: f64,
    /// Smallest eigenvalue found across all effects (absolute).
    pub min_effect_eig: f64,
    /// Number of outcomes.
    pub outcomes: usize,
}

/// A validated discrete POVM with per-outcome labels.
#[derive(Debug, Clone)]
pub struct Povm {
    kind: PovmKind,
    elements: Vec<CMatrix>,
    weights: Vec<f64>,
    labels: Vec<Vec<Complex64>>,
    dim: usize,
    label_arity: usize,
    diagnostics: PovmDiagnostics,
}

impl Povm {
    /// Validates and stores a POVM, gating the completeness residual by the
    /// kind-appropriate tolerance from `tol`.
    pub fn new(
        kind: PovmKind,
        elements: Vec<CMatrix>,
        weights: Vec<f64>,
        labels: Vec<Vec<Complex64>>,
        tol: &Tolerances,
    ) -> Result<Self> {
        let gate = match kind {
            PovmKind::Finite => tol.povm_completeness_finite,
            PovmKind::Discretized => tol.povm_completeness_discretized,
        };
        Self::with_completeness_tol(kind, elements, weights, labels, gate, tol)
    }

    /// Full constructor with an explicit completeness gate. Coarse
    /// discretizations that are still useful (their error matrices converge
    /// much faster than the operator completeness does) go through here.
    pub fn with_completeness_tol(
        kind: PovmKind,
        elements: Vec<CMatrix>,
        weights: Vec<f64>,
        labels: Vec<Vec<Complex64>>,
        completeness_tol: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        if elements.is_empty() {
            return Err(Error::InvalidPovm {
                context: "no effects supplied".into(),
            });
        }
        if elements.len() != weights.len() || elements.len() != labels.len() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{} effects, {} weights, {} label rows",
                    elements.len(),
                    weights.len(),
                    labels.len()
                ),
            });
        }
        let dim = elements[0].nrows();
        let label_arity = labels[0].len();
        let mut min_effect_eig = f64::INFINITY;
        let mut sum = CMatrix::zeros(dim, dim);
        for (j, pi) in elements.iter().enumerate() {
            if pi.nrows() != dim || pi.ncols() != dim {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "effect {j} is {}x{}, expected {dim}x{dim}",
                        pi.nrows(),
                        pi.ncols()
                    ),
                });
            }
            require_hermitian(pi, tol.hermiticity)?;
            let eig = hermitian_eigen(pi, tol)?;
            let scale = eig.max_eig().abs().max(1.0);
            if eig.min_eig() < -tol.psd * scale {
                return Err(Error::InvalidPovm {
                    context: format!(
                        "effect {j} has negative eigenvalue {:.3e}",
                        eig.min_eig()
                    ),
                });
            }
            min_effect_eig = min_effect_eig.min(eig.min_eig());
            if !(weights[j].is_finite() && weights[j] > 0.0) {
                return Err(Error::InvalidPovm {
                    context: format!("weight {j} is {} (must be finite and > 0)", weights[j]),
                });
            }
            if labels[j].len() != label_arity {
                return Err(Error::ShapeMismatch {
                    context: format!(
                        "label row {j} has {} entries, expected {label_arity}",
                        labels[j].len()
                    ),
                });
            }
            if labels[j].iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidPovm {
                    context: format!("label row {j} contains non-finite entries"),
                });
            }
            sum += pi * cplx(weights[j], 0.0);
        }
        let dev = &sum - CMatrix::identity(dim, dim);
        let completeness_residual = spectral_norm_hermitian(&hermitize(&dev), tol)?;
        if completeness_residual > completeness_tol {
            return Err(Error::InvalidPovm {
                context: format!(
                    "completeness residual {completeness_residual:.3e} exceeds \
                     {completeness_tol:.3e}; refine the discretization or enlarge \
                     the truncated space"
                ),
            });
        }
        Ok(Povm {
            kind,
            elements,
            weights,
            labels,
            dim,
            label_arity,
            diagnostics: PovmDiagnostics {
                completeness_residual,
                completeness_tol,
                min_effect_eig,
                outcomes: 0,
            },
        }
        .with_outcome_count())
    }

    fn with_outcome_count(mut self) -> Self {
        self.diagnostics.outcomes = self.elements.len();
        self
    }

    /// Same effects and weights with new labels (e.g. an affine bias
    /// correction, a wrapped angle, or a real/imaginary split that changes
    /// the arity). Effects are not revalidated.
    pub fn relabel(&self, labels: Vec<Vec<Complex64>>) -> Result<Povm> {
        if labels.len() != self.elements.len() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "{} label rows for {} effects",
                    labels.len(),
                    self.elements.len()
                ),
            });
        }
        let arity = labels.first().map(|l| l.len()).unwrap_or(0);
        for (j, row) in labels.iter().enumerate() {
            if row.len() != arity {
                return Err(Error::ShapeMismatch {
                    context: format!("label row {j} has {} entries, expected {arity}", row.len()),
                });
            }
            if row.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
                return Err(Error::InvalidPovm {
                    context: format!("label row {j} contains non-finite entries"),
                });
            }
        }
        let mut out = self.clone();
        out.labels = labels;
        out.label_arity = arity;
        Ok(out)
    }

    /// Outcome count.
    pub fn len(&self) -> usize {
        self.elements.len()
    }

    /// True when the POVM has no outcomes (never holds after validation).
    pub fn is_empty(&self) -> bool {
        self.elements.is_empty()
    }

    /// Hilbert-space dimension the effects act on.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of label components per outcome.
    pub fn label_arity(&self) -> usize {
        self.label_arity
    }

    /// Finite or discretized.
    pub fn kind(&self) -> PovmKind {
        self.kind
    }

    /// The effects `Π_j`.
    pub fn elements(&self) -> &[CMatrix] {
        &self.elements
    }

    /// Quadrature weights `w_j`.
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Outcome labels `λ_j`.
    pub fn labels(&self) -> &[Vec<Complex64>] {
        &self.labels
    }

    /// Validation facts recorded at construction.
    pub fn diagnostics(&self) -> &PovmDiagnostics {
        &self.diagnostics
    }

    /// Outcome probabilities `p_j = w_j Tr(ϱ Π_j)`, with roundoff-level
    /// negatives clipped to zero. The sum is `1 - O(completeness residual)`;
    /// no renormalization is applied.
    pub fn outcome_probabilities(&self, rho: &DensityOperator) -> Result<Vec<f64>> {
        if rho.dim() != self.dim {
            return Err(Error::ShapeMismatch {
                context: format!("state dim {} vs POVM dim {}", rho.dim(), self.dim),
            });
        }
        Ok(self
            .elements
            .iter()
            .zip(&self.weights)
            .map(|(pi, w)| (w * trace_prod(rho.matrix(), pi).re).max(0.0))
            .collect())
    }

    /// Mean estimate `ϑ_i = Σ_j p_j λ_{j,i}`.
    pub fn mean_labels(&self, rho: &DensityOperator) -> Result<Vec<Complex64>> {
        let probs = self.outcome_probabilities(rho)?;
        let mut means = vec![cplx(0.0, 0.0); self.label_arity];
        for (j, p) in probs.iter().enumerate() {
            for (i, m) in means.iter_mut().enumerate() {
                *m += self.labels[j][i] * cplx(*p, 0.0);
            }
        }
        Ok(means)
    }

    /// First-moment operators `q̂_i = Σ_j w_j λ_{j,i} Π_j`. Expectations of
    /// these reproduce the mean estimates for every state.
    pub fn moment_ops(&self) -> MomentOps {
        let mut ops = Vec::with_capacity(self.label_arity);
        for i in 0..self.label_arity {
            let mut q = CMatrix::zeros(self.dim, self.dim);
            for (j, pi) in self.elements.iter().enumerate() {
                q += pi * (self.labels[j][i] * cplx(self.weights[j], 0.0));
            }
            ops.push(q);
        }
        MomentOps { ops }
    }

    /// Draws `n` outcome indices from the Born distribution with a seeded,
    /// reproducible generator.
    pub fn sample(&self, rho: &DensityOperator, n: usize, seed: u64) -> Result<Vec<usize>> {
        let probs = self.outcome_probabilities(rho)?;
        let total: f64 = probs.iter().sum();
        if !(total.is_finite() && (total - 1.0).abs() <= 0.1) {
            return Err(Error::InvalidPovm {
                context: format!("outcome probabilities sum to {total:.6}, not ~1"),
            });
        }
        let mut cum = Vec::with_capacity(probs.len());
        let mut acc = 0.0;
        for p in &probs {
            acc += p;
            cum.push(acc);
        }
        let mut rng = ChaCha12Rng::seed_from_u64(seed);
        let mut out = Vec::with_capacity(n);
        for _ in 0..n {
            let u: f64 = rng.gen::<f64>() * total;
            let idx = cum.partition_point(|&c| c <= u).min(probs.len() - 1);
            out.push(idx);
        }
        Ok(out)
    }
}

/// First-moment operators of a labeled POVM.
#[derive(Debug, Clone)]
pub struct MomentOps {
    /// `q̂_i = Σ_j w_j λ_{j,i} Π_j`, one per label component.
    pub ops: Vec<CMatrix>,
}

impl MomentOps {
    /// `Tr(ϱ q̂_i)` for each component.
    pub fn means(&self, rho: &DensityOperator) -> Vec<Complex64> {
        self.ops
            .iter()
            .map(|q| trace_prod(rho.matrix(), q))
            .collect()
    }
}

/// Exact error matrices of a measurement at a reference point.
#[derive(Debug, Clone)]
pub struct ErrorMatrices {
    /// Statistical error matrix
    /// `R_ik = Σ_j p_j (λ_{j,i} - ϑ_i) conj(λ_{j,k} - ϑ_k)`.
    pub r: CMatrix,
    /// Operator part `Q_ik = Tr ϱ (q̂_i - ϑ_i I)(q̂_k - ϑ_k I)^H`.
    pub q: CMatrix,
    /// Measurement-noise part `Σ = R - Q` (PSD for exactly complete POVMs).
    pub sigma: CMatrix,
    /// Reference point `ϑ` the deviations were taken around.
    pub reference: Vec<Complex64>,
}

/// Computes the exact error matrices of `povm` on `rho` around `reference`
/// (defaults to the measurement's own mean, giving covariances).
pub fn error_matrices(
    povm: &Povm,
    rho: &DensityOperator,
    reference: Option<&[Complex64]>,
    _tol: &Tolerances,
) -> Result<ErrorMatrices> {
    let m = povm.label_arity();
    let theta: Vec<Complex64> = match reference {
        Some(t) => {
            if t.len() != m {
                return Err(Error::ShapeMismatch {
                    context: format!("reference has {} entries, expected {m}", t.len()),
                });
            }
            t.to_vec()
        }
        None => povm.mean_labels(rho)?,
    };
    let probs = povm.outcome_probabilities(rho)?;
    let mut r = CMatrix::zeros(m, m);
    for (j, p) in probs.iter().enumerate() {
        for i in 0..m {
            let di = povm.labels()[j][i] - theta[i];
            for k in 0..m {
                let dk = povm.labels()[j][k] - theta[k];
                r[(i, k)] += di * dk.conj() * cplx(*p, 0.0);
            }
        }
    }
    let r = hermitize(&r);

    let ops = povm.moment_ops().ops;
    let eye = CMatrix::identity(povm.dim(), povm.dim());
    let centered: Vec<CMatrix> = ops
        .iter()
        .zip(&theta)
        .map(|(qop, t)| qop - &eye * *t)
        .collect();
    let mut q = CMatrix::zeros(m, m);
    for i in 0..m {
        for k in 0..m {
            let prod = &centered[i] * centered[k].adjoint();
            q[(i, k)] = trace_prod(rho.matrix(), &prod);
        }
    }
    let q = hermitize(&q);
    let sigma = hermitize(&(&r - &q));
    Ok(ErrorMatrices {
        r,
        q,
        sigma,
        reference: theta,
    })
}

/// Checks that the measurement's mean equals `expected` on `rho` within
/// `gate` (max absolute component deviation). Returns the deviation.
pub fn require_unbiased(
    povm: &Povm,
    rho: &DensityOperator,
    expected: &[Complex64],
    gate: f64,
) -> Result<f64> {
    let means = povm.mean_labels(rho)?;
    if expected.len() != means.len() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "expected value has {} entries, measurement reports {}",
                expected.len(),
                means.len()
            ),
        });
    }
    let bias = means
        .iter()
        .zip(expected)
        .map(|(m, e)| (m - e).norm())
        .fold(0.0, f64::max);
    if bias > gate {
        return Err(Error::BiasedEstimator { bias, tol: gate });
    }
    Ok(bias)
}

/// Relative residuals of the right-eigenstate property `q̂_i ϱ = ϑ_i ϱ`.
///
/// Zero residuals are the structural signature of measurements whose error
/// matrix attains the right-logarithmic-derivative bound: the state is then
/// a right eigenvector of every moment operator (e.g. coherent states under
/// heterodyne detection). The residual for component `i` is
/// `‖(q̂_i - ϑ_i)ϱ‖_F` divided by `‖ϱ‖_F` times the fluctuation scale of
/// `q̂_i`, so it is dimensionless and O(1) for generic non-attaining pairs.
pub fn right_eigen_residuals(
    povm: &Povm,
    rho: &DensityOperator,
    reference: &[Complex64],
) -> Result<Vec<f64>> {
    if reference.len() != povm.label_arity() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "reference has {} entries, expected {}",
                reference.len(),
                povm.label_arity()
            ),
        });
    }
    let ops = povm.moment_ops().ops;
    let eye = CMatrix::identity(povm.dim(), povm.dim());
    let rho_norm = frob(rho.matrix());
    let mut out = Vec::with_capacity(ops.len());
    for (qop, t) in ops.iter().zip(reference) {
        let delta = qop - &eye * *t;
        let num = frob(&(&delta * rho.matrix()));
        let anti = trace_prod(rho.matrix(), &(&delta * delta.adjoint())).re;
        let normal = trace_prod(rho.matrix(), &(delta.adjoint() * &delta)).re;
        let scale = (0.5 * (anti.max(0.0) + normal.max(0.0))).sqrt();
        let denom = rho_norm * scale.max(1e-12);
        out.push(num / denom);
    }
    Ok(out)
}

/// Monte Carlo estimate of the statistical error matrix.
#[derive(Debug, Clone)]
pub struct McErrorMatrix {
    /// Empirical `R̂_ik = (1/n) Σ_t (λ_t,i - ϑ_i) conj(λ_t,k - ϑ_k)`.
    pub matrix: CMatrix,
    /// Per-entry standard error of the mean (same shape as `matrix`).
    pub std_error: DMatrix<f64>,
    /// Number of samples drawn.
    pub samples: usize,
    /// Seed used for the reproducible generator.
    pub seed: u64,
    /// Reference point the deviations were taken around.
    pub reference: Vec<Complex64>,
}

/// Samples `n` outcomes and forms the empirical error matrix around
/// `reference` (defaults to the exact measurement mean). The standard error
/// of each entry comes from the sample variance of the per-draw products, so
/// `|R̂ - R| ≲ a few std errors` is the expected agreement with the exact
/// matrix.
pub fn mc_error_matrix(
    povm: &Povm,
    rho: &DensityOperator,
    reference: Option<&[Complex64]>,
    n: usize,
    seed: u64,
) -> Result<McErrorMatrix> {
    if n == 0 {
        return Err(Error::ConfigInvalid {
            context: "Monte Carlo sample count must be positive".into(),
        });
    }
    let m = povm.label_arity();
    let theta: Vec<Complex64> = match reference {
        Some(t) => {
            if t.len() != m {
                return Err(Error::ShapeMismatch {
                    context: format!("reference has {} entries, expected {m}", t.len()),
                });
            }
            t.to_vec()
        }
        None => povm.mean_labels(rho)?,
    };
    let draws = povm.sample(rho, n, seed)?;
    let mut sum = CMatrix::zeros(m, m);
    let mut sum_sq = DMatrix::<f64>::zeros(m, m);
    for j in draws {
        for i in 0..m {
            let di = povm.labels()[j][i] - theta[i];
            for k in 0..m {
                let dk = povm.labels()[j][k] - theta[k];
                let z = di * dk.conj();
                sum[(i, k)] += z;
                sum_sq[(i, k)] += z.norm_sqr();
            }
        }
    }
    let nf = n as f64;
    let matrix = sum.map(|z| z / nf);
    let mut std_error = DMatrix::<f64>::zeros(m, m);
    for i in 0..m {
        for k in 0..m {
            let mean_sq = sum_sq[(i, k)] / nf;
            let var = (mean_sq - matrix[(i, k)].norm_sqr()).max(0.0);
            std_error[(i, k)] = (var / nf).sqrt();
        }
    }
    Ok(McErrorMatrix {
        matrix,
        std_error,
        samples: n,
        seed,
        reference: theta,
    })
}

/// `Tr(a b)` in O(dim^2) without forming the product.
fn trace_prod(a: &CMatrix, b: &CMatrix) -> Complex64 {
    let n = a.nrows();
    let mut s = cplx(0.0, 0.0);
    for i in 0..n {
        for k in 0..n {
            s += a[(i, k)] * b[(k, i)];
        }
    }
    s
}

/// Projective measurement in the joint eigenbasis of commuting Hermitian
/// operators, with one outcome per distinct joint eigenvalue tuple and that
/// tuple as the (real) label vector.
pub fn builtin_spectral(ops: &[CMatrix], tol: &Tolerances) -> Result<Povm> {
    if ops.is_empty() {
        return Err(Error::InvalidPovm {
            context: "spectral measurement needs at least one operator".into(),
        });
    }
    let dim = ops[0].nrows();
    for (i, op) in ops.iter().enumerate() {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::ShapeMismatch {
                context: format!("operator {i} is {}x{}", op.nrows(), op.ncols()),
            });
        }
        require_hermitian(op, tol.hermiticity)?;
    }
    for i in 0..ops.len() {
        for k in (i + 1)..ops.len() {
            let comm = &ops[i] * &ops[k] - &ops[k] * &ops[i];
            let norm = frob(&comm);
            let gate = tol.hermiticity * (1.0 + frob(&ops[i]) * frob(&ops[k]));
            if norm > gate {
                return Err(Error::NotCommuting { norm, tol: gate });
            }
        }
    }

    // Refine a block decomposition of the identity operator by one operator
    // at a time: diagonalize the operator restricted to each block, cluster
    // the eigenvalues, and split the block accordingly. Commutativity makes
    // the restrictions Hermitian-diagonalizable within the blocks.
    let mut cluster_tols = Vec::with_capacity(ops.len());
    let mut blocks: Vec<(CMatrix, Vec<f64>)> = vec![(CMatrix::identity(dim, dim), Vec::new())];
    for op in ops {
        let scale = 1.0 + spectral_norm_hermitian(op, tol)?;
        let cluster_tol = 1e-8 * scale;
        cluster_tols.push(cluster_tol);
        let mut next = Vec::new();
        for (basis, labs) in &blocks {
            let sub = hermitize(&(basis.adjoint() * op * basis));
            let eig = hermitian_eigen(&sub, tol)?;
            let k = eig.values.len();
            let mut start = 0;
            while start < k {
                let mut end = start + 1;
                while end < k && eig.values[end] - eig.values[end - 1] <= cluster_tol {
                    end += 1;
                }
                let cols = eig.vectors.columns(start, end - start);
                let new_basis = basis * cols;
                let label =
                    eig.values[start..end].iter().sum::<f64>() / ((end - start) as f64);
                let mut new_labs = labs.clone();
                new_labs.push(label);
                next.push((new_basis, new_labs));
                start = end;
            }
        }
        blocks = next;
    }
    // Merge any blocks that ended up with the same joint label tuple.
    let mut merged: Vec<(CMatrix, Vec<f64>)> = Vec::new();
    'outer: for (basis, labs) in blocks {
        for (mb, ml) in merged.iter_mut() {
            let same = ml
                .iter()
                .zip(&labs)
                .zip(&cluster_tols)
                .all(|((a, b), ct)| (a - b).abs() <= *ct);
            if same {
                let pi = mb.clone() + &basis * basis.adjoint();
                *mb = pi;
                continue 'outer;
            }
        }
        merged.push((&basis * basis.adjoint(), labs));
    }
    let mut elements = Vec::with_capacity(merged.len());
    let mut labels = Vec::with_capacity(merged.len());
    for (pi, labs) in merged {
        elements.push(hermitize(&pi));
        labels.push(labs.iter().map(|&l| cplx(l, 0.0)).collect());
    }
    let weights = vec![1.0; elements.len()];
    Povm::new(PovmKind::Finite, elements, weights, labels, tol)
}

/// Unnormalized truncated coherent vector `⟨m|α⟩ = e^{-|α|²/2} α^m/√(m!)`.
fn coherent_ket_unnormalized(dim: usize, alpha: Complex64) -> CVector {
    let mut v = CVector::zeros(dim);
    let mut c = cplx((-0.5 * alpha.norm_sqr()).exp(), 0.0);
    v[0] = c;
    for m in 1..dim {
        c = c * alpha / cplx((m as f64).sqrt(), 0.0);
        v[m] = c;
    }
    v
}

/// Heterodyne (joint quadrature) measurement: a `grid × grid` midpoint
/// discretization of the coherent-state resolution `∫ (d²α/π) |α⟩⟨α| = I`
/// over the square `[-radius, radius]²`, with the grid point `α` as the
/// complex label. Completeness is gated at the default discretized
/// tolerance; the residual shrinks with larger `radius`/`grid` and grows
/// with the truncated dimension.
pub fn builtin_heterodyne(dim: usize, radius: f64, grid: usize, tol: &Tolerances) -> Result<Povm> {
    builtin_heterodyne_with_tol(dim, radius, grid, tol.povm_completeness_discretized, tol)
}

/// [`builtin_heterodyne`] with an explicit completeness gate, for truncated
/// spaces too large for the identity to be resolved to the default
/// tolerance while the error matrices of well-concentrated states are
/// already accurate.
pub fn builtin_heterodyne_with_tol(
    dim: usize,
    radius: f64,
    grid: usize,
    completeness_tol: f64,
    tol: &Tolerances,
) -> Result<Povm> {
    if dim < 1 {
        return Err(Error::DimensionTooSmall { dim, min: 1 });
    }
    if !(radius.is_finite() && radius > 0.0) {
        return Err(Error::ConfigInvalid {
            context: format!("heterodyne radius must be positive, got {radius}"),
        });
    }
    if grid < 2 {
        return Err(Error::ConfigInvalid {
            context: format!("heterodyne grid must be at least 2, got {grid}"),
        });
    }
    let step = 2.0 * radius / (grid as f64);
    let weight = step * step / std::f64::consts::PI;
    let mut elements = Vec::with_capacity(grid * grid);
    let mut labels = Vec::with_capacity(grid * grid);
    for a in 0..grid {
        let x = -radius + (a as f64 + 0.5) * step;
        for b in 0..grid {
            let y = -radius + (b as f64 + 0.5) * step;
            let alpha = cplx(x, y);
            let v = coherent_ket_unnormalized(dim, alpha);
            elements.push(&v * v.adjoint());
            labels.push(vec![alpha]);
        }
    }
    let weights = vec![weight; elements.len()];
    Povm::with_completeness_tol(
        PovmKind::Discretized,
        elements,
        weights,
        labels,
        completeness_tol,
        tol,
    )
}

/// Idler-free phase measurement: `bins` equally spaced projections onto the
/// unnormalized phase vectors `⟨m|e(λ)⟩ = e^{imλ}` with weights `1/bins` and
/// the phasor `e^{iλ}` as the complex label. For `bins ≥ dim` the discrete
/// Fourier sums reproduce the continuous measurement exactly (completeness
/// and first moments are exact); the constructor requires `bins ≥ 4 dim` so
/// second moments are exact as well.
pub fn builtin_phase(dim: usize, bins: usize, tol: &Tolerances) -> Result<Povm> {
    if dim < 1 {
        return Err(Error::DimensionTooSmall { dim, min: 1 });
    }
    let required = 4 * dim;
    if bins < required {
        return Err(Error::BinsTooFew {
            bins,
            required,
            dim,
        });
    }
    let mut elements = Vec::with_capacity(bins);
    let mut labels = Vec::with_capacity(bins);
    let w = 1.0 / (bins as f64);
    for j in 0..bins {
        let lam = 2.0 * std::f64::consts::PI * (j as f64) / (bins as f64);
        let mut v = CVector::zeros(dim);
        for m in 0..dim {
            let phase = (m as f64) * lam;
            v[m] = cplx(phase.cos(), phase.sin());
        }
        elements.push(&v * v.adjoint());
        labels.push(vec![cplx(lam.cos(), lam.sin())]);
    }
    let weights = vec![w; bins];
    Povm::new(PovmKind::Discretized, elements, weights, labels, tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::{is_psd, max_abs_entry};
    use crate::states::{coherent_state, fock_ops, pure_fock, thermal_state};

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn spectral_number_operator_gives_fock_projectors() {
        let dim = 8;
        let ops = fock_ops(dim).unwrap();
        let povm = builtin_spectral(std::slice::from_ref(&ops.n), &tols()).unwrap();
        assert_eq!(povm.len(), dim);
        assert!(povm.diagnostics().completeness_residual <= 1e-12);
        // Labels are the eigenvalues 0..dim-1 in ascending order and each
        // effect is the matching Fock projector.
        for (j, labs) in povm.labels().iter().enumerate() {
            assert_eq!(labs.len(), 1);
            assert!((labs[0].re - j as f64).abs() <= 1e-9);
            assert!(labs[0].im.abs() <= 1e-15);
            let mut proj = CMatrix::zeros(dim, dim);
            proj[(j, j)] = cplx(1.0, 0.0);
            assert!(frob(&(&povm.elements()[j] - proj)) <= 1e-9);
        }
    }

    #[test]
    fn spectral_groups_by_joint_labels() {
        let d1 = CMatrix::from_diagonal(&CVector::from_vec(vec![
            cplx(1.0, 0.0),
            cplx(1.0, 0.0),
            cplx(2.0, 0.0),
        ]));
        let d2 = CMatrix::from_diagonal(&CVector::from_vec(vec![
            cplx(3.0, 0.0),
            cplx(4.0, 0.0),
            cplx(4.0, 0.0),
        ]));
        // A degenerate operator alone: two outcomes of ranks 2 and 1.
        let single = builtin_spectral(std::slice::from_ref(&d1), &tols()).unwrap();
        assert_eq!(single.len(), 2);
        let ranks: Vec<f64> = single
            .elements()
            .iter()
            .map(|pi| trace_prod(pi, &CMatrix::identity(3, 3)).re)
            .collect();
        assert!((ranks[0] - 2.0).abs() <= 1e-9 && (ranks[1] - 1.0).abs() <= 1e-9);
        // The pair resolves the space fully: labels (1,3), (1,4), (2,4).
        let joint = builtin_spectral(&[d1, d2], &tols()).unwrap();
        assert_eq!(joint.len(), 3);
        let mut tuples: Vec<(i64, i64)> = joint
            .labels()
            .iter()
            .map(|l| (l[0].re.round() as i64, l[1].re.round() as i64))
            .collect();
        tuples.sort();
        assert_eq!(tuples, vec![(1, 3), (1, 4), (2, 4)]);
        for pi in joint.elements() {
            let psd = is_psd(pi, 1e-10).unwrap();
            assert!(psd.psd);
        }
    }

    #[test]
    fn spectral_rejects_noncommuting_operators() {
        let ops = fock_ops(6).unwrap();
        let err = builtin_spectral(&[ops.x.clone(), ops.p.clone()], &tols()).unwrap_err();
        assert!(matches!(err, Error::NotCommuting { .. }));
    }

    #[test]
    fn heterodyne_completeness_gating() {
        // Small truncated space: the midpoint rule resolves the identity well
        // below the default gate.
        let fine = builtin_heterodyne(12, 6.0, 80, &tols()).unwrap();
        assert!(fine.diagnostics().completeness_residual <= 1e-6);
        assert_eq!(fine.len(), 6400);
        // Larger spaces cannot reach the default gate at this radius: the
        // explicit-tolerance path is required and records the residual.
        let err = builtin_heterodyne(20, 6.0, 80, &tols()).unwrap_err();
        assert!(matches!(err, Error::InvalidPovm { .. }));
        let coarse = builtin_heterodyne_with_tol(20, 6.0, 80, 1e-2, &tols()).unwrap();
        let res = coarse.diagnostics().completeness_residual;
        assert!(res > 1e-6 && res < 1e-2, "residual {res}");
    }

    #[test]
    fn heterodyne_error_matrices_on_vacuum_are_unit() {
        // For any state, heterodyne detection has R = Q entry for entry
        // (its per-outcome noise operator vanishes identically in this
        // ordering); on the vacuum both equal 1.
        let povm = builtin_heterodyne(12, 6.0, 80, &tols()).unwrap();
        let vac = pure_fock(12, 0, &tols()).unwrap();
        let means = povm.mean_labels(&vac).unwrap();
        assert!(means[0].norm() <= 1e-9);
        let em = error_matrices(&povm, &vac, Some(&[cplx(0.0, 0.0)]), &tols()).unwrap();
        assert!((em.r[(0, 0)].re - 1.0).abs() <= 1e-9, "R = {}", em.r[(0, 0)]);
        assert!((em.q[(0, 0)].re - 1.0).abs() <= 1e-9, "Q = {}", em.q[(0, 0)]);
        assert!(max_abs_entry(&em.sigma) <= 1e-9);
    }

    #[test]
    fn heterodyne_error_split_is_state_independent() {
        // Thermal state: R = <a a^H> = nbar + 1 in this ordering, and the
        // noise part vanishes up to a truncation-boundary artifact of the
        // order of the state's mass near the top retained level.
        let povm = builtin_heterodyne_with_tol(16, 6.0, 80, 1e-4, &tols()).unwrap();
        let th = thermal_state(16, 0.5, &tols()).unwrap();
        let em = error_matrices(&povm, &th, None, &tols()).unwrap();
        assert!((em.r[(0, 0)].re - 1.5).abs() <= 1e-5, "R = {}", em.r[(0, 0)]);
        assert!(max_abs_entry(&em.sigma) <= 1e-5);
    }

    #[test]
    fn phase_measurement_moments_are_exact() {
        let dim = 6;
        let povm = builtin_phase(dim, 4 * dim, &tols()).unwrap();
        assert!(povm.diagnostics().completeness_residual <= 1e-12);
        // First-moment operator is exactly the one-sided shift.
        let q = &povm.moment_ops().ops[0];
        let mut shift = CMatrix::zeros(dim, dim);
        for m in 0..dim - 1 {
            shift[(m, m + 1)] = cplx(1.0, 0.0);
        }
        assert!(frob(&(q - shift)) <= 1e-12);
        let err = builtin_phase(dim, 4 * dim - 1, &tols()).unwrap_err();
        assert!(matches!(err, Error::BinsTooFew { required: 24, .. }));
    }

    #[test]
    fn phase_error_split_matches_truncation_top_mass() {
        // With phasor labels, the noise operator of the phase measurement is
        // exactly the projector onto the highest retained level, so
        // R - Q = rho[dim-1, dim-1] with no tolerance slack beyond roundoff.
        let dim = 8;
        let loose = Tolerances {
            truncation_tail: 1e-3,
            ..Tolerances::default()
        };
        let rho = coherent_state(dim, cplx(1.2, 0.0), &loose).unwrap();
        let povm = builtin_phase(dim, 4 * dim, &tols()).unwrap();
        let em = error_matrices(&povm, &rho, None, &tols()).unwrap();
        let top = rho.matrix()[(dim - 1, dim - 1)].re;
        assert!(top > 1e-6, "test state needs mass at the top level");
        assert!(
            (em.sigma[(0, 0)].re - top).abs() <= 1e-12,
            "sigma = {}, top mass = {top}",
            em.sigma[(0, 0)]
        );
        let psd = is_psd(&em.sigma, 1e-12).unwrap();
        assert!(psd.psd);
    }

    #[test]
    fn error_matrices_transform_covariantly_under_relabeling() {
        // lambda -> A lambda must map R -> A R A^H and Q -> A Q A^H when the
        // reference follows the mean. Catches conjugation-side mistakes.
        let povm = builtin_heterodyne_with_tol(10, 5.0, 60, 1e-3, &tols()).unwrap();
        let rho = thermal_state(10, 0.3, &tols()).unwrap();
        let split: Vec<Vec<Complex64>> = povm
            .labels()
            .iter()
            .map(|l| vec![l[0], l[0] * l[0]])
            .collect();
        let two = povm.relabel(split).unwrap();
        assert_eq!(two.label_arity(), 2);
        let a = CMatrix::from_row_slice(
            2,
            2,
            &[
                cplx(1.0, 0.0),
                cplx(0.3, -0.2),
                cplx(0.0, 0.5),
                cplx(1.0, 1.0),
            ],
        );
        let mixed: Vec<Vec<Complex64>> = two
            .labels()
            .iter()
            .map(|l| {
                vec![
                    a[(0, 0)] * l[0] + a[(0, 1)] * l[1],
                    a[(1, 0)] * l[0] + a[(1, 1)] * l[1],
                ]
            })
            .collect();
        let transformed = two.relabel(mixed).unwrap();
        let em0 = error_matrices(&two, &rho, None, &tols()).unwrap();
        let em1 = error_matrices(&transformed, &rho, None, &tols()).unwrap();
        let expected_r = &a * &em0.r * a.adjoint();
        let expected_q = &a * &em0.q * a.adjoint();
        assert!(frob(&(&em1.r - expected_r)) <= 1e-10 * (1.0 + frob(&em1.r)));
        assert!(frob(&(&em1.q - expected_q)) <= 1e-10 * (1.0 + frob(&em1.q)));
    }

    #[test]
    fn unbiasedness_gate() {
        let povm = builtin_heterodyne(12, 6.0, 80, &tols()).unwrap();
        let beta = cplx(0.3, 0.0);
        let rho = coherent_state(12, beta, &tols()).unwrap();
        let bias = require_unbiased(&povm, &rho, &[beta], 1e-6).unwrap();
        assert!(bias <= 1e-7, "bias {bias}");
        let err = require_unbiased(&povm, &rho, &[beta + cplx(0.05, 0.0)], 1e-6).unwrap_err();
        assert!(matches!(err, Error::BiasedEstimator { .. }));
    }

    #[test]
    fn right_eigen_residuals_detect_attainment_structure() {
        let povm = builtin_heterodyne(12, 6.0, 80, &tols()).unwrap();
        let beta = cplx(0.4, -0.3);
        let rho = coherent_state(12, beta, &tols()).unwrap();
        let res = right_eigen_residuals(&povm, &rho, &[beta]).unwrap();
        assert!(res[0] <= 1e-5, "coherent residual {}", res[0]);
        let th = thermal_state(12, 1.0, &tols()).unwrap();
        let mean = povm.mean_labels(&th).unwrap();
        let res_th = right_eigen_residuals(&povm, &th, &mean).unwrap();
        assert!(res_th[0] >= 0.1, "thermal residual {}", res_th[0]);
    }

    #[test]
    fn sampling_is_deterministic_and_concentrates() {
        let dim = 16;
        let ops = fock_ops(dim).unwrap();
        let povm = builtin_spectral(std::slice::from_ref(&ops.n), &tols()).unwrap();
        let th = thermal_state(dim, 1.0, &tols()).unwrap();
        let a = povm.sample(&th, 500, 42).unwrap();
        let b = povm.sample(&th, 500, 42).unwrap();
        assert_eq!(a, b);
        let c = povm.sample(&th, 500, 43).unwrap();
        assert_ne!(a, c);

        let exact = error_matrices(&povm, &th, None, &tols()).unwrap();
        let mc = mc_error_matrix(&povm, &th, None, 20_000, 7).unwrap();
        let diff = (mc.matrix[(0, 0)] - exact.r[(0, 0)]).norm();
        let se = mc.std_error[(0, 0)];
        assert!(se > 0.0 && se < 0.2, "standard error {se}");
        assert!(diff <= 5.0 * se, "diff {diff} vs se {se}");
        // Same seed reproduces the estimate exactly.
        let mc2 = mc_error_matrix(&povm, &th, None, 20_000, 7).unwrap();
        assert_eq!(mc.matrix[(0, 0)], mc2.matrix[(0, 0)]);
    }

    #[test]
    fn validation_rejects_malformed_povms() {
        let dim = 3;
        let eye = CMatrix::identity(dim, dim);
        // Negative weight.
        let err = Povm::new(
            PovmKind::Finite,
            vec![eye.clone()],
            vec![-1.0],
            vec![vec![cplx(0.0, 0.0)]],
            &tols(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPovm { .. }));
        // Non-PSD effect pair that still sums to the identity.
        let mut plus = eye.clone();
        plus[(0, 1)] = cplx(2.0, 0.0);
        plus[(1, 0)] = cplx(2.0, 0.0);
        let minus = &eye * cplx(2.0, 0.0) - &plus;
        let err = Povm::new(
            PovmKind::Finite,
            vec![plus * cplx(0.5, 0.0), minus * cplx(0.5, 0.0)],
            vec![1.0, 1.0],
            vec![vec![cplx(0.0, 0.0)], vec![cplx(1.0, 0.0)]],
            &tols(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPovm { .. }));
        // Broken completeness.
        let err = Povm::new(
            PovmKind::Finite,
            vec![eye.clone() * cplx(0.5, 0.0)],
            vec![1.0],
            vec![vec![cplx(0.0, 0.0)]],
            &tols(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::InvalidPovm { .. }));
        // Label arity mismatch.
        let err = Povm::new(
            PovmKind::Finite,
            vec![eye.clone() * cplx(0.5, 0.0), eye * cplx(0.5, 0.0)],
            vec![1.0, 1.0],
            vec![vec![cplx(0.0, 0.0)], vec![cplx(1.0, 0.0), cplx(2.0, 0.0)]],
            &tols(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::ShapeMismatch { .. }));
    }

    #[test]
    fn moment_ops_reproduce_means() {
        let povm = builtin_phase(6, 24, &tols()).unwrap();
        let loose = Tolerances {
            truncation_tail: 1e-2,
            ..Tolerances::default()
        };
        let rho = coherent_state(6, cplx(0.9, 0.4), &loose).unwrap();
        let direct = povm.mean_labels(&rho).unwrap();
        let via_ops = povm.moment_ops().means(&rho);
        assert!((direct[0] - via_ops[0]).norm() <= 1e-12);
    }
}

