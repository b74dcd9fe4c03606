//! Lower bounds on measurement error matrices and their verdicts.
//!
//! All bounds are matrix inequalities `R >= B` on the error matrix `R` of an
//! unbiased estimation procedure, built from an information matrix and an
//! estimand Jacobian:
//!
//! * **helstrom**:    `B = D G^+ D^H` from the symmetric log-derivative
//!   information `G` (real parameters),
//! * **right**:       `B = D H^+ D^H` from the right log-derivative
//!   information `H` (complex parameters, `D_ik = d theta_i / d beta^k`),
//! * **heisenberg**:  `B = (hbar^2/4) D S0^+ D^H` from the symmetrized
//!   generator covariance `S0` of a unitary shift family,
//! * **lie**:         `B = (hbar^2/4) D K S^+ K^T D^H`, the Heisenberg bound
//!   corrected by the mixing matrix `K` of a non-commuting generator algebra.
//!
//! `K` comes from the derivative of the exponential map: with real structure
//! constants `[s_i, s_k] = i hbar c^j_ik s_j`, adjoint matrices
//! `(C_m)_ji = c^j_mi` and `M = sum_m theta^m C_m`, the family derivative is
//! `d_k rho = (i/hbar) [sum_l (K^-1)_lk s_l, rho]` with
//! `K = phi(-M)`, `phi(z) = z/(e^z - 1)`. At `theta = 0`, `K = I` and the
//! Lie bound reduces to the Heisenberg bound.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::logderiv::{ald, centered_cov, FisherKind, FisherMatrix};
use crate::matkernel::{
    cplx, frob, hermitian_eigen, hermitize, matrix_exp, max_abs_entry, pinv, trace, CMatrix,
};
use crate::states::{DiffDirection, ParamKind, ParamPoint, StateFamily};
use crate::tol::Tolerances;

/// Which inequality a [`Bound`] instantiates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundKind {
    Helstrom,
    Right,
    Heisenberg,
    Lie,
}

/// A computed lower bound `R >= matrix`.
#[derive(Debug, Clone)]
pub struct Bound {
    pub kind: BoundKind,
    /// Hermitian bound matrix in estimand coordinates.
    pub matrix: CMatrix,
    /// Rank of the pseudo-inverted information matrix.
    pub information_rank: usize,
    /// True when no information directions were dropped by the
    /// pseudo-inverse.
    pub information_full_rank: bool,
}

/// Jacobian `D_ik = d theta_i / d (parameter k)` mapping information
/// coordinates to estimand coordinates.
#[derive(Debug, Clone)]
pub struct JacobianMatrix {
    pub matrix: CMatrix,
}

impl JacobianMatrix {
    pub fn new(matrix: CMatrix) -> Self {
        JacobianMatrix { matrix }
    }

    /// Identity map on `n` parameters.
    pub fn identity(n: usize) -> Self {
        JacobianMatrix {
            matrix: CMatrix::identity(n, n),
        }
    }

    /// `c * I` — e.g. estimands proportional to one coordinate family.
    pub fn scalar(c: Complex64, n: usize) -> Self {
        JacobianMatrix {
            matrix: CMatrix::identity(n, n).map(|z| z * c),
        }
    }

    /// Numerical Jacobian of an estimand map along the given directions.
    ///
    /// `map` evaluates the estimand vector at a parameter point; columns of
    /// the result follow `dirs`, with Wirtinger combinations for
    /// `Beta`/`BetaBar`. The step is scaled by the coordinate magnitude.
    pub fn from_map<F>(
        map: F,
        p: &ParamPoint,
        dirs: &[DiffDirection],
        base_step: f64,
    ) -> Result<Self>
    where
        F: Fn(&ParamPoint) -> Result<Vec<Complex64>>,
    {
        let n = p.arity();
        let rows = map(p)?.len();
        let central = |coord: usize| -> Result<Vec<Complex64>> {
            let h = base_step * p.real_coord(coord).abs().max(1.0);
            let fp = map(&p.shifted(coord, h))?;
            let fm = map(&p.shifted(coord, -h))?;
            if fp.len() != rows || fm.len() != rows {
                return Err(Error::ShapeMismatch {
                    context: "estimand map changed dimension between evaluations".into(),
                });
            }
            Ok(fp
                .iter()
                .zip(fm.iter())
                .map(|(a, b)| (a - b).unscale(2.0 * h))
                .collect())
        };
        let mut d = CMatrix::zeros(rows, dirs.len());
        for (col, &dir) in dirs.iter().enumerate() {
            let v: Vec<Complex64> = match dir {
                DiffDirection::Real(k) | DiffDirection::Gamma(k) => central(k)?,
                DiffDirection::Theta(k) => central(n + k)?,
                DiffDirection::Beta(k) => {
                    let dg = central(k)?;
                    let dt = central(n + k)?;
                    dg.iter()
                        .zip(dt.iter())
                        .map(|(g, t)| g - t * cplx(0.0, 0.5))
                        .collect()
                }
                DiffDirection::BetaBar(k) => {
                    let dg = central(k)?;
                    let dt = central(n + k)?;
                    dg.iter()
                        .zip(dt.iter())
                        .map(|(g, t)| g + t * cplx(0.0, 0.5))
                        .collect()
                }
            };
            for (row, z) in v.iter().enumerate() {
                if !z.re.is_finite() || !z.im.is_finite() {
                    return Err(Error::DerivativeFailure {
                        context: format!("estimand Jacobian column {col} not finite"),
                    });
                }
                d[(row, col)] = *z;
            }
        }
        Ok(JacobianMatrix { matrix: d })
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn cols(&self) -> usize {
        self.matrix.ncols()
    }
}

fn sandwich(
    kind: BoundKind,
    info: &CMatrix,
    d: &JacobianMatrix,
    prefactor: f64,
    tol: &Tolerances,
) -> Result<Bound> {
    if d.cols() != info.nrows() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "Jacobian has {} columns, information matrix is {}x{}",
                d.cols(),
                info.nrows(),
                info.ncols()
            ),
        });
    }
    let p = pinv(info, tol.pinv_rel)?;
    let b = (&d.matrix * &p.matrix * d.matrix.adjoint()).scale(prefactor);
    Ok(Bound {
        kind,
        matrix: hermitize(&b),
        information_rank: p.rank,
        information_full_rank: p.full_rank(),
    })
}

/// Helstrom bound `D G^+ D^H` from a symmetric-log-derivative information
/// matrix.
pub fn helstrom_bound(g: &FisherMatrix, d: &JacobianMatrix, tol: &Tolerances) -> Result<Bound> {
    if g.kind != FisherKind::Symmetric {
        return Err(Error::KindMismatch {
            context: "helstrom bound needs the symmetric-log-derivative information".into(),
        });
    }
    sandwich(BoundKind::Helstrom, &g.matrix, d, 1.0, tol)
}

/// Right bound `D H^+ D^H` from a right-log-derivative information matrix;
/// `D_ik = d theta_i / d beta^k`.
pub fn right_bound(h: &FisherMatrix, d: &JacobianMatrix, tol: &Tolerances) -> Result<Bound> {
    if h.kind != FisherKind::Right {
        return Err(Error::KindMismatch {
            context: "right bound needs the right-log-derivative information".into(),
        });
    }
    sandwich(BoundKind::Right, &h.matrix, d, 1.0, tol)
}

/// Uncertainty-type bound `(hbar^2/4) D S0^+ D^H` from the symmetrized
/// generator covariance of a unitary shift family.
pub fn heisenberg_bound(
    s0: &CMatrix,
    hbar: f64,
    d: &JacobianMatrix,
    tol: &Tolerances,
) -> Result<Bound> {
    crate::matkernel::require_hermitian(s0, tol.hermiticity)?;
    sandwich(BoundKind::Heisenberg, s0, d, hbar * hbar / 4.0, tol)
}

/// Real structure constants of a Lie algebra of Hermitian generators,
/// `[s_i, s_k] = i hbar c^j_ik s_j`, held as the adjoint matrices
/// `(C_m)_ji = c^j_mi`.
#[derive(Debug, Clone)]
pub struct StructureConstants {
    n: usize,
    adj: Vec<nalgebra::DMatrix<f64>>,
    hbar: f64,
}

impl StructureConstants {
    /// Builds from explicit adjoint matrices, validating antisymmetry
    /// (`c^j_ik = -c^j_ki`) and the Jacobi identity (the adjoint matrices
    /// close the same algebra).
    pub fn from_adjoint(adj: Vec<nalgebra::DMatrix<f64>>, hbar: f64) -> Result<Self> {
        let n = adj.len();
        for (m, c) in adj.iter().enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::ShapeMismatch {
                    context: format!("adjoint matrix {m} is {}x{}, need {n}x{n}", c.nrows(), c.ncols()),
                });
            }
        }
        let scale = adj
            .iter()
            .map(|c| c.norm())
            .fold(0.0f64, f64::max)
            .max(1.0);
        // c^j_mi = (C_m)_ji must equal -(C_i)_jm.
        for m in 0..n {
            for i in 0..n {
                for j in 0..n {
                    if (adj[m][(j, i)] + adj[i][(j, m)]).abs() > 1e-10 * scale {
                        return Err(Error::ConfigInvalid {
                            context: format!(
                                "structure constants not antisymmetric at (j={j}, {m}, {i})"
                            ),
                        });
                    }
                }
            }
        }
        // Jacobi: [C_i, C_k] = sum_j c^j_ik C_j.
        for i in 0..n {
            for k in 0..n {
                let mut rhs = nalgebra::DMatrix::<f64>::zeros(n, n);
                for j in 0..n {
                    rhs += adj[j].scale(adj[i][(j, k)]);
                }
                let lhs = &adj[i] * &adj[k] - &adj[k] * &adj[i];
                if (lhs - rhs).norm() > 1e-8 * scale * scale.max(1.0) {
                    return Err(Error::ConfigInvalid {
                        context: format!("Jacobi identity fails for adjoint pair ({i}, {k})"),
                    });
                }
            }
        }
        Ok(StructureConstants { n, adj, hbar })
    }

    /// Extracts structure constants from generator matrices by projecting
    /// each commutator back onto the generator span; errors when the algebra
    /// does not close.
    pub fn from_generators(ops: &[CMatrix], hbar: f64, tol: &Tolerances) -> Result<Self> {
        let n = ops.len();
        if n == 0 {
            return Err(Error::ShapeMismatch {
                context: "structure constants need at least one generator".into(),
            });
        }
        // Gram matrix of the generators under <A, B> = Tr(A^H B).
        let mut gram = CMatrix::zeros(n, n);
        for j in 0..n {
            for l in 0..n {
                gram[(j, l)] = trace(&(ops[j].adjoint() * &ops[l]));
            }
        }
        let gram_inv = pinv(&hermitize(&gram), tol.pinv_rel)?;
        if !gram_inv.full_rank() {
            return Err(Error::ConfigInvalid {
                context: "generators are linearly dependent".into(),
            });
        }
        let scale = ops.iter().map(frob).fold(0.0f64, f64::max).max(1.0);
        let mut adj = vec![nalgebra::DMatrix::<f64>::zeros(n, n); n];
        for m in 0..n {
            for i in 0..n {
                let comm = crate::matkernel::commutator(&ops[m], &ops[i]);
                // Solve comm = i hbar sum_j c^j_mi ops_j in least squares.
                let mut rhs = crate::matkernel::CVector::zeros(n);
                for j in 0..n {
                    rhs[j] = trace(&(ops[j].adjoint() * &comm)) / cplx(0.0, hbar);
                }
                let coef = &gram_inv.matrix * rhs;
                let mut recon = CMatrix::zeros(ops[0].nrows(), ops[0].ncols());
                for j in 0..n {
                    recon += ops[j].map(|z| z * coef[j]);
                    if coef[j].im.abs() > 1e-8 * (1.0 + coef[j].norm()) {
                        return Err(Error::ConfigInvalid {
                            context: format!(
                                "structure constant c^{j}_{m}{i} not real: {}",
                                coef[j]
                            ),
                        });
                    }
                    adj[m][(j, i)] = coef[j].re;
                }
                let residual = frob(&(comm - recon.map(|z| z * cplx(0.0, hbar))));
                if residual > 1e-8 * scale * scale {
                    return Err(Error::NotCommuting {
                        norm: residual,
                        tol: 1e-8 * scale * scale,
                    });
                }
            }
        }
        Self::from_adjoint(adj, hbar)
    }

    pub fn arity(&self) -> usize {
        self.n
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    /// Adjoint matrices.
    pub fn adjoint_matrices(&self) -> &[nalgebra::DMatrix<f64>] {
        &self.adj
    }

    /// `M = sum_m theta^m C_m` as a complex matrix.
    pub fn theta_dot(&self, theta: &[f64]) -> Result<CMatrix> {
        if theta.len() != self.n {
            return Err(Error::ShapeMismatch {
                context: format!("theta has {} entries, algebra arity {}", theta.len(), self.n),
            });
        }
        let mut m = nalgebra::DMatrix::<f64>::zeros(self.n, self.n);
        for (t, c) in theta.iter().zip(self.adj.iter()) {
            m += c.scale(*t);
        }
        Ok(m.map(|v| cplx(v, 0.0)))
    }
}

/// `phi(z) = z / (e^z - 1)` applied to `-M`, `M = theta . C` — the inverse
/// of the derivative-of-exponential mixing matrix.
///
/// Antisymmetric `M` (compact algebras in an orthogonal basis, e.g. su(2))
/// goes through the Hermitian eigendecomposition of `iM`; poles of `phi` at
/// eigenvalues `2 pi k`, `k != 0`, are rejected with `SingularityAtPole`.
/// Other `M` use the halving identity `phi(2z) = phi(z) * 2 (e^z + 1)^-1`
/// on a Taylor core, validated against `K (I - e^-M) = M` afterwards.
pub fn k_matrix(sc: &StructureConstants, theta: &[f64], tol: &Tolerances) -> Result<CMatrix> {
    let m = sc.theta_dot(theta)?;
    let n = sc.arity();
    if frob(&m) == 0.0 {
        return Ok(CMatrix::identity(n, n));
    }
    let anti_dev = frob(&(&m + m.transpose())) / frob(&m).max(f64::MIN_POSITIVE);
    if anti_dev <= 1e-12 {
        // iM is Hermitian: spectral calculus of a -> phi(-i a behaviour):
        // K = phi(-M) = f(iM) with f(a) = phi(-(-i a)) = phi(i a)... derive
        // directly: M = -i (iM), so -M = i (iM) and K = phi(i a) on the
        // spectrum a of iM.
        let h = m.map(|z| z * cplx(0.0, 1.0));
        let eig = hermitian_eigen(&h, tol)?;
        for &a in &eig.values {
            let nearest = (a / (2.0 * std::f64::consts::PI)).round();
            if nearest != 0.0
                && (a - 2.0 * std::f64::consts::PI * nearest).abs() < 1e-9 * a.abs().max(1.0)
            {
                return Err(Error::SingularityAtPole {
                    eigenvalue: a,
                    multiple: nearest as i64,
                });
            }
        }
        let k = eig.map_spectrum(|a| phi_scalar(cplx(0.0, a)));
        return Ok(k);
    }
    let k = phi_matrix(&m.scale(-1.0))?;
    // Validate K (I - e^{-M}) = M.
    let em = matrix_exp(&m.scale(-1.0))?;
    let residual = frob(&(&k * (CMatrix::identity(n, n) - em) - &m));
    if !residual.is_finite() || residual > 1e-8 * frob(&m).max(1.0) {
        return Err(Error::NoConvergence {
            context: format!(
                "k_matrix defining identity residual {residual:.3e} (near a pole of phi?)"
            ),
        });
    }
    Ok(k)
}

/// Scalar `phi(z) = z / (e^z - 1)` with the removable singularity at 0
/// handled by series.
fn phi_scalar(z: Complex64) -> Complex64 {
    if z.norm() < 1e-6 {
        // phi(z) = 1 - z/2 + z^2/12 - z^4/720 + O(z^6)
        let z2 = z * z;
        return cplx(1.0, 0.0) - z.unscale(2.0) + z2.unscale(12.0) - (z2 * z2).unscale(720.0);
    }
    z / (z.exp() - cplx(1.0, 0.0))
}

/// `phi(A)` for a general square matrix by argument halving on a Taylor
/// core: `phi(2z) = phi(z) * 2 (e^z + 1)^{-1}`.
fn phi_matrix(a: &CMatrix) -> Result<CMatrix> {
    let n = a.nrows();
    let norm = frob(a);
    let halvings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let small = a.scale(0.5f64.powi(halvings as i32));
    // Taylor core: phi(z) = sum B_n z^n / n! with Bernoulli numbers B_n
    // (B_1 = -1/2 convention).
    let mut phi = CMatrix::identity(n, n).scale(BERNOULLI_OVER_FACTORIAL[0]);
    let mut pow = CMatrix::identity(n, n);
    for &c in &BERNOULLI_OVER_FACTORIAL[1..] {
        pow = &pow * &small;
        if c != 0.0 {
            phi += pow.scale(c);
        }
    }
    // Double back up.
    let mut w = small;
    for _ in 0..halvings {
        let ew = matrix_exp(&w)?;
        let denom = ew + CMatrix::identity(n, n);
        let inv = denom.try_inverse().ok_or_else(|| Error::NoConvergence {
            context: "phi halving step hit a singular e^z + 1".into(),
        })?;
        phi = &phi * inv.scale(2.0);
        w = w.scale(2.0);
    }
    Ok(phi)
}

/// `B_n / n!` for n = 0..=24 (odd entries beyond 1 vanish); enough for
/// |z| <= 1/2 at double precision.
const BERNOULLI_OVER_FACTORIAL: [f64; 25] = [
    1.0,
    -0.5,
    1.0 / 12.0,
    0.0,
    -1.0 / 720.0,
    0.0,
    1.0 / 30240.0,
    0.0,
    -1.0 / 1209600.0,
    0.0,
    1.0 / 47900160.0,
    0.0,
    -691.0 / 1307674368000.0,
    0.0,
    1.0 / 74724249600.0,
    0.0,
    -3617.0 / 10670622842880000.0,
    0.0,
    43867.0 / 5109094217170944000.0,
    0.0,
    -174611.0 / 802857662698291200000.0,
    0.0,
    77683.0 / 14101100039391805440000.0,
    0.0,
    -236364091.0 / 1693824136731743669452800000.0,
];

/// Group-covariant bound `(hbar^2/4) D K S^+ K^T D^H`.
///
/// `s_cov` is the symmetrized generator covariance at the evaluation point;
/// `k` comes from [`k_matrix`] at the same point. At the group identity this
/// is the Heisenberg bound.
pub fn lie_bound(
    s_cov: &CMatrix,
    k: &CMatrix,
    hbar: f64,
    d: &JacobianMatrix,
    tol: &Tolerances,
) -> Result<Bound> {
    crate::matkernel::require_hermitian(s_cov, tol.hermiticity)?;
    if k.nrows() != s_cov.nrows() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "mixing matrix is {}x{}, covariance {}x{}",
                k.nrows(),
                k.ncols(),
                s_cov.nrows(),
                s_cov.ncols()
            ),
        });
    }
    let p = pinv(s_cov, tol.pinv_rel)?;
    let core = k * &p.matrix * k.transpose();
    let b = (&d.matrix * core * d.matrix.adjoint()).scale(hbar * hbar / 4.0);
    Ok(Bound {
        kind: BoundKind::Lie,
        matrix: hermitize(&b),
        information_rank: p.rank,
        information_full_rank: p.full_rank(),
    })
}

/// Verdict of comparing an error matrix against a bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundVerdict {
    /// `R = B` within the attainment tolerance.
    Attained,
    /// `R - B` is PSD with a definite margin.
    Satisfied,
    /// `R - B` has a negative eigenvalue beyond tolerance and noise.
    Violated,
    /// The apparent violation is within the stated noise floor
    /// (e.g. POVM discretization residuals) — no conclusion.
    Inconclusive,
}

/// Result of [`check_bound`].
#[derive(Debug, Clone)]
pub struct BoundCheck {
    pub verdict: BoundVerdict,
    /// Smallest eigenvalue of `R - B`.
    pub min_eig: f64,
    /// Largest absolute entry of `R - B`.
    pub max_abs_gap: f64,
    /// Scale used for relative comparisons: `max(|R|_max, |B|_max)`.
    pub scale: f64,
    /// Noise floor the verdict accounted for.
    pub noise_floor: f64,
}

/// Compares an error matrix `R` against a bound.
///
/// * `Attained` when `max |R - B|` is below `tol.attained_rel * scale`
///   (or the noise floor, whichever is larger),
/// * `Satisfied` when `R - B` is PSD within `tol.psd * scale`,
/// * `Inconclusive` when the violation is within 10x the noise floor,
/// * `Violated` otherwise.
pub fn check_bound(
    r: &CMatrix,
    bound: &Bound,
    noise_floor: f64,
    tol: &Tolerances,
) -> Result<BoundCheck> {
    if r.shape() != bound.matrix.shape() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "error matrix {}x{} vs bound {}x{}",
                r.nrows(),
                r.ncols(),
                bound.matrix.nrows(),
                bound.matrix.ncols()
            ),
        });
    }
    crate::matkernel::require_hermitian(r, tol.hermiticity.max(1e-8))?;
    let gap = hermitize(&(r - &bound.matrix));
    let scale = max_abs_entry(r)
        .max(max_abs_entry(&bound.matrix))
        .max(f64::MIN_POSITIVE);
    let max_abs_gap = max_abs_entry(&gap);
    let eig = hermitian_eigen(&gap, tol)?;
    let min_eig = eig.min_eig();
    let attain_tol = (tol.attained_rel * scale).max(noise_floor);
    let verdict = if max_abs_gap <= attain_tol {
        BoundVerdict::Attained
    } else if min_eig >= -tol.psd * scale {
        BoundVerdict::Satisfied
    } else if min_eig >= -10.0 * noise_floor {
        BoundVerdict::Inconclusive
    } else {
        BoundVerdict::Violated
    };
    Ok(BoundCheck {
        verdict,
        min_eig,
        max_abs_gap,
        scale,
        noise_floor,
    })
}

/// Both sides of the mean commutation identity
/// `Tr rho [q, p_k] = i hbar d<q>/d theta^k` for a real-parametrized family.
#[derive(Debug, Clone)]
pub struct MeanCcr {
    /// `Tr rho [q, p_k]`.
    pub lhs: Complex64,
    /// `i hbar d<q>/d theta^k` (central difference).
    pub rhs: Complex64,
    /// `|lhs - rhs| / max(1, |rhs|)`.
    pub residual: f64,
}

/// Checks the mean commutation identity for an estimator operator `q`
/// against the antisymmetric log-derivative along parameter `k`.
pub fn mean_ccr_check(
    fam: &StateFamily,
    p: &ParamPoint,
    q: &CMatrix,
    k: usize,
    tol: &Tolerances,
) -> Result<MeanCcr> {
    let set = ald(fam, p, tol)?;
    if k >= set.len() {
        return Err(Error::ShapeMismatch {
            context: format!("parameter index {k} out of range {}", set.len()),
        });
    }
    let rho = fam.evaluate(p)?;
    let lhs = trace(&(rho.matrix() * crate::matkernel::commutator(q, &set.ops[k])));
    let h = tol.derivative_step * p.real_coord(k).abs().max(1.0);
    let fp = fam.evaluate(&p.shifted(k, h))?.expect(q);
    let fm = fam.evaluate(&p.shifted(k, -h))?.expect(q);
    let rhs = (fp - fm).unscale(2.0 * h) * cplx(0.0, fam.hbar());
    let residual = (lhs - rhs).norm() / rhs.norm().max(1.0);
    Ok(MeanCcr { lhs, rhs, residual })
}

/// The two-step comparison `R >= <q q^H> >= |d theta/d beta|^2 / H` for a
/// scalar estimator on a one-parameter complex family.
#[derive(Debug, Clone)]
pub struct SchwarzChain {
    /// Estimand value `Tr(rho q)` at the point.
    pub estimand: Complex64,
    /// Centered operator second moment `Tr rho dq dq^H` — a lower bound on
    /// the error of any measurement whose moment operator is `q`.
    pub operator_moment: f64,
    /// Right-information bound `|d theta/d beta|^2 / H`.
    pub rld_bound: f64,
    /// `operator_moment - rld_bound` (nonnegative up to roundoff).
    pub margin: f64,
    /// True when the margin exceeds the comparison tolerance — the chain is
    /// strictly ordered and no measurement of `q` attains the information
    /// bound.
    pub strict: bool,
}

/// Evaluates the Schwarz comparison chain for estimator `q` on a
/// one-parameter complex family.
///
/// When `expected` is given, the estimand value must match it within
/// `tol.unbiasedness` (`BiasedEstimator` otherwise).
pub fn schwarz_chain(
    fam: &StateFamily,
    p: &ParamPoint,
    q: &CMatrix,
    expected: Option<Complex64>,
    tol: &Tolerances,
) -> Result<SchwarzChain> {
    if fam.kind() != ParamKind::Complex || fam.arity() != 1 {
        return Err(Error::KindMismatch {
            context: "schwarz chain is defined for one-parameter complex families".into(),
        });
    }
    let rho = fam.evaluate(p)?;
    let estimand = rho.expect(q);
    if let Some(exp) = expected {
        let bias = (estimand - exp).norm();
        if bias > tol.unbiasedness {
            return Err(Error::BiasedEstimator {
                bias,
                tol: tol.unbiasedness,
            });
        }
    }
    let moment = centered_cov(&rho, std::slice::from_ref(q))?[(0, 0)].re;
    let hset = crate::logderiv::rld(fam, p, tol)?;
    let hmat = crate::logderiv::fisher_rld(&rho, &hset)?;
    let h = hmat.matrix[(0, 0)].re;
    if h <= 0.0 {
        return Err(Error::SingularInformation {
            rank: 0,
            dim: 1,
            context: "right information vanished in schwarz chain".into(),
        });
    }
    let map = |pp: &ParamPoint| -> Result<Vec<Complex64>> { Ok(vec![fam.evaluate(pp)?.expect(q)]) };
    let d = JacobianMatrix::from_map(map, p, &[DiffDirection::Beta(0)], tol.derivative_step)?;
    let rld_bound = d.matrix[(0, 0)].norm_sqr() / h;
    let margin = moment - rld_bound;
    let strict = margin > 1e-6 * moment.abs().max(1.0);
    Ok(SchwarzChain {
        estimand,
        operator_moment: moment,
        rld_bound,
        margin,
        strict,
    })
}
