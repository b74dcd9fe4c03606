//! Logarithmic derivatives of state families and the information matrices
//! built from them.
//!
//! Three operator-valued derivatives of `rho` are supported, each defined by
//! a linear operator equation solved in the eigenbasis of `rho`:
//!
//! * **symmetric** `g_k`:      `g_k rho + rho g_k = 2 d_k rho`,
//! * **right** `h_k`:          `rho h_k = d_k rho` (derivative along
//!   `conj(beta)` for complex families, along the real coordinate otherwise),
//! * **antisymmetric** `p_k`:  `[rho, p_k] = (hbar/i) d_k rho`.
//!
//! Each solve is support-restricted: spectral components where the defining
//! equation has no solution (kernel pairs, vanishing gaps) are dropped and
//! the unreachable derivative mass is reported per direction rather than
//! erroring, because rank-deficient corners are legitimate inputs whose
//! non-regularity is exactly what callers want to detect.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkernel::{
    cplx, frob, hermitian_eigen, hermitize, lyapunov_solve, trace, CMatrix,
};
use crate::states::{
    family_derivative, DensityOperator, DiffDirection, ParamKind, ParamPoint, StateFamily,
};
use crate::tol::Tolerances;

/// Which defining equation a [`LogDerivSet`] solves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LogDerivKind {
    Symmetric,
    Right,
    Antisymmetric,
}

/// A family of logarithmic-derivative operators at one parameter point.
#[derive(Debug, Clone)]
pub struct LogDerivSet {
    pub kind: LogDerivKind,
    /// Differentiation direction of each operator.
    pub directions: Vec<DiffDirection>,
    /// The (zero-mean adjusted) operators.
    pub ops: Vec<CMatrix>,
    /// `Tr(rho op)` before the zero-mean adjustment — should vanish, and how
    /// far it doesn't is a solver diagnostic.
    pub means: Vec<Complex64>,
    /// Relative residual of the defining equation on the kept spectral pairs.
    pub residuals: Vec<f64>,
    /// Relative derivative mass on dropped spectral pairs (unreachable by any
    /// solution).
    pub off_support: Vec<f64>,
    /// True when every direction's off-support mass is below 1e-8.
    pub support_ok: bool,
}

impl LogDerivSet {
    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    /// Errors with `SupportMismatch` when unreachable derivative mass exceeds
    /// `tol` in any direction.
    pub fn require_support(&self, tol: f64) -> Result<()> {
        let mass = self.off_support.iter().cloned().fold(0.0f64, f64::max);
        if mass > tol {
            return Err(Error::SupportMismatch { mass, tol });
        }
        Ok(())
    }
}

/// Which information matrix a [`FisherMatrix`] holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FisherKind {
    /// `G_ik = Re Tr(rho g_i g_k)` from symmetric log-derivatives; real
    /// symmetric PSD.
    Symmetric,
    /// `H_ik = Tr(rho h_i h_k^H)` from right log-derivatives; Hermitian PSD.
    Right,
}

/// An information matrix with its provenance.
#[derive(Debug, Clone)]
pub struct FisherMatrix {
    pub kind: FisherKind,
    pub matrix: CMatrix,
    /// Differentiation direction of each row/column.
    pub directions: Vec<DiffDirection>,
}

/// The real coordinate directions of a family: `Real(k)` for real families,
/// `Gamma(0..n)` then `Theta(0..n)` for complex families.
pub fn real_directions(fam: &StateFamily) -> Vec<DiffDirection> {
    let n = fam.arity();
    match fam.kind() {
        ParamKind::Real => (0..n).map(DiffDirection::Real).collect(),
        ParamKind::Complex => (0..n)
            .map(DiffDirection::Gamma)
            .chain((0..n).map(DiffDirection::Theta))
            .collect(),
    }
}

/// The derivative directions the right log-derivative solves against:
/// `BetaBar(k)` for complex families, `Real(k)` for real ones.
pub fn right_directions(fam: &StateFamily) -> Vec<DiffDirection> {
    let n = fam.arity();
    match fam.kind() {
        ParamKind::Real => (0..n).map(DiffDirection::Real).collect(),
        ParamKind::Complex => (0..n).map(DiffDirection::BetaBar).collect(),
    }
}

/// Symmetric logarithmic derivatives along every real coordinate direction.
pub fn sld(fam: &StateFamily, p: &ParamPoint, tol: &Tolerances) -> Result<LogDerivSet> {
    let rho = fam.evaluate(p)?;
    let dim = rho.dim();
    let directions = real_directions(fam);
    let mut ops = Vec::with_capacity(directions.len());
    let mut means = Vec::with_capacity(directions.len());
    let mut residuals = Vec::with_capacity(directions.len());
    let mut off_support = Vec::with_capacity(directions.len());
    for &dir in &directions {
        let b = family_derivative(fam, p, dir)?;
        let sol = lyapunov_solve(rho.matrix(), &b, None, tol)?;
        let scale = frob(&b).max(f64::MIN_POSITIVE);
        let mut g = sol.x;
        let mean = trace(&(rho.matrix() * &g));
        g -= CMatrix::identity(dim, dim).scale(mean.re);
        ops.push(g);
        means.push(mean);
        residuals.push(sol.support_residual / (2.0 * scale).max(1.0));
        off_support.push(sol.off_support_mass / (2.0 * scale));
    }
    Ok(assemble(LogDerivKind::Symmetric, directions, ops, means, residuals, off_support))
}

/// Right logarithmic derivatives (`rho h = d rho`), support-restricted.
pub fn rld(fam: &StateFamily, p: &ParamPoint, tol: &Tolerances) -> Result<LogDerivSet> {
    let rho = fam.evaluate(p)?;
    let dim = rho.dim();
    let eig = hermitian_eigen(rho.matrix(), tol)?;
    let floor = tol.lyapunov_floor_rel * eig.max_eig();
    let u = &eig.vectors;
    let directions = right_directions(fam);
    let mut ops = Vec::with_capacity(directions.len());
    let mut means = Vec::with_capacity(directions.len());
    let mut residuals = Vec::with_capacity(directions.len());
    let mut off_support = Vec::with_capacity(directions.len());
    for &dir in &directions {
        let b = family_derivative(fam, p, dir)?;
        let bt = u.adjoint() * &b * u;
        let mut ht = CMatrix::zeros(dim, dim);
        let mut off_sq = 0.0f64;
        for i in 0..dim {
            let keep = eig.values[i] >= floor && eig.values[i] > 0.0;
            for j in 0..dim {
                if keep {
                    ht[(i, j)] = bt[(i, j)].unscale(eig.values[i]);
                } else {
                    off_sq += bt[(i, j)].norm_sqr();
                }
            }
        }
        let mut h = u * &ht * u.adjoint();
        let scale = frob(&b).max(f64::MIN_POSITIVE);
        // Residual of rho h - b on the kept rows, in the eigenbasis.
        let rt = u.adjoint() * (rho.matrix() * &h - &b) * u;
        let mut res_sq = 0.0f64;
        for i in 0..dim {
            if eig.values[i] >= floor && eig.values[i] > 0.0 {
                for j in 0..dim {
                    res_sq += rt[(i, j)].norm_sqr();
                }
            }
        }
        let mean = trace(&(rho.matrix() * &h));
        h -= CMatrix::identity(dim, dim).map(|z| z * mean);
        ops.push(h);
        means.push(mean);
        residuals.push(res_sq.sqrt() / scale.max(1.0));
        off_support.push(off_sq.sqrt() / scale);
    }
    Ok(assemble(LogDerivKind::Right, directions, ops, means, residuals, off_support))
}

/// Antisymmetric logarithmic derivatives (`[rho, p] = (hbar/i) d rho`) for
/// real-parametrized families.
///
/// The solution is Hermitian with zero diagonal in the eigenbasis of `rho`;
/// spectral gaps below `tol.ald_gap_floor_rel * max |eigenvalue|` are treated
/// as unreachable.
pub fn ald(fam: &StateFamily, p: &ParamPoint, tol: &Tolerances) -> Result<LogDerivSet> {
    if fam.kind() != ParamKind::Real {
        return Err(Error::KindMismatch {
            context: "antisymmetric log-derivative requires a real-parametrized family".into(),
        });
    }
    let hbar = fam.hbar();
    let rho = fam.evaluate(p)?;
    let dim = rho.dim();
    let eig = hermitian_eigen(rho.matrix(), tol)?;
    let lam_scale = eig.max_eig().abs().max(eig.min_eig().abs());
    let gap_floor = tol.ald_gap_floor_rel * lam_scale;
    let u = &eig.vectors;
    let directions: Vec<DiffDirection> = (0..fam.arity()).map(DiffDirection::Real).collect();
    let mut ops = Vec::with_capacity(directions.len());
    let mut means = Vec::with_capacity(directions.len());
    let mut residuals = Vec::with_capacity(directions.len());
    let mut off_support = Vec::with_capacity(directions.len());
    for &dir in &directions {
        let b = family_derivative(fam, p, dir)?;
        let bt = u.adjoint() * &b * u;
        let mut pt = CMatrix::zeros(dim, dim);
        let mut off_sq = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let gap = eig.values[i] - eig.values[j];
                if i != j && gap.abs() >= gap_floor {
                    // p_ij = (hbar/i) b_ij / gap = -i hbar b_ij / gap
                    pt[(i, j)] = bt[(i, j)] * cplx(0.0, -hbar / gap);
                } else {
                    // Diagonal (and near-degenerate) components of b are
                    // unreachable by any commutator.
                    off_sq += bt[(i, j)].norm_sqr();
                }
            }
        }
        let p_op = hermitize(&(u * &pt * u.adjoint()));
        let scale = frob(&b).max(f64::MIN_POSITIVE);
        // Residual of [rho, p] + i hbar b on kept pairs, in the eigenbasis.
        let r = crate::matkernel::commutator(rho.matrix(), &p_op)
            - b.map(|z| z * cplx(0.0, -hbar));
        let rt = u.adjoint() * r * u;
        let mut res_sq = 0.0f64;
        for i in 0..dim {
            for j in 0..dim {
                let gap = eig.values[i] - eig.values[j];
                if i != j && gap.abs() >= gap_floor {
                    res_sq += rt[(i, j)].norm_sqr();
                }
            }
        }
        let mean = trace(&(rho.matrix() * &p_op));
        ops.push(p_op);
        means.push(mean);
        residuals.push(res_sq.sqrt() / (hbar * scale).max(1.0));
        off_support.push(off_sq.sqrt() / scale);
    }
    Ok(assemble(LogDerivKind::Antisymmetric, directions, ops, means, residuals, off_support))
}

fn assemble(
    kind: LogDerivKind,
    directions: Vec<DiffDirection>,
    ops: Vec<CMatrix>,
    means: Vec<Complex64>,
    residuals: Vec<f64>,
    off_support: Vec<f64>,
) -> LogDerivSet {
    let support_ok = off_support.iter().all(|&m| m <= 1e-8);
    LogDerivSet {
        kind,
        directions,
        ops,
        means,
        residuals,
        off_support,
        support_ok,
    }
}

/// Information matrix `G_ik = Re Tr(rho g_i g_k)` from symmetric
/// log-derivatives (equals `Tr rho {g_i, g_k} / 2`).
pub fn fisher_sld(rho: &DensityOperator, set: &LogDerivSet) -> Result<FisherMatrix> {
    if set.kind != LogDerivKind::Symmetric {
        return Err(Error::KindMismatch {
            context: format!("fisher_sld needs symmetric log-derivatives, got {:?}", set.kind),
        });
    }
    let n = set.ops.len();
    let mut g = CMatrix::zeros(n, n);
    for i in 0..n {
        for k in i..n {
            let v = trace(&(rho.matrix() * &set.ops[i] * &set.ops[k]));
            g[(i, k)] = cplx(v.re, 0.0);
            g[(k, i)] = cplx(v.re, 0.0);
        }
    }
    Ok(FisherMatrix {
        kind: FisherKind::Symmetric,
        matrix: g,
        directions: set.directions.clone(),
    })
}

/// Information matrix `H_ik = Tr(rho h_i h_k^H)` from right log-derivatives;
/// Hermitian positive semidefinite.
pub fn fisher_rld(rho: &DensityOperator, set: &LogDerivSet) -> Result<FisherMatrix> {
    if set.kind != LogDerivKind::Right {
        return Err(Error::KindMismatch {
            context: format!("fisher_rld needs right log-derivatives, got {:?}", set.kind),
        });
    }
    let n = set.ops.len();
    let mut h = CMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            h[(i, k)] = trace(&(rho.matrix() * &set.ops[i] * set.ops[k].adjoint()));
        }
    }
    Ok(FisherMatrix {
        kind: FisherKind::Right,
        matrix: hermitize(&h),
        directions: set.directions.clone(),
    })
}

/// Centered second-moment matrix `C_ik = Tr(rho dA_i dA_k^H)` with
/// `dA = A - Tr(rho A)`; Hermitian PSD for any operator list.
pub fn centered_cov(rho: &DensityOperator, ops: &[CMatrix]) -> Result<CMatrix> {
    let n = ops.len();
    let dim = rho.dim();
    let mut centered = Vec::with_capacity(n);
    for op in ops {
        if op.nrows() != dim || op.ncols() != dim {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "covariance operand is {}x{}, state dim {}",
                    op.nrows(),
                    op.ncols(),
                    dim
                ),
            });
        }
        let mean = rho.expect(op);
        centered.push(op - CMatrix::identity(dim, dim).map(|z| z * mean));
    }
    let mut c = CMatrix::zeros(n, n);
    for i in 0..n {
        for k in 0..n {
            c[(i, k)] = trace(&(rho.matrix() * &centered[i] * centered[k].adjoint()));
        }
    }
    Ok(hermitize(&c))
}

/// Symmetrized covariance `Re C_ik`; for Hermitian operators this is
/// `Tr rho {dA_i, dA_k} / 2`, the matrix entering the uncertainty-type
/// bounds.
pub fn symmetrized_cov(rho: &DensityOperator, ops: &[CMatrix]) -> Result<CMatrix> {
    let c = centered_cov(rho, ops)?;
    Ok(c.map(|z| cplx(z.re, 0.0)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::matkernel::CVector;
    use crate::states::{
        coherent_state, fock_ops, pure_fock, thermal_state, GeneratorSet,
        ParamPoint, StateFamily,
    };
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::sync::Arc;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    /// Classical oracle: mean and variance of the level index under the
    /// exponentially tilted distribution p_m(g) ~ p0_m e^{g m}.
    fn tilted_moments(p0: &[f64], g: f64) -> (f64, f64) {
        let mut z = 0.0;
        let mut m1 = 0.0;
        let mut m2 = 0.0;
        for (m, &w) in p0.iter().enumerate() {
            let t = w * (g * m as f64).exp();
            z += t;
            m1 += t * m as f64;
            m2 += t * (m as f64) * (m as f64);
        }
        (m1 / z, m2 / z - (m1 / z) * (m1 / z))
    }

    #[test]
    fn sld_fisher_matches_classical_variance() {
        // Commuting diagonal family: the quantum information matrix must
        // collapse to the classical Fisher information of the tilted
        // distribution, which for a natural parameter is the variance.
        let dim = 16;
        let ops = fock_ops(dim).unwrap();
        let rho0 = thermal_state(dim, 1.0, &tols()).unwrap();
        let p0: Vec<f64> = (0..dim).map(|m| rho0.matrix()[(m, m)].re).collect();
        let fam = StateFamily::canonical_real(
            rho0,
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let gamma = 0.3;
        let p = ParamPoint::Real(vec![gamma]);
        let set = sld(&fam, &p, &tols()).unwrap();
        assert!(set.support_ok);
        assert!(set.residuals[0] <= 1e-10);
        assert!(set.means[0].norm() <= 1e-10);
        let rho = fam.evaluate(&p).unwrap();
        let g = fisher_sld(&rho, &set).unwrap();
        let (mean, var) = tilted_moments(&p0, gamma);
        assert_abs_diff_eq!(g.matrix[(0, 0)].re, var, epsilon = 1e-8);
        // Generating-function cross-check: d ln chi / d gamma = <n>_gamma.
        let gf = fam.generating_function().unwrap();
        let mu = gf.mu(&p).unwrap();
        assert_abs_diff_eq!(mu[0].re, mean, epsilon = 1e-7);
    }

    #[test]
    fn sld_fisher_pure_phase_family_is_four_variance() {
        // For a pure state under a unitary shift the information matrix is
        // 4 Var(s) / hbar^2.
        let dim = 30;
        let ops = fock_ops(dim).unwrap();
        let alpha = cplx(1.2, 0.0);
        for hbar in [1.0, 2.0] {
            let fam = StateFamily::unitary_shift(
                coherent_state(dim, alpha, &tols()).unwrap(),
                GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
                hbar,
                &tols(),
            )
            .unwrap();
            let p = ParamPoint::Real(vec![0.4]);
            let set = sld(&fam, &p, &tols()).unwrap();
            let rho = fam.evaluate(&p).unwrap();
            let g = fisher_sld(&rho, &set).unwrap();
            let var_n = alpha.norm_sqr(); // Poisson variance of |alpha|^2
            assert_abs_diff_eq!(
                g.matrix[(0, 0)].re,
                4.0 * var_n / (hbar * hbar),
                epsilon = 1e-6
            );
        }
    }

    #[test]
    fn sld_fisher_coherent_family_real_view() {
        // Coherent family in (gamma, theta) coordinates: information matrix
        // diag(1, 4) independent of beta (pure-state projective computation).
        let dim = 25;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::from_betas(&[cplx(0.3, 0.2)]);
        let set = sld(&fam, &p, &tols()).unwrap();
        assert_eq!(set.len(), 2);
        let rho = fam.evaluate(&p).unwrap();
        let g = fisher_sld(&rho, &set).unwrap();
        assert_abs_diff_eq!(g.matrix[(0, 0)].re, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.matrix[(1, 1)].re, 4.0, epsilon = 1e-6);
        assert_abs_diff_eq!(g.matrix[(0, 1)].re, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn rld_coherent_family_unit_information() {
        let dim = 25;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::from_betas(&[cplx(0.4, -0.2)]);
        let set = rld(&fam, &p, &tols()).unwrap();
        assert!(set.support_ok);
        assert!(set.means[0].norm() <= 1e-9);
        let rho = fam.evaluate(&p).unwrap();
        let h = fisher_rld(&rho, &set).unwrap();
        assert_abs_diff_eq!(h.matrix[(0, 0)].re, 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(h.matrix[(0, 0)].im, 0.0, epsilon = 1e-10);
    }

    #[test]
    fn rld_excited_reference_information_two() {
        // Reference state |1><1|: ln chi = |b|^2 + ln(1 + |b|^2), so the
        // right information at the origin is exactly 2.
        let dim = 25;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 1, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::origin(crate::states::ParamKind::Complex, 1);
        let set = rld(&fam, &p, &tols()).unwrap();
        let rho = fam.evaluate(&p).unwrap();
        let h = fisher_rld(&rho, &set).unwrap();
        assert_abs_diff_eq!(h.matrix[(0, 0)].re, 2.0, epsilon = 1e-8);
        // Same number from the generating function.
        let gf = fam.generating_function().unwrap();
        let hess = gf.log_hessian(&p).unwrap();
        assert_abs_diff_eq!(hess[(0, 0)].re, 2.0, epsilon = 1e-6);
    }

    #[test]
    fn rld_on_real_family_solves_gamma_derivative() {
        // Real-kind families get the one-sided solve against d rho / d gamma;
        // for a commuting full-rank family h must be Hermitian and reproduce
        // the symmetric information.
        let dim = 14;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_real(
            thermal_state(dim, 1.2, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::Real(vec![0.2]);
        let rho = fam.evaluate(&p).unwrap();
        let hs = rld(&fam, &p, &tols()).unwrap();
        let gs = sld(&fam, &p, &tols()).unwrap();
        // Diagonal commuting family: h and g coincide.
        assert!(frob(&(&hs.ops[0] - &gs.ops[0])) <= 1e-8);
        let h = fisher_rld(&rho, &hs).unwrap();
        let g = fisher_sld(&rho, &gs).unwrap();
        assert_abs_diff_eq!(h.matrix[(0, 0)].re, g.matrix[(0, 0)].re, epsilon = 1e-8);
    }

    #[test]
    fn ald_shift_family_is_minus_centered_generator() {
        // For rho(t) = e^{i t s/hbar} rho0 e^{-i t s/hbar} the defining
        // equation forces p = -(s - <s>) on the reachable subspace.
        let dim = 14;
        let ops = fock_ops(dim).unwrap();
        let hbar = 1.5;
        let fam = StateFamily::unitary_shift(
            thermal_state(dim, 1.5, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.x.clone()]).unwrap(),
            hbar,
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::Real(vec![0.3]);
        let set = ald(&fam, &p, &tols()).unwrap();
        assert!(set.residuals[0] <= 1e-8, "residual {}", set.residuals[0]);
        assert!(set.means[0].norm() <= 1e-10);
        // <x> = 0 for the thermal reference, so the centered generator is x.
        let diff = frob(&(&set.ops[0] + &ops.x));
        assert!(diff <= 1e-7, "ald operator differs from -x by {diff}");
    }

    #[test]
    fn ald_rejects_complex_families() {
        let dim = 6;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::origin(crate::states::ParamKind::Complex, 1);
        assert!(matches!(
            ald(&fam, &p, &tols()).unwrap_err(),
            Error::KindMismatch { .. }
        ));
    }

    #[test]
    fn support_mismatch_reported_not_fatal() {
        // Mixing toward a level outside the support: the derivative has mass
        // on kernel pairs that no log-derivative can reach. The solvers must
        // flag it (and require_support must reject it) without erroring.
        let loose = Tolerances {
            psd: 1e-3,
            ..Tolerances::default()
        };
        let eval = {
            let loose = loose.clone();
            move |p: &ParamPoint| -> Result<DensityOperator> {
                let t = match p {
                    ParamPoint::Real(v) => v[0],
                    _ => unreachable!(),
                };
                let d = CVector::from_vec(vec![
                    cplx(0.8 - t, 0.0),
                    cplx(0.2, 0.0),
                    cplx(t, 0.0),
                ]);
                DensityOperator::new(CMatrix::from_diagonal(&d), &loose)
            }
        };
        let fam = StateFamily::custom(
            3,
            1,
            crate::states::ParamKind::Real,
            1.0,
            Arc::new(eval),
            &tols(),
        );
        let p = ParamPoint::Real(vec![0.0]);

        let rset = rld(&fam, &p, &tols()).unwrap();
        assert!(!rset.support_ok);
        assert!(rset.off_support[0] > 0.5);
        assert!(matches!(
            rset.require_support(1e-8).unwrap_err(),
            Error::SupportMismatch { .. }
        ));

        let gset = sld(&fam, &p, &tols()).unwrap();
        assert!(!gset.support_ok);
        assert!(gset.off_support[0] > 0.5);
    }

    #[test]
    fn fisher_kind_mismatch_rejected() {
        let dim = 8;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_real(
            thermal_state(dim, 0.7, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::Real(vec![0.1]);
        let rho = fam.evaluate(&p).unwrap();
        let gset = sld(&fam, &p, &tols()).unwrap();
        assert!(matches!(
            fisher_rld(&rho, &gset).unwrap_err(),
            Error::KindMismatch { .. }
        ));
    }

    #[test]
    fn covariance_matches_direct_moments() {
        // <dn^2> of a thermal state: nbar (nbar + 1) for the untruncated
        // state; compute the truncated oracle directly from the weights.
        let dim = 24;
        let nbar = 0.8;
        let rho = thermal_state(dim, nbar, &tols()).unwrap();
        let ops = fock_ops(dim).unwrap();
        let (mut m1, mut m2) = (0.0, 0.0);
        for m in 0..dim {
            let w = rho.matrix()[(m, m)].re;
            m1 += w * m as f64;
            m2 += w * (m as f64) * (m as f64);
        }
        let var = m2 - m1 * m1;
        let c = centered_cov(&rho, std::slice::from_ref(&ops.n)).unwrap();
        assert_abs_diff_eq!(c[(0, 0)].re, var, epsilon = 1e-10);
        // x and p quadratures of a thermal state: variance nbar + 1/2 each
        // (up to the truncation corner, ~1e-7 here), symmetrized
        // cross-covariance zero.
        let s = symmetrized_cov(&rho, &[ops.x.clone(), ops.p.clone()]).unwrap();
        assert_abs_diff_eq!(s[(0, 0)].re, m1 + 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(s[(1, 1)].re, m1 + 0.5, epsilon = 1e-6);
        assert_abs_diff_eq!(s[(0, 1)].re, 0.0, epsilon = 1e-10);
        // Full covariance keeps the commutator part:
        // Im C_xp = Im <x p> = <[x,p]> / 2i = +1/2.
        let c2 = centered_cov(&rho, &[ops.x.clone(), ops.p.clone()]).unwrap();
        assert_abs_diff_eq!(c2[(0, 1)].im, 0.5, epsilon = 1e-6);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]

        /// Random commuting diagonal families: quantum = classical Fisher.
        #[test]
        fn prop_diagonal_family_classical(seed in 0u64..200) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed);
            let dim = 5usize;
            let mut w: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() + 0.05).collect();
            let z: f64 = w.iter().sum();
            for v in &mut w { *v /= z; }
            let rho0 = DensityOperator::new(
                CMatrix::from_diagonal(&CVector::from_iterator(dim, w.iter().map(|&v| cplx(v, 0.0)))),
                &tols(),
            ).unwrap();
            let svals: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
            let s = CMatrix::from_diagonal(&CVector::from_iterator(dim, svals.iter().map(|&v| cplx(v, 0.0))));
            let fam = StateFamily::canonical_real(
                rho0, GeneratorSet::new(vec![s]).unwrap(), &tols(),
            ).unwrap();
            let gamma = rng.gen::<f64>() - 0.5;
            let p = ParamPoint::Real(vec![gamma]);
            let set = sld(&fam, &p, &tols()).unwrap();
            let rho = fam.evaluate(&p).unwrap();
            let g = fisher_sld(&rho, &set).unwrap();
            // Classical oracle on the tilted weights.
            let mut zt = 0.0; let mut m1 = 0.0; let mut m2 = 0.0;
            for m in 0..dim {
                let t = w[m] * (gamma * svals[m]).exp();
                zt += t; m1 += t * svals[m]; m2 += t * svals[m] * svals[m];
            }
            let var = m2 / zt - (m1 / zt) * (m1 / zt);
            prop_assert!((g.matrix[(0,0)].re - var).abs() <= 1e-7 * var.max(1.0));
        }

        /// Information matrices are PSD with small residuals for full-rank
        /// noncommuting two-parameter families (numeric-derivative path).
        #[test]
        fn prop_fisher_psd_noncommuting(seed in 0u64..40) {
            use rand::{Rng, SeedableRng};
            let mut rng = rand_chacha::ChaCha12Rng::seed_from_u64(seed.wrapping_add(31));
            let dim = 4usize;
            let mix = 0.3 + 0.6 * rng.gen::<f64>();
            let rho0 = {
                let mut w: Vec<f64> = (0..dim).map(|_| rng.gen::<f64>() + 0.1).collect();
                let z: f64 = w.iter().sum();
                for v in &mut w { *v /= z; }
                // blend toward maximally mixed to keep eigenvalues away from 0
                let id = 1.0 / dim as f64;
                for v in &mut w { *v = mix * *v + (1.0 - mix) * id; }
                DensityOperator::new(
                    CMatrix::from_diagonal(&CVector::from_iterator(dim, w.iter().map(|&v| cplx(v, 0.0)))),
                    &tols(),
                ).unwrap()
            };
            let fo = fock_ops(dim).unwrap();
            let gens = GeneratorSet::new(vec![fo.x.clone(), fo.p.clone()]).unwrap();
            prop_assert!(!gens.commuting());
            let fam = StateFamily::canonical_real(rho0, gens, &tols()).unwrap();
            let p = ParamPoint::Real(vec![0.1 * rng.gen::<f64>(), 0.1 * rng.gen::<f64>()]);
            let set = sld(&fam, &p, &tols()).unwrap();
            for r in &set.residuals { prop_assert!(*r <= 1e-7, "residual {r}"); }
            let rho = fam.evaluate(&p).unwrap();
            let g = fisher_sld(&rho, &set).unwrap();
            let check = crate::matkernel::is_psd(&g.matrix, 1e-8).unwrap();
            prop_assert!(check.psd, "min eig {}", check.min_eig);
        }
    }
}
