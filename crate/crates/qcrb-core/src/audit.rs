//! Measurement-efficiency audits.
//!
//! Each audit takes a state family, a parameter point, and a measurement,
//! and reports how close the measurement's exact statistical error matrix
//! comes to a specific lower bound, together with the structural residuals
//! that characterize when that bound is attainable at all:
//!
//! * [`theorem1_audit`] — symmetric (Helstrom) bound for real canonical
//!   families with commuting Hermitian generators, estimating the generator
//!   means. Attained by the joint spectral measurement of the generators.
//! * [`theorem2_audit`] — right bound for complex canonical families,
//!   estimating the generator means. Attained by measurements whose moment
//!   operators have the state as a right eigenvector (e.g. heterodyne
//!   detection on coherent states).
//! * [`theorem3_audit`] — right bound `H^{-1}` for estimating the canonical
//!   complex parameters themselves, attainable exactly when the normalization
//!   function is Gaussian (`ln χ` quadratic, constant information) and the
//!   estimates are the linearly corrected quasimeasurement results.
//! * [`regularity_check`] — the differential conditions (symmetric parameter
//!   derivatives and, for complex families, holomorphy of `R^{-1}D`) under
//!   which attainment forces the canonical structure.
//!
//! The first two audits compare the measurement's covariance (error about
//! its own mean) against the bound transported through the measurement's own
//! mean-map Jacobian; that comparison is locally valid for *any*
//! measurement, and a separate `bias` field records how far the
//! measurement's mean sits from the family estimand. Reports are plain data:
//! they record residuals and a [`BoundCheck`] and leave pass/fail policy to
//! the caller.

use num_complex::Complex64;

use crate::bounds::{check_bound, helstrom_bound, right_bound, BoundCheck, JacobianMatrix};
use crate::error::{Error, Result};
use crate::logderiv::{centered_cov, fisher_rld, fisher_sld, rld, sld};
use crate::matkernel::{cplx, frob, max_abs_entry, CMatrix};
use crate::povm::{error_matrices, right_eigen_residuals, Povm};
use crate::states::{DiffDirection, ParamKind, ParamPoint, StateFamily};
use crate::tol::Tolerances;

/// Mean-label map of a measurement along the family: `p ↦ Σ_j p_j(p) λ_j`.
fn mean_map<'a>(
    fam: &'a StateFamily,
    povm: &'a Povm,
) -> impl Fn(&ParamPoint) -> Result<Vec<Complex64>> + 'a {
    move |p: &ParamPoint| povm.mean_labels(&fam.evaluate(p)?)
}

/// Differentiation directions matching the family's parameters: plain
/// coordinates for real families, holomorphic `β`-directions for complex
/// ones.
fn family_directions(fam: &StateFamily) -> Vec<DiffDirection> {
    match fam.kind() {
        ParamKind::Real => (0..fam.arity()).map(DiffDirection::Real).collect(),
        ParamKind::Complex => (0..fam.arity()).map(DiffDirection::Beta).collect(),
    }
}

fn family_generators(fam: &StateFamily) -> Result<&crate::states::GeneratorSet> {
    fam.generators().ok_or_else(|| Error::KindMismatch {
        context: format!(
            "audit requires a family with explicit generators, got form `{}`",
            fam.form_name()
        ),
    })
}

fn max_dev(a: &[Complex64], b: &[Complex64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}

/// Differential regularity of the pair `(family, measurement)` at a point.
#[derive(Debug, Clone)]
pub struct RegularityReport {
    /// Largest asymmetry `|∂_i F_jk - ∂_k F_ji|` of the derivatives of
    /// `F = R^{-1} D` over parameter pairs `(i, k)`, relative to the
    /// magnitude of those derivatives.
    pub symmetry_residual: f64,
    /// Complex families: largest conjugate-direction derivative of
    /// `R^{-1} D` (zero for holomorphic dependence), same normalization.
    /// `None` for real families.
    pub analyticity_residual: Option<f64>,
    /// `max |entry|` of `R^{-1} D` at the audit point.
    pub scale: f64,
}

/// Checks the differential regularity conditions at `p`: the matrix field
/// `F = R^{-1} D` (inverse covariance times mean-map Jacobian) must have
/// symmetric parameter derivatives, and for complex families must not depend
/// on the conjugate coordinates. These are the integrability conditions
/// under which an everywhere-attained bound implies the canonical family
/// structure.
pub fn regularity_check(
    fam: &StateFamily,
    p: &ParamPoint,
    povm: &Povm,
    tol: &Tolerances,
) -> Result<RegularityReport> {
    let n = fam.arity();
    let dirs = family_directions(fam);
    let f_at = |pp: &ParamPoint| -> Result<CMatrix> {
        let rho = fam.evaluate(pp)?;
        let em = error_matrices(povm, &rho, None, tol)?;
        let rinv = em.r.clone().try_inverse().ok_or_else(|| Error::SingularR {
            context: "regularity check needs an invertible error matrix".into(),
        })?;
        let d = JacobianMatrix::from_map(mean_map(fam, povm), pp, &dirs, tol.derivative_step)?;
        Ok(rinv * d.matrix)
    };
    let f0 = f_at(p)?;
    let scale = max_abs_entry(&f0);

    // Central differences of F along every real coordinate, with a step one
    // order larger than the inner mean-map step so the nested differences
    // stay well conditioned.
    let coords = p.real_dim();
    let mut grads = Vec::with_capacity(coords);
    for c in 0..coords {
        let h = 10.0 * tol.derivative_step * p.real_coord(c).abs().max(1.0);
        let fp = f_at(&p.shifted(c, h))?;
        let fm = f_at(&p.shifted(c, -h))?;
        grads.push((fp - fm).unscale(2.0 * h));
    }

    // Assemble per-parameter derivatives: for complex families the stored
    // coordinates are (gamma, theta) and the holomorphic/conjugate
    // derivatives are their Wirtinger combinations.
    let (holo, anti): (Vec<CMatrix>, Option<Vec<CMatrix>>) = match fam.kind() {
        ParamKind::Real => (grads, None),
        ParamKind::Complex => {
            let mut hv = Vec::with_capacity(n);
            let mut av = Vec::with_capacity(n);
            for k in 0..n {
                let dg = &grads[k];
                let dt = &grads[n + k];
                hv.push(dg - dt * cplx(0.0, 0.5));
                av.push(dg + dt * cplx(0.0, 0.5));
            }
            (hv, Some(av))
        }
    };
    let deriv_scale = 1.0 + holo.iter().map(max_abs_entry).fold(0.0, f64::max);
    let mut symmetry_residual: f64 = 0.0;
    for i in 0..holo.len() {
        for k in (i + 1)..holo.len() {
            for j in 0..holo[i].nrows() {
                let dev = (holo[i][(j, k)] - holo[k][(j, i)]).norm();
                symmetry_residual = symmetry_residual.max(dev);
            }
        }
    }
    let symmetry_residual = symmetry_residual / deriv_scale;
    let analyticity_residual =
        anti.map(|a| a.iter().map(max_abs_entry).fold(0.0, f64::max) / deriv_scale);
    Ok(RegularityReport {
        symmetry_residual,
        analyticity_residual,
        scale,
    })
}

/// Audit of symmetric-bound attainment by a measurement on a real canonical
/// family.
#[derive(Debug, Clone)]
pub struct Theorem1Report {
    /// Symmetric (symmetrized-log-derivative) information matrix at `p`.
    pub fisher: CMatrix,
    /// Covariance of the measurement outcomes (error about its own mean).
    pub error_matrix: CMatrix,
    /// Symmetric bound `D G^+ D^H` with `D` the measurement's own mean-map
    /// Jacobian.
    pub bound: CMatrix,
    /// Comparison of the two (expect `Attained` for the joint spectral
    /// measurement of commuting generators).
    pub check: BoundCheck,
    /// Deviation of the measurement mean from the generator means
    /// `Tr(ϱ s_k)` — the estimand the family calibrates.
    pub bias: f64,
    /// `‖D - G‖ / (1 + ‖G‖)`: on canonical families estimating their own
    /// generator means, the mean-map Jacobian of an efficient measurement
    /// equals the information matrix.
    pub mean_jacobian_residual: f64,
    /// `‖∂²(ln χ) - G‖ / (1 + ‖G‖)`: the information matrix is the Hessian
    /// of the log-normalization.
    pub log_hessian_residual: f64,
    /// `‖q̂_i - s_i‖ / (1 + ‖s_i‖)`: how far each first-moment operator of
    /// the measurement is from the generator it should measure.
    pub moment_op_residuals: Vec<f64>,
    /// Whether the family's generators commute (the structural precondition
    /// for attainment over the whole domain).
    pub generators_commute: bool,
}

/// Audits attainment of the symmetric bound at `p` for the estimand
/// `ϑ_k = Tr(ϱ s_k)` (generator means) of a real canonical family.
pub fn theorem1_audit(
    fam: &StateFamily,
    p: &ParamPoint,
    povm: &Povm,
    tol: &Tolerances,
) -> Result<Theorem1Report> {
    if fam.kind() != ParamKind::Real {
        return Err(Error::KindMismatch {
            context: "symmetric-bound audit applies to real-parameter families".into(),
        });
    }
    let gens = family_generators(fam)?;
    let rho = fam.evaluate(p)?;
    let mu: Vec<Complex64> = gens.ops().iter().map(|s| rho.expect(s)).collect();

    let set = sld(fam, p, tol)?;
    let g = fisher_sld(&rho, &set)?;
    let dirs = family_directions(fam);
    let d = JacobianMatrix::from_map(mean_map(fam, povm), p, &dirs, tol.derivative_step)?;
    let bound = helstrom_bound(&g, &d, tol)?;
    let em = error_matrices(povm, &rho, None, tol)?;
    let check = check_bound(&em.r, &bound, 0.0, tol)?;
    let bias = max_dev(&em.reference, &mu);

    let g_scale = 1.0 + frob(&g.matrix);
    let mean_jacobian_residual = frob(&(&d.matrix - &g.matrix)) / g_scale;
    let hess = fam.generating_function()?.log_hessian(p)?;
    let log_hessian_residual = frob(&(&hess - &g.matrix)) / g_scale;

    let qops = povm.moment_ops().ops;
    let moment_op_residuals = gens
        .ops()
        .iter()
        .zip(&qops)
        .map(|(s, q)| frob(&(q - s)) / (1.0 + frob(s)))
        .collect();

    Ok(Theorem1Report {
        fisher: g.matrix,
        error_matrix: em.r,
        bound: bound.matrix,
        check,
        bias,
        mean_jacobian_residual,
        log_hessian_residual,
        moment_op_residuals,
        generators_commute: gens.commuting(),
    })
}

/// Audit of right-bound attainment by a measurement on a complex canonical
/// family.
#[derive(Debug, Clone)]
pub struct Theorem2Report {
    /// Right (right-log-derivative) information matrix at `p`.
    pub rld_fisher: CMatrix,
    /// Centered generator covariance `Tr ϱ Δx_i Δx_k^H` — equals the
    /// information matrix on canonical complex families.
    pub operator_cov: CMatrix,
    /// `‖H - cov‖ / (1 + ‖H‖)`.
    pub h_cov_residual: f64,
    /// Covariance of the measurement outcomes (error about its own mean).
    pub error_matrix: CMatrix,
    /// Right bound `D H^+ D^H` with the measurement's mean-map Jacobian.
    pub bound: CMatrix,
    /// Comparison of the two.
    pub check: BoundCheck,
    /// Deviation of the measurement mean from the generator means
    /// `ϑ_k = Tr(ϱ x_k)`.
    pub bias: f64,
    /// Residuals of the right-eigenstate property `q̂_i ϱ = ϑ_i ϱ` at the
    /// measurement's own mean — zero is the structural signature of
    /// attainment.
    pub right_eigen: Vec<f64>,
    /// Whether the right-log-derivative solve stayed on the state's support.
    pub support_ok: bool,
}

/// Audits attainment of the right bound at `p` for the estimand
/// `ϑ_k = Tr(ϱ x_k)` (generator means) of a complex canonical family.
pub fn theorem2_audit(
    fam: &StateFamily,
    p: &ParamPoint,
    povm: &Povm,
    tol: &Tolerances,
) -> Result<Theorem2Report> {
    if fam.kind() != ParamKind::Complex {
        return Err(Error::KindMismatch {
            context: "right-bound audit applies to complex-parameter families".into(),
        });
    }
    let gens = family_generators(fam)?;
    let rho = fam.evaluate(p)?;
    let theta: Vec<Complex64> = gens.ops().iter().map(|x| rho.expect(x)).collect();

    let set = rld(fam, p, tol)?;
    let h = fisher_rld(&rho, &set)?;
    let cov = centered_cov(&rho, gens.ops())?;
    let h_scale = 1.0 + frob(&h.matrix);
    let h_cov_residual = frob(&(&cov - &h.matrix)) / h_scale;

    let dirs = family_directions(fam);
    let d = JacobianMatrix::from_map(mean_map(fam, povm), p, &dirs, tol.derivative_step)?;
    let bound = right_bound(&h, &d, tol)?;
    let em = error_matrices(povm, &rho, None, tol)?;
    let check = check_bound(&em.r, &bound, 0.0, tol)?;
    let bias = max_dev(&em.reference, &theta);
    let right_eigen = right_eigen_residuals(povm, &rho, &em.reference)?;

    Ok(Theorem2Report {
        rld_fisher: h.matrix,
        operator_cov: cov,
        h_cov_residual,
        error_matrix: em.r,
        bound: bound.matrix,
        check,
        bias,
        right_eigen,
        support_ok: set.support_ok,
    })
}

/// Audit of right-bound attainment for estimating the canonical complex
/// parameters themselves.
#[derive(Debug, Clone)]
pub struct Theorem3Report {
    /// Right information matrix at the origin. For Gaussian normalization it
    /// is constant over the domain and the bound is its inverse.
    pub h_origin: CMatrix,
    /// `max |ln χ - linear - quadratic| / (1 + |ln χ|)` over probe points
    /// between the origin and `p`, with the quadratic form given by the
    /// origin information: zero exactly when the normalization is Gaussian.
    pub gaussian_residual: f64,
    /// `max ‖H(probe) - H(0)‖ / (1 + ‖H(0)‖)` over the same probes.
    pub h_constant_residual: f64,
    /// Mean-square error about the true parameters of the linearly corrected
    /// estimates `λ = H(0)^{-1}(ϰ - ⟨x⟩_0)`.
    pub error_matrix: CMatrix,
    /// The bound `H(0)^{-1}`.
    pub bound: CMatrix,
    /// Comparison of the two. A `Violated` verdict is meaningful here: it
    /// says the linear correction is biased at `p` (see `bias`) because the
    /// Gaussian premise fails, so the unbiased-estimator bound does not
    /// constrain it.
    pub check: BoundCheck,
    /// Deviation of the corrected measurement mean from the true parameters.
    pub bias: f64,
}

/// Audits attainment of `R ⪰ H^{-1}` at `p` for the estimand `ϑ = β`
/// (the canonical parameters), using the linearly corrected estimates
/// `λ = H(0)^{-1}(ϰ - ⟨x⟩_0)` built from the measurement's raw labels `ϰ`.
pub fn theorem3_audit(
    fam: &StateFamily,
    p: &ParamPoint,
    povm: &Povm,
    tol: &Tolerances,
) -> Result<Theorem3Report> {
    if fam.kind() != ParamKind::Complex {
        return Err(Error::KindMismatch {
            context: "canonical-parameter audit applies to complex-parameter families".into(),
        });
    }
    let n = fam.arity();
    if povm.label_arity() != n {
        return Err(Error::ShapeMismatch {
            context: format!(
                "measurement reports {} labels for {} parameters",
                povm.label_arity(),
                n
            ),
        });
    }
    let origin = ParamPoint::origin(ParamKind::Complex, n);
    let rho0 = fam.evaluate(&origin)?;
    let set0 = rld(fam, &origin, tol)?;
    let h0 = fisher_rld(&rho0, &set0)?;
    let gens = family_generators(fam)?;
    let mu0: Vec<Complex64> = gens.ops().iter().map(|x| rho0.expect(x)).collect();

    // Gaussian normalization means ln χ(β) = 2 Re(β̄·⟨x⟩_0) + β̄^i H_ik β^k
    // exactly, with constant H. Probe along the segment from the origin to p.
    let gf = fam.generating_function()?;
    let betas = p.betas()?;
    let mut gaussian_residual: f64 = 0.0;
    let mut h_constant_residual: f64 = 0.0;
    let h0_scale = 1.0 + frob(&h0.matrix);
    for t in [0.25, 0.5, 0.75, 1.0] {
        let probe_betas: Vec<Complex64> = betas.iter().map(|b| b * t).collect();
        let probe = ParamPoint::from_betas(&probe_betas);
        let log_chi = gf.log_chi(&probe)?;
        let mut model = 0.0;
        for i in 0..n {
            model += 2.0 * (probe_betas[i].conj() * mu0[i]).re;
            for k in 0..n {
                model += (probe_betas[i].conj() * h0.matrix[(i, k)] * probe_betas[k]).re;
            }
        }
        gaussian_residual = gaussian_residual.max((log_chi - model).abs() / (1.0 + log_chi.abs()));
        let rho_probe = fam.evaluate(&probe)?;
        let set_probe = rld(fam, &probe, tol)?;
        let h_probe = fisher_rld(&rho_probe, &set_probe)?;
        h_constant_residual =
            h_constant_residual.max(frob(&(&h_probe.matrix - &h0.matrix)) / h0_scale);
    }

    let hinv = h0.matrix.clone().try_inverse().ok_or_else(|| {
        let rank = crate::matkernel::pinv(&h0.matrix, tol.pinv_rel)
            .map(|pi| pi.rank)
            .unwrap_or(0);
        Error::SingularInformation {
            rank,
            dim: n,
            context: "canonical-parameter audit needs invertible information".into(),
        }
    })?;
    let corrected: Vec<Vec<Complex64>> = povm
        .labels()
        .iter()
        .map(|row| {
            (0..n)
                .map(|k| {
                    (0..n)
                        .map(|i| hinv[(k, i)] * (row[i] - mu0[i]))
                        .sum::<Complex64>()
                })
                .collect()
        })
        .collect();
    let relabeled = povm.relabel(corrected)?;

    let rho = fam.evaluate(p)?;
    let em = error_matrices(&relabeled, &rho, Some(&betas), tol)?;
    // The estimand is beta itself: unit Jacobian, bound H(0)^+.
    let bound = right_bound(&h0, &JacobianMatrix::identity(n), tol)?;
    let check = check_bound(&em.r, &bound, 0.0, tol)?;
    let bias = max_dev(&relabeled.mean_labels(&rho)?, &betas);

    Ok(Theorem3Report {
        h_origin: h0.matrix,
        gaussian_residual,
        h_constant_residual,
        error_matrix: em.r,
        bound: bound.matrix,
        check,
        bias,
    })
}
