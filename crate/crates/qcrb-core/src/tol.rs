//! Central tolerance record.
//!
//! Every threshold used by the numerical kernels is surfaced here so that a
//! scenario can tighten or relax them in one place, and so that tests assert
//! against named constants instead of magic numbers. Defaults are chosen for
//! dimensions up to ~200 in f64 arithmetic.

/// Tolerance bundle threaded through the kernels.
///
/// All `*_rel` fields are relative scales (multiplied by a norm or largest
/// eigenvalue of the operand); the rest are absolute.
#[derive(Debug, Clone, PartialEq)]
pub struct Tolerances {
    /// Relative Hermiticity check: `|m - m^H| <= hermiticity * |m|`.
    pub hermiticity: f64,
    /// Lyapunov support floor, relative to the largest eigenvalue of the
    /// state: eigenvalue-pair sums below `lyapunov_floor_rel * lambda_max`
    /// are treated as off-support.
    pub lyapunov_floor_rel: f64,
    /// Eigenvalue-gap floor for the commutator (antisymmetric) solve,
    /// relative to the state norm.
    pub ald_gap_floor_rel: f64,
    /// Positive semidefiniteness slack: smallest eigenvalue may be this far
    /// below zero (absolute, on unit-scale operators).
    pub psd: f64,
    /// Attainment comparison, relative to the bound scale.
    pub attained_rel: f64,
    /// Log-derivative defining-equation residual ceiling.
    pub residual: f64,
    /// Zero-mean ceiling for log derivatives after adjustment.
    pub zero_mean: f64,
    /// Central-difference step, scaled by `max(1, |parameter|)`.
    pub derivative_step: f64,
    /// Fock-space truncation tail-mass ceiling for strict constructors.
    pub truncation_tail: f64,
    /// Completeness residual ceiling for finite POVMs.
    pub povm_completeness_finite: f64,
    /// Completeness residual ceiling for quadrature-discretized POVMs.
    pub povm_completeness_discretized: f64,
    /// Relative singular/eigenvalue cutoff for pseudo-inverses.
    pub pinv_rel: f64,
    /// Unbiasedness deviation ceiling for estimator checks.
    pub unbiasedness: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            hermiticity: 1e-10,
            lyapunov_floor_rel: 1e-10,
            ald_gap_floor_rel: 1e-8,
            psd: 1e-8,
            attained_rel: 1e-6,
            residual: 1e-8,
            zero_mean: 1e-8,
            derivative_step: 1e-5,
            truncation_tail: 1e-10,
            povm_completeness_finite: 1e-10,
            povm_completeness_discretized: 1e-6,
            pinv_rel: 1e-12,
            unbiasedness: 1e-8,
        }
    }
}

impl Tolerances {
    /// Defaults suitable for the shipped scenarios.
    pub fn standard() -> Self {
        Self::default()
    }
}
