//! Parametric families of density operators.
//!
//! Three structured family forms are supported, plus custom closures:
//!
//! * **real canonical**   `rho(g) = chi^-1 e^{g.s/2} rho0 e^{g.s/2}` with
//!   Hermitian generators `s_k` and real parameters `g`,
//! * **complex canonical** `rho(b, conj b) = chi^-1 e^{b.x^H} rho0 e^{conj(b).x}`
//!   with arbitrary generators `x_k` and complex parameters `b`,
//! * **unitary shift**    `rho(t) = e^{i t.s/hbar} rho0 e^{-i t.s/hbar}` with
//!   Hermitian generators and real parameters.
//!
//! Complex parameters are stored as real pairs `(gamma, theta)` with
//! `beta = gamma/2 + i theta`. The holomorphic derivative operators are then
//! `d/d beta = d/d gamma - (i/2) d/d theta` and
//! `d/d conj(beta) = d/d gamma + (i/2) d/d theta` (the unique choice with
//! `d beta / d beta = 1` and `d conj(beta) / d beta = 0`).
//!
//! Derivatives are analytic where the generators mutually commute and
//! central-difference otherwise; both paths agree to ~1e-10 on the shipped
//! families and are cross-checked in tests.

use std::sync::Arc;

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matkernel::{
    cplx, frob, herm_deviation, hermitize, matrix_exp, require_hermitian, trace, CMatrix, CVector,
};
use crate::tol::Tolerances;

/// A validated density operator: Hermitian, unit trace, PSD within tolerance.
#[derive(Debug, Clone)]
pub struct DensityOperator {
    mat: CMatrix,
    dim: usize,
}

impl DensityOperator {
    /// Validates Hermiticity (relative `tol.hermiticity`), unit trace
    /// (absolute 1e-8) and positivity (min eigenvalue >= `-tol.psd`).
    pub fn new(mat: CMatrix, tol: &Tolerances) -> Result<Self> {
        if !mat.is_square() {
            return Err(Error::ShapeMismatch {
                context: format!("density operator {}x{} not square", mat.nrows(), mat.ncols()),
            });
        }
        require_hermitian(&mat, tol.hermiticity)?;
        let tr = trace(&mat);
        if (tr - cplx(1.0, 0.0)).norm() > 1e-8 {
            return Err(Error::OutOfDomain {
                context: format!("density operator trace {} differs from 1", tr),
            });
        }
        let mat = hermitize(&mat);
        let check = crate::matkernel::is_psd(&mat, tol.psd)?;
        if !check.psd {
            return Err(Error::OutOfDomain {
                context: format!(
                    "density operator not PSD (min eigenvalue {:.3e})",
                    check.min_eig
                ),
            });
        }
        let dim = mat.nrows();
        Ok(DensityOperator { mat, dim })
    }

    /// The underlying matrix.
    pub fn matrix(&self) -> &CMatrix {
        &self.mat
    }

    /// Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Expectation `Tr(rho op)`.
    pub fn expect(&self, op: &CMatrix) -> Complex64 {
        trace(&(&self.mat * op))
    }
}

/// Whether a family is parametrized by real or complex coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParamKind {
    Real,
    Complex,
}

/// A point in parameter space.
///
/// Complex points hold the real pairs `(gamma, theta)` with
/// `beta_k = gamma_k/2 + i theta_k`; real points hold the coordinates
/// directly.
#[derive(Debug, Clone, PartialEq)]
pub enum ParamPoint {
    Real(Vec<f64>),
    Complex { gamma: Vec<f64>, theta: Vec<f64> },
}

impl ParamPoint {
    /// Complex point from `beta` values.
    pub fn from_betas(betas: &[Complex64]) -> Self {
        ParamPoint::Complex {
            gamma: betas.iter().map(|b| 2.0 * b.re).collect(),
            theta: betas.iter().map(|b| b.im).collect(),
        }
    }

    /// Origin of the given kind and arity.
    pub fn origin(kind: ParamKind, arity: usize) -> Self {
        match kind {
            ParamKind::Real => ParamPoint::Real(vec![0.0; arity]),
            ParamKind::Complex => ParamPoint::Complex {
                gamma: vec![0.0; arity],
                theta: vec![0.0; arity],
            },
        }
    }

    pub fn kind(&self) -> ParamKind {
        match self {
            ParamPoint::Real(_) => ParamKind::Real,
            ParamPoint::Complex { .. } => ParamKind::Complex,
        }
    }

    /// Number of parameters (complex parameters count once).
    pub fn arity(&self) -> usize {
        match self {
            ParamPoint::Real(v) => v.len(),
            ParamPoint::Complex { gamma, .. } => gamma.len(),
        }
    }

    /// `beta_k = gamma_k/2 + i theta_k` for complex points.
    pub fn beta(&self, k: usize) -> Result<Complex64> {
        match self {
            ParamPoint::Complex { gamma, theta } => Ok(cplx(gamma[k] / 2.0, theta[k])),
            ParamPoint::Real(_) => Err(Error::KindMismatch {
                context: "beta() on a real parameter point".into(),
            }),
        }
    }

    /// All betas for complex points.
    pub fn betas(&self) -> Result<Vec<Complex64>> {
        (0..self.arity()).map(|k| self.beta(k)).collect()
    }

    /// The flattened real coordinates: real points as-is, complex points as
    /// `[gamma_1..gamma_n, theta_1..theta_n]`.
    pub fn real_coords(&self) -> Vec<f64> {
        match self {
            ParamPoint::Real(v) => v.clone(),
            ParamPoint::Complex { gamma, theta } => {
                let mut out = gamma.clone();
                out.extend_from_slice(theta);
                out
            }
        }
    }

    /// Number of real coordinates (`arity` for real, `2*arity` for complex).
    pub fn real_dim(&self) -> usize {
        match self {
            ParamPoint::Real(v) => v.len(),
            ParamPoint::Complex { gamma, .. } => 2 * gamma.len(),
        }
    }

    /// Copy with the `i`-th real coordinate shifted by `h`.
    pub fn shifted(&self, i: usize, h: f64) -> Self {
        let mut out = self.clone();
        match &mut out {
            ParamPoint::Real(v) => v[i] += h,
            ParamPoint::Complex { gamma, theta } => {
                let n = gamma.len();
                if i < n {
                    gamma[i] += h;
                } else {
                    theta[i - n] += h;
                }
            }
        }
        out
    }

    /// Value of the `i`-th real coordinate.
    pub fn real_coord(&self, i: usize) -> f64 {
        match self {
            ParamPoint::Real(v) => v[i],
            ParamPoint::Complex { gamma, theta } => {
                let n = gamma.len();
                if i < n {
                    gamma[i]
                } else {
                    theta[i - n]
                }
            }
        }
    }
}

/// A differentiation direction on a family.
///
/// `Real` applies to real-kind families; the others apply to complex-kind
/// families, where `Gamma`/`Theta` are the stored real coordinates and
/// `Beta`/`BetaBar` are the Wirtinger combinations.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DiffDirection {
    Real(usize),
    Gamma(usize),
    Theta(usize),
    Beta(usize),
    BetaBar(usize),
}

/// How family derivatives are computed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DerivativeMode {
    /// Closed-form derivative (available when the generators mutually
    /// commute).
    Analytic,
    /// Central differences on the evaluation map.
    CentralDifference,
}

/// A set of generator operators with cached structure flags.
#[derive(Debug, Clone)]
pub struct GeneratorSet {
    ops: Vec<CMatrix>,
    dim: usize,
    all_hermitian: bool,
    commuting: bool,
}

impl GeneratorSet {
    /// Builds the set, recording Hermiticity and mutual commutation.
    pub fn new(ops: Vec<CMatrix>) -> Result<Self> {
        if ops.is_empty() {
            return Err(Error::ShapeMismatch {
                context: "generator set must not be empty".into(),
            });
        }
        let dim = ops[0].nrows();
        for (i, op) in ops.iter().enumerate() {
            if !op.is_square() || op.nrows() != dim {
                return Err(Error::ShapeMismatch {
                    context: format!("generator {i} has shape {}x{}", op.nrows(), op.ncols()),
                });
            }
        }
        let all_hermitian = ops.iter().all(|op| herm_deviation(op) <= 1e-10);
        let mut commuting = true;
        for i in 0..ops.len() {
            for j in (i + 1)..ops.len() {
                let scale = (frob(&ops[i]) * frob(&ops[j])).max(1.0);
                let comm = crate::matkernel::commutator(&ops[i], &ops[j]);
                if frob(&comm) > 1e-10 * scale {
                    commuting = false;
                }
            }
        }
        Ok(GeneratorSet {
            ops,
            dim,
            all_hermitian,
            commuting,
        })
    }

    pub fn ops(&self) -> &[CMatrix] {
        &self.ops
    }

    pub fn len(&self) -> usize {
        self.ops.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ops.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// True when every generator is Hermitian within 1e-10 (relative).
    pub fn all_hermitian(&self) -> bool {
        self.all_hermitian
    }

    /// True when the generators mutually commute within 1e-10 (relative).
    pub fn commuting(&self) -> bool {
        self.commuting
    }

    /// Errors unless all generators are Hermitian.
    pub fn require_hermitian(&self) -> Result<()> {
        for (index, op) in self.ops.iter().enumerate() {
            let deviation = herm_deviation(op);
            if deviation > 1e-10 {
                return Err(Error::NonHermitianGenerator { index, deviation });
            }
        }
        Ok(())
    }
}

type EvalFn = dyn Fn(&ParamPoint) -> Result<DensityOperator> + Send + Sync;

#[derive(Clone)]
enum FamilyForm {
    CanonicalReal,
    CanonicalComplex,
    UnitaryShift,
    Custom(Arc<EvalFn>),
}

impl std::fmt::Debug for FamilyForm {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl FamilyForm {
    fn name(&self) -> &'static str {
        match self {
            FamilyForm::CanonicalReal => "canonical_real",
            FamilyForm::CanonicalComplex => "canonical_complex",
            FamilyForm::UnitaryShift => "unitary_shift",
            FamilyForm::Custom(_) => "custom",
        }
    }
}

/// A parametric family of density operators.
#[derive(Debug, Clone)]
pub struct StateFamily {
    form: FamilyForm,
    kind: ParamKind,
    arity: usize,
    dim: usize,
    hbar: f64,
    derivative_mode: DerivativeMode,
    rho0: Option<DensityOperator>,
    gens: Option<GeneratorSet>,
    tol: Tolerances,
}

impl StateFamily {
    /// Real canonical family `chi^-1 e^{g.s/2} rho0 e^{g.s/2}` with Hermitian
    /// generators.
    pub fn canonical_real(
        rho0: DensityOperator,
        gens: GeneratorSet,
        tol: &Tolerances,
    ) -> Result<Self> {
        gens.require_hermitian()?;
        Self::structured(FamilyForm::CanonicalReal, ParamKind::Real, rho0, gens, 1.0, tol)
    }

    /// Complex canonical family `chi^-1 e^{b.x^H} rho0 e^{conj(b).x}`.
    pub fn canonical_complex(
        rho0: DensityOperator,
        gens: GeneratorSet,
        tol: &Tolerances,
    ) -> Result<Self> {
        Self::structured(
            FamilyForm::CanonicalComplex,
            ParamKind::Complex,
            rho0,
            gens,
            1.0,
            tol,
        )
    }

    /// Unitary shift family `e^{i t.s/hbar} rho0 e^{-i t.s/hbar}` with
    /// Hermitian generators.
    pub fn unitary_shift(
        rho0: DensityOperator,
        gens: GeneratorSet,
        hbar: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        gens.require_hermitian()?;
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::ConfigInvalid {
                context: format!("hbar must be positive and finite, got {hbar}"),
            });
        }
        Self::structured(FamilyForm::UnitaryShift, ParamKind::Real, rho0, gens, hbar, tol)
    }

    fn structured(
        form: FamilyForm,
        kind: ParamKind,
        rho0: DensityOperator,
        gens: GeneratorSet,
        hbar: f64,
        tol: &Tolerances,
    ) -> Result<Self> {
        if gens.dim() != rho0.dim() {
            return Err(Error::ShapeMismatch {
                context: format!(
                    "generators act on dim {}, rho0 has dim {}",
                    gens.dim(),
                    rho0.dim()
                ),
            });
        }
        let derivative_mode = if gens.commuting() {
            DerivativeMode::Analytic
        } else {
            DerivativeMode::CentralDifference
        };
        Ok(StateFamily {
            form,
            kind,
            arity: gens.len(),
            dim: rho0.dim(),
            hbar,
            derivative_mode,
            rho0: Some(rho0),
            gens: Some(gens),
            tol: tol.clone(),
        })
    }

    /// Family defined by an arbitrary evaluation closure; derivatives are
    /// always central-difference.
    pub fn custom(
        dim: usize,
        arity: usize,
        kind: ParamKind,
        hbar: f64,
        eval: Arc<EvalFn>,
        tol: &Tolerances,
    ) -> Self {
        StateFamily {
            form: FamilyForm::Custom(eval),
            kind,
            arity,
            dim,
            hbar,
            derivative_mode: DerivativeMode::CentralDifference,
            rho0: None,
            gens: None,
            tol: tol.clone(),
        }
    }

    pub fn kind(&self) -> ParamKind {
        self.kind
    }

    pub fn arity(&self) -> usize {
        self.arity
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn hbar(&self) -> f64 {
        self.hbar
    }

    pub fn derivative_mode(&self) -> DerivativeMode {
        self.derivative_mode
    }

    /// Structured-form name: `canonical_real`, `canonical_complex`,
    /// `unitary_shift` or `custom`.
    pub fn form_name(&self) -> &'static str {
        self.form.name()
    }

    /// Reference state of structured families.
    pub fn rho0(&self) -> Option<&DensityOperator> {
        self.rho0.as_ref()
    }

    /// Generators of structured families.
    pub fn generators(&self) -> Option<&GeneratorSet> {
        self.gens.as_ref()
    }

    fn check_point(&self, p: &ParamPoint) -> Result<()> {
        if p.kind() != self.kind {
            return Err(Error::KindMismatch {
                context: format!(
                    "family expects {:?} parameters, point is {:?}",
                    self.kind,
                    p.kind()
                ),
            });
        }
        if p.arity() != self.arity {
            return Err(Error::ShapeMismatch {
                context: format!("family arity {}, point arity {}", self.arity, p.arity()),
            });
        }
        Ok(())
    }

    /// Evaluates the family at a parameter point.
    pub fn evaluate(&self, p: &ParamPoint) -> Result<DensityOperator> {
        self.check_point(p)?;
        match &self.form {
            FamilyForm::Custom(eval) => eval(p),
            FamilyForm::CanonicalReal => {
                let (m, chi) = self.canonical_real_raw(p)?;
                DensityOperator::new(m.unscale(chi), &self.tol)
            }
            FamilyForm::CanonicalComplex => {
                let (m, chi) = self.canonical_complex_raw(p)?;
                DensityOperator::new(m.unscale(chi), &self.tol)
            }
            FamilyForm::UnitaryShift => {
                let rho0 = self.rho0.as_ref().unwrap();
                let gens = self.gens.as_ref().unwrap();
                let coords = p.real_coords();
                let mut exponent = CMatrix::zeros(self.dim, self.dim);
                for (k, s) in gens.ops().iter().enumerate() {
                    exponent += s.map(|z| z * cplx(0.0, coords[k] / self.hbar));
                }
                let u = matrix_exp(&exponent)?;
                let m = &u * rho0.matrix() * u.adjoint();
                DensityOperator::new(m, &self.tol)
            }
        }
    }

    /// Unnormalized canonical-real matrix and its trace `chi`.
    fn canonical_real_raw(&self, p: &ParamPoint) -> Result<(CMatrix, f64)> {
        let rho0 = self.rho0.as_ref().unwrap();
        let gens = self.gens.as_ref().unwrap();
        let coords = p.real_coords();
        let mut exponent = CMatrix::zeros(self.dim, self.dim);
        for (k, s) in gens.ops().iter().enumerate() {
            exponent += s.scale(coords[k] / 2.0);
        }
        let a = matrix_exp(&exponent)?;
        let m = &a * rho0.matrix() * &a;
        finite_chi(&m)
    }

    /// Unnormalized canonical-complex matrix and its trace `chi`.
    fn canonical_complex_raw(&self, p: &ParamPoint) -> Result<(CMatrix, f64)> {
        let rho0 = self.rho0.as_ref().unwrap();
        let gens = self.gens.as_ref().unwrap();
        let betas = p.betas()?;
        let mut exponent = CMatrix::zeros(self.dim, self.dim);
        for (k, x) in gens.ops().iter().enumerate() {
            exponent += x.adjoint().map(|z| z * betas[k]);
        }
        let l = matrix_exp(&exponent)?;
        let m = &l * rho0.matrix() * l.adjoint();
        finite_chi(&m)
    }

    /// Normalization `chi` of a canonical family at a point.
    ///
    /// Errors with `KindMismatch` for shift/custom families (their
    /// normalization is identically 1 and carries no information).
    pub fn chi(&self, p: &ParamPoint) -> Result<f64> {
        self.check_point(p)?;
        match &self.form {
            FamilyForm::CanonicalReal => Ok(self.canonical_real_raw(p)?.1),
            FamilyForm::CanonicalComplex => Ok(self.canonical_complex_raw(p)?.1),
            _ => Err(Error::KindMismatch {
                context: format!("chi is defined for canonical families, not {}", self.form.name()),
            }),
        }
    }

    /// The generating function (log-normalization) of a canonical family.
    pub fn generating_function(&self) -> Result<GeneratingFunction<'_>> {
        match &self.form {
            FamilyForm::CanonicalReal | FamilyForm::CanonicalComplex => {
                Ok(GeneratingFunction { fam: self })
            }
            _ => Err(Error::KindMismatch {
                context: format!(
                    "generating function is defined for canonical families, not {}",
                    self.form.name()
                ),
            }),
        }
    }
}

fn finite_chi(m: &CMatrix) -> Result<(CMatrix, f64)> {
    let chi = trace(m).re;
    if !chi.is_finite() || chi <= f64::MIN_POSITIVE {
        return Err(Error::DivergentChi { chi });
    }
    if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::OutOfDomain {
            context: "canonical family evaluation produced non-finite entries".into(),
        });
    }
    Ok((m.clone(), chi))
}

/// Log-normalization `ln chi` of a canonical family, with numerical
/// derivatives in the appropriate coordinates.
#[derive(Debug)]
pub struct GeneratingFunction<'a> {
    fam: &'a StateFamily,
}

impl GeneratingFunction<'_> {
    pub fn chi(&self, p: &ParamPoint) -> Result<f64> {
        self.fam.chi(p)
    }

    pub fn log_chi(&self, p: &ParamPoint) -> Result<f64> {
        Ok(self.fam.chi(p)?.ln())
    }

    /// First log-derivative per parameter: `d ln chi / d conj(beta)_k` for
    /// complex families, `d ln chi / d gamma_k` for real families.
    ///
    /// These are the means `mu_k` of the (right) logarithmic derivatives.
    pub fn mu(&self, p: &ParamPoint) -> Result<Vec<Complex64>> {
        let n = self.fam.arity();
        let mut out = Vec::with_capacity(n);
        match self.fam.kind() {
            ParamKind::Real => {
                for k in 0..n {
                    let h = fd_step(self.fam.tol.derivative_step, p.real_coord(k));
                    let d = self.central_log_chi(p, k, h)?;
                    out.push(cplx(d, 0.0));
                }
            }
            ParamKind::Complex => {
                // d/d conj(beta) = d/d gamma + (i/2) d/d theta
                for k in 0..n {
                    let hg = fd_step(self.fam.tol.derivative_step, p.real_coord(k));
                    let ht = fd_step(self.fam.tol.derivative_step, p.real_coord(n + k));
                    let dg = self.central_log_chi(p, k, hg)?;
                    let dt = self.central_log_chi(p, n + k, ht)?;
                    out.push(cplx(dg, dt / 2.0));
                }
            }
        }
        Ok(out)
    }

    fn central_log_chi(&self, p: &ParamPoint, coord: usize, h: f64) -> Result<f64> {
        let fp = self.log_chi(&p.shifted(coord, h))?;
        let fm = self.log_chi(&p.shifted(coord, -h))?;
        let d = (fp - fm) / (2.0 * h);
        if !d.is_finite() {
            return Err(Error::DerivativeFailure {
                context: format!("ln chi derivative along real coordinate {coord} not finite"),
            });
        }
        Ok(d)
    }

    fn second_log_chi(&self, p: &ParamPoint, i: usize, j: usize, h: f64) -> Result<f64> {
        let v = if i == j {
            let f0 = self.log_chi(p)?;
            let fp = self.log_chi(&p.shifted(i, h))?;
            let fm = self.log_chi(&p.shifted(i, -h))?;
            (fp - 2.0 * f0 + fm) / (h * h)
        } else {
            let fpp = self.log_chi(&p.shifted(i, h).shifted(j, h))?;
            let fpm = self.log_chi(&p.shifted(i, h).shifted(j, -h))?;
            let fmp = self.log_chi(&p.shifted(i, -h).shifted(j, h))?;
            let fmm = self.log_chi(&p.shifted(i, -h).shifted(j, -h))?;
            (fpp - fpm - fmp + fmm) / (4.0 * h * h)
        };
        if !v.is_finite() {
            return Err(Error::DerivativeFailure {
                context: format!("ln chi second derivative ({i},{j}) not finite"),
            });
        }
        Ok(v)
    }

    /// Log-Hessian: `d^2 ln chi / d conj(beta)_i d beta_k` for complex
    /// families (Hermitian), `d^2 ln chi / d gamma_i d gamma_k` for real
    /// families (symmetric).
    ///
    /// Second differences use a step of 10x the first-derivative step, the
    /// usual optimum trade-off for second-order central stencils in f64.
    pub fn log_hessian(&self, p: &ParamPoint) -> Result<CMatrix> {
        let n = self.fam.arity();
        let h = self.fam.tol.derivative_step * 10.0;
        let mut out = CMatrix::zeros(n, n);
        match self.fam.kind() {
            ParamKind::Real => {
                for i in 0..n {
                    for k in i..n {
                        let hi = fd_step(h, p.real_coord(i));
                        let v = self.second_log_chi(p, i, k, hi)?;
                        out[(i, k)] = cplx(v, 0.0);
                        out[(k, i)] = cplx(v, 0.0);
                    }
                }
            }
            ParamKind::Complex => {
                // (d_gamma_i + (i/2) d_theta_i)(d_gamma_k - (i/2) d_theta_k):
                // real part  d2_gg + (1/4) d2_tt,
                // imag part  (1/2)(d2_tg - d2_gt) (zero on the diagonal).
                for i in 0..n {
                    for k in 0..n {
                        let hi = fd_step(h, p.real_coord(i).abs().max(p.real_coord(n + i).abs()));
                        let gg = self.second_log_chi(p, i, k, hi)?;
                        let tt = self.second_log_chi(p, n + i, n + k, hi)?;
                        let tg = self.second_log_chi(p, n + i, k, hi)?;
                        let gt = self.second_log_chi(p, i, n + k, hi)?;
                        out[(i, k)] = cplx(gg + tt / 4.0, (tg - gt) / 2.0);
                    }
                }
                out = hermitize(&out);
            }
        }
        Ok(out)
    }
}

/// Central-difference step scaled by the coordinate magnitude.
fn fd_step(base: f64, coord: f64) -> f64 {
    base * coord.abs().max(1.0)
}

/// Derivative of the family along a direction, as a matrix.
///
/// `Real`/`Gamma`/`Theta` directions give Hermitian derivatives;
/// `Beta`/`BetaBar` give the Wirtinger combinations (adjoints of each other).
/// Uses the family's analytic mode when available, otherwise central
/// differences with step `tol.derivative_step * max(1, |coordinate|)`.
pub fn family_derivative(fam: &StateFamily, p: &ParamPoint, dir: DiffDirection) -> Result<CMatrix> {
    validate_direction(fam, p, dir)?;
    let h = default_step(fam, p, dir);
    family_derivative_with_step(fam, p, dir, h)
}

/// Step size for a validated direction.
fn default_step(fam: &StateFamily, p: &ParamPoint, dir: DiffDirection) -> f64 {
    let coord = match dir {
        DiffDirection::Real(k) | DiffDirection::Gamma(k) => p.real_coord(k),
        DiffDirection::Theta(k) => p.real_coord(p.arity() + k),
        DiffDirection::Beta(k) | DiffDirection::BetaBar(k) => {
            let n = p.arity();
            p.real_coord(k).abs().max(p.real_coord(n + k).abs())
        }
    };
    fd_step(fam.tol.derivative_step, coord)
}

/// As [`family_derivative`] with an explicit central-difference step
/// (analytic fast paths are bypassed) — used by step-consistency tests.
pub fn family_derivative_with_step(
    fam: &StateFamily,
    p: &ParamPoint,
    dir: DiffDirection,
    h: f64,
) -> Result<CMatrix> {
    validate_direction(fam, p, dir)?;
    if fam.derivative_mode() == DerivativeMode::Analytic && h == default_step(fam, p, dir) {
        if let Some(d) = analytic_derivative(fam, p, dir)? {
            return Ok(d);
        }
    }
    numeric_derivative(fam, p, dir, h)
}

fn validate_direction(fam: &StateFamily, p: &ParamPoint, dir: DiffDirection) -> Result<()> {
    fam.check_point(p)?;
    let (needs, k) = match dir {
        DiffDirection::Real(k) => (ParamKind::Real, k),
        DiffDirection::Gamma(k)
        | DiffDirection::Theta(k)
        | DiffDirection::Beta(k)
        | DiffDirection::BetaBar(k) => (ParamKind::Complex, k),
    };
    if fam.kind() != needs {
        return Err(Error::KindMismatch {
            context: format!("direction {dir:?} on a {:?}-kind family", fam.kind()),
        });
    }
    if k >= fam.arity() {
        return Err(Error::ShapeMismatch {
            context: format!("direction index {k} out of range for arity {}", fam.arity()),
        });
    }
    Ok(())
}

/// Closed-form derivatives for structured families with commuting
/// generators. Returns `None` when no closed form applies.
fn analytic_derivative(
    fam: &StateFamily,
    p: &ParamPoint,
    dir: DiffDirection,
) -> Result<Option<CMatrix>> {
    let gens = match fam.generators() {
        Some(g) if g.commuting() => g,
        _ => return Ok(None),
    };
    let rho = fam.evaluate(p)?;
    let rho_m = rho.matrix();
    match (&fam.form, dir) {
        (FamilyForm::CanonicalReal, DiffDirection::Real(k)) => {
            // d rho = (s_k rho + rho s_k)/2 - <s_k> rho
            let s = &gens.ops()[k];
            let mu = rho.expect(s);
            let d = (s * rho_m + rho_m * s).scale(0.5) - rho_m.map(|z| z * mu);
            Ok(Some(hermitize(&d)))
        }
        (FamilyForm::UnitaryShift, DiffDirection::Real(k)) => {
            // d rho = (i/hbar) [s_k, rho]
            let s = &gens.ops()[k];
            let comm = crate::matkernel::commutator(s, rho_m);
            Ok(Some(hermitize(&comm.map(|z| z * cplx(0.0, 1.0 / fam.hbar)))))
        }
        (FamilyForm::CanonicalComplex, dir) => {
            // With commuting x's:
            //   d rho / d conj(beta)_k = rho (x_k - mu_k),
            //   d rho / d beta_k       = (x_k^H - conj(mu_k)) rho,
            // and Gamma/Theta combinations thereof.
            let k = match dir {
                DiffDirection::Gamma(k)
                | DiffDirection::Theta(k)
                | DiffDirection::Beta(k)
                | DiffDirection::BetaBar(k) => k,
                DiffDirection::Real(_) => unreachable!("validated above"),
            };
            let x = &gens.ops()[k];
            let mu = rho.expect(x);
            let right = rho_m * (x - CMatrix::identity(fam.dim, fam.dim).map(|z| z * mu));
            let left = right.adjoint();
            let d = match dir {
                DiffDirection::BetaBar(_) => right,
                DiffDirection::Beta(_) => left,
                DiffDirection::Gamma(_) => hermitize(&(left + right).scale(0.5)).scale(1.0),
                DiffDirection::Theta(_) => {
                    hermitize(&(left - right).map(|z| z * cplx(0.0, 1.0)))
                }
                DiffDirection::Real(_) => unreachable!(),
            };
            Ok(Some(d))
        }
        _ => Ok(None),
    }
}

fn numeric_derivative(
    fam: &StateFamily,
    p: &ParamPoint,
    dir: DiffDirection,
    h: f64,
) -> Result<CMatrix> {
    let n = fam.arity();
    let central = |coord: usize| -> Result<CMatrix> {
        let fp = fam.evaluate(&p.shifted(coord, h))?;
        let fm = fam.evaluate(&p.shifted(coord, -h))?;
        let d = (fp.matrix() - fm.matrix()).unscale(2.0 * h);
        if d.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::DerivativeFailure {
                context: format!("central difference along coordinate {coord} not finite"),
            });
        }
        Ok(d)
    };
    match dir {
        DiffDirection::Real(k) | DiffDirection::Gamma(k) => central(k),
        DiffDirection::Theta(k) => central(n + k),
        DiffDirection::Beta(k) => {
            // d/d beta = d/d gamma - (i/2) d/d theta
            let dg = central(k)?;
            let dt = central(n + k)?;
            Ok(dg - dt.map(|z| z * cplx(0.0, 0.5)))
        }
        DiffDirection::BetaBar(k) => {
            let dg = central(k)?;
            let dt = central(n + k)?;
            Ok(dg + dt.map(|z| z * cplx(0.0, 0.5)))
        }
    }
}

/// Ladder and quadrature operators on a truncated Fock space.
#[derive(Debug, Clone)]
pub struct FockOps {
    /// Annihilation operator `a`.
    pub a: CMatrix,
    /// Creation operator `a^H`.
    pub adag: CMatrix,
    /// Number operator `a^H a`.
    pub n: CMatrix,
    /// Position-like quadrature `(a + a^H)/sqrt(2)`.
    pub x: CMatrix,
    /// Momentum-like quadrature `i(a^H - a)/sqrt(2)`.
    pub p: CMatrix,
}

/// Builds truncated Fock-space operators; `dim >= 2` required.
pub fn fock_ops(dim: usize) -> Result<FockOps> {
    if dim < 2 {
        return Err(Error::DimensionTooSmall { dim, min: 2 });
    }
    let mut a = CMatrix::zeros(dim, dim);
    for m in 1..dim {
        a[(m - 1, m)] = cplx((m as f64).sqrt(), 0.0);
    }
    let adag = a.adjoint();
    let n = &adag * &a;
    let x = (&a + &adag).unscale(2.0f64.sqrt());
    let p = (&adag - &a).map(|z| z * cplx(0.0, 1.0)).unscale(2.0f64.sqrt());
    Ok(FockOps { a, adag, n, x, p })
}

/// Coherent state `|alpha>` truncated to `dim` levels.
///
/// Strict: errors with `TruncationInsufficient` (including the dimension that
/// would suffice) when the Poisson tail mass beyond the truncation exceeds
/// `tol.truncation_tail`. The kept amplitudes are renormalized.
pub fn coherent_state(dim: usize, alpha: Complex64, tol: &Tolerances) -> Result<DensityOperator> {
    if dim < 1 {
        return Err(Error::DimensionTooSmall { dim, min: 1 });
    }
    let nbar = alpha.norm_sqr();
    // Poisson(|alpha|^2) masses; tail = 1 - sum_{m<dim}.
    let mass = |m: usize| -> f64 {
        // exp(-nbar) nbar^m / m! computed in log space for stability.
        if nbar == 0.0 {
            return if m == 0 { 1.0 } else { 0.0 };
        }
        let mut ln = -nbar + (m as f64) * nbar.ln();
        for j in 1..=m {
            ln -= (j as f64).ln();
        }
        ln.exp()
    };
    let mut kept = 0.0;
    for m in 0..dim {
        kept += mass(m);
    }
    let tail = (1.0 - kept).max(0.0);
    if tail > tol.truncation_tail {
        let mut required_dim = dim;
        let mut t = tail;
        while t > tol.truncation_tail && required_dim < dim + 100_000 {
            t -= mass(required_dim);
            required_dim += 1;
        }
        return Err(Error::TruncationInsufficient {
            tail,
            tol: tol.truncation_tail,
            required_dim,
        });
    }
    let mut v = CVector::zeros(dim);
    // c_m = e^{-|a|^2/2} alpha^m / sqrt(m!) via the stable recurrence
    // c_m = c_{m-1} * alpha / sqrt(m).
    let mut c = cplx((-nbar / 2.0).exp(), 0.0);
    v[0] = c;
    for m in 1..dim {
        c = c * alpha / cplx((m as f64).sqrt(), 0.0);
        v[m] = c;
    }
    let norm = v.norm();
    v.unscale_mut(norm);
    let mat = &v * v.adjoint();
    DensityOperator::new(mat, tol)
}

/// Thermal state with mean occupation `nbar`, truncated and renormalized.
///
/// Truncation is renormalized rather than rejected: the resulting operator is
/// exactly a Gibbs-like diagonal state on the truncated space, which is what
/// the canonical-family machinery needs for internal consistency.
pub fn thermal_state(dim: usize, nbar: f64, tol: &Tolerances) -> Result<DensityOperator> {
    if dim < 1 {
        return Err(Error::DimensionTooSmall { dim, min: 1 });
    }
    if !(nbar.is_finite() && nbar >= 0.0) {
        return Err(Error::ConfigInvalid {
            context: format!("thermal nbar must be nonnegative, got {nbar}"),
        });
    }
    let q = nbar / (1.0 + nbar);
    let mut diag = CVector::zeros(dim);
    let mut w = 1.0;
    let mut total = 0.0;
    for m in 0..dim {
        diag[m] = cplx(w, 0.0);
        total += w;
        w *= q;
    }
    let mat = CMatrix::from_diagonal(&diag).unscale(total);
    DensityOperator::new(mat, tol)
}

/// Fock basis state `|m><m|`.
pub fn pure_fock(dim: usize, m: usize, tol: &Tolerances) -> Result<DensityOperator> {
    if m >= dim {
        return Err(Error::ShapeMismatch {
            context: format!("Fock level {m} outside dimension {dim}"),
        });
    }
    let mut mat = CMatrix::zeros(dim, dim);
    mat[(m, m)] = cplx(1.0, 0.0);
    DensityOperator::new(mat, tol)
}

/// Maximally mixed state `I/dim`.
pub fn maximally_mixed(dim: usize, tol: &Tolerances) -> Result<DensityOperator> {
    if dim < 1 {
        return Err(Error::DimensionTooSmall { dim, min: 1 });
    }
    DensityOperator::new(CMatrix::identity(dim, dim).unscale(dim as f64), tol)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn tols() -> Tolerances {
        Tolerances::default()
    }

    #[test]
    fn density_operator_validation() {
        let ok = CMatrix::identity(2, 2).unscale(2.0);
        assert!(DensityOperator::new(ok, &tols()).is_ok());
        let bad_trace = CMatrix::identity(2, 2);
        assert!(DensityOperator::new(bad_trace, &tols()).is_err());
        let mut neg = CMatrix::zeros(2, 2);
        neg[(0, 0)] = cplx(1.5, 0.0);
        neg[(1, 1)] = cplx(-0.5, 0.0);
        assert!(DensityOperator::new(neg, &tols()).is_err());
    }

    #[test]
    fn param_point_beta_convention() {
        let p = ParamPoint::Complex {
            gamma: vec![0.6],
            theta: vec![0.25],
        };
        let b = p.beta(0).unwrap();
        assert_abs_diff_eq!(b.re, 0.3, epsilon = 1e-15);
        assert_abs_diff_eq!(b.im, 0.25, epsilon = 1e-15);
        let roundtrip = ParamPoint::from_betas(&[b]);
        assert_eq!(roundtrip, p);
    }

    #[test]
    fn fock_ops_ladder_algebra() {
        let ops = fock_ops(12).unwrap();
        // [a, a^H] = I away from the truncation corner.
        let ccr = crate::matkernel::commutator(&ops.a, &ops.adag);
        for m in 0..11 {
            assert_abs_diff_eq!(ccr[(m, m)].re, 1.0, epsilon = 1e-14);
        }
        assert_abs_diff_eq!(ccr[(11, 11)].re, -(11.0), epsilon = 1e-12);
        // n = a^H a has integer spectrum by construction.
        for m in 0..12 {
            assert_abs_diff_eq!(ops.n[(m, m)].re, m as f64, epsilon = 1e-14);
        }
        // [x, p] = i I away from the corner.
        let xp = crate::matkernel::commutator(&ops.x, &ops.p);
        for m in 0..10 {
            assert_abs_diff_eq!(xp[(m, m)].im, 1.0, epsilon = 1e-13);
        }
    }

    #[test]
    fn coherent_state_moments_match_series() {
        // Oracle: Poisson series for <n> and <a> of |alpha>.
        let alpha = cplx(1.2, -0.3);
        let dim = 40;
        let rho = coherent_state(dim, alpha, &tols()).unwrap();
        let ops = fock_ops(dim).unwrap();
        let mean_a = rho.expect(&ops.a);
        assert_abs_diff_eq!(mean_a.re, alpha.re, epsilon = 1e-10);
        assert_abs_diff_eq!(mean_a.im, alpha.im, epsilon = 1e-10);
        let mean_n = rho.expect(&ops.n);
        assert_abs_diff_eq!(mean_n.re, alpha.norm_sqr(), epsilon = 1e-10);
    }

    #[test]
    fn coherent_state_truncation_strict() {
        let err = coherent_state(4, cplx(2.0, 0.0), &tols()).unwrap_err();
        match err {
            Error::TruncationInsufficient { required_dim, tail, .. } => {
                assert!(tail > 1e-10);
                assert!(required_dim > 4);
                // The reported dimension must actually suffice.
                assert!(coherent_state(required_dim, cplx(2.0, 0.0), &tols()).is_ok());
            }
            other => panic!("expected TruncationInsufficient, got {other:?}"),
        }
    }

    #[test]
    fn thermal_state_geometric_weights() {
        let rho = thermal_state(16, 1.0, &tols()).unwrap();
        // Renormalized geometric distribution with ratio 1/2.
        let r = rho.matrix()[(1, 1)].re / rho.matrix()[(0, 0)].re;
        assert_abs_diff_eq!(r, 0.5, epsilon = 1e-12);
        assert_abs_diff_eq!(trace(rho.matrix()).re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_real_qubit_logistic() {
        // rho0 = I/2, s = sigma_z: rho(g) = diag(e^{g/2}, e^{-g/2}) / (2 cosh(g/2)).
        let sz = CMatrix::from_diagonal(&CVector::from_vec(vec![cplx(1.0, 0.0), cplx(-1.0, 0.0)]));
        let fam = StateFamily::canonical_real(
            maximally_mixed(2, &tols()).unwrap(),
            GeneratorSet::new(vec![sz]).unwrap(),
            &tols(),
        )
        .unwrap();
        let rho = fam.evaluate(&ParamPoint::Real(vec![1.0])).unwrap();
        // The two half-exponentials combine: p_0 = e^g / (e^g + e^-g).
        let expect0 = 1.0 / (1.0 + (-2.0f64).exp());
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re, expect0, epsilon = 1e-12);
        assert_abs_diff_eq!(rho.matrix()[(0, 0)].re + rho.matrix()[(1, 1)].re, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn canonical_complex_coherent_family() {
        // x = a, rho0 = vacuum: the family is the coherent-state family and
        // chi = exp(|beta|^2).
        let dim = 25;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let beta = cplx(0.4, -0.2);
        let p = ParamPoint::from_betas(&[beta]);
        let rho = fam.evaluate(&p).unwrap();
        let reference = coherent_state(dim, beta, &tols()).unwrap();
        assert!(frob(&(rho.matrix() - reference.matrix())) <= 1e-10);
        let chi = fam.chi(&p).unwrap();
        assert_abs_diff_eq!(chi.ln(), beta.norm_sqr(), epsilon = 1e-10);
    }

    #[test]
    fn generating_function_coherent_derivatives() {
        // ln chi = conj(beta) beta: mu = beta, Hessian = 1.
        let dim = 25;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let beta = cplx(0.3, 0.1);
        let p = ParamPoint::from_betas(&[beta]);
        let gf = fam.generating_function().unwrap();
        let mu = gf.mu(&p).unwrap();
        assert_abs_diff_eq!(mu[0].re, beta.re, epsilon = 1e-8);
        assert_abs_diff_eq!(mu[0].im, beta.im, epsilon = 1e-8);
        let hess = gf.log_hessian(&p).unwrap();
        assert_abs_diff_eq!(hess[(0, 0)].re, 1.0, epsilon = 1e-6);
        assert_abs_diff_eq!(hess[(0, 0)].im, 0.0, epsilon = 1e-6);
    }

    #[test]
    fn unitary_shift_preserves_spectrum() {
        let dim = 8;
        let ops = fock_ops(dim).unwrap();
        let rho0 = thermal_state(dim, 0.5, &tols()).unwrap();
        let fam = StateFamily::unitary_shift(
            rho0.clone(),
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            1.0,
            &tols(),
        )
        .unwrap();
        let rho = fam.evaluate(&ParamPoint::Real(vec![0.7])).unwrap();
        // Unitary conjugation preserves eigenvalues: diagonal thermal weights.
        for m in 0..dim {
            assert_abs_diff_eq!(
                rho.matrix()[(m, m)].re,
                rho0.matrix()[(m, m)].re,
                epsilon = 1e-12
            );
        }
    }

    #[test]
    fn shift_family_rejects_non_hermitian_generator() {
        let dim = 4;
        let ops = fock_ops(dim).unwrap();
        let rho0 = pure_fock(dim, 0, &tols()).unwrap();
        let err = StateFamily::unitary_shift(
            rho0,
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            1.0,
            &tols(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonHermitianGenerator { .. }));
    }

    #[test]
    fn derivative_analytic_matches_central_difference() {
        // Commuting-generator families take the analytic path; force the
        // numeric path with an explicit step and compare.
        let dim = 20;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::from_betas(&[cplx(0.2, 0.1)]);
        for dir in [
            DiffDirection::Gamma(0),
            DiffDirection::Theta(0),
            DiffDirection::Beta(0),
            DiffDirection::BetaBar(0),
        ] {
            assert_eq!(fam.derivative_mode(), DerivativeMode::Analytic);
            let analytic = family_derivative(&fam, &p, dir).unwrap();
            let numeric = family_derivative_with_step(&fam, &p, dir, 3e-6).unwrap();
            assert!(
                frob(&(&analytic - &numeric)) <= 1e-6,
                "direction {dir:?} mismatch {}",
                frob(&(&analytic - &numeric))
            );
        }
    }

    #[test]
    fn derivative_step_consistency_richardson() {
        // Central differences at h and h/10 must agree to ~h^2.
        let dim = 16;
        let ops = fock_ops(dim).unwrap();
        let rho0 = thermal_state(dim, 0.8, &tols()).unwrap();
        let fam = StateFamily::canonical_real(
            rho0,
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::Real(vec![0.2]);
        let d1 = family_derivative_with_step(&fam, &p, DiffDirection::Real(0), 1e-4).unwrap();
        let d2 = family_derivative_with_step(&fam, &p, DiffDirection::Real(0), 1e-5).unwrap();
        assert!(frob(&(&d1 - &d2)) <= 1e-7);
    }

    #[test]
    fn derivative_direction_kind_checks() {
        let dim = 4;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_real(
            maximally_mixed(dim, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.n.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::Real(vec![0.0]);
        let err = family_derivative(&fam, &p, DiffDirection::Beta(0)).unwrap_err();
        assert!(matches!(err, Error::KindMismatch { .. }));
    }

    #[test]
    fn beta_wirtinger_duality_holds_numerically() {
        // The acid test for the sign convention: for the coherent family at
        // beta=0, d rho / d conj(beta) must equal |0><1| (= rho a on the
        // truncated space), not its adjoint.
        let dim = 10;
        let ops = fock_ops(dim).unwrap();
        let fam = StateFamily::canonical_complex(
            pure_fock(dim, 0, &tols()).unwrap(),
            GeneratorSet::new(vec![ops.a.clone()]).unwrap(),
            &tols(),
        )
        .unwrap();
        let p = ParamPoint::origin(ParamKind::Complex, 1);
        let d = family_derivative_with_step(&fam, &p, DiffDirection::BetaBar(0), 1e-5).unwrap();
        assert_abs_diff_eq!(d[(0, 1)].re, 1.0, epsilon = 1e-9);
        assert_abs_diff_eq!(d[(1, 0)].re, 0.0, epsilon = 1e-9);
    }
}
