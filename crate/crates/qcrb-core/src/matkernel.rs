//! Dense complex matrix kernels.
//!
//! Thin layer over `nalgebra` providing exactly the operations the rest of
//! the crate needs: Hermitian eigendecomposition, positive-semidefiniteness
//! checks, the anticommutator (Lyapunov-type) solve, matrix exponentials and
//! Hermitian pseudo-inverses. Dense storage; intended for dimensions up to a
//! few hundred.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::tol::Tolerances;

/// Dense complex matrix used throughout the crate.
pub type CMatrix = DMatrix<Complex64>;
/// Dense complex vector.
pub type CVector = DVector<Complex64>;

/// Shorthand complex constructor.
#[inline]
pub fn cplx(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Frobenius norm.
#[inline]
pub fn frob(m: &CMatrix) -> f64 {
    m.norm()
}

/// `(m + m^H) / 2`.
pub fn hermitize(m: &CMatrix) -> CMatrix {
    (m + m.adjoint()).scale(0.5)
}

/// `a b - b a`.
pub fn commutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b - b * a
}

/// `a b + b a`.
pub fn anticommutator(a: &CMatrix, b: &CMatrix) -> CMatrix {
    a * b + b * a
}

/// Trace as a complex number.
pub fn trace(m: &CMatrix) -> Complex64 {
    m.diagonal().sum()
}

/// Relative deviation from Hermiticity: `|m - m^H| / max(|m|, eps)`.
pub fn herm_deviation(m: &CMatrix) -> f64 {
    let scale = frob(m).max(f64::MIN_POSITIVE);
    frob(&(m - m.adjoint())) / scale
}

/// Errors unless `m` is Hermitian within the relative tolerance.
pub fn require_hermitian(m: &CMatrix, tol: f64) -> Result<()> {
    let deviation = herm_deviation(m);
    if deviation > tol {
        return Err(Error::NotHermitian { deviation, tol });
    }
    Ok(())
}

/// Eigendecomposition of a Hermitian matrix.
///
/// Eigenvalues are real and sorted ascending; `vectors` holds the matching
/// orthonormal eigenvectors as columns, so `m = V diag(values) V^H`.
#[derive(Debug, Clone)]
pub struct EigenSystem {
    pub values: Vec<f64>,
    pub vectors: CMatrix,
}

impl EigenSystem {
    /// `V diag(values) V^H` — for residual checks.
    pub fn reconstruct(&self) -> CMatrix {
        let d = self.values.len();
        let mut lam = CMatrix::zeros(d, d);
        for (i, &v) in self.values.iter().enumerate() {
            lam[(i, i)] = cplx(v, 0.0);
        }
        &self.vectors * lam * self.vectors.adjoint()
    }

    /// Applies a real scalar function to the spectrum: `V diag(f(values)) V^H`.
    pub fn map_spectrum(&self, f: impl Fn(f64) -> Complex64) -> CMatrix {
        let d = self.values.len();
        let mut lam = CMatrix::zeros(d, d);
        for (i, &v) in self.values.iter().enumerate() {
            lam[(i, i)] = f(v);
        }
        &self.vectors * lam * self.vectors.adjoint()
    }

    /// Largest eigenvalue (0 for empty).
    pub fn max_eig(&self) -> f64 {
        self.values.last().copied().unwrap_or(0.0)
    }

    /// Smallest eigenvalue (0 for empty).
    pub fn min_eig(&self) -> f64 {
        self.values.first().copied().unwrap_or(0.0)
    }
}

/// Hermitian eigendecomposition with ascending eigenvalue order.
///
/// The input must be Hermitian within `tol.hermiticity` (relative); the
/// decomposition is performed on the Hermitized matrix so roundoff-level
/// asymmetry cannot leak into complex eigenvalues.
pub fn hermitian_eigen(m: &CMatrix, tol: &Tolerances) -> Result<EigenSystem> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            context: format!("hermitian_eigen: {}x{} not square", m.nrows(), m.ncols()),
        });
    }
    require_hermitian(m, tol.hermiticity)?;
    let sym = hermitize(m);
    let eig = nalgebra::SymmetricEigen::try_new(sym, f64::EPSILON, 50_000).ok_or_else(|| {
        Error::NoConvergence {
            context: format!("symmetric eigensolver on {}x{} matrix", m.nrows(), m.ncols()),
        }
    })?;
    // nalgebra returns eigenvalues unsorted; sort ascending and permute the
    // eigenvector columns to match.
    let d = m.nrows();
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].partial_cmp(&eig.eigenvalues[j]).unwrap());
    let values: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = CMatrix::zeros(d, d);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok(EigenSystem { values, vectors })
}

/// Outcome of a positive-semidefiniteness check.
#[derive(Debug, Clone, Copy)]
pub struct PsdCheck {
    /// True when the smallest eigenvalue is at least `-tol`.
    pub psd: bool,
    /// Smallest eigenvalue found.
    pub min_eig: f64,
}

/// Checks `m >= -tol` on the spectrum. `tol` is absolute; callers scale it by
/// the magnitude of their operands where a relative check is wanted.
pub fn is_psd(m: &CMatrix, tol: f64) -> Result<PsdCheck> {
    let tols = Tolerances::default();
    let eig = hermitian_eigen(m, &tols)?;
    let min_eig = eig.min_eig();
    Ok(PsdCheck {
        psd: min_eig >= -tol,
        min_eig,
    })
}

/// Solution of the anticommutator equation `a x + x a = 2 b`.
#[derive(Debug, Clone)]
pub struct LyapunovSolution {
    /// Hermitian solution, zero on eigenvalue pairs below the support floor.
    pub x: CMatrix,
    /// Residual of `a x + x a - 2 b` restricted to the kept eigenvalue pairs.
    pub support_residual: f64,
    /// Norm of the right-hand side on the dropped (off-support) pairs: the
    /// part of the equation no solution can reach.
    pub off_support_mass: f64,
    /// Absolute floor that was applied to `lambda_i + lambda_j`.
    pub floor: f64,
}

/// Solves `a x + x a = 2 b` for Hermitian `x`, with `a` PSD and `b` Hermitian.
///
/// In the eigenbasis of `a` the solution is `x_ij = 2 b_ij / (l_i + l_j)`,
/// taken only where `l_i + l_j >= floor`; other entries are set to zero. The
/// default floor is `tol.lyapunov_floor_rel` times the largest eigenvalue of
/// `a`. Components of `b` on dropped pairs are reported, not an error: they
/// measure how far `b` leaves the reachable subspace.
pub fn lyapunov_solve(
    a: &CMatrix,
    b: &CMatrix,
    floor: Option<f64>,
    tol: &Tolerances,
) -> Result<LyapunovSolution> {
    if a.shape() != b.shape() || !a.is_square() {
        return Err(Error::ShapeMismatch {
            context: format!(
                "lyapunov_solve: a is {}x{}, b is {}x{}",
                a.nrows(),
                a.ncols(),
                b.nrows(),
                b.ncols()
            ),
        });
    }
    require_hermitian(b, tol.hermiticity)?;
    let eig = hermitian_eigen(a, tol)?;
    let lam_max = eig.max_eig();
    if eig.min_eig() < -tol.psd * lam_max.max(1.0) {
        return Err(Error::OutOfDomain {
            context: format!(
                "lyapunov_solve: left operand not PSD (min eigenvalue {:.3e})",
                eig.min_eig()
            ),
        });
    }
    let floor = floor.unwrap_or(tol.lyapunov_floor_rel * lam_max);
    let d = a.nrows();
    let u = &eig.vectors;
    let bt = u.adjoint() * b * u;
    let mut xt = CMatrix::zeros(d, d);
    let mut off_sq = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let denom = eig.values[i] + eig.values[j];
            if denom >= floor && denom > 0.0 {
                xt[(i, j)] = bt[(i, j)].scale(2.0 / denom);
            } else {
                off_sq += (bt[(i, j)].scale(2.0)).norm_sqr();
            }
        }
    }
    let x = hermitize(&(u * &xt * u.adjoint()));
    // Residual measured in the original basis, projected back onto the kept
    // pairs, so eigenbasis roundtrip error is included.
    let res = &(a * &x + &x * a) - b.scale(2.0);
    let rt = u.adjoint() * res * u;
    let mut res_sq = 0.0f64;
    for i in 0..d {
        for j in 0..d {
            let denom = eig.values[i] + eig.values[j];
            if denom >= floor && denom > 0.0 {
                res_sq += rt[(i, j)].norm_sqr();
            }
        }
    }
    Ok(LyapunovSolution {
        x,
        support_residual: res_sq.sqrt(),
        off_support_mass: off_sq.sqrt(),
        floor,
    })
}

/// Matrix exponential.
///
/// Hermitian and anti-Hermitian inputs go through the eigendecomposition
/// (exact spectral calculus); everything else uses scaling-and-squaring with
/// a Taylor core.
pub fn matrix_exp(m: &CMatrix) -> Result<CMatrix> {
    if !m.is_square() {
        return Err(Error::ShapeMismatch {
            context: format!("matrix_exp: {}x{} not square", m.nrows(), m.ncols()),
        });
    }
    let tols = Tolerances::default();
    let scale = frob(m).max(f64::MIN_POSITIVE);
    let herm_dev = frob(&(m - m.adjoint())) / scale;
    let anti_dev = frob(&(m + m.adjoint())) / scale;
    if herm_dev <= tols.hermiticity {
        let eig = hermitian_eigen(m, &tols)?;
        return Ok(eig.map_spectrum(|l| cplx(l.exp(), 0.0)));
    }
    if anti_dev <= tols.hermiticity {
        // m = i h with h Hermitian; exp(m) = V diag(e^{i l}) V^H.
        let h = m.map(|z| z * cplx(0.0, -1.0));
        let eig = hermitian_eigen(&h, &tols)?;
        return Ok(eig.map_spectrum(|l| cplx(0.0, l).exp()));
    }
    exp_taylor_scaled(m)
}

/// Scaling-and-squaring exponential with a Taylor core, for general input.
fn exp_taylor_scaled(m: &CMatrix) -> Result<CMatrix> {
    let d = m.nrows();
    let norm = frob(m);
    let squarings = if norm > 0.5 {
        (norm / 0.5).log2().ceil() as u32
    } else {
        0
    };
    let small = m.scale(0.5f64.powi(squarings as i32)).map(|z| z);
    let mut sum = CMatrix::identity(d, d);
    let mut term = CMatrix::identity(d, d);
    let mut converged = false;
    for j in 1..=80usize {
        term = &term * &small;
        term.unscale_mut(j as f64);
        sum += &term;
        if frob(&term) <= 1e-20 * frob(&sum).max(1.0) {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(Error::NoConvergence {
            context: "matrix_exp Taylor core did not converge in 80 terms".into(),
        });
    }
    let mut out = sum;
    for _ in 0..squarings {
        out = &out * &out;
    }
    Ok(out)
}

/// Moore–Penrose pseudo-inverse of a Hermitian matrix.
#[derive(Debug, Clone)]
pub struct Pinv {
    /// The pseudo-inverse.
    pub matrix: CMatrix,
    /// Number of eigenvalues kept (above the cutoff).
    pub rank: usize,
    /// Number of eigenvalues dropped.
    pub dropped: usize,
    /// Absolute cutoff that was applied to `|lambda|`.
    pub cutoff: f64,
}

impl Pinv {
    /// True when no directions were dropped.
    pub fn full_rank(&self) -> bool {
        self.dropped == 0
    }
}

/// Pseudo-inverse via the spectral calculus; eigenvalues with
/// `|lambda| <= tol * max|lambda|` are treated as zero and reported.
pub fn pinv(m: &CMatrix, tol: f64) -> Result<Pinv> {
    let tols = Tolerances::default();
    let eig = hermitian_eigen(m, &tols)?;
    let lam_abs_max = eig
        .values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs()));
    let cutoff = tol * lam_abs_max;
    let rank = eig
        .values
        .iter()
        .filter(|l| l.abs() > cutoff && **l != 0.0)
        .count();
    let matrix = eig.map_spectrum(|l| {
        if l.abs() > cutoff && l != 0.0 {
            cplx(1.0 / l, 0.0)
        } else {
            cplx(0.0, 0.0)
        }
    });
    Ok(Pinv {
        matrix,
        rank,
        dropped: m.nrows() - rank,
        cutoff,
    })
}

/// Spectral (operator) norm of a Hermitian matrix.
pub fn spectral_norm_hermitian(m: &CMatrix, tol: &Tolerances) -> Result<f64> {
    let eig = hermitian_eigen(m, tol)?;
    Ok(eig
        .values
        .iter()
        .fold(0.0f64, |acc, &v| acc.max(v.abs())))
}

/// Largest absolute entry — the max norm used by bound attainment checks.
pub fn max_abs_entry(m: &CMatrix) -> f64 {
    m.iter().fold(0.0f64, |acc, z| acc.max(z.norm()))
}
