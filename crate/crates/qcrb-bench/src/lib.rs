//! Benchmark-only crate; see `benches/kernels.rs`. The shared fixtures live
//! here so the bench target stays a thin timing harness.

use num_complex::Complex64;
use qcrb_core::CMatrix;

/// Deterministic dense Hermitian matrix (no RNG dependency): smooth
/// pseudo-random entries from trigonometric index mixing.
pub fn dense_hermitian(dim: usize) -> CMatrix {
    let mut m = CMatrix::zeros(dim, dim);
    for i in 0..dim {
        for j in 0..dim {
            let (x, y) = (i as f64, j as f64);
            m[(i, j)] = Complex64::new(
                (1.3 * x + 0.7 * y).sin() + 0.1 * (x * y * 0.05).cos(),
                (0.9 * x - 1.1 * y).sin() * 0.5,
            );
        }
    }
    // Symmetrize into an exactly Hermitian input.
    let adj = m.adjoint();
    (m + adj).scale(0.5)
}
