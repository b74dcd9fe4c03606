//! JSON encoding of complex matrices: row-major arrays of `[re, im]` pairs.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// A complex matrix serialized as `rows`, `cols`, and row-major `[re, im]`
/// entry pairs.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MatrixJson {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<[f64; 2]>,
}

impl MatrixJson {
    pub fn from_matrix(m: &DMatrix<Complex64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let z = m[(r, c)];
                data.push([z.re, z.im]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    pub fn from_real(m: &DMatrix<f64>) -> Self {
        let mut data = Vec::with_capacity(m.nrows() * m.ncols());
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                data.push([m[(r, c)], 0.0]);
            }
        }
        MatrixJson {
            rows: m.nrows(),
            cols: m.ncols(),
            data,
        }
    }

    /// Reconstructs the matrix; `Err` carries a shape/finiteness diagnostic.
    pub fn to_matrix(&self) -> Result<DMatrix<Complex64>, String> {
        if self.rows == 0 || self.cols == 0 {
            return Err(format!("empty matrix shape {}x{}", self.rows, self.cols));
        }
        if self.data.len() != self.rows * self.cols {
            return Err(format!(
                "matrix {}x{} carries {} entries",
                self.rows,
                self.cols,
                self.data.len()
            ));
        }
        for (i, e) in self.data.iter().enumerate() {
            if !e[0].is_finite() || !e[1].is_finite() {
                return Err(format!("non-finite matrix entry at flat index {i}"));
            }
        }
        let mut m = DMatrix::<Complex64>::zeros(self.rows, self.cols);
        for r in 0..self.rows {
            for c in 0..self.cols {
                let e = self.data[r * self.cols + c];
                m[(r, c)] = Complex64::new(e[0], e[1]);
            }
        }
        Ok(m)
    }
}

/// A complex vector serialized as `[re, im]` pairs.
pub fn vec_to_json(v: &[Complex64]) -> Vec<[f64; 2]> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

pub fn vec_from_json(v: &[[f64; 2]]) -> Vec<Complex64> {
    v.iter().map(|e| Complex64::new(e[0], e[1])).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn roundtrip_preserves_entries() {
        let m = DMatrix::from_row_slice(2, 3, &[
            Complex64::new(1.0, -2.0),
            Complex64::new(0.5, 0.0),
            Complex64::new(0.0, 3.25),
            Complex64::new(-1.0, 1.0),
            Complex64::new(2.0, 2.0),
            Complex64::new(0.0, 0.0),
        ]);
        let j = MatrixJson::from_matrix(&m);
        assert_eq!(j.rows, 2);
        assert_eq!(j.cols, 3);
        // Row-major: entry (0,1) is flat index 1.
        assert_eq!(j.data[1], [0.5, 0.0]);
        let back = j.to_matrix().unwrap();
        assert_eq!(back, m);
    }

    #[test]
    fn rejects_malformed_payloads() {
        let bad_len = MatrixJson {
            rows: 2,
            cols: 2,
            data: vec![[1.0, 0.0]; 3],
        };
        assert!(bad_len.to_matrix().is_err());
        let bad_entry = MatrixJson {
            rows: 1,
            cols: 1,
            data: vec![[f64::NAN, 0.0]],
        };
        assert!(bad_entry.to_matrix().is_err());
    }
}
