//! Small dense/sparse helpers shared by the integrator and the baselines.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Compressed-row storage built from a dense matrix, skipping exact zeros.
///
/// Both the circuit integrator and CG spend nearly all their time in
/// matrix-vector products; the sparse suite has at most `s` nonzeros per
/// row so this keeps those runs linear in `N`.
#[derive(Debug, Clone)]
pub struct CsrMatrix {
    nrows: usize,
    ncols: usize,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
}

impl CsrMatrix {
    pub fn from_dense(m: &DMatrix<f64>) -> Self {
        let (nrows, ncols) = m.shape();
        let mut row_ptr = Vec::with_capacity(nrows + 1);
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        row_ptr.push(0);
        for i in 0..nrows {
            for j in 0..ncols {
                let v = m[(i, j)];
                if v != 0.0 {
                    cols.push(j);
                    vals.push(v);
                }
            }
            row_ptr.push(cols.len());
        }
        CsrMatrix {
            nrows,
            ncols,
            row_ptr,
            cols,
            vals,
        }
    }

    pub fn nrows(&self) -> usize {
        self.nrows
    }

    pub fn ncols(&self) -> usize {
        self.ncols
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// `out = self * x`
    pub fn mul_into(&self, x: &[f64], out: &mut [f64]) {
        debug_assert_eq!(x.len(), self.ncols);
        debug_assert_eq!(out.len(), self.nrows);
        for (i, o) in out.iter_mut().enumerate() {
            let (lo, hi) = (self.row_ptr[i], self.row_ptr[i + 1]);
            let mut acc = 0.0;
            for k in lo..hi {
                acc += self.vals[k] * x[self.cols[k]];
            }
            *o = acc;
        }
    }

    pub fn mul(&self, x: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.nrows];
        self.mul_into(x, &mut out);
        out
    }

    /// Largest number of stored entries in any row.
    pub fn max_row_nnz(&self) -> usize {
        self.row_ptr
            .windows(2)
            .map(|w| w[1] - w[0])
            .max()
            .unwrap_or(0)
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub(crate) fn require_square(a: &DMatrix<f64>, what: &str) -> Result<usize> {
    let (r, c) = a.shape();
    if r != c {
        return Err(Error::Domain(format!("{what} must be square, got {r}x{c}")));
    }
    if r == 0 {
        return Err(Error::Domain(format!("{what} is empty")));
    }
    Ok(r)
}

pub(crate) fn require_len(v: &DVector<f64>, n: usize, what: &str) -> Result<()> {
    if v.len() != n {
        return Err(Error::Domain(format!(
            "{what} has length {}, expected {n}",
            v.len()
        )));
    }
    Ok(())
}

/// Symmetry up to a relative tolerance on each mirrored pair.
pub fn is_symmetric(a: &DMatrix<f64>, rel_tol: f64) -> bool {
    let n = a.nrows();
    if n != a.ncols() {
        return false;
    }
    let scale = a.amax().max(f64::MIN_POSITIVE);
    for i in 0..n {
        for j in (i + 1)..n {
            if (a[(i, j)] - a[(j, i)]).abs() > rel_tol * scale {
                return false;
            }
        }
    }
    true
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csr_matches_dense_product() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 2.0, 0.0, 0.0, 0.0, -1.0, 3.0, 0.5]);
        let csr = CsrMatrix::from_dense(&m);
        assert_eq!(csr.nnz(), 5);
        assert_eq!(csr.max_row_nnz(), 3);
        let x = [1.0, 2.0, 3.0];
        let dense = &m * DVector::from_column_slice(&x);
        assert_eq!(csr.mul(&x), dense.as_slice());
    }

    #[test]
    fn symmetry_check() {
        let s = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 2.0]);
        let n = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 0.9, 2.0]);
        assert!(is_symmetric(&s, 1e-12));
        assert!(!is_symmetric(&n, 1e-12));
    }
}
