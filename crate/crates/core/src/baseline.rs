//! Conjugate-gradient baseline for comparing against the circuit.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{dot, is_symmetric, norm2, require_len, require_square, CsrMatrix};

#[derive(Debug, Clone, PartialEq)]
pub struct CgResult {
    pub x: DVector<f64>,
    pub iterations: usize,
    /// `||b - A x||_2` after each iteration, starting with the initial residual.
    pub residual_history: Vec<f64>,
    pub converged: bool,
}

/// Plain (unpreconditioned) CG from `x0 = 0`, stopping on
/// `||A x - b|| <= tol * ||b||` or after `max_iters` iterations.
pub fn conjugate_gradient(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    tol: f64,
    max_iters: usize,
) -> Result<CgResult> {
    let n = require_square(a, "CG matrix")?;
    require_len(b, n, "right-hand side")?;
    if !(tol > 0.0) || !tol.is_finite() {
        return Err(Error::Config(format!("tolerance must be > 0, got {tol}")));
    }
    if !is_symmetric(a, 1e-10) {
        return Err(Error::Domain("CG requires a symmetric matrix".into()));
    }
    let op = CsrMatrix::from_dense(a);
    let b = b.as_slice();
    let threshold = tol * norm2(b);

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut p = r.clone();
    let mut ap = vec![0.0; n];
    let mut rr = dot(&r, &r);
    let mut history = vec![rr.sqrt()];
    let mut iterations = 0;

    while rr.sqrt() > threshold && iterations < max_iters {
        op.mul_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(Error::Domain(format!(
                "matrix is not positive definite (p^T A p = {pap:.3e})"
            )));
        }
        let step = rr / pap;
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = dot(&r, &r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
        history.push(rr.sqrt());
    }

    Ok(CgResult {
        x: DVector::from_vec(x),
        iterations,
        residual_history: history,
        converged: rr.sqrt() <= threshold,
    })
}
