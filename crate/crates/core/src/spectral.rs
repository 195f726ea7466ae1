//! Eigenvalues, norms, the direct-solve oracle and complexity estimators.

use nalgebra::linalg::{Schur, SymmetricEigen, LU};
use nalgebra::{Complex, DMatrix, DVector, Dyn};

use crate::dynamics::build_feedback;
use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, require_len, require_square};

/// Condition estimates above this are rejected by the direct solver.
pub const MAX_CONDITION: f64 = 1e12;

const SYMMETRY_TOL: f64 = 1e-12;

/// LU factorization reused across many right-hand sides.
#[derive(Debug, Clone)]
pub struct DirectSolver {
    lu: LU<f64, Dyn, Dyn>,
    n: usize,
    condition_1: f64,
}

impl DirectSolver {
    pub fn new(a: &DMatrix<f64>) -> Result<Self> {
        let n = require_square(a, "coefficient matrix")?;
        if a.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("matrix has non-finite entries".into()));
        }
        let lu = a.clone().lu();
        let inv = lu
            .try_inverse()
            .ok_or_else(|| Error::Numerical("matrix is singular".into()))?;
        let condition_1 = norm_1(a) * norm_1(&inv);
        if !condition_1.is_finite() || condition_1 > MAX_CONDITION {
            return Err(Error::Numerical(format!(
                "matrix is too ill-conditioned (cond_1 ~ {condition_1:.3e})"
            )));
        }
        Ok(DirectSolver { lu, n, condition_1 })
    }

    /// 1-norm condition number of the factored matrix.
    pub fn condition(&self) -> f64 {
        self.condition_1
    }

    pub fn solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        require_len(b, self.n, "right-hand side")?;
        self.lu
            .solve(b)
            .ok_or_else(|| Error::Numerical("LU solve failed".into()))
    }
}

fn norm_1(a: &DMatrix<f64>) -> f64 {
    a.column_iter()
        .map(|c| c.iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// `x* = a^{-1} b` by LU with partial pivoting.
pub fn direct_solve(a: &DMatrix<f64>, b: &DVector<f64>) -> Result<DVector<f64>> {
    DirectSolver::new(a)?.solve(b)
}

/// Energy norm `sqrt(x^T a x)`.
pub fn a_norm(a: &DMatrix<f64>, x: &DVector<f64>) -> Result<f64> {
    let n = require_square(a, "matrix")?;
    require_len(x, n, "vector")?;
    let q = x.dot(&(a * x));
    if q < 0.0 {
        return Err(Error::Domain(format!(
            "quadratic form x^T A x = {q:.3e} is negative; A is not positive definite"
        )));
    }
    Ok(q.sqrt())
}

/// Eigenvalues of a symmetric matrix, ascending.
pub fn symmetric_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<f64>> {
    require_square(a, "matrix")?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let eig = SymmetricEigen::try_new(a.clone(), f64::EPSILON, 0)
        .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
    let mut v: Vec<f64> = eig.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Eigenvalues of a general real matrix, sorted by real part then imaginary part.
pub fn general_eigenvalues(a: &DMatrix<f64>) -> Result<Vec<Complex<f64>>> {
    require_square(a, "matrix")?;
    if a.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix has non-finite entries".into()));
    }
    let schur = Schur::try_new(a.clone(), f64::EPSILON, 100_000)
        .ok_or_else(|| Error::Numerical("Schur decomposition did not converge".into()))?;
    let mut v: Vec<Complex<f64>> = schur.complex_eigenvalues().iter().copied().collect();
    v.sort_by(|x, y| x.re.total_cmp(&y.re).then(x.im.total_cmp(&y.im)));
    Ok(v)
}

/// Eigenvalues of `M = diag(u) a` for symmetric `a`, computed on the
/// similar symmetric matrix `diag(u)^{1/2} a diag(u)^{1/2}`.
pub fn associated_eigenvalues_symmetric(a: &DMatrix<f64>, u: &DVector<f64>) -> Result<Vec<f64>> {
    let n = require_square(a, "matrix")?;
    require_len(u, n, "row gains")?;
    if u.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::Domain("row gains must be positive".into()));
    }
    let s = u.map(f64::sqrt);
    let w = DMatrix::from_fn(n, n, |i, j| s[i] * a[(i, j)] * s[j]);
    // symmetrize round-off
    let w = (&w + w.transpose()) * 0.5;
    symmetric_eigenvalues(&w)
}

/// Summary of the spectra of `A` and of its associated matrix `M`.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralReport {
    /// Minimum eigenvalue (real part for non-symmetric input) of A.
    pub lambda_min_a: f64,
    pub lambda_max_a: f64,
    /// Minimum real part among eigenvalues of M.
    pub lambda_m_min: f64,
    /// Spectral radius of M.
    pub rho_m: f64,
    pub u_min: f64,
    /// `lambda_m_min / lambda_min_a`.
    pub u_factor: f64,
    pub condition_number: f64,
    /// Whether the symmetric eigen path was used.
    pub symmetric: bool,
}

pub fn spectral_report(a: &DMatrix<f64>) -> Result<SpectralReport> {
    let sys = build_feedback(a)?;
    let u_min = sys.u.iter().copied().fold(f64::INFINITY, f64::min);
    let symmetric = is_symmetric(a, SYMMETRY_TOL);
    let (lambda_min_a, lambda_max_a, lambda_m_min, rho_m) = if symmetric {
        let la = symmetric_eigenvalues(a)?;
        let lm = associated_eigenvalues_symmetric(a, &sys.u)?;
        let rho = lm.iter().map(|v| v.abs()).fold(0.0, f64::max);
        (la[0], la[la.len() - 1], lm[0], rho)
    } else {
        let la = general_eigenvalues(a)?;
        let lm = general_eigenvalues(&sys.m)?;
        let rho = lm.iter().map(|v| v.norm()).fold(0.0, f64::max);
        (la[0].re, la[la.len() - 1].re, lm[0].re, rho)
    };
    Ok(SpectralReport {
        lambda_min_a,
        lambda_max_a,
        lambda_m_min,
        rho_m,
        u_min,
        u_factor: lambda_m_min / lambda_min_a,
        condition_number: lambda_max_a / lambda_min_a,
        symmetric,
    })
}

fn check_estimator_args(n: f64, s: f64, lambda_max: f64, lambda_min: f64, epsilon: f64) -> Result<()> {
    for (name, v) in [
        ("n", n),
        ("s", s),
        ("lambda_max", lambda_max),
        ("lambda_min", lambda_min),
        ("epsilon", epsilon),
    ] {
        if !(v > 0.0) || !v.is_finite() {
            return Err(Error::Config(format!("{name} must be positive, got {v}")));
        }
    }
    if epsilon >= 1.0 {
        return Err(Error::Config(format!("epsilon must be < 1, got {epsilon}")));
    }
    Ok(())
}

/// Relative CG cost `n s sqrt(kappa) ln(1/eps)`.
pub fn complexity_cg_estimate(
    n: f64,
    s: f64,
    lambda_max: f64,
    lambda_min: f64,
    epsilon: f64,
) -> Result<f64> {
    check_estimator_args(n, s, lambda_max, lambda_min, epsilon)?;
    Ok(n * s * (lambda_max / lambda_min).sqrt() * (1.0 / epsilon).ln())
}

/// Relative quantum linear-solver cost `s^2 kappa^2 / eps * ln n`, unit constant.
pub fn complexity_quantum_estimate(
    n: f64,
    s: f64,
    lambda_max: f64,
    lambda_min: f64,
    epsilon: f64,
) -> Result<f64> {
    check_estimator_args(n, s, lambda_max, lambda_min, epsilon)?;
    let kappa = lambda_max / lambda_min;
    Ok(s * s * kappa * kappa / epsilon * n.ln())
}
