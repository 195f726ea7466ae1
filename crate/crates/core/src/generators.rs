//! Seeded generators for the matrix and vector families used in experiments.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::device::LevelSet;
use crate::dynamics::build_feedback;
use crate::error::{Error, Result};
use crate::spectral::symmetric_eigenvalues;

/// Independent 64-bit seed for sub-stream `stream` of `master`.
///
/// Derived from a ChaCha stream id, so the value depends only on
/// `(master, stream)` and never on evaluation order.
pub fn stream_seed(master: u64, stream: u64) -> u64 {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream);
    rng.next_u64()
}

/// Model covariance matrix: off-diagonal `1 / |i - j|^beta`, diagonal `1 + sqrt(i)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CovarianceSpec {
    pub n: usize,
    /// Decay exponent.
    pub beta: f64,
}

pub fn covariance_matrix(spec: &CovarianceSpec) -> Result<DMatrix<f64>> {
    if spec.n < 2 {
        return Err(Error::Config(format!("covariance size must be >= 2, got {}", spec.n)));
    }
    if !(spec.beta > 0.0) || !spec.beta.is_finite() {
        return Err(Error::Config(format!("beta must be > 0, got {}", spec.beta)));
    }
    // 1-based row index on the diagonal
    Ok(DMatrix::from_fn(spec.n, spec.n, |i, j| {
        if i == j {
            1.0 + ((i + 1) as f64).sqrt()
        } else {
            1.0 / (i.abs_diff(j) as f64).powf(spec.beta)
        }
    }))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiscretePdSpec {
    pub dim: usize,
    /// Draw the upper triangle and mirror it.
    pub symmetric: bool,
    /// Reject draws whose symmetric-part minimum eigenvalue is at or below this.
    pub min_lambda: f64,
    pub max_tries: usize,
}

impl Default for DiscretePdSpec {
    fn default() -> Self {
        DiscretePdSpec {
            dim: 3,
            symmetric: true,
            min_lambda: 0.0,
            max_tries: 100_000,
        }
    }
}

/// A matrix drawn from discrete device levels that passed the PD screen.
#[derive(Debug, Clone, PartialEq)]
pub struct DiscretePd {
    pub a: DMatrix<f64>,
    /// Minimum eigenvalue of `(A + A^T) / 2`.
    pub lambda_min: f64,
    /// Whether every eigenvalue of `M` has positive real part.
    pub circuit_stable: bool,
    pub tries: usize,
}

/// Draw `dim x dim` matrices with entries uniform over `levels / g0` until
/// one has a positive definite symmetric part and a stable circuit.
pub fn random_discrete_pd(
    spec: &DiscretePdSpec,
    levels: &LevelSet,
    g0: f64,
    seed: u64,
) -> Result<DiscretePd> {
    if spec.dim == 0 {
        return Err(Error::Config("dimension must be positive".into()));
    }
    if !(g0 > 0.0) {
        return Err(Error::Config(format!("g0 must be > 0, got {g0}")));
    }
    if spec.max_tries == 0 {
        return Err(Error::Config("max_tries must be positive".into()));
    }
    let values: Vec<f64> = levels.levels().iter().map(|g| g / g0).collect();
    let n = spec.dim;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 1..=spec.max_tries {
        let mut a = DMatrix::zeros(n, n);
        for i in 0..n {
            let start = if spec.symmetric { i } else { 0 };
            for j in start..n {
                let v = values[rng.random_range(0..values.len())];
                a[(i, j)] = v;
                if spec.symmetric {
                    a[(j, i)] = v;
                }
            }
        }
        let sym = (&a + a.transpose()) * 0.5;
        let lambda_min = symmetric_eigenvalues(&sym)?[0];
        if lambda_min <= spec.min_lambda.max(0.0) {
            continue;
        }
        let sys = build_feedback(&a)?;
        let circuit_stable = sys.m_eigenvalues()?.iter().all(|v| v.re > 0.0);
        if !circuit_stable {
            continue;
        }
        return Ok(DiscretePd {
            a,
            lambda_min,
            circuit_stable,
            tries: attempt,
        });
    }
    Err(Error::Generation {
        tries: spec.max_tries,
        reason: format!(
            "no {n}x{n} draw with positive definite symmetric part above {}",
            spec.min_lambda
        ),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SparsePdSpec {
    pub n: usize,
    /// Maximum nonzeros per row, diagonal included.
    pub s: usize,
    pub lambda_target: f64,
    pub seed: u64,
}

/// Sparse symmetric positive definite matrix with nonnegative entries and
/// a prescribed minimum eigenvalue.
///
/// A random symmetric pattern with at most `s - 1` off-diagonal entries per
/// row gets values uniform in (0, 1]; the diagonal starts at the off-diagonal
/// row sum and is then shifted so that `lambda_min` equals the target.
pub fn sparse_pd(spec: &SparsePdSpec) -> Result<DMatrix<f64>> {
    let n = spec.n;
    if n == 0 {
        return Err(Error::Domain("size must be positive".into()));
    }
    if spec.s == 0 || spec.s > n {
        return Err(Error::Domain(format!(
            "sparsity s = {} is infeasible for n = {n}",
            spec.s
        )));
    }
    if !(spec.lambda_target > 0.0) || !spec.lambda_target.is_finite() {
        return Err(Error::Config(format!(
            "lambda_target must be > 0, got {}",
            spec.lambda_target
        )));
    }
    let max_off = spec.s - 1;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let mut a = DMatrix::zeros(n, n);
    let mut count = vec![0usize; n];
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut rng);
    let mut partners: Vec<usize> = Vec::with_capacity(n);
    for &i in &rows {
        if count[i] >= max_off {
            continue;
        }
        partners.clear();
        partners.extend((0..n).filter(|&j| j != i));
        partners.shuffle(&mut rng);
        for &j in &partners {
            if count[i] >= max_off {
                break;
            }
            if count[j] >= max_off || a[(i, j)] != 0.0 {
                continue;
            }
            let v = 1.0 - rng.random::<f64>();
            a[(i, j)] = v;
            a[(j, i)] = v;
            count[i] += 1;
            count[j] += 1;
        }
    }
    for i in 0..n {
        let off: f64 = a.row(i).sum();
        a[(i, i)] = off;
    }
    let current = symmetric_eigenvalues(&a)?[0];
    let shift = spec.lambda_target - current;
    for i in 0..n {
        a[(i, i)] += shift;
    }
    Ok(a)
}

/// Vector with i.i.d. entries uniform on `[lo, hi]`.
pub fn random_vector(n: usize, seed: u64, lo: f64, hi: f64) -> Result<DVector<f64>> {
    if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
        return Err(Error::Config(format!("invalid range [{lo}, {hi}]")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    Ok(DVector::from_fn(n, |_, _| rng.random_range(lo..=hi)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn covariance_small_cases() {
        let a = covariance_matrix(&CovarianceSpec { n: 3, beta: 1.0 }).unwrap();
        let want = [
            [2.0, 1.0, 0.5],
            [1.0, 1.0 + 2f64.sqrt(), 1.0],
            [0.5, 1.0, 1.0 + 3f64.sqrt()],
        ];
        for i in 0..3 {
            for j in 0..3 {
                assert_relative_eq!(a[(i, j)], want[i][j], max_relative = 1e-15);
            }
        }
        assert!((a[(1, 1)] - 2.41421).abs() < 5e-6);
        assert!((a[(2, 2)] - 2.73205).abs() < 5e-6);
        for beta in [0.5, 1.0, 2.0, 3.7] {
            let a = covariance_matrix(&CovarianceSpec { n: 2, beta }).unwrap();
            assert_eq!(a[(0, 1)], 1.0);
            assert_eq!(a[(0, 0)], 2.0);
        }
    }

    #[test]
    fn covariance_second_order_min_entry() {
        let a = covariance_matrix(&CovarianceSpec { n: 300, beta: 2.0 }).unwrap();
        assert_relative_eq!(a.min(), 1.0 / (299.0f64 * 299.0), max_relative = 1e-14);
    }

    #[test]
    fn covariance_rejects_bad_spec() {
        assert!(covariance_matrix(&CovarianceSpec { n: 1, beta: 1.0 }).is_err());
        assert!(covariance_matrix(&CovarianceSpec { n: 3, beta: 0.0 }).is_err());
    }

    #[test]
    fn discrete_pd_deterministic() {
        let levels = LevelSet::measured();
        let spec = DiscretePdSpec::default();
        let x = random_discrete_pd(&spec, &levels, 100e-6, 11).unwrap();
        let y = random_discrete_pd(&spec, &levels, 100e-6, 11).unwrap();
        assert_eq!(x, y);
        assert!(x.lambda_min > 0.0 && x.circuit_stable);
        let allowed: Vec<f64> = levels.levels().iter().map(|g| g / 100e-6).collect();
        assert!(x.a.iter().all(|v| allowed.contains(v)));
    }

    #[test]
    fn discrete_pd_gives_up() {
        let spec = DiscretePdSpec {
            min_lambda: 100.0,
            max_tries: 5,
            ..DiscretePdSpec::default()
        };
        assert!(matches!(
            random_discrete_pd(&spec, &LevelSet::measured(), 100e-6, 1),
            Err(Error::Generation { tries: 5, .. })
        ));
    }

    #[test]
    fn sparse_diagonal_degenerate() {
        let a = sparse_pd(&SparsePdSpec {
            n: 5,
            s: 1,
            lambda_target: 0.7,
            seed: 3,
        })
        .unwrap();
        assert_eq!(a, DMatrix::identity(5, 5) * 0.7);
    }

    #[test]
    fn sparse_infeasible() {
        let spec = SparsePdSpec {
            n: 4,
            s: 5,
            lambda_target: 1.0,
            seed: 0,
        };
        assert!(matches!(sparse_pd(&spec), Err(Error::Domain(_))));
    }

    #[test]
    fn vector_degenerate_and_repeatable() {
        let v = random_vector(3, 9, 0.5, 0.5).unwrap();
        assert_eq!(v.as_slice(), &[0.5, 0.5, 0.5]);
        assert_eq!(
            random_vector(10, 9, -1.0, 1.0).unwrap(),
            random_vector(10, 9, -1.0, 1.0).unwrap()
        );
        assert!(random_vector(3, 0, 1.0, 0.0).is_err());
    }

    #[test]
    fn vector_mean() {
        let v = random_vector(10_000, 5, -1.0, 1.0).unwrap();
        let mean = v.mean();
        // sigma of the mean: (2 / sqrt(12)) / sqrt(1e4)
        let sigma = 2.0 / 12f64.sqrt() / 100.0;
        assert!(mean.abs() < 3.0 * sigma, "mean {mean}");
        assert!(v.iter().all(|x| (-1.0..=1.0).contains(x)));
    }

    #[test]
    fn stream_seeds_differ() {
        let a = stream_seed(42, 0);
        assert_eq!(a, stream_seed(42, 0));
        assert_ne!(a, stream_seed(42, 1));
        assert_ne!(a, stream_seed(43, 0));
    }
}
