//! Programmable resistive devices.
//!
//! A dimensionless coefficient matrix is written into the array by scaling it
//! to conductances, snapping each target onto a discrete level set, and
//! perturbing the programmed value with Gaussian programming noise.

use nalgebra::DMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};

/// Conductance values (S) read from a multilevel RRAM cell, ascending.
pub const MEASURED_LEVELS_SIEMENS: [f64; 8] = [
    10e-6, 15e-6, 20e-6, 30e-6, 50e-6, 60e-6, 80e-6, 120e-6,
];

/// Input conductance used with the measured level set.
pub const DEFAULT_G0: f64 = 100e-6;

/// Programming-noise standard deviation rule.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NoiseRule {
    /// Noise-free programming.
    None,
    /// `sigma = fraction * delta_g` with `delta_g = g_max / num_levels`.
    LevelFraction(f64),
    /// Fixed sigma in siemens.
    Absolute(f64),
}

impl Default for NoiseRule {
    fn default() -> Self {
        NoiseRule::LevelFraction(1.0 / 6.0)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DevicePolicy {
    pub num_levels: usize,
    /// Top of the programmable window (S).
    pub g_max: f64,
    /// `g_max / g_min`.
    pub ratio: f64,
    pub noise: NoiseRule,
    pub seed: u64,
}

impl Default for DevicePolicy {
    fn default() -> Self {
        DevicePolicy {
            num_levels: 64,
            g_max: 100e-6,
            ratio: 1e3,
            noise: NoiseRule::default(),
            seed: 0,
        }
    }
}

impl DevicePolicy {
    pub fn validate(&self) -> Result<()> {
        if self.num_levels < 2 {
            return Err(Error::Config(format!(
                "num_levels must be >= 2, got {}",
                self.num_levels
            )));
        }
        if !(self.ratio > 1.0) || !self.ratio.is_finite() {
            return Err(Error::Config(format!("ratio must be > 1, got {}", self.ratio)));
        }
        if !(self.g_max > 0.0) || !self.g_max.is_finite() {
            return Err(Error::Config(format!("g_max must be > 0, got {}", self.g_max)));
        }
        match self.noise {
            NoiseRule::LevelFraction(f) if !(f >= 0.0) || !f.is_finite() => {
                Err(Error::Config(format!("noise fraction must be >= 0, got {f}")))
            }
            NoiseRule::Absolute(s) if !(s >= 0.0) || !s.is_finite() => {
                Err(Error::Config(format!("noise sigma must be >= 0, got {s}")))
            }
            _ => Ok(()),
        }
    }

    pub fn g_min(&self) -> f64 {
        self.g_max / self.ratio
    }

    /// Nominal level spacing `g_max / num_levels`, the reference for noise.
    pub fn delta_g(&self) -> f64 {
        self.g_max / self.num_levels as f64
    }

    pub fn sigma(&self) -> f64 {
        match self.noise {
            NoiseRule::None => 0.0,
            NoiseRule::LevelFraction(f) => f * self.delta_g(),
            NoiseRule::Absolute(s) => s,
        }
    }
}

/// Ascending set of programmable conductances.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelSet {
    levels: Vec<f64>,
}

impl LevelSet {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::Config("level set is empty".into()));
        }
        if levels.iter().any(|g| !(*g > 0.0) || !g.is_finite()) {
            return Err(Error::Config("levels must be finite and positive".into()));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::Config("levels must be strictly increasing".into()));
        }
        Ok(LevelSet { levels })
    }

    /// The eight measured RRAM levels, 10 to 120 uS.
    pub fn measured() -> Self {
        LevelSet {
            levels: MEASURED_LEVELS_SIEMENS.to_vec(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn len(&self) -> usize {
        self.levels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.levels.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.levels[0]
    }

    pub fn max(&self) -> f64 {
        self.levels[self.levels.len() - 1]
    }

    /// Snap a target conductance to the level set.
    ///
    /// Targets below half the lowest level stay unprogrammed (0 S); targets
    /// between half the lowest level and the lowest level clamp up to it.
    pub fn snap(&self, target: f64) -> f64 {
        let g_min = self.min();
        if target < 0.5 * g_min {
            return 0.0;
        }
        if target <= g_min {
            return g_min;
        }
        let idx = self.levels.partition_point(|&g| g < target);
        if idx == self.levels.len() {
            return self.max();
        }
        let hi = self.levels[idx];
        let lo = self.levels[idx - 1];
        // ties go to the lower level
        if hi - target < target - lo {
            hi
        } else {
            lo
        }
    }
}

/// `num_levels` uniformly spaced conductances on `[g_max / ratio, g_max]`.
pub fn build_level_set(policy: &DevicePolicy) -> Result<LevelSet> {
    policy.validate()?;
    let g_min = policy.g_min();
    let steps = (policy.num_levels - 1) as f64;
    let span = policy.g_max - g_min;
    let mut levels: Vec<f64> = (0..policy.num_levels)
        .map(|k| g_min + span * (k as f64) / steps)
        .collect();
    // pin the endpoints exactly
    levels[0] = g_min;
    *levels.last_mut().unwrap() = policy.g_max;
    LevelSet::new(levels)
}

/// Programmed array state.
#[derive(Debug, Clone, PartialEq)]
pub struct ConductanceMatrix {
    /// Device conductances (S), all >= 0.
    pub g: DMatrix<f64>,
    /// Input conductance (S).
    pub g0: f64,
    pub policy_used: Option<DevicePolicy>,
}

impl ConductanceMatrix {
    pub fn new(g: DMatrix<f64>, g0: f64) -> Result<Self> {
        if !(g0 > 0.0) || !g0.is_finite() {
            return Err(Error::Domain(format!("g0 must be > 0, got {g0}")));
        }
        if g.nrows() != g.ncols() {
            return Err(Error::Domain("conductance matrix must be square".into()));
        }
        if g.iter().any(|v| !(*v >= 0.0) || !v.is_finite()) {
            return Err(Error::Domain("conductances must be finite and >= 0".into()));
        }
        Ok(ConductanceMatrix {
            g,
            g0,
            policy_used: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.g.nrows()
    }
}

fn check_mappable(a: &DMatrix<f64>) -> Result<f64> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::Domain("coefficient matrix must be square and nonempty".into()));
    }
    let mut max = 0.0f64;
    for &v in a.iter() {
        if !v.is_finite() {
            return Err(Error::Domain("coefficient matrix has non-finite entries".into()));
        }
        if v < 0.0 {
            return Err(Error::Domain(format!(
                "negative coefficient {v} cannot be mapped to a conductance"
            )));
        }
        max = max.max(v);
    }
    if max == 0.0 {
        return Err(Error::Domain("all-zero coefficient matrix".into()));
    }
    Ok(max)
}

/// Program `a` onto an explicit level set.
///
/// The scale `gamma = max(levels) / max(a)` maps the largest coefficient to
/// the top level, and the returned `g0 = gamma` so that [`read_effective`]
/// recovers `a` up to quantization and noise. Noise is drawn for every
/// device in row-major order, clipped to +/-3 sigma, and only applied to
/// programmed (nonzero) devices; results are floored at 0 S.
pub fn program_on_levels(
    a: &DMatrix<f64>,
    levels: &LevelSet,
    sigma: f64,
    seed: u64,
) -> Result<ConductanceMatrix> {
    let a_max = check_mappable(a)?;
    if !(sigma >= 0.0) || !sigma.is_finite() {
        return Err(Error::Config(format!("sigma must be >= 0, got {sigma}")));
    }
    let gamma = levels.max() / a_max;
    let n = a.nrows();
    let mut g = DMatrix::zeros(n, n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let normal = if sigma > 0.0 {
        Some(Normal::new(0.0, sigma).map_err(|e| Error::Config(e.to_string()))?)
    } else {
        None
    };
    let clip = 3.0 * sigma;
    for i in 0..n {
        for j in 0..n {
            let nominal = levels.snap(gamma * a[(i, j)]);
            let delta = match &normal {
                Some(d) => d.sample(&mut rng).clamp(-clip, clip),
                None => 0.0,
            };
            g[(i, j)] = if nominal > 0.0 {
                (nominal + delta).max(0.0)
            } else {
                0.0
            };
        }
    }
    Ok(ConductanceMatrix {
        g,
        g0: gamma,
        policy_used: None,
    })
}

/// Program `a` with a uniform level set built from `policy`.
pub fn program(a: &DMatrix<f64>, policy: &DevicePolicy) -> Result<ConductanceMatrix> {
    let levels = build_level_set(policy)?;
    let mut cm = program_on_levels(a, &levels, policy.sigma(), policy.seed)?;
    cm.policy_used = Some(policy.clone());
    Ok(cm)
}

/// Dimensionless coefficients `g_ij / g0`.
pub fn read_effective(cm: &ConductanceMatrix) -> DMatrix<f64> {
    &cm.g / cm.g0
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn policy(levels: usize, ratio: f64, noise: NoiseRule) -> DevicePolicy {
        DevicePolicy {
            num_levels: levels,
            g_max: 1e-4,
            ratio,
            noise,
            seed: 7,
        }
    }

    #[test]
    fn two_level_set_is_endpoints() {
        let ls = build_level_set(&policy(2, 1000.0, NoiseRule::None)).unwrap();
        // 1e-4 / 1e3 rounds one ulp above 1e-7
        assert_relative_eq!(ls.levels()[0], 1e-7, max_relative = 1e-15);
        assert_eq!(ls.levels()[1], 1e-4);
        assert_eq!(ls.len(), 2);
    }

    #[test]
    fn sixty_four_levels_uniform() {
        let ls = build_level_set(&policy(64, 1000.0, NoiseRule::None)).unwrap();
        assert_eq!(ls.len(), 64);
        assert_relative_eq!(ls.min(), 1e-7, max_relative = 1e-15);
        assert_eq!(ls.max(), 1e-4);
        let step = (1e-4 - 1e-7) / 63.0;
        for w in ls.levels().windows(2) {
            assert_relative_eq!(w[1] - w[0], step, max_relative = 1e-9);
        }
    }

    #[test]
    fn measured_levels() {
        let ls = LevelSet::measured();
        let us: Vec<f64> = ls.levels().iter().map(|g| (g * 1e6).round()).collect();
        assert_eq!(us, vec![10.0, 15.0, 20.0, 30.0, 50.0, 60.0, 80.0, 120.0]);
    }

    #[test]
    fn invalid_policies_rejected() {
        assert!(matches!(
            build_level_set(&policy(1, 10.0, NoiseRule::None)),
            Err(Error::Config(_))
        ));
        assert!(matches!(
            build_level_set(&policy(8, 1.0, NoiseRule::None)),
            Err(Error::Config(_))
        ));
        let mut p = policy(8, 10.0, NoiseRule::None);
        p.g_max = 0.0;
        assert!(p.validate().is_err());
    }

    #[test]
    fn sigma_follows_level_spacing() {
        let p = policy(64, 1000.0, NoiseRule::default());
        assert_relative_eq!(p.sigma(), 1e-4 / 64.0 / 6.0);
    }

    #[test]
    fn identity_programs_to_top_level() {
        let a = DMatrix::identity(3, 3);
        let cm = program(&a, &policy(64, 1000.0, NoiseRule::None)).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                let want = if i == j { 1e-4 } else { 0.0 };
                assert_eq!(cm.g[(i, j)], want);
            }
        }
        assert_eq!(read_effective(&cm), a);
    }

    #[test]
    fn negative_and_zero_matrices_rejected() {
        let p = policy(64, 1000.0, NoiseRule::None);
        let neg = DMatrix::from_row_slice(2, 2, &[1.0, -0.1, 0.0, 1.0]);
        assert!(matches!(program(&neg, &p), Err(Error::Domain(_))));
        assert!(matches!(
            program(&DMatrix::zeros(2, 2), &p),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn read_effective_three_by_three() {
        let g = DMatrix::from_row_slice(
            3,
            3,
            &[120.0, 15.0, 80.0, 50.0, 50.0, 60.0, 60.0, 10.0, 80.0],
        ) * 1e-6;
        let cm = ConductanceMatrix::new(g, 100e-6).unwrap();
        let a = read_effective(&cm);
        let want = [1.2, 0.15, 0.8, 0.5, 0.5, 0.6, 0.6, 0.1, 0.8];
        for (got, want) in a.transpose().iter().zip(want) {
            assert_relative_eq!(*got, want, max_relative = 1e-12);
        }
        let diag = ConductanceMatrix::new(DMatrix::identity(2, 2) * 100e-6, 100e-6).unwrap();
        assert_eq!(read_effective(&diag), DMatrix::identity(2, 2));
    }

    #[test]
    fn same_seed_same_matrix_different_seed_differs() {
        let a = DMatrix::from_fn(6, 6, |i, j| 1.0 / (1.0 + (i as f64 - j as f64).abs()));
        let p = policy(64, 1000.0, NoiseRule::default());
        let x = program(&a, &p).unwrap();
        let y = program(&a, &p).unwrap();
        assert_eq!(x, y);
        let mut q = p.clone();
        q.seed += 1;
        let z = program(&a, &q).unwrap();
        assert_ne!(x.g, z.g);
    }

    #[test]
    fn sub_minimum_targets() {
        // g_min = 1e-7 S; gamma = 1e-4 for max coefficient 1
        let ls = build_level_set(&policy(64, 1000.0, NoiseRule::None)).unwrap();
        let g_min = ls.min();
        assert_eq!(ls.snap(0.49e-7), 0.0);
        assert_eq!(ls.snap(0.5 * g_min), g_min);
        assert_eq!(ls.snap(0.9e-7), g_min);
        assert_eq!(ls.snap(2e-4), 1e-4);
    }
}
