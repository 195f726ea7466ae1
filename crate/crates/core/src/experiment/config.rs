//! TOML experiment descriptions.
//!
//! ```toml
//! scenario = "scaling"
//! seed = 42
//! output_dir = "out/scaling"
//!
//! [solver]
//! epsilon = 1e-3
//! gbw = 1e8
//!
//! [device]
//! levels = 64
//! ratio = 1e3
//!
//! [scaling]
//! sizes = [3, 10, 30, 100, 300]
//! beta = 1.0
//! vectors = 100
//! variants = ["ideal", "noisy"]
//! ```
//!
//! Every section is optional; omitted keys take the defaults below.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::device::{DevicePolicy, NoiseRule};
use crate::dynamics::{AlphaRule, NormKind, OpAmpModel, SolveConfig};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Transient,
    LambdaSweep,
    Inversion,
    Scaling,
    SparseSuite,
    Estimate,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Transient,
        Scenario::LambdaSweep,
        Scenario::Inversion,
        Scenario::Scaling,
        Scenario::SparseSuite,
        Scenario::Estimate,
    ];

    /// Identifier written to the `scenario` column.
    pub fn id(self) -> &'static str {
        match self {
            Scenario::Transient => "transient",
            Scenario::LambdaSweep => "lambda_sweep",
            Scenario::Inversion => "inversion",
            Scenario::Scaling => "scaling",
            Scenario::SparseSuite => "sparse_suite",
            Scenario::Estimate => "estimate",
        }
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.replace('-', "_");
        Scenario::ALL
            .into_iter()
            .find(|sc| sc.id() == key)
            .ok_or_else(|| Error::Config(format!("unknown scenario {s:?}")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NormChoice {
    #[default]
    L2,
    ANorm,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverParams {
    pub epsilon: f64,
    /// Gain-bandwidth product (rad/s).
    pub gbw: f64,
    pub l0: f64,
    /// V/s.
    pub slew_rate: f64,
    pub norm: NormChoice,
    /// `alpha = alpha_fraction / rho(M)` unless `alpha` is set.
    pub alpha_fraction: f64,
    pub alpha: Option<f64>,
    pub max_steps: usize,
    pub gain_correction: bool,
}

impl Default for SolverParams {
    fn default() -> Self {
        SolverParams {
            epsilon: 1e-3,
            gbw: crate::dynamics::DEFAULT_GBW,
            l0: crate::dynamics::DEFAULT_L0,
            slew_rate: crate::dynamics::DEFAULT_SLEW_RATE,
            norm: NormChoice::L2,
            alpha_fraction: 0.1,
            alpha: None,
            max_steps: 10_000_000,
            gain_correction: false,
        }
    }
}

impl SolverParams {
    pub fn op_amp(&self) -> Result<OpAmpModel> {
        if !(self.gbw > 0.0) || !self.gbw.is_finite() {
            return Err(Error::Config(format!("gbw must be > 0, got {}", self.gbw)));
        }
        OpAmpModel::new(self.l0, self.gbw / self.l0, self.slew_rate)
    }

    pub fn solve_config(&self) -> SolveConfig {
        SolveConfig {
            epsilon: self.epsilon,
            norm: match self.norm {
                NormChoice::L2 => NormKind::L2,
                NormChoice::ANorm => NormKind::ANorm,
            },
            alpha_rule: match self.alpha {
                Some(a) => AlphaRule::Fixed(a),
                None => AlphaRule::SpectralFraction(self.alpha_fraction),
            },
            max_steps: self.max_steps,
            include_gain_correction: self.gain_correction,
            allow_unstable: false,
            record_trace: false,
        }
    }

    fn validate(&self) -> Result<()> {
        self.op_amp()?;
        self.solve_config().validate()?;
        if self.alpha.is_none() && !(self.alpha_fraction > 0.0 && self.alpha_fraction < 1.0) {
            return Err(Error::Config(format!(
                "alpha_fraction must lie in (0, 1), got {}",
                self.alpha_fraction
            )));
        }
        if let Some(a) = self.alpha {
            if !(a > 0.0) || !a.is_finite() {
                return Err(Error::Config(format!("alpha must be > 0, got {a}")));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DeviceParams {
    pub levels: usize,
    /// Siemens.
    pub g_max: f64,
    pub ratio: f64,
    /// Programming noise sigma as a fraction of `g_max / levels`.
    pub noise_fraction: f64,
}

impl Default for DeviceParams {
    fn default() -> Self {
        DeviceParams {
            levels: 64,
            g_max: 100e-6,
            ratio: 1e3,
            noise_fraction: 1.0 / 6.0,
        }
    }
}

impl DeviceParams {
    pub fn policy(&self, seed: u64) -> DevicePolicy {
        DevicePolicy {
            num_levels: self.levels,
            g_max: self.g_max,
            ratio: self.ratio,
            noise: if self.noise_fraction == 0.0 {
                NoiseRule::None
            } else {
                NoiseRule::LevelFraction(self.noise_fraction)
            },
            seed,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TransientParams {
    /// Row-major coefficient matrix.
    pub matrix: Vec<Vec<f64>>,
    pub b: Vec<f64>,
}

impl Default for TransientParams {
    fn default() -> Self {
        TransientParams {
            matrix: vec![
                vec![1.2, 0.15, 0.8],
                vec![0.5, 0.5, 0.6],
                vec![0.6, 0.1, 0.8],
            ],
            b: vec![-0.12, 0.36, 0.24],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LambdaSweepParams {
    /// Number of random discrete-level matrices.
    pub matrices: usize,
    /// Right-hand sides per matrix.
    pub vectors: usize,
    pub dim: usize,
    pub symmetric: bool,
    pub min_lambda: f64,
    pub max_tries: usize,
}

impl Default for LambdaSweepParams {
    fn default() -> Self {
        LambdaSweepParams {
            matrices: 40,
            vectors: 15,
            dim: 3,
            symmetric: true,
            min_lambda: 0.0,
            max_tries: 100_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct InversionParams {
    pub n: usize,
    pub beta: f64,
    /// Program the matrix onto noisy device levels first.
    pub noisy: bool,
}

impl Default for InversionParams {
    fn default() -> Self {
        InversionParams {
            n: 10,
            beta: 1.0,
            noisy: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    /// Exact coefficients.
    Ideal,
    /// Quantized to device levels with programming noise.
    Noisy,
}

impl Variant {
    pub fn id(self) -> &'static str {
        match self {
            Variant::Ideal => "ideal",
            Variant::Noisy => "noisy",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScalingParams {
    pub sizes: Vec<usize>,
    pub beta: f64,
    pub vectors: usize,
    pub variants: Vec<Variant>,
}

impl Default for ScalingParams {
    fn default() -> Self {
        ScalingParams {
            sizes: vec![3, 10, 30, 100, 300],
            beta: 1.0,
            vectors: 100,
            variants: vec![Variant::Ideal, Variant::Noisy],
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SparseSuiteParams {
    pub systems: usize,
    pub s: usize,
    pub n_min: usize,
    pub n_max: usize,
    /// Log-uniform range for the minimum eigenvalue of the general population.
    pub lambda_lo: f64,
    pub lambda_hi: f64,
    /// Uniform range for the fixed-spectrum subset.
    pub subset_lo: f64,
    pub subset_hi: f64,
    /// Fraction of systems drawn into the subset range.
    pub subset_fraction: f64,
    /// Scale each right-hand side to unit length.
    pub unit_b: bool,
}

impl Default for SparseSuiteParams {
    fn default() -> Self {
        SparseSuiteParams {
            systems: 1000,
            s: 10,
            n_min: 20,
            n_max: 200,
            lambda_lo: 0.01,
            lambda_hi: 1.0,
            subset_lo: 0.9,
            subset_hi: 1.0,
            subset_fraction: 0.5,
            unit_b: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EstimateParams {
    pub sizes: Vec<usize>,
    pub systems_per_size: usize,
    pub s: usize,
    pub lambda_lo: f64,
    pub lambda_hi: f64,
}

impl Default for EstimateParams {
    fn default() -> Self {
        EstimateParams {
            sizes: vec![20, 50, 100, 200, 500],
            systems_per_size: 4,
            s: 10,
            lambda_lo: 0.9,
            lambda_hi: 1.0,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CheckParams {
    /// Compare eigenvalues of `M` from the general solver against the
    /// symmetric similarity for every symmetric matrix.
    pub eigen_identity: bool,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSpec {
    pub scenario: Scenario,
    /// Master seed; required before a run starts.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub threads: Option<usize>,
    #[serde(default)]
    pub solver: SolverParams,
    #[serde(default)]
    pub device: DeviceParams,
    #[serde(default)]
    pub checks: CheckParams,
    #[serde(default)]
    pub transient: TransientParams,
    #[serde(default)]
    pub lambda_sweep: LambdaSweepParams,
    #[serde(default)]
    pub inversion: InversionParams,
    #[serde(default)]
    pub scaling: ScalingParams,
    #[serde(default)]
    pub sparse_suite: SparseSuiteParams,
    #[serde(default)]
    pub estimate: EstimateParams,
}

impl ExperimentSpec {
    /// Defaults for `scenario` with the given master seed.
    pub fn new(scenario: Scenario, seed: u64) -> Self {
        ExperimentSpec {
            scenario,
            seed: Some(seed),
            output_dir: None,
            threads: None,
            solver: SolverParams::default(),
            device: DeviceParams::default(),
            checks: CheckParams::default(),
            transient: TransientParams::default(),
            lambda_sweep: LambdaSweepParams::default(),
            inversion: InversionParams::default(),
            scaling: ScalingParams::default(),
            sparse_suite: SparseSuiteParams::default(),
            estimate: EstimateParams::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text)
    }

    pub fn master_seed(&self) -> Result<u64> {
        self.seed
            .ok_or_else(|| Error::Config("a master seed is required (seed = <u64>)".into()))
    }

    /// Number of records a run of this spec produces.
    pub fn declared_systems(&self) -> usize {
        match self.scenario {
            Scenario::Transient => 1,
            Scenario::LambdaSweep => self.lambda_sweep.matrices * self.lambda_sweep.vectors,
            Scenario::Inversion => self.inversion.n,
            Scenario::Scaling => {
                self.scaling.sizes.len() * self.scaling.vectors * self.scaling.variants.len()
            }
            Scenario::SparseSuite => self.sparse_suite.systems,
            Scenario::Estimate => self.estimate.sizes.len() * self.estimate.systems_per_size,
        }
    }

    /// Check every parameter the selected scenario reads.
    pub fn validate(&self) -> Result<()> {
        self.master_seed()?;
        self.solver.validate()?;
        if self.threads == Some(0) {
            return Err(Error::Config("threads must be positive".into()));
        }
        let needs_device = match self.scenario {
            Scenario::Inversion => self.inversion.noisy,
            Scenario::Scaling => self.scaling.variants.contains(&Variant::Noisy),
            _ => false,
        };
        if needs_device {
            let d = &self.device;
            if !(d.noise_fraction >= 0.0) || !d.noise_fraction.is_finite() {
                return Err(Error::Config(format!(
                    "noise_fraction must be >= 0, got {}",
                    d.noise_fraction
                )));
            }
            d.policy(0).validate()?;
        }
        match self.scenario {
            Scenario::Transient => {
                let t = &self.transient;
                let n = t.matrix.len();
                if n == 0 || t.matrix.iter().any(|r| r.len() != n) {
                    return Err(Error::Config("transient matrix must be square and nonempty".into()));
                }
                if t.b.len() != n {
                    return Err(Error::Config(format!(
                        "transient b has length {}, expected {n}",
                        t.b.len()
                    )));
                }
            }
            Scenario::LambdaSweep => {
                let p = &self.lambda_sweep;
                positive("lambda_sweep.matrices", p.matrices)?;
                positive("lambda_sweep.vectors", p.vectors)?;
                positive("lambda_sweep.dim", p.dim)?;
                positive("lambda_sweep.max_tries", p.max_tries)?;
            }
            Scenario::Inversion => {
                let p = &self.inversion;
                if p.n < 2 {
                    return Err(Error::Config("inversion.n must be >= 2".into()));
                }
                beta_ok(p.beta)?;
            }
            Scenario::Scaling => {
                let p = &self.scaling;
                let mut sizes = p.sizes.clone();
                sizes.sort_unstable();
                sizes.dedup();
                if sizes.len() < 4 || sizes.len() != p.sizes.len() || sizes[0] < 2 {
                    return Err(Error::Config(
                        "scaling.sizes needs >= 4 distinct sizes, each >= 2".into(),
                    ));
                }
                beta_ok(p.beta)?;
                positive("scaling.vectors", p.vectors)?;
                if p.variants.is_empty() {
                    return Err(Error::Config("scaling.variants is empty".into()));
                }
            }
            Scenario::SparseSuite => {
                let p = &self.sparse_suite;
                positive("sparse_suite.systems", p.systems)?;
                if p.n_min == 0 || p.n_min > p.n_max {
                    return Err(Error::Config("need 0 < n_min <= n_max".into()));
                }
                if p.s == 0 || p.s > p.n_min {
                    return Err(Error::Config(format!(
                        "sparse_suite.s = {} must lie in [1, n_min]",
                        p.s
                    )));
                }
                range_ok("lambda", p.lambda_lo, p.lambda_hi)?;
                range_ok("subset", p.subset_lo, p.subset_hi)?;
                if !(0.0..=1.0).contains(&p.subset_fraction) {
                    return Err(Error::Config("subset_fraction must lie in [0, 1]".into()));
                }
            }
            Scenario::Estimate => {
                let p = &self.estimate;
                positive("estimate.systems_per_size", p.systems_per_size)?;
                if p.sizes.is_empty() || p.sizes.iter().any(|&n| n < p.s.max(2)) {
                    return Err(Error::Config(
                        "estimate.sizes must be nonempty and each >= max(s, 2)".into(),
                    ));
                }
                positive("estimate.s", p.s)?;
                range_ok("lambda", p.lambda_lo, p.lambda_hi)?;
            }
        }
        Ok(())
    }
}

fn positive(name: &str, v: usize) -> Result<()> {
    if v == 0 {
        return Err(Error::Config(format!("{name} must be positive")));
    }
    Ok(())
}

fn beta_ok(beta: f64) -> Result<()> {
    if !(beta > 0.0) || !beta.is_finite() {
        return Err(Error::Config(format!("beta must be > 0, got {beta}")));
    }
    Ok(())
}

fn range_ok(name: &str, lo: f64, hi: f64) -> Result<()> {
    if !(lo > 0.0) || !(lo <= hi) || !hi.is_finite() {
        return Err(Error::Config(format!("{name} range [{lo}, {hi}] must satisfy 0 < lo <= hi")));
    }
    Ok(())
}
