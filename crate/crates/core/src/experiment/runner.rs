//! Scenario execution.
//!
//! Each scenario is a list of problems (one matrix plus its right-hand
//! sides). Problems are generated and solved inside the worker that owns
//! them, from seeds derived only from the master seed and the problem's
//! index, so thread count and scheduling never change the records.

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use sha2::{Digest, Sha256};

use super::config::{ExperimentSpec, Scenario, Variant};
use crate::baseline::conjugate_gradient;
use crate::device::{program, read_effective, LevelSet, DEFAULT_G0};
use crate::dynamics::{
    build_feedback, slew_check, stability_report, Circuit, FeedbackSystem, NormKind, OpAmpModel,
    SolveConfig, SolveResult, TracePoint,
};
use crate::error::{Error, Result};
use crate::generators::{
    covariance_matrix, random_discrete_pd, random_vector, sparse_pd, stream_seed, CovarianceSpec,
    DiscretePdSpec, SparsePdSpec,
};
use crate::linalg::is_symmetric;
use crate::scaling::{fit_scaling, linear_fit, pearson};
use crate::spectral::{
    associated_eigenvalues_symmetric, complexity_cg_estimate, complexity_quantum_estimate,
    general_eigenvalues, symmetric_eigenvalues,
};

/// Largest relative entry of `A^-1` regarded as near zero in inversion summaries.
pub const INVERSE_SIGNIFICANCE: f64 = 0.05;

// stream ids for per-system seed derivation
const STREAM_MATRIX: u64 = 1;
const STREAM_VECTOR: u64 = 2;
const STREAM_NOISE: u64 = 3;
const STREAM_SHAPE: u64 = 4;

fn system_seed(master: u64, stream: u64, index: usize) -> u64 {
    stream_seed(stream_seed(master, stream), index as u64)
}

/// One solved (or rejected) linear system.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub scenario: Scenario,
    pub system_index: usize,
    pub n: usize,
    /// Covariance decay exponent or sparsity, where the family has one.
    pub beta_or_s: Option<f64>,
    /// Minimum eigenvalue of the symmetric part of A.
    pub lambda_min: f64,
    pub lambda_m_min: f64,
    pub u_min: f64,
    /// Only present for converged runs.
    pub tau_measured_s: Option<f64>,
    pub tau_bound_s: Option<f64>,
    pub converged: bool,
    pub diverged: bool,
    pub steps: usize,
    pub cg_iterations: Option<usize>,
    pub final_error: Option<f64>,
    pub epsilon: f64,
    pub symmetric: bool,
    /// Relative gap between general and similarity eigenvalues of M.
    pub eigen_gap: Option<f64>,
    /// SHA-256 prefix over `(n, A, b)`.
    pub digest: String,
    pub notes: Vec<String>,
}

impl RunRecord {
    pub fn note(&self, key: &str) -> Option<&str> {
        self.notes.iter().find_map(|n| {
            let (k, v) = n.split_once('=')?;
            (k == key).then_some(v)
        })
    }

    pub fn has_flag(&self, flag: &str) -> bool {
        self.notes.iter().any(|n| n == flag)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct InverseTable {
    pub computed: DMatrix<f64>,
    pub reference: DMatrix<f64>,
}

impl InverseTable {
    /// Largest relative error over entries at least `INVERSE_SIGNIFICANCE`
    /// of the largest reference magnitude, and how many such entries exist.
    pub fn significant_error(&self) -> (f64, usize) {
        let scale = self.reference.amax();
        let mut worst = 0.0f64;
        let mut count = 0;
        for (c, r) in self.computed.iter().zip(self.reference.iter()) {
            if r.abs() >= INVERSE_SIGNIFICANCE * scale {
                worst = worst.max((c - r).abs() / r.abs());
                count += 1;
            }
        }
        (worst, count)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub scenario: Scenario,
    pub records: Vec<RunRecord>,
    pub summary: Vec<String>,
    pub trace: Option<Vec<TracePoint>>,
    pub inverse: Option<InverseTable>,
}

struct Problem {
    a: DMatrix<f64>,
    beta_or_s: Option<f64>,
    notes: Vec<String>,
    rhs: Vec<(usize, DVector<f64>)>,
    cg: bool,
    estimates: bool,
    trace: bool,
}

impl Problem {
    fn new(a: DMatrix<f64>, rhs: Vec<(usize, DVector<f64>)>) -> Self {
        Problem {
            a,
            beta_or_s: None,
            notes: Vec::new(),
            rhs,
            cg: false,
            estimates: false,
            trace: false,
        }
    }
}

struct Solved {
    record: RunRecord,
    result: Option<SolveResult>,
}

struct Ctx<'a> {
    spec: &'a ExperimentSpec,
    master: u64,
    oa: OpAmpModel,
    cfg: SolveConfig,
}

/// Run `spec` and return its records and summary; nothing is written.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<Outcome> {
    spec.validate()?;
    match spec.threads {
        Some(t) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(t)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            pool.install(|| run_validated(spec))
        }
        None => run_validated(spec),
    }
}

fn run_validated(spec: &ExperimentSpec) -> Result<Outcome> {
    let ctx = Ctx {
        spec,
        master: spec.master_seed()?,
        oa: spec.solver.op_amp()?,
        cfg: spec.solver.solve_config(),
    };
    let mut outcome = match spec.scenario {
        Scenario::Transient => transient(&ctx)?,
        Scenario::LambdaSweep => lambda_sweep(&ctx)?,
        Scenario::Inversion => inversion(&ctx)?,
        Scenario::Scaling => scaling(&ctx)?,
        Scenario::SparseSuite => sparse_suite(&ctx)?,
        Scenario::Estimate => estimate(&ctx)?,
    };
    let mut summary = header(&ctx, &outcome.records);
    summary.append(&mut outcome.summary);
    outcome.summary = summary;
    Ok(outcome)
}

fn digest(a: &DMatrix<f64>, b: &DVector<f64>) -> String {
    let mut h = Sha256::new();
    h.update((a.nrows() as u64).to_le_bytes());
    // row-major so the digest matches how matrices are written down
    for row in a.row_iter() {
        for v in row.iter() {
            h.update(v.to_le_bytes());
        }
    }
    for v in b.iter() {
        h.update(v.to_le_bytes());
    }
    hex::encode(&h.finalize()[..8])
}

/// Relative gap between eigenvalues of `M` from the general solver and
/// from the symmetric similarity `U^1/2 A U^1/2`.
pub fn eigen_identity_gap(sys: &FeedbackSystem) -> Result<f64> {
    let general = general_eigenvalues(&sys.m)?;
    let similar = associated_eigenvalues_symmetric(&sys.a, &sys.u)?;
    let scale = similar
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let gap = general
        .iter()
        .zip(&similar)
        .map(|(g, s)| (g.re - s).abs().max(g.im.abs()))
        .fold(0.0, f64::max);
    Ok(gap / scale)
}

fn solve_problem(ctx: &Ctx, p: Problem) -> Result<Vec<Solved>> {
    let n = p.a.nrows();
    let eps = ctx.cfg.epsilon;
    let sys = build_feedback(&p.a)?;
    let symmetric = is_symmetric(&p.a, 1e-12);
    let sym_part = (&p.a + p.a.transpose()) * 0.5;
    let spectrum = symmetric_eigenvalues(&sym_part)?;
    let lambda_min = spectrum[0];
    let lambda_max = spectrum[n - 1];
    let stability = stability_report(&sys, &ctx.oa)?;
    let eigen_gap = if ctx.spec.checks.eigen_identity && symmetric && lambda_min > 0.0 {
        Some(eigen_identity_gap(&sys)?)
    } else {
        None
    };

    let mut notes = p.notes.clone();
    if p.estimates {
        let s = p.beta_or_s.unwrap_or(n as f64);
        let cg = complexity_cg_estimate(n as f64, s, lambda_max, lambda_min, eps)?;
        let q = complexity_quantum_estimate(n as f64, s, lambda_max, lambda_min, eps)?;
        notes.push(format!("cg_estimate={cg}"));
        notes.push(format!("quantum_estimate={q}"));
    }
    let base = |index: usize, b: &DVector<f64>| RunRecord {
        scenario: ctx.spec.scenario,
        system_index: index,
        n,
        beta_or_s: p.beta_or_s,
        lambda_min,
        lambda_m_min: stability.lambda_m_min,
        u_min: sys.u_min(),
        tau_measured_s: None,
        tau_bound_s: None,
        converged: false,
        diverged: false,
        steps: 0,
        cg_iterations: None,
        final_error: None,
        epsilon: eps,
        symmetric,
        eigen_gap,
        digest: digest(&p.a, b),
        notes: notes.clone(),
    };

    if !stability.stable {
        // recorded with its verdict rather than aborting the run
        return Ok(p
            .rhs
            .iter()
            .map(|(i, b)| {
                let mut record = base(*i, b);
                record.notes.push("unstable".into());
                Solved {
                    record,
                    result: None,
                }
            })
            .collect());
    }

    let mut cfg = ctx.cfg.clone();
    cfg.record_trace = p.trace;
    let circuit = Circuit::with_stability(sys.clone(), ctx.oa, cfg, stability.clone())?;
    let bound_valid = symmetric && lambda_min > 0.0;
    p.rhs
        .par_iter()
        .map(|(i, b)| {
            let res = circuit.solve(b)?;
            let mut record = base(*i, b);
            record.converged = res.converged;
            record.diverged = res.diverged;
            record.steps = res.steps;
            record.final_error = Some(res.final_error);
            record.tau_measured_s = res.converged.then_some(res.tau);
            if bound_valid {
                record.tau_bound_s = circuit.time_bound(b, eps).ok();
            }
            if p.cg {
                let cg = conjugate_gradient(&p.a, b, eps, 10 * n + 100)?;
                record.cg_iterations = Some(cg.iterations);
                if !cg.converged {
                    record.notes.push("cg_not_converged".into());
                }
            }
            if res.diverged {
                record.notes.push("diverged".into());
            } else if !res.converged {
                record.notes.push("timeout".into());
            }
            Ok(Solved {
                record,
                result: Some(res),
            })
        })
        .collect()
}

/// Generate and solve `count` problems in parallel, records sorted by index.
fn run_problems<F>(ctx: &Ctx, count: usize, make: F) -> Result<Vec<Solved>>
where
    F: Fn(usize) -> Result<Problem> + Sync,
{
    let nested: Vec<Vec<Solved>> = (0..count)
        .into_par_iter()
        .map(|k| solve_problem(ctx, make(k)?))
        .collect::<Result<_>>()?;
    let mut all: Vec<Solved> = nested.into_iter().flatten().collect();
    all.sort_by_key(|s| s.record.system_index);
    Ok(all)
}

fn records_of(solved: Vec<Solved>) -> Vec<RunRecord> {
    solved.into_iter().map(|s| s.record).collect()
}

fn transient(ctx: &Ctx) -> Result<Outcome> {
    let t = &ctx.spec.transient;
    let n = t.matrix.len();
    let a = DMatrix::from_row_iterator(n, n, t.matrix.iter().flatten().copied());
    let b = DVector::from_vec(t.b.clone());
    let mut solved = run_problems(ctx, 1, |_| {
        let mut p = Problem::new(a.clone(), vec![(0, b.clone())]);
        p.trace = true;
        Ok(p)
    })?;
    let s = solved.pop().expect("one transient system");
    let mut summary = Vec::new();
    let mut trace = None;
    if let Some(res) = s.result {
        summary.push(format!("x_final: {}", fmt_vec(&res.x_final)));
        summary.push(format!("x_direct: {}", fmt_vec(&res.x_star)));
        summary.push(format!(
            "tau: {} s (tau*gbw = {})",
            fmt(res.tau),
            fmt(res.tau * ctx.oa.gbw())
        ));
        let slew = slew_check(&res, &ctx.oa)?;
        summary.push(format!(
            "slew: max |dx/dt| = {} V/s, limit {} V/s, within limit: {}",
            fmt(slew.max_rate),
            fmt(ctx.oa.slew_rate),
            slew.within_limit
        ));
        trace = res.trace;
    }
    Ok(Outcome {
        scenario: Scenario::Transient,
        records: vec![s.record],
        summary,
        trace,
        inverse: None,
    })
}

fn lambda_sweep(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.spec.lambda_sweep;
    let levels = LevelSet::measured();
    let gen = DiscretePdSpec {
        dim: p.dim,
        symmetric: p.symmetric,
        min_lambda: p.min_lambda,
        max_tries: p.max_tries,
    };
    let solved = run_problems(ctx, p.matrices, |i| {
        let m = random_discrete_pd(&gen, &levels, DEFAULT_G0, system_seed(ctx.master, STREAM_MATRIX, i))?;
        let rhs = (0..p.vectors)
            .map(|j| {
                let idx = i * p.vectors + j;
                let b = random_vector(p.dim, system_seed(ctx.master, STREAM_VECTOR, idx), -1.0, 1.0)?;
                Ok((idx, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prob = Problem::new(m.a, rhs);
        prob.notes.push(format!("matrix={i}"));
        Ok(prob)
    })?;
    let records = records_of(solved);
    let mut summary = Vec::new();
    let lambdas: Vec<f64> = records.iter().map(|r| r.lambda_min).collect();
    let lo = lambdas.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = lambdas.iter().copied().fold(0.0, f64::max);
    summary.push(format!(
        "lambda_min range: [{}, {}] ({:.2} decades)",
        fmt(lo),
        fmt(hi),
        (hi / lo).log10()
    ));
    match envelope_fit(&records) {
        Some((intercept, slope, r2)) => summary.push(format!(
            "upper envelope tau_max vs 1/lambda_M,min: intercept={} slope={} r2={}",
            fmt(intercept),
            fmt(slope),
            fmt(r2)
        )),
        None => summary.push("upper envelope: not enough converged matrices".into()),
    }
    Ok(Outcome {
        scenario: Scenario::LambdaSweep,
        records,
        summary,
        trace: None,
        inverse: None,
    })
}

/// Least-squares line through the per-matrix maximum of `tau` against
/// `1 / lambda_M,min`; returns `(intercept, slope, r_squared)`.
pub fn envelope_fit(records: &[RunRecord]) -> Option<(f64, f64, f64)> {
    let mut groups: Vec<(String, f64, f64)> = Vec::new();
    for r in records {
        let (Some(tau), Some(m)) = (r.tau_measured_s, r.note("matrix")) else {
            continue;
        };
        match groups.iter_mut().find(|g| g.0 == m) {
            Some(g) => g.2 = g.2.max(tau),
            None => groups.push((m.to_string(), 1.0 / r.lambda_m_min, tau)),
        }
    }
    let xs: Vec<f64> = groups.iter().map(|g| g.1).collect();
    let ys: Vec<f64> = groups.iter().map(|g| g.2).collect();
    linear_fit(&xs, &ys).ok()
}

fn inversion(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.spec.inversion;
    let reference_a = covariance_matrix(&CovarianceSpec { n: p.n, beta: p.beta })?;
    let a = if p.noisy {
        let policy = ctx.spec.device.policy(system_seed(ctx.master, STREAM_NOISE, 0));
        read_effective(&program(&reference_a, &policy)?)
    } else {
        reference_a.clone()
    };
    let variant = if p.noisy { Variant::Noisy } else { Variant::Ideal };
    let solved = run_problems(ctx, 1, |_| {
        let rhs = (0..p.n)
            .map(|j| (j, DVector::from_fn(p.n, |i, _| if i == j { 1.0 } else { 0.0 })))
            .collect();
        let mut prob = Problem::new(a.clone(), rhs);
        prob.beta_or_s = Some(p.beta);
        prob.notes.push(format!("variant={}", variant.id()));
        Ok(prob)
    })?;
    let reference = reference_a
        .clone()
        .try_inverse()
        .ok_or_else(|| Error::Numerical("reference matrix is singular".into()))?;
    let mut computed = DMatrix::zeros(p.n, p.n);
    for s in &solved {
        if let Some(res) = &s.result {
            if !res.converged {
                return Err(Error::Inversion {
                    column: s.record.system_index,
                    reason: if res.diverged { "diverged" } else { "did not converge" }.into(),
                });
            }
            computed.set_column(s.record.system_index, &res.x_final);
        } else {
            return Err(Error::Inversion {
                column: s.record.system_index,
                reason: "circuit is unstable".into(),
            });
        }
    }
    let table = InverseTable {
        computed,
        reference,
    };
    let (worst, count) = table.significant_error();
    let records = records_of(solved);
    let taus: Vec<f64> = records.iter().filter_map(|r| r.tau_measured_s).collect();
    let summary = vec![
        format!(
            "max relative error on {count} entries >= {}% of max |A^-1|: {}",
            INVERSE_SIGNIFICANCE * 100.0,
            fmt(worst)
        ),
        format!("mean column tau: {} s", fmt(mean(&taus))),
    ];
    Ok(Outcome {
        scenario: Scenario::Inversion,
        records,
        summary,
        trace: None,
        inverse: Some(table),
    })
}

fn scaling(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.spec.scaling;
    let nsizes = p.sizes.len();
    let solved = run_problems(ctx, p.variants.len() * nsizes, |k| {
        let (v, si) = (k / nsizes, k % nsizes);
        let n = p.sizes[si];
        let ideal = covariance_matrix(&CovarianceSpec { n, beta: p.beta })?;
        let a = match p.variants[v] {
            Variant::Ideal => ideal,
            Variant::Noisy => {
                let policy = ctx.spec.device.policy(system_seed(ctx.master, STREAM_NOISE, si));
                read_effective(&program(&ideal, &policy)?)
            }
        };
        // right-hand sides are shared between variants for paired comparison
        let rhs = (0..p.vectors)
            .map(|j| {
                let b = random_vector(n, system_seed(ctx.master, STREAM_VECTOR, si * p.vectors + j), -1.0, 1.0)?;
                Ok((k * p.vectors + j, b))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut prob = Problem::new(a, rhs);
        prob.beta_or_s = Some(p.beta);
        prob.notes.push(format!("variant={}", p.variants[v].id()));
        Ok(prob)
    })?;
    let records = records_of(solved);
    let mut summary = Vec::new();
    for variant in &p.variants {
        summary.push(format!("variant {}:", variant.id()));
        let means = mean_tau_by_size(&records, Some(*variant));
        for (n, tau) in &means {
            summary.push(format!(
                "  n={n} mean_tau={} s mean_tau_gbw={}",
                fmt(*tau),
                fmt(tau * ctx.oa.gbw())
            ));
        }
        let points: Vec<(f64, f64)> = means.iter().map(|(n, t)| (*n as f64, *t)).collect();
        match fit_scaling(&points) {
            Ok(fit) => {
                for c in &fit.candidates {
                    summary.push(format!(
                        "  fit {}: intercept={} slope={} r2={}",
                        c.kind,
                        fmt(c.intercept),
                        fmt(c.slope),
                        fmt(c.r_squared)
                    ));
                }
                summary.push(format!("  verdict: {}", fit.model_kind));
            }
            Err(e) => summary.push(format!("  fit skipped: {e}")),
        }
    }
    Ok(Outcome {
        scenario: Scenario::Scaling,
        records,
        summary,
        trace: None,
        inverse: None,
    })
}

/// Mean converged `tau` per size, ascending in `n`, optionally for one variant.
pub fn mean_tau_by_size(records: &[RunRecord], variant: Option<Variant>) -> Vec<(usize, f64)> {
    let mut sizes: Vec<usize> = records.iter().map(|r| r.n).collect();
    sizes.sort_unstable();
    sizes.dedup();
    sizes
        .into_iter()
        .filter_map(|n| {
            let taus: Vec<f64> = records
                .iter()
                .filter(|r| r.n == n)
                .filter(|r| variant.is_none_or(|v| r.note("variant") == Some(v.id())))
                .filter_map(|r| r.tau_measured_s)
                .collect();
            (!taus.is_empty()).then(|| (n, mean(&taus)))
        })
        .collect()
}

fn unit_or_raw(b: DVector<f64>, unit: bool) -> DVector<f64> {
    let norm = b.norm();
    if unit && norm > 0.0 {
        b / norm
    } else {
        b
    }
}

fn sparse_suite(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.spec.sparse_suite;
    let solved = run_problems(ctx, p.systems, |i| {
        let mut rng = ChaCha8Rng::seed_from_u64(system_seed(ctx.master, STREAM_SHAPE, i));
        let n = rng.random_range(p.n_min..=p.n_max);
        let subset = rng.random::<f64>() < p.subset_fraction;
        let lambda_target = if subset {
            rng.random_range(p.subset_lo..=p.subset_hi)
        } else {
            rng.random_range(p.lambda_lo.ln()..=p.lambda_hi.ln()).exp()
        };
        let a = sparse_pd(&SparsePdSpec {
            n,
            s: p.s,
            lambda_target,
            seed: system_seed(ctx.master, STREAM_MATRIX, i),
        })?;
        let b = random_vector(n, system_seed(ctx.master, STREAM_VECTOR, i), -1.0, 1.0)?;
        let mut prob = Problem::new(a, vec![(i, unit_or_raw(b, p.unit_b))]);
        prob.beta_or_s = Some(p.s as f64);
        prob.cg = true;
        if subset {
            prob.notes.push("subset".into());
        }
        Ok(prob)
    })?;
    let records = records_of(solved);
    let mut summary = Vec::new();
    if let Some(slope) = loglog_slope(&records) {
        summary.push(format!("log-log slope of tau vs lambda_min: {}", fmt(slope)));
    }
    let subset: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.has_flag("subset") && r.converged)
        .collect();
    summary.push(format!("subset systems: {}", subset.len()));
    if subset.len() >= 2 {
        let ns: Vec<f64> = subset.iter().map(|r| r.n as f64).collect();
        let taus: Vec<f64> = subset.iter().filter_map(|r| r.tau_measured_s).collect();
        let cg: Vec<f64> = subset.iter().map(|r| cg_work(r)).collect();
        summary.push(format!("subset pearson r(tau, n): {}", fmt(pearson(&ns, &taus)?)));
        summary.push(format!("subset pearson r(cg_work, n): {}", fmt(pearson(&ns, &cg)?)));
        if let Ok((_, slope, r2)) = linear_fit(&ns, &cg) {
            summary.push(format!(
                "subset cg_work vs n: slope={} r2={}",
                fmt(slope),
                fmt(r2)
            ));
        }
    }
    Ok(Outcome {
        scenario: Scenario::SparseSuite,
        records,
        summary,
        trace: None,
        inverse: None,
    })
}

/// CG work in multiply-adds: iterations times stored nonzeros (`n * s`).
pub fn cg_work(r: &RunRecord) -> f64 {
    let s = r.beta_or_s.unwrap_or(r.n as f64);
    r.cg_iterations.unwrap_or(0) as f64 * r.n as f64 * s
}

/// Slope of `ln tau` against `ln lambda_min` over converged records.
pub fn loglog_slope(records: &[RunRecord]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) = records
        .iter()
        .filter_map(|r| Some((r.lambda_min.ln(), r.tau_measured_s?.ln())))
        .unzip();
    linear_fit(&xs, &ys).ok().map(|f| f.1)
}

fn estimate(ctx: &Ctx) -> Result<Outcome> {
    let p = &ctx.spec.estimate;
    let per = p.systems_per_size;
    let solved = run_problems(ctx, p.sizes.len() * per, |idx| {
        let n = p.sizes[idx / per];
        let mut rng = ChaCha8Rng::seed_from_u64(system_seed(ctx.master, STREAM_SHAPE, idx));
        let lambda_target = rng.random_range(p.lambda_lo..=p.lambda_hi);
        let a = sparse_pd(&SparsePdSpec {
            n,
            s: p.s,
            lambda_target,
            seed: system_seed(ctx.master, STREAM_MATRIX, idx),
        })?;
        let b = random_vector(n, system_seed(ctx.master, STREAM_VECTOR, idx), -1.0, 1.0)?;
        let mut prob = Problem::new(a, vec![(idx, unit_or_raw(b, true))]);
        prob.beta_or_s = Some(p.s as f64);
        prob.cg = true;
        prob.estimates = true;
        Ok(prob)
    })?;
    let records = records_of(solved);
    let mut summary = vec!["relative computing time per size (means):".to_string()];
    for &n in &p.sizes {
        let rs: Vec<&RunRecord> = records.iter().filter(|r| r.n == n).collect();
        let pick = |key: &str| -> f64 {
            mean(
                &rs.iter()
                    .filter_map(|r| r.note(key)?.parse::<f64>().ok())
                    .collect::<Vec<_>>(),
            )
        };
        let tau_gbw: Vec<f64> = rs
            .iter()
            .filter_map(|r| r.tau_measured_s)
            .map(|t| t * ctx.oa.gbw())
            .collect();
        let work: Vec<f64> = rs.iter().map(|r| cg_work(r)).collect();
        summary.push(format!(
            "  n={n} circuit_tau_gbw={} cg_work={} cg_estimate={} quantum_estimate={}",
            fmt(mean(&tau_gbw)),
            fmt(mean(&work)),
            fmt(pick("cg_estimate")),
            fmt(pick("quantum_estimate"))
        ));
    }
    Ok(Outcome {
        scenario: Scenario::Estimate,
        records,
        summary,
        trace: None,
        inverse: None,
    })
}

fn header(ctx: &Ctx, records: &[RunRecord]) -> Vec<String> {
    let s = &ctx.spec.solver;
    let converged = records.iter().filter(|r| r.converged).count();
    let diverged = records.iter().filter(|r| r.diverged).count();
    let unstable = records.iter().filter(|r| r.has_flag("unstable")).count();
    let timeout = records.len() - converged - diverged - unstable;
    let mut lines = vec![
        format!("scenario: {}", ctx.spec.scenario),
        format!("master_seed: {}", ctx.master),
        format!(
            "solver: epsilon={} norm={} gbw={} rad/s",
            fmt(s.epsilon),
            match ctx.cfg.norm {
                NormKind::L2 => "l2",
                NormKind::ANorm => "a_norm",
            },
            fmt(ctx.oa.gbw())
        ),
        format!(
            "systems: {} (converged {converged}, diverged {diverged}, timed out {timeout}, unstable {unstable})",
            records.len()
        ),
        "checks:".to_string(),
    ];
    let ok_err = records
        .iter()
        .filter(|r| r.converged && r.final_error.is_some_and(|e| e <= r.epsilon))
        .count();
    lines.push(format!("  converged error <= epsilon: {ok_err}/{converged}"));
    let bounded: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.tau_measured_s.is_some() && r.tau_bound_s.is_some())
        .collect();
    let within = bounded
        .iter()
        .filter(|r| r.tau_measured_s <= r.tau_bound_s)
        .count();
    lines.push(format!(
        "  tau_measured <= tau_bound: {within}/{} (guaranteed under a_norm only)",
        bounded.len()
    ));
    let pd: Vec<&RunRecord> = records
        .iter()
        .filter(|r| r.symmetric && r.lambda_min > 0.0)
        .collect();
    let ineq = pd.iter().filter(|r| gain_inequality_holds(r)).count();
    lines.push(format!(
        "  lambda_M,min >= u_min * lambda_min on symmetric PD: {ineq}/{}",
        pd.len()
    ));
    let gaps: Vec<f64> = records.iter().filter_map(|r| r.eigen_gap).collect();
    if !gaps.is_empty() {
        let ok = gaps.iter().filter(|g| **g <= 1e-8).count();
        lines.push(format!("  eigen identity gap <= 1e-8: {ok}/{}", gaps.len()));
    }
    lines.push("results:".to_string());
    lines
}

/// `lambda_M,min >= u_min * lambda_min` with round-off slack.
pub fn gain_inequality_holds(r: &RunRecord) -> bool {
    let rhs = r.u_min * r.lambda_min;
    r.lambda_m_min >= rhs - 1e-10 * rhs.abs().max(r.lambda_m_min.abs())
}

fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

fn fmt(v: f64) -> String {
    format!("{v:.6e}")
}

fn fmt_vec(v: &DVector<f64>) -> String {
    let parts: Vec<String> = v.iter().map(|x| format!("{x:.6}")).collect();
    format!("[{}]", parts.join(", "))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn digests_depend_on_inputs() {
        let a = DMatrix::identity(2, 2);
        let b = DVector::from_vec(vec![1.0, 2.0]);
        let d = digest(&a, &b);
        assert_eq!(d.len(), 16);
        assert_eq!(d, digest(&a, &b));
        assert_ne!(d, digest(&a, &DVector::from_vec(vec![1.0, 2.5])));
    }

    #[test]
    fn transient_default() {
        let out = run_experiment(&ExperimentSpec::new(Scenario::Transient, 1)).unwrap();
        assert_eq!(out.records.len(), 1);
        let r = &out.records[0];
        assert!(r.converged);
        assert!(r.tau_measured_s.unwrap() < 1e-6);
        assert!(out.trace.is_some());
    }

    #[test]
    fn unstable_systems_are_recorded() {
        let mut spec = ExperimentSpec::new(Scenario::Transient, 1);
        spec.transient.matrix = vec![vec![0.0, 1.0], vec![1.0, 0.0]];
        spec.transient.b = vec![1.0, 0.0];
        let out = run_experiment(&spec).unwrap();
        let r = &out.records[0];
        assert!(!r.converged && r.has_flag("unstable"));
        assert_eq!(r.tau_measured_s, None);
    }

    #[test]
    fn record_notes_lookup() {
        let out = run_experiment(&ExperimentSpec::new(Scenario::Transient, 1)).unwrap();
        let mut r = out.records[0].clone();
        r.notes = vec!["variant=noisy".into(), "subset".into()];
        assert_eq!(r.note("variant"), Some("noisy"));
        assert!(r.has_flag("subset"));
        assert_eq!(r.note("subset"), None);
    }
}
