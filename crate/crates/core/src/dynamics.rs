//! Feedback-circuit dynamics.
//!
//! Each operational amplifier row `i` sees the crosspoint row through the
//! gain `u_i = 1 / (1 + sum_j A_ij)`. With a single-pole amplifier of
//! gain-bandwidth `gbw` the outputs obey
//!
//! ```text
//! dx/dt = -gbw (M x - U b),   M = U A
//! ```
//!
//! which is integrated with the explicit update
//! `x <- alpha U b + (I - alpha M) x`, `alpha = gbw * dt`. The circuit is
//! stable iff every eigenvalue of `M` has positive real part, and its poles
//! sit at `-gbw * lambda_M`.

use nalgebra::{Complex, DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, norm2, require_len, require_square, CsrMatrix};
use crate::spectral::{
    associated_eigenvalues_symmetric, general_eigenvalues, symmetric_eigenvalues, DirectSolver,
};

/// Default amplifier gain-bandwidth product (rad/s).
pub const DEFAULT_GBW: f64 = 1e8;
/// Default DC open-loop gain.
pub const DEFAULT_L0: f64 = 1e5;
/// AD823 slew rate, 22 V/us.
pub const DEFAULT_SLEW_RATE: f64 = 22e6;
/// Trace samples kept per run.
pub const MAX_TRACE_SAMPLES: usize = 10_000;
/// Divergence is declared when `|x| > DIVERGENCE_FACTOR * max(1, |x*|)`.
pub const DIVERGENCE_FACTOR: f64 = 1e6;

const SYMMETRY_TOL: f64 = 1e-12;

/// Single-pole operational amplifier.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OpAmpModel {
    /// DC open-loop gain.
    pub l0: f64,
    /// 3-dB bandwidth (rad/s).
    pub omega0: f64,
    /// Large-signal slew limit (V/s).
    pub slew_rate: f64,
}

impl Default for OpAmpModel {
    fn default() -> Self {
        OpAmpModel::from_gbw(DEFAULT_GBW).expect("default gbw is valid")
    }
}

impl OpAmpModel {
    pub fn new(l0: f64, omega0: f64, slew_rate: f64) -> Result<Self> {
        if !(l0 > 1.0) || !l0.is_finite() {
            return Err(Error::Config(format!("l0 must be > 1, got {l0}")));
        }
        if !(omega0 > 0.0) || !omega0.is_finite() {
            return Err(Error::Config(format!("omega0 must be > 0, got {omega0}")));
        }
        if !(slew_rate > 0.0) {
            return Err(Error::Config(format!("slew rate must be > 0, got {slew_rate}")));
        }
        Ok(OpAmpModel {
            l0,
            omega0,
            slew_rate,
        })
    }

    /// Amplifier with the given gain-bandwidth, default DC gain and slew rate.
    pub fn from_gbw(gbw: f64) -> Result<Self> {
        if !(gbw > 0.0) || !gbw.is_finite() {
            return Err(Error::Config(format!("gbw must be > 0, got {gbw}")));
        }
        OpAmpModel::new(DEFAULT_L0, gbw / DEFAULT_L0, DEFAULT_SLEW_RATE)
    }

    pub fn gbw(&self) -> f64 {
        self.l0 * self.omega0
    }
}

/// Dimensionless circuit matrices derived from `A`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackSystem {
    pub a: DMatrix<f64>,
    /// Diagonal of `U`, `u_i = 1 / (1 + sum_j a_ij)`.
    pub u: DVector<f64>,
    /// `M = diag(u) a`.
    pub m: DMatrix<f64>,
}

impl FeedbackSystem {
    pub fn dim(&self) -> usize {
        self.u.len()
    }

    pub fn u_min(&self) -> f64 {
        self.u.min()
    }

    pub fn is_symmetric(&self) -> bool {
        is_symmetric(&self.a, SYMMETRY_TOL)
    }

    /// Eigenvalues of `M` sorted by real part.
    pub fn m_eigenvalues(&self) -> Result<Vec<Complex<f64>>> {
        if self.is_symmetric() {
            Ok(associated_eigenvalues_symmetric(&self.a, &self.u)?
                .into_iter()
                .map(|v| Complex::new(v, 0.0))
                .collect())
        } else {
            general_eigenvalues(&self.m)
        }
    }
}

pub fn build_feedback(a: &DMatrix<f64>) -> Result<FeedbackSystem> {
    let n = require_square(a, "coefficient matrix")?;
    for &v in a.iter() {
        if !v.is_finite() {
            return Err(Error::Domain("coefficient matrix has non-finite entries".into()));
        }
        if v < 0.0 {
            return Err(Error::Domain(format!(
                "negative coefficient {v}: the crosspoint array maps nonnegative conductances only"
            )));
        }
    }
    let u = DVector::from_iterator(n, a.row_iter().map(|r| 1.0 / (1.0 + r.sum())));
    let m = DMatrix::from_fn(n, n, |i, j| u[i] * a[(i, j)]);
    Ok(FeedbackSystem {
        a: a.clone(),
        u,
        m,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityReport {
    /// Minimum real part among eigenvalues of `M`.
    pub lambda_m_min: f64,
    /// Spectral radius of `M`.
    pub rho_m: f64,
    /// Poles `-gbw * lambda_M` (rad/s), sorted by real part of `lambda_M`.
    pub poles: Vec<Complex<f64>>,
    pub stable: bool,
}

pub fn stability_report(sys: &FeedbackSystem, oa: &OpAmpModel) -> Result<StabilityReport> {
    let eig = sys.m_eigenvalues()?;
    Ok(report_from_eigenvalues(&eig, oa))
}

fn report_from_eigenvalues(eig: &[Complex<f64>], oa: &OpAmpModel) -> StabilityReport {
    let lambda_m_min = eig.iter().map(|v| v.re).fold(f64::INFINITY, f64::min);
    let rho_m = eig.iter().map(|v| v.norm()).fold(0.0, f64::max);
    let gbw = oa.gbw();
    StabilityReport {
        lambda_m_min,
        rho_m,
        poles: eig.iter().map(|v| -v * gbw).collect(),
        stable: lambda_m_min > 0.0,
    }
}

/// How the dimensionless step `alpha = gbw * dt` is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum AlphaRule {
    /// `alpha = fraction / rho(M)`.
    SpectralFraction(f64),
    Fixed(f64),
}

impl Default for AlphaRule {
    fn default() -> Self {
        AlphaRule::SpectralFraction(0.1)
    }
}

/// Norm of `x(t) - x*` used for the convergence test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormKind {
    #[default]
    L2,
    /// `sqrt(e^T A e)`.
    ANorm,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveConfig {
    pub epsilon: f64,
    pub norm: NormKind,
    pub alpha_rule: AlphaRule,
    pub max_steps: usize,
    /// Integrate with `M + I / l0` instead of `M`.
    pub include_gain_correction: bool,
    /// Run even when `M` has eigenvalues with nonpositive real part.
    pub allow_unstable: bool,
    pub record_trace: bool,
}

impl Default for SolveConfig {
    fn default() -> Self {
        SolveConfig {
            epsilon: 1e-3,
            norm: NormKind::L2,
            alpha_rule: AlphaRule::default(),
            max_steps: 10_000_000,
            include_gain_correction: false,
            allow_unstable: false,
            record_trace: false,
        }
    }
}

impl SolveConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::Config(format!("epsilon must be > 0, got {}", self.epsilon)));
        }
        if self.max_steps == 0 {
            return Err(Error::Config("max_steps must be positive".into()));
        }
        Ok(())
    }
}

/// Resolve `alpha` against a known spectral radius; returns `(alpha, dt)`.
pub fn resolve_alpha(rule: AlphaRule, rho_m: f64, oa: &OpAmpModel) -> Result<(f64, f64)> {
    let alpha = match rule {
        AlphaRule::SpectralFraction(f) => {
            if !(f > 0.0) {
                return Err(Error::Config(format!("alpha fraction must be > 0, got {f}")));
            }
            f / rho_m
        }
        AlphaRule::Fixed(a) => a,
    };
    if !(alpha > 0.0) || !alpha.is_finite() {
        return Err(Error::Config(format!("alpha must be finite and > 0, got {alpha}")));
    }
    if alpha * rho_m >= 1.0 {
        return Err(Error::Config(format!(
            "alpha * rho(M) = {:.4} must be < 1",
            alpha * rho_m
        )));
    }
    Ok((alpha, alpha / oa.gbw()))
}

pub fn resolve_step(sys: &FeedbackSystem, oa: &OpAmpModel, cfg: &SolveConfig) -> Result<(f64, f64)> {
    let report = stability_report(sys, oa)?;
    if !report.stable && !cfg.allow_unstable {
        return Err(Error::Unstable {
            lambda_m_min: report.lambda_m_min,
        });
    }
    resolve_alpha(cfg.alpha_rule, report.rho_m, oa)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TracePoint {
    pub step: usize,
    /// Physical time (s).
    pub t: f64,
    pub x: Vec<f64>,
    pub error: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x_final: DVector<f64>,
    /// Direct-solve reference solution.
    pub x_star: DVector<f64>,
    /// Computing time `steps * alpha / gbw` (s).
    pub tau: f64,
    pub converged: bool,
    pub diverged: bool,
    pub steps: usize,
    pub alpha: f64,
    pub dt: f64,
    /// Error norm at the last step, in the configured norm.
    pub final_error: f64,
    pub trace: Option<Vec<TracePoint>>,
}

/// Decimating trace buffer: keeps every `stride`-th step and doubles the
/// stride whenever the buffer overflows.
struct TraceBuffer {
    points: Vec<TracePoint>,
    stride: usize,
}

impl TraceBuffer {
    fn new() -> Self {
        TraceBuffer {
            points: Vec::new(),
            stride: 1,
        }
    }

    fn offer(&mut self, step: usize, dt: f64, x: &[f64], error: f64) {
        if !step.is_multiple_of(self.stride) {
            return;
        }
        self.points.push(TracePoint {
            step,
            t: step as f64 * dt,
            x: x.to_vec(),
            error,
        });
        if self.points.len() > MAX_TRACE_SAMPLES {
            self.stride *= 2;
            let stride = self.stride;
            self.points.retain(|p| p.step % stride == 0);
        }
    }

    fn finish(mut self, step: usize, dt: f64, x: &[f64], error: f64) -> Vec<TracePoint> {
        if self.points.last().map(|p| p.step) != Some(step) {
            self.points.push(TracePoint {
                step,
                t: step as f64 * dt,
                x: x.to_vec(),
                error,
            });
        }
        self.points
    }
}

/// A feedback system prepared for repeated solves: spectrum, step size,
/// sparse operators and the direct-solve factorization are computed once.
#[derive(Debug, Clone)]
pub struct Circuit {
    sys: FeedbackSystem,
    oa: OpAmpModel,
    cfg: SolveConfig,
    stability: StabilityReport,
    alpha: f64,
    dt: f64,
    m_op: CsrMatrix,
    a_op: CsrMatrix,
    oracle: DirectSolver,
}

impl Circuit {
    pub fn new(sys: FeedbackSystem, oa: OpAmpModel, cfg: SolveConfig) -> Result<Self> {
        cfg.validate()?;
        let stability = stability_report(&sys, &oa)?;
        Circuit::with_stability(sys, oa, cfg, stability)
    }

    /// Build with an already computed stability report for `sys`.
    pub fn with_stability(
        sys: FeedbackSystem,
        oa: OpAmpModel,
        cfg: SolveConfig,
        stability: StabilityReport,
    ) -> Result<Self> {
        cfg.validate()?;
        if !stability.stable && !cfg.allow_unstable {
            return Err(Error::Unstable {
                lambda_m_min: stability.lambda_m_min,
            });
        }
        let (alpha, dt) = resolve_alpha(cfg.alpha_rule, stability.rho_m, &oa)?;
        if cfg.norm == NormKind::ANorm {
            let sym = (&sys.a + sys.a.transpose()) * 0.5;
            let lmin = symmetric_eigenvalues(&sym)?[0];
            if !(lmin > 0.0) {
                return Err(Error::Domain(format!(
                    "A-norm needs a positive definite matrix; symmetric part has lambda_min = {lmin:.3e}"
                )));
            }
        }
        let oracle = DirectSolver::new(&sys.a)?;
        let m_op = CsrMatrix::from_dense(&sys.m);
        let a_op = CsrMatrix::from_dense(&sys.a);
        Ok(Circuit {
            sys,
            oa,
            cfg,
            stability,
            alpha,
            dt,
            m_op,
            a_op,
            oracle,
        })
    }

    pub fn system(&self) -> &FeedbackSystem {
        &self.sys
    }

    pub fn stability(&self) -> &StabilityReport {
        &self.stability
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn config(&self) -> &SolveConfig {
        &self.cfg
    }

    pub fn op_amp(&self) -> &OpAmpModel {
        &self.oa
    }

    pub fn direct_solve(&self, b: &DVector<f64>) -> Result<DVector<f64>> {
        self.oracle.solve(b)
    }

    fn error_norm(&self, e: &[f64], scratch: &mut [f64]) -> f64 {
        match self.cfg.norm {
            NormKind::L2 => norm2(e),
            NormKind::ANorm => {
                self.a_op.mul_into(e, scratch);
                crate::linalg::dot(e, scratch).max(0.0).sqrt()
            }
        }
    }

    /// Integrate from `x(0) = 0`.
    pub fn solve(&self, b: &DVector<f64>) -> Result<SolveResult> {
        let x0 = DVector::zeros(self.sys.dim());
        self.solve_from(b, &x0)
    }

    pub fn solve_from(&self, b: &DVector<f64>, x0: &DVector<f64>) -> Result<SolveResult> {
        let n = self.sys.dim();
        require_len(b, n, "b")?;
        require_len(x0, n, "x0")?;
        let x_star = self.oracle.solve(b)?;
        let xs = x_star.as_slice();
        let alpha = self.alpha;
        let leak = if self.cfg.include_gain_correction {
            alpha / self.oa.l0
        } else {
            0.0
        };
        let drive: Vec<f64> = (0..n).map(|i| alpha * self.sys.u[i] * b[i]).collect();
        let limit = DIVERGENCE_FACTOR * norm2(xs).max(1.0);

        let mut x = x0.as_slice().to_vec();
        let mut mx = vec![0.0; n];
        let mut e = vec![0.0; n];
        let mut scratch = vec![0.0; n];
        let mut trace = self.cfg.record_trace.then(TraceBuffer::new);

        let error_at = |x: &[f64], e: &mut [f64], scratch: &mut [f64]| {
            for i in 0..n {
                e[i] = x[i] - xs[i];
            }
            self.error_norm(e, scratch)
        };

        let mut err = error_at(&x, &mut e, &mut scratch);
        if let Some(t) = trace.as_mut() {
            t.offer(0, self.dt, &x, err);
        }
        let mut steps = 0usize;
        let mut converged = err <= self.cfg.epsilon;
        let mut diverged = false;
        while !converged && steps < self.cfg.max_steps {
            self.m_op.mul_into(&x, &mut mx);
            for i in 0..n {
                x[i] = drive[i] + x[i] - alpha * mx[i] - leak * x[i];
            }
            steps += 1;
            err = error_at(&x, &mut e, &mut scratch);
            if let Some(t) = trace.as_mut() {
                t.offer(steps, self.dt, &x, err);
            }
            if err <= self.cfg.epsilon {
                converged = true;
            } else {
                let xn = norm2(&x);
                if !xn.is_finite() || xn > limit {
                    diverged = true;
                    break;
                }
            }
        }
        let trace = trace.map(|t| t.finish(steps, self.dt, &x, err));
        Ok(SolveResult {
            x_final: DVector::from_vec(x),
            x_star,
            tau: steps as f64 * alpha / self.oa.gbw(),
            converged,
            diverged,
            steps,
            alpha,
            dt: self.dt,
            final_error: err,
            trace,
        })
    }

    /// Upper bound on the A-norm computing time for symmetric positive definite A.
    pub fn time_bound(&self, b: &DVector<f64>, epsilon: f64) -> Result<f64> {
        let x_star = self.oracle.solve(b)?;
        bound_from_parts(&x_star, b, epsilon, self.stability.lambda_m_min, &self.oa)
    }
}

fn bound_from_parts(
    x_star: &DVector<f64>,
    b: &DVector<f64>,
    epsilon: f64,
    lambda_m_min: f64,
    oa: &OpAmpModel,
) -> Result<f64> {
    if !(epsilon > 0.0) {
        return Err(Error::Config(format!("epsilon must be > 0, got {epsilon}")));
    }
    let energy = x_star.dot(b);
    if !(energy > 0.0) {
        return Err(Error::Domain(format!(
            "x*^T b = {energy:.3e} is not positive; A is not positive definite"
        )));
    }
    if !(lambda_m_min > 0.0) {
        return Err(Error::Unstable { lambda_m_min });
    }
    // already within epsilon at t = 0 when sqrt(x*^T b) <= epsilon
    let log_ratio = (energy.sqrt() / epsilon).ln().max(0.0);
    Ok(log_ratio / (lambda_m_min * oa.gbw()))
}

/// Run the finite-difference circuit model for `A x = b` from `x(0) = 0`.
pub fn simulate(
    sys: &FeedbackSystem,
    b: &DVector<f64>,
    oa: &OpAmpModel,
    cfg: &SolveConfig,
) -> Result<SolveResult> {
    Circuit::new(sys.clone(), *oa, cfg.clone())?.solve(b)
}

/// Exact solution of the circuit ODE,
/// `x(t) = x* + exp(-gbw M t) (x0 - x*)`, by matrix exponential.
pub fn analytic_trajectory(
    sys: &FeedbackSystem,
    b: &DVector<f64>,
    x0: &DVector<f64>,
    oa: &OpAmpModel,
    t: f64,
) -> Result<DVector<f64>> {
    Trajectory::new(sys, b, x0, oa)?.at(t)
}

/// Reusable form of [`analytic_trajectory`] for many time points.
#[derive(Debug, Clone)]
pub struct Trajectory {
    m: DMatrix<f64>,
    gbw: f64,
    x_star: DVector<f64>,
    offset: DVector<f64>,
}

impl Trajectory {
    pub fn new(
        sys: &FeedbackSystem,
        b: &DVector<f64>,
        x0: &DVector<f64>,
        oa: &OpAmpModel,
    ) -> Result<Self> {
        let n = sys.dim();
        require_len(b, n, "b")?;
        require_len(x0, n, "x0")?;
        let x_star = DirectSolver::new(&sys.a)
            .map_err(|e| Error::Domain(format!("A is singular: {e}")))?
            .solve(b)?;
        Ok(Trajectory {
            m: sys.m.clone(),
            gbw: oa.gbw(),
            offset: x0 - &x_star,
            x_star,
        })
    }

    pub fn x_star(&self) -> &DVector<f64> {
        &self.x_star
    }

    pub fn at(&self, t: f64) -> Result<DVector<f64>> {
        if !(t >= 0.0) || !t.is_finite() {
            return Err(Error::Domain(format!("time must be finite and >= 0, got {t}")));
        }
        if t == 0.0 {
            return Ok(&self.x_star + &self.offset);
        }
        let prop = (&self.m * (-self.gbw * t)).exp();
        Ok(&self.x_star + prop * &self.offset)
    }
}

/// Computing-time upper bound
/// `tau = ln(sqrt(x*^T b) / epsilon) / (lambda_M,min * gbw)` for the A-norm
/// criterion. Returns 0 when the zero initial state already meets epsilon.
pub fn time_bound(
    sys: &FeedbackSystem,
    b: &DVector<f64>,
    epsilon: f64,
    oa: &OpAmpModel,
) -> Result<f64> {
    require_len(b, sys.dim(), "b")?;
    let x_star = DirectSolver::new(&sys.a)?.solve(b)?;
    let energy = x_star.dot(b);
    if !(energy > 0.0) {
        return Err(Error::Domain(format!(
            "x*^T b = {energy:.3e} is not positive; A is not positive definite"
        )));
    }
    let report = stability_report(sys, oa)?;
    bound_from_parts(&x_star, b, epsilon, report.lambda_m_min, oa)
}

/// Invert `a` by solving one circuit problem per identity column.
///
/// Returns the computed inverse and the computing time of each column.
pub fn invert_matrix(
    a: &DMatrix<f64>,
    oa: &OpAmpModel,
    cfg: &SolveConfig,
) -> Result<(DMatrix<f64>, Vec<f64>)> {
    let circuit = Circuit::new(build_feedback(a)?, *oa, cfg.clone())?;
    let n = a.nrows();
    let mut inv = DMatrix::zeros(n, n);
    let mut taus = Vec::with_capacity(n);
    for j in 0..n {
        let mut e = DVector::zeros(n);
        e[j] = 1.0;
        let res = circuit.solve(&e)?;
        if !res.converged {
            let reason = if res.diverged {
                "solution diverged".to_string()
            } else {
                format!("no convergence within {} steps", res.steps)
            };
            return Err(Error::Inversion { column: j, reason });
        }
        inv.set_column(j, &res.x_final);
        taus.push(res.tau);
    }
    Ok((inv, taus))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SlewReport {
    /// Whether every output stayed within the amplifier slew rate.
    pub within_limit: bool,
    /// Largest `|dx_i/dt|` between consecutive trace samples (V/s).
    pub max_rate: f64,
}

/// Largest output rate of change between consecutive samples of a trace.
pub fn max_output_rate(trace: &[TracePoint]) -> f64 {
    trace
        .windows(2)
        .filter(|w| w[1].t > w[0].t)
        .map(|w| {
            let dt = w[1].t - w[0].t;
            w[0].x
                .iter()
                .zip(&w[1].x)
                .map(|(a, b)| (b - a).abs() / dt)
                .fold(0.0, f64::max)
        })
        .fold(0.0, f64::max)
}

/// Check the small-signal assumption against the amplifier slew rate.
pub fn slew_check(result: &SolveResult, oa: &OpAmpModel) -> Result<SlewReport> {
    let trace = result
        .trace
        .as_ref()
        .ok_or_else(|| Error::Usage("slew check needs a recorded trace".into()))?;
    let max_rate = max_output_rate(trace);
    Ok(SlewReport {
        within_limit: max_rate <= oa.slew_rate,
        max_rate,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn three_by_three() -> (DMatrix<f64>, DVector<f64>) {
        (
            DMatrix::from_row_slice(3, 3, &[1.2, 0.15, 0.8, 0.5, 0.5, 0.6, 0.6, 0.1, 0.8]),
            DVector::from_column_slice(&[-0.12, 0.36, 0.24]),
        )
    }

    fn e1(n: usize) -> DVector<f64> {
        let mut e = DVector::zeros(n);
        e[0] = 1.0;
        e
    }

    #[test]
    fn feedback_identity() {
        let sys = build_feedback(&DMatrix::identity(3, 3)).unwrap();
        assert_eq!(sys.u.as_slice(), &[0.5, 0.5, 0.5]);
        assert_eq!(sys.m, DMatrix::identity(3, 3) * 0.5);
    }

    #[test]
    fn feedback_three_by_three_gains() {
        let (a, _) = three_by_three();
        let sys = build_feedback(&a).unwrap();
        // 1 / (1 + 2.15), 1 / (1 + 1.6), 1 / (1 + 1.5)
        let want = [1.0 / 3.15, 1.0 / 2.6, 1.0 / 2.5];
        for (u, w) in sys.u.iter().zip(want) {
            assert_relative_eq!(*u, w, max_relative = 1e-15);
        }
        assert!((sys.u[0] - 0.31746).abs() < 5e-6);
        assert!((sys.u[1] - 0.38462).abs() < 5e-6);
        assert!((sys.u[2] - 0.40000).abs() < 5e-6);
        for i in 0..3 {
            for j in 0..3 {
                assert_eq!(sys.m[(i, j)], sys.u[i] * a[(i, j)]);
            }
        }
    }

    #[test]
    fn feedback_zero_matrix() {
        let sys = build_feedback(&DMatrix::zeros(3, 3)).unwrap();
        assert_eq!(sys.u.as_slice(), &[1.0, 1.0, 1.0]);
        assert_eq!(sys.m, DMatrix::zeros(3, 3));
    }

    #[test]
    fn feedback_rejects_negative() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0, -0.5, 0.0, 1.0]);
        assert!(matches!(build_feedback(&a), Err(Error::Domain(_))));
    }

    #[test]
    fn stability_identity() {
        let oa = OpAmpModel::default();
        let sys = build_feedback(&DMatrix::identity(3, 3)).unwrap();
        let r = stability_report(&sys, &oa).unwrap();
        assert_relative_eq!(r.lambda_m_min, 0.5, epsilon = 1e-14);
        for p in &r.poles {
            assert_relative_eq!(p.re, -0.5 * oa.gbw(), max_relative = 1e-12);
        }
        assert!(r.stable);
    }

    #[test]
    fn stability_swap_matrix() {
        let sys = build_feedback(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let r = stability_report(&sys, &OpAmpModel::default()).unwrap();
        assert_relative_eq!(r.lambda_m_min, -0.5, epsilon = 1e-14);
        assert!(!r.stable);
    }

    #[test]
    fn step_resolution() {
        let oa = OpAmpModel::default();
        let sys = build_feedback(&DMatrix::identity(2, 2)).unwrap();
        let (alpha, dt) = resolve_step(&sys, &oa, &SolveConfig::default()).unwrap();
        assert_relative_eq!(alpha, 0.2, max_relative = 1e-14);
        assert_relative_eq!(dt, 0.2 / oa.gbw(), max_relative = 1e-14);

        let cfg = SolveConfig {
            alpha_rule: AlphaRule::Fixed(1e-3),
            ..SolveConfig::default()
        };
        assert_eq!(resolve_step(&sys, &oa, &cfg).unwrap().0, 1e-3);

        let (_, dt) = resolve_alpha(AlphaRule::Fixed(0.01), 0.5, &OpAmpModel::from_gbw(1e8).unwrap()).unwrap();
        assert_relative_eq!(dt, 1e-10, max_relative = 1e-14);

        let too_big = SolveConfig {
            alpha_rule: AlphaRule::Fixed(2.0),
            ..SolveConfig::default()
        };
        assert!(matches!(resolve_step(&sys, &oa, &too_big), Err(Error::Config(_))));
    }

    #[test]
    fn identity_system_converges_to_b() {
        let sys = build_feedback(&DMatrix::identity(3, 3)).unwrap();
        let res = simulate(&sys, &e1(3), &OpAmpModel::default(), &SolveConfig::default()).unwrap();
        assert!(res.converged && !res.diverged);
        assert!((res.x_final.clone() - e1(3)).norm() <= 1e-3);
        assert_eq!(res.tau, res.steps as f64 * res.alpha / OpAmpModel::default().gbw());
    }

    #[test]
    fn unstable_without_override_is_error() {
        let sys = build_feedback(&DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0])).unwrap();
        let err = simulate(&sys, &e1(2), &OpAmpModel::default(), &SolveConfig::default());
        assert!(matches!(err, Err(Error::Unstable { .. })));
        let cfg = SolveConfig {
            allow_unstable: true,
            ..SolveConfig::default()
        };
        let res = simulate(&sys, &e1(2), &OpAmpModel::default(), &cfg).unwrap();
        assert!(res.diverged && !res.converged);
    }

    #[test]
    fn step_cap_gives_timeout() {
        let sys = build_feedback(&DMatrix::identity(2, 2)).unwrap();
        let cfg = SolveConfig {
            max_steps: 3,
            ..SolveConfig::default()
        };
        let res = simulate(&sys, &e1(2), &OpAmpModel::default(), &cfg).unwrap();
        assert!(!res.converged && !res.diverged);
        assert_eq!(res.steps, 3);
    }

    #[test]
    fn analytic_scalar_solution() {
        let oa = OpAmpModel::default();
        let sys = build_feedback(&DMatrix::identity(2, 2)).unwrap();
        let b = e1(2);
        let x0 = DVector::zeros(2);
        assert_eq!(analytic_trajectory(&sys, &b, &x0, &oa, 0.0).unwrap(), x0);
        for t in [1e-9, 1e-8, 3e-8, 1e-7] {
            let x = analytic_trajectory(&sys, &b, &x0, &oa, t).unwrap();
            assert_relative_eq!(x[0], 1.0 - (-oa.gbw() * t / 2.0).exp(), max_relative = 1e-12);
            assert!(x[1].abs() < 1e-15);
        }
        let late = analytic_trajectory(&sys, &b, &x0, &oa, 80.0 / oa.gbw()).unwrap();
        assert_relative_eq!(late[0], 1.0, max_relative = 1e-12);
        assert!(analytic_trajectory(&sys, &b, &x0, &oa, -1.0).is_err());
    }

    #[test]
    fn bound_identity() {
        let oa = OpAmpModel::from_gbw(1e8).unwrap();
        let sys = build_feedback(&DMatrix::identity(3, 3)).unwrap();
        let tau = time_bound(&sys, &e1(3), 1e-3, &oa).unwrap();
        assert_relative_eq!(tau, 2.0 / 1e8 * 1000f64.ln(), max_relative = 1e-12);
        assert!((tau - 1.38e-7).abs() < 0.01e-7);
    }

    #[test]
    fn bound_epsilon_shift() {
        let oa = OpAmpModel::default();
        let a = DMatrix::from_row_slice(3, 3, &[2.0, 0.5, 0.1, 0.5, 1.5, 0.3, 0.1, 0.3, 1.0]);
        let sys = build_feedback(&a).unwrap();
        let b = DVector::from_column_slice(&[0.4, -0.2, 0.7]);
        let lm = stability_report(&sys, &oa).unwrap().lambda_m_min;
        let t3 = time_bound(&sys, &b, 1e-3, &oa).unwrap();
        let t2 = time_bound(&sys, &b, 1e-2, &oa).unwrap();
        assert_relative_eq!(t3 - t2, 10f64.ln() / (lm * oa.gbw()), max_relative = 1e-10);
    }

    #[test]
    fn bound_rejects_indefinite_energy() {
        // x* = (-2, 1), x*^T b = -1 for this nonsymmetric but stable system
        let a = DMatrix::from_row_slice(2, 2, &[1.0, 3.0, 0.0, 1.0]);
        let sys = build_feedback(&a).unwrap();
        let b = DVector::from_column_slice(&[1.0, 1.0]);
        assert!(matches!(
            time_bound(&sys, &b, 1e-3, &OpAmpModel::default()),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn invert_scalar_multiples() {
        let oa = OpAmpModel::default();
        let cfg = SolveConfig {
            epsilon: 1e-6,
            ..SolveConfig::default()
        };
        let (inv, taus) = invert_matrix(&DMatrix::identity(3, 3), &oa, &cfg).unwrap();
        assert!((inv - DMatrix::identity(3, 3)).amax() <= 1e-6);
        assert_eq!(taus.len(), 3);
        let (inv2, _) = invert_matrix(&(DMatrix::identity(3, 3) * 2.0), &oa, &cfg).unwrap();
        assert!((inv2 - DMatrix::identity(3, 3) * 0.5).amax() <= 1e-6);
    }

    #[test]
    fn slew_constant_and_violating_traces() {
        let oa = OpAmpModel::default();
        let flat = vec![
            TracePoint { step: 0, t: 0.0, x: vec![0.3], error: 0.0 },
            TracePoint { step: 1, t: 1e-9, x: vec![0.3], error: 0.0 },
        ];
        let mut res = SolveResult {
            x_final: DVector::from_element(1, 0.3),
            x_star: DVector::from_element(1, 0.3),
            tau: 0.0,
            converged: true,
            diverged: false,
            steps: 1,
            alpha: 0.1,
            dt: 1e-9,
            final_error: 0.0,
            trace: Some(flat),
        };
        let r = slew_check(&res, &oa).unwrap();
        assert!(r.within_limit);
        assert_eq!(r.max_rate, 0.0);

        res.trace = Some(vec![
            TracePoint { step: 0, t: 0.0, x: vec![0.0], error: 1.0 },
            TracePoint { step: 1, t: 1e-9, x: vec![1.0], error: 0.0 },
        ]);
        let r = slew_check(&res, &oa).unwrap();
        assert!(!r.within_limit);
        assert_relative_eq!(r.max_rate, 1e9, max_relative = 1e-12);

        res.trace = None;
        assert!(matches!(slew_check(&res, &oa), Err(Error::Usage(_))));
    }

    #[test]
    fn trace_is_decimated() {
        let sys = build_feedback(&DMatrix::identity(2, 2)).unwrap();
        let cfg = SolveConfig {
            alpha_rule: AlphaRule::Fixed(1e-4),
            record_trace: true,
            epsilon: 1e-9,
            ..SolveConfig::default()
        };
        let res = simulate(&sys, &e1(2), &OpAmpModel::default(), &cfg).unwrap();
        let trace = res.trace.unwrap();
        assert!(res.steps > MAX_TRACE_SAMPLES);
        assert!(trace.len() <= MAX_TRACE_SAMPLES + 1);
        assert_eq!(trace[0].step, 0);
        assert_eq!(trace.last().unwrap().step, res.steps);
    }
}
