//! Python bindings for the crosspoint circuit simulator.
//!
//! Matrices are passed as lists of rows and vectors as lists of floats, so
//! the module has no numpy dependency. Results come back as plain dicts.

use std::path::Path;

use nalgebra::{DMatrix, DVector};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use crosspoint_core as core;
use crosspoint_core::experiment::{emit_outputs, records_csv, run_experiment as run, ExperimentSpec};
use crosspoint_core::{
    AlphaRule, Circuit, CovarianceSpec, DevicePolicy, Error, NoiseRule, NormKind, OpAmpModel,
    SolveConfig, SparsePdSpec,
};

fn to_py(e: Error) -> PyErr {
    let msg = e.to_string();
    match e {
        Error::Config(_) | Error::Usage(_) | Error::Domain(_) => PyValueError::new_err(msg),
        Error::Io { .. } => PyOSError::new_err(msg),
        Error::Unstable { .. } | Error::Numerical(_) => PyArithmeticError::new_err(msg),
        Error::Generation { .. } | Error::Inversion { .. } => PyRuntimeError::new_err(msg),
    }
}

pub fn to_matrix(rows: &[Vec<f64>]) -> core::Result<DMatrix<f64>> {
    let n = rows.len();
    let m = rows.first().map_or(0, Vec::len);
    if n == 0 || m == 0 {
        return Err(Error::Domain("matrix must be nonempty".into()));
    }
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Domain("matrix rows have different lengths".into()));
    }
    Ok(DMatrix::from_fn(n, m, |i, j| rows[i][j]))
}

pub fn from_matrix(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    a.row_iter().map(|r| r.iter().copied().collect()).collect()
}

fn norm_kind(name: &str) -> core::Result<NormKind> {
    match name {
        "l2" => Ok(NormKind::L2),
        "a" | "a_norm" => Ok(NormKind::ANorm),
        other => Err(Error::Config(format!("unknown norm {other:?}; use \"l2\" or \"a_norm\""))),
    }
}

fn solve_config(epsilon: f64, norm: &str, alpha: Option<f64>, max_steps: usize) -> core::Result<SolveConfig> {
    Ok(SolveConfig {
        epsilon,
        norm: norm_kind(norm)?,
        alpha_rule: alpha.map_or(AlphaRule::default(), AlphaRule::Fixed),
        max_steps,
        ..SolveConfig::default()
    })
}

/// Solve `A x = b` with the feedback circuit model from `x(0) = 0`.
#[pyfunction]
#[pyo3(signature = (a, b, epsilon=1e-3, gbw=1e8, norm="l2", alpha=None, max_steps=10_000_000, trace=false))]
#[allow(clippy::too_many_arguments)]
fn solve<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    epsilon: f64,
    gbw: f64,
    norm: &str,
    alpha: Option<f64>,
    max_steps: usize,
    trace: bool,
) -> PyResult<Bound<'py, PyDict>> {
    let a = to_matrix(&a).map_err(to_py)?;
    let b = DVector::from_vec(b);
    let mut cfg = solve_config(epsilon, norm, alpha, max_steps).map_err(to_py)?;
    cfg.record_trace = trace;
    let oa = OpAmpModel::from_gbw(gbw).map_err(to_py)?;
    let res = py
        .detach(|| Circuit::new(core::build_feedback(&a)?, oa, cfg)?.solve(&b))
        .map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("x", res.x_final.as_slice().to_vec())?;
    d.set_item("x_star", res.x_star.as_slice().to_vec())?;
    d.set_item("tau", res.tau)?;
    d.set_item("converged", res.converged)?;
    d.set_item("diverged", res.diverged)?;
    d.set_item("steps", res.steps)?;
    d.set_item("alpha", res.alpha)?;
    d.set_item("dt", res.dt)?;
    d.set_item("final_error", res.final_error)?;
    if let Some(points) = res.trace {
        let t: Vec<f64> = points.iter().map(|p| p.t).collect();
        let err: Vec<f64> = points.iter().map(|p| p.error).collect();
        let x: Vec<Vec<f64>> = points.into_iter().map(|p| p.x).collect();
        d.set_item("trace_t", t)?;
        d.set_item("trace_error", err)?;
        d.set_item("trace_x", x)?;
    }
    Ok(d)
}

#[pyfunction]
fn direct_solve(a: Vec<Vec<f64>>, b: Vec<f64>) -> PyResult<Vec<f64>> {
    let a = to_matrix(&a).map_err(to_py)?;
    let x = core::direct_solve(&a, &DVector::from_vec(b)).map_err(to_py)?;
    Ok(x.as_slice().to_vec())
}

#[pyfunction]
fn spectral_report<'py>(py: Python<'py>, a: Vec<Vec<f64>>) -> PyResult<Bound<'py, PyDict>> {
    let a = to_matrix(&a).map_err(to_py)?;
    let r = core::spectral_report(&a).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("lambda_min_a", r.lambda_min_a)?;
    d.set_item("lambda_max_a", r.lambda_max_a)?;
    d.set_item("lambda_m_min", r.lambda_m_min)?;
    d.set_item("rho_m", r.rho_m)?;
    d.set_item("u_min", r.u_min)?;
    d.set_item("u_factor", r.u_factor)?;
    d.set_item("condition_number", r.condition_number)?;
    d.set_item("symmetric", r.symmetric)?;
    Ok(d)
}

/// Upper bound on the A-norm computing time (s).
#[pyfunction]
#[pyo3(signature = (a, b, epsilon=1e-3, gbw=1e8))]
fn time_bound(a: Vec<Vec<f64>>, b: Vec<f64>, epsilon: f64, gbw: f64) -> PyResult<f64> {
    let a = to_matrix(&a).map_err(to_py)?;
    let oa = OpAmpModel::from_gbw(gbw).map_err(to_py)?;
    let sys = core::build_feedback(&a).map_err(to_py)?;
    core::time_bound(&sys, &DVector::from_vec(b), epsilon, &oa).map_err(to_py)
}

/// Invert `a` column by column; returns `(inverse, column_times)`.
#[pyfunction]
#[pyo3(signature = (a, epsilon=1e-3, gbw=1e8))]
fn invert(py: Python<'_>, a: Vec<Vec<f64>>, epsilon: f64, gbw: f64) -> PyResult<(Vec<Vec<f64>>, Vec<f64>)> {
    let a = to_matrix(&a).map_err(to_py)?;
    let oa = OpAmpModel::from_gbw(gbw).map_err(to_py)?;
    let cfg = solve_config(epsilon, "l2", None, 10_000_000).map_err(to_py)?;
    let (inv, taus) = py.detach(|| core::invert_matrix(&a, &oa, &cfg)).map_err(to_py)?;
    Ok((from_matrix(&inv), taus))
}

#[pyfunction]
#[pyo3(signature = (n, beta=1.0))]
fn covariance_matrix(n: usize, beta: f64) -> PyResult<Vec<Vec<f64>>> {
    let a = core::covariance_matrix(&CovarianceSpec { n, beta }).map_err(to_py)?;
    Ok(from_matrix(&a))
}

#[pyfunction]
fn sparse_pd(n: usize, s: usize, lambda_target: f64, seed: u64) -> PyResult<Vec<Vec<f64>>> {
    let spec = SparsePdSpec {
        n,
        s,
        lambda_target,
        seed,
    };
    Ok(from_matrix(&core::sparse_pd(&spec).map_err(to_py)?))
}

/// Program `a` onto device levels; returns conductances, `g0`, and the
/// effective coefficients `g / g0`.
#[pyfunction]
#[pyo3(signature = (a, levels=64, g_max=1e-4, ratio=1e3, noise_fraction=1.0/6.0, seed=0))]
fn program<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    levels: usize,
    g_max: f64,
    ratio: f64,
    noise_fraction: f64,
    seed: u64,
) -> PyResult<Bound<'py, PyDict>> {
    let a = to_matrix(&a).map_err(to_py)?;
    let policy = DevicePolicy {
        num_levels: levels,
        g_max,
        ratio,
        noise: if noise_fraction > 0.0 {
            NoiseRule::LevelFraction(noise_fraction)
        } else {
            NoiseRule::None
        },
        seed,
    };
    let cm = core::program(&a, &policy).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("g", from_matrix(&cm.g))?;
    d.set_item("g0", cm.g0)?;
    d.set_item("effective", from_matrix(&core::read_effective(&cm)))?;
    Ok(d)
}

#[pyfunction]
#[pyo3(signature = (a, b, tol=1e-6, max_iters=None))]
fn conjugate_gradient<'py>(
    py: Python<'py>,
    a: Vec<Vec<f64>>,
    b: Vec<f64>,
    tol: f64,
    max_iters: Option<usize>,
) -> PyResult<Bound<'py, PyDict>> {
    let a = to_matrix(&a).map_err(to_py)?;
    let cap = max_iters.unwrap_or(10 * a.nrows() + 100);
    let res = core::conjugate_gradient(&a, &DVector::from_vec(b), tol, cap).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("x", res.x.as_slice().to_vec())?;
    d.set_item("iterations", res.iterations)?;
    d.set_item("residual_history", res.residual_history)?;
    d.set_item("converged", res.converged)?;
    Ok(d)
}

/// Run an experiment described by a TOML string. Returns the summary
/// lines, the records as CSV text, and the written files when
/// `output_dir` is given.
#[pyfunction]
#[pyo3(signature = (config, output_dir=None))]
fn run_experiment<'py>(
    py: Python<'py>,
    config: &str,
    output_dir: Option<&str>,
) -> PyResult<Bound<'py, PyDict>> {
    let spec = ExperimentSpec::from_toml_str(config).map_err(to_py)?;
    let outcome = py.detach(|| run(&spec)).map_err(to_py)?;
    let d = PyDict::new(py);
    d.set_item("scenario", outcome.scenario.id())?;
    d.set_item("summary", outcome.summary.clone())?;
    d.set_item("records_csv", records_csv(&outcome.records).map_err(to_py)?)?;
    if let Some(dir) = output_dir {
        let files = emit_outputs(&outcome, Path::new(dir)).map_err(to_py)?;
        let files: Vec<String> = files.iter().map(|p| p.display().to_string()).collect();
        d.set_item("files", files)?;
    }
    Ok(d)
}

#[pymodule]
fn crosspoint(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(direct_solve, m)?)?;
    m.add_function(wrap_pyfunction!(spectral_report, m)?)?;
    m.add_function(wrap_pyfunction!(time_bound, m)?)?;
    m.add_function(wrap_pyfunction!(invert, m)?)?;
    m.add_function(wrap_pyfunction!(covariance_matrix, m)?)?;
    m.add_function(wrap_pyfunction!(sparse_pd, m)?)?;
    m.add_function(wrap_pyfunction!(program, m)?)?;
    m.add_function(wrap_pyfunction!(conjugate_gradient, m)?)?;
    m.add_function(wrap_pyfunction!(run_experiment, m)?)?;
    Ok(())
}
