use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use crosspoint_core::experiment::{emit_outputs, run_experiment, ExperimentSpec, Scenario};
use crosspoint_core::{Error, Result};

/// Run crosspoint-circuit experiments and write CSV results.
#[derive(Parser, Debug)]
#[command(name = "crosspoint", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Subcommand, Debug, Clone, Copy)]
enum Command {
    /// Single transient solve with a recorded trace.
    Transient,
    /// Computing time against lambda_min on random discrete-level matrices.
    LambdaSweep,
    /// Matrix inversion column by column.
    Invert,
    /// Computing time against size on covariance matrices.
    Scaling,
    /// Sparse positive definite suite with a CG baseline.
    SparseSuite,
    /// Circuit, CG and quantum complexity estimates against size.
    Estimate,
}

impl Command {
    fn scenario(self) -> Scenario {
        match self {
            Command::Transient => Scenario::Transient,
            Command::LambdaSweep => Scenario::LambdaSweep,
            Command::Invert => Scenario::Inversion,
            Command::Scaling => Scenario::Scaling,
            Command::SparseSuite => Scenario::SparseSuite,
            Command::Estimate => Scenario::Estimate,
        }
    }
}

#[derive(Args, Debug)]
struct Common {
    /// TOML experiment file; flags below override its keys.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Master seed (required here or in the config).
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[arg(long, global = true)]
    epsilon: Option<f64>,
    /// Op-amp gain-bandwidth product (rad/s).
    #[arg(long, global = true)]
    gbw: Option<f64>,
    /// Number of device conductance levels.
    #[arg(long, global = true)]
    levels: Option<usize>,
    /// Device conductance ratio g_max / g_min.
    #[arg(long, global = true)]
    ratio: Option<f64>,
    /// Output directory [default: out/<scenario>].
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads [default: all cores].
    #[arg(long, global = true)]
    threads: Option<usize>,
}

fn build_spec(cli: &Cli) -> Result<ExperimentSpec> {
    let scenario = cli.command.scenario();
    let c = &cli.common;
    let mut spec = match &c.config {
        Some(path) => {
            let spec = ExperimentSpec::from_file(path)?;
            if spec.scenario != scenario {
                return Err(Error::Config(format!(
                    "{} declares scenario {}, but the subcommand runs {scenario}",
                    path.display(),
                    spec.scenario
                )));
            }
            spec
        }
        None => {
            let mut spec = ExperimentSpec::new(scenario, 0);
            spec.seed = None;
            spec
        }
    };
    if let Some(v) = c.seed {
        spec.seed = Some(v);
    }
    if let Some(v) = c.epsilon {
        spec.solver.epsilon = v;
    }
    if let Some(v) = c.gbw {
        spec.solver.gbw = v;
    }
    if let Some(v) = c.levels {
        spec.device.levels = v;
    }
    if let Some(v) = c.ratio {
        spec.device.ratio = v;
    }
    if let Some(v) = &c.out {
        spec.output_dir = Some(v.clone());
    }
    if let Some(v) = c.threads {
        spec.threads = Some(v);
    }
    spec.validate()?;
    Ok(spec)
}

fn run(cli: &Cli) -> Result<()> {
    let spec = build_spec(cli)?;
    let dir = spec
        .output_dir
        .clone()
        .unwrap_or_else(|| PathBuf::from("out").join(spec.scenario.id()));
    let outcome = run_experiment(&spec)?;
    let files = emit_outputs(&outcome, &dir)?;
    for line in &outcome.summary {
        println!("{line}");
    }
    for f in files {
        println!("wrote {}", f.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
