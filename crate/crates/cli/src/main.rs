use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use bloatline_core::experiments::{
    self, output, run_convergence_study, run_timeplot, sweep_equilibrium, sweep_validation,
    ReplicationSummary, SweepSpec,
};
use bloatline_core::{equilibrium, ConfigError, ModelError, ScenarioConfig};
use clap::{Args, Parser, Subcommand};

/// Environment variable holding the worker thread count.
const WORKERS_ENV: &str = "BLOATLINE_WORKERS";

/// LEDBAT targets of the validation sweep, in seconds.
const VALIDATION_TARGETS: [f64; 6] = [0.05, 0.1, 0.15, 0.2, 0.3, 0.5];

#[derive(Parser)]
#[command(name = "bloatline", version, about = "TCP/LEDBAT share under RED and DropTail")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Scenario file of `key = value` lines.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override a scenario key; may be repeated.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
    /// Base RNG seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Packet-level replications.
    #[arg(long)]
    reps: Option<usize>,
    /// Output directory, created if missing.
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args, Clone)]
struct Axis {
    /// Swept parameter, as a config key.
    #[arg(long, default_value = "ledbat.target_s")]
    axis: String,
    /// Comma-separated axis values.
    #[arg(long, value_delimiter = ',')]
    values: Vec<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Solve for the equilibrium of one scenario.
    Equilibrium(Common),
    /// Equilibrium share over a parameter sweep.
    Sweep {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        axis: Axis,
    },
    /// Models against packet-level replications over a sweep.
    Validate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        axis: Axis,
    },
    /// Fluid trajectories from random initial states.
    Converge {
        #[command(flatten)]
        common: Common,
        /// Number of initial states.
        #[arg(long, default_value_t = 100)]
        starts: usize,
    },
    /// Fluid trajectory and one packet-level trace of a scenario.
    Timeplot(Common),
}

/// Failure with its process exit code.
#[derive(Debug)]
enum Failure {
    Config(anyhow::Error),
    NoEquilibrium(anyhow::Error),
    Other(anyhow::Error),
}

impl Failure {
    fn code(&self) -> u8 {
        match self {
            Failure::Config(_) => 2,
            Failure::NoEquilibrium(_) => 3,
            Failure::Other(_) => 1,
        }
    }

    fn error(&self) -> &anyhow::Error {
        match self {
            Failure::Config(e) | Failure::NoEquilibrium(e) | Failure::Other(e) => e,
        }
    }
}

impl From<ConfigError> for Failure {
    fn from(e: ConfigError) -> Self {
        Failure::Config(e.into())
    }
}

impl From<ModelError> for Failure {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Config(_) | ModelError::RedRequired | ModelError::InvalidStep { .. } => {
                Failure::Config(e.into())
            }
            ModelError::NoSignChange { .. } => Failure::NoEquilibrium(e.into()),
            _ => Failure::Other(e.into()),
        }
    }
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Other(e)
    }
}

type Outcome = Result<(), Failure>;

impl Common {
    fn scenario(&self) -> Result<ScenarioConfig, ConfigError> {
        let mut overrides = self.set.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("rng_seed={seed}"));
        }
        if let Some(reps) = self.reps {
            overrides.push(format!("replications={reps}"));
        }
        ScenarioConfig::load(self.config.as_deref(), &overrides)
    }
}

fn create(dir: &Path, name: &str) -> anyhow::Result<BufWriter<File>> {
    fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let path = dir.join(name);
    let f = File::create(&path).with_context(|| format!("creating {}", path.display()))?;
    println!("{}", path.display());
    Ok(BufWriter::new(f))
}

fn write_file(
    dir: &Path,
    name: &str,
    body: impl FnOnce(&mut BufWriter<File>) -> std::io::Result<()>,
) -> anyhow::Result<()> {
    let mut w = create(dir, name)?;
    body(&mut w).with_context(|| format!("writing {name}"))?;
    w.flush().with_context(|| format!("writing {name}"))?;
    Ok(())
}

fn sweep_spec(cfg: ScenarioConfig, axis: &Axis, default: Vec<f64>) -> Result<SweepSpec, Failure> {
    let values = if axis.values.is_empty() {
        default
    } else {
        axis.values.clone()
    };
    let reps = cfg.replications;
    Ok(SweepSpec::new(cfg, &axis.axis, values, reps)?)
}

fn cmd_equilibrium(common: &Common) -> Outcome {
    let cfg = common.scenario()?;
    let eq = equilibrium::solve(&cfg)?;
    let refined = equilibrium::refined_rho(&cfg, &eq)?;
    write_file(&common.out, "equilibrium.csv", |w| {
        output::write_equilibrium(w, &cfg.hash_hex(), &eq, refined)
    })?;
    if !eq.exists {
        return Err(experiments::existence_failure(&cfg).into());
    }
    Ok(())
}

fn cmd_sweep(common: &Common, axis: &Axis) -> Outcome {
    let cfg = common.scenario()?;
    let default = if axis.values.is_empty() {
        if bloatline_core::config::resolve_key(&axis.axis)? != "ledbat.target_s" {
            return Err(Failure::Config(anyhow::anyhow!(
                "--values is required when sweeping {}",
                axis.axis
            )));
        }
        experiments::default_target_grid(&cfg)?
    } else {
        Vec::new()
    };
    let hash = cfg.hash_hex();
    let spec = sweep_spec(cfg, axis, default)?;
    let res = sweep_equilibrium(&spec)?;
    write_file(&common.out, "sweep.csv", |w| output::write_sweep(w, &hash, &res))?;
    Ok(())
}

fn cmd_validate(common: &Common, axis: &Axis) -> Outcome {
    let cfg = common.scenario()?;
    if axis.values.is_empty() && bloatline_core::config::resolve_key(&axis.axis)? != "ledbat.target_s" {
        return Err(Failure::Config(anyhow::anyhow!(
            "--values is required when sweeping {}",
            axis.axis
        )));
    }
    let hash = cfg.hash_hex();
    let spec = sweep_spec(cfg, axis, VALIDATION_TARGETS.to_vec())?;
    let res = sweep_validation(&spec)?;
    write_file(&common.out, "validate.csv", |w| output::write_sweep(w, &hash, &res))?;
    let runs: Vec<&ReplicationSummary> = res
        .rows
        .iter()
        .flat_map(|r| r.empirical.iter().flat_map(|e| &e.runs))
        .collect();
    write_file(&common.out, "summary.csv", |w| {
        output::write_summaries(w, &hash, runs)
    })?;
    Ok(())
}

fn cmd_converge(common: &Common, starts: usize) -> Outcome {
    let cfg = common.scenario()?;
    let hash = cfg.hash_hex();
    let study = run_convergence_study(&cfg, starts, cfg.rng_seed)?;
    write_file(&common.out, "convergence.csv", |w| {
        output::write_convergence(w, &hash, &study)
    })?;
    write_file(&common.out, "convergence_starts.csv", |w| {
        output::write_convergence_starts(w, &hash, &study)
    })?;
    eprintln!("{}/{} starts settled", study.settled_count(), study.runs.len());
    Ok(())
}

fn cmd_timeplot(common: &Common) -> Outcome {
    let cfg = common.scenario()?;
    let hash = cfg.hash_hex();
    let plot = run_timeplot(&cfg)?;
    write_file(&common.out, "fluid.csv", |w| {
        output::write_trajectory(w, &hash, &plot.fluid)
    })?;
    write_file(&common.out, "trace.csv", |w| output::write_trace(w, &hash, &plot.sim))?;
    let run = ReplicationSummary {
        scenario_hash: hash.clone(),
        seed: cfg.rng_seed,
        summary: plot.sim.summary.clone(),
    };
    write_file(&common.out, "summary.csv", |w| {
        output::write_summaries(w, &hash, [&run])
    })?;
    Ok(())
}

fn configure_workers() -> Outcome {
    let Ok(raw) = std::env::var(WORKERS_ENV) else {
        return Ok(());
    };
    let n: usize = raw.trim().parse().map_err(|_| ConfigError::InvalidValue {
        key: WORKERS_ENV.into(),
        value: raw.clone(),
        reason: "expected a positive integer".into(),
    })?;
    if n == 0 {
        return Err(ConfigError::InvalidValue {
            key: WORKERS_ENV.into(),
            value: raw,
            reason: "expected a positive integer".into(),
        }
        .into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("starting worker pool")?;
    Ok(())
}

fn run(cli: &Cli) -> Outcome {
    configure_workers()?;
    match &cli.command {
        Command::Equilibrium(c) => cmd_equilibrium(c),
        Command::Sweep { common, axis } => cmd_sweep(common, axis),
        Command::Validate { common, axis } => cmd_validate(common, axis),
        Command::Converge { common, starts } => cmd_converge(common, *starts),
        Command::Timeplot(c) => cmd_timeplot(c),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error());
            ExitCode::from(f.code())
        }
    }
}
