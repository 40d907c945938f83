//! Parameter sweeps and multi-run studies over the three models.
//!
//! Everything here is deterministic given the inputs: work fans out over the
//! current rayon pool, but results are assembled in input order and each
//! packet-level replication `r` runs with seed `rng_seed + r`.

pub mod output;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::config::resolve_key;
use crate::equilibrium::{self, EquilibriumPoint};
use crate::error::{ConfigError, ModelError};
use crate::fluid::{FluidIntegrator, FluidState, Trajectory};
use crate::packet_sim::{self, SimOptions, SimSummary, SimTrace};
use crate::params::ScenarioConfig;

/// Points on the default normalized-target grid.
pub const DEFAULT_GRID_POINTS: usize = 50;
/// Range of `tau / delay(min_th)` covered by the default grid.
pub const DEFAULT_GRID_RANGE: (f64, f64) = (0.1, 5.0);

/// One-dimensional sweep of a scenario parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSpec {
    pub base: ScenarioConfig,
    /// Canonical dotted key, e.g. `ledbat.target_s`.
    pub axis: &'static str,
    pub values: Vec<f64>,
    /// Packet-level runs per value (validation sweeps only).
    pub replications: usize,
}

impl SweepSpec {
    /// Resolve `axis` and check that every value gives a valid scenario.
    pub fn new(
        base: ScenarioConfig,
        axis: &str,
        values: Vec<f64>,
        replications: usize,
    ) -> Result<Self, ConfigError> {
        let axis = resolve_key(axis)?;
        if values.is_empty() {
            return Err(ConfigError::Invariant("sweep needs at least one value".into()));
        }
        if replications == 0 {
            return Err(ConfigError::InvalidValue {
                key: "replications".into(),
                value: "0".into(),
                reason: "must be at least 1".into(),
            });
        }
        let spec = Self {
            base,
            axis,
            values,
            replications,
        };
        for &v in &spec.values {
            spec.scenario(v)?;
        }
        Ok(spec)
    }

    /// The base scenario with the axis set to `value`.
    pub fn scenario(&self, value: f64) -> Result<ScenarioConfig, ConfigError> {
        self.base.with_value(self.axis, &axis_value_string(value))
    }
}

/// Integral values print without a fraction so integer keys accept them.
pub fn axis_value_string(v: f64) -> String {
    if v.fract() == 0.0 && v.abs() < 1e15 {
        format!("{}", v as i64)
    } else {
        v.to_string()
    }
}

/// `n` log-spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi >= lo && n >= 1);
    if n == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| (a + (b - a) * i as f64 / (n - 1) as f64).exp())
        .collect()
}

/// LEDBAT targets spanning the default `tau / delay(min_th)` grid.
pub fn default_target_grid(cfg: &ScenarioConfig) -> Result<Vec<f64>, ModelError> {
    let red = cfg.red.as_ref().ok_or(ModelError::RedRequired)?;
    let d = cfg.link.queue_delay_s(red.min_th_packets);
    let (lo, hi) = DEFAULT_GRID_RANGE;
    Ok(log_grid(lo, hi, DEFAULT_GRID_POINTS)
        .into_iter()
        .map(|r| r * d)
        .collect())
}

/// Mean and spread of the empirical TCP share over replications.
#[derive(Debug, Clone, PartialEq)]
pub struct EmpiricalShare {
    pub mean: f64,
    /// Sample standard deviation; `None` for a single replication.
    pub std_dev: Option<f64>,
    pub runs: Vec<ReplicationSummary>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReplicationSummary {
    pub scenario_hash: String,
    pub seed: u64,
    pub summary: SimSummary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub value: f64,
    /// `tau / delay(min_th)`.
    pub tau_over_min_th: f64,
    pub equilibrium: EquilibriumPoint,
    pub rho_refined: f64,
    pub empirical: Option<EmpiricalShare>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepResult {
    pub axis: &'static str,
    pub rows: Vec<SweepRow>,
}

fn model_row(cfg: &ScenarioConfig, value: f64) -> Result<SweepRow, ModelError> {
    let red = cfg.red.as_ref().ok_or(ModelError::RedRequired)?;
    let eq = equilibrium::solve(cfg)?;
    let rho_refined = equilibrium::refined_rho(cfg, &eq)?;
    Ok(SweepRow {
        value,
        tau_over_min_th: cfg.ledbat.target_s / cfg.link.queue_delay_s(red.min_th_packets),
        equilibrium: eq,
        rho_refined,
        empirical: None,
    })
}

/// Literal and refined equilibrium for every value of the axis. Values with
/// no equilibrium yield rows with `exists == false`.
pub fn sweep_equilibrium(spec: &SweepSpec) -> Result<SweepResult, ModelError> {
    let rows = spec
        .values
        .par_iter()
        .map(|&v| model_row(&spec.scenario(v)?, v))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(SweepResult {
        axis: spec.axis,
        rows,
    })
}

/// Scenario for replication `r`: the seed is offset by `r`.
pub fn replication(cfg: &ScenarioConfig, r: usize) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.rng_seed = cfg.rng_seed.wrapping_add(r as u64);
    c
}

/// Run `reps` packet-level replications of `cfg` without sampled traces.
pub fn replicate(cfg: &ScenarioConfig, reps: usize) -> Result<EmpiricalShare, ModelError> {
    let opts = SimOptions {
        trace_interval_s: None,
        measure_from_s: None,
    };
    let hash = cfg.hash_hex();
    let runs = (0..reps)
        .into_par_iter()
        .map(|r| {
            let c = replication(cfg, r);
            let tr = packet_sim::run_with(&c, &opts)?;
            Ok(ReplicationSummary {
                scenario_hash: hash.clone(),
                seed: c.rng_seed,
                summary: tr.summary,
            })
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(share_stats(runs))
}

fn share_stats(runs: Vec<ReplicationSummary>) -> EmpiricalShare {
    let n = runs.len() as f64;
    let mean = runs.iter().map(|r| r.summary.rho_emp).sum::<f64>() / n;
    let std_dev = (runs.len() > 1).then(|| {
        let ss: f64 = runs.iter().map(|r| (r.summary.rho_emp - mean).powi(2)).sum();
        (ss / (n - 1.0)).sqrt()
    });
    EmpiricalShare {
        mean,
        std_dev,
        runs,
    }
}

/// Equilibrium, refined model and packet-level replications per value.
pub fn sweep_validation(spec: &SweepSpec) -> Result<SweepResult, ModelError> {
    if spec.replications < 2 {
        return Err(ConfigError::InvalidValue {
            key: "replications".into(),
            value: spec.replications.to_string(),
            reason: "validation needs at least 2".into(),
        }
        .into());
    }
    let rows = spec
        .values
        .par_iter()
        .map(|&v| {
            let cfg = spec.scenario(v)?;
            let mut row = model_row(&cfg, v)?;
            row.empirical = Some(replicate(&cfg, spec.replications)?);
            Ok(row)
        })
        .collect::<Result<Vec<_>, ModelError>>()?;
    Ok(SweepResult {
        axis: spec.axis,
        rows,
    })
}

/// Relative distance to the equilibrium at one instant.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ErrorSample {
    pub t: f64,
    pub err_w: f64,
    pub err_z: f64,
    pub err_q: f64,
    /// Signed `rho(t) - rho*`.
    pub d_rho: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRun {
    pub initial: FluidState,
    pub series: Vec<ErrorSample>,
    /// Whether the final state is within the tolerance of the equilibrium.
    pub settled: bool,
    pub final_state: FluidState,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceStudy {
    pub equilibrium: EquilibriumPoint,
    pub runs: Vec<ConvergenceRun>,
}

impl ConvergenceStudy {
    pub fn settled_count(&self) -> usize {
        self.runs.iter().filter(|r| r.settled).count()
    }
}

/// Relative tolerance for declaring a run settled.
pub const SETTLE_TOLERANCE: f64 = 1e-3;
/// Spacing of the recorded error series.
pub const CONVERGENCE_SAMPLE_S: f64 = 0.1;

fn rel_err(x: f64, target: f64) -> f64 {
    (x - target).abs() / target.abs().max(1.0)
}

fn error_sample(t: f64, s: &FluidState, eq: &EquilibriumPoint) -> ErrorSample {
    ErrorSample {
        t,
        err_w: rel_err(s.w_packets, eq.w_star_packets),
        err_z: rel_err(s.z_packets, eq.z_star_packets),
        err_q: rel_err(s.q_packets, eq.q_star_packets),
        d_rho: s.rho() - eq.rho_star,
    }
}

/// Draw `n_starts` initial states uniformly in `[0, 2W*] x [0, 2Z*] x [0, B]`
/// (with `Q(0) = q(0)`), integrate each over the horizon and record the
/// relative error every [`CONVERGENCE_SAMPLE_S`]. Runs that do not settle
/// are flagged, not treated as failures.
pub fn run_convergence_study(
    cfg: &ScenarioConfig,
    n_starts: usize,
    seed: u64,
) -> Result<ConvergenceStudy, ModelError> {
    if n_starts == 0 {
        return Err(ConfigError::Invariant("n_starts must be at least 1".into()).into());
    }
    let eq = equilibrium::solve(cfg)?;
    if !eq.exists {
        return Err(existence_failure(cfg));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let buffer = cfg.link.buffer();
    let starts: Vec<FluidState> = (0..n_starts)
        .map(|_| {
            let w = rng.gen::<f64>() * 2.0 * eq.w_star_packets;
            let z = rng.gen::<f64>() * 2.0 * eq.z_star_packets;
            let q = rng.gen::<f64>() * buffer;
            FluidState::new(w, z, q, q)
        })
        .collect();
    let runs = starts
        .par_iter()
        .map(|s| convergence_run(cfg, &eq, *s))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(ConvergenceStudy {
        equilibrium: eq,
        runs,
    })
}

/// Integrate one start and record its error series.
pub fn convergence_run(
    cfg: &ScenarioConfig,
    eq: &EquilibriumPoint,
    initial: FluidState,
) -> Result<ConvergenceRun, ModelError> {
    let mut it = FluidIntegrator::new(cfg, initial, cfg.fluid.step_s)?;
    let stride = ((CONVERGENCE_SAMPLE_S / it.step_size()).round() as u64).max(1);
    let n = (cfg.horizon_s / it.step_size()).round() as u64;
    let mut series = vec![error_sample(0.0, &it.state(), eq)];
    for i in 1..=n {
        it.step()?;
        if i % stride == 0 || i == n {
            series.push(error_sample(it.time(), &it.state(), eq));
        }
    }
    let last = series.last().expect("non-empty");
    let settled = last.err_w.max(last.err_z).max(last.err_q) <= SETTLE_TOLERANCE;
    Ok(ConvergenceRun {
        initial,
        series,
        settled,
        final_state: it.state(),
    })
}

/// Error describing why `cfg` has no equilibrium.
pub fn existence_failure(cfg: &ScenarioConfig) -> ModelError {
    let max_th = cfg.red.map(|r| r.max_th_packets).unwrap_or(f64::NAN);
    let at_zero = equilibrium::fixed_point_residual(0.0, cfg).unwrap_or(f64::NAN);
    let at_max = equilibrium::fixed_point_residual(max_th, cfg).unwrap_or(f64::NAN);
    ModelError::NoSignChange {
        max_th,
        at_zero,
        at_max,
    }
}

/// Spacing of the fluid samples in a time plot.
pub const TIMEPLOT_SAMPLE_S: f64 = 0.01;

/// Fluid trajectory from the zero state and one packet-level trace of the
/// same scenario, both sampled every 10 ms.
#[derive(Debug, Clone, PartialEq)]
pub struct Timeplot {
    pub fluid: Trajectory,
    pub sim: SimTrace,
}

pub fn run_timeplot(cfg: &ScenarioConfig) -> Result<Timeplot, ModelError> {
    let (fluid, sim) = rayon::join(
        || sampled_trajectory(cfg, FluidState::default(), TIMEPLOT_SAMPLE_S),
        || packet_sim::run(cfg),
    );
    Ok(Timeplot {
        fluid: fluid?,
        sim: sim?,
    })
}

/// Like [`crate::fluid::integrate`] but keeping only every `sample_s`.
pub fn sampled_trajectory(
    cfg: &ScenarioConfig,
    initial: FluidState,
    sample_s: f64,
) -> Result<Trajectory, ModelError> {
    let mut it = FluidIntegrator::new(cfg, initial, cfg.fluid.step_s)?;
    let stride = ((sample_s / it.step_size()).round() as u64).max(1);
    let n = (cfg.horizon_s / it.step_size()).round() as u64;
    let mut traj = Trajectory::default();
    traj.record(0.0, it.state(), cfg);
    for i in 1..=n {
        it.step()?;
        if i % stride == 0 {
            traj.record(it.time(), it.state(), cfg);
        }
    }
    Ok(traj)
}
