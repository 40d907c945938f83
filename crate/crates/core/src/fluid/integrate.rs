use std::collections::VecDeque;

use super::{derivatives, loss_prob, FluidState, StateHistory};
use crate::error::ModelError;
use crate::params::ScenarioConfig;

/// Sampled fluid trajectory. `p` and `rho` are evaluated pointwise.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<FluidState>,
    pub p: Vec<f64>,
    pub rho: Vec<f64>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Append a sample, evaluating `p` and `rho` for it.
    pub fn record(&mut self, t: f64, s: FluidState, cfg: &ScenarioConfig) {
        self.times.push(t);
        self.states.push(s);
        self.p.push(loss_prob(&s, cfg));
        self.rho.push(s.rho());
    }

    pub fn last(&self) -> Option<(f64, FluidState)> {
        Some((*self.times.last()?, *self.states.last()?))
    }

    /// Time average of `f` over samples with `t >= from`.
    pub fn time_average(&self, from: f64, f: impl Fn(&FluidState) -> f64) -> f64 {
        let (sum, n) = self
            .times
            .iter()
            .zip(&self.states)
            .filter(|(t, _)| **t >= from)
            .fold((0.0, 0usize), |(s, n), (_, st)| (s + f(st), n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}

/// Fixed-step classical Runge-Kutta integrator for the delayed fluid system.
pub struct FluidIntegrator<'a> {
    cfg: &'a ScenarioConfig,
    step: f64,
    t0: f64,
    steps: u64,
    state: FluidState,
    history: StateHistory,
    /// Longest possible RTT; history older than this is discarded.
    max_rtt: f64,
}

/// Saved integrator position: time, state and the history needed to carry
/// on. Resuming gives the continuation a history that already solves the
/// system instead of a constant pre-history.
#[derive(Debug, Clone)]
pub struct Checkpoint {
    pub t: f64,
    pub state: FluidState,
    history: StateHistory,
}

fn check_step(cfg: &ScenarioConfig, step_s: f64) -> Result<(), ModelError> {
    let max_step = cfg.link.prop_delay_s / 10.0;
    if !(step_s > 0.0 && step_s <= max_step * (1.0 + 1e-12)) {
        return Err(ModelError::InvalidStep {
            step: step_s,
            max: max_step,
        });
    }
    Ok(())
}

impl<'a> FluidIntegrator<'a> {
    pub fn new(
        cfg: &'a ScenarioConfig,
        initial: FluidState,
        step_s: f64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        check_step(cfg, step_s)?;
        let buffer = cfg.link.buffer();
        let state = initial.clamped(buffer);
        Ok(Self {
            cfg,
            step: step_s,
            t0: 0.0,
            steps: 0,
            state,
            history: StateHistory::new(0.0, state, cfg.fluid.interpolation),
            max_rtt: cfg.link.rtt_s(buffer),
        })
    }

    /// Continue from `checkpoint`, possibly with a different step.
    pub fn resume(
        cfg: &'a ScenarioConfig,
        checkpoint: Checkpoint,
        step_s: f64,
    ) -> Result<Self, ModelError> {
        cfg.validate()?;
        check_step(cfg, step_s)?;
        Ok(Self {
            cfg,
            step: step_s,
            t0: checkpoint.t,
            steps: 0,
            state: checkpoint.state,
            history: checkpoint.history,
            max_rtt: cfg.link.rtt_s(cfg.link.buffer()),
        })
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            t: self.time(),
            state: self.state,
            history: self.history.clone(),
        }
    }

    pub fn time(&self) -> f64 {
        self.t0 + self.steps as f64 * self.step
    }

    pub fn state(&self) -> FluidState {
        self.state
    }

    pub fn step_size(&self) -> f64 {
        self.step
    }

    /// Advance by one step.
    pub fn step(&mut self) -> Result<(), ModelError> {
        let h = self.step;
        let t = self.time();
        let y = self.state;
        let cfg = self.cfg;

        let k1 = derivatives(t, &y, &self.history, cfg)?;
        self.history.push(t, y, k1);
        let k2 = derivatives(t + 0.5 * h, &y.add(&k1.scale(0.5 * h)), &self.history, cfg)?;
        let k3 = derivatives(t + 0.5 * h, &y.add(&k2.scale(0.5 * h)), &self.history, cfg)?;
        let k4 = derivatives(t + h, &y.add(&k3.scale(h)), &self.history, cfg)?;

        let incr = k1.add(&k2.scale(2.0)).add(&k3.scale(2.0)).add(&k4);
        let next = y.add(&incr.scale(h / 6.0));
        if !next.is_finite() {
            return Err(ModelError::Divergence {
                t: t + h,
                last_finite: y,
            });
        }
        self.state = next.clamped(cfg.link.buffer());
        self.steps += 1;
        self.history.prune_before(self.time() - self.max_rtt - 2.0 * h);
        Ok(())
    }
}

/// Integrate from `initial` over `[0, cfg.horizon_s]`, sampling every step.
pub fn integrate(
    cfg: &ScenarioConfig,
    initial: FluidState,
    step_s: f64,
) -> Result<Trajectory, ModelError> {
    let mut it = FluidIntegrator::new(cfg, initial, step_s)?;
    let n = (cfg.horizon_s / step_s).round() as u64;
    let mut traj = Trajectory::default();
    traj.record(0.0, it.state(), cfg);
    for _ in 0..n {
        it.step()?;
        traj.record(it.time(), it.state(), cfg);
    }
    Ok(traj)
}

/// Final state of a [`converge`] run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumEstimate {
    pub t: f64,
    pub state: FluidState,
    pub rho: f64,
}

/// Spacing of the samples kept for the settling test.
const SETTLE_SAMPLE_S: f64 = 0.01;
/// Length of the settling window in RTTs.
const SETTLE_WINDOW_RTTS: f64 = 10.0;

/// Integrate until the state stays within `tol` (relative, per component,
/// floor 1 packet) of its trailing 10-RTT average over the whole window, or
/// until `t_max`. The window may be shorter than 10 RTTs early on, but at
/// least one RTT must have elapsed.
pub fn converge(
    cfg: &ScenarioConfig,
    initial: FluidState,
    tol: f64,
    t_max: f64,
) -> Result<(EquilibriumEstimate, bool), ModelError> {
    assert!(tol > 0.0, "tolerance must be positive");
    let mut it = FluidIntegrator::new(cfg, initial, cfg.fluid.step_s)?;
    let stride = ((SETTLE_SAMPLE_S / it.step_size()).round() as u64).max(1);
    let window_cap = SETTLE_WINDOW_RTTS * cfg.link.rtt_s(cfg.link.buffer());
    let mut window: VecDeque<(f64, FluidState)> = VecDeque::new();
    window.push_back((0.0, it.state()));

    let mut n = 0u64;
    let settled = loop {
        if it.time() >= t_max {
            break false;
        }
        it.step()?;
        n += 1;
        if !n.is_multiple_of(stride) {
            continue;
        }
        let t = it.time();
        let s = it.state();
        window.push_back((t, s));
        while window.front().is_some_and(|(t0, _)| *t0 < t - window_cap) {
            window.pop_front();
        }
        let rtt = cfg.link.rtt_s(s.q_packets);
        if t < rtt {
            continue;
        }
        if window_deviation(&window, t - SETTLE_WINDOW_RTTS * rtt) < tol {
            break true;
        }
    };
    let state = it.state();
    Ok((
        EquilibriumEstimate {
            t: it.time(),
            state,
            rho: state.rho(),
        },
        settled,
    ))
}

fn window_deviation(window: &VecDeque<(f64, FluidState)>, from: f64) -> f64 {
    let pts: Vec<&FluidState> = window
        .iter()
        .filter(|(t, _)| *t >= from)
        .map(|(_, s)| s)
        .collect();
    let n = pts.len() as f64;
    let mean = pts
        .iter()
        .fold(FluidState::default(), |acc, s| acc.add(s))
        .scale(1.0 / n);
    let rel = |x: f64, m: f64| (x - m).abs() / m.abs().max(1.0);
    pts.iter()
        .map(|s| {
            rel(s.w_packets, mean.w_packets)
                .max(rel(s.z_packets, mean.z_packets))
                .max(rel(s.q_packets, mean.q_packets))
                .max(rel(s.q_avg_packets, mean.q_avg_packets))
        })
        .fold(0.0, f64::max)
}
