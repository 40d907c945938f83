//! Fluid model of `N_W` TCP and `N_Z` LEDBAT flows sharing one bottleneck.
//!
//! Flows of the same class are homogeneous, so the state is one representative
//! TCP window `W`, one LEDBAT window `Z`, the instantaneous queue `q` and the
//! RED averaged queue `Q`:
//!
//! ```text
//! dW/dt = 1/R(t) - c * W(t) W(t-R) / R(t-R) * p(t-R)
//! dZ/dt = g (tau - q(t)/C) / tau / R(t) - c * Z(t) Z(t-R) / R(t-R) * p(t-R)
//! dq/dt = (N_W W + N_Z Z) / R(t) * (1 - p(t)) - C * 1{q > 0 or arrivals >= C}
//! dQ/dt = (-ln(1 - alpha) / delta) * (q - Q)
//! ```
//!
//! with `R(t) = T_p + q(t)/C` and `c = 1 - 1/beta` for a multiplicative
//! decrease factor `beta` (`c = 1/2` for halving).
//!
//! `p` is the RED drop probability of `Q`. At a full buffer the overflow loss
//! `1 - C/arrivals` applies on top, which is the whole loss law under DropTail.

mod history;
mod integrate;

pub use history::StateHistory;
pub use integrate::{
    converge, integrate, Checkpoint, EquilibriumEstimate, FluidIntegrator, Trajectory,
};

use crate::error::ModelError;
use crate::params::ScenarioConfig;

/// Tolerance used to decide that the fluid queue sits at the buffer limit.
const FULL_BUFFER_EPS: f64 = 1e-9;

/// Instantaneous fluid variables. Also used for their time derivatives.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FluidState {
    pub w_packets: f64,
    pub z_packets: f64,
    pub q_packets: f64,
    pub q_avg_packets: f64,
}

impl FluidState {
    pub fn new(w: f64, z: f64, q: f64, q_avg: f64) -> Self {
        Self {
            w_packets: w,
            z_packets: z,
            q_packets: q,
            q_avg_packets: q_avg,
        }
    }

    pub fn add(&self, o: &Self) -> Self {
        Self::new(
            self.w_packets + o.w_packets,
            self.z_packets + o.z_packets,
            self.q_packets + o.q_packets,
            self.q_avg_packets + o.q_avg_packets,
        )
    }

    pub fn scale(&self, k: f64) -> Self {
        Self::new(
            self.w_packets * k,
            self.z_packets * k,
            self.q_packets * k,
            self.q_avg_packets * k,
        )
    }

    pub fn is_finite(&self) -> bool {
        self.w_packets.is_finite()
            && self.z_packets.is_finite()
            && self.q_packets.is_finite()
            && self.q_avg_packets.is_finite()
    }

    pub fn max_abs(&self) -> f64 {
        self.w_packets
            .abs()
            .max(self.z_packets.abs())
            .max(self.q_packets.abs())
            .max(self.q_avg_packets.abs())
    }

    /// Project onto the physical domain: windows and averaged queue
    /// non-negative, queue within `[0, buffer]`.
    pub fn clamped(&self, buffer_packets: f64) -> Self {
        Self::new(
            self.w_packets.max(0.0),
            self.z_packets.max(0.0),
            self.q_packets.clamp(0.0, buffer_packets),
            self.q_avg_packets.max(0.0),
        )
    }

    /// TCP share `W / (W + Z)`; one whenever `Z` is zero.
    pub fn rho(&self) -> f64 {
        share_ratio(self.w_packets, self.z_packets)
    }
}

pub(crate) fn share_ratio(w: f64, z: f64) -> f64 {
    if z <= 0.0 {
        1.0
    } else {
        w / (w + z)
    }
}

/// Aggregate sending rate in packets per second.
pub fn arrival_rate(state: &FluidState, cfg: &ScenarioConfig) -> f64 {
    let r = cfg.link.rtt_s(state.q_packets.max(0.0));
    (f64::from(cfg.flows.n_tcp) * state.w_packets.max(0.0)
        + f64::from(cfg.flows.n_ledbat) * state.z_packets.max(0.0))
        / r
}

/// Drop probability seen by arrivals in `state`.
pub fn loss_prob(state: &FluidState, cfg: &ScenarioConfig) -> f64 {
    let p_red = cfg.red_prob(state.q_avg_packets);
    let buffer = cfg.link.buffer();
    if state.q_packets >= buffer - FULL_BUFFER_EPS {
        let lambda = arrival_rate(state, cfg);
        let c = cfg.link.capacity_pkts_per_s();
        if lambda > c {
            return p_red.max(1.0 - c / lambda);
        }
    }
    p_red
}

/// Right-hand side of the fluid system at time `t`.
///
/// `history` must cover `[t - R_max, t)`; the delayed state is read at
/// `t - R(t)`.
pub fn derivatives(
    t: f64,
    state: &FluidState,
    history: &StateHistory,
    cfg: &ScenarioConfig,
) -> Result<FluidState, ModelError> {
    let link = &cfg.link;
    let buffer = link.buffer();
    let s = state.clamped(buffer);
    let c = link.capacity_pkts_per_s();
    let rtt = link.rtt_s(s.q_packets);

    let delayed = history.lookup(t - rtt)?.clamped(buffer);
    let rtt_d = link.rtt_s(delayed.q_packets);
    let p_d = loss_prob(&delayed, cfg);
    let loss_coeff = 1.0 - 1.0 / cfg.fluid.decrease_factor;

    let dw = 1.0 / rtt - loss_coeff * s.w_packets * delayed.w_packets / rtt_d * p_d;

    let mut drift = cfg.ledbat.drift(link.queue_delay_s(s.q_packets));
    if cfg.fluid.drift_clamp {
        drift = drift.max(0.0);
    }
    let dz = drift / rtt - loss_coeff * s.z_packets * delayed.z_packets / rtt_d * p_d;

    let p = loss_prob(&s, cfg);
    let accepted = arrival_rate(&s, cfg) * (1.0 - p);
    let service = if s.q_packets > 0.0 || accepted >= c {
        c
    } else {
        accepted
    };
    let mut dq = accepted - service;
    if s.q_packets >= buffer - FULL_BUFFER_EPS {
        dq = dq.min(0.0);
    }

    let dq_avg = match &cfg.red {
        Some(red) => red.ewma_rate() * (s.q_packets - s.q_avg_packets),
        None => 0.0,
    };

    Ok(FluidState::new(dw, dz, dq, dq_avg))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::{FlowPopulation, ScenarioConfig};

    #[test]
    fn lossless_tcp_ramp_is_one_over_rtt() {
        let mut cfg = ScenarioConfig::default();
        cfg.flows = FlowPopulation { n_tcp: 1, n_ledbat: 0 };
        let s = FluidState::new(1.0, 0.0, 0.0, 0.0);
        let d = derivatives(1.0, &s, &StateHistory::constant(s), &cfg).unwrap();
        assert!((d.w_packets - 20.0).abs() < 1e-12);
        // empty queue and 20 pkt/s of arrivals on a 100 pkt/s link
        assert_eq!(d.q_packets, 0.0);
        assert_eq!(d.q_avg_packets, 0.0);
    }

    #[test]
    fn ledbat_drift_vanishes_at_target_delay() {
        let cfg = ScenarioConfig::default();
        // tau = 100 ms = 10 packets on the default link
        let s = FluidState::new(10.0, 10.0, 10.0, 30.0);
        let d = derivatives(5.0, &s, &StateHistory::constant(s), &cfg).unwrap();
        let p = loss_prob(&s, &cfg);
        assert!(p > 0.0);
        let rtt = cfg.link.rtt_s(10.0);
        let loss_term = 0.5 * 10.0 * 10.0 / rtt * p;
        assert!((d.z_packets + loss_term).abs() < 1e-12);
        assert!(d.z_packets <= 0.0);
    }

    #[test]
    fn ledbat_never_outgrows_tcp() {
        let cfg = ScenarioConfig::default();
        for &(x, q, qa) in &[(5.0, 0.0, 0.0), (12.0, 3.0, 15.0), (30.0, 50.0, 40.0)] {
            let s = FluidState::new(x, x, q, qa);
            let d = derivatives(1.0, &s, &StateHistory::constant(s), &cfg).unwrap();
            if q == 0.0 {
                assert!((d.z_packets - d.w_packets).abs() < 1e-12);
            } else {
                assert!(d.z_packets < d.w_packets);
            }
        }
    }

    #[test]
    fn droptail_overflow_law() {
        let cfg = ScenarioConfig::droptail();
        let b = cfg.link.buffer();
        let s = FluidState::new(200.0, 0.0, b, 0.0);
        let lambda = arrival_rate(&s, &cfg);
        assert!(lambda > 100.0);
        let p = loss_prob(&s, &cfg);
        assert!((p - (1.0 - 100.0 / lambda)).abs() < 1e-12);
        let d = derivatives(1.0, &s, &StateHistory::constant(s), &cfg).unwrap();
        assert!(d.q_packets.abs() < 1e-9);
        // below the limit nothing is lost
        let s2 = FluidState::new(200.0, 0.0, b - 1.0, 0.0);
        assert_eq!(loss_prob(&s2, &cfg), 0.0);
    }

    #[test]
    fn clamped_drift_variant() {
        let mut cfg = ScenarioConfig::default();
        cfg.red = None;
        cfg.fluid.drift_clamp = true;
        let s = FluidState::new(1.0, 1.0, 50.0, 0.0);
        let d = derivatives(1.0, &s, &StateHistory::constant(s), &cfg).unwrap();
        assert_eq!(d.z_packets, 0.0);
        cfg.fluid.drift_clamp = false;
        let d = derivatives(1.0, &s, &StateHistory::constant(s), &cfg).unwrap();
        assert!(d.z_packets < 0.0);
    }

    #[test]
    fn share_ratio_conventions() {
        assert_eq!(FluidState::new(3.0, 0.0, 0.0, 0.0).rho(), 1.0);
        assert_eq!(FluidState::new(3.0, 1.0, 0.0, 0.0).rho(), 0.75);
        assert_eq!(FluidState::default().rho(), 1.0);
    }
}
