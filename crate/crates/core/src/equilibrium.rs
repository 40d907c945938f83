//! Stationary point of the fluid model under RED.
//!
//! Setting every derivative of the fluid system to zero gives `Q* = q*`,
//! `W* = k / sqrt(p*)` and `Z* = k sqrt(x) / sqrt(p*)`, where
//! `x = g (tau - d(q*)) / tau` is the LEDBAT drift at the equilibrium delay
//! (zero once the queue reaches the target) and `k = sqrt(beta / (beta - 1))`
//! for multiplicative decrease factor `beta` (`k = sqrt 2` for halving).
//! Queue stationarity then pins `q*` as the root of
//!
//! ```text
//! (T_p + q/C) sqrt(f(q)) / (1 - f(q)) = (k N_W + k sqrt(x(q)) N_Z) / C
//! ```
//!
//! The left side is non-decreasing in `q` and zero below `min_th`, the right
//! side non-increasing, so the root is unique when it exists.

use crate::error::ModelError;
use crate::params::{red_drop_prob, RedProfile, ScenarioConfig};

/// Decrease factor of the literal model (halving on loss).
pub const HALVING: f64 = 2.0;
/// Decrease factor of the refined model.
pub const REFINED_DECREASE: f64 = 1.5;

/// Points of the preliminary scan that brackets the root.
const SCAN_POINTS: usize = 1024;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Regime {
    /// Equilibrium queuing delay below the LEDBAT target.
    LedbatActive,
    /// Queue at or above the target: LEDBAT windows vanish.
    LedbatStarved,
}

impl Regime {
    pub fn as_str(&self) -> &'static str {
        match self {
            Regime::LedbatActive => "ledbat_active",
            Regime::LedbatStarved => "ledbat_starved",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EquilibriumPoint {
    pub q_star_packets: f64,
    pub q_avg_star_packets: f64,
    pub p_star: f64,
    pub w_star_packets: f64,
    pub z_star_packets: f64,
    pub rho_star: f64,
    pub regime: Regime,
    /// False when RED cannot hold the queue below `max_th`; the other fields
    /// then describe the `max_th` boundary.
    pub exists: bool,
}

fn red_of(cfg: &ScenarioConfig) -> Result<&RedProfile, ModelError> {
    cfg.red.as_ref().ok_or(ModelError::RedRequired)
}

fn window_constant(decrease_factor: f64) -> f64 {
    (decrease_factor / (decrease_factor - 1.0)).sqrt()
}

/// LEDBAT drift at a queue of `q` packets, floored at zero.
fn drift_at(q: f64, cfg: &ScenarioConfig) -> f64 {
    cfg.ledbat.drift(cfg.link.queue_delay_s(q)).max(0.0)
}

/// Left side of the fixed-point equation; `+inf` once `f(q) = 1`.
pub fn fixed_point_lhs(q: f64, red: &RedProfile, cfg: &ScenarioConfig) -> f64 {
    let f = red_drop_prob(q, red);
    if f >= 1.0 {
        return f64::INFINITY;
    }
    cfg.link.rtt_s(q) * f.sqrt() / (1.0 - f)
}

/// Right side of the fixed-point equation for decrease factor `beta`.
pub fn fixed_point_rhs(q: f64, cfg: &ScenarioConfig, beta: f64) -> f64 {
    let k = window_constant(beta);
    let n_w = f64::from(cfg.flows.n_tcp);
    let n_z = f64::from(cfg.flows.n_ledbat);
    (k * n_w + k * drift_at(q, cfg).sqrt() * n_z) / cfg.link.capacity_pkts_per_s()
}

fn residual(q: f64, red: &RedProfile, cfg: &ScenarioConfig, beta: f64) -> f64 {
    let lhs = fixed_point_lhs(q, red, cfg);
    if lhs.is_infinite() {
        return f64::INFINITY;
    }
    lhs - fixed_point_rhs(q, cfg, beta)
}

/// `LHS(q) - RHS(q)` of the fixed-point equation (halving model).
/// Requires a RED bottleneck; returns `+inf` at the pole `f(q) = 1`.
pub fn fixed_point_residual(q_packets: f64, cfg: &ScenarioConfig) -> Result<f64, ModelError> {
    Ok(residual(q_packets, red_of(cfg)?, cfg, HALVING))
}

/// True iff the fixed-point equation has a root in `[0, max_th]`.
pub fn existence_check(cfg: &ScenarioConfig) -> Result<bool, ModelError> {
    existence_check_with(cfg, HALVING)
}

pub fn existence_check_with(cfg: &ScenarioConfig, beta: f64) -> Result<bool, ModelError> {
    let red = red_of(cfg)?;
    if red.max_p >= 1.0 {
        return Ok(true);
    }
    Ok(residual(red.max_th_packets, red, cfg, beta) > 0.0)
}

/// Equilibrium of the literal (halving) model.
pub fn solve(cfg: &ScenarioConfig) -> Result<EquilibriumPoint, ModelError> {
    solve_with(cfg, HALVING)
}

/// Equilibrium for an arbitrary multiplicative decrease factor.
pub fn solve_with(cfg: &ScenarioConfig, beta: f64) -> Result<EquilibriumPoint, ModelError> {
    let red = red_of(cfg)?;
    let max_th = red.max_th_packets;
    let r = |q: f64| residual(q, red, cfg, beta);

    if !existence_check_with(cfg, beta)? {
        return Ok(fill(max_th, red, cfg, beta, false));
    }

    // scan for the first grid point with a non-negative residual
    let mut lo = 0.0;
    let mut hi = f64::NAN;
    let r0 = r(0.0);
    if r0 == 0.0 {
        return Ok(fill(0.0, red, cfg, beta, true));
    }
    for i in 1..=SCAN_POINTS {
        let q = max_th * i as f64 / SCAN_POINTS as f64;
        let v = r(q);
        if v == 0.0 {
            return Ok(fill(q, red, cfg, beta, true));
        }
        if v > 0.0 {
            hi = q;
            break;
        }
        lo = q;
    }
    if hi.is_nan() || r0 > 0.0 {
        return Err(ModelError::NoSignChange {
            max_th,
            at_zero: r0,
            at_max: r(max_th),
        });
    }

    // bisect down to adjacent floats
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let v = r(mid);
        if v == 0.0 {
            return Ok(fill(mid, red, cfg, beta, true));
        }
        if v < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let q = if r(hi).abs() < r(lo).abs() { hi } else { lo };
    Ok(fill(q, red, cfg, beta, true))
}

fn fill(q: f64, red: &RedProfile, cfg: &ScenarioConfig, beta: f64, exists: bool) -> EquilibriumPoint {
    let k = window_constant(beta);
    let p = red_drop_prob(q, red);
    let drift = drift_at(q, cfg);
    let active = cfg.link.queue_delay_s(q) < cfg.ledbat.target_s;
    let w = if p > 0.0 { k / p.sqrt() } else { f64::INFINITY };
    let z = if !active {
        0.0
    } else if p > 0.0 {
        k * drift.sqrt() / p.sqrt()
    } else {
        f64::INFINITY
    };
    let rho = if active {
        1.0 / (1.0 + drift.sqrt())
    } else {
        1.0
    };
    EquilibriumPoint {
        q_star_packets: q,
        q_avg_star_packets: q,
        p_star: p,
        w_star_packets: w,
        z_star_packets: z,
        rho_star: rho,
        regime: if active {
            Regime::LedbatActive
        } else {
            Regime::LedbatStarved
        },
        exists,
    }
}

/// Upper bound on the TCP share when every LEDBAT flow keeps one packet per
/// RTT in flight: `1 - N_Z / (C T_p + q)` with `C T_p` in packets.
pub fn ledbat_floor_cap(cfg: &ScenarioConfig, q_packets: f64) -> f64 {
    let n_z = f64::from(cfg.flows.n_ledbat);
    (1.0 - n_z / (cfg.link.bdp_packets() + q_packets)).clamp(0.0, 1.0)
}

/// TCP share of the refined model: decrease factor 1.5 in place of halving,
/// and, when LEDBAT is starved, the one-packet-per-RTT floor as a cap.
pub fn refined_rho(cfg: &ScenarioConfig, base: &EquilibriumPoint) -> Result<f64, ModelError> {
    let refined = solve_with(cfg, REFINED_DECREASE)?;
    if !base.exists && !refined.exists {
        return Ok(base.rho_star);
    }
    let mut rho = refined.rho_star;
    if cfg.flows.n_ledbat > 0 && refined.regime == Regime::LedbatStarved {
        rho = rho.min(ledbat_floor_cap(cfg, refined.q_star_packets));
    }
    Ok(rho)
}

/// Find the LEDBAT target for which the equilibrium queuing delay is
/// `ratio * target`, returning the adjusted scenario and its equilibrium.
pub fn target_for_delay_ratio(
    cfg: &ScenarioConfig,
    ratio: f64,
) -> Result<(ScenarioConfig, EquilibriumPoint), ModelError> {
    assert!(ratio > 0.0, "ratio must be positive");
    let red = *red_of(cfg)?;
    let mut c = cfg.clone();
    let mut g = |tau: f64| -> Result<(f64, EquilibriumPoint), ModelError> {
        c.ledbat.target_s = tau;
        let eq = solve(&c)?;
        Ok((c.link.queue_delay_s(eq.q_star_packets) - ratio * tau, eq))
    };
    let mut lo = 1e-9;
    let mut hi = 2.0 * cfg.link.queue_delay_s(red.max_th_packets) / ratio + 1.0;
    let (g_lo, _) = g(lo)?;
    let (g_hi, _) = g(hi)?;
    if !(g_lo > 0.0 && g_hi < 0.0) {
        return Err(ModelError::NoSignChange {
            max_th: red.max_th_packets,
            at_zero: g_lo,
            at_max: g_hi,
        });
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let (v, _) = g(mid)?;
        if v > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let tau = 0.5 * (lo + hi);
    let (_, eq) = g(tau)?;
    let mut out = cfg.clone();
    out.ledbat.target_s = tau;
    Ok((out, eq))
}
