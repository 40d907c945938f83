//! Scenario fixtures shared by the criterion benches.

use bloatline_core::ScenarioConfig;

/// Default RED bottleneck with `n` flows of each class and target `tau_s`.
pub fn red_scenario(n: u32, tau_s: f64, horizon_s: f64) -> ScenarioConfig {
    let mut cfg = ScenarioConfig::default();
    cfg.flows.n_tcp = n;
    cfg.flows.n_ledbat = n;
    cfg.ledbat.target_s = tau_s;
    cfg.horizon_s = horizon_s;
    cfg
}
