//! Models of TCP Reno and LEDBAT flows sharing a RED or DropTail bottleneck.
//!
//! * [`fluid`] integrates the delayed fluid equations with fixed-step RK4.
//! * [`equilibrium`] solves for their stationary point and TCP share.
//! * [`packet_sim`] is a per-packet discrete-event simulator of the same setup.
//! * [`experiments`] runs parameter sweeps over all three and writes CSV.

pub mod config;
pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod fluid;
pub mod packet_sim;
pub mod params;

pub use equilibrium::{EquilibriumPoint, Regime};
pub use error::{ConfigError, ModelError};
pub use fluid::{FluidState, StateHistory, Trajectory};
pub use packet_sim::{FlowKind, SimTrace};
pub use params::{
    queue_delay_s, red_drop_prob, FlowPopulation, FluidOptions, HistoryInterpolation,
    LedbatParams, LinkParams, RedProfile, ScenarioConfig,
};
