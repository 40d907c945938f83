use thiserror::Error;

use crate::fluid::FluidState;

/// Problems with a scenario description: unknown keys, unparsable values or
/// parameter combinations that violate an invariant.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("unknown config key `{0}`")]
    UnknownKey(String),

    #[error("invalid value `{value}` for `{key}`: {reason}")]
    InvalidValue {
        key: String,
        value: String,
        reason: String,
    },

    #[error("malformed line {line}: `{text}` (expected key=value)")]
    Malformed { line: usize, text: String },

    #[error("invalid scenario: {0}")]
    Invariant(String),

    #[error("io error reading {path}: {message}")]
    Io { path: String, message: String },
}

/// Failures raised while evaluating or integrating a model.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("history underflow: lookup at t={requested} before recorded start {start}")]
    HistoryUnderflow { requested: f64, start: f64 },

    #[error("integration diverged at t={t}; last finite state {last_finite:?}")]
    Divergence { t: f64, last_finite: FluidState },

    #[error("step {step} s outside (0, {max}] (prop_delay/10)")]
    InvalidStep { step: f64, max: f64 },

    #[error("no sign change in residual on [0, {max_th}]: r(0)={at_zero}, r(max_th)={at_max}")]
    NoSignChange {
        max_th: f64,
        at_zero: f64,
        at_max: f64,
    },

    #[error("operation requires a RED bottleneck")]
    RedRequired,

    #[error("event time went backwards: {now} -> {next}")]
    EventOrder { now: f64, next: f64 },

    #[error(transparent)]
    Config(#[from] ConfigError),
}
