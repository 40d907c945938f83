//! Scenario parameters and the unit conventions shared by every model.
//!
//! Internally windows and queues are counted in packets, time in seconds and
//! link capacity in packets per second. Conversions from the user-facing
//! units (bits per second, bytes) happen here and nowhere else.

use crate::error::ConfigError;

/// Bottleneck link: capacity, buffer and propagation delay.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkParams {
    pub capacity_bits_per_s: f64,
    pub packet_size_bytes: u32,
    pub buffer_packets: u32,
    /// Round-trip propagation delay.
    pub prop_delay_s: f64,
    /// Upper bound of the per-flow uniform extra propagation delay.
    pub jitter_s: f64,
}

impl LinkParams {
    pub fn capacity_pkts_per_s(&self) -> f64 {
        self.capacity_bits_per_s / (8.0 * f64::from(self.packet_size_bytes))
    }

    /// Transmission time of one packet.
    pub fn packet_time_s(&self) -> f64 {
        1.0 / self.capacity_pkts_per_s()
    }

    pub fn buffer(&self) -> f64 {
        f64::from(self.buffer_packets)
    }

    pub fn queue_delay_s(&self, queue_packets: f64) -> f64 {
        queue_delay_s(queue_packets, self)
    }

    /// Queue length whose drain time equals `delay_s`.
    pub fn delay_to_packets(&self, delay_s: f64) -> f64 {
        delay_s * self.capacity_pkts_per_s()
    }

    /// Bandwidth-delay product in packets.
    pub fn bdp_packets(&self) -> f64 {
        self.capacity_pkts_per_s() * self.prop_delay_s
    }

    /// Round-trip time seen with `queue_packets` waiting in the buffer.
    pub fn rtt_s(&self, queue_packets: f64) -> f64 {
        self.prop_delay_s + self.queue_delay_s(queue_packets)
    }

    fn validate(&self) -> Result<(), ConfigError> {
        check(
            self.capacity_bits_per_s.is_finite() && self.capacity_bits_per_s > 0.0,
            "capacity_bits_per_s must be > 0",
        )?;
        check(self.packet_size_bytes > 0, "packet_size_bytes must be > 0")?;
        check(self.buffer_packets > 0, "buffer_packets must be > 0")?;
        check(
            self.prop_delay_s.is_finite() && self.prop_delay_s >= 0.0,
            "prop_delay_s must be >= 0",
        )?;
        check(
            self.jitter_s.is_finite() && self.jitter_s >= 0.0,
            "jitter_s must be >= 0",
        )
    }
}

impl Default for LinkParams {
    fn default() -> Self {
        Self {
            capacity_bits_per_s: 1.0e6,
            packet_size_bytes: 1250,
            buffer_packets: 100,
            prop_delay_s: 0.05,
            jitter_s: 0.001,
        }
    }
}

/// RED drop profile. Thresholds apply to the EWMA-averaged queue.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RedProfile {
    pub min_th_packets: f64,
    pub max_th_packets: f64,
    pub max_p: f64,
    /// EWMA weight (alpha).
    pub ewma_weight: f64,
    /// Sampling period of the averaged queue (delta).
    pub sample_period_s: f64,
}

impl RedProfile {
    /// Relaxation rate of the averaged queue towards the instantaneous one,
    /// `-ln(1 - alpha) / delta`.
    pub fn ewma_rate(&self) -> f64 {
        -(1.0 - self.ewma_weight).ln() / self.sample_period_s
    }

    pub fn drop_prob(&self, avg_queue_packets: f64) -> f64 {
        red_drop_prob(avg_queue_packets, self)
    }

    fn validate(&self, buffer_packets: u32) -> Result<(), ConfigError> {
        check(
            self.min_th_packets.is_finite() && self.min_th_packets >= 0.0,
            "red.min_th_packets must be >= 0",
        )?;
        check(
            self.max_th_packets > self.min_th_packets,
            "red.max_th_packets must exceed red.min_th_packets",
        )?;
        check(
            self.max_th_packets <= f64::from(buffer_packets),
            "red.max_th_packets must not exceed link.buffer_packets",
        )?;
        check(
            self.max_p > 0.0 && self.max_p <= 1.0,
            "red.max_p must lie in (0, 1]",
        )?;
        check(
            self.ewma_weight > 0.0 && self.ewma_weight < 1.0,
            "red.ewma_weight must lie in (0, 1)",
        )?;
        check(
            self.sample_period_s.is_finite() && self.sample_period_s > 0.0,
            "red.sample_period_s must be > 0",
        )
    }
}

impl Default for RedProfile {
    fn default() -> Self {
        Self {
            min_th_packets: 10.0,
            max_th_packets: 100.0,
            max_p: 0.1,
            ewma_weight: 0.002,
            sample_period_s: 0.01,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LedbatParams {
    /// Target queuing delay (tau).
    pub target_s: f64,
    pub gain: f64,
}

impl LedbatParams {
    pub fn target_packets(&self, link: &LinkParams) -> f64 {
        link.delay_to_packets(self.target_s)
    }

    /// Normalised distance `(tau - d) / tau` of a queuing delay from the
    /// target, scaled by the gain.
    pub fn drift(&self, queue_delay_s: f64) -> f64 {
        self.gain * (self.target_s - queue_delay_s) / self.target_s
    }
}

impl Default for LedbatParams {
    fn default() -> Self {
        Self {
            target_s: 0.1,
            gain: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FlowPopulation {
    pub n_tcp: u32,
    pub n_ledbat: u32,
}

impl FlowPopulation {
    pub fn total(&self) -> u32 {
        self.n_tcp + self.n_ledbat
    }
}

impl Default for FlowPopulation {
    fn default() -> Self {
        Self {
            n_tcp: 1,
            n_ledbat: 1,
        }
    }
}

/// How delayed fluid values are reconstructed between stored steps.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HistoryInterpolation {
    Linear,
    /// Cubic Hermite using the stored derivatives.
    Hermite,
}

/// Numerical and model-variant knobs of the fluid integrator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FluidOptions {
    pub step_s: f64,
    /// Clamp the LEDBAT increase term at zero instead of letting it go negative.
    pub drift_clamp: bool,
    pub interpolation: HistoryInterpolation,
    /// Multiplicative decrease factor: a loss divides the window by this.
    pub decrease_factor: f64,
}

impl Default for FluidOptions {
    fn default() -> Self {
        Self {
            step_s: 0.001,
            drift_clamp: false,
            interpolation: HistoryInterpolation::Hermite,
            decrease_factor: 2.0,
        }
    }
}

/// Complete parameterisation of one experiment. `red == None` is DropTail.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub link: LinkParams,
    pub red: Option<RedProfile>,
    pub ledbat: LedbatParams,
    pub flows: FlowPopulation,
    pub horizon_s: f64,
    pub rng_seed: u64,
    /// Packet-simulator replications per sweep point.
    pub replications: usize,
    pub fluid: FluidOptions,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            link: LinkParams::default(),
            red: Some(RedProfile::default()),
            ledbat: LedbatParams::default(),
            flows: FlowPopulation::default(),
            horizon_s: 300.0,
            rng_seed: 1,
            replications: 10,
            fluid: FluidOptions::default(),
        }
    }
}

impl ScenarioConfig {
    /// Same scenario behind a DropTail queue.
    pub fn droptail() -> Self {
        Self {
            red: None,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.link.validate()?;
        if let Some(red) = &self.red {
            red.validate(self.link.buffer_packets)?;
        }
        check(
            self.ledbat.target_s.is_finite() && self.ledbat.target_s > 0.0,
            "ledbat.target_s must be > 0",
        )?;
        check(
            self.ledbat.gain.is_finite() && self.ledbat.gain > 0.0,
            "ledbat.gain must be > 0",
        )?;
        check(
            self.flows.total() >= 1,
            "flows.n_tcp + flows.n_ledbat must be >= 1",
        )?;
        check(
            self.horizon_s.is_finite() && self.horizon_s > 10.0 * self.link.prop_delay_s,
            "horizon_s must exceed 10 * prop_delay_s",
        )?;
        check(self.replications >= 1, "replications must be >= 1")?;
        check(
            self.fluid.step_s.is_finite() && self.fluid.step_s > 0.0,
            "fluid.step_s must be > 0",
        )?;
        check(
            self.fluid.decrease_factor > 1.0,
            "fluid.decrease_factor must be > 1",
        )
    }

    /// Current-queue drop probability under the configured discipline,
    /// ignoring buffer overflow.
    pub fn red_prob(&self, avg_queue_packets: f64) -> f64 {
        self.red
            .as_ref()
            .map_or(0.0, |red| red_drop_prob(avg_queue_packets, red))
    }
}

fn check(cond: bool, msg: &str) -> Result<(), ConfigError> {
    if cond {
        Ok(())
    } else {
        Err(ConfigError::Invariant(msg.to_owned()))
    }
}

/// RED drop probability as a function of the averaged queue: zero below
/// `min_th`, a linear ramp up to `max_p` at `max_th`, and one above.
pub fn red_drop_prob(avg_queue_packets: f64, red: &RedProfile) -> f64 {
    let q = avg_queue_packets;
    if q < red.min_th_packets {
        0.0
    } else if q <= red.max_th_packets {
        red.max_p * (q - red.min_th_packets) / (red.max_th_packets - red.min_th_packets)
    } else {
        1.0
    }
}

/// Time needed to drain `queue_packets` at link capacity.
pub fn queue_delay_s(queue_packets: f64, link: &LinkParams) -> f64 {
    queue_packets / link.capacity_pkts_per_s()
}
