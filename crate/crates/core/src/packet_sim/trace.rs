use super::flow::FlowKind;

/// Per-flow packet accounting. `sent = delivered + dropped + in_flight`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct FlowCounters {
    pub sent: u64,
    pub delivered: u64,
    pub dropped: u64,
    pub in_flight: u64,
}

impl FlowCounters {
    pub fn is_conserved(&self) -> bool {
        self.sent == self.delivered + self.dropped + self.in_flight
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowSample {
    pub cwnd_packets: f64,
    pub counters: FlowCounters,
}

/// Snapshot of the simulator at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceSample {
    pub t: f64,
    /// Backlog including the packet in service.
    pub queue_packets: usize,
    pub ewma_packets: f64,
    pub flows: Vec<FlowSample>,
}

/// Statistics over the measurement window `[measure_from_s, measure_to_s]`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimSummary {
    pub measure_from_s: f64,
    pub measure_to_s: f64,
    /// Acked packets per second, per flow.
    pub goodput_per_flow_pps: Vec<f64>,
    /// Mean per-flow goodput of each class.
    pub goodput_tcp_pps: f64,
    pub goodput_ledbat_pps: f64,
    /// `tcp / (tcp + ledbat)` on the per-flow class means.
    pub rho_emp: f64,
    /// Fraction of packets arriving at the bottleneck that were dropped.
    pub drop_rate: f64,
    /// Departures over what the link could have served.
    pub utilization: f64,
    /// Time-average backlog.
    pub mean_queue_packets: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimTrace {
    pub kinds: Vec<FlowKind>,
    pub prop_delays_s: Vec<f64>,
    pub samples: Vec<TraceSample>,
    /// Counters at the end of the run.
    pub counters: Vec<FlowCounters>,
    pub summary: SimSummary,
}

impl SimTrace {
    /// Time-average of a sampled series over `t >= from`.
    pub fn sample_average(&self, from: f64, f: impl Fn(&TraceSample) -> f64) -> f64 {
        let (sum, n) = self
            .samples
            .iter()
            .filter(|s| s.t >= from)
            .fold((0.0, 0usize), |(acc, n), s| (acc + f(s), n + 1));
        if n == 0 {
            f64::NAN
        } else {
            sum / n as f64
        }
    }
}
