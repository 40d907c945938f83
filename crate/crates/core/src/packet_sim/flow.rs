/// Congestion controller of a simulated sender.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FlowKind {
    Tcp,
    Ledbat,
}

impl FlowKind {
    pub fn as_str(&self) -> &'static str {
        match self {
            FlowKind::Tcp => "tcp",
            FlowKind::Ledbat => "ledbat",
        }
    }
}

/// Smallest congestion window, in packets.
pub const MIN_CWND: f64 = 1.0;

/// Sender-side state of one flow.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowState {
    pub kind: FlowKind,
    pub cwnd_packets: f64,
    /// Packets sent whose ack or loss notification has not come back yet.
    pub in_flight: u32,
    /// Smallest one-way delay observed so far.
    pub base_owd_s: f64,
    /// Time of the last multiplicative decrease.
    pub last_decrease_t: f64,
    /// Round-trip propagation delay of this flow (link delay plus jitter).
    pub prop_delay_s: f64,
    /// Most recent RTT sample; gates the once-per-RTT decrease.
    pub rtt_estimate_s: f64,
}

impl FlowState {
    pub fn new(kind: FlowKind, prop_delay_s: f64) -> Self {
        Self {
            kind,
            cwnd_packets: MIN_CWND,
            in_flight: 0,
            base_owd_s: f64::INFINITY,
            last_decrease_t: f64::NEG_INFINITY,
            prop_delay_s,
            rtt_estimate_s: prop_delay_s,
        }
    }

    /// Congestion avoidance increase: one packet per window of acks.
    pub fn on_ack_tcp(&mut self) {
        self.cwnd_packets += 1.0 / self.cwnd_packets;
    }

    /// Delay-based update. Returns the queuing delay estimate used.
    pub fn on_ack_ledbat(&mut self, owd_sample_s: f64, tau_s: f64, gain: f64) -> f64 {
        self.base_owd_s = self.base_owd_s.min(owd_sample_s);
        let queuing = owd_sample_s - self.base_owd_s;
        let off_target = (tau_s - queuing) / tau_s;
        self.cwnd_packets = (self.cwnd_packets + gain * off_target / self.cwnd_packets).max(MIN_CWND);
        queuing
    }

    /// Halve the window, at most once per RTT.
    pub fn on_loss(&mut self, t: f64) {
        if t - self.last_decrease_t > self.rtt_estimate_s {
            self.cwnd_packets = (self.cwnd_packets / 2.0).max(MIN_CWND);
            self.last_decrease_t = t;
        }
    }

    pub fn on_ack(&mut self, owd_sample_s: f64, rtt_sample_s: f64, tau_s: f64, gain: f64) {
        self.rtt_estimate_s = rtt_sample_s;
        match self.kind {
            FlowKind::Tcp => self.on_ack_tcp(),
            FlowKind::Ledbat => {
                self.on_ack_ledbat(owd_sample_s, tau_s, gain);
            }
        }
    }

    /// Packets the window currently allows on top of those in flight.
    pub fn send_allowance(&self) -> u32 {
        let window = self.cwnd_packets.floor() as u32;
        window.saturating_sub(self.in_flight)
    }
}
