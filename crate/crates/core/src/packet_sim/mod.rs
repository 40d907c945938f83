//! Per-packet discrete-event simulator of Reno (congestion avoidance only)
//! and LEDBAT senders behind one RED or DropTail bottleneck.
//!
//! Senders sit right before the bottleneck. A packet that leaves the server
//! reaches its receiver half a propagation RTT later and the ack returns after
//! the other half. Dropped packets are reported to the sender explicitly after
//! the reverse half of the propagation RTT, which stands in for duplicate-ack
//! detection.

mod flow;
mod queue;
mod trace;

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use flow::{FlowKind, FlowState, MIN_CWND};
pub use queue::{BottleneckQueue, Discipline, QueuedPacket};
pub use trace::{FlowCounters, FlowSample, SimSummary, SimTrace, TraceSample};

use crate::error::ModelError;
use crate::params::ScenarioConfig;

/// Default spacing of trace samples.
pub const TRACE_INTERVAL_S: f64 = 0.01;

/// Knobs that do not belong in the scenario itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimOptions {
    /// `None` disables the sampled series; the summary is still computed.
    pub trace_interval_s: Option<f64>,
    /// Start of the measurement window; `None` means half the horizon.
    pub measure_from_s: Option<f64>,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            trace_interval_s: Some(TRACE_INTERVAL_S),
            measure_from_s: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Event {
    /// The packet at the head of the queue finishes service.
    Departure,
    /// A packet reaches its receiver.
    Delivery { flow: usize, sent_t: f64 },
    /// The ack for a delivered packet reaches the sender.
    Ack { flow: usize, sent_t: f64, owd_s: f64 },
    /// The sender learns that one of its packets was dropped.
    LossNotice { flow: usize },
    /// Trace sample number `k`, taken at `k` times the trace interval.
    Sample { k: u64 },
}

#[derive(Debug, Clone, Copy)]
struct Scheduled {
    t: f64,
    seq: u64,
    event: Event,
}

impl PartialEq for Scheduled {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Scheduled {}

impl PartialOrd for Scheduled {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

// Reversed so that `BinaryHeap` pops the earliest event; ties go to the
// event scheduled first.
impl Ord for Scheduled {
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .t
            .total_cmp(&self.t)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Window-measured counters, reset at the start of the measurement window.
#[derive(Debug, Clone, Default)]
struct WindowStats {
    delivered: Vec<u64>,
    arrivals: u64,
    drops: u64,
    departures: u64,
    queue_area: f64,
}

struct Simulator<'a> {
    cfg: &'a ScenarioConfig,
    now: f64,
    seq: u64,
    events: BinaryHeap<Scheduled>,
    rng: ChaCha8Rng,
    queue: BottleneckQueue,
    flows: Vec<FlowState>,
    counters: Vec<FlowCounters>,
    measure_from: f64,
    measuring: bool,
    window: WindowStats,
    last_queue_change: f64,
    trace_interval: Option<f64>,
    samples: Vec<TraceSample>,
}

impl<'a> Simulator<'a> {
    fn new(cfg: &'a ScenarioConfig, opts: &SimOptions) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.rng_seed);
        let link = &cfg.link;
        let kinds = (0..cfg.flows.n_tcp)
            .map(|_| FlowKind::Tcp)
            .chain((0..cfg.flows.n_ledbat).map(|_| FlowKind::Ledbat));
        let flows: Vec<FlowState> = kinds
            .map(|kind| {
                let jitter = if link.jitter_s > 0.0 {
                    rng.gen_range(0.0..=link.jitter_s)
                } else {
                    0.0
                };
                FlowState::new(kind, link.prop_delay_s + jitter)
            })
            .collect();
        let discipline = match cfg.red {
            Some(red) => Discipline::Red(red),
            None => Discipline::DropTail,
        };
        let n = flows.len();
        Self {
            cfg,
            now: 0.0,
            seq: 0,
            events: BinaryHeap::new(),
            rng,
            queue: BottleneckQueue::new(
                link.capacity_pkts_per_s(),
                link.buffer_packets as usize,
                discipline,
            ),
            flows,
            counters: vec![FlowCounters::default(); n],
            measure_from: opts.measure_from_s.unwrap_or(cfg.horizon_s / 2.0),
            measuring: false,
            window: WindowStats {
                delivered: vec![0; n],
                ..WindowStats::default()
            },
            last_queue_change: 0.0,
            trace_interval: opts.trace_interval_s,
            samples: Vec::new(),
        }
    }

    fn schedule(&mut self, t: f64, event: Event) {
        self.seq += 1;
        self.events.push(Scheduled {
            t,
            seq: self.seq,
            event,
        });
    }

    /// Accumulate the queue-length integral up to `now`.
    fn touch_queue(&mut self) {
        if self.measuring {
            self.window.queue_area += self.queue.len() as f64 * (self.now - self.last_queue_change);
        }
        self.last_queue_change = self.now;
    }

    fn start_measuring(&mut self) {
        self.touch_queue();
        self.measuring = true;
        self.last_queue_change = self.measure_from;
    }

    fn try_send(&mut self, id: usize) {
        let allowance = self.flows[id].send_allowance();
        for _ in 0..allowance {
            self.send_one(id);
        }
    }

    fn send_one(&mut self, id: usize) {
        let t = self.now;
        self.flows[id].in_flight += 1;
        self.counters[id].sent += 1;
        if self.measuring {
            self.window.arrivals += 1;
        }
        let pkt = QueuedPacket {
            flow: id,
            sent_t: t,
            enqueue_t: t,
        };
        let was_idle = self.queue.is_empty();
        self.touch_queue();
        if self.queue.enqueue(pkt, &mut self.rng) {
            if was_idle {
                self.schedule(t + self.queue.service_time_s(), Event::Departure);
            }
        } else {
            if self.measuring {
                self.window.drops += 1;
            }
            let notice = t + self.flows[id].prop_delay_s / 2.0;
            self.schedule(notice, Event::LossNotice { flow: id });
        }
    }

    fn handle(&mut self, event: Event) {
        let t = self.now;
        match event {
            Event::Departure => {
                self.touch_queue();
                let pkt = self.queue.dequeue().expect("departure from an empty queue");
                if self.measuring {
                    self.window.departures += 1;
                }
                let fwd = self.flows[pkt.flow].prop_delay_s / 2.0;
                self.schedule(
                    t + fwd,
                    Event::Delivery {
                        flow: pkt.flow,
                        sent_t: pkt.sent_t,
                    },
                );
                if !self.queue.is_empty() {
                    self.schedule(t + self.queue.service_time_s(), Event::Departure);
                }
            }
            Event::Delivery { flow, sent_t } => {
                let back = self.flows[flow].prop_delay_s / 2.0;
                self.schedule(
                    t + back,
                    Event::Ack {
                        flow,
                        sent_t,
                        owd_s: t - sent_t,
                    },
                );
            }
            Event::Ack {
                flow,
                sent_t,
                owd_s,
            } => {
                let f = &mut self.flows[flow];
                f.in_flight -= 1;
                self.counters[flow].delivered += 1;
                if self.measuring {
                    self.window.delivered[flow] += 1;
                }
                let ledbat = &self.cfg.ledbat;
                f.on_ack(owd_s, t - sent_t, ledbat.target_s, ledbat.gain);
                self.try_send(flow);
            }
            Event::LossNotice { flow } => {
                let f = &mut self.flows[flow];
                f.in_flight -= 1;
                self.counters[flow].dropped += 1;
                f.on_loss(t);
                self.try_send(flow);
            }
            Event::Sample { k } => {
                self.record_sample();
                if let Some(dt) = self.trace_interval {
                    self.schedule((k + 1) as f64 * dt, Event::Sample { k: k + 1 });
                }
            }
        }
    }

    fn record_sample(&mut self) {
        let flows = self
            .flows
            .iter()
            .zip(&self.counters)
            .map(|(f, c)| FlowSample {
                cwnd_packets: f.cwnd_packets,
                counters: FlowCounters {
                    in_flight: u64::from(f.in_flight),
                    ..*c
                },
            })
            .collect();
        self.samples.push(TraceSample {
            t: self.now,
            queue_packets: self.queue.len(),
            ewma_packets: self.queue.ewma_avg,
            flows,
        });
    }

    fn run(mut self) -> Result<SimTrace, ModelError> {
        let horizon = self.cfg.horizon_s;
        if self.trace_interval.is_some() {
            self.schedule(0.0, Event::Sample { k: 0 });
        }
        for id in 0..self.flows.len() {
            self.try_send(id);
        }
        if self.measure_from <= 0.0 {
            self.start_measuring();
        }

        while let Some(next) = self.events.peek() {
            if next.t > horizon {
                break;
            }
            let Scheduled { t, event, .. } = self.events.pop().expect("peeked");
            if t.is_nan() || t < self.now {
                return Err(ModelError::EventOrder { now: self.now, next: t });
            }
            if !self.measuring && t >= self.measure_from {
                self.now = self.measure_from;
                self.start_measuring();
            }
            self.now = t;
            self.handle(event);
        }
        self.now = horizon;
        if !self.measuring {
            self.start_measuring();
        }
        self.touch_queue();
        Ok(self.finish())
    }

    fn finish(self) -> SimTrace {
        let span = self.cfg.horizon_s - self.measure_from;
        let kinds: Vec<FlowKind> = self.flows.iter().map(|f| f.kind).collect();
        let goodput: Vec<f64> = self
            .window
            .delivered
            .iter()
            .map(|&d| if span > 0.0 { d as f64 / span } else { 0.0 })
            .collect();
        let class_mean = |kind: FlowKind| {
            let v: Vec<f64> = goodput
                .iter()
                .zip(&kinds)
                .filter(|(_, k)| **k == kind)
                .map(|(g, _)| *g)
                .collect();
            if v.is_empty() {
                0.0
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        };
        let tcp = class_mean(FlowKind::Tcp);
        let ledbat = class_mean(FlowKind::Ledbat);
        let rho = if tcp + ledbat > 0.0 {
            tcp / (tcp + ledbat)
        } else {
            f64::NAN
        };
        let w = &self.window;
        let c = self.cfg.link.capacity_pkts_per_s();
        let summary = SimSummary {
            measure_from_s: self.measure_from,
            measure_to_s: self.cfg.horizon_s,
            goodput_per_flow_pps: goodput,
            goodput_tcp_pps: tcp,
            goodput_ledbat_pps: ledbat,
            rho_emp: rho,
            drop_rate: if w.arrivals > 0 {
                w.drops as f64 / w.arrivals as f64
            } else {
                0.0
            },
            utilization: if span > 0.0 {
                w.departures as f64 / (c * span)
            } else {
                0.0
            },
            mean_queue_packets: if span > 0.0 { w.queue_area / span } else { 0.0 },
        };
        let counters = self
            .flows
            .iter()
            .zip(self.counters)
            .map(|(f, c)| FlowCounters {
                in_flight: u64::from(f.in_flight),
                ..c
            })
            .collect();
        SimTrace {
            kinds,
            prop_delays_s: self.flows.iter().map(|f| f.prop_delay_s).collect(),
            samples: self.samples,
            counters,
            summary,
        }
    }
}

/// Simulate `cfg` with a 10 ms trace and the second half of the horizon as
/// the measurement window.
pub fn run(cfg: &ScenarioConfig) -> Result<SimTrace, ModelError> {
    run_with(cfg, &SimOptions::default())
}

pub fn run_with(cfg: &ScenarioConfig, opts: &SimOptions) -> Result<SimTrace, ModelError> {
    cfg.validate()?;
    if let Some(dt) = opts.trace_interval_s {
        if dt.is_nan() || dt <= 0.0 {
            return Err(crate::error::ConfigError::InvalidValue {
                key: "trace_interval_s".into(),
                value: dt.to_string(),
                reason: "must be positive".into(),
            }
            .into());
        }
    }
    Simulator::new(cfg, opts).run()
}
