use std::collections::VecDeque;

use rand::Rng;

use crate::params::{red_drop_prob, RedProfile};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Discipline {
    DropTail,
    Red(RedProfile),
}

/// A packet waiting at (or being served by) the bottleneck.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QueuedPacket {
    pub flow: usize,
    pub sent_t: f64,
    pub enqueue_t: f64,
}

/// FIFO bottleneck buffer. The head of `backlog` is the packet in service
/// and counts against `limit_packets`.
#[derive(Debug, Clone)]
pub struct BottleneckQueue {
    pub backlog: VecDeque<QueuedPacket>,
    pub capacity_pkts_per_s: f64,
    pub limit_packets: usize,
    pub discipline: Discipline,
    /// RED averaged queue, updated on every arrival.
    pub ewma_avg: f64,
}

impl BottleneckQueue {
    pub fn new(capacity_pkts_per_s: f64, limit_packets: usize, discipline: Discipline) -> Self {
        Self {
            backlog: VecDeque::with_capacity(limit_packets),
            capacity_pkts_per_s,
            limit_packets,
            discipline,
            ewma_avg: 0.0,
        }
    }

    pub fn len(&self) -> usize {
        self.backlog.len()
    }

    pub fn is_empty(&self) -> bool {
        self.backlog.is_empty()
    }

    pub fn service_time_s(&self) -> f64 {
        1.0 / self.capacity_pkts_per_s
    }

    /// Admit or drop an arriving packet. RED drops are i.i.d. with the
    /// probability of the freshly updated average; a full buffer always drops.
    pub fn enqueue<R: Rng + ?Sized>(&mut self, pkt: QueuedPacket, rng: &mut R) -> bool {
        if let Discipline::Red(red) = &self.discipline {
            self.ewma_avg =
                (1.0 - red.ewma_weight) * self.ewma_avg + red.ewma_weight * self.backlog.len() as f64;
            let p = red_drop_prob(self.ewma_avg, red);
            if p > 0.0 && rng.gen::<f64>() < p {
                return false;
            }
        }
        if self.backlog.len() >= self.limit_packets {
            return false;
        }
        self.backlog.push_back(pkt);
        true
    }

    pub fn dequeue(&mut self) -> Option<QueuedPacket> {
        self.backlog.pop_front()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn pkt(i: usize) -> QueuedPacket {
        QueuedPacket {
            flow: i,
            sent_t: 0.0,
            enqueue_t: 0.0,
        }
    }

    #[test]
    fn droptail_rejects_when_full() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut q = BottleneckQueue::new(100.0, 100, Discipline::DropTail);
        for i in 0..100 {
            assert!(q.enqueue(pkt(i), &mut rng));
        }
        assert!(!q.enqueue(pkt(100), &mut rng));
        assert_eq!(q.len(), 100);
        // FIFO order
        assert_eq!(q.dequeue().unwrap().flow, 0);
        assert_eq!(q.dequeue().unwrap().flow, 1);
    }

    #[test]
    fn red_below_min_th_never_drops() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut q = BottleneckQueue::new(100.0, 100, Discipline::Red(RedProfile::default()));
        for i in 0..5000 {
            assert!(q.enqueue(pkt(i), &mut rng));
            q.dequeue();
        }
    }

    #[test]
    fn red_midpoint_drop_frequency() {
        let red = RedProfile {
            min_th_packets: 10.0,
            max_th_packets: 100.0,
            max_p: 0.1,
            ..RedProfile::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut q = BottleneckQueue::new(100.0, 100, Discipline::Red(red));
        for i in 0..55 {
            q.backlog.push_back(pkt(i));
        }
        let trials = 10_000;
        let mut drops = 0;
        for i in 0..trials {
            q.ewma_avg = 55.0;
            if q.enqueue(pkt(i), &mut rng) {
                q.backlog.pop_back();
            } else {
                drops += 1;
            }
        }
        let freq = drops as f64 / trials as f64;
        assert!((freq - 0.05).abs() <= 0.005, "drop frequency {freq}");
    }

    #[test]
    fn ewma_tracks_backlog() {
        let red = RedProfile {
            ewma_weight: 0.5,
            ..RedProfile::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut q = BottleneckQueue::new(100.0, 100, Discipline::Red(red));
        q.enqueue(pkt(0), &mut rng); // avg 0
        q.enqueue(pkt(1), &mut rng); // avg 0.5
        q.enqueue(pkt(2), &mut rng); // avg 1.25
        assert!((q.ewma_avg - 1.25).abs() < 1e-15);
    }
}
