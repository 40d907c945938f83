use std::collections::VecDeque;

use super::FluidState;
use crate::error::ModelError;
use crate::params::HistoryInterpolation;

#[derive(Debug, Clone, Copy)]
struct Sample {
    t: f64,
    state: FluidState,
    rate: FluidState,
}

/// Past fluid states, used to resolve the delayed arguments of the window
/// equations.
///
/// Lookups before the first recorded time return the constant pre-history
/// `t0_state`. Between samples the value is interpolated, linearly or with a
/// cubic Hermite polynomial built from the stored derivatives. Old samples may
/// be discarded with [`StateHistory::prune_before`]; looking up a discarded
/// time is a [`ModelError::HistoryUnderflow`].
#[derive(Debug, Clone)]
pub struct StateHistory {
    samples: VecDeque<Sample>,
    t0: f64,
    t0_state: FluidState,
    pruned: bool,
    interpolation: HistoryInterpolation,
}

impl StateHistory {
    pub fn new(t0: f64, t0_state: FluidState, interpolation: HistoryInterpolation) -> Self {
        Self {
            samples: VecDeque::new(),
            t0,
            t0_state,
            pruned: false,
            interpolation,
        }
    }

    /// History that has always been at `state`.
    pub fn constant(state: FluidState) -> Self {
        Self::new(0.0, state, HistoryInterpolation::Hermite)
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn last_time(&self) -> Option<f64> {
        self.samples.back().map(|s| s.t)
    }

    /// Append a sample. Times must be strictly increasing.
    pub fn push(&mut self, t: f64, state: FluidState, rate: FluidState) {
        debug_assert!(self.samples.back().is_none_or(|s| s.t < t));
        self.samples.push_back(Sample { t, state, rate });
    }

    /// Drop samples that are no longer needed to answer lookups at times
    /// `>= t`. One sample at or before `t` is kept as the left interpolation node.
    pub fn prune_before(&mut self, t: f64) {
        while self.samples.len() >= 2 && self.samples[1].t <= t {
            self.samples.pop_front();
            self.pruned = true;
        }
    }

    pub fn lookup(&self, t: f64) -> Result<FluidState, ModelError> {
        let Some(first) = self.samples.front() else {
            return Ok(self.t0_state);
        };
        if t < first.t {
            if self.pruned {
                return Err(ModelError::HistoryUnderflow {
                    requested: t,
                    start: first.t,
                });
            }
            if t <= self.t0 || first.t <= self.t0 {
                return Ok(self.t0_state);
            }
        }
        let last = self.samples.back().expect("non-empty");
        if t >= last.t {
            return Ok(last.state);
        }
        if t <= first.t {
            return Ok(first.state);
        }
        // first index with sample.t > t; guaranteed in 1..len
        let j = self.samples.partition_point(|s| s.t <= t);
        let a = &self.samples[j - 1];
        let b = &self.samples[j];
        let dt = b.t - a.t;
        let s = (t - a.t) / dt;
        let value = match self.interpolation {
            HistoryInterpolation::Linear => a.state.scale(1.0 - s).add(&b.state.scale(s)),
            HistoryInterpolation::Hermite => {
                let s2 = s * s;
                let s3 = s2 * s;
                let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
                let h10 = s3 - 2.0 * s2 + s;
                let h01 = -2.0 * s3 + 3.0 * s2;
                let h11 = s3 - s2;
                a.state
                    .scale(h00)
                    .add(&a.rate.scale(h10 * dt))
                    .add(&b.state.scale(h01))
                    .add(&b.rate.scale(h11 * dt))
            }
        };
        Ok(value)
    }
}
