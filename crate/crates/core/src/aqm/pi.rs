//! PI controller on the instantaneous queue, sampled at a fixed frequency.

use super::red::{ewma_update, AvgQueue};
use super::Verdict;
use crate::engine::{SimRng, SimTime};

#[derive(Debug, Clone, PartialEq)]
pub struct PiState {
    pub a: f64,
    pub b: f64,
    pub q_ref: f64,
    /// Sampling frequency in Hz.
    pub w: f64,
    pub p: f64,
    pub q_prev: f64,
}

impl Default for PiState {
    fn default() -> Self {
        Self {
            a: 1.822e-5,
            b: 1.816e-5,
            q_ref: 100.0,
            w: 170.0,
            p: 0.0,
            q_prev: 0.0,
        }
    }
}

impl PiState {
    pub fn sample_interval(&self) -> SimTime {
        1.0 / self.w
    }

    /// One controller step on the sampled queue `q`.
    pub fn pi_probability(&mut self, q: f64) -> f64 {
        let p = self.p + self.a * (q - self.q_ref) - self.b * (self.q_prev - self.q_ref);
        self.p = p.clamp(0.0, 1.0);
        self.q_prev = q;
        self.p
    }
}

#[derive(Debug, Clone)]
pub struct Pi {
    pub state: PiState,
    pub q_size: usize,
    /// Tracked for reporting only.
    pub avg: AvgQueue,
    pub q_weight: f64,
}

impl Pi {
    pub fn new(state: PiState, q_size: usize, q_weight: f64) -> Self {
        Self {
            state,
            q_size,
            avg: AvgQueue::default(),
            q_weight,
        }
    }

    pub fn on_arrival(&mut self, qlen: usize, rng: &mut SimRng) -> Verdict {
        self.avg.avg = ewma_update(self.avg.avg, qlen as f64, self.q_weight);
        if qlen >= self.q_size {
            return Verdict::ForcedDrop;
        }
        if rng.bernoulli(self.state.p) {
            Verdict::EarlyDrop
        } else {
            Verdict::Accept
        }
    }

    pub fn on_tick(&mut self, qlen: usize) {
        self.state.pi_probability(qlen as f64);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn equilibrium_holds_p() {
        let mut s = PiState {
            p: 0.02,
            q_prev: 100.0,
            ..PiState::default()
        };
        for _ in 0..100 {
            s.pi_probability(100.0);
        }
        assert_eq!(s.p, 0.02);
    }

    #[test]
    fn proportional_step() {
        let mut s = PiState {
            q_prev: 100.0,
            ..PiState::default()
        };
        s.pi_probability(110.0);
        assert!((s.p - 1.822e-4).abs() <= 1e-12 * 1.822e-4);
    }

    #[test]
    fn integral_step() {
        let mut s = PiState {
            q_prev: 110.0,
            ..PiState::default()
        };
        s.pi_probability(110.0);
        // (a - b) * 10 = 6e-8 * 10
        assert!((s.p - 6e-7).abs() <= 1e-12 * 6e-7);
    }

    #[test]
    fn clamps_to_unit_interval() {
        let mut s = PiState {
            q_prev: 100.0,
            ..PiState::default()
        };
        s.pi_probability(0.0);
        assert_eq!(s.p, 0.0);
        s.p = 0.99999;
        s.pi_probability(200.0);
        assert_eq!(s.p, 1.0);
    }
}
