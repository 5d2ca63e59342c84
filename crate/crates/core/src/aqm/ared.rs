//! ARED: interval-driven AIMD adaptation of max_p towards a target band in
//! the middle of [min_th, max_th].

use super::red::{red_enqueue_decision, AvgQueue, RedParams};
use super::{MaxPBounds, Verdict};
use crate::engine::{SimRng, SimTime};

pub const DEFAULT_INTERVAL: SimTime = 0.3;

#[derive(Debug, Clone, PartialEq)]
pub struct AredState {
    pub max_p: f64,
    /// Additive increase step.
    pub alpha: f64,
    /// Multiplicative decrease fraction: a decrease scales max_p by `1 - beta`.
    pub beta: f64,
    pub interval: SimTime,
    pub next_update: SimTime,
    pub updates: u64,
    pub bounds: MaxPBounds,
}

impl AredState {
    pub fn new(max_p: f64, alpha: f64, beta: f64, interval: SimTime, bounds: MaxPBounds) -> Self {
        Self {
            max_p: bounds.clamp(max_p),
            alpha,
            beta,
            interval,
            next_update: interval,
            updates: 0,
            bounds,
        }
    }

    /// The target band: the middle 20% of [min_th, max_th].
    pub fn target_band(p: &RedParams) -> (f64, f64) {
        let w = p.band_width();
        (p.min_th + 0.4 * w, p.min_th + 0.6 * w)
    }

    /// Adapts max_p if an update is due at `now`. Returns whether an update
    /// slot was consumed.
    pub fn ared_adapt(&mut self, avg: f64, p: &RedParams, now: SimTime) -> bool {
        if now < self.next_update {
            return false;
        }
        let (lo, hi) = Self::target_band(p);
        if avg > hi {
            self.max_p = self.bounds.clamp(self.max_p + self.alpha);
        } else if avg < lo {
            self.max_p = self.bounds.clamp(self.max_p * (1.0 - self.beta));
        }
        self.updates += 1;
        // Computed from the slot index so the schedule does not drift.
        self.next_update = self.interval * (self.updates + 1) as f64;
        while self.next_update <= now {
            self.updates += 1;
            self.next_update = self.interval * (self.updates + 1) as f64;
        }
        true
    }
}

#[derive(Debug, Clone)]
pub struct Ared {
    pub params: RedParams,
    pub avg: AvgQueue,
    pub state: AredState,
}

impl Ared {
    pub fn new(params: RedParams, state: AredState) -> Self {
        Self {
            params,
            avg: AvgQueue::default(),
            state,
        }
    }

    pub fn on_arrival(&mut self, qlen: usize, rng: &mut SimRng) -> Verdict {
        red_enqueue_decision(qlen, &mut self.avg, &self.params, self.state.max_p, rng)
    }

    pub fn on_tick(&mut self, now: SimTime) {
        self.state.ared_adapt(self.avg.avg, &self.params, now);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state() -> AredState {
        AredState::new(0.1, 0.01, 0.09, DEFAULT_INTERVAL, MaxPBounds::default())
    }

    #[test]
    fn band_is_middle_fifth() {
        assert_eq!(AredState::target_band(&RedParams::default()), (120.0, 130.0));
    }

    #[test]
    fn additive_increase_above_band() {
        let mut s = state();
        assert!(s.ared_adapt(140.0, &RedParams::default(), 0.3));
        assert!((s.max_p - 0.11).abs() < 1e-15);
    }

    #[test]
    fn multiplicative_decrease_below_band() {
        let mut s = state();
        s.ared_adapt(110.0, &RedParams::default(), 0.3);
        assert!((s.max_p - 0.091).abs() < 1e-15);
    }

    #[test]
    fn in_band_unchanged() {
        let mut s = state();
        s.ared_adapt(125.0, &RedParams::default(), 0.3);
        assert_eq!(s.max_p, 0.1);
    }

    #[test]
    fn acts_at_most_once_per_interval() {
        let mut s = state();
        let p = RedParams::default();
        assert!(!s.ared_adapt(140.0, &p, 0.1));
        assert!(s.ared_adapt(140.0, &p, 0.3));
        assert!(!s.ared_adapt(140.0, &p, 0.45));
        assert!(s.ared_adapt(140.0, &p, 0.6));
        assert!((s.max_p - 0.12).abs() < 1e-15);
    }
}
