//! FRED: per-enqueue multiplicative max_p adaptation that never applies two
//! changes in the same direction back to back.

use super::red::{ewma_update, red_decide, AvgQueue, RedParams};
use super::{MaxPBounds, Verdict};
use crate::engine::SimRng;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LastAction {
    None,
    Increased,
    Decreased,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FredState {
    pub max_p: f64,
    pub last_action: LastAction,
    pub alpha: f64,
    pub beta: f64,
    pub bounds: MaxPBounds,
}

impl FredState {
    pub fn new(max_p: f64, alpha: f64, beta: f64, bounds: MaxPBounds) -> Self {
        Self {
            max_p: bounds.clamp(max_p),
            last_action: LastAction::None,
            alpha,
            beta,
            bounds,
        }
    }

    pub fn fred_adapt(&mut self, avg: f64, p: &RedParams) {
        if avg > p.max_th && self.last_action != LastAction::Increased {
            self.max_p = self.bounds.clamp(self.max_p * self.alpha);
            self.last_action = LastAction::Increased;
        } else if avg < p.min_th && self.last_action != LastAction::Decreased {
            self.max_p = self.bounds.clamp(self.max_p / self.beta);
            self.last_action = LastAction::Decreased;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Fred {
    pub params: RedParams,
    pub avg: AvgQueue,
    pub state: FredState,
}

impl Fred {
    pub fn new(params: RedParams, alpha: f64, beta: f64, bounds: MaxPBounds) -> Self {
        let state = FredState::new(params.max_p, alpha, beta, bounds);
        Self {
            params,
            avg: AvgQueue::default(),
            state,
        }
    }

    pub fn on_arrival(&mut self, qlen: usize, rng: &mut SimRng) -> Verdict {
        self.avg.avg = ewma_update(self.avg.avg, qlen as f64, self.params.q_weight);
        self.state.fred_adapt(self.avg.avg, &self.params);
        red_decide(qlen, &mut self.avg, &self.params, self.state.max_p, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(last: LastAction) -> FredState {
        FredState {
            last_action: last,
            ..FredState::new(0.1, 3.0, 2.0, MaxPBounds::default())
        }
    }

    #[test]
    fn increases_by_alpha() {
        let mut s = state(LastAction::Decreased);
        s.fred_adapt(160.0, &RedParams::default());
        assert!((s.max_p - 0.3).abs() < 1e-15);
        assert_eq!(s.last_action, LastAction::Increased);
    }

    #[test]
    fn decreases_by_beta() {
        let mut s = state(LastAction::Increased);
        s.fred_adapt(90.0, &RedParams::default());
        assert!((s.max_p - 0.05).abs() < 1e-15);
        assert_eq!(s.last_action, LastAction::Decreased);
    }

    #[test]
    fn no_consecutive_increase() {
        let mut s = state(LastAction::Increased);
        s.fred_adapt(160.0, &RedParams::default());
        assert_eq!(s.max_p, 0.1);
    }

    #[test]
    fn in_band_unchanged() {
        let mut s = state(LastAction::None);
        s.fred_adapt(125.0, &RedParams::default());
        assert_eq!(s.max_p, 0.1);
        assert_eq!(s.last_action, LastAction::None);
    }
}
