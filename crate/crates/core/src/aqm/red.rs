//! RED in drop mode: EWMA average queue, piecewise-linear early-drop
//! probability and the count-corrected per-packet decision.

use thiserror::Error;

use super::Verdict;
use crate::engine::SimRng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RedParamsError {
    #[error("thresholds must satisfy 0 < min_th < max_th <= q_size (got {min_th}, {max_th}, {q_size})")]
    Thresholds { min_th: f64, max_th: f64, q_size: usize },
    #[error("q_weight must lie in (0, 1], got {0}")]
    QWeight(f64),
    #[error("max_p must lie in (0, 1], got {0}")]
    MaxP(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RedParams {
    pub min_th: f64,
    pub max_th: f64,
    pub q_size: usize,
    pub q_weight: f64,
    pub max_p: f64,
    pub gentle: bool,
    /// Apply the `1 / (1 - count * p_b)` inter-drop correction.
    pub count_correction: bool,
}

impl Default for RedParams {
    fn default() -> Self {
        Self {
            min_th: 100.0,
            max_th: 150.0,
            q_size: 200,
            q_weight: 1e-4,
            max_p: 0.1,
            gentle: false,
            count_correction: true,
        }
    }
}

impl RedParams {
    pub fn validate(&self) -> Result<(), RedParamsError> {
        let ok = self.min_th > 0.0
            && self.min_th < self.max_th
            && self.max_th <= self.q_size as f64;
        if !ok {
            return Err(RedParamsError::Thresholds {
                min_th: self.min_th,
                max_th: self.max_th,
                q_size: self.q_size,
            });
        }
        if !(self.q_weight > 0.0 && self.q_weight <= 1.0) {
            return Err(RedParamsError::QWeight(self.q_weight));
        }
        if !(self.max_p > 0.0 && self.max_p <= 1.0) {
            return Err(RedParamsError::MaxP(self.max_p));
        }
        Ok(())
    }

    pub fn band_width(&self) -> f64 {
        self.max_th - self.min_th
    }
}

/// EWMA average queue plus RED's count of packets accepted since the last drop.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AvgQueue {
    pub avg: f64,
    pub count_since_drop: u64,
}

pub fn ewma_update(avg: f64, q: f64, w_q: f64) -> f64 {
    (1.0 - w_q) * avg + w_q * q
}

/// Early-drop probability for average queue `avg` when the configured
/// maximum is `max_p` (the `max_p` stored in `p` is ignored so adaptive
/// schemes can supply their own).
pub fn red_mark_prob_with(avg: f64, p: &RedParams, max_p: f64) -> f64 {
    if avg < p.min_th {
        0.0
    } else if avg < p.max_th {
        max_p * (avg - p.min_th) / (p.max_th - p.min_th)
    } else if !p.gentle {
        1.0
    } else if avg < 2.0 * p.max_th {
        max_p + (1.0 - max_p) * (avg - p.max_th) / p.max_th
    } else {
        1.0
    }
}

pub fn red_mark_prob(avg: f64, p: &RedParams) -> f64 {
    red_mark_prob_with(avg, p, p.max_p)
}

/// Count-corrected drop probability, clamped to 1.
pub fn count_corrected(p_b: f64, count: u64) -> f64 {
    let denom = 1.0 - count as f64 * p_b;
    if denom <= 0.0 {
        1.0
    } else {
        (p_b / denom).min(1.0)
    }
}

/// Full RED arrival processing: updates the average, forces a drop when the
/// physical queue is full, otherwise draws against the (count-corrected)
/// early-drop probability computed with `max_p`.
pub fn red_enqueue_decision(
    qlen: usize,
    state: &mut AvgQueue,
    p: &RedParams,
    max_p: f64,
    rng: &mut SimRng,
) -> Verdict {
    state.avg = ewma_update(state.avg, qlen as f64, p.q_weight);
    red_decide(qlen, state, p, max_p, rng)
}

/// The drop decision alone, against an average that is already current.
pub fn red_decide(
    qlen: usize,
    state: &mut AvgQueue,
    p: &RedParams,
    max_p: f64,
    rng: &mut SimRng,
) -> Verdict {
    if qlen >= p.q_size {
        state.count_since_drop = 0;
        return Verdict::ForcedDrop;
    }
    let p_b = red_mark_prob_with(state.avg, p, max_p);
    if p_b <= 0.0 {
        state.count_since_drop = 0;
        return Verdict::Accept;
    }
    let p_a = if p.count_correction {
        count_corrected(p_b, state.count_since_drop)
    } else {
        p_b
    };
    if rng.bernoulli(p_a) {
        state.count_since_drop = 0;
        Verdict::EarlyDrop
    } else {
        state.count_since_drop += 1;
        Verdict::Accept
    }
}

/// Plain RED queue discipline with a fixed `max_p`.
#[derive(Debug, Clone)]
pub struct Red {
    pub params: RedParams,
    pub avg: AvgQueue,
}

impl Red {
    pub fn new(params: RedParams) -> Self {
        Self {
            params,
            avg: AvgQueue::default(),
        }
    }

    pub fn on_arrival(&mut self, qlen: usize, rng: &mut SimRng) -> Verdict {
        let max_p = self.params.max_p;
        red_enqueue_decision(qlen, &mut self.avg, &self.params, max_p, rng)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ewma_examples() {
        assert!((ewma_update(0.0, 50.0, 1e-4) - 0.005).abs() < 1e-15);
        assert_eq!(ewma_update(125.0, 125.0, 1e-4), 125.0);
    }

    #[test]
    fn mark_prob_examples() {
        let p = RedParams::default();
        assert!((red_mark_prob(125.0, &p) - 0.05).abs() < 1e-15);
        assert_eq!(red_mark_prob(100.0, &p), 0.0);
        assert_eq!(red_mark_prob(99.9, &p), 0.0);
        assert_eq!(red_mark_prob(150.0, &p), 1.0);
        let g = RedParams {
            gentle: true,
            ..p
        };
        assert!((red_mark_prob(225.0, &g) - 0.55).abs() < 1e-12);
        assert!((red_mark_prob(150.0, &g) - 0.1).abs() < 1e-15);
        assert_eq!(red_mark_prob(300.0, &g), 1.0);
    }

    #[test]
    fn count_correction() {
        assert_eq!(count_corrected(0.5, 1), 1.0);
        assert_eq!(count_corrected(0.1, 0), 0.1);
        assert!((count_corrected(0.1, 5) - 0.2).abs() < 1e-12);
        assert_eq!(count_corrected(0.3, 10), 1.0);
    }

    #[test]
    fn below_min_th_always_accepts() {
        let p = RedParams::default();
        let mut st = AvgQueue {
            avg: 50.0,
            count_since_drop: 7,
        };
        let mut rng = SimRng::new(1);
        for _ in 0..1000 {
            assert_eq!(red_enqueue_decision(60, &mut st, &p, 0.1, &mut rng), Verdict::Accept);
            assert_eq!(st.count_since_drop, 0);
        }
    }

    #[test]
    fn full_queue_forces_drop() {
        let p = RedParams::default();
        let mut st = AvgQueue::default();
        let mut rng = SimRng::new(1);
        assert_eq!(
            red_enqueue_decision(200, &mut st, &p, 0.1, &mut rng),
            Verdict::ForcedDrop
        );
        // avg is still updated on a forced drop
        assert!((st.avg - 0.02).abs() < 1e-15);
    }

    #[test]
    fn validation() {
        assert!(RedParams::default().validate().is_ok());
        let bad = RedParams {
            min_th: 160.0,
            ..RedParams::default()
        };
        assert!(bad.validate().is_err());
        let bad = RedParams {
            q_weight: 0.0,
            ..RedParams::default()
        };
        assert!(bad.validate().is_err());
    }
}
