use super::red::{ewma_update, AvgQueue};
use super::Verdict;

/// Tail-drop FIFO. Keeps an EWMA of the queue purely for reporting.
#[derive(Debug, Clone)]
pub struct DropTail {
    pub q_size: usize,
    pub q_weight: f64,
    pub avg: AvgQueue,
}

impl DropTail {
    pub fn new(q_size: usize, q_weight: f64) -> Self {
        Self {
            q_size,
            q_weight,
            avg: AvgQueue::default(),
        }
    }

    pub fn on_arrival(&mut self, qlen: usize) -> Verdict {
        self.avg.avg = ewma_update(self.avg.avg, qlen as f64, self.q_weight);
        if qlen >= self.q_size {
            Verdict::ForcedDrop
        } else {
            Verdict::Accept
        }
    }
}
