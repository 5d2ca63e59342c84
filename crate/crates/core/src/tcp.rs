//! Packet-granularity TCP NewReno sender and cumulative-ack receiver.
//!
//! Sequence numbers start at 1. `highest_acked` is the highest sequence
//! number the receiver has acknowledged in order (0 before any ack).

use std::collections::{BTreeSet, VecDeque};

use crate::engine::SimTime;

pub const DEFAULT_MAX_WINDOW: f64 = 10_000.0;
pub const MIN_RTO: SimTime = 0.2;
pub const MAX_RTO: SimTime = 60.0;
pub const INITIAL_RTO: SimTime = 1.0;
const DUP_ACK_THRESHOLD: u32 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CcMode {
    SlowStart,
    CongestionAvoidance,
    FastRecovery,
}

#[derive(Debug, Clone, Copy)]
struct SentRecord {
    sent_at: SimTime,
    retransmitted: bool,
}

#[derive(Debug, Clone)]
pub struct FlowState {
    pub cwnd: f64,
    pub ssthresh: f64,
    pub mode: CcMode,
    pub max_window: f64,
    pub srtt: Option<SimTime>,
    pub rttvar: SimTime,
    pub rto: SimTime,
    pub highest_acked: u64,
    /// Highest sequence number ever transmitted.
    pub highest_sent: u64,
    /// Next sequence number to put on the wire. Falls back to
    /// `highest_acked + 1` after a timeout (go-back-N).
    pub next_seq: u64,
    pub dup_ack_count: u32,
    pub recover: u64,
    /// Extra packets allowed in flight during fast recovery, one per
    /// duplicate ack that signalled a departure.
    pub inflation: f64,
    sent: VecDeque<SentRecord>,
}

/// What the sender must do after processing an ack or timeout.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct AckOutcome {
    /// Sequence number to retransmit immediately.
    pub retransmit: Option<u64>,
    pub rtt_sample: Option<SimTime>,
}

impl Default for FlowState {
    fn default() -> Self {
        Self::new(DEFAULT_MAX_WINDOW)
    }
}

impl FlowState {
    pub fn new(max_window: f64) -> Self {
        let max_window = max_window.max(1.0);
        Self {
            cwnd: 1.0,
            ssthresh: max_window,
            mode: CcMode::SlowStart,
            max_window,
            srtt: None,
            rttvar: 0.0,
            rto: INITIAL_RTO,
            highest_acked: 0,
            highest_sent: 0,
            next_seq: 1,
            dup_ack_count: 0,
            recover: 0,
            inflation: 0.0,
            sent: VecDeque::new(),
        }
    }

    /// Packets sent but not yet cumulatively acknowledged.
    pub fn in_flight(&self) -> u64 {
        self.next_seq - 1 - self.highest_acked
    }

    pub fn has_unacked(&self) -> bool {
        self.highest_sent > self.highest_acked
    }

    fn allowed_in_flight(&self) -> u64 {
        let w = if self.mode == CcMode::FastRecovery {
            self.cwnd + self.inflation
        } else {
            self.cwnd
        };
        w.min(self.max_window).floor() as u64
    }

    /// Number of packets the window currently allows to be sent.
    pub fn sendable(&self) -> u64 {
        self.allowed_in_flight().saturating_sub(self.in_flight())
    }

    /// Records the transmission of `next_seq` and returns its sequence number.
    pub fn record_send(&mut self, now: SimTime) -> u64 {
        let seq = self.next_seq;
        self.note_transmission(seq, now);
        self.next_seq += 1;
        seq
    }

    /// Records a retransmission of `seq` (which must be unacknowledged).
    pub fn record_retransmit(&mut self, seq: u64, now: SimTime) {
        self.note_transmission(seq, now);
    }

    fn note_transmission(&mut self, seq: u64, now: SimTime) {
        debug_assert!(seq > self.highest_acked);
        let idx = (seq - self.highest_acked - 1) as usize;
        if seq > self.highest_sent {
            debug_assert_eq!(idx, self.sent.len());
            self.sent.push_back(SentRecord {
                sent_at: now,
                retransmitted: false,
            });
            self.highest_sent = seq;
        } else if let Some(rec) = self.sent.get_mut(idx) {
            rec.sent_at = now;
            rec.retransmitted = true;
        }
    }

    fn refresh_mode(&mut self) {
        if self.mode != CcMode::FastRecovery {
            self.mode = if self.cwnd < self.ssthresh {
                CcMode::SlowStart
            } else {
                CcMode::CongestionAvoidance
            };
        }
    }

    fn clamp_cwnd(&mut self) {
        self.cwnd = self.cwnd.clamp(1.0, self.max_window);
    }

    fn update_rtt(&mut self, sample: SimTime) {
        match self.srtt {
            None => {
                self.srtt = Some(sample);
                self.rttvar = sample / 2.0;
            }
            Some(srtt) => {
                self.rttvar = 0.75 * self.rttvar + 0.25 * (srtt - sample).abs();
                self.srtt = Some(0.875 * srtt + 0.125 * sample);
            }
        }
        let srtt = self.srtt.unwrap_or(sample);
        self.rto = (srtt + 4.0 * self.rttvar).clamp(MIN_RTO, MAX_RTO);
    }

    /// Processes a cumulative ack. Acks that do not advance `highest_acked`
    /// are routed to [`FlowState::on_dup_ack`].
    pub fn on_ack(&mut self, acked_seq: u64, now: SimTime) -> AckOutcome {
        if acked_seq <= self.highest_acked {
            if acked_seq == self.highest_acked {
                return self.on_dup_ack();
            }
            return AckOutcome::default();
        }
        let acked_seq = acked_seq.min(self.highest_sent);
        let newly_acked = acked_seq - self.highest_acked;

        let mut outcome = AckOutcome::default();
        // Karn: only packets transmitted exactly once give an RTT sample.
        let last = self.sent.get((newly_acked - 1) as usize).copied();
        if let Some(rec) = last {
            if !rec.retransmitted {
                let sample = now - rec.sent_at;
                self.update_rtt(sample);
                outcome.rtt_sample = Some(sample);
            }
        }
        let drain = (newly_acked as usize).min(self.sent.len());
        self.sent.drain(..drain);
        self.highest_acked = acked_seq;
        if self.next_seq <= acked_seq {
            self.next_seq = acked_seq + 1;
        }
        self.dup_ack_count = 0;

        match self.mode {
            CcMode::FastRecovery => {
                if acked_seq >= self.recover {
                    self.cwnd = self.ssthresh;
                    self.inflation = 0.0;
                    self.mode = CcMode::CongestionAvoidance;
                } else {
                    // Partial ack: the next hole is lost too.
                    self.inflation = (self.inflation - newly_acked as f64).max(0.0) + 1.0;
                    outcome.retransmit = Some(acked_seq + 1);
                }
            }
            CcMode::SlowStart => self.cwnd += 1.0,
            CcMode::CongestionAvoidance => self.cwnd += 1.0 / self.cwnd,
        }
        self.clamp_cwnd();
        self.refresh_mode();
        outcome
    }

    pub fn on_dup_ack(&mut self) -> AckOutcome {
        if !self.has_unacked() {
            return AckOutcome::default();
        }
        self.dup_ack_count += 1;
        if self.mode == CcMode::FastRecovery {
            self.inflation += 1.0;
            return AckOutcome::default();
        }
        if self.dup_ack_count == DUP_ACK_THRESHOLD && self.highest_acked >= self.recover {
            self.ssthresh = (self.cwnd / 2.0).max(2.0);
            self.cwnd = self.ssthresh;
            self.clamp_cwnd();
            self.mode = CcMode::FastRecovery;
            self.recover = self.highest_sent;
            self.inflation = f64::from(DUP_ACK_THRESHOLD);
            return AckOutcome {
                retransmit: Some(self.highest_acked + 1),
                rtt_sample: None,
            };
        }
        AckOutcome::default()
    }

    /// Retransmission timeout. Rewinds the send pointer so everything from
    /// `highest_acked + 1` is sent again under a fresh slow start.
    pub fn on_timeout(&mut self) {
        self.ssthresh = (self.cwnd / 2.0).max(2.0);
        self.cwnd = 1.0;
        self.mode = CcMode::SlowStart;
        self.rto = (self.rto * 2.0).min(MAX_RTO);
        self.recover = self.highest_sent;
        self.next_seq = self.highest_acked + 1;
        self.dup_ack_count = 0;
        self.inflation = 0.0;
        self.refresh_mode();
    }
}

/// Cumulative-ack receiver; acks every data packet.
#[derive(Debug, Clone, Default)]
pub struct Receiver {
    highest_in_order: u64,
    out_of_order: BTreeSet<u64>,
}

impl Receiver {
    pub fn new() -> Self {
        Self::default()
    }

    /// Accepts data packet `seq` and returns the cumulative ack to send.
    pub fn on_data(&mut self, seq: u64) -> u64 {
        if seq == self.highest_in_order + 1 {
            self.highest_in_order = seq;
            while self.out_of_order.remove(&(self.highest_in_order + 1)) {
                self.highest_in_order += 1;
            }
        } else if seq > self.highest_in_order + 1 {
            self.out_of_order.insert(seq);
        }
        self.highest_in_order
    }

    pub fn highest_in_order(&self) -> u64 {
        self.highest_in_order
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Flow with `n` packets outstanding and the given window.
    fn flow_with(cwnd: f64, ssthresh: f64, outstanding: u64) -> FlowState {
        let mut f = FlowState::new(DEFAULT_MAX_WINDOW);
        f.cwnd = cwnd;
        f.ssthresh = ssthresh;
        f.refresh_mode();
        for _ in 0..outstanding {
            f.record_send(0.0);
        }
        f
    }

    #[test]
    fn slow_start_adds_one_per_ack() {
        let mut f = flow_with(10.0, 100.0, 20);
        assert_eq!(f.mode, CcMode::SlowStart);
        f.on_ack(1, 0.1);
        assert_eq!(f.cwnd, 11.0);
    }

    #[test]
    fn congestion_avoidance_adds_inverse_window() {
        let mut f = flow_with(10.0, 5.0, 20);
        assert_eq!(f.mode, CcMode::CongestionAvoidance);
        f.on_ack(1, 0.1);
        assert!((f.cwnd - 10.1).abs() < 1e-12);
    }

    #[test]
    fn window_capped_at_max() {
        let mut f = flow_with(DEFAULT_MAX_WINDOW, DEFAULT_MAX_WINDOW * 2.0, 5);
        f.on_ack(1, 0.1);
        assert_eq!(f.cwnd, DEFAULT_MAX_WINDOW);
    }

    #[test]
    fn third_dup_ack_halves() {
        let mut f = flow_with(10.0, 5.0, 10);
        assert_eq!(f.on_dup_ack().retransmit, None);
        assert_eq!(f.on_dup_ack().retransmit, None);
        assert_eq!(f.cwnd, 10.0);
        let out = f.on_dup_ack();
        assert_eq!(out.retransmit, Some(1));
        assert_eq!(f.ssthresh, 5.0);
        assert_eq!(f.cwnd, 5.0);
        assert_eq!(f.mode, CcMode::FastRecovery);
        assert_eq!(f.recover, 10);
    }

    #[test]
    fn third_dup_ack_floors_ssthresh() {
        let mut f = flow_with(3.0, 2.0, 3);
        for _ in 0..3 {
            f.on_dup_ack();
        }
        assert_eq!(f.ssthresh, 2.0);
        assert_eq!(f.cwnd, 2.0);
    }

    #[test]
    fn fast_recovery_partial_and_full_ack() {
        let mut f = flow_with(10.0, 5.0, 10);
        for _ in 0..3 {
            f.on_dup_ack();
        }
        f.on_dup_ack();
        assert_eq!(f.inflation, 4.0);
        // Partial ack: retransmit the next hole, stay in recovery.
        let out = f.on_ack(4, 0.2);
        assert_eq!(out.retransmit, Some(5));
        assert_eq!(f.mode, CcMode::FastRecovery);
        // Full ack exits recovery with cwnd = ssthresh.
        f.on_ack(10, 0.3);
        assert_eq!(f.mode, CcMode::CongestionAvoidance);
        assert_eq!(f.cwnd, 5.0);
    }

    #[test]
    fn timeout_resets_window_and_backs_off() {
        let mut f = flow_with(40.0, 100.0, 40);
        f.rto = 1.0;
        f.on_timeout();
        assert_eq!(f.ssthresh, 20.0);
        assert_eq!(f.cwnd, 1.0);
        assert_eq!(f.mode, CcMode::SlowStart);
        assert_eq!(f.rto, 2.0);
        assert_eq!(f.next_seq, 1);
        f.rto = 60.0;
        f.on_timeout();
        assert_eq!(f.rto, 60.0);
    }

    #[test]
    fn rtt_estimator_uses_standard_gains() {
        let mut f = flow_with(10.0, 100.0, 3);
        f.on_ack(1, 0.1);
        assert_eq!(f.srtt, Some(0.1));
        assert!((f.rttvar - 0.05).abs() < 1e-15);
        assert!((f.rto - 0.3).abs() < 1e-12);
        f.on_ack(2, 0.3);
        // sample 0.3: rttvar = 0.75*0.05 + 0.25*0.2, srtt = 0.875*0.1 + 0.125*0.3
        assert!((f.rttvar - 0.0875).abs() < 1e-12);
        assert!((f.srtt.unwrap() - 0.125).abs() < 1e-12);
    }

    #[test]
    fn retransmitted_packets_give_no_rtt_sample() {
        let mut f = flow_with(10.0, 100.0, 3);
        f.on_timeout();
        let seq = f.record_send(1.0);
        assert_eq!(seq, 1);
        let out = f.on_ack(1, 1.2);
        assert_eq!(out.rtt_sample, None);
    }

    #[test]
    fn sendable_respects_window() {
        let f = flow_with(4.5, 100.0, 2);
        assert_eq!(f.sendable(), 2);
    }

    #[test]
    fn receiver_cumulative_acks() {
        let mut r = Receiver::new();
        assert_eq!(r.on_data(1), 1);
        assert_eq!(r.on_data(3), 1);
        assert_eq!(r.on_data(4), 1);
        assert_eq!(r.on_data(2), 4);
        assert_eq!(r.on_data(2), 4);
    }
}
