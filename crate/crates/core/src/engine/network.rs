//! Dumbbell network: N TCP sources, each behind its own access link, share
//! one bottleneck queue. Receivers ack every packet over an uncongested
//! return path.

use std::collections::VecDeque;

use thiserror::Error;

use super::link::{Link, Packet, ACK_SIZE};
use super::queue::{EventQueue, ScheduleError, SimTime};
use super::rng::SimRng;
use crate::aqm::Discipline;
use crate::metrics::{MetricsCollector, RunMetrics, SAMPLES_PER_SECOND};
use crate::tcp::{FlowState, Receiver};

#[derive(Debug, Error)]
pub enum NetworkError {
    #[error(transparent)]
    Schedule(#[from] ScheduleError),
    #[error("invalid network configuration: {0}")]
    Config(String),
}

/// Per-flow path delays.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowPath {
    /// Propagation delay of the flow's access link (source to bottleneck).
    pub access_prop: SimTime,
    /// One-way delay from receiver back to source.
    pub return_delay: SimTime,
}

impl FlowPath {
    /// Splits a target round-trip propagation time symmetrically around the
    /// shared bottleneck.
    pub fn for_rtt(rtt: SimTime, bottleneck_prop: SimTime) -> Result<Self, NetworkError> {
        let access_prop = rtt / 2.0 - bottleneck_prop;
        if !(access_prop >= 0.0 && rtt.is_finite()) {
            return Err(NetworkError::Config(format!(
                "RTT {rtt} s is shorter than twice the bottleneck delay {bottleneck_prop} s"
            )));
        }
        Ok(Self {
            access_prop,
            return_delay: rtt / 2.0,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkConfig {
    pub bottleneck: Link,
    pub access_bw: f64,
    /// One entry per flow slot.
    pub flows: Vec<FlowPath>,
    /// `(time, active flow count)`; flows `0..count` are active from `time`.
    pub schedule: Vec<(SimTime, usize)>,
    pub packet_size: u32,
    pub max_window: f64,
    pub seed: u64,
}

impl NetworkConfig {
    pub fn validate(&self) -> Result<(), NetworkError> {
        if !(self.access_bw.is_finite() && self.access_bw > 0.0) {
            return Err(NetworkError::Config("access bandwidth must be positive".into()));
        }
        if self.packet_size == 0 {
            return Err(NetworkError::Config("packet size must be positive".into()));
        }
        let mut last = f64::NEG_INFINITY;
        for &(t, n) in &self.schedule {
            if !(t.is_finite() && t >= 0.0 && t > last) {
                return Err(NetworkError::Config(
                    "flow schedule times must be non-negative and strictly increasing".into(),
                ));
            }
            if n > self.flows.len() {
                return Err(NetworkError::Config(format!(
                    "schedule asks for {n} flows but only {} are configured",
                    self.flows.len()
                )));
            }
            last = t;
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub enum EventKind {
    /// Data packet reaching the bottleneck, or ack reaching its source.
    PacketArrival(Packet),
    /// The bottleneck finished serializing the packet in service.
    PacketDeparture,
    /// Retransmission timer of a flow.
    RtoExpiry { flow: usize },
    /// Time-series sampling timer.
    SampleTick,
    /// Entry `usize` of the flow schedule takes effect.
    ScenarioChange(usize),
    AqmTick,
}

#[derive(Debug, Clone)]
struct FlowSlot {
    path: FlowPath,
    conn: u32,
    active: bool,
    sender: FlowState,
    receiver: Receiver,
    access_free_at: SimTime,
    rto_deadline: Option<SimTime>,
    timer_pending: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimulationReport {
    pub clock: SimTime,
    pub events_processed: u64,
}

pub struct Simulation {
    cfg: NetworkConfig,
    events: EventQueue<EventKind>,
    flows: Vec<FlowSlot>,
    queue: VecDeque<Packet>,
    in_service: Option<Packet>,
    discipline: Discipline,
    rng: SimRng,
    next_packet_id: u64,
    samples_taken: u64,
    ticks: u64,
    events_processed: u64,
    metrics: MetricsCollector,
}

impl Simulation {
    pub fn new(cfg: NetworkConfig, discipline: Discipline) -> Result<Self, NetworkError> {
        cfg.validate()?;
        let flows = cfg
            .flows
            .iter()
            .map(|&path| FlowSlot {
                path,
                conn: 0,
                active: false,
                sender: FlowState::new(cfg.max_window),
                receiver: Receiver::new(),
                access_free_at: 0.0,
                rto_deadline: None,
                timer_pending: false,
            })
            .collect();
        let mut sim = Self {
            rng: SimRng::substream(cfg.seed, 0),
            cfg,
            events: EventQueue::new(),
            flows,
            queue: VecDeque::new(),
            in_service: None,
            discipline,
            next_packet_id: 0,
            samples_taken: 0,
            ticks: 0,
            events_processed: 0,
            metrics: MetricsCollector::new(),
        };
        for (i, &(t, _)) in sim.cfg.schedule.iter().enumerate() {
            sim.events.schedule(t, EventKind::ScenarioChange(i))?;
        }
        if sim.discipline.tick_interval().is_some() {
            sim.schedule_next_tick()?;
        }
        sim.events.schedule(0.0, EventKind::SampleTick)?;
        Ok(sim)
    }

    pub fn now(&self) -> SimTime {
        self.events.now()
    }

    pub fn discipline(&self) -> &Discipline {
        &self.discipline
    }

    pub fn into_discipline(self) -> Discipline {
        self.discipline
    }

    pub fn queue_len(&self) -> usize {
        self.queue.len()
    }

    pub fn active_flows(&self) -> usize {
        self.flows.iter().filter(|f| f.active).count()
    }

    /// Congestion window of flow `i`, if it exists.
    pub fn flow_state(&self, i: usize) -> Option<&FlowState> {
        self.flows.get(i).map(|f| &f.sender)
    }

    pub fn metrics(&self, scenario: &str, aqm: &str) -> RunMetrics {
        self.metrics
            .finish(scenario, aqm, self.now(), self.cfg.bottleneck.bandwidth())
    }

    /// Processes every event due at or before `t_end`, then sets the clock
    /// to `t_end`.
    pub fn run_until(&mut self, t_end: SimTime) -> Result<SimulationReport, NetworkError> {
        while let Some(ev) = self.events.pop_until(t_end) {
            self.events_processed += 1;
            self.dispatch(ev.kind)?;
        }
        self.events.advance_to(t_end);
        Ok(SimulationReport {
            clock: self.now(),
            events_processed: self.events_processed,
        })
    }

    fn dispatch(&mut self, kind: EventKind) -> Result<(), NetworkError> {
        match kind {
            EventKind::PacketArrival(pkt) if pkt.is_ack => self.on_ack_arrival(pkt),
            EventKind::PacketArrival(pkt) => self.on_bottleneck_arrival(pkt),
            EventKind::PacketDeparture => self.on_departure(),
            EventKind::RtoExpiry { flow } => self.on_rto_expiry(flow),
            EventKind::SampleTick => self.on_sample(),
            EventKind::ScenarioChange(i) => self.on_scenario_change(i),
            EventKind::AqmTick => {
                let now = self.now();
                self.discipline.on_tick(self.queue.len(), now);
                self.schedule_next_tick()
            }
        }
    }

    fn schedule_next_tick(&mut self) -> Result<(), NetworkError> {
        if let Some(interval) = self.discipline.tick_interval() {
            self.ticks += 1;
            let t = interval * self.ticks as f64;
            self.events.schedule(t, EventKind::AqmTick)?;
        }
        Ok(())
    }

    fn on_sample(&mut self) -> Result<(), NetworkError> {
        let now = self.now();
        self.metrics.sample(
            now,
            self.queue.len(),
            self.discipline.avg_queue(),
            self.discipline.current_max_p(),
        );
        self.samples_taken += 1;
        let next = self.samples_taken as f64 / f64::from(SAMPLES_PER_SECOND);
        self.events.schedule(next, EventKind::SampleTick)?;
        Ok(())
    }

    fn on_scenario_change(&mut self, idx: usize) -> Result<(), NetworkError> {
        let (_, count) = self.cfg.schedule[idx];
        for i in 0..self.flows.len() {
            let want = i < count;
            if want && !self.flows[i].active {
                let max_window = self.cfg.max_window;
                let f = &mut self.flows[i];
                f.conn += 1;
                f.active = true;
                f.sender = FlowState::new(max_window);
                f.receiver = Receiver::new();
                f.rto_deadline = None;
                self.send_window(i)?;
            } else if !want && self.flows[i].active {
                let f = &mut self.flows[i];
                f.active = false;
                f.rto_deadline = None;
            }
        }
        Ok(())
    }

    fn on_bottleneck_arrival(&mut self, mut pkt: Packet) -> Result<(), NetworkError> {
        let now = self.now();
        let verdict = self.discipline.on_arrival(self.queue.len(), now, &mut self.rng);
        self.metrics.on_arrival(verdict);
        if verdict.is_drop() {
            return Ok(());
        }
        pkt.enqueue_time = now;
        self.queue.push_back(pkt);
        if self.in_service.is_none() {
            self.start_service()?;
        }
        Ok(())
    }

    fn start_service(&mut self) -> Result<(), NetworkError> {
        if let Some(pkt) = self.queue.pop_front() {
            let now = self.now();
            self.metrics.on_dequeue(now - pkt.enqueue_time);
            let tx = self.cfg.bottleneck.serialization_time(pkt.size);
            self.in_service = Some(pkt);
            self.events.schedule(now + tx, EventKind::PacketDeparture)?;
        }
        Ok(())
    }

    fn on_departure(&mut self) -> Result<(), NetworkError> {
        let now = self.now();
        let pkt = self
            .in_service
            .take()
            .ok_or_else(|| NetworkError::Config("departure with idle link".into()))?;
        self.metrics.on_departure(now, pkt.bits());

        let flow = &mut self.flows[pkt.flow_id as usize];
        if flow.conn == pkt.conn {
            let acked = flow.receiver.on_data(pkt.seq_no);
            let delay = self.cfg.bottleneck.prop_delay() + flow.path.return_delay;
            let ack = Packet {
                id: self.next_packet_id,
                flow_id: pkt.flow_id,
                conn: pkt.conn,
                size: ACK_SIZE,
                seq_no: acked,
                enqueue_time: 0.0,
                is_ack: true,
            };
            self.next_packet_id += 1;
            self.events.schedule(now + delay, EventKind::PacketArrival(ack))?;
        }
        self.start_service()
    }

    fn on_ack_arrival(&mut self, ack: Packet) -> Result<(), NetworkError> {
        let now = self.now();
        let i = ack.flow_id as usize;
        let f = &mut self.flows[i];
        if !f.active || f.conn != ack.conn {
            return Ok(());
        }
        let before = f.sender.highest_acked;
        let outcome = f.sender.on_ack(ack.seq_no, now);
        let advanced = f.sender.highest_acked > before;
        if let Some(seq) = outcome.retransmit {
            f.sender.record_retransmit(seq, now);
            self.emit(i, seq)?;
        }
        let f = &mut self.flows[i];
        if advanced {
            f.rto_deadline = f.sender.has_unacked().then_some(now + f.sender.rto);
        }
        self.send_window(i)
    }

    fn on_rto_expiry(&mut self, i: usize) -> Result<(), NetworkError> {
        let now = self.now();
        let f = &mut self.flows[i];
        f.timer_pending = false;
        if !f.active {
            return Ok(());
        }
        match f.rto_deadline {
            None => Ok(()),
            Some(deadline) if deadline > now => {
                f.timer_pending = true;
                self.events.schedule(deadline, EventKind::RtoExpiry { flow: i })?;
                Ok(())
            }
            Some(_) => {
                if !f.sender.has_unacked() {
                    f.rto_deadline = None;
                    return Ok(());
                }
                f.sender.on_timeout();
                f.rto_deadline = Some(now + f.sender.rto);
                self.send_window(i)?;
                self.ensure_timer(i)
            }
        }
    }

    /// Sends as many packets as the window allows and arms the retransmit
    /// timer if data is outstanding.
    fn send_window(&mut self, i: usize) -> Result<(), NetworkError> {
        let now = self.now();
        if !self.flows[i].active {
            return Ok(());
        }
        let n = self.flows[i].sender.sendable();
        for _ in 0..n {
            let seq = self.flows[i].sender.record_send(now);
            self.emit(i, seq)?;
        }
        let f = &mut self.flows[i];
        if f.rto_deadline.is_none() && f.sender.has_unacked() {
            f.rto_deadline = Some(now + f.sender.rto);
        }
        self.ensure_timer(i)
    }

    fn ensure_timer(&mut self, i: usize) -> Result<(), NetworkError> {
        let f = &mut self.flows[i];
        if let Some(deadline) = f.rto_deadline {
            if !f.timer_pending {
                f.timer_pending = true;
                self.events.schedule(deadline, EventKind::RtoExpiry { flow: i })?;
            }
        }
        Ok(())
    }

    /// Puts data packet `seq` of flow `i` on its access link.
    fn emit(&mut self, i: usize, seq: u64) -> Result<(), NetworkError> {
        let now = self.now();
        let size = self.cfg.packet_size;
        let tx = f64::from(size) * 8.0 / self.cfg.access_bw;
        let f = &mut self.flows[i];
        let leave = f.access_free_at.max(now) + tx;
        f.access_free_at = leave;
        let pkt = Packet {
            id: self.next_packet_id,
            flow_id: i as u32,
            conn: f.conn,
            size,
            seq_no: seq,
            enqueue_time: 0.0,
            is_ack: false,
        };
        self.next_packet_id += 1;
        self.events
            .schedule(leave + f.path.access_prop, EventKind::PacketArrival(pkt))?;
        Ok(())
    }
}
