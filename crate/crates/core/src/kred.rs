//! Kohonen-map RED: the map supplies RED's max_p from the previous and
//! current average queue on every arrival. Also holds the online training
//! loop that teaches the map and freezes it once the queue is stable.

use std::collections::VecDeque;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::aqm::{ewma_update, red_decide, AvgQueue, MaxPBounds, RedParams, Verdict};
use crate::engine::{SimRng, SimTime};
use crate::metrics::{mean_std, SAMPLES_PER_SECOND};
use crate::som::{LearnParams, SomMap, MAP_COLS, MAP_ROWS};

/// Which queue measure feeds the map.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KredInput {
    #[default]
    Average,
    Instantaneous,
}

/// Target max_p for a given average queue: `p_base` at the band midpoint,
/// scaled by `exp(k * (avg - mid) / (max_th - min_th))`, then clamped.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TeacherParams {
    pub p_base: f64,
    pub k: f64,
}

impl Default for TeacherParams {
    fn default() -> Self {
        Self {
            p_base: 0.3,
            k: 4f64.ln(),
        }
    }
}

impl TeacherParams {
    pub fn target(&self, avg: f64, red: &RedParams, bounds: &MaxPBounds) -> f64 {
        let mid = 0.5 * (red.min_th + red.max_th);
        bounds.clamp(self.p_base * (self.k * (avg - mid) / red.band_width()).exp())
    }
}

/// True iff every sample lies in `[min_th, max_th]` and the samples' standard
/// deviation is at most 10% of the band width.
pub fn convergence_check(window: &[f64], red: &RedParams) -> bool {
    if window.is_empty() {
        return false;
    }
    let in_band = window.iter().all(|&a| a >= red.min_th && a <= red.max_th);
    let (_, std) = mean_std(window.iter().copied());
    in_band && std <= 0.1 * red.band_width()
}

#[derive(Debug, Clone)]
pub struct KredState {
    pub map: Arc<SomMap>,
    pub prev: f64,
    pub red: RedParams,
    pub bounds: MaxPBounds,
    pub input: KredInput,
    pub training: bool,
}

impl KredState {
    pub fn new(map: Arc<SomMap>, red: RedParams, bounds: MaxPBounds, input: KredInput) -> Self {
        Self {
            map,
            prev: 0.0,
            red,
            bounds,
            input,
            training: false,
        }
    }

    pub fn som_input(&self, prev: f64, cur: f64) -> [f64; 2] {
        let q = self.red.q_size as f64;
        [(prev / q).clamp(0.0, 1.0), (cur / q).clamp(0.0, 1.0)]
    }

    /// Map response for `(prev, cur)`, clamped; `cur` becomes the next `prev`.
    pub fn kred_max_p(&mut self, cur: f64) -> f64 {
        let x = self.som_input(self.prev, cur);
        self.prev = cur;
        self.bounds.clamp(self.map.respond(x))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainLogRow {
    pub time: SimTime,
    pub avg: f64,
    pub applied_max_p: f64,
    pub teacher: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub learn: LearnParams,
    pub teacher: TeacherParams,
    /// Span of average-queue history the convergence test looks at.
    pub window_secs: f64,
    /// Correlation time of the exploration noise in seconds. The noise is an
    /// Ornstein-Uhlenbeck process with stationary law N(0, explore_sigma);
    /// zero gives independent draws per arrival.
    pub explore_tau: f64,
    /// Range of the random initial output weights.
    pub init_out_lo: f64,
    pub init_out_hi: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            learn: LearnParams::default(),
            teacher: TeacherParams::default(),
            window_secs: 30.0,
            explore_tau: 2.0,
            init_out_lo: 0.01,
            init_out_hi: 0.2,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), String> {
        self.learn.validate()?;
        if !(self.window_secs.is_finite() && self.window_secs > 0.0) {
            return Err("window_secs must be positive".into());
        }
        if !(self.explore_tau.is_finite() && self.explore_tau >= 0.0) {
            return Err("explore_tau must be non-negative".into());
        }
        if !(self.init_out_lo <= self.init_out_hi && self.init_out_lo.is_finite() && self.init_out_hi.is_finite()) {
            return Err("init_out_lo must not exceed init_out_hi".into());
        }
        if !(self.teacher.p_base.is_finite() && self.teacher.p_base > 0.0 && self.teacher.k.is_finite()) {
            return Err("teacher needs a positive p_base and finite k".into());
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Trainer {
    lp: LearnParams,
    teacher: TeacherParams,
    window: VecDeque<f64>,
    window_len: usize,
    samples: u64,
    tau: f64,
    noise: f64,
    last_arrival: SimTime,
    converged_at: Option<SimTime>,
    log: Vec<TrainLogRow>,
}

impl Trainer {
    fn explore(&mut self, now: SimTime, rng: &mut SimRng) -> f64 {
        let sigma = self.lp.explore_sigma;
        if sigma <= 0.0 {
            return 0.0;
        }
        if self.tau <= 0.0 {
            return rng.normal(0.0, sigma);
        }
        let keep = (-(now - self.last_arrival).max(0.0) / self.tau).exp();
        self.last_arrival = now;
        self.noise = keep * self.noise + rng.normal(0.0, sigma * (1.0 - keep * keep).sqrt());
        self.noise
    }

    fn next_sample_time(&self) -> SimTime {
        self.samples as f64 / f64::from(SAMPLES_PER_SECOND)
    }
}

/// Queue discipline wrapper around [`KredState`]; optionally trains the map
/// as traffic flows through it.
#[derive(Debug, Clone)]
pub struct KredQueue {
    pub state: KredState,
    pub avg: AvgQueue,
    max_p: f64,
    trainer: Option<Trainer>,
}

impl KredQueue {
    pub fn new(state: KredState) -> Self {
        let max_p = state.bounds.clamp(state.red.max_p);
        Self {
            state,
            avg: AvgQueue::default(),
            max_p,
            trainer: None,
        }
    }

    /// A queue that trains `state.map` online until the average queue
    /// settles, then freezes it.
    pub fn training(mut state: KredState, cfg: &TrainConfig) -> Self {
        state.training = true;
        let window_len = (cfg.window_secs * f64::from(SAMPLES_PER_SECOND)).ceil() as usize + 1;
        let mut q = Self::new(state);
        q.trainer = Some(Trainer {
            lp: cfg.learn.clone(),
            teacher: cfg.teacher,
            window: VecDeque::with_capacity(window_len),
            window_len,
            samples: 0,
            tau: cfg.explore_tau,
            noise: 0.0,
            last_arrival: 0.0,
            converged_at: None,
            log: Vec::new(),
        });
        q
    }

    pub fn current_max_p(&self) -> f64 {
        self.max_p
    }

    pub fn converged_at(&self) -> Option<SimTime> {
        self.trainer.as_ref().and_then(|t| t.converged_at)
    }

    pub fn training_log(&self) -> &[TrainLogRow] {
        self.trainer.as_ref().map_or(&[], |t| &t.log)
    }

    pub fn on_arrival(&mut self, qlen: usize, now: SimTime, rng: &mut SimRng) -> Verdict {
        self.avg.avg = ewma_update(self.avg.avg, qlen as f64, self.state.red.q_weight);
        let cur = match self.state.input {
            KredInput::Average => self.avg.avg,
            KredInput::Instantaneous => qlen as f64,
        };
        let trainer = self.trainer.as_mut().filter(|_| self.state.training);
        self.max_p = match trainer {
            Some(tr) => {
                let x = self.state.som_input(self.state.prev, cur);
                self.state.prev = cur;
                let response = self.state.map.respond(x);
                let noise = tr.explore(now, rng);
                let target = tr.teacher.target(cur, &self.state.red, &self.state.bounds);
                tr.lp.decay_step();
                Arc::make_mut(&mut self.state.map)
                    .train_step(x, target, &tr.lp)
                    .expect("map is not frozen while training");
                self.state.bounds.clamp(response + noise)
            }
            None => self.state.kred_max_p(cur),
        };
        self.record(now);
        red_decide(qlen, &mut self.avg, &self.state.red, self.max_p, rng)
    }

    fn record(&mut self, now: SimTime) {
        let Some(tr) = self.trainer.as_mut() else {
            return;
        };
        while now >= tr.next_sample_time() {
            let t = tr.next_sample_time();
            tr.samples += 1;
            let avg = self.avg.avg;
            tr.log.push(TrainLogRow {
                time: t,
                avg,
                applied_max_p: self.max_p,
                teacher: tr.teacher.target(avg, &self.state.red, &self.state.bounds),
            });
            if !self.state.training {
                continue;
            }
            if tr.window.len() == tr.window_len {
                tr.window.pop_front();
            }
            tr.window.push_back(avg);
            if tr.window.len() == tr.window_len
                && convergence_check(tr.window.make_contiguous(), &self.state.red)
            {
                Arc::make_mut(&mut self.state.map).freeze();
                self.state.training = false;
                tr.converged_at = Some(t);
            }
        }
    }
}

/// A fresh 25x25 map for KRED: inputs uniform on the unit square, outputs
/// uniform on `[init_out_lo, init_out_hi]`.
pub fn initial_map(cfg: &TrainConfig, bounds: &MaxPBounds, seed: u64) -> SomMap {
    let mut rng = SimRng::substream(seed, 0x5eed_0f50);
    SomMap::random(
        MAP_ROWS,
        MAP_COLS,
        (cfg.init_out_lo, cfg.init_out_hi),
        (bounds.floor, bounds.ceil),
        &mut rng,
    )
    .expect("static map shape is valid")
}
