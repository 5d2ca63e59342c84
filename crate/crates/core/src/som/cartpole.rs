//! Inverted pendulum on a cart, used to check that the map can learn a
//! stabilizing controller from (previous angle, current angle) alone before
//! it is trusted with a queue.

use super::{LearnParams, SomMap, MAP_COLS, MAP_ROWS};
use crate::engine::SimRng;

#[derive(Debug, Clone, PartialEq)]
pub struct CartPoleParams {
    pub gravity: f64,
    pub mass_cart: f64,
    pub mass_pole: f64,
    /// Distance from pivot to the pole's centre of mass.
    pub half_length: f64,
    pub dt: f64,
    pub force_max: f64,
    /// Pole is considered fallen beyond this angle (radians).
    pub fail_angle: f64,
}

impl Default for CartPoleParams {
    fn default() -> Self {
        Self {
            gravity: 9.8,
            mass_cart: 1.0,
            mass_pole: 0.1,
            half_length: 0.5,
            dt: 0.02,
            force_max: 10.0,
            fail_angle: 12f64.to_radians(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CartPole {
    pub x: f64,
    pub x_dot: f64,
    pub theta: f64,
    pub theta_dot: f64,
}

impl CartPole {
    pub fn upright() -> Self {
        Self::default()
    }

    pub fn with_angle(theta: f64) -> Self {
        Self {
            theta,
            ..Self::default()
        }
    }

    /// Advances one explicit-Euler step under horizontal `force` (N).
    pub fn step(&mut self, force: f64, p: &CartPoleParams) {
        let total = p.mass_cart + p.mass_pole;
        let pole_ml = p.mass_pole * p.half_length;
        let (sin, cos) = self.theta.sin_cos();
        let temp = (force + pole_ml * self.theta_dot * self.theta_dot * sin) / total;
        let theta_acc = (p.gravity * sin - cos * temp)
            / (p.half_length * (4.0 / 3.0 - p.mass_pole * cos * cos / total));
        let x_acc = temp - pole_ml * theta_acc * cos / total;
        self.x += p.dt * self.x_dot;
        self.x_dot += p.dt * x_acc;
        self.theta += p.dt * self.theta_dot;
        self.theta_dot += p.dt * theta_acc;
    }

    pub fn fallen(&self, p: &CartPoleParams) -> bool {
        self.theta.abs() > p.fail_angle
    }
}

/// Reference linear (PD) controller on the pole angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PdTeacher {
    pub k_angle: f64,
    pub k_rate: f64,
}

impl Default for PdTeacher {
    fn default() -> Self {
        Self {
            k_angle: 40.0,
            k_rate: 6.0,
        }
    }
}

impl PdTeacher {
    pub fn force(&self, s: &CartPole, p: &CartPoleParams) -> f64 {
        (self.k_angle * s.theta + self.k_rate * s.theta_dot).clamp(-p.force_max, p.force_max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationConfig {
    pub lp: LearnParams,
    pub seed: u64,
    /// Training episodes.
    pub episodes: usize,
    /// Step cap per training episode.
    pub train_steps: usize,
    /// Number of evaluation starts.
    pub eval_starts: usize,
    /// Evaluation succeeds once a start survives this many steps.
    pub eval_steps: usize,
    /// Initial angles are drawn uniformly from `[-init_angle, init_angle]`.
    pub init_angle: f64,
    pub cart: CartPoleParams,
    pub teacher: PdTeacher,
}

impl Default for ValidationConfig {
    fn default() -> Self {
        Self {
            lp: LearnParams {
                decay: 0.9995,
                ..LearnParams::default()
            },
            seed: 42,
            episodes: 300,
            train_steps: 1000,
            eval_starts: 20,
            eval_steps: 1000,
            init_angle: 0.05,
            cart: CartPoleParams::default(),
            teacher: PdTeacher::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidationReport {
    pub untrained_steps: Vec<usize>,
    pub trained_steps: Vec<usize>,
    pub eval_steps: usize,
    pub training_steps: usize,
}

fn mean(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

impl ValidationReport {
    pub fn untrained_mean(&self) -> f64 {
        mean(&self.untrained_steps)
    }

    pub fn trained_mean(&self) -> f64 {
        mean(&self.trained_steps)
    }

    pub fn trained_min(&self) -> usize {
        self.trained_steps.iter().copied().min().unwrap_or(0)
    }

    /// Untrained map falls within 100 steps on average; trained map holds
    /// every start for the full evaluation horizon.
    pub fn passed(&self) -> bool {
        self.untrained_mean() < 100.0 && self.trained_min() >= self.eval_steps
    }
}

/// Maps an angle in `[-fail_angle, fail_angle]` to `[0, 1]`.
fn normalize(theta: f64, p: &CartPoleParams) -> f64 {
    ((theta + p.fail_angle) / (2.0 * p.fail_angle)).clamp(0.0, 1.0)
}

fn som_input(prev: f64, now: f64, p: &CartPoleParams) -> [f64; 2] {
    [normalize(prev, p), normalize(now, p)]
}

/// Steps survived by the map-driven controller from angle `theta0`.
pub fn balance_steps(map: &SomMap, theta0: f64, cap: usize, p: &CartPoleParams) -> usize {
    let mut s = CartPole::with_angle(theta0);
    let mut prev = s.theta;
    for step in 0..cap {
        let force = map.respond(som_input(prev, s.theta, p));
        prev = s.theta;
        s.step(force, p);
        if s.fallen(p) {
            return step + 1;
        }
    }
    cap
}

fn evaluate(map: &SomMap, starts: &[f64], cap: usize, p: &CartPoleParams) -> Vec<usize> {
    starts.iter().map(|&t| balance_steps(map, t, cap, p)).collect()
}

/// Trains a fresh map on the cart-pole task, teaching it the PD controller
/// while it drives the cart itself with exploration noise, and reports
/// balance lengths before and after training.
pub fn pole_balance_validate(cfg: &ValidationConfig) -> ValidationReport {
    let p = &cfg.cart;
    let mut init_rng = SimRng::substream(cfg.seed, 1);
    let mut train_rng = SimRng::substream(cfg.seed, 2);
    let mut eval_rng = SimRng::substream(cfg.seed, 3);

    let range = (-p.force_max, p.force_max);
    let mut map = SomMap::random(MAP_ROWS, MAP_COLS, range, range, &mut init_rng)
        .expect("static map shape is valid");
    let starts: Vec<f64> = (0..cfg.eval_starts)
        .map(|_| eval_rng.uniform_range(-cfg.init_angle, cfg.init_angle))
        .collect();
    let untrained_steps = evaluate(&map, &starts, cfg.eval_steps, p);

    let mut lp = cfg.lp.clone();
    let noise = cfg.lp.explore_sigma * p.force_max;
    let mut training_steps = 0;
    for _ in 0..cfg.episodes {
        let mut s = CartPole::with_angle(train_rng.uniform_range(-cfg.init_angle, cfg.init_angle));
        let mut prev = s.theta;
        for _ in 0..cfg.train_steps {
            let x = som_input(prev, s.theta, p);
            let applied =
                (map.respond(x) + train_rng.normal(0.0, noise)).clamp(-p.force_max, p.force_max);
            let target = cfg.teacher.force(&s, p);
            lp.decay_step();
            map.train_step(x, target, &lp).expect("training map is not frozen");
            training_steps += 1;
            prev = s.theta;
            s.step(applied, p);
            if s.fallen(p) {
                break;
            }
        }
    }
    map.freeze();
    let trained_steps = evaluate(&map, &starts, cfg.eval_steps, p);

    ValidationReport {
        untrained_steps,
        trained_steps,
        eval_steps: cfg.eval_steps,
        training_steps,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn upright_stays_upright() {
        let p = CartPoleParams::default();
        let mut s = CartPole::upright();
        for _ in 0..1000 {
            s.step(0.0, &p);
        }
        assert_eq!(s, CartPole::upright());
    }

    #[test]
    fn tilted_pole_falls_without_control() {
        let p = CartPoleParams::default();
        let mut s = CartPole::with_angle(0.01);
        let mut steps = 0;
        while !s.fallen(&p) && steps < 1000 {
            s.step(0.0, &p);
            steps += 1;
        }
        assert!(steps < 200, "fell after {steps} steps");
        assert!(s.theta > 0.0);
    }

    #[test]
    fn pd_teacher_balances() {
        let p = CartPoleParams::default();
        let t = PdTeacher::default();
        for &theta in &[-0.05, 0.03, 0.05] {
            let mut s = CartPole::with_angle(theta);
            for _ in 0..2000 {
                let f = t.force(&s, &p);
                s.step(f, &p);
                assert!(!s.fallen(&p));
            }
            assert!(s.theta.abs() < 1e-3);
        }
    }

    #[test]
    fn positive_force_pushes_pole_back() {
        let p = CartPoleParams::default();
        let mut s = CartPole::with_angle(0.0);
        s.step(10.0, &p);
        s.step(0.0, &p);
        assert!(s.theta < 0.0);
        assert!(s.x_dot > 0.0);
    }
}
