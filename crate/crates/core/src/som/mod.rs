//! Kohonen self-organizing map with a supervised scalar output layer.
//!
//! Each neuron holds a 2-D input weight vector and one output weight. A
//! query returns the output weight of the neuron whose input weights are
//! nearest to the query. Training pulls the winner and its grid neighbours
//! toward the presented input and, through a delta rule, toward the
//! presented target output.

mod cartpole;
mod io;

pub use cartpole::{
    pole_balance_validate, CartPole, CartPoleParams, PdTeacher, ValidationConfig,
    ValidationReport,
};
pub use io::{load_map, parse_ksom, save_map, to_ksom_string, KsomError};

use thiserror::Error;

use crate::engine::SimRng;

pub const MAP_ROWS: usize = 25;
pub const MAP_COLS: usize = 25;
pub const IN_DIM: usize = 2;
pub const OUT_DIM: usize = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct GridCoord {
    pub row: usize,
    pub col: usize,
}

impl GridCoord {
    pub fn new(row: usize, col: usize) -> Self {
        Self { row, col }
    }

    /// Chebyshev (max-norm) distance on the grid.
    pub fn grid_distance(&self, other: &GridCoord) -> usize {
        self.row.abs_diff(other.row).max(self.col.abs_diff(other.col))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neuron {
    pub in_weights: [f64; IN_DIM],
    pub out_weight: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SomError {
    #[error("the map is frozen; its weights can no longer change")]
    Frozen,
    #[error("invalid output range [{0}, {1}]")]
    OutputRange(f64, f64),
    #[error("map must have at least one neuron")]
    Empty,
}

/// Learning-rate and neighbourhood schedule.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LearnParams {
    pub eta_in: f64,
    pub eta_out: f64,
    /// Neighbourhood radius in grid units.
    pub radius: f64,
    /// Multiplicative decay applied to both rates and the radius per step.
    pub decay: f64,
    pub eta_floor: f64,
    pub radius_floor: f64,
    /// Standard deviation of the exploration noise added to the applied output.
    pub explore_sigma: f64,
}

impl Default for LearnParams {
    fn default() -> Self {
        Self {
            eta_in: 0.3,
            eta_out: 0.3,
            radius: 6.0,
            decay: 0.999,
            eta_floor: 0.01,
            radius_floor: 1.0,
            explore_sigma: 0.02,
        }
    }
}

impl LearnParams {
    pub fn validate(&self) -> Result<(), String> {
        let rates_ok = self.eta_in >= 0.0 && self.eta_out >= 0.0;
        let finite = [self.eta_in, self.eta_out, self.radius, self.decay, self.explore_sigma]
            .iter()
            .all(|v| v.is_finite());
        if !finite || !rates_ok {
            return Err("learning rates must be finite and non-negative".into());
        }
        if self.radius < 0.0 || self.radius_floor < 0.0 || self.eta_floor < 0.0 {
            return Err("radius and floors must be non-negative".into());
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(format!("decay must lie in (0, 1], got {}", self.decay));
        }
        if self.explore_sigma < 0.0 {
            return Err("explore_sigma must be non-negative".into());
        }
        Ok(())
    }

    /// One step of the coarse-to-fine schedule.
    pub fn decay_step(&mut self) {
        self.eta_in = (self.eta_in * self.decay).max(self.eta_floor.min(self.eta_in));
        self.eta_out = (self.eta_out * self.decay).max(self.eta_floor.min(self.eta_out));
        self.radius = (self.radius * self.decay).max(self.radius_floor.min(self.radius));
    }
}

/// Gaussian neighbourhood factor for a neuron `d` grid steps from the winner.
/// Zero outside the radius; 1 at the winner.
pub fn neighbourhood(d: usize, radius: f64) -> f64 {
    let d = d as f64;
    if d > radius {
        0.0
    } else if radius == 0.0 {
        1.0
    } else {
        (-(d * d) / (2.0 * radius * radius)).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SomMap {
    rows: usize,
    cols: usize,
    neurons: Vec<Neuron>,
    out_min: f64,
    out_max: f64,
    frozen: bool,
}

impl SomMap {
    pub fn from_neurons(
        rows: usize,
        cols: usize,
        neurons: Vec<Neuron>,
        out_range: (f64, f64),
    ) -> Result<Self, SomError> {
        if rows == 0 || cols == 0 || neurons.len() != rows * cols {
            return Err(SomError::Empty);
        }
        let (out_min, out_max) = out_range;
        if !(out_min.is_finite() && out_max.is_finite() && out_min <= out_max) {
            return Err(SomError::OutputRange(out_min, out_max));
        }
        Ok(Self {
            rows,
            cols,
            neurons,
            out_min,
            out_max,
            frozen: false,
        })
    }

    /// A map with input weights uniform on `[0,1]^2` and output weights
    /// uniform on `init_out`.
    pub fn random(
        rows: usize,
        cols: usize,
        init_out: (f64, f64),
        out_range: (f64, f64),
        rng: &mut SimRng,
    ) -> Result<Self, SomError> {
        let neurons = (0..rows * cols)
            .map(|_| Neuron {
                in_weights: [rng.uniform(), rng.uniform()],
                out_weight: rng.uniform_range(init_out.0, init_out.1),
            })
            .collect();
        let mut map = Self::from_neurons(rows, cols, neurons, out_range)?;
        for n in &mut map.neurons {
            n.out_weight = n.out_weight.clamp(out_range.0, out_range.1);
        }
        Ok(map)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn out_range(&self) -> (f64, f64) {
        (self.out_min, self.out_max)
    }

    pub fn is_frozen(&self) -> bool {
        self.frozen
    }

    pub fn freeze(&mut self) {
        self.frozen = true;
    }

    pub fn neurons(&self) -> &[Neuron] {
        &self.neurons
    }

    pub fn neuron(&self, at: GridCoord) -> &Neuron {
        &self.neurons[at.row * self.cols + at.col]
    }

    /// Direct weight access; fails on a frozen map.
    pub fn neuron_mut(&mut self, at: GridCoord) -> Result<&mut Neuron, SomError> {
        if self.frozen {
            return Err(SomError::Frozen);
        }
        let cols = self.cols;
        Ok(&mut self.neurons[at.row * cols + at.col])
    }

    fn coord(&self, idx: usize) -> GridCoord {
        GridCoord::new(idx / self.cols, idx % self.cols)
    }

    /// Best-matching unit. Ties go to the smallest row-major index.
    pub fn winner(&self, x: [f64; IN_DIM]) -> GridCoord {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, n) in self.neurons.iter().enumerate() {
            let d = sq_dist(&n.in_weights, &x);
            if d < best_d {
                best_d = d;
                best = i;
            }
        }
        self.coord(best)
    }

    pub fn respond(&self, x: [f64; IN_DIM]) -> f64 {
        self.neuron(self.winner(x)).out_weight
    }

    /// One supervised learning step. Returns the winner.
    pub fn train_step(
        &mut self,
        x: [f64; IN_DIM],
        target: f64,
        lp: &LearnParams,
    ) -> Result<GridCoord, SomError> {
        if self.frozen {
            return Err(SomError::Frozen);
        }
        let win = self.winner(x);
        let reach = lp.radius.floor().max(0.0) as usize;
        let r0 = win.row.saturating_sub(reach);
        let r1 = (win.row + reach).min(self.rows - 1);
        let c0 = win.col.saturating_sub(reach);
        let c1 = (win.col + reach).min(self.cols - 1);
        for row in r0..=r1 {
            for col in c0..=c1 {
                let at = GridCoord::new(row, col);
                let h = neighbourhood(at.grid_distance(&win), lp.radius);
                if h == 0.0 {
                    continue;
                }
                let idx = row * self.cols + col;
                let n = &mut self.neurons[idx];
                for (w, xi) in n.in_weights.iter_mut().zip(x) {
                    *w += lp.eta_in * h * (xi - *w);
                }
                n.out_weight += lp.eta_out * h * (target - n.out_weight);
                n.out_weight = n.out_weight.clamp(self.out_min, self.out_max);
            }
        }
        Ok(win)
    }

    /// Order-sensitive FNV-1a digest over every weight's bit pattern.
    pub fn checksum(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut mix = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0100_0000_01b3);
            }
        };
        for n in &self.neurons {
            mix(n.in_weights[0].to_bits());
            mix(n.in_weights[1].to_bits());
            mix(n.out_weight.to_bits());
        }
        h
    }
}

fn sq_dist(a: &[f64; IN_DIM], b: &[f64; IN_DIM]) -> f64 {
    a.iter().zip(b).map(|(p, q)| (p - q) * (p - q)).sum()
}
