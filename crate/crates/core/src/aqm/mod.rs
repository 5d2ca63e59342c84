//! Queue disciplines for the bottleneck: drop-tail, RED, FRED, ARED, PI and
//! the Kohonen-map RED (KRED), behind one arrival/tick interface.

pub mod ared;
pub mod droptail;
pub mod fred;
pub mod pi;
pub mod red;

use std::fmt;
use std::str::FromStr;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use ared::{Ared, AredState};
pub use droptail::DropTail;
pub use fred::{Fred, FredState, LastAction};
pub use pi::{Pi, PiState};
pub use red::{
    count_corrected, ewma_update, red_decide, red_enqueue_decision, red_mark_prob,
    red_mark_prob_with, AvgQueue, Red, RedParams, RedParamsError,
};

use crate::engine::{SimRng, SimTime};
use crate::kred::{KredInput, KredQueue, KredState};
use crate::som::SomMap;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    Accept,
    EarlyDrop,
    /// The physical buffer was full.
    ForcedDrop,
}

impl Verdict {
    pub fn is_drop(self) -> bool {
        !matches!(self, Verdict::Accept)
    }
}

/// Bounds applied to every adapted max_p.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MaxPBounds {
    pub floor: f64,
    pub ceil: f64,
}

impl Default for MaxPBounds {
    fn default() -> Self {
        Self {
            floor: 0.001,
            ceil: 0.5,
        }
    }
}

impl MaxPBounds {
    pub fn clamp(&self, p: f64) -> f64 {
        p.clamp(self.floor, self.ceil)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DisciplineKind {
    DropTail,
    Red,
    Fred,
    Ared,
    Pi,
    Kred,
}

impl DisciplineKind {
    pub const ALL: [DisciplineKind; 6] = [
        DisciplineKind::DropTail,
        DisciplineKind::Red,
        DisciplineKind::Fred,
        DisciplineKind::Ared,
        DisciplineKind::Pi,
        DisciplineKind::Kred,
    ];

    /// The five AQMs compared against each other.
    pub const COMPARED: [DisciplineKind; 5] = [
        DisciplineKind::Red,
        DisciplineKind::Fred,
        DisciplineKind::Ared,
        DisciplineKind::Pi,
        DisciplineKind::Kred,
    ];

    pub fn name(self) -> &'static str {
        match self {
            DisciplineKind::DropTail => "droptail",
            DisciplineKind::Red => "red",
            DisciplineKind::Fred => "fred",
            DisciplineKind::Ared => "ared",
            DisciplineKind::Pi => "pi",
            DisciplineKind::Kred => "kred",
        }
    }
}

impl fmt::Display for DisciplineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown queue discipline {0:?} (expected one of droptail, red, fred, ared, pi, kred)")]
pub struct UnknownDiscipline(pub String);

impl FromStr for DisciplineKind {
    type Err = UnknownDiscipline;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        DisciplineKind::ALL
            .into_iter()
            .find(|k| k.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| UnknownDiscipline(s.to_owned()))
    }
}

/// Per-discipline parameter overrides, keyed by the conventional names.
/// Unset fields take the discipline's defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AqmParams {
    pub min_th: Option<f64>,
    pub max_th: Option<f64>,
    pub q_size: Option<usize>,
    pub q_weight: Option<f64>,
    pub max_p: Option<f64>,
    pub gentle: Option<bool>,
    pub count_correction: Option<bool>,
    pub alpha: Option<f64>,
    pub beta: Option<f64>,
    pub interval: Option<f64>,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub q_ref: Option<f64>,
    pub w: Option<f64>,
    pub p_floor: Option<f64>,
    pub p_ceil: Option<f64>,
    pub kred_input: Option<KredInput>,
}

#[derive(Debug, Error)]
pub enum AqmConfigError {
    #[error(transparent)]
    Red(#[from] RedParamsError),
    #[error("invalid max_p bounds [{0}, {1}]")]
    Bounds(f64, f64),
    #[error("invalid {name} = {value}")]
    Param { name: &'static str, value: f64 },
    #[error("kred requires a trained map (--map-file)")]
    MissingMap,
}

impl AqmParams {
    pub fn red_params(&self, kind: DisciplineKind) -> Result<RedParams, AqmConfigError> {
        let d = RedParams::default();
        let p = RedParams {
            min_th: self.min_th.unwrap_or(d.min_th),
            max_th: self.max_th.unwrap_or(d.max_th),
            q_size: self.q_size.unwrap_or(d.q_size),
            q_weight: self.q_weight.unwrap_or(d.q_weight),
            max_p: self.max_p.unwrap_or(d.max_p),
            gentle: self.gentle.unwrap_or(kind == DisciplineKind::Ared),
            count_correction: self.count_correction.unwrap_or(d.count_correction),
        };
        p.validate()?;
        Ok(p)
    }

    pub fn bounds(&self) -> Result<MaxPBounds, AqmConfigError> {
        let d = MaxPBounds::default();
        let b = MaxPBounds {
            floor: self.p_floor.unwrap_or(d.floor),
            ceil: self.p_ceil.unwrap_or(d.ceil),
        };
        if !(b.floor > 0.0 && b.floor <= b.ceil && b.ceil <= 1.0) {
            return Err(AqmConfigError::Bounds(b.floor, b.ceil));
        }
        Ok(b)
    }
}

fn positive(name: &'static str, value: f64) -> Result<f64, AqmConfigError> {
    if value.is_finite() && value > 0.0 {
        Ok(value)
    } else {
        Err(AqmConfigError::Param { name, value })
    }
}

#[derive(Debug, Clone)]
pub enum Discipline {
    DropTail(DropTail),
    Red(Red),
    Fred(Fred),
    Ared(Ared),
    Pi(Pi),
    Kred(KredQueue),
}

impl Discipline {
    /// Builds a discipline from its name and overrides. `map` is required
    /// for KRED and ignored otherwise.
    pub fn build(
        kind: DisciplineKind,
        params: &AqmParams,
        map: Option<Arc<SomMap>>,
    ) -> Result<Self, AqmConfigError> {
        let red = params.red_params(kind)?;
        let bounds = params.bounds()?;
        Ok(match kind {
            DisciplineKind::DropTail => Discipline::DropTail(DropTail::new(red.q_size, red.q_weight)),
            DisciplineKind::Red => Discipline::Red(Red::new(red)),
            DisciplineKind::Fred => {
                let alpha = positive("alpha", params.alpha.unwrap_or(3.0))?;
                let beta = positive("beta", params.beta.unwrap_or(2.0))?;
                Discipline::Fred(Fred::new(red, alpha, beta, bounds))
            }
            DisciplineKind::Ared => {
                let alpha = positive("alpha", params.alpha.unwrap_or(0.01))?;
                let beta = params.beta.unwrap_or(0.09);
                if !(beta > 0.0 && beta < 1.0) {
                    return Err(AqmConfigError::Param { name: "beta", value: beta });
                }
                let interval = positive("interval", params.interval.unwrap_or(ared::DEFAULT_INTERVAL))?;
                let state = AredState::new(red.max_p, alpha, beta, interval, bounds);
                Discipline::Ared(Ared::new(red, state))
            }
            DisciplineKind::Pi => {
                let d = PiState::default();
                let state = PiState {
                    a: params.a.unwrap_or(d.a),
                    b: params.b.unwrap_or(d.b),
                    q_ref: params.q_ref.unwrap_or(d.q_ref),
                    w: positive("w", params.w.unwrap_or(d.w))?,
                    ..d
                };
                Discipline::Pi(Pi::new(state, red.q_size, red.q_weight))
            }
            DisciplineKind::Kred => {
                let map = map.ok_or(AqmConfigError::MissingMap)?;
                let input = params.kred_input.unwrap_or_default();
                Discipline::Kred(KredQueue::new(KredState::new(map, red, bounds, input)))
            }
        })
    }

    pub fn kind(&self) -> DisciplineKind {
        match self {
            Discipline::DropTail(_) => DisciplineKind::DropTail,
            Discipline::Red(_) => DisciplineKind::Red,
            Discipline::Fred(_) => DisciplineKind::Fred,
            Discipline::Ared(_) => DisciplineKind::Ared,
            Discipline::Pi(_) => DisciplineKind::Pi,
            Discipline::Kred(_) => DisciplineKind::Kred,
        }
    }

    /// Decides the fate of a packet arriving to a queue holding `qlen` packets.
    pub fn on_arrival(&mut self, qlen: usize, now: SimTime, rng: &mut SimRng) -> Verdict {
        match self {
            Discipline::DropTail(d) => d.on_arrival(qlen),
            Discipline::Red(d) => d.on_arrival(qlen, rng),
            Discipline::Fred(d) => d.on_arrival(qlen, rng),
            Discipline::Ared(d) => d.on_arrival(qlen, rng),
            Discipline::Pi(d) => d.on_arrival(qlen, rng),
            Discipline::Kred(d) => d.on_arrival(qlen, now, rng),
        }
    }

    /// Period of the discipline's timer, if it has one.
    pub fn tick_interval(&self) -> Option<SimTime> {
        match self {
            Discipline::Ared(d) => Some(d.state.interval),
            Discipline::Pi(d) => Some(d.state.sample_interval()),
            _ => None,
        }
    }

    pub fn on_tick(&mut self, qlen: usize, now: SimTime) {
        match self {
            Discipline::Ared(d) => d.on_tick(now),
            Discipline::Pi(d) => d.on_tick(qlen),
            _ => {}
        }
    }

    pub fn avg_queue(&self) -> f64 {
        match self {
            Discipline::DropTail(d) => d.avg.avg,
            Discipline::Red(d) => d.avg.avg,
            Discipline::Fred(d) => d.avg.avg,
            Discipline::Ared(d) => d.avg.avg,
            Discipline::Pi(d) => d.avg.avg,
            Discipline::Kred(d) => d.avg.avg,
        }
    }

    /// The probability parameter currently in force: max_p for the RED
    /// family, the drop probability for PI, 0 for drop-tail.
    pub fn current_max_p(&self) -> f64 {
        match self {
            Discipline::DropTail(_) => 0.0,
            Discipline::Red(d) => d.params.max_p,
            Discipline::Fred(d) => d.state.max_p,
            Discipline::Ared(d) => d.state.max_p,
            Discipline::Pi(d) => d.state.p,
            Discipline::Kred(d) => d.current_max_p(),
        }
    }

    pub fn q_size(&self) -> usize {
        match self {
            Discipline::DropTail(d) => d.q_size,
            Discipline::Red(d) => d.params.q_size,
            Discipline::Fred(d) => d.params.q_size,
            Discipline::Ared(d) => d.params.q_size,
            Discipline::Pi(d) => d.q_size,
            Discipline::Kred(d) => d.state.red.q_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_names() {
        for k in DisciplineKind::ALL {
            assert_eq!(k.name().parse::<DisciplineKind>().unwrap(), k);
        }
        assert_eq!("RED".parse::<DisciplineKind>().unwrap(), DisciplineKind::Red);
        assert!("codel".parse::<DisciplineKind>().is_err());
    }

    #[test]
    fn defaults_follow_parameter_table() {
        let p = AqmParams::default();
        let red = p.red_params(DisciplineKind::Red).unwrap();
        assert_eq!((red.min_th, red.max_th, red.q_size), (100.0, 150.0, 200));
        assert_eq!((red.q_weight, red.max_p, red.gentle), (1e-4, 0.1, false));
        assert!(p.red_params(DisciplineKind::Ared).unwrap().gentle);
        match Discipline::build(DisciplineKind::Ared, &p, None).unwrap() {
            Discipline::Ared(a) => {
                assert_eq!((a.state.alpha, a.state.beta, a.state.interval), (0.01, 0.09, 0.3));
            }
            _ => unreachable!(),
        }
        match Discipline::build(DisciplineKind::Fred, &p, None).unwrap() {
            Discipline::Fred(f) => assert_eq!((f.state.alpha, f.state.beta), (3.0, 2.0)),
            _ => unreachable!(),
        }
        match Discipline::build(DisciplineKind::Pi, &p, None).unwrap() {
            Discipline::Pi(pi) => {
                assert_eq!((pi.state.a, pi.state.b), (1.822e-5, 1.816e-5));
                assert_eq!((pi.state.q_ref, pi.state.w), (100.0, 170.0));
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn overrides_apply() {
        let p = AqmParams {
            max_p: Some(0.2),
            alpha: Some(0.02),
            ..AqmParams::default()
        };
        match Discipline::build(DisciplineKind::Ared, &p, None).unwrap() {
            Discipline::Ared(a) => {
                assert_eq!(a.state.max_p, 0.2);
                assert_eq!(a.state.alpha, 0.02);
            }
            _ => unreachable!(),
        }
    }

    #[test]
    fn kred_without_map_is_an_error() {
        assert!(matches!(
            Discipline::build(DisciplineKind::Kred, &AqmParams::default(), None),
            Err(AqmConfigError::MissingMap)
        ));
    }

    #[test]
    fn every_discipline_forces_drop_when_full() {
        let mut rng = SimRng::new(1);
        let map = Arc::new(
            SomMap::random(25, 25, (0.01, 0.2), (0.001, 0.5), &mut SimRng::new(2)).unwrap(),
        );
        for k in DisciplineKind::ALL {
            let mut d = Discipline::build(k, &AqmParams::default(), Some(map.clone())).unwrap();
            for _ in 0..100 {
                assert_eq!(d.on_arrival(200, 0.0, &mut rng), Verdict::ForcedDrop, "{k}");
            }
        }
    }
}
