//! Scenario descriptions (training run, the two evaluation scenarios,
//! custom), config files, and the drivers that run them.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::aqm::{AqmConfigError, AqmParams, Discipline, DisciplineKind};
use crate::engine::{FlowPath, Link, NetworkConfig, NetworkError, SimRng, SimTime, Simulation};
use crate::kred::{initial_map, KredQueue, KredState, TrainConfig, TrainLogRow};
use crate::metrics::{summary_csv, RunMetrics};
use crate::som::SomMap;

pub const DEFAULT_SEED: u64 = 42;
pub const DEFAULT_BOTTLENECK_BW: f64 = 5e6;
pub const DEFAULT_BOTTLENECK_PROP: SimTime = 0.005;
pub const DEFAULT_ACCESS_BW: f64 = 100e6;
pub const DEFAULT_RTT: SimTime = 0.08;
/// RTT of the eight training flows.
pub const TRAIN_RTT: SimTime = 0.02;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("unknown scenario {0:?} (expected train, scenario1, scenario2 or custom)")]
    UnknownScenario(String),
    #[error("inconsistent scenario: {0}")]
    Invalid(String),
    #[error(transparent)]
    Aqm(#[from] AqmConfigError),
    #[error(transparent)]
    Network(#[from] NetworkError),
    #[error("{path}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}")]
    Config {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FlowStep {
    pub time: SimTime,
    pub flows: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum RttModel {
    /// Every flow has the same round-trip propagation time.
    Fixed { rtt: SimTime },
    /// Each flow draws its round-trip propagation time once from `[lo, hi]`.
    Uniform { lo: SimTime, hi: SimTime },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AqmSpec {
    pub name: DisciplineKind,
    #[serde(default)]
    pub params: AqmParams,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioSpec {
    pub name: String,
    pub duration: SimTime,
    pub bottleneck_bw: f64,
    pub bottleneck_prop: SimTime,
    pub access_bw: f64,
    pub flow_schedule: Vec<FlowStep>,
    pub rtt_model: RttModel,
    pub aqm: AqmSpec,
    pub seed: u64,
    pub packet_size: u32,
    pub max_window: f64,
}

/// Optional field-by-field overrides on top of a named preset.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioOverrides {
    pub duration: Option<SimTime>,
    pub bottleneck_bw: Option<f64>,
    pub bottleneck_prop: Option<SimTime>,
    pub access_bw: Option<f64>,
    pub flow_schedule: Option<Vec<FlowStep>>,
    pub rtt_model: Option<RttModel>,
    pub aqm: Option<AqmSpec>,
    pub seed: Option<u64>,
    pub packet_size: Option<u32>,
    pub max_window: Option<f64>,
}

/// On-disk configuration: scenario overrides plus KRED training settings.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ConfigFile {
    pub scenario: ScenarioOverrides,
    pub train: TrainConfig,
}

impl ConfigFile {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, ScenarioError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| ScenarioError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        toml::from_str(&text).map_err(|source| ScenarioError::Config {
            path: path.to_path_buf(),
            source,
        })
    }
}

fn staircase(steps: &[(SimTime, usize)]) -> Vec<FlowStep> {
    steps
        .iter()
        .map(|&(time, flows)| FlowStep { time, flows })
        .collect()
}

/// Flow counts of the second scenario, one per 50 s period.
pub const SCENARIO2_PATTERN: [usize; 8] = [100, 200, 50, 250, 150, 100, 250, 50];
pub const SCENARIO2_PERIOD: SimTime = 50.0;

pub fn build_scenario(name: &str, overrides: &ScenarioOverrides) -> Result<ScenarioSpec, ScenarioError> {
    let base = |name: &str, duration, schedule, rtt_model| ScenarioSpec {
        name: name.to_owned(),
        duration,
        bottleneck_bw: DEFAULT_BOTTLENECK_BW,
        bottleneck_prop: DEFAULT_BOTTLENECK_PROP,
        access_bw: DEFAULT_ACCESS_BW,
        flow_schedule: schedule,
        rtt_model,
        aqm: AqmSpec {
            name: DisciplineKind::Red,
            params: AqmParams::default(),
        },
        seed: DEFAULT_SEED,
        packet_size: crate::engine::DEFAULT_PACKET_SIZE,
        max_window: crate::tcp::DEFAULT_MAX_WINDOW,
    };
    let fixed = RttModel::Fixed { rtt: DEFAULT_RTT };
    let mut spec = match name {
        "train" => {
            let mut s = base(name, 600.0, staircase(&[(0.0, 8)]), RttModel::Fixed { rtt: TRAIN_RTT });
            s.aqm.name = DisciplineKind::Kred;
            s
        }
        "scenario1" => base(
            name,
            500.0,
            staircase(&[(0.0, 50), (100.0, 100), (200.0, 150), (300.0, 200), (400.0, 250)]),
            fixed,
        ),
        "scenario2" => {
            let steps: Vec<(SimTime, usize)> = SCENARIO2_PATTERN
                .iter()
                .enumerate()
                .map(|(i, &n)| (i as f64 * SCENARIO2_PERIOD, n))
                .collect();
            base(
                name,
                SCENARIO2_PERIOD * SCENARIO2_PATTERN.len() as f64,
                staircase(&steps),
                RttModel::Uniform { lo: 0.064, hi: 0.102 },
            )
        }
        "custom" => {
            if overrides.flow_schedule.is_none() {
                return Err(ScenarioError::Invalid(
                    "custom scenario needs a flow_schedule".into(),
                ));
            }
            base(name, 100.0, Vec::new(), fixed)
        }
        other => return Err(ScenarioError::UnknownScenario(other.to_owned())),
    };

    let o = overrides;
    if let Some(v) = o.duration {
        spec.duration = v;
    }
    if let Some(v) = o.bottleneck_bw {
        spec.bottleneck_bw = v;
    }
    if let Some(v) = o.bottleneck_prop {
        spec.bottleneck_prop = v;
    }
    if let Some(v) = o.access_bw {
        spec.access_bw = v;
    }
    if let Some(v) = &o.flow_schedule {
        spec.flow_schedule = v.clone();
    }
    if let Some(v) = o.rtt_model {
        spec.rtt_model = v;
    }
    if let Some(v) = &o.aqm {
        spec.aqm = v.clone();
    }
    if let Some(v) = o.seed {
        spec.seed = v;
    }
    if let Some(v) = o.packet_size {
        spec.packet_size = v;
    }
    if let Some(v) = o.max_window {
        spec.max_window = v;
    }
    spec.validate()?;
    Ok(spec)
}

impl ScenarioSpec {
    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: String| Err(ScenarioError::Invalid(m));
        if !(self.duration.is_finite() && self.duration >= 0.0) {
            return bad(format!("duration must be non-negative, got {}", self.duration));
        }
        if !(self.bottleneck_bw > 0.0 && self.access_bw > 0.0) {
            return bad("bandwidths must be positive".into());
        }
        if self.packet_size == 0 {
            return bad("packet_size must be positive".into());
        }
        if self.max_window < 1.0 {
            return bad("max_window must be at least one packet".into());
        }
        if let Some(first) = self.flow_schedule.first() {
            if first.time != 0.0 {
                return bad("flow_schedule must start at t = 0".into());
            }
        }
        if self
            .flow_schedule
            .windows(2)
            .any(|w| !(w[1].time > w[0].time))
        {
            return bad("flow_schedule times must be strictly increasing".into());
        }
        match self.rtt_model {
            RttModel::Fixed { rtt } if !(rtt > 0.0) => bad(format!("rtt must be positive, got {rtt}")),
            RttModel::Uniform { lo, hi } if !(lo > 0.0 && lo <= hi) => {
                bad(format!("rtt bounds must satisfy 0 < lo <= hi, got [{lo}, {hi}]"))
            }
            _ => Ok(()),
        }?;
        for rtt in self.flow_rtts() {
            if rtt < 2.0 * self.bottleneck_prop {
                return bad(format!(
                    "rtt {rtt} s is shorter than twice the bottleneck delay"
                ));
            }
        }
        Ok(())
    }

    /// Largest number of simultaneously active flows.
    pub fn flow_slots(&self) -> usize {
        self.flow_schedule.iter().map(|s| s.flows).max().unwrap_or(0)
    }

    /// Round-trip propagation time of every flow slot; reproducible per seed.
    pub fn flow_rtts(&self) -> Vec<SimTime> {
        let n = self.flow_slots();
        match self.rtt_model {
            RttModel::Fixed { rtt } => vec![rtt; n],
            RttModel::Uniform { lo, hi } => {
                let mut rng = SimRng::substream(self.seed, 0x0072_7474);
                (0..n).map(|_| rng.uniform_range(lo, hi)).collect()
            }
        }
    }

    pub fn network_config(&self) -> Result<NetworkConfig, ScenarioError> {
        let flows = self
            .flow_rtts()
            .into_iter()
            .map(|rtt| FlowPath::for_rtt(rtt, self.bottleneck_prop))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(NetworkConfig {
            bottleneck: Link::new(self.bottleneck_bw, self.bottleneck_prop)
                .map_err(|e| ScenarioError::Invalid(e.to_string()))?,
            access_bw: self.access_bw,
            flows,
            schedule: self.flow_schedule.iter().map(|s| (s.time, s.flows)).collect(),
            packet_size: self.packet_size,
            max_window: self.max_window,
            seed: self.seed,
        })
    }

    pub fn with_aqm(&self, name: DisciplineKind) -> Self {
        let mut s = self.clone();
        s.aqm.name = name;
        s
    }
}

/// Runs one scenario end to end. KRED needs a trained map.
pub fn run_scenario(spec: &ScenarioSpec, map: Option<Arc<SomMap>>) -> Result<RunMetrics, ScenarioError> {
    spec.validate()?;
    let discipline = Discipline::build(spec.aqm.name, &spec.aqm.params, map)?;
    let mut sim = Simulation::new(spec.network_config()?, discipline)?;
    sim.run_until(spec.duration)?;
    Ok(sim.metrics(&spec.name, spec.aqm.name.name()))
}

/// Runs the five compared AQMs on one scenario, concurrently, and returns
/// their metrics in a fixed order.
pub fn run_comparison(spec: &ScenarioSpec, map: Arc<SomMap>) -> Result<Vec<RunMetrics>, ScenarioError> {
    DisciplineKind::COMPARED
        .par_iter()
        .map(|&k| run_scenario(&spec.with_aqm(k), Some(map.clone())))
        .collect()
}

pub fn emit_timeseries(metrics: &RunMetrics, path: impl AsRef<Path>) -> Result<(), ScenarioError> {
    write_file(path.as_ref(), &metrics.timeseries_csv())
}

pub fn emit_summary<'a>(
    runs: impl IntoIterator<Item = &'a RunMetrics>,
    path: impl AsRef<Path>,
) -> Result<(), ScenarioError> {
    write_file(path.as_ref(), &summary_csv(runs))
}

pub(crate) fn write_file(path: &Path, contents: &str) -> Result<(), ScenarioError> {
    fs::write(path, contents).map_err(|source| ScenarioError::Io {
        path: path.to_path_buf(),
        source,
    })
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub map: SomMap,
    /// Simulated time at which the convergence test first passed.
    pub converged_at: Option<SimTime>,
    pub log: Vec<TrainLogRow>,
    pub metrics: RunMetrics,
}

impl TrainOutcome {
    pub fn converged(&self) -> bool {
        self.converged_at.is_some()
    }

    pub fn log_csv(&self) -> String {
        use std::fmt::Write as _;
        let mut out = String::from("time_s,avg_queue_pkts,applied_max_p,teacher_max_p\n");
        for r in &self.log {
            let _ = writeln!(
                out,
                "{:.1},{:.6},{:.6},{:.6}",
                r.time, r.avg, r.applied_max_p, r.teacher
            );
        }
        out
    }
}

/// Trains a fresh map online on `spec` (normally the 8-flow training
/// scenario). The map is frozen once the average queue passes the
/// convergence test; if that never happens the map comes back unfrozen and
/// `converged_at` is `None`.
pub fn kred_train(spec: &ScenarioSpec, cfg: &TrainConfig) -> Result<TrainOutcome, ScenarioError> {
    spec.validate()?;
    cfg.validate().map_err(ScenarioError::Invalid)?;
    let params = &spec.aqm.params;
    let red = params.red_params(DisciplineKind::Kred)?;
    let bounds = params.bounds()?;
    let map = Arc::new(initial_map(cfg, &bounds, spec.seed));
    let state = KredState::new(map, red, bounds, params.kred_input.unwrap_or_default());
    let queue = KredQueue::training(state, cfg);

    let mut sim = Simulation::new(spec.network_config()?, Discipline::Kred(queue))?;
    sim.run_until(spec.duration)?;
    let metrics = sim.metrics(&spec.name, "kred");
    let Discipline::Kred(queue) = sim.into_discipline() else {
        unreachable!("training always runs a KRED queue")
    };
    Ok(TrainOutcome {
        converged_at: queue.converged_at(),
        log: queue.training_log().to_vec(),
        map: Arc::unwrap_or_clone(queue.state.map),
        metrics,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn presets() {
        let t = build_scenario("train", &ScenarioOverrides::default()).unwrap();
        assert_eq!(t.flow_schedule, vec![FlowStep { time: 0.0, flows: 8 }]);
        assert_eq!(t.duration, 600.0);

        let s1 = build_scenario("scenario1", &ScenarioOverrides::default()).unwrap();
        assert_eq!(s1.flow_schedule.first().unwrap().flows, 50);
        assert_eq!(s1.flow_schedule.last().unwrap().flows, 250);
        let rtts = s1.flow_rtts();
        assert!(rtts.iter().all(|&r| r == rtts[0]));

        let s2 = build_scenario("scenario2", &ScenarioOverrides::default()).unwrap();
        let rtts = s2.flow_rtts();
        assert_eq!(rtts.len(), 250);
        assert!(rtts.iter().all(|&r| (0.064..=0.102).contains(&r)));
        assert!(s2.flow_schedule.windows(2).all(|w| w[1].time - w[0].time == 50.0));
    }

    #[test]
    fn rtt_draws_reproducible() {
        let a = build_scenario("scenario2", &ScenarioOverrides::default()).unwrap();
        let b = build_scenario("scenario2", &ScenarioOverrides::default()).unwrap();
        assert_eq!(a.flow_rtts(), b.flow_rtts());
        let c = build_scenario(
            "scenario2",
            &ScenarioOverrides {
                seed: Some(7),
                ..Default::default()
            },
        )
        .unwrap();
        assert_ne!(a.flow_rtts(), c.flow_rtts());
    }

    #[test]
    fn rejects_bad_input() {
        assert!(matches!(
            build_scenario("nope", &ScenarioOverrides::default()),
            Err(ScenarioError::UnknownScenario(_))
        ));
        assert!(build_scenario("custom", &ScenarioOverrides::default()).is_err());
        let o = ScenarioOverrides {
            rtt_model: Some(RttModel::Uniform { lo: 0.1, hi: 0.05 }),
            ..Default::default()
        };
        assert!(build_scenario("scenario2", &o).is_err());
        let o = ScenarioOverrides {
            flow_schedule: Some(staircase(&[(0.0, 1), (5.0, 2), (5.0, 3)])),
            ..Default::default()
        };
        assert!(build_scenario("custom", &o).is_err());
        let o = ScenarioOverrides {
            flow_schedule: Some(staircase(&[(1.0, 1)])),
            ..Default::default()
        };
        assert!(build_scenario("custom", &o).is_err());
    }

    #[test]
    fn config_file_parses() {
        let text = r#"
            [scenario]
            duration = 20.0
            seed = 9
            flow_schedule = [{ time = 0.0, flows = 3 }, { time = 10.0, flows = 1 }]
            rtt_model = { kind = "uniform", lo = 0.05, hi = 0.09 }

            [scenario.aqm]
            name = "ared"
            params = { alpha = 0.02, interval = 0.5 }

            [train]
            window_secs = 20.0
            learn = { eta_in = 0.2 }
            teacher = { p_base = 0.08 }
        "#;
        let cfg: ConfigFile = toml::from_str(text).unwrap();
        let spec = build_scenario("custom", &cfg.scenario).unwrap();
        assert_eq!(spec.duration, 20.0);
        assert_eq!(spec.aqm.name, DisciplineKind::Ared);
        assert_eq!(spec.aqm.params.alpha, Some(0.02));
        assert_eq!(cfg.train.learn.eta_in, 0.2);
        assert_eq!(cfg.train.learn.eta_out, 0.3);
        assert_eq!(cfg.train.teacher.p_base, 0.08);
        assert!(toml::from_str::<ConfigFile>("[scenario]\nbogus = 1").is_err());
    }

    #[test]
    fn empty_schedule_yields_no_traffic() {
        let o = ScenarioOverrides {
            flow_schedule: Some(Vec::new()),
            duration: Some(5.0),
            ..Default::default()
        };
        let mut spec = build_scenario("scenario1", &o).unwrap();
        spec.aqm.name = DisciplineKind::DropTail;
        let m = run_scenario(&spec, None).unwrap();
        assert_eq!(m.mean_tput_bps, 0.0);
        assert_eq!(m.delay_samples, 0);
        assert_eq!(m.series.len(), 51);
    }

    #[test]
    fn kred_run_requires_map() {
        let spec = build_scenario("scenario1", &ScenarioOverrides::default())
            .unwrap()
            .with_aqm(DisciplineKind::Kred);
        assert!(matches!(
            run_scenario(&spec, None),
            Err(ScenarioError::Aqm(AqmConfigError::MissingMap))
        ));
    }
}
