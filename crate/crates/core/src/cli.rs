//! Command-line front end.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use crate::aqm::DisciplineKind;
use crate::engine::SimTime;
use crate::kred::TrainConfig;
use crate::metrics::summary_csv;
use crate::scenario::{
    build_scenario, kred_train, run_comparison, run_scenario, ConfigFile, ScenarioOverrides, ScenarioSpec,
    DEFAULT_SEED,
};
use crate::som::{load_map, pole_balance_validate, save_map, SomMap, ValidationConfig};

#[derive(Debug, Parser)]
#[command(name = "aqmlab", version, about = "AQM simulator with a Kohonen-map RED controller")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a KRED map online and write it with its training log.
    Train {
        #[command(flatten)]
        common: CommonArgs,
        /// Output map file; the log goes next to it as `<stem>.train.csv`.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run one scenario with one AQM.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long, value_parser = parse_kind)]
        aqm: DisciplineKind,
        #[arg(long)]
        map_file: Option<PathBuf>,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Run RED, FRED, ARED, PI and KRED on one scenario.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[arg(long)]
        map_file: PathBuf,
        /// Output directory.
        #[arg(long)]
        out: PathBuf,
    },
    /// Check the SOM on the cart-pole task.
    ValidateSom {
        #[arg(long, default_value_t = DEFAULT_SEED)]
        seed: u64,
    },
}

#[derive(Debug, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub scenario: Option<String>,
    /// TOML file with `[scenario]` overrides and `[train]` settings.
    #[arg(long, env = "AQMLAB_CONFIG")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Simulated seconds.
    #[arg(long)]
    pub duration: Option<SimTime>,
    /// Bytes per data packet.
    #[arg(long)]
    pub packet_size: Option<u32>,
}

fn parse_kind(s: &str) -> Result<DisciplineKind, String> {
    s.parse().map_err(|e| format!("{e}"))
}

impl CommonArgs {
    fn config(&self) -> Result<ConfigFile> {
        match &self.config {
            Some(p) => Ok(ConfigFile::load(p)?),
            None => Ok(ConfigFile::default()),
        }
    }

    fn spec(&self, cfg: &ConfigFile, default_scenario: &str) -> Result<ScenarioSpec> {
        let mut ov: ScenarioOverrides = cfg.scenario.clone();
        ov.seed = self.seed.or(ov.seed);
        ov.duration = self.duration.or(ov.duration);
        ov.packet_size = self.packet_size.or(ov.packet_size);
        let name = self.scenario.as_deref().unwrap_or(default_scenario);
        let spec = build_scenario(name, &ov)?;
        spec.validate()?;
        Ok(spec)
    }
}

fn load_frozen(path: &Path) -> Result<Arc<SomMap>> {
    let map = load_map(path).with_context(|| format!("cannot load map file {}", path.display()))?;
    Ok(Arc::new(map))
}

fn out_dir(path: &Path) -> Result<()> {
    fs::create_dir_all(path).with_context(|| format!("cannot create output directory {}", path.display()))
}

fn write(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("cannot write {}", path.display()))
}

pub fn dispatch(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Train { common, out } => {
            let cfg = common.config()?;
            let spec = common.spec(&cfg, "train")?;
            train(&spec, &cfg.train, &out)
        }
        Command::Run {
            common,
            aqm,
            map_file,
            out,
        } => {
            let cfg = common.config()?;
            let spec = common.spec(&cfg, "scenario1")?.with_aqm(aqm);
            let map = match (&map_file, aqm) {
                (Some(p), _) => Some(load_frozen(p)?),
                (None, DisciplineKind::Kred) => bail!("--aqm kred needs --map-file"),
                (None, _) => None,
            };
            out_dir(&out)?;
            let m = run_scenario(&spec, map)?;
            write(&out.join(format!("{}_{}.csv", spec.name, m.aqm)), &m.timeseries_csv())?;
            write(&out.join("summary.csv"), &summary_csv([&m]))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare {
            common,
            map_file,
            out,
        } => {
            let cfg = common.config()?;
            let spec = common.spec(&cfg, "scenario1")?;
            let map = load_frozen(&map_file)?;
            out_dir(&out)?;
            let runs = run_comparison(&spec, map)?;
            for m in &runs {
                write(&out.join(format!("{}_{}.csv", spec.name, m.aqm)), &m.timeseries_csv())?;
            }
            write(&out.join("summary.csv"), &summary_csv(&runs))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::ValidateSom { seed } => {
            let report = pole_balance_validate(&ValidationConfig {
                seed,
                ..ValidationConfig::default()
            });
            println!(
                "untrained mean {:.1} steps, trained mean {:.1} steps, trained min {} of {}",
                report.untrained_mean(),
                report.trained_mean(),
                report.trained_min(),
                report.eval_steps
            );
            if report.passed() {
                println!("PASS");
                Ok(ExitCode::SUCCESS)
            } else {
                println!("FAIL");
                Ok(ExitCode::FAILURE)
            }
        }
    }
}

fn train(spec: &ScenarioSpec, cfg: &TrainConfig, out: &Path) -> Result<ExitCode> {
    if spec.aqm.name != DisciplineKind::Kred {
        bail!("training needs the kred discipline, scenario has {}", spec.aqm.name.name());
    }
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        out_dir(dir)?;
    }
    let outcome = kred_train(spec, cfg)?;
    save_map(&outcome.map, out).with_context(|| format!("cannot write map file {}", out.display()))?;
    let log = out.with_extension("train.csv");
    write(&log, &outcome.log_csv())?;
    match outcome.converged_at {
        Some(t) => println!("converged at {t:.1} s; map written to {}", out.display()),
        None => eprintln!(
            "warning: no convergence within {:.0} s; the unconverged map was written to {}",
            spec.duration,
            out.display()
        ),
    }
    Ok(ExitCode::SUCCESS)
}

pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(2)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
