//! Command-line front end for the ghostlab simulator.

pub mod config;
pub mod output;

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use ghostlab::scenarios::{self, ScenarioReport};

pub use config::{build, parse_config, parse_config_file, ConfigError, Entries, ExperimentConfig};
pub use output::write_outputs;

/// Environment variable naming the default output directory.
pub const OUT_ENV: &str = "GHOSTLAB_OUT";
const DEFAULT_OUT: &str = "ghostlab_out";

/// Command-line overrides applied on top of the config file.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub frames: Option<u64>,
    pub workers: Option<usize>,
    pub out: Option<PathBuf>,
}

impl Overrides {
    fn apply(&self, e: &mut Entries) -> Result<(), ConfigError> {
        if let Some(v) = self.seed {
            e.set("seed", &v.to_string())?;
        }
        if let Some(v) = self.frames {
            e.set("frames", &v.to_string())?;
        }
        if let Some(v) = self.workers {
            e.set("workers", &v.to_string())?;
        }
        Ok(())
    }
}

/// Loads a config file and applies the overrides.
pub fn load(path: &Path, ov: &Overrides) -> Result<ExperimentConfig> {
    let (mut e, base) = parse_config_file(path)?;
    ov.apply(&mut e)?;
    Ok(build(&e, &base)?)
}

/// Output directory: flag, then config `out`, then `GHOSTLAB_OUT`, then `ghostlab_out`.
pub fn output_dir(cfg: &ExperimentConfig, ov: &Overrides) -> PathBuf {
    ov.out
        .clone()
        .or_else(|| cfg.out.clone())
        .or_else(|| std::env::var_os(OUT_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT))
}

/// Runs one experiment and writes its outputs into `dir`.
pub fn run_experiment(cfg: &ExperimentConfig, dir: &Path) -> Result<ScenarioReport> {
    let report = scenarios::run(&cfg.scenario)
        .with_context(|| format!("running {}", cfg.scenario.scenario))?;
    write_outputs(&report, cfg.scenario.execution.master_seed, dir)?;
    Ok(report)
}

/// Runs the config once per value of `key`, each into `<out>/<key>_<value>`.
pub fn run_sweep(
    path: &Path,
    ov: &Overrides,
    key: &str,
    values: &[String],
) -> Result<Vec<(String, ScenarioReport)>> {
    let (entries, base) = parse_config_file(path)?;
    let mut configs = Vec::with_capacity(values.len());
    for v in values {
        let mut e = entries.clone();
        ov.apply(&mut e)?;
        e.set(key, v)?;
        let cfg = build(&e, &base).with_context(|| format!("{key} = {v}"))?;
        configs.push((v.clone(), cfg));
    }
    let mut out = Vec::with_capacity(configs.len());
    for (v, cfg) in configs {
        let dir = output_dir(&cfg, ov).join(format!("{key}_{}", sanitize(&v)));
        let report = run_experiment(&cfg, &dir)?;
        out.push((v, report));
    }
    Ok(out)
}

fn sanitize(v: &str) -> String {
    v.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '.' || c == '-' { c } else { '_' })
        .collect()
}

/// One line per metric.
pub fn format_report(r: &ScenarioReport) -> String {
    let mut s = String::new();
    for m in &r.metrics {
        s.push_str(&format!(
            "{:<4} {:<48} {:>14.6e}\n",
            if m.passed { "ok" } else { "FAIL" },
            m.name,
            m.value
        ));
    }
    s
}
