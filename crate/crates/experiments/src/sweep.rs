//! Grids of runs over one config key, resumable and run in a worker pool.

use std::path::{Path, PathBuf};

use rayon::prelude::*;

use crate::config::{ExperimentConfig, Mode};
use crate::error::{ExpError, Result};
use crate::output::{reader, write_rows};
use crate::run::{run, RunOptions, Summary, SUMMARY_FILE};

pub const SWEEP_FILE: &str = "sweep.csv";

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub value: toml::Value,
    pub mode: Mode,
    pub seed: u64,
}

/// Text form of a swept value, used in directory names and CSV cells.
pub fn value_label(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

pub fn points(cfg: &ExperimentConfig) -> Result<Vec<SweepPoint>> {
    if cfg.sweep_key.is_none() {
        return Err(ExpError::Config("sweep needs sweep_key and sweep_values".into()));
    }
    if cfg.sweep_modes.is_empty() {
        return Err(ExpError::Config("sweep_modes is empty".into()));
    }
    let seeds = if cfg.sweep_seeds.is_empty() { vec![cfg.seed()] } else { cfg.sweep_seeds.clone() };
    let mut out = Vec::new();
    for value in &cfg.sweep_values {
        for &mode in &cfg.sweep_modes {
            for &seed in &seeds {
                out.push(SweepPoint {
                    value: value.clone(),
                    mode,
                    seed,
                });
            }
        }
    }
    Ok(out)
}

pub fn point_dir(root: &Path, key: &str, p: &SweepPoint) -> PathBuf {
    root.join("points")
        .join(format!("{key}={}", value_label(&p.value)))
        .join(p.mode.as_str())
        .join(format!("seed-{}", p.seed))
}

/// The config of one point: the swept key and the seed replaced, the sweep
/// itself removed.
pub fn point_config(cfg: &ExperimentConfig, p: &SweepPoint) -> Result<ExperimentConfig> {
    let key = cfg.sweep_key.as_deref().unwrap_or_default();
    let mut c = cfg.with_value(key, p.value.clone())?;
    c.seed = Some(p.seed);
    c.sweep_key = None;
    c.sweep_values.clear();
    c.sweep_modes.clear();
    c.sweep_seeds.clear();
    c.validate()?;
    Ok(c)
}

pub fn read_summary(path: &Path) -> Result<Summary> {
    reader(path)?
        .deserialize()
        .next()
        .ok_or_else(|| ExpError::Config(format!("{} has no rows", path.display())))?
        .map_err(Into::into)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepOutcome {
    pub summaries: Vec<Summary>,
    pub ran: usize,
    pub skipped: usize,
}

/// Runs every point lacking a `summary.csv`, then writes `sweep.csv`.
pub fn sweep(cfg: &ExperimentConfig, out: &Path, opts: &RunOptions) -> Result<SweepOutcome> {
    let key = cfg.sweep_key.clone().unwrap_or_default();
    let points = points(cfg)?;
    let opts = RunOptions {
        cache_dir: opts.cache_dir.clone().or_else(|| Some(out.join("cache"))),
        ..opts.clone()
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| ExpError::Config(e.to_string()))?;
    let results: Vec<Result<(Summary, bool)>> = pool.install(|| {
        points
            .par_iter()
            .map(|p| {
                let dir = point_dir(out, &key, p);
                let done = dir.join(SUMMARY_FILE);
                if done.exists() {
                    return Ok((read_summary(&done)?, false));
                }
                let point_cfg = point_config(cfg, p)?;
                let point_opts = RunOptions {
                    sweep: Some((key.clone(), value_label(&p.value))),
                    ..opts.clone()
                };
                Ok((run(&point_cfg, p.mode, &dir, &point_opts)?, true))
            })
            .collect()
    });
    let mut summaries = Vec::with_capacity(results.len());
    let mut ran = 0;
    for r in results {
        let (s, fresh) = r?;
        ran += usize::from(fresh);
        summaries.push(s);
    }
    write_rows(&out.join(SWEEP_FILE), cfg, &summaries)?;
    Ok(SweepOutcome {
        skipped: summaries.len() - ran,
        summaries,
        ran,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg() -> ExperimentConfig {
        ExperimentConfig::parse(
            "seed = 2\nnum_files = 2\nnum_sbs = 2\ncache_capacity = 1.0\nnum_updates = 1\naggregate_rate = 4.0\n\
             eval_episodes = 1\neval_requests = 100\ngrid_step = 0.5\noracle_traces = 1\noracle_requests = 200\n\
             sweep_key = \"update_cost\"\nsweep_values = [0.0, 0.5]\nsweep_modes = [\"oracle\", \"sync-oracle\"]\nsweep_seeds = [1, 2]",
            &[],
        )
        .unwrap()
    }

    #[test]
    fn enumerates_every_combination() {
        let p = points(&cfg()).unwrap();
        assert_eq!(p.len(), 8);
        let c = point_config(&cfg(), &p[7]).unwrap();
        assert_eq!((c.update_cost, c.seed), (0.5, Some(2)));
        assert!(c.sweep_key.is_none());
    }

    #[test]
    fn resumes_completed_points() {
        let dir = tempfile::tempdir().unwrap();
        let first = sweep(&cfg(), dir.path(), &RunOptions::default()).unwrap();
        assert_eq!((first.ran, first.skipped), (8, 0));
        let second = sweep(&cfg(), dir.path(), &RunOptions::default()).unwrap();
        assert_eq!((second.ran, second.skipped), (0, 8));
        assert_eq!(first.summaries, second.summaries);
        let s = &first.summaries[0];
        assert_eq!((s.sweep_key.as_str(), s.sweep_value.as_str()), ("update_cost", "0.0"));
    }

    #[test]
    fn needs_modes() {
        let c = cfg().with_value("sweep_modes", toml::Value::Array(vec![])).unwrap();
        assert!(points(&c).is_err());
    }
}
