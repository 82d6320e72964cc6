//! Flat, strict experiment configuration.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sttl_core::env::CachingParams;
use sttl_core::oracle::{Constraint, OracleObjective, PolicyGrid};
use sttl_core::{Costs, Placement, ScenarioConfig};
use sttl_ddpg::{DdpgConfig, NoiseSchedule};

use crate::error::{ExpError, Result};

/// What a run (or a sweep point) computes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    Sarl,
    Marl,
    /// Grid-search oracle over lockstep tables.
    Oracle,
    /// Best lockstep table under a hard capacity bound.
    SyncOracle,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Sarl => "sarl",
            Mode::Marl => "marl",
            Mode::Oracle => "oracle",
            Mode::SyncOracle => "sync-oracle",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Mode {
    type Err = ExpError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sarl" => Ok(Mode::Sarl),
            "marl" => Ok(Mode::Marl),
            "oracle" => Ok(Mode::Oracle),
            "sync-oracle" => Ok(Mode::SyncOracle),
            other => Err(ExpError::Config(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridConstraint {
    Box,
    Monotone,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum GridObjective {
    Penalized,
    Ledger,
}

/// Every knob of a run. Keys are flat so that a config file, a `--set`
/// override and the echo at the top of every result file share one syntax.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub name: String,
    pub seed: Option<u64>,

    pub num_files: usize,
    pub num_sbs: usize,
    pub comm_range: f64,
    pub cache_capacity: f64,
    pub zipf_alpha: f64,
    pub weibull_shape: f64,
    pub aggregate_rate: f64,
    pub zeta: Placement,

    pub update_period: f64,
    pub num_updates: usize,
    pub update_cost: f64,
    pub sbs_cost: f64,

    pub episodes: usize,
    pub episode_requests: usize,
    /// Final episodes over which exploration decays to zero.
    pub anneal_episodes: usize,
    pub marl_anneal: bool,
    pub eval_episodes: usize,
    pub eval_requests: usize,
    pub moving_average_window: usize,

    pub hidden: Vec<usize>,
    pub actor_learning_rate: f64,
    pub critic_learning_rate: f64,
    pub discount: f64,
    pub polyak: f64,
    pub buffer_capacity: usize,
    pub batch_size: usize,
    pub noise_variance: f64,
    pub final_layer_scale: f64,

    pub grid_step: f64,
    pub grid_constraint: GridConstraint,
    pub grid_objective: GridObjective,
    pub grid_budget: u64,
    pub hard_capacity: bool,
    pub oracle_traces: usize,
    pub oracle_requests: usize,
    /// Also run the oracle after training and report the gap.
    pub compare_oracle: bool,

    /// Published normalized load this run is compared against.
    pub reference_load: Option<f64>,
    /// Pass threshold on evaluation normalized load.
    pub load_limit: Option<f64>,
    /// Pass threshold on the relative gap to the oracle objective.
    pub oracle_gap_limit: Option<f64>,

    pub sweep_key: Option<String>,
    pub sweep_values: Vec<toml::Value>,
    pub sweep_modes: Vec<Mode>,
    pub sweep_seeds: Vec<u64>,
    pub workers: usize,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let scenario = ScenarioConfig::default();
        let ddpg = DdpgConfig::default();
        Self {
            name: "run".into(),
            seed: None,
            num_files: scenario.num_files,
            num_sbs: scenario.num_sbs,
            comm_range: scenario.comm_range,
            cache_capacity: scenario.cache_capacity,
            zipf_alpha: scenario.zipf_alpha,
            weibull_shape: scenario.weibull_shape,
            aggregate_rate: scenario.aggregate_rate,
            zeta: scenario.zeta,
            update_period: 0.5,
            num_updates: 2,
            update_cost: 0.05,
            sbs_cost: 0.0,
            episodes: 6000,
            episode_requests: 1000,
            anneal_episodes: 1000,
            marl_anneal: false,
            eval_episodes: 10,
            eval_requests: 10_000,
            moving_average_window: 500,
            hidden: ddpg.hidden,
            actor_learning_rate: ddpg.actor_learning_rate,
            critic_learning_rate: ddpg.critic_learning_rate,
            discount: ddpg.discount,
            polyak: ddpg.polyak,
            buffer_capacity: ddpg.buffer_capacity,
            batch_size: ddpg.batch_size,
            noise_variance: ddpg.noise_variance,
            final_layer_scale: ddpg.final_layer_scale,
            grid_step: 0.05,
            grid_constraint: GridConstraint::Box,
            grid_objective: GridObjective::Penalized,
            grid_budget: 1_000_000,
            hard_capacity: false,
            oracle_traces: 4,
            oracle_requests: 20_000,
            compare_oracle: false,
            reference_load: None,
            load_limit: None,
            oracle_gap_limit: None,
            sweep_key: None,
            sweep_values: Vec::new(),
            sweep_modes: Vec::new(),
            sweep_seeds: Vec::new(),
            workers: 1,
        }
    }
}

/// Parses `value` as a TOML value, falling back to a bare string.
pub fn parse_value(value: &str) -> toml::Value {
    let doc = format!("v = {value}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t.remove("v").unwrap_or_else(|| toml::Value::String(value.into())),
        Err(_) => toml::Value::String(value.into()),
    }
}

impl ExperimentConfig {
    /// Parses a config document, applies `key=value` overrides, and checks
    /// the result.
    pub fn parse(text: &str, overrides: &[(String, String)]) -> Result<Self> {
        let mut table: toml::Table = text.parse().map_err(|e: toml::de::Error| ExpError::Config(e.to_string()))?;
        for (key, value) in overrides {
            table.insert(key.clone(), parse_value(value));
        }
        Self::from_table(table)
    }

    pub fn from_table(table: toml::Table) -> Result<Self> {
        let cfg: Self = table.try_into().map_err(|e: toml::de::Error| ExpError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Loads a config file. Result files are accepted too: their `# ` echo
    /// lines are the config.
    pub fn load(path: &Path, overrides: &[(String, String)]) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        if is_result_file(&text) {
            Self::parse(&extract_echo(&text), overrides)
        } else {
            Self::parse(&text, overrides)
        }
    }

    /// Returns a copy with one key replaced.
    pub fn with_value(&self, key: &str, value: toml::Value) -> Result<Self> {
        let mut table = match toml::Value::try_from(self).map_err(|e| ExpError::Config(e.to_string()))? {
            toml::Value::Table(t) => t,
            _ => unreachable!("a struct serializes to a table"),
        };
        if !table.contains_key(key) && !Self::optional_keys().contains(&key) {
            return Err(ExpError::Config(format!("unknown key {key:?}")));
        }
        table.insert(key.into(), value);
        Self::from_table(table)
    }

    fn optional_keys() -> &'static [&'static str] {
        &["seed", "reference_load", "load_limit", "oracle_gap_limit", "sweep_key"]
    }

    pub fn validate(&self) -> Result<()> {
        let seed = self.seed.ok_or_else(|| ExpError::Config("seed is required".into()))?;
        self.scenario_with_seed(seed).validate()?;
        self.caching_params().validate()?;
        let positive = [
            ("episode_requests", self.episode_requests),
            ("eval_episodes", self.eval_episodes),
            ("eval_requests", self.eval_requests),
            ("moving_average_window", self.moving_average_window),
            ("batch_size", self.batch_size),
            ("buffer_capacity", self.buffer_capacity),
            ("oracle_traces", self.oracle_traces),
            ("oracle_requests", self.oracle_requests),
            ("workers", self.workers),
        ];
        for (key, v) in positive {
            if v == 0 {
                return Err(ExpError::Config(format!("{key} must be positive")));
            }
        }
        if self.anneal_episodes > self.episodes {
            return Err(ExpError::Config("anneal_episodes exceeds episodes".into()));
        }
        if self.hidden.is_empty() || self.hidden.contains(&0) {
            return Err(ExpError::Config("hidden layers must be non-empty and positive".into()));
        }
        if self.sweep_key.is_some() != !self.sweep_values.is_empty() {
            return Err(ExpError::Config("sweep_key and sweep_values go together".into()));
        }
        Ok(())
    }

    pub fn seed(&self) -> u64 {
        self.seed.expect("validated config has a seed")
    }

    fn scenario_with_seed(&self, seed: u64) -> ScenarioConfig {
        ScenarioConfig {
            num_files: self.num_files,
            num_sbs: self.num_sbs,
            comm_range: self.comm_range,
            cache_capacity: self.cache_capacity,
            zipf_alpha: self.zipf_alpha,
            weibull_shape: self.weibull_shape,
            aggregate_rate: self.aggregate_rate,
            zeta: self.zeta,
            seed,
        }
    }

    pub fn scenario(&self) -> ScenarioConfig {
        self.scenario_with_seed(self.seed())
    }

    pub fn caching_params(&self) -> CachingParams {
        CachingParams {
            capacity: self.cache_capacity,
            period: self.update_period,
            num_updates: self.num_updates,
            costs: Costs {
                sbs: self.sbs_cost,
                update: self.update_cost,
            },
        }
    }

    pub fn ddpg(&self, seed: u64) -> DdpgConfig {
        DdpgConfig {
            hidden: self.hidden.clone(),
            actor_learning_rate: self.actor_learning_rate,
            critic_learning_rate: self.critic_learning_rate,
            discount: self.discount,
            polyak: self.polyak,
            buffer_capacity: self.buffer_capacity,
            batch_size: self.batch_size,
            noise_variance: self.noise_variance,
            final_layer_scale: self.final_layer_scale,
            seed,
        }
    }

    pub fn schedule(&self, mode: Mode) -> NoiseSchedule {
        if mode == Mode::Marl && !self.marl_anneal {
            NoiseSchedule::Constant
        } else {
            NoiseSchedule::AnnealTail {
                episodes: self.anneal_episodes,
            }
        }
    }

    pub fn grid(&self) -> PolicyGrid {
        PolicyGrid {
            step: self.grid_step,
            constraint: match self.grid_constraint {
                GridConstraint::Box => Constraint::Box,
                GridConstraint::Monotone => Constraint::Monotone,
            },
            objective: match self.grid_objective {
                GridObjective::Penalized => OracleObjective::Penalized,
                GridObjective::Ledger => OracleObjective::Ledger,
            },
            hard_capacity: self.hard_capacity,
            budget: self.grid_budget,
        }
    }

    /// The resolved config as TOML.
    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| ExpError::Config(e.to_string()))
    }

    /// The resolved config as `# `-prefixed lines.
    pub fn echo(&self) -> Result<String> {
        Ok(self.to_toml()?.lines().map(|l| format!("# {l}\n")).collect())
    }
}

fn is_result_file(text: &str) -> bool {
    text.starts_with(crate::output::STAMP_PREFIX)
}

/// The config echoed at the top of a result file.
pub fn extract_echo(text: &str) -> String {
    text.lines()
        .skip_while(|l| l.starts_with(crate::output::STAMP_PREFIX))
        .take_while(|l| l.starts_with('#'))
        .map(|l| l.strip_prefix("# ").unwrap_or(l.trim_start_matches('#')))
        .collect::<Vec<_>>()
        .join("\n")
}

/// Splits `key=value`.
pub fn parse_override(s: &str) -> Result<(String, String)> {
    let (k, v) = s
        .split_once('=')
        .ok_or_else(|| ExpError::Config(format!("expected key=value, got {s:?}")))?;
    Ok((k.trim().to_owned(), v.trim().to_owned()))
}
