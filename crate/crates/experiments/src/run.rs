//! Training, evaluation and oracle runs, and the files they leave behind.

use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sttl_core::env::{write_step_log, CachingParams};
use sttl_core::oracle::{constrained_search, evaluate_sync, grid_search, ResultCache, TablePolicy, Termination};
use sttl_core::{generate_trace, Horizon, LedgerReport, LoadLedger, MarlEnv, Placement, RequestTrace, SarlEnv};
use sttl_ddpg::{train, train_multi, Checkpoint, DdpgAgent, EpisodeRecord, Mlp};

use crate::config::{ExperimentConfig, Mode};
use crate::error::{ExpError, Result};
use crate::output::{write_atomic, write_rows, write_with};
use crate::seeds::{self, Stream};
use crate::stats::moving_average;

pub const TRAINING_FILE: &str = "training.csv";
pub const EVALUATION_FILE: &str = "evaluation.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const POLICY_FILE: &str = "policy.json";
pub const STEPS_FILE: &str = "steps.csv";
pub const BOARD_FILE: &str = "board.csv";

fn trace(cfg: &ExperimentConfig, stream: Stream, index: usize, requests: usize) -> sttl_core::Result<Arc<RequestTrace>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seeds::derive(cfg.seed(), stream, index as u64));
    Ok(Arc::new(generate_trace(&cfg.scenario(), Horizon::Requests(requests), &mut rng)?))
}

pub fn training_trace(cfg: &ExperimentConfig, episode: usize) -> sttl_core::Result<Arc<RequestTrace>> {
    trace(cfg, Stream::Training, episode, cfg.episode_requests)
}

pub fn evaluation_traces(cfg: &ExperimentConfig) -> Result<Vec<Arc<RequestTrace>>> {
    (0..cfg.eval_episodes)
        .map(|i| Ok(trace(cfg, Stream::Evaluation, i, cfg.eval_requests)?))
        .collect()
}

pub fn oracle_traces(cfg: &ExperimentConfig) -> Result<Vec<Arc<RequestTrace>>> {
    (0..cfg.oracle_traces)
        .map(|i| Ok(trace(cfg, Stream::Oracle, i, cfg.oracle_requests)?))
        .collect()
}

/// A trained or computed policy with the config that produced it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyFile {
    pub format: String,
    pub version: u32,
    pub mode: Mode,
    pub config: ExperimentConfig,
    /// One network checkpoint per agent; empty for tables.
    pub agents: Vec<Checkpoint>,
    pub table: Option<TablePolicy>,
}

impl PolicyFile {
    pub const FORMAT: &'static str = "sttl-policy";
    pub const VERSION: u32 = 1;

    fn networks(mode: Mode, config: &ExperimentConfig, agents: Vec<Checkpoint>) -> Self {
        Self {
            format: Self::FORMAT.into(),
            version: Self::VERSION,
            mode,
            config: config.clone(),
            agents,
            table: None,
        }
    }

    fn table(mode: Mode, config: &ExperimentConfig, table: TablePolicy) -> Self {
        Self {
            table: Some(table),
            ..Self::networks(mode, config, Vec::new())
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        write_atomic(path, &serde_json::to_vec(self)?)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let p: Self = serde_json::from_slice(&fs::read(path)?)?;
        if p.format != Self::FORMAT {
            return Err(ExpError::Checkpoint(format!("not a policy file: format {:?}", p.format)));
        }
        if p.version != Self::VERSION {
            return Err(ExpError::Checkpoint(format!("unsupported policy version {}", p.version)));
        }
        let expected = match p.mode {
            Mode::Sarl => 1,
            Mode::Marl => p.config.num_sbs,
            Mode::Oracle | Mode::SyncOracle => 0,
        };
        if p.agents.len() != expected || p.table.is_some() != (expected == 0) {
            return Err(ExpError::Checkpoint(format!("{} policy with {} networks", p.mode, p.agents.len())));
        }
        Ok(p)
    }

    pub fn actors(&self) -> Vec<Mlp> {
        self.agents.iter().map(|c| c.actor.clone()).collect()
    }
}

/// Aggregate score of a policy on the evaluation traces.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    pub ledger: LoadLedger,
    pub report: LedgerReport,
    /// Mean reward per decision, memory penalty included.
    pub penalized: f64,
    pub steps: usize,
}

/// One evaluation episode.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalRow {
    pub episode: usize,
    pub l_mbs: f64,
    pub l_sbs: f64,
    pub l_c: f64,
    pub l: f64,
    pub l_over_omega: f64,
    pub objective: f64,
    pub penalized: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluated {
    pub rows: Vec<EvalRow>,
    pub score: Score,
}

struct Tally {
    rows: Vec<EvalRow>,
    ledger: LoadLedger,
    total_return: f64,
    steps: usize,
}

impl Tally {
    fn new() -> Self {
        Self {
            rows: Vec::new(),
            ledger: LoadLedger::default(),
            total_return: 0.0,
            steps: 0,
        }
    }

    fn push(&mut self, ledger: LoadLedger, total_return: f64, steps: usize, params: &CachingParams) {
        let r = ledger.report(params.costs);
        self.rows.push(EvalRow {
            episode: self.rows.len(),
            l_mbs: r.rate_mbs,
            l_sbs: r.rate_sbs,
            l_c: r.rate_update,
            l: r.load,
            l_over_omega: r.normalized_load,
            objective: r.objective,
            penalized: total_return / steps as f64,
            steps,
        });
        self.ledger += ledger;
        self.total_return += total_return;
        self.steps += steps;
    }

    fn finish(self, params: &CachingParams) -> Evaluated {
        Evaluated {
            rows: self.rows,
            score: Score {
                ledger: self.ledger,
                report: self.ledger.report(params.costs),
                penalized: self.total_return / self.steps as f64,
                steps: self.steps,
            },
        }
    }
}

/// Plays one episode; returns (total reward, steps).
fn sarl_episode(env: &mut SarlEnv, actor: &Mlp) -> Result<(f64, usize)> {
    let mut state = env.reset();
    let (mut total, mut steps) = (0.0, 0);
    loop {
        let s = env.step(&actor.predict(&state))?;
        total += s.parts.reward;
        steps += 1;
        if s.done {
            return Ok((total, steps));
        }
        state = s.next_state;
    }
}

fn marl_episode(env: &mut MarlEnv, actors: &[Mlp]) -> Result<(f64, usize)> {
    env.reset();
    let (mut total, mut steps) = (0.0, 0);
    while let Some(b) = env.next_agent() {
        let action = actors[b].predict(env.observation(b));
        total += env.step(b, &action)?.parts.reward;
        steps += 1;
    }
    Ok((total, steps))
}

pub fn evaluate_sarl(actor: &Mlp, traces: &[Arc<RequestTrace>], params: &CachingParams) -> Result<Evaluated> {
    let mut tally = Tally::new();
    for t in traces {
        let mut env = SarlEnv::new(t.clone(), *params)?;
        let (total, steps) = sarl_episode(&mut env, actor)?;
        tally.push(*env.ledger(), total, steps, params);
    }
    Ok(tally.finish(params))
}

pub fn evaluate_marl(actors: &[Mlp], traces: &[Arc<RequestTrace>], params: &CachingParams) -> Result<Evaluated> {
    let mut tally = Tally::new();
    for t in traces {
        let mut env = MarlEnv::new(t.clone(), *params)?;
        if actors.len() != env.num_agents() {
            return Err(ExpError::Checkpoint(format!("{} actors for {} agents", actors.len(), env.num_agents())));
        }
        let (total, steps) = marl_episode(&mut env, actors)?;
        tally.push(*env.ledger(), total, steps, params);
    }
    Ok(tally.finish(params))
}

pub fn evaluate_table(table: &TablePolicy, traces: &[Arc<RequestTrace>], params: &CachingParams) -> Result<Evaluated> {
    let mut tally = Tally::new();
    for t in traces {
        let e = evaluate_sync(std::slice::from_ref(t), table, params, Termination::Episode)?;
        tally.push(e.ledger, e.penalized * e.steps as f64, e.steps, params);
    }
    Ok(tally.finish(params))
}

pub fn evaluate_policy(policy: &PolicyFile, traces: &[Arc<RequestTrace>], params: &CachingParams) -> Result<Evaluated> {
    match (&policy.table, policy.mode) {
        (Some(table), _) => evaluate_table(table, traces, params),
        (None, Mode::Marl) => evaluate_marl(&policy.actors(), traces, params),
        (None, _) => evaluate_sarl(&policy.actors()[0], traces, params),
    }
}

pub fn train_sarl(cfg: &ExperimentConfig) -> Result<(PolicyFile, Vec<EpisodeRecord>)> {
    let params = cfg.caching_params();
    let ddpg = cfg.ddpg(seeds::derive(cfg.seed(), Stream::Agent, 0));
    let mut agent = DdpgAgent::new(3 * cfg.num_files, params.action_dim(), ddpg);
    let log = train(
        &mut agent,
        |e| SarlEnv::new(training_trace(cfg, e)?, params),
        cfg.episodes,
        cfg.schedule(Mode::Sarl),
    )?;
    Ok((PolicyFile::networks(Mode::Sarl, cfg, vec![agent.checkpoint()]), log))
}

pub fn train_marl(cfg: &ExperimentConfig) -> Result<(PolicyFile, Vec<EpisodeRecord>)> {
    let params = cfg.caching_params();
    let state_dim = 3 * cfg.num_files + cfg.num_sbs - 1;
    let mut agents: Vec<DdpgAgent> = (0..cfg.num_sbs)
        .map(|b| {
            let ddpg = cfg.ddpg(seeds::derive(cfg.seed(), Stream::Agent, b as u64));
            DdpgAgent::new(state_dim, params.action_dim(), ddpg)
        })
        .collect();
    let log = train_multi(
        &mut agents,
        |e| MarlEnv::new(training_trace(cfg, e)?, params),
        cfg.episodes,
        cfg.schedule(Mode::Marl),
    )?;
    let checkpoints = agents.iter().map(DdpgAgent::checkpoint).collect();
    Ok((PolicyFile::networks(Mode::Marl, cfg, checkpoints), log))
}

/// Everything that determines an oracle result.
#[derive(Serialize)]
struct OracleKey<'a> {
    kind: &'static str,
    scenario: sttl_core::ScenarioConfig,
    params: CachingParams,
    grid: sttl_core::PolicyGrid,
    traces: usize,
    requests: usize,
    generator: &'a str,
}

fn oracle_key(cfg: &ExperimentConfig, kind: &'static str) -> OracleKey<'static> {
    OracleKey {
        kind,
        scenario: cfg.scenario(),
        params: cfg.caching_params(),
        grid: cfg.grid(),
        traces: cfg.oracle_traces,
        requests: cfg.oracle_requests,
        generator: "chacha8-splitmix-v1",
    }
}

fn cache_for(dir: Option<&Path>) -> Option<ResultCache> {
    dir.map(ResultCache::new)
}

fn cached<V, F>(cache: Option<&ResultCache>, key: &OracleKey<'_>, compute: F) -> Result<V>
where
    V: Serialize + serde::de::DeserializeOwned,
    F: FnOnce() -> sttl_core::Result<V>,
{
    Ok(match cache {
        Some(c) => c.get_or_compute(key, compute)?,
        None => compute()?,
    })
}

/// Best lockstep table by exhaustive search on the oracle traces.
pub fn grid_oracle(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<TablePolicy> {
    let traces = oracle_traces(cfg)?;
    let params = cfg.caching_params();
    let grid = cfg.grid();
    let cache = cache_for(cache_dir);
    cached(cache.as_ref(), &oracle_key(cfg, "grid"), || {
        Ok(grid_search(&traces, &params, &grid, Termination::Episode)?.table)
    })
}

/// Best lockstep table under the hard capacity bound, on one long trace.
pub fn sync_oracle(cfg: &ExperimentConfig, cache_dir: Option<&Path>) -> Result<TablePolicy> {
    let long = trace(cfg, Stream::Oracle, 0, cfg.oracle_requests * cfg.oracle_traces)?;
    let params = cfg.caching_params();
    let grid = cfg.grid();
    let cache = cache_for(cache_dir);
    cached(cache.as_ref(), &oracle_key(cfg, "constrained"), || {
        Ok(constrained_search(&long, &params, &grid)?.table)
    })
}

/// One row of `summary.csv`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub name: String,
    pub mode: Mode,
    pub seed: u64,
    pub sweep_key: String,
    pub sweep_value: String,
    pub l_over_omega: f64,
    pub objective: f64,
    pub penalized: f64,
    pub l_mbs: f64,
    pub l_sbs: f64,
    pub l_c: f64,
    pub reference_load: Option<f64>,
    pub load_limit: Option<f64>,
    pub oracle_penalized: Option<f64>,
    pub oracle_gap: Option<f64>,
    pub oracle_gap_limit: Option<f64>,
}

impl Summary {
    /// `None` when the row carries no threshold.
    pub fn passed(&self) -> Option<bool> {
        let load = self.load_limit.map(|lim| self.l_over_omega <= lim);
        let gap = match (self.oracle_gap, self.oracle_gap_limit) {
            (Some(g), Some(lim)) => Some(g <= lim),
            (None, Some(_)) => Some(false),
            _ => None,
        };
        match (load, gap) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(true) && b.unwrap_or(true)),
        }
    }
}

/// Published loads of the full-scale lockstep configuration, with the
/// widened limits used to judge a single run.
pub fn published_reference(cfg: &ExperimentConfig, mode: Mode) -> Option<(f64, f64)> {
    let full_scale = mode == Mode::Sarl
        && cfg.num_files == 20
        && cfg.num_sbs == 4
        && cfg.cache_capacity == 4.0
        && cfg.update_cost == 0.05
        && cfg.num_updates == 2
        && cfg.update_period == 0.5
        && cfg.zeta == Placement::Uniform;
    if !full_scale {
        return None;
    }
    if (cfg.comm_range - 1.0).abs() < 1e-9 {
        Some((0.203, 0.25))
    } else if (cfg.comm_range - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9 {
        Some((0.511, 0.57))
    } else {
        None
    }
}

/// Relative shortfall of `value` below `oracle`.
pub fn oracle_gap(value: f64, oracle: f64) -> f64 {
    (oracle - value) / oracle.abs()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
struct TrainingRow {
    episode: usize,
    total_return: f64,
    steps: usize,
    l_over_omega: f64,
    noise_variance: f64,
    return_ma: f64,
    l_over_omega_ma: f64,
}

fn training_rows(log: &[EpisodeRecord], window: usize) -> Vec<TrainingRow> {
    let returns: Vec<f64> = log.iter().map(|r| r.total_return).collect();
    let loads: Vec<f64> = log.iter().map(|r| r.metric).collect();
    let (rm, lm) = (moving_average(&returns, window), moving_average(&loads, window));
    log.iter()
        .enumerate()
        .map(|(i, r)| TrainingRow {
            episode: r.episode,
            total_return: r.total_return,
            steps: r.steps,
            l_over_omega: r.metric,
            noise_variance: r.noise_variance,
            return_ma: rm[i],
            l_over_omega_ma: lm[i],
        })
        .collect()
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Where oracle results are memoized; `None` disables the cache.
    pub cache_dir: Option<PathBuf>,
    /// Label of the sweep point this run belongs to.
    pub sweep: Option<(String, String)>,
    /// Also write a per-step log of the first evaluation episode.
    pub step_log: bool,
}

fn write_step_logs(cfg: &ExperimentConfig, policy: &PolicyFile, trace: &Arc<RequestTrace>, out: &Path) -> Result<()> {
    let params = cfg.caching_params();
    match (&policy.table, policy.mode) {
        (Some(_), _) => Ok(()),
        (None, Mode::Marl) => {
            let mut env = MarlEnv::new(trace.clone(), params)?.with_step_log();
            marl_episode(&mut env, &policy.actors())?;
            write_with(&out.join(STEPS_FILE), cfg, |buf| Ok(write_step_log(env.step_log().unwrap_or(&[]), buf)?))?;
            write_with(&out.join(BOARD_FILE), cfg, |buf| Ok(env.board().write_csv(buf)?))
        }
        (None, _) => {
            let mut env = SarlEnv::new(trace.clone(), params)?.with_step_log();
            sarl_episode(&mut env, &policy.actors()[0])?;
            write_with(&out.join(STEPS_FILE), cfg, |buf| Ok(write_step_log(env.step_log().unwrap_or(&[]), buf)?))
        }
    }
}

/// Scores `policy` on the evaluation traces of `cfg` and writes
/// `evaluation.csv` and `summary.csv` (last, marking the run complete).
pub fn finish_run(cfg: &ExperimentConfig, policy: &PolicyFile, out: &Path, opts: &RunOptions) -> Result<Summary> {
    let traces = evaluation_traces(cfg)?;
    let params = cfg.caching_params();
    let eval = evaluate_policy(policy, &traces, &params)?;
    write_rows(&out.join(EVALUATION_FILE), cfg, &eval.rows)?;
    if opts.step_log {
        write_step_logs(cfg, policy, &traces[0], out)?;
    }

    let oracle_penalized = if cfg.compare_oracle && matches!(policy.mode, Mode::Sarl | Mode::Marl) {
        let table = grid_oracle(cfg, opts.cache_dir.as_deref())?;
        Some(evaluate_table(&table, &traces, &params)?.score.penalized)
    } else {
        None
    };
    let (reference_load, load_limit) = match published_reference(cfg, policy.mode) {
        Some((r, l)) => (cfg.reference_load.or(Some(r)), cfg.load_limit.or(Some(l))),
        None => (cfg.reference_load, cfg.load_limit),
    };
    let (sweep_key, sweep_value) = opts.sweep.clone().unwrap_or_default();
    let s = eval.score;
    let summary = Summary {
        name: cfg.name.clone(),
        mode: policy.mode,
        seed: cfg.seed(),
        sweep_key,
        sweep_value,
        l_over_omega: s.report.normalized_load,
        objective: s.report.objective,
        penalized: s.penalized,
        l_mbs: s.report.rate_mbs,
        l_sbs: s.report.rate_sbs,
        l_c: s.report.rate_update,
        reference_load,
        load_limit,
        oracle_penalized,
        oracle_gap: oracle_penalized.map(|o| oracle_gap(s.penalized, o)),
        oracle_gap_limit: cfg.oracle_gap_limit,
    };
    write_rows(&out.join(SUMMARY_FILE), cfg, std::slice::from_ref(&summary))?;
    Ok(summary)
}

/// Runs `mode` under `cfg`, leaving all result files in `out`.
pub fn run(cfg: &ExperimentConfig, mode: Mode, out: &Path, opts: &RunOptions) -> Result<Summary> {
    fs::create_dir_all(out)?;
    let policy = match mode {
        Mode::Sarl | Mode::Marl => {
            let (policy, log) = if mode == Mode::Sarl { train_sarl(cfg)? } else { train_marl(cfg)? };
            write_rows(&out.join(TRAINING_FILE), cfg, &training_rows(&log, cfg.moving_average_window))?;
            policy
        }
        Mode::Oracle => PolicyFile::table(mode, cfg, grid_oracle(cfg, opts.cache_dir.as_deref())?),
        Mode::SyncOracle => PolicyFile::table(mode, cfg, sync_oracle(cfg, opts.cache_dir.as_deref())?),
    };
    policy.save(&out.join(POLICY_FILE))?;
    finish_run(cfg, &policy, out, opts)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick() -> ExperimentConfig {
        ExperimentConfig::parse(
            "seed = 5\nnum_files = 2\nnum_sbs = 2\ncache_capacity = 1.0\naggregate_rate = 4.0\nnum_updates = 1\n\
             episodes = 3\nanneal_episodes = 1\nepisode_requests = 60\neval_episodes = 2\neval_requests = 200\n\
             hidden = [8, 8]\nbatch_size = 8\nbuffer_capacity = 1000\ngrid_step = 0.5\noracle_traces = 1\noracle_requests = 300",
            &[],
        )
        .unwrap()
    }

    #[test]
    fn evaluation_traces_are_shared_across_modes() {
        let cfg = quick();
        let a = evaluation_traces(&cfg).unwrap();
        let b = evaluation_traces(&cfg.with_value("update_cost", toml::Value::Float(0.5)).unwrap()).unwrap();
        assert_eq!(a[0].requests(), b[0].requests());
        assert_ne!(a[0].requests(), a[1].requests());
    }

    #[test]
    fn runs_write_their_files() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick();
        for mode in [Mode::Sarl, Mode::Marl, Mode::Oracle, Mode::SyncOracle] {
            let out = dir.path().join(mode.as_str());
            let opts = RunOptions {
                step_log: true,
                cache_dir: Some(dir.path().join("cache")),
                ..RunOptions::default()
            };
            let s = run(&cfg, mode, &out, &opts).unwrap();
            assert!(s.l_over_omega.is_finite() && s.l_over_omega >= 0.0);
            assert!(out.join(SUMMARY_FILE).exists() && out.join(EVALUATION_FILE).exists());
            let policy = PolicyFile::load(&out.join(POLICY_FILE)).unwrap();
            assert_eq!(policy.mode, mode);
            let again = evaluate_policy(&policy, &evaluation_traces(&cfg).unwrap(), &cfg.caching_params()).unwrap();
            assert_eq!(again.score.report.normalized_load, s.l_over_omega);
        }
        assert!(dir.path().join("marl").join(BOARD_FILE).exists());
        assert!(dir.path().join("sarl").join(TRAINING_FILE).exists());
    }

    #[test]
    fn zero_table_loads_everything_from_the_mbs() {
        let cfg = quick();
        let traces = evaluation_traces(&cfg).unwrap();
        let e = evaluate_table(&TablePolicy::zero(2, 1), &traces, &cfg.caching_params()).unwrap();
        assert_eq!(e.score.report.normalized_load, 1.0);
        assert_eq!(e.score.report.objective, 0.0);
    }

    #[test]
    fn summary_thresholds() {
        let mut s = Summary {
            name: "x".into(),
            mode: Mode::Sarl,
            seed: 1,
            sweep_key: String::new(),
            sweep_value: String::new(),
            l_over_omega: 0.3,
            objective: 0.7,
            penalized: 0.6,
            l_mbs: 0.0,
            l_sbs: 0.0,
            l_c: 0.0,
            reference_load: None,
            load_limit: None,
            oracle_penalized: None,
            oracle_gap: None,
            oracle_gap_limit: None,
        };
        assert_eq!(s.passed(), None);
        s.load_limit = Some(0.25);
        assert_eq!(s.passed(), Some(false));
        s.load_limit = Some(0.35);
        assert_eq!(s.passed(), Some(true));
        s.oracle_gap_limit = Some(0.05);
        assert_eq!(s.passed(), Some(false));
        s.oracle_gap = Some(0.01);
        assert_eq!(s.passed(), Some(true));
    }

    #[test]
    fn full_scale_references() {
        let cfg = ExperimentConfig::parse("seed = 1\ncomm_range = 1.0", &[]).unwrap();
        assert_eq!(published_reference(&cfg, Mode::Sarl), Some((0.203, 0.25)));
        assert_eq!(published_reference(&cfg, Mode::Marl), None);
        let cfg = ExperimentConfig::parse("seed = 1", &[]).unwrap();
        assert_eq!(published_reference(&cfg, Mode::Sarl), Some((0.511, 0.57)));
    }
}
