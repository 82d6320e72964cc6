//! One agent per SBS, each seeing only requests within its range and
//! updating only its own cache. Agents exchange cached amounts through a
//! shared board and are stepped in global real-time order.

use std::io;
use std::sync::Arc;

use sttl_ddpg::{MultiAgentEnvironment, StepResult};

use crate::caching::{update_traffic, CacheState, CachingPolicy};
use crate::env::{encode_state, CachingParams, RewardParts, StepRecord};
use crate::error::{Error, Result};
use crate::ledger::LoadLedger;
use crate::trace::RequestTrace;

/// Latest cached amount each SBS has published for each file.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimateBoard {
    num_files: usize,
    values: Vec<f64>,
}

impl EstimateBoard {
    pub fn new(num_sbs: usize, num_files: usize) -> Self {
        Self {
            num_files,
            values: vec![0.0; num_sbs * num_files],
        }
    }

    pub fn get(&self, sbs: usize, file: usize) -> f64 {
        self.values[sbs * self.num_files + file]
    }

    fn publish(&mut self, sbs: usize, file: usize, value: f64) {
        self.values[sbs * self.num_files + file] = value;
    }

    pub fn num_sbs(&self) -> usize {
        self.values.len() / self.num_files
    }

    /// Rows are SBSs (from 1), columns files.
    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["sbs".to_string()];
        header.extend((1..=self.num_files).map(|f| format!("f{f}")));
        w.write_record(&header)?;
        for b in 0..self.num_sbs() {
            let mut row = vec![(b + 1).to_string()];
            row.extend((0..self.num_files).map(|f| self.get(b, f).to_string()));
            w.write_record(&row)?;
        }
        w.flush()?;
        Ok(())
    }
}

#[derive(Debug, Clone)]
struct Agent {
    trace: RequestTrace,
    start: Option<usize>,
    cache: CacheState,
    cursor: usize,
    done: bool,
    observation: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MarlStep {
    pub next_state: Vec<f64>,
    pub parts: RewardParts,
    pub slot: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct MarlEnv {
    global: Arc<RequestTrace>,
    params: CachingParams,
    agents: Vec<Agent>,
    board: EstimateBoard,
    ledger: LoadLedger,
    recorded: usize,
    first_time: Option<f64>,
    log: Option<Vec<StepRecord>>,
}

impl MarlEnv {
    pub fn new(trace: Arc<RequestTrace>, params: CachingParams) -> Result<Self> {
        params.validate()?;
        let num_files = trace.num_files();
        let agents: Vec<Agent> = (0..trace.num_sbs())
            .map(|b| {
                let filtered = trace.filter_sbs(b);
                Agent {
                    start: filtered.first_with_successor(),
                    trace: filtered,
                    cache: CacheState::cold(num_files),
                    cursor: 0,
                    done: true,
                    observation: Vec::new(),
                }
            })
            .collect();
        if agents.iter().all(|a| a.start.is_none()) {
            return Err(Error::DegenerateTrace("no agent sees a file requested twice".into()));
        }
        let mut env = Self {
            board: EstimateBoard::new(trace.num_sbs(), num_files),
            global: trace,
            params,
            agents,
            ledger: LoadLedger::default(),
            recorded: 0,
            first_time: None,
            log: None,
        };
        env.reset();
        Ok(env)
    }

    pub fn with_step_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn num_agents(&self) -> usize {
        self.agents.len()
    }

    pub fn state_dim(&self) -> usize {
        3 * self.global.num_files() + self.agents.len() - 1
    }

    pub fn action_dim(&self) -> usize {
        self.params.action_dim()
    }

    pub fn board(&self) -> &EstimateBoard {
        &self.board
    }

    pub fn ledger(&self) -> &LoadLedger {
        &self.ledger
    }

    pub fn params(&self) -> &CachingParams {
        &self.params
    }

    pub fn cache(&self, agent: usize) -> &CacheState {
        &self.agents[agent].cache
    }

    pub fn agent_trace(&self, agent: usize) -> &RequestTrace {
        &self.agents[agent].trace
    }

    pub fn is_done(&self, agent: usize) -> bool {
        self.agents[agent].done
    }

    /// Agents with no file requested twice within range never step.
    pub fn is_inert(&self, agent: usize) -> bool {
        self.agents[agent].start.is_none()
    }

    pub fn step_log(&self) -> Option<&[StepRecord]> {
        self.log.as_deref()
    }

    pub fn observation(&self, agent: usize) -> &[f64] {
        &self.agents[agent].observation
    }

    fn neighbour_estimates(&self, agent: usize, file: usize) -> Vec<f64> {
        (0..self.agents.len())
            .filter(|&b| b != agent)
            .map(|b| self.board.get(b, file))
            .collect()
    }

    fn observe_now(&self, agent: usize) -> Vec<f64> {
        let a = &self.agents[agent];
        let file = a.trace.requests()[a.cursor].file;
        encode_state(file, &a.cache, &self.neighbour_estimates(agent, file))
    }

    pub fn reset(&mut self) {
        let num_files = self.global.num_files();
        self.board = EstimateBoard::new(self.agents.len(), num_files);
        self.ledger = LoadLedger::default();
        self.recorded = 0;
        self.first_time = None;
        if let Some(log) = &mut self.log {
            log.clear();
        }
        for a in &mut self.agents {
            a.cache = CacheState::cold(num_files);
            a.cursor = a.start.unwrap_or(0);
            a.done = a.start.is_none();
            a.observation.clear();
        }
        for b in 0..self.agents.len() {
            if !self.agents[b].done {
                self.agents[b].observation = self.observe_now(b);
            }
        }
    }

    /// The live agent whose current request is earliest.
    pub fn next_agent(&self) -> Option<usize> {
        self.agents
            .iter()
            .enumerate()
            .filter(|(_, a)| !a.done)
            .min_by(|(i, a), (j, b)| {
                let ta = a.trace.requests()[a.cursor].time;
                let tb = b.trace.requests()[b.cursor].time;
                ta.total_cmp(&tb).then(i.cmp(j))
            })
            .map(|(i, _)| i)
    }

    /// Records global arrivals up to and including `through`, served from
    /// every SBS in range.
    fn record_arrivals(&mut self, through: usize) {
        let requests = self.global.requests();
        while self.recorded <= through {
            let r = requests[self.recorded];
            let amounts: Vec<f64> = r.coverage.iter().map(|b| self.agents[b].cache.cached()[r.file]).collect();
            self.ledger.record_request(amounts.iter().copied());
            self.first_time.get_or_insert(r.time);
            self.recorded += 1;
        }
    }

    pub fn step(&mut self, agent: usize, action: &[f64]) -> Result<MarlStep> {
        if agent >= self.agents.len() || self.agents[agent].done {
            return Err(if agent < self.agents.len() && !self.is_inert(agent) {
                Error::EpisodeExhausted
            } else {
                Error::AgentNotReady(agent)
            });
        }
        if self.next_agent() != Some(agent) {
            return Err(Error::AgentNotReady(agent));
        }
        if action.len() != self.action_dim() {
            return Err(Error::ActionLength {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let policy = CachingPolicy::from_action(action)?;
        let (request, next_coverage) = {
            let a = &self.agents[agent];
            let r = a.trace.requests()[a.cursor];
            let next = r.next.ok_or(Error::EpisodeExhausted)?;
            (r, a.trace.requests()[next].coverage)
        };
        let tau = request.gap.ok_or(Error::EpisodeExhausted)?;
        self.record_arrivals(request.source_index);

        let applied = self.agents[agent].cache.apply(request.file, &policy, tau, self.params.period)?;
        let others: f64 = next_coverage
            .iter()
            .filter(|&b| b != agent)
            .map(|b| self.board.get(b, request.file))
            .sum();
        let sbs = (applied.cached + others).min(1.0);
        let update = update_traffic(&policy, applied.previous, applied.slot, 1)?;
        self.ledger.record_update(update);
        self.board.publish(agent, request.file, applied.cached);
        let memory = self.agents[agent].cache.memory_penalty(self.params.capacity);
        let parts = RewardParts::new(sbs, update, memory, self.params.costs.update);

        let a = &mut self.agents[agent];
        a.cursor += 1;
        a.done = a.trace.requests()[a.cursor].is_last_for_file();
        let now = a.trace.requests()[a.cursor].time;
        let next_state = self.observe_now(agent);
        self.agents[agent].observation = next_state.clone();
        let done = self.agents[agent].done;
        if let Some(first) = self.first_time {
            self.ledger.elapsed = self.ledger.elapsed.max(now - first);
        }
        if let Some(log) = &mut self.log {
            log.push(StepRecord {
                step: log.len(),
                agent,
                time: request.time,
                file: request.file,
                slot: applied.slot,
                action: policy.fractions().to_vec(),
                parts,
                done,
            });
        }
        Ok(MarlStep {
            next_state,
            parts,
            slot: applied.slot,
            done,
        })
    }
}

impl MultiAgentEnvironment for MarlEnv {
    type Error = Error;

    fn num_agents(&self) -> usize {
        self.agents.len()
    }

    fn reset(&mut self) -> Result<()> {
        MarlEnv::reset(self);
        Ok(())
    }

    fn next_agent(&mut self) -> Option<usize> {
        MarlEnv::next_agent(self)
    }

    fn observe(&self, agent: usize) -> Vec<f64> {
        self.agents[agent].observation.clone()
    }

    fn step(&mut self, agent: usize, action: &[f64]) -> Result<StepResult> {
        let s = MarlEnv::step(self, agent, action)?;
        Ok(StepResult {
            next_state: s.next_state,
            reward: s.parts.reward,
            done: s.done,
        })
    }

    fn episode_metric(&self) -> f64 {
        self.ledger.report(self.params.costs).normalized_load
    }
}
