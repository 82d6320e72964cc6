//! Single agent, synchronous updates: every SBS holds the same amount of
//! each file.

use std::sync::Arc;

use sttl_ddpg::{Environment, StepResult};

use crate::caching::{update_traffic, CacheState, CachingPolicy};
use crate::env::{encode_state, CachingParams, RewardParts, StepRecord};
use crate::error::{Error, Result};
use crate::ledger::LoadLedger;
use crate::trace::RequestTrace;

/// Outcome of one step, with the reward broken down.
#[derive(Debug, Clone, PartialEq)]
pub struct SarlStep {
    pub next_state: Vec<f64>,
    pub parts: RewardParts,
    pub slot: usize,
    pub done: bool,
}

#[derive(Debug, Clone)]
pub struct SarlEnv {
    trace: Arc<RequestTrace>,
    params: CachingParams,
    cache: CacheState,
    start: usize,
    cursor: usize,
    done: bool,
    ledger: LoadLedger,
    log: Option<Vec<StepRecord>>,
}

impl SarlEnv {
    pub fn new(trace: Arc<RequestTrace>, params: CachingParams) -> Result<Self> {
        params.validate()?;
        let start = trace
            .first_with_successor()
            .ok_or_else(|| Error::DegenerateTrace("no file is requested twice".into()))?;
        Ok(Self {
            cache: CacheState::cold(trace.num_files()),
            trace,
            params,
            start,
            cursor: start,
            done: false,
            ledger: LoadLedger::default(),
            log: None,
        })
    }

    /// Keeps a per-step log from the next reset on.
    pub fn with_step_log(mut self) -> Self {
        self.log = Some(Vec::new());
        self
    }

    pub fn state_dim(&self) -> usize {
        3 * self.trace.num_files()
    }

    pub fn action_dim(&self) -> usize {
        self.params.action_dim()
    }

    pub fn trace(&self) -> &RequestTrace {
        &self.trace
    }

    pub fn params(&self) -> &CachingParams {
        &self.params
    }

    pub fn cache(&self) -> &CacheState {
        &self.cache
    }

    pub fn ledger(&self) -> &LoadLedger {
        &self.ledger
    }

    pub fn step_log(&self) -> Option<&[StepRecord]> {
        self.log.as_deref()
    }

    pub fn is_done(&self) -> bool {
        self.done
    }

    pub fn current_state(&self) -> Vec<f64> {
        encode_state(self.trace.requests()[self.cursor].file, &self.cache, &[])
    }

    pub fn reset(&mut self) -> Vec<f64> {
        self.cache = CacheState::cold(self.trace.num_files());
        self.cursor = self.start;
        self.done = false;
        self.ledger = LoadLedger::default();
        if let Some(log) = &mut self.log {
            log.clear();
        }
        self.current_state()
    }

    pub fn step(&mut self, action: &[f64]) -> Result<SarlStep> {
        if self.done {
            return Err(Error::EpisodeExhausted);
        }
        if action.len() != self.action_dim() {
            return Err(Error::ActionLength {
                expected: self.action_dim(),
                got: action.len(),
            });
        }
        let policy = CachingPolicy::from_action(action)?;
        let requests = self.trace.requests();
        let request = requests[self.cursor];
        let (next, tau) = match (request.next, request.gap) {
            (Some(n), Some(g)) => (n, g),
            _ => return Err(Error::EpisodeExhausted),
        };
        let num_sbs = self.trace.num_sbs();

        // Delivery of the current request from what the caches hold now.
        let at_arrival = self.cache.cached()[request.file];
        self.ledger.record_request(std::iter::repeat_n(at_arrival, request.coverage.len()));

        let applied = self.cache.apply(request.file, &policy, tau, self.params.period)?;
        let in_range = requests[next].coverage.len() as f64;
        let sbs = (in_range * applied.cached).min(1.0);
        let update = update_traffic(&policy, applied.previous, applied.slot, num_sbs)?;
        self.ledger.record_update(update);
        let memory = self.cache.memory_penalty(self.params.capacity);
        let parts = RewardParts::new(sbs, update, memory, self.params.costs.update);

        self.cursor += 1;
        self.done = requests[self.cursor].is_last_for_file();
        self.ledger.elapsed = requests[self.cursor].time - requests[self.start].time;
        if let Some(log) = &mut self.log {
            log.push(StepRecord {
                step: log.len(),
                agent: 0,
                time: request.time,
                file: request.file,
                slot: applied.slot,
                action: policy.fractions().to_vec(),
                parts,
                done: self.done,
            });
        }
        Ok(SarlStep {
            next_state: self.current_state(),
            parts,
            slot: applied.slot,
            done: self.done,
        })
    }
}

impl Environment for SarlEnv {
    type Error = Error;

    fn reset(&mut self) -> Result<Vec<f64>> {
        Ok(SarlEnv::reset(self))
    }

    fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        let s = SarlEnv::step(self, action)?;
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
