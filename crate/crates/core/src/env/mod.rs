//! Request-driven learning environments.

use std::io;

use serde::{Deserialize, Serialize};

use crate::caching::CacheState;
use crate::error::{invalid, Result};
use crate::ledger::Costs;

pub mod marl;
pub mod sarl;

pub use marl::{EstimateBoard, MarlEnv};
pub use sarl::SarlEnv;

/// Parameters shared by both environments.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CachingParams {
    pub capacity: f64,
    pub period: f64,
    pub num_updates: usize,
    pub costs: Costs,
}

impl CachingParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.capacity >= 0.0) {
            return Err(invalid(format!("capacity must be non-negative, got {}", self.capacity)));
        }
        if !(self.period > 0.0 && self.period.is_finite()) {
            return Err(invalid(format!("update period must be positive, got {}", self.period)));
        }
        for (name, c) in [("sbs", self.costs.sbs), ("update", self.costs.update)] {
            if !(0.0..=1.0).contains(&c) {
                return Err(invalid(format!("{name} cost must be in [0, 1], got {c}")));
            }
        }
        Ok(())
    }

    pub fn action_dim(&self) -> usize {
        self.num_updates + 1
    }
}

/// Components of one step's reward.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RewardParts {
    pub sbs: f64,
    pub update: f64,
    pub memory: f64,
    pub reward: f64,
}

impl RewardParts {
    pub fn new(sbs: f64, update: f64, memory: f64, update_cost: f64) -> Self {
        Self {
            sbs,
            update,
            memory,
            reward: sbs - update_cost * update - memory,
        }
    }
}

/// One row of a per-step episode log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub agent: usize,
    pub time: f64,
    pub file: usize,
    pub slot: usize,
    pub action: Vec<f64>,
    pub parts: RewardParts,
    pub done: bool,
}

pub fn write_step_log<W: io::Write>(records: &[StepRecord], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let width = records.first().map_or(0, |r| r.action.len());
    let mut header: Vec<String> = ["step", "agent", "time", "file", "slot"].map(String::from).to_vec();
    header.extend((0..width).map(|j| format!("x{j}")));
    header.extend(["r_sbs", "r_upd", "r_mem", "reward", "done"].map(String::from));
    w.write_record(&header)?;
    for r in records {
        let mut row = vec![
            r.step.to_string(),
            (r.agent + 1).to_string(),
            r.time.to_string(),
            (r.file + 1).to_string(),
            r.slot.to_string(),
        ];
        row.extend(r.action.iter().map(f64::to_string));
        row.extend([r.parts.sbs, r.parts.update, r.parts.memory, r.parts.reward].map(|v| v.to_string()));
        row.push(u8::from(r.done).to_string());
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}

/// One-hot file, cached amounts, occupancy estimates, then `extra`.
pub(crate) fn encode_state(file: usize, cache: &CacheState, extra: &[f64]) -> Vec<f64> {
    let num_files = cache.cached().len();
    let mut state = vec![0.0; num_files];
    state[file] = 1.0;
    state.extend_from_slice(cache.cached());
    state.extend_from_slice(cache.occupancy());
    state.extend_from_slice(extra);
    state
}
