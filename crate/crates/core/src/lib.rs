//! Coded soft-TTL caching across small base stations: workload generation,
//! load accounting, learning environments and reference policies.

pub mod caching;
pub mod env;
pub mod error;
pub mod ledger;
pub mod oracle;
pub mod scenario;
pub mod trace;

pub use caching::{average_occupancy, mbs_download, sbs_download, slot_index, update_traffic, CacheState, CachingPolicy};
pub use env::{CachingParams, MarlEnv, RewardParts, SarlEnv};
pub use error::{Error, Result};
pub use ledger::{Costs, LedgerReport, LoadLedger};
pub use scenario::{Coverage, Placement, ScenarioConfig};
pub use trace::{generate_trace, Horizon, Request, RequestTrace};
pub use oracle::{evaluate_async, evaluate_sync, grid_search, Evaluation, PolicyGrid, TablePolicy, Termination};
