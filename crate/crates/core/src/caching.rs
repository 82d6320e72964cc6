//! Soft-TTL caching policies, MDS download accounting and cache state.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Fraction of a file cached in each update slot since its last request:
/// `x[j]` on `[jT, (j+1)T)` and `x[K]` from `KT` on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct CachingPolicy(Vec<f64>);

impl CachingPolicy {
    pub fn new(fractions: Vec<f64>) -> Result<Self> {
        if fractions.is_empty() {
            return Err(invalid("a caching policy needs at least one slot"));
        }
        if let Some(bad) = fractions.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(invalid(format!("cached fractions must lie in [0, 1], got {bad}")));
        }
        Ok(Self(fractions))
    }

    /// Clips a raw action into the unit box.
    pub fn from_action(action: &[f64]) -> Result<Self> {
        if let Some(bad) = action.iter().find(|v| v.is_nan()) {
            return Err(invalid(format!("action contains {bad}")));
        }
        Self::new(action.iter().map(|v| v.clamp(0.0, 1.0)).collect())
    }

    pub fn constant(value: f64, num_updates: usize) -> Result<Self> {
        Self::new(vec![value; num_updates + 1])
    }

    pub fn fractions(&self) -> &[f64] {
        &self.0
    }

    /// `K`, the number of cache updates after a request.
    pub fn num_updates(&self) -> usize {
        self.0.len() - 1
    }

    pub fn at_slot(&self, slot: usize) -> f64 {
        self.0[slot.min(self.num_updates())]
    }

    /// Non-increasing in the slot index.
    pub fn is_monotone(&self) -> bool {
        self.0.windows(2).all(|w| w[0] >= w[1])
    }

    pub fn is_static(&self) -> bool {
        self.0.windows(2).all(|w| w[0] == w[1])
    }
}

/// Slot in which a request `tau` after the previous one falls.
pub fn slot_index(tau: f64, period: f64, num_updates: usize) -> Result<usize> {
    if !(tau >= 0.0) {
        return Err(invalid(format!("inter-request time must be non-negative, got {tau}")));
    }
    if !(period > 0.0) {
        return Err(invalid(format!("update period must be positive, got {period}")));
    }
    let slot = (tau / period).floor();
    Ok(if slot >= num_updates as f64 { num_updates } else { slot as usize })
}

/// Amount downloaded from the SBSs in range, given what each caches.
pub fn sbs_download<I: IntoIterator<Item = f64>>(cached: I) -> f64 {
    cached.into_iter().sum::<f64>().min(1.0)
}

/// Amount the MBS must supply on top of the SBSs.
pub fn mbs_download<I: IntoIterator<Item = f64>>(cached: I) -> f64 {
    (1.0 - cached.into_iter().sum::<f64>()).max(0.0)
}

/// Data sent to `num_caches` caches to follow `policy` from the request
/// (previous amount `previous`) up to a next request in `slot`.
pub fn update_traffic(policy: &CachingPolicy, previous: f64, slot: usize, num_caches: usize) -> Result<f64> {
    let x = policy.fractions();
    if slot >= x.len() {
        return Err(invalid(format!("slot {slot} beyond the policy's {} updates", policy.num_updates())));
    }
    let refill: f64 = x[..=slot].windows(2).map(|w| (w[1] - w[0]).max(0.0)).sum();
    Ok(num_caches as f64 * ((x[0] - previous).max(0.0) + refill))
}

/// Time-average of the cached fraction over an inter-request time `tau`.
pub fn average_occupancy(policy: &CachingPolicy, tau: f64, period: f64) -> Result<f64> {
    if !(tau > 0.0) {
        return Err(invalid(format!("occupancy needs a positive inter-request time, got {tau}")));
    }
    Ok(occupancy_integral(policy, tau, period)? / tau)
}

/// Integral of the cached fraction over `[0, tau]`.
pub fn occupancy_integral(policy: &CachingPolicy, tau: f64, period: f64) -> Result<f64> {
    let slot = slot_index(tau, period, policy.num_updates())?;
    let x = policy.fractions();
    let full: f64 = x[..slot].iter().sum();
    Ok(period * full + (tau - slot as f64 * period) * x[slot])
}

/// Cached amount and latest occupancy estimate per file, for one cache (or
/// for all caches when they are updated in lockstep).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheState {
    cached: Vec<f64>,
    occupancy: Vec<f64>,
}

/// Result of applying a policy at a request.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Applied {
    pub slot: usize,
    pub previous: f64,
    pub cached: f64,
    pub occupancy: f64,
}

impl CacheState {
    pub fn cold(num_files: usize) -> Self {
        Self {
            cached: vec![0.0; num_files],
            occupancy: vec![0.0; num_files],
        }
    }

    pub fn cached(&self) -> &[f64] {
        &self.cached
    }

    pub fn occupancy(&self) -> &[f64] {
        &self.occupancy
    }

    pub fn total_occupancy(&self) -> f64 {
        self.occupancy.iter().sum()
    }

    /// Deviation of the occupancy estimates from the capacity.
    pub fn memory_penalty(&self, capacity: f64) -> f64 {
        (self.total_occupancy() - capacity).abs()
    }

    /// Applies `policy` to `file` for a next request `tau` later.
    pub fn apply(&mut self, file: usize, policy: &CachingPolicy, tau: f64, period: f64) -> Result<Applied> {
        let slot = slot_index(tau, period, policy.num_updates())?;
        let occupancy = average_occupancy(policy, tau, period)?;
        let previous = self.cached[file];
        let cached = policy.at_slot(slot);
        self.cached[file] = cached;
        self.occupancy[file] = occupancy;
        Ok(Applied {
            slot,
            previous,
            cached,
            occupancy,
        })
    }
}
