//! Network-load accounting.

use std::ops::{Add, AddAssign};

use serde::{Deserialize, Serialize};

use crate::caching::{mbs_download, sbs_download};

/// Relative costs of SBS downloads and cache updates, per unit of MBS
/// download.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Costs {
    pub sbs: f64,
    pub update: f64,
}

impl Costs {
    pub fn with_update(update: f64) -> Self {
        Self { sbs: 0.0, update }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct LoadLedger {
    pub requests: u64,
    pub sbs: f64,
    pub mbs: f64,
    pub update: f64,
    pub elapsed: f64,
    /// Largest `|sbs + mbs - 1|` over recorded requests.
    pub max_conservation_error: f64,
}

/// Rates and normalized loads derived from a ledger.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerReport {
    pub requests: u64,
    pub elapsed: f64,
    pub rate_mbs: f64,
    pub rate_sbs: f64,
    pub rate_update: f64,
    pub load: f64,
    /// Load divided by the empirical request rate.
    pub normalized_load: f64,
    /// SBS download minus weighted update traffic, per request.
    pub objective: f64,
}

impl LoadLedger {
    /// Records one request served by caches holding `cached` of the file.
    pub fn record_request<I: IntoIterator<Item = f64> + Clone>(&mut self, cached: I) -> (f64, f64) {
        let s = sbs_download(cached.clone());
        let m = mbs_download(cached);
        self.requests += 1;
        self.sbs += s;
        self.mbs += m;
        self.max_conservation_error = self.max_conservation_error.max((s + m - 1.0).abs());
        (s, m)
    }

    pub fn record_update(&mut self, amount: f64) {
        self.update += amount;
    }

    pub fn report(&self, costs: Costs) -> LedgerReport {
        let per_time = |v: f64| if self.elapsed > 0.0 { v / self.elapsed } else { f64::NAN };
        let per_request = |v: f64| if self.requests > 0 { v / self.requests as f64 } else { f64::NAN };
        let weighted = self.mbs + costs.sbs * self.sbs + costs.update * self.update;
        LedgerReport {
            requests: self.requests,
            elapsed: self.elapsed,
            rate_mbs: per_time(self.mbs),
            rate_sbs: per_time(self.sbs),
            rate_update: per_time(self.update),
            load: per_time(weighted),
            normalized_load: per_request(weighted),
            objective: per_request(self.sbs - costs.update * self.update),
        }
    }
}

impl AddAssign for LoadLedger {
    fn add_assign(&mut self, other: Self) {
        self.requests += other.requests;
        self.sbs += other.sbs;
        self.mbs += other.mbs;
        self.update += other.update;
        self.elapsed += other.elapsed;
        self.max_conservation_error = self.max_conservation_error.max(other.max_conservation_error);
    }
}

impl Add for LoadLedger {
    type Output = Self;

    fn add(mut self, other: Self) -> Self {
        self += other;
        self
    }
}

impl std::iter::Sum for LoadLedger {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Self::default(), Add::add)
    }
}

/// One CSV row of ledger output.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LedgerRow {
    pub episode: usize,
    pub l_mbs: f64,
    pub l_sbs: f64,
    pub l_c: f64,
    pub l: f64,
    pub l_over_omega: f64,
}

impl LedgerRow {
    pub fn new(episode: usize, report: &LedgerReport) -> Self {
        Self {
            episode,
            l_mbs: report.rate_mbs,
            l_sbs: report.rate_sbs,
            l_c: report.rate_update,
            l: report.load,
            l_over_omega: report.normalized_load,
        }
    }
}
