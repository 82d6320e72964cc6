//! Reference policies and a brute-force search over policy tables, scored by
//! direct simulation on fixed traces.

use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::caching::{average_occupancy, occupancy_integral, slot_index, update_traffic, CachingPolicy};
use crate::env::CachingParams;
use crate::error::{invalid, Error, Result};
use crate::ledger::{LedgerReport, LoadLedger};
use crate::trace::RequestTrace;

/// One caching policy per file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TablePolicy(Vec<CachingPolicy>);

impl TablePolicy {
    pub fn new(per_file: Vec<CachingPolicy>) -> Result<Self> {
        let Some(first) = per_file.first() else {
            return Err(invalid("a policy table needs at least one file"));
        };
        let k = first.num_updates();
        if per_file.iter().any(|p| p.num_updates() != k) {
            return Err(invalid("all files must use the same number of updates"));
        }
        Ok(Self(per_file))
    }

    pub fn uniform(num_files: usize, policy: CachingPolicy) -> Self {
        Self(vec![policy; num_files])
    }

    pub fn zero(num_files: usize, num_updates: usize) -> Self {
        Self::uniform(num_files, CachingPolicy::constant(0.0, num_updates).expect("0 is a valid fraction"))
    }

    /// Constant-in-slot caching of the given fraction per file.
    pub fn static_fractions(fractions: &[f64], num_updates: usize) -> Result<Self> {
        Self::new(fractions.iter().map(|&c| CachingPolicy::constant(c, num_updates)).collect::<Result<_>>()?)
    }

    /// Fills `capacity` with the most popular files, whole files first.
    pub fn greedy_static(popularity: &[f64], capacity: f64, num_updates: usize) -> Result<Self> {
        let mut order: Vec<usize> = (0..popularity.len()).collect();
        order.sort_by(|&a, &b| popularity[b].total_cmp(&popularity[a]).then(a.cmp(&b)));
        let mut fractions = vec![0.0; popularity.len()];
        let mut left = capacity.max(0.0);
        for f in order {
            let take = left.min(1.0);
            fractions[f] = take;
            left -= take;
        }
        Self::static_fractions(&fractions, num_updates)
    }

    pub fn num_files(&self) -> usize {
        self.0.len()
    }

    pub fn num_updates(&self) -> usize {
        self.0[0].num_updates()
    }

    pub fn file(&self, file: usize) -> &CachingPolicy {
        &self.0[file]
    }

    pub fn files(&self) -> &[CachingPolicy] {
        &self.0
    }
}

/// Which requests an evaluation covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Stop where a learning episode would.
    Episode,
    /// Use every request of the trace.
    Exhaust,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub ledger: LoadLedger,
    pub report: LedgerReport,
    /// Mean per-step reward, memory penalty included.
    pub penalized: f64,
    pub penalized_se: f64,
    pub objective_se: f64,
    /// Long-run cache memory in use, per cache.
    pub mean_occupancy: f64,
    pub steps: usize,
}

impl Evaluation {
    pub fn objective(&self) -> f64 {
        self.report.objective
    }

    pub fn normalized_load(&self) -> f64 {
        self.report.normalized_load
    }
}

/// Standard error of the mean from 20 contiguous batch means.
pub fn batch_means_se(values: &[f64]) -> f64 {
    const BATCHES: usize = 20;
    if values.len() < 2 * BATCHES {
        return f64::NAN;
    }
    let size = values.len() / BATCHES;
    let means: Vec<f64> = values.chunks_exact(size).take(BATCHES).map(|c| c.iter().sum::<f64>() / size as f64).collect();
    let mean = means.iter().sum::<f64>() / BATCHES as f64;
    let var = means.iter().map(|m| (m - mean).powi(2)).sum::<f64>() / (BATCHES - 1) as f64;
    (var / BATCHES as f64).sqrt()
}

#[derive(Default)]
struct Tally {
    ledger: LoadLedger,
    rewards: Vec<f64>,
    contributions: Vec<f64>,
    /// Per cache and file: integral of cached fraction and total gap time.
    occupancy: Vec<Vec<(f64, f64)>>,
}

impl Tally {
    fn finish(self, params: &CachingParams) -> Evaluation {
        let report = self.ledger.report(params.costs);
        let caches: Vec<f64> = self
            .occupancy
            .iter()
            .filter(|files| files.iter().any(|&(_, t)| t > 0.0))
            .map(|files| files.iter().filter(|&&(_, t)| t > 0.0).map(|&(i, t)| i / t).sum())
            .collect();
        let mean_occupancy = if caches.is_empty() { 0.0 } else { caches.iter().sum::<f64>() / caches.len() as f64 };
        let steps = self.rewards.len();
        Evaluation {
            ledger: self.ledger,
            report,
            penalized: if steps > 0 { self.rewards.iter().sum::<f64>() / steps as f64 } else { f64::NAN },
            penalized_se: batch_means_se(&self.rewards),
            objective_se: batch_means_se(&self.contributions),
            mean_occupancy,
            steps,
        }
    }
}

fn check_table(table: &TablePolicy, trace: &RequestTrace, params: &CachingParams) -> Result<()> {
    params.validate()?;
    if table.num_files() != trace.num_files() {
        return Err(invalid(format!("table covers {} files, trace has {}", table.num_files(), trace.num_files())));
    }
    if table.num_updates() != params.num_updates {
        return Err(invalid(format!("table uses {} updates, expected {}", table.num_updates(), params.num_updates)));
    }
    Ok(())
}

/// Simulates lockstep caches following `table` on each trace.
pub fn evaluate_sync<T: AsRef<RequestTrace>>(
    traces: &[T],
    table: &TablePolicy,
    params: &CachingParams,
    termination: Termination,
) -> Result<Evaluation> {
    let mut tally = Tally::default();
    for trace in traces {
        sync_pass(trace.as_ref(), table, params, termination, &mut tally)?;
    }
    Ok(tally.finish(params))
}

fn sync_pass(
    trace: &RequestTrace,
    table: &TablePolicy,
    params: &CachingParams,
    termination: Termination,
    tally: &mut Tally,
) -> Result<()> {
    check_table(table, trace, params)?;
    let requests = trace.requests();
    let num_files = trace.num_files();
    let copies = trace.num_sbs();
    let (first, last) = match termination {
        Termination::Exhaust => (0, requests.len()),
        Termination::Episode => {
            let first = trace
                .first_with_successor()
                .ok_or_else(|| Error::DegenerateTrace("no file is requested twice".into()))?;
            let stop = (first + 1..requests.len()).find(|&i| requests[i].is_last_for_file()).unwrap_or(requests.len());
            (first, stop)
        }
    };
    let mut cached = vec![0.0; num_files];
    let mut occupancy = vec![0.0; num_files];
    let mut usage = vec![(0.0, 0.0); num_files];
    let cost = params.costs.update;
    for i in first..last {
        let r = requests[i];
        let (served, _) = tally.ledger.record_request(std::iter::repeat_n(cached[r.file], r.coverage.len()));
        let mut contribution = served;
        if let (Some(next), Some(tau)) = (r.next, r.gap) {
            let x = table.file(r.file);
            let slot = slot_index(tau, params.period, params.num_updates)?;
            let upd = update_traffic(x, cached[r.file], slot, copies)?;
            tally.ledger.record_update(upd);
            contribution -= cost * upd;
            cached[r.file] = x.at_slot(slot);
            occupancy[r.file] = average_occupancy(x, tau, params.period)?;
            usage[r.file].0 += occupancy_integral(x, tau, params.period)?;
            usage[r.file].1 += tau;
            let next_in_range = requests[next].coverage.len() as f64;
            let memory = (occupancy.iter().sum::<f64>() - params.capacity).abs();
            tally.rewards.push((next_in_range * cached[r.file]).min(1.0) - cost * upd - memory);
        }
        tally.contributions.push(contribution);
    }
    if last > first {
        tally.ledger.elapsed += requests[last.min(requests.len() - 1)].time - requests[first].time;
    }
    tally.occupancy.push(usage);
    Ok(())
}

/// Simulates independent caches, SBS `b` following `tables[b]` and acting
/// only on requests within its range.
pub fn evaluate_async<T: AsRef<RequestTrace>>(
    traces: &[T],
    tables: &[TablePolicy],
    params: &CachingParams,
    termination: Termination,
) -> Result<Evaluation> {
    let mut tally = Tally::default();
    for trace in traces {
        async_pass(trace.as_ref(), tables, params, termination, &mut tally)?;
    }
    Ok(tally.finish(params))
}

/// For each request and each SBS in range, the index of the next request for
/// the same file within that SBS's range.
fn next_in_range(trace: &RequestTrace) -> Vec<Vec<Option<usize>>> {
    let requests = trace.requests();
    let mut upcoming = vec![vec![None; trace.num_files()]; trace.num_sbs()];
    let mut out = vec![vec![None; trace.num_sbs()]; requests.len()];
    for i in (0..requests.len()).rev() {
        let r = requests[i];
        for b in r.coverage.iter() {
            out[i][b] = upcoming[b][r.file];
            upcoming[b][r.file] = Some(i);
        }
    }
    out
}

fn async_pass(
    trace: &RequestTrace,
    tables: &[TablePolicy],
    params: &CachingParams,
    termination: Termination,
    tally: &mut Tally,
) -> Result<()> {
    let num_sbs = trace.num_sbs();
    if tables.len() != num_sbs {
        return Err(invalid(format!("{} tables for {num_sbs} SBSs", tables.len())));
    }
    for table in tables {
        check_table(table, trace, params)?;
    }
    let requests = trace.requests();
    let num_files = trace.num_files();
    let links = next_in_range(trace);

    // Steps each SBS takes: from its first request with a successor in range
    // up to (not including) the first later one without.
    let mut active: Vec<(usize, usize)> = Vec::with_capacity(num_sbs);
    for b in 0..num_sbs {
        let seen: Vec<usize> = (0..requests.len()).filter(|&i| requests[i].coverage.contains(b)).collect();
        let window = match termination {
            Termination::Exhaust => (0, usize::MAX),
            Termination::Episode => match seen.iter().position(|&i| links[i][b].is_some()) {
                None => (usize::MAX, usize::MAX),
                Some(p) => {
                    let stop = seen[p + 1..].iter().find(|&&i| links[i][b].is_none()).copied().unwrap_or(usize::MAX);
                    (seen[p], stop)
                }
            },
        };
        active.push(window);
    }
    let last = match termination {
        Termination::Exhaust => requests.len(),
        Termination::Episode => {
            let stepped = (0..requests.len())
                .filter(|&i| requests[i].coverage.iter().any(|b| i >= active[b].0 && i < active[b].1))
                .max();
            match stepped {
                Some(i) => i + 1,
                None => return Err(Error::DegenerateTrace("no SBS sees a file requested twice".into())),
            }
        }
    };

    let cost = params.costs.update;
    let mut cached = vec![vec![0.0; num_files]; num_sbs];
    let mut occupancy = vec![vec![0.0; num_files]; num_sbs];
    let mut usage = vec![vec![(0.0, 0.0); num_files]; num_sbs];
    for i in 0..last {
        let r = requests[i];
        let f = r.file;
        let (served, _) = tally.ledger.record_request(r.coverage.iter().map(|b| cached[b][f]).collect::<Vec<_>>());
        let mut contribution = served;
        for b in r.coverage.iter() {
            if i < active[b].0 || i >= active[b].1 {
                continue;
            }
            let Some(next) = links[i][b] else { continue };
            let tau = requests[next].time - r.time;
            let x = tables[b].file(f);
            let slot = slot_index(tau, params.period, params.num_updates)?;
            let upd = update_traffic(x, cached[b][f], slot, 1)?;
            tally.ledger.record_update(upd);
            contribution -= cost * upd;
            cached[b][f] = x.at_slot(slot);
            occupancy[b][f] = average_occupancy(x, tau, params.period)?;
            usage[b][f].0 += occupancy_integral(x, tau, params.period)?;
            usage[b][f].1 += tau;
            let others: f64 = requests[next].coverage.iter().filter(|&o| o != b).map(|o| cached[o][f]).sum();
            let memory = (occupancy[b].iter().sum::<f64>() - params.capacity).abs();
            tally.rewards.push((cached[b][f] + others).min(1.0) - cost * upd - memory);
        }
        tally.contributions.push(contribution);
    }
    if last > 0 {
        tally.ledger.elapsed += requests[last - 1].time - requests[0].time;
    }
    tally.occupancy.extend(usage);
    Ok(())
}

/// Admissible shapes of a candidate policy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Constraint {
    /// Any vector in the unit box.
    Box,
    /// Non-increasing over slots.
    Monotone,
}

/// Quantity the search maximizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleObjective {
    /// Mean per-step reward, memory penalty included.
    Penalized,
    /// SBS download minus weighted update traffic, per request.
    Ledger,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicyGrid {
    pub step: f64,
    pub constraint: Constraint,
    pub objective: OracleObjective,
    /// Discard candidates whose mean occupancy exceeds the capacity.
    pub hard_capacity: bool,
    pub budget: u64,
}

impl Default for PolicyGrid {
    fn default() -> Self {
        Self {
            step: 0.05,
            constraint: Constraint::Box,
            objective: OracleObjective::Penalized,
            hard_capacity: false,
            budget: 1_000_000,
        }
    }
}

impl PolicyGrid {
    pub fn levels(&self) -> Result<Vec<f64>> {
        let n = (1.0 / self.step).round();
        if !(self.step > 0.0 && self.step <= 1.0) || ((1.0 / self.step) - n).abs() > 1e-9 {
            return Err(invalid(format!("grid step must divide 1, got {}", self.step)));
        }
        let n = n as usize;
        Ok((0..=n).map(|i| i as f64 / n as f64).collect())
    }

    /// Candidate policies for one file, in lexicographic order.
    pub fn candidates(&self, num_updates: usize) -> Result<Vec<CachingPolicy>> {
        let levels = self.levels()?;
        let width = num_updates + 1;
        let total = (levels.len() as u128).checked_pow(width as u32).unwrap_or(u128::MAX);
        if total > self.budget as u128 {
            return Err(Error::BudgetExceeded {
                count: total,
                budget: self.budget as u128,
            });
        }
        let mut out = Vec::new();
        let mut digits = vec![0usize; width];
        loop {
            let x: Vec<f64> = digits.iter().map(|&d| levels[d]).collect();
            if self.constraint == Constraint::Box || x.windows(2).all(|w| w[0] >= w[1]) {
                out.push(CachingPolicy::new(x)?);
            }
            let mut pos = width;
            loop {
                if pos == 0 {
                    return Ok(out);
                }
                pos -= 1;
                digits[pos] += 1;
                if digits[pos] < levels.len() {
                    break;
                }
                digits[pos] = 0;
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OracleResult {
    pub table: TablePolicy,
    pub score: f64,
    pub evaluation: Evaluation,
    pub candidates: u64,
}

fn score(eval: &Evaluation, grid: &PolicyGrid) -> f64 {
    match grid.objective {
        OracleObjective::Penalized => eval.penalized,
        OracleObjective::Ledger => eval.report.objective,
    }
}

/// Exhaustive search over joint tables for all files, scored by
/// [`evaluate_sync`] on the given traces. Ties go to the lexicographically
/// smallest table.
pub fn grid_search<T: AsRef<RequestTrace> + Sync>(
    traces: &[T],
    params: &CachingParams,
    grid: &PolicyGrid,
    termination: Termination,
) -> Result<OracleResult> {
    let first = traces.first().ok_or_else(|| invalid("grid search needs at least one trace"))?;
    let num_files = first.as_ref().num_files();
    let per_file = grid.candidates(params.num_updates)?;
    let count = (per_file.len() as u128).checked_pow(num_files as u32).unwrap_or(u128::MAX);
    if count > grid.budget as u128 {
        return Err(Error::BudgetExceeded {
            count,
            budget: grid.budget as u128,
        });
    }
    let count = count as u64;
    let table_at = |mut index: u64| {
        let mut files = vec![per_file[0].clone(); num_files];
        for f in (0..num_files).rev() {
            files[f] = per_file[(index % per_file.len() as u64) as usize].clone();
            index /= per_file.len() as u64;
        }
        TablePolicy(files)
    };
    let best = (0..count)
        .into_par_iter()
        .map(|i| -> Result<Option<(f64, u64)>> {
            let eval = evaluate_sync(traces, &table_at(i), params, termination)?;
            if grid.hard_capacity && eval.mean_occupancy > params.capacity + 1e-12 {
                return Ok(None);
            }
            Ok(Some((score(&eval, grid), i)))
        })
        .try_reduce(
            || None,
            |a, b| {
                Ok(match (a, b) {
                    (None, x) | (x, None) => x,
                    (Some(x), Some(y)) => Some(if y.0 > x.0 || (y.0 == x.0 && y.1 < x.1) { y } else { x }),
                })
            },
        )?;
    let (score, index) = best.ok_or_else(|| invalid("no candidate satisfies the capacity"))?;
    let table = table_at(index);
    let evaluation = evaluate_sync(traces, &table, params, termination)?;
    Ok(OracleResult {
        table,
        score,
        evaluation,
        candidates: count,
    })
}

/// Counts that determine one file's lockstep ledger objective and memory
/// use for any policy table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FileStatistics {
    /// `arrivals[s][n]`: requests with `n` SBSs in range whose previous
    /// request left the cache in state `s` (slot `0..=K`, or `K + 1` when
    /// the file was never cached).
    pub arrivals: Vec<Vec<u64>>,
    /// `refills[s][l]`: requests with a successor in slot `l`.
    pub refills: Vec<Vec<u64>>,
    /// Total time spent in each slot over all inter-request times.
    pub slot_time: Vec<f64>,
    pub gap_time: f64,
}

impl FileStatistics {
    fn new(num_updates: usize, num_sbs: usize) -> Self {
        let states = num_updates + 2;
        Self {
            arrivals: vec![vec![0; num_sbs + 1]; states],
            refills: vec![vec![0; num_updates + 1]; states],
            slot_time: vec![0.0; num_updates + 1],
            gap_time: 0.0,
        }
    }

    /// Summed SBS download minus weighted update traffic.
    pub fn objective(&self, x: &CachingPolicy, copies: usize, update_cost: f64) -> f64 {
        let k = x.num_updates();
        let level = |s: usize| if s > k { 0.0 } else { x.at_slot(s) };
        let mut total = 0.0;
        for (s, row) in self.arrivals.iter().enumerate() {
            for (n, &c) in row.iter().enumerate() {
                if c > 0 {
                    total += c as f64 * (n as f64 * level(s)).min(1.0);
                }
            }
        }
        for (s, row) in self.refills.iter().enumerate() {
            for (l, &c) in row.iter().enumerate() {
                if c > 0 {
                    let upd = update_traffic(x, level(s), l, copies).expect("slot within policy");
                    total -= update_cost * c as f64 * upd;
                }
            }
        }
        total
    }

    /// Long-run fraction of the file kept in each cache.
    pub fn occupancy(&self, x: &CachingPolicy) -> f64 {
        if self.gap_time <= 0.0 {
            return 0.0;
        }
        x.fractions().iter().zip(&self.slot_time).map(|(v, t)| v * t).sum::<f64>() / self.gap_time
    }
}

/// Per-file statistics of a trace for lockstep caches over all requests.
pub fn file_statistics(trace: &RequestTrace, params: &CachingParams) -> Result<Vec<FileStatistics>> {
    let k = params.num_updates;
    let mut stats = vec![FileStatistics::new(k, trace.num_sbs()); trace.num_files()];
    let mut state = vec![k + 1; trace.num_files()];
    for r in trace.requests() {
        let st = &mut stats[r.file];
        st.arrivals[state[r.file]][r.coverage.len()] += 1;
        if let Some(tau) = r.gap {
            let slot = slot_index(tau, params.period, k)?;
            st.refills[state[r.file]][slot] += 1;
            for j in 0..slot {
                st.slot_time[j] += params.period;
            }
            st.slot_time[slot] += tau - slot as f64 * params.period;
            st.gap_time += tau;
            state[r.file] = slot;
        }
    }
    Ok(stats)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstrainedResult {
    pub table: TablePolicy,
    /// Ledger objective per request.
    pub objective: f64,
    pub mean_occupancy: f64,
    pub multiplier: f64,
}

/// Best lockstep table under a hard bound on mean occupancy, found per file
/// for a price on memory that is bisected until the bound holds.
pub fn constrained_search(
    trace: &RequestTrace,
    params: &CachingParams,
    grid: &PolicyGrid,
) -> Result<ConstrainedResult> {
    params.validate()?;
    let candidates = grid.candidates(params.num_updates)?;
    let stats = file_statistics(trace, params)?;
    let requests = trace.len() as f64;
    let copies = trace.num_sbs();
    // (objective per request, occupancy) for every file and candidate.
    let values: Vec<Vec<(f64, f64)>> = stats
        .par_iter()
        .map(|st| {
            candidates
                .iter()
                .map(|x| (st.objective(x, copies, params.costs.update) / requests, st.occupancy(x)))
                .collect()
        })
        .collect();
    let choose = |price: f64| -> Vec<usize> {
        values
            .iter()
            .map(|vals| {
                let mut best = 0;
                let mut best_value = f64::NEG_INFINITY;
                for (i, &(obj, occ)) in vals.iter().enumerate() {
                    let v = obj - price * occ;
                    if v > best_value {
                        best = i;
                        best_value = v;
                    }
                }
                best
            })
            .collect()
    };
    let occupancy_of = |pick: &[usize]| pick.iter().zip(&values).map(|(&i, v)| v[i].1).sum::<f64>();
    let mut pick = choose(0.0);
    let mut multiplier = 0.0;
    if occupancy_of(&pick) > params.capacity {
        let mut lo = 0.0;
        let mut hi = 1.0;
        loop {
            let p = choose(hi);
            if occupancy_of(&p) <= params.capacity {
                pick = p;
                break;
            }
            lo = hi;
            hi *= 2.0;
            if hi > 1e12 {
                return Err(invalid("capacity cannot be met even by caching nothing"));
            }
        }
        for _ in 0..100 {
            let mid = 0.5 * (lo + hi);
            let p = choose(mid);
            if occupancy_of(&p) <= params.capacity {
                hi = mid;
                pick = p;
            } else {
                lo = mid;
            }
        }
        multiplier = hi;
    }
    let table = TablePolicy(pick.iter().map(|&i| candidates[i].clone()).collect());
    Ok(ConstrainedResult {
        objective: pick.iter().zip(&values).map(|(&i, v)| v[i].0).sum(),
        mean_occupancy: occupancy_of(&pick),
        table,
        multiplier,
    })
}

/// Results stored on disk under a digest of whatever identifies them.
#[derive(Debug, Clone)]
pub struct ResultCache {
    dir: PathBuf,
}

impl ResultCache {
    pub fn new(dir: impl Into<PathBuf>) -> Self {
        Self { dir: dir.into() }
    }

    pub fn key<K: Serialize>(parts: &K) -> Result<String> {
        let bytes = serde_json::to_vec(parts)?;
        Ok(hex::encode(Sha256::digest(&bytes)))
    }

    pub fn path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    pub fn get_or_compute<K, V, F>(&self, parts: &K, compute: F) -> Result<V>
    where
        K: Serialize,
        V: Serialize + DeserializeOwned,
        F: FnOnce() -> Result<V>,
    {
        let path = self.path(&Self::key(parts)?);
        if let Some(v) = read_json(&path)? {
            return Ok(v);
        }
        let value = compute()?;
        fs::create_dir_all(&self.dir)?;
        let tmp = path.with_extension("tmp");
        fs::write(&tmp, serde_json::to_vec_pretty(&value)?)?;
        fs::rename(&tmp, &path)?;
        Ok(value)
    }
}

fn read_json<V: DeserializeOwned>(path: &Path) -> Result<Option<V>> {
    match fs::read(path) {
        Ok(bytes) => Ok(Some(serde_json::from_slice(&bytes)?)),
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
        Err(e) => Err(e.into()),
    }
}
