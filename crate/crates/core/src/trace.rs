//! Request traces: per-file renewal processes merged into one time-ordered
//! stream, with each request linked to the next request for the same file.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::io;

use rand::RngCore;
use rand_distr::{Distribution, Weibull};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::scenario::{sample_coverage, Coverage, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Request {
    pub time: f64,
    pub file: usize,
    pub coverage: Coverage,
    /// Index of the next request for the same file.
    pub next: Option<usize>,
    /// Time until that next request.
    pub gap: Option<f64>,
    /// Position in the trace this one was filtered from (own index otherwise).
    pub source_index: usize,
}

impl Request {
    pub fn is_last_for_file(&self) -> bool {
        self.next.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RequestTrace {
    num_files: usize,
    num_sbs: usize,
    requests: Vec<Request>,
}

/// When trace generation stops.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Horizon {
    Requests(usize),
    Time(f64),
}

impl Default for Horizon {
    fn default() -> Self {
        Horizon::Requests(10_000)
    }
}

pub trait GapSampler {
    fn gap(&self, file: usize, rng: &mut dyn RngCore) -> f64;
}

pub trait CoverageSampler {
    fn coverage(&self, file: usize, rng: &mut dyn RngCore) -> Result<Coverage>;
}

/// Weibull inter-request times with per-file scale.
#[derive(Debug, Clone)]
pub struct WeibullGaps {
    dists: Vec<Weibull<f64>>,
}

impl WeibullGaps {
    pub fn new(shape: f64, scales: &[f64]) -> Result<Self> {
        let dists = scales
            .iter()
            .map(|&scale| Weibull::new(scale, shape).map_err(|e| invalid(format!("weibull({scale}, {shape}): {e}"))))
            .collect::<Result<_>>()?;
        Ok(Self { dists })
    }

    pub fn from_scenario(cfg: &ScenarioConfig) -> Result<Self> {
        Self::new(cfg.weibull_shape, &cfg.weibull_scales()?)
    }
}

impl GapSampler for WeibullGaps {
    fn gap(&self, file: usize, rng: &mut dyn RngCore) -> f64 {
        self.dists[file].sample(rng)
    }
}

/// User positions as configured by the scenario.
#[derive(Debug, Clone)]
pub struct ScenarioCoverage<'a>(pub &'a ScenarioConfig);

impl CoverageSampler for ScenarioCoverage<'_> {
    fn coverage(&self, file: usize, rng: &mut dyn RngCore) -> Result<Coverage> {
        sample_coverage(self.0, file, rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Pending {
    time: f64,
    file: usize,
}

impl Eq for Pending {}

impl Ord for Pending {
    // Reversed: BinaryHeap is a max-heap.
    fn cmp(&self, other: &Self) -> Ordering {
        other.time.total_cmp(&self.time).then_with(|| other.file.cmp(&self.file))
    }
}

impl PartialOrd for Pending {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Generates a trace from the scenario's Weibull/Zipf workload.
pub fn generate_trace<R: RngCore>(cfg: &ScenarioConfig, horizon: Horizon, rng: &mut R) -> Result<RequestTrace> {
    cfg.validate()?;
    let gaps = WeibullGaps::from_scenario(cfg)?;
    generate_with(cfg.num_files, cfg.num_sbs, &gaps, &ScenarioCoverage(cfg), horizon, rng)
}

/// Superposes one renewal process per file. Each file's first request
/// follows an initial gap from time zero.
pub fn generate_with(
    num_files: usize,
    num_sbs: usize,
    gaps: &dyn GapSampler,
    coverage: &dyn CoverageSampler,
    horizon: Horizon,
    rng: &mut dyn RngCore,
) -> Result<RequestTrace> {
    match horizon {
        Horizon::Requests(0) => return Err(invalid("request budget must be positive")),
        Horizon::Time(t) if !(t > 0.0) => return Err(invalid(format!("time horizon must be positive, got {t}"))),
        _ => {}
    }
    let mut heap = BinaryHeap::with_capacity(num_files);
    for file in 0..num_files {
        heap.push(Pending {
            time: checked_gap(gaps, file, rng)?,
            file,
        });
    }
    let mut records: Vec<(f64, usize, Coverage)> = Vec::new();
    let mut last_time = f64::NEG_INFINITY;
    while let Some(Pending { time, file }) = heap.pop() {
        let done = match horizon {
            Horizon::Requests(n) => records.len() >= n,
            Horizon::Time(t) => time > t,
        };
        if done {
            break;
        }
        let time = if time > last_time { time } else { last_time.next_up() };
        last_time = time;
        records.push((time, file, coverage.coverage(file, rng)?));
        heap.push(Pending {
            time: time + checked_gap(gaps, file, rng)?,
            file,
        });
    }
    if records.is_empty() {
        return Err(Error::DegenerateTrace("horizon ends before the first request".into()));
    }
    RequestTrace::from_records(num_files, num_sbs, records)
}

fn checked_gap(gaps: &dyn GapSampler, file: usize, rng: &mut dyn RngCore) -> Result<f64> {
    let g = gaps.gap(file, rng);
    if g.is_finite() && g >= 0.0 {
        Ok(g)
    } else {
        Err(invalid(format!("gap sampler returned {g} for file {file}")))
    }
}

impl AsRef<RequestTrace> for RequestTrace {
    fn as_ref(&self) -> &RequestTrace {
        self
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct CsvRow {
    time: f64,
    file: usize,
    coverage: u32,
}

impl RequestTrace {
    /// Builds a trace from `(time, file, coverage)` records (0-based files).
    pub fn from_records(num_files: usize, num_sbs: usize, records: Vec<(f64, usize, Coverage)>) -> Result<Self> {
        let mut requests = Vec::with_capacity(records.len());
        let mut previous: Vec<Option<usize>> = vec![None; num_files];
        for (i, (time, file, coverage)) in records.into_iter().enumerate() {
            if file >= num_files {
                return Err(invalid(format!("request {i} names file {file} of {num_files}")));
            }
            if coverage.bits() >> num_sbs != 0 {
                return Err(invalid(format!("request {i} covered by an SBS beyond {num_sbs}")));
            }
            if let Some(last) = requests.last() {
                let last: &Request = last;
                if !(time > last.time) {
                    return Err(invalid(format!("request times must increase strictly at index {i}")));
                }
            }
            if let Some(p) = previous[file] {
                let prev: &mut Request = &mut requests[p];
                prev.next = Some(i);
                prev.gap = Some(time - prev.time);
            }
            previous[file] = Some(i);
            requests.push(Request {
                time,
                file,
                coverage,
                next: None,
                gap: None,
                source_index: i,
            });
        }
        Ok(Self {
            num_files,
            num_sbs,
            requests,
        })
    }

    pub fn num_files(&self) -> usize {
        self.num_files
    }

    pub fn num_sbs(&self) -> usize {
        self.num_sbs
    }

    pub fn requests(&self) -> &[Request] {
        &self.requests
    }

    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn get(&self, index: usize) -> Option<&Request> {
        self.requests.get(index)
    }

    /// First request whose file is requested again later.
    pub fn first_with_successor(&self) -> Option<usize> {
        self.requests.iter().position(|r| r.next.is_some())
    }

    /// Requests within range of `sbs`, with links recomputed on the
    /// subsequence and `source_index` pointing back into `self`.
    pub fn filter_sbs(&self, sbs: usize) -> RequestTrace {
        let kept: Vec<&Request> = self.requests.iter().filter(|r| r.coverage.contains(sbs)).collect();
        let records = kept.iter().map(|r| (r.time, r.file, r.coverage)).collect();
        let mut filtered = RequestTrace::from_records(self.num_files, self.num_sbs, records)
            .expect("a subsequence of a valid trace is valid");
        for (req, src) in filtered.requests.iter_mut().zip(&kept) {
            req.source_index = src.source_index;
        }
        filtered
    }

    /// Inter-request times of `file`, in order.
    pub fn gaps_of(&self, file: usize) -> Vec<f64> {
        self.requests.iter().filter(|r| r.file == file).filter_map(|r| r.gap).collect()
    }

    pub fn write_csv<W: io::Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        for r in &self.requests {
            w.serialize(CsvRow {
                time: r.time,
                file: r.file + 1,
                coverage: r.coverage.bits(),
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv<R: io::Read>(reader: R, num_files: usize, num_sbs: usize) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let mut records = Vec::new();
        for row in rdr.deserialize() {
            let row: CsvRow = row?;
            if row.file == 0 {
                return Err(invalid("trace files are numbered from 1"));
            }
            records.push((row.time, row.file - 1, Coverage::from_bits(row.coverage)));
        }
        Self::from_records(num_files, num_sbs, records)
    }
}
