//! Summary table over every finished run below a directory.

use std::fmt::Write;
use std::fs;
use std::path::{Path, PathBuf};

use crate::error::Result;
use crate::run::{Summary, SUMMARY_FILE};
use crate::sweep::read_summary;

#[derive(Debug, Clone, PartialEq)]
pub enum ReportStatus {
    NoResults,
    Passed,
    Failed(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub rows: Vec<(PathBuf, Summary)>,
    pub status: ReportStatus,
    pub text: String,
}

fn find_summaries(dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
    let mut entries: Vec<_> = fs::read_dir(dir)?.collect::<std::io::Result<_>>()?;
    entries.sort_by_key(|e| e.file_name());
    for e in entries {
        let path = e.path();
        if e.file_type()?.is_dir() {
            find_summaries(&path, out)?;
        } else if e.file_name() == SUMMARY_FILE {
            out.push(path);
        }
    }
    Ok(())
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "-".into(), |x| format!("{x:.digits$}"))
}

pub fn report(dir: &Path) -> Result<Report> {
    let mut paths = Vec::new();
    if dir.is_dir() {
        find_summaries(dir, &mut paths)?;
    }
    let rows: Vec<(PathBuf, Summary)> = paths
        .into_iter()
        .map(|p| Ok((p.clone(), read_summary(&p)?)))
        .collect::<Result<_>>()?;
    if rows.is_empty() {
        return Ok(Report {
            rows,
            status: ReportStatus::NoResults,
            text: format!("no results under {}\n", dir.display()),
        });
    }
    let mut text = String::new();
    let _ = writeln!(
        text,
        "{:<16} {:<11} {:>6} {:<24} {:>8} {:>9} {:>7} {:>9} {:>8} {:>6}",
        "name", "mode", "seed", "point", "L/omega", "reference", "limit", "oracle", "gap", "status"
    );
    let mut failures = 0;
    for (_, s) in &rows {
        let status = match s.passed() {
            None => "-",
            Some(true) => "PASS",
            Some(false) => {
                failures += 1;
                "FAIL"
            }
        };
        let point = if s.sweep_key.is_empty() { "-".to_string() } else { format!("{}={}", s.sweep_key, s.sweep_value) };
        let _ = writeln!(
            text,
            "{:<16} {:<11} {:>6} {:<24} {:>8.4} {:>9} {:>7} {:>9} {:>8} {:>6}",
            s.name,
            s.mode.as_str(),
            s.seed,
            point,
            s.l_over_omega,
            opt(s.reference_load, 3),
            opt(s.load_limit, 3),
            opt(s.oracle_penalized, 4),
            opt(s.oracle_gap.map(|g| 100.0 * g), 2),
            status
        );
    }
    let status = if failures == 0 { ReportStatus::Passed } else { ReportStatus::Failed(failures) };
    let _ = writeln!(text, "{} runs, {} failing", rows.len(), failures);
    Ok(Report { rows, status, text })
}
