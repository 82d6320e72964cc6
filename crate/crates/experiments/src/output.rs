//! Result files: a build stamp, the `# `-echoed config, then CSV.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::Serialize;

use crate::config::ExperimentConfig;
use crate::error::Result;

/// First characters of every result file.
pub const STAMP_PREFIX: &str = "#! ";

pub fn build_stamp() -> String {
    format!(
        "{STAMP_PREFIX}sttl-experiments {} build {}",
        env!("CARGO_PKG_VERSION"),
        env!("STTL_BUILD_COMMIT")
    )
}

/// Header lines for a result file written under `cfg`.
pub fn preamble(cfg: &ExperimentConfig) -> Result<String> {
    Ok(format!("{}\n{}", build_stamp(), cfg.echo()?))
}

/// Writes `bytes` next to `path` and renames, so readers never see a
/// partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    let tmp = path.with_extension("partial");
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, path)?;
    Ok(())
}

/// Serializes `rows` as CSV below the preamble of `cfg`.
pub fn write_rows<T: Serialize>(path: &Path, cfg: &ExperimentConfig, rows: &[T]) -> Result<()> {
    let mut buf = preamble(cfg)?.into_bytes();
    {
        let mut w = csv::Writer::from_writer(&mut buf);
        for r in rows {
            w.serialize(r)?;
        }
        w.flush()?;
    }
    write_atomic(path, &buf)
}

/// CSV with a preamble, from a writer callback.
pub fn write_with<F>(path: &Path, cfg: &ExperimentConfig, body: F) -> Result<()>
where
    F: FnOnce(&mut Vec<u8>) -> Result<()>,
{
    let mut buf = preamble(cfg)?.into_bytes();
    body(&mut buf)?;
    write_atomic(path, &buf)
}

/// A reader that skips the preamble.
pub fn reader(path: &Path) -> Result<csv::Reader<fs::File>> {
    Ok(csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?)
}
