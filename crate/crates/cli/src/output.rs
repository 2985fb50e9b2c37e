//! Atomic file output and the trajectory table.

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::Path;

use freecir_core::TrajectoryStats;
use serde::Serialize;

use crate::error::CliError;

pub const CSV_HEADER: &str = "run,t,trace,min_eig,max_eig,norm1,norm2,breaches";

fn io(path: &Path) -> impl FnOnce(std::io::Error) -> CliError + '_ {
    move |source| CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// Writes through a temporary file in the same directory and renames it
/// over `path`, so readers never observe a partial file.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let dir = path
        .parent()
        .filter(|p| !p.as_os_str().is_empty())
        .unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).map_err(io(dir))?;
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io(dir))?;
    tmp.write_all(bytes).map_err(io(path))?;
    tmp.as_file().sync_all().map_err(io(path))?;
    tmp.persist(path).map_err(|e| CliError::Io {
        path: path.display().to_string(),
        source: e.error,
    })?;
    Ok(())
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut s = serde_json::to_string_pretty(value).expect("report serializes");
    s.push('\n');
    write_atomic(path, s.as_bytes())
}

/// One row per run and grid point, ordered by run then time; floats in
/// `{:.16e}` (17 significant digits), LF line endings.
pub fn trajectory_csv(stats: &[TrajectoryStats]) -> String {
    let rows: usize = stats.iter().map(|s| s.records.len()).sum();
    let mut out = String::with_capacity(64 + rows * 150);
    out.push_str(CSV_HEADER);
    out.push('\n');
    for s in stats {
        for r in &s.records {
            writeln!(
                out,
                "{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e},{}",
                s.run, r.t, r.trace, r.min_eig, r.max_eig, r.norm1, r.norm2, r.breaches
            )
            .unwrap();
        }
    }
    out
}
