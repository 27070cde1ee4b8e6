//! File names inside an output directory and atomic writes.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};

pub const TRAJECTORY: &str = "trajectory.csv";
pub const DATASET: &str = "dataset.json";
pub const CHECKPOINT: &str = "checkpoint.json";
pub const TRAIN_REPORT: &str = "train_report.csv";
pub const TRAIN_SUMMARY: &str = "train_summary.json";
pub const SWEEP_DIR: &str = "sweep";
pub const SWEEP_SUMMARY: &str = "sweep_summary.csv";
pub const PREDICTIONS: &str = "predictions.csv";
pub const POWER_PLAN: &str = "power_plan.csv";
pub const TOPOLOGY: &str = "topology.csv";
pub const CONNECTIVITY: &str = "connectivity.json";
pub const VARY_N: &str = "vary_n.csv";
pub const VARY_C: &str = "vary_c.csv";
pub const VARY_GAMMA: &str = "vary_gamma.csv";
pub const METRICS: &str = "metrics.json";

/// Writes through a temporary file in the target directory, then renames it
/// into place so readers never see a partial file.
pub fn write_atomic(path: &Path, fill: impl FnOnce(&mut dyn Write) -> Result<()>) -> Result<()> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("writing into {}", dir.display()))?;
    {
        let mut out = BufWriter::new(tmp.as_file());
        fill(&mut out)?;
        out.flush()?;
    }
    tmp.persist(path).with_context(|| format!("moving output to {}", path.display()))?;
    Ok(())
}

pub fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<()> {
    write_atomic(path, |w| {
        serde_json::to_writer_pretty(&mut *w, value)?;
        w.write_all(b"\n")?;
        Ok(())
    })
}

pub fn open(path: &Path) -> Result<BufReader<File>> {
    let file = File::open(path).with_context(|| format!("missing input {}", path.display()))?;
    Ok(BufReader::new(file))
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).with_context(|| format!("parsing {}", path.display()))
}
