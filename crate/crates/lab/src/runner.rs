//! One run, written to its own directory.

use std::fs;
use std::path::Path;

use furl_core::experiment::{run, RunOutput};

use crate::checkpoint::{save_heads, HEADS_FILE};
use crate::error::{LabError, Result};
use crate::settings::{to_settings, RunSpec};
use crate::sink::{write_summary, CsvSink, FAILURE_MARKER};

pub const CONFIG_FILE: &str = "config.ini";

/// Execute `spec`, streaming CSVs into `spec.out_dir`. On failure the
/// partial files are flushed and a `FAILED` marker holding the error is
/// left next to them.
pub fn run_to_dir(spec: &RunSpec) -> Result<RunOutput> {
    let dir = &spec.out_dir;
    fs::create_dir_all(dir).map_err(|e| LabError::io(dir, e))?;
    let marker = dir.join(FAILURE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| LabError::io(&marker, e))?;
    }
    write_config(dir, spec)?;
    let mut sink = CsvSink::create(dir)?;
    let result = run(&spec.cfg, &mut sink);
    let flushed = sink.flush();
    let out = match result {
        Ok(out) => out,
        Err(e) => {
            fs::write(&marker, format!("{e}\n")).map_err(|io| LabError::io(&marker, io))?;
            return Err(e.into());
        }
    };
    flushed?;
    write_summary(dir, &spec.cfg, &out.log.summary, out.log.counters.train_successes)?;
    save_heads(&dir.join(HEADS_FILE), &out.heads)?;
    Ok(out)
}

fn write_config(dir: &Path, spec: &RunSpec) -> Result<()> {
    let path = dir.join(CONFIG_FILE);
    fs::write(&path, to_settings(spec).to_ini_string()).map_err(|e| LabError::io(path, e))
}
