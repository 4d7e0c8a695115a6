//! Cross product of one swept parameter and a list of seeds.

use std::fs;
use std::path::PathBuf;

use furl_core::experiment::Summary;
use furl_core::stats::{mean, std_dev};

use crate::error::{LabError, Result};
use crate::runner::run_to_dir;
use crate::settings::RunSpec;

pub const SWEEP_CSV: &str = "sweep.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Rho,
    Epsilon,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Rho => "rho",
            SweepParam::Epsilon => "epsilon",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        [SweepParam::Rho, SweepParam::Epsilon].into_iter().find(|p| p.name() == s)
    }

    fn apply(self, spec: &mut RunSpec, value: f64) {
        match self {
            SweepParam::Rho => spec.cfg.rho = value,
            SweepParam::Epsilon => spec.cfg.oracle.epsilon = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepCell {
    pub value: f64,
    pub summaries: Vec<(u64, Summary)>,
    pub failures: Vec<(u64, String)>,
}

impl SweepCell {
    fn finals(&self) -> Vec<f64> {
        self.summaries.iter().map(|(_, s)| s.final_success).collect()
    }

    fn aucs(&self) -> Vec<f64> {
        self.summaries.iter().map(|(_, s)| s.auc).collect()
    }

    pub fn mean_final_success(&self) -> f64 {
        mean(&self.finals())
    }

    pub fn std_final_success(&self) -> f64 {
        std_dev(&self.finals())
    }

    pub fn mean_auc(&self) -> f64 {
        mean(&self.aucs())
    }

    pub fn std_auc(&self) -> f64 {
        std_dev(&self.aucs())
    }
}

/// Directory of one cell-seed run below the sweep root.
pub fn cell_dir(root: &std::path::Path, param: SweepParam, value: f64, seed: u64) -> PathBuf {
    root.join(format!("{}_{}", param.name(), value)).join(format!("seed_{seed}"))
}

/// Run every (value, seed) pair below `base.out_dir`, then write the
/// aggregate table. A failing run is recorded in its cell and the sweep
/// moves on.
pub fn sweep(base: &RunSpec, param: SweepParam, values: &[f64], seeds: &[u64]) -> Result<Vec<SweepCell>> {
    if seeds.is_empty() {
        return Err(LabError::Config("sweep needs at least one seed".into()));
    }
    if values.is_empty() {
        return Err(LabError::Config("sweep needs at least one value".into()));
    }
    let mut cells = Vec::with_capacity(values.len());
    for &value in values {
        let mut cell = SweepCell { value, summaries: Vec::new(), failures: Vec::new() };
        for &seed in seeds {
            let mut spec = base.clone();
            param.apply(&mut spec, value);
            spec.cfg.seed = seed;
            spec.out_dir = cell_dir(&base.out_dir, param, value, seed);
            match run_to_dir(&spec) {
                Ok(out) => cell.summaries.push((seed, out.log.summary)),
                Err(e) => cell.failures.push((seed, e.to_string())),
            }
        }
        cells.push(cell);
    }
    write_sweep_csv(base, param, &cells)?;
    Ok(cells)
}

fn write_sweep_csv(base: &RunSpec, param: SweepParam, cells: &[SweepCell]) -> Result<()> {
    fs::create_dir_all(&base.out_dir).map_err(|e| LabError::io(&base.out_dir, e))?;
    let path = base.out_dir.join(SWEEP_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record([
        "param",
        "value",
        "runs",
        "failed",
        "final_success_mean",
        "final_success_std",
        "auc_mean",
        "auc_std",
        "failures",
    ])?;
    for c in cells {
        let failures: Vec<String> = c.failures.iter().map(|(s, e)| format!("seed {s}: {e}")).collect();
        w.write_record([
            param.name().to_string(),
            c.value.to_string(),
            c.summaries.len().to_string(),
            c.failures.len().to_string(),
            c.mean_final_success().to_string(),
            c.std_final_success().to_string(),
            c.mean_auc().to_string(),
            c.std_auc().to_string(),
            failures.join("; "),
        ])?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}
