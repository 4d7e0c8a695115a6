//! CSV files written while a run progresses.

use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};

use furl_core::env::TrajectoryRow;
use furl_core::experiment::{AlignRow, EvalRow, MetricsSink, RelayRow, Summary};
use furl_core::experiment::ExperimentConfig;

use crate::error::{LabError, Result};

pub const EVAL_CSV: &str = "eval.csv";
pub const ALIGN_CSV: &str = "align.csv";
pub const RELAY_CSV: &str = "relay.csv";
pub const TRAJECTORIES_CSV: &str = "trajectories.csv";
pub const SUMMARY_CSV: &str = "summary.csv";
pub const AUDIT_CSV: &str = "audit.csv";
pub const FAILURE_MARKER: &str = "FAILED";

pub const EVAL_HEADER: [&str; 5] = ["env_step", "success_rate", "mean_return", "alpha", "q_loss"];
pub const ALIGN_HEADER: [&str; 4] = ["step", "stage", "loss", "positive_count"];
pub const RELAY_HEADER: [&str; 4] = ["episode", "relay_t", "segments", "success"];
pub const TRAJECTORY_HEADER: [&str; 12] = [
    "episode", "t", "agent_x", "agent_y", "object_x", "object_y", "goal_x", "goal_y", "action_x", "action_y", "r_task",
    "success",
];
pub const SUMMARY_HEADER: [&str; 11] = [
    "algo",
    "env",
    "seed",
    "rho",
    "epsilon",
    "total_steps",
    "final_success",
    "auc",
    "first_success_step",
    "positive_count",
    "train_successes",
];

fn open(dir: &Path, name: &str, header: &[&str]) -> Result<csv::Writer<File>> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| LabError::io(&path, e))?;
    let mut w = csv::Writer::from_writer(file);
    w.write_record(header)?;
    Ok(w)
}

fn sink_err(e: csv::Error) -> furl_core::Error {
    furl_core::Error::Sink(e.to_string())
}

fn bit(b: bool) -> &'static str {
    if b {
        "1"
    } else {
        "0"
    }
}

/// Streams every row kind into its own file under one directory.
pub struct CsvSink {
    eval: csv::Writer<File>,
    align: csv::Writer<File>,
    relay: csv::Writer<File>,
    trajectories: csv::Writer<File>,
}

impl CsvSink {
    pub fn create(dir: &Path) -> Result<Self> {
        Ok(Self {
            eval: open(dir, EVAL_CSV, &EVAL_HEADER)?,
            align: open(dir, ALIGN_CSV, &ALIGN_HEADER)?,
            relay: open(dir, RELAY_CSV, &RELAY_HEADER)?,
            trajectories: open(dir, TRAJECTORIES_CSV, &TRAJECTORY_HEADER)?,
        })
    }

    pub fn flush(&mut self) -> Result<()> {
        self.eval.flush().and(self.align.flush()).and(self.relay.flush()).and(self.trajectories.flush()).map_err(|e| {
            LabError::Csv(e.into())
        })
    }
}

impl MetricsSink for CsvSink {
    fn eval(&mut self, r: &EvalRow) -> furl_core::Result<()> {
        self.eval
            .write_record([
                r.env_step.to_string(),
                r.success_rate.to_string(),
                r.mean_return.to_string(),
                r.alpha.to_string(),
                r.q_loss.to_string(),
            ])
            .map_err(sink_err)?;
        self.eval.flush().map_err(|e| furl_core::Error::Sink(e.to_string()))
    }

    fn align(&mut self, r: &AlignRow) -> furl_core::Result<()> {
        self.align
            .write_record([r.step.to_string(), r.stage.number().to_string(), r.loss.to_string(), r.positive_count.to_string()])
            .map_err(sink_err)
    }

    fn relay(&mut self, r: &RelayRow) -> furl_core::Result<()> {
        self.relay
            .write_record([r.episode.to_string(), r.relay_t.to_string(), r.segments_string(), bit(r.success).into()])
            .map_err(sink_err)
    }

    fn trajectory(&mut self, r: &TrajectoryRow) -> furl_core::Result<()> {
        write_trajectory_row(&mut self.trajectories, r).map_err(sink_err)
    }
}

pub fn write_trajectory_row<W: Write>(w: &mut csv::Writer<W>, r: &TrajectoryRow) -> csv::Result<()> {
    w.write_record([
        r.episode.to_string(),
        r.t.to_string(),
        r.agent[0].to_string(),
        r.agent[1].to_string(),
        r.object[0].to_string(),
        r.object[1].to_string(),
        r.goal[0].to_string(),
        r.goal[1].to_string(),
        r.action[0].to_string(),
        r.action[1].to_string(),
        r.r_task.to_string(),
        bit(r.success).into(),
    ])
}

/// One line per run; an unreached first success is left blank.
pub fn summary_record(cfg: &ExperimentConfig, s: &Summary, train_successes: u64) -> Vec<String> {
    vec![
        cfg.algo.name().to_string(),
        cfg.env.task.name().to_string(),
        cfg.seed.to_string(),
        cfg.rho.to_string(),
        cfg.oracle.epsilon.to_string(),
        cfg.total_steps.to_string(),
        s.final_success.to_string(),
        s.auc.to_string(),
        s.first_success_step.map_or(String::new(), |x| x.to_string()),
        s.positive_count.to_string(),
        train_successes.to_string(),
    ]
}

pub fn write_summary(dir: &Path, cfg: &ExperimentConfig, s: &Summary, train_successes: u64) -> Result<PathBuf> {
    let mut w = open(dir, SUMMARY_CSV, &SUMMARY_HEADER)?;
    w.write_record(summary_record(cfg, s, train_successes))?;
    w.flush().map_err(|e| LabError::io(dir.join(SUMMARY_CSV), e))?;
    Ok(dir.join(SUMMARY_CSV))
}
