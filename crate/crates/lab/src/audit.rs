//! Per-step reward audit along expert trajectories.

use std::path::Path;

use furl_core::align::{projected_reward, ProjectionHeads};
use furl_core::env::{self, expert_rollout, EnvState, PointMassEnv, Vec2};
use furl_core::experiment::ExperimentConfig;
use furl_core::oracle::EmbeddingOracle;
use furl_core::rng::Rng;
use furl_core::stats::{spearman, Correlation};
use rand::{Rng as _, SeedableRng};

use crate::error::{LabError, Result};
use crate::sink::AUDIT_CSV;

#[derive(Debug, Clone, PartialEq)]
pub struct AuditRow {
    pub step: usize,
    pub raw_reward: f64,
    pub aligned_reward: Option<f64>,
    pub goal_distance: f64,
}

#[derive(Debug, Clone)]
pub struct Audit {
    pub rows: Vec<AuditRow>,
    /// Spearman of raw reward against negative goal distance.
    pub raw: Correlation,
    pub aligned: Option<Correlation>,
    pub success: bool,
}

/// Roll one expert episode, from the task's start or from `start`, and
/// score every visited observation with the raw reward and, if given,
/// the reward of `heads`.
pub fn audit_rewards(cfg: &ExperimentConfig, heads: Option<&ProjectionHeads>, start: Option<Vec2>) -> Result<Audit> {
    cfg.validate()?;
    let oracle = EmbeddingOracle::new(&cfg.resolved_oracle(), std::slice::from_ref(&cfg.env))?;
    let mut environment = PointMassEnv::new(cfg.env.clone())?;
    if let Some(p) = start {
        let s = environment.state().clone();
        environment.set_state(EnvState { agent_pos: p, ..s });
    }
    let rollout = expert_rollout(&mut environment, 0)?;
    let lang = oracle.embed_language(cfg.env.task)?;
    let mut rows = Vec::with_capacity(rollout.len());
    for (i, obs) in rollout.observations.iter().enumerate() {
        let raw_reward = oracle.raw_vlm_reward(obs, cfg.env.task)?;
        let aligned_reward = match heads {
            Some(h) => Some(projected_reward(h, &oracle.embed_image(&obs.visual_feature)?, &lang)?.value),
            None => None,
        };
        rows.push(AuditRow { step: i + 1, raw_reward, aligned_reward, goal_distance: rollout.goal_distances[i] });
    }
    let neg_dist: Vec<f64> = rows.iter().map(|r| -r.goal_distance).collect();
    let raw = spearman(&rows.iter().map(|r| r.raw_reward).collect::<Vec<_>>(), &neg_dist);
    let aligned = heads.map(|_| spearman(&rows.iter().map(|r| r.aligned_reward.unwrap_or(0.0)).collect::<Vec<_>>(), &neg_dist));
    Ok(Audit { rows, raw, aligned, success: rollout.success })
}

/// Start positions for audit trajectories that differ from the training
/// start: uniform in the arena, at least `min_goal_gap` from the goal.
pub fn held_out_starts(cfg: &ExperimentConfig, n: usize, seed: u64, min_goal_gap: f64) -> Vec<Vec2> {
    let goal = cfg.env.task.canonical_goal();
    let mut rng = Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let p = [rng.gen_range(-env::ARENA..env::ARENA), rng.gen_range(-env::ARENA..env::ARENA)];
        if env::distance(p, goal) >= min_goal_gap {
            out.push(p);
        }
    }
    out
}

pub fn write_audit_csv(dir: &Path, audit: &Audit) -> Result<()> {
    let path = dir.join(AUDIT_CSV);
    let mut w = csv::Writer::from_path(&path)?;
    w.write_record(["step", "raw_reward", "aligned_reward", "goal_distance"])?;
    for r in &audit.rows {
        w.write_record([
            r.step.to_string(),
            r.raw_reward.to_string(),
            r.aligned_reward.map_or(String::new(), |x| x.to_string()),
            r.goal_distance.to_string(),
        ])?;
    }
    w.flush().map_err(|e| LabError::io(path, e))
}
