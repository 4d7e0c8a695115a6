//! Frozen synthetic image/language embedder standing in for a pre-trained
//! vision-language model.
//!
//! Images are embedded as `tanh(P · feature)` with a fixed random
//! row-normalised `P`. The language embedding of each task is built once
//! from image embeddings: for trap tasks it mixes the goal configuration
//! with the trap configuration, `normalize((1 − ε)·Φ(goal) + ε·Φ(trap))`;
//! for trap-free tasks it perturbs the goal embedding with frozen noise.
//! The cosine between the two is therefore right about coarse layout and
//! wrong, by an amount set by `ε`, about where the task actually ends.

use alloc::vec;
use alloc::vec::Vec;
use core::sync::atomic::{AtomicUsize, Ordering};

use rand::SeedableRng;
use rand_distr::{Distribution, StandardNormal};

use crate::env::{self, EnvConfig, Observation, Rollout, Task, VISUAL_DIM};
use crate::error::{check_len, Error, Result};
use crate::stats::{spearman, Correlation};
use crate::tensor::linalg::{cosine_similarity, norm, normalize};

#[derive(Debug, Clone, PartialEq)]
pub struct Embedding(pub Vec<f64>);

impl Embedding {
    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn l2_to(&self, other: &Embedding) -> f64 {
        crate::tensor::linalg::l2_distance(&self.0, &other.0)
    }
}

pub const DEFAULT_GAIN: f64 = 8.0;

#[derive(Debug, Clone, PartialEq)]
pub struct OracleConfig {
    pub d_emb: usize,
    /// Misalignment between language and image semantics, in [0, 1].
    pub epsilon: f64,
    /// Slope applied inside the tanh; larger values sharpen each embedding
    /// coordinate toward a half-plane indicator.
    pub gain: f64,
    pub seed: u64,
}

impl Default for OracleConfig {
    fn default() -> Self {
        Self {
            d_emb: 32,
            epsilon: 0.8,
            gain: DEFAULT_GAIN,
            seed: 0,
        }
    }
}

#[derive(Debug)]
pub struct EmbeddingOracle {
    d_emb: usize,
    d_feat: usize,
    epsilon: f64,
    proj: Vec<f64>,
    lang: Vec<(Task, Embedding)>,
    image_calls: AtomicUsize,
}

impl Clone for EmbeddingOracle {
    fn clone(&self) -> Self {
        Self {
            d_emb: self.d_emb,
            d_feat: self.d_feat,
            epsilon: self.epsilon,
            proj: self.proj.clone(),
            lang: self.lang.clone(),
            image_calls: AtomicUsize::new(self.image_calls.load(Ordering::Relaxed)),
        }
    }
}

impl EmbeddingOracle {
    /// Draw a projection from `cfg.seed` and build language embeddings for
    /// every task in `tasks`.
    pub fn new(cfg: &OracleConfig, tasks: &[EnvConfig]) -> Result<Self> {
        if cfg.d_emb == 0 {
            return Err(Error::Config("d_emb must be positive".into()));
        }
        let mut rng = crate::rng::Rng::seed_from_u64(cfg.seed);
        let mut proj: Vec<f64> = (0..cfg.d_emb * VISUAL_DIM).map(|_| StandardNormal.sample(&mut rng)).collect();
        for row in proj.chunks_exact_mut(VISUAL_DIM) {
            normalize(row);
            row.iter_mut().for_each(|x| *x *= cfg.gain);
        }
        let noise: Vec<f64> = (0..cfg.d_emb).map(|_| StandardNormal.sample(&mut rng)).collect();
        Self::with_projection(proj, cfg.d_emb, cfg.epsilon, tasks, &noise)
    }

    /// Build from an explicit `d_emb × VISUAL_DIM` projection and fixed noise
    /// direction for trap-free tasks.
    pub fn with_projection(
        proj: Vec<f64>,
        d_emb: usize,
        epsilon: f64,
        tasks: &[EnvConfig],
        noise: &[f64],
    ) -> Result<Self> {
        check_len("oracle projection", d_emb * VISUAL_DIM, proj.len())?;
        check_len("oracle noise", d_emb, noise.len())?;
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        let mut oracle = Self {
            d_emb,
            d_feat: VISUAL_DIM,
            epsilon,
            proj,
            lang: Vec::new(),
            image_calls: AtomicUsize::new(0),
        };
        for cfg in tasks {
            if oracle.lang.iter().any(|(t, _)| *t == cfg.task) {
                continue;
            }
            let goal = oracle.project(&env::goal_observation(cfg).visual_feature);
            let mut lang = if cfg.task.has_trap() {
                let trap = oracle.project(&env::trap_observation(cfg).visual_feature);
                goal.iter().zip(&trap).map(|(g, t)| (1.0 - epsilon) * g + epsilon * t).collect::<Vec<_>>()
            } else {
                let mut n = noise.to_vec();
                let scale = norm(&goal) / norm(&n).max(1e-12);
                n.iter_mut().for_each(|x| *x *= scale);
                goal.iter().zip(&n).map(|(g, z)| g + epsilon * z).collect()
            };
            normalize(&mut lang);
            oracle.lang.push((cfg.task, Embedding(lang)));
        }
        Ok(oracle)
    }

    pub fn d_emb(&self) -> usize {
        self.d_emb
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    fn project(&self, feature: &[f64]) -> Vec<f64> {
        self.proj
            .chunks_exact(self.d_feat)
            .map(|row| libm::tanh(crate::tensor::linalg::dot(row, feature)))
            .collect()
    }

    pub fn embed_image(&self, visual_feature: &[f64]) -> Result<Embedding> {
        check_len("oracle image feature", self.d_feat, visual_feature.len())?;
        self.image_calls.fetch_add(1, Ordering::Relaxed);
        Ok(Embedding(self.project(visual_feature)))
    }

    pub fn embed_language(&self, task: Task) -> Result<Embedding> {
        self.lang
            .iter()
            .find(|(t, _)| *t == task)
            .map(|(_, e)| e.clone())
            .ok_or(Error::UnknownTask(task))
    }

    /// Cosine between the task's language embedding and the image embedding.
    pub fn raw_vlm_reward(&self, obs: &Observation, task: Task) -> Result<f64> {
        let lang = self.embed_language(task)?;
        let img = self.embed_image(&obs.visual_feature)?;
        Ok(cosine_similarity(&lang.0, &img.0)?.value)
    }

    /// Number of image embeddings computed so far.
    pub fn image_calls(&self) -> usize {
        self.image_calls.load(Ordering::Relaxed)
    }

    /// FNV-1a over every frozen parameter; changes iff the oracle does.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::with_capacity(8 * (self.proj.len() + self.lang.len() * self.d_emb + 1));
        bytes.extend_from_slice(&self.epsilon.to_le_bytes());
        for x in &self.proj {
            bytes.extend_from_slice(&x.to_le_bytes());
        }
        for (t, e) in &self.lang {
            bytes.push(*t as u8);
            for x in &e.0 {
                bytes.extend_from_slice(&x.to_le_bytes());
            }
        }
        crate::rng::fnv1a(&bytes)
    }
}

#[derive(Debug, Clone)]
pub struct AuditReport {
    pub raw_rewards: Vec<f64>,
    pub goal_distances: Vec<f64>,
    /// Spearman correlation between reward and negative goal distance.
    pub correlation: Correlation,
}

/// Reward-versus-progress audit of one rollout.
pub fn fuzziness_audit(oracle: &EmbeddingOracle, task: Task, rollout: &Rollout) -> Result<AuditReport> {
    let raw_rewards = rollout
        .observations
        .iter()
        .map(|o| oracle.raw_vlm_reward(o, task))
        .collect::<Result<Vec<_>>>()?;
    let neg_dist: Vec<f64> = rollout.goal_distances.iter().map(|d| -d).collect();
    Ok(AuditReport {
        correlation: spearman(&raw_rewards, &neg_dist),
        raw_rewards,
        goal_distances: rollout.goal_distances.clone(),
    })
}

/// Arena position of the reward maximum on an `n × n` grid (agent-only tasks).
pub fn reward_argmax_on_grid(oracle: &EmbeddingOracle, cfg: &EnvConfig, n: usize) -> Result<(env::Vec2, f64)> {
    let mut state = env::PointMassEnv::new(cfg.clone())?.state().clone();
    let mut best = ([0.0, 0.0], f64::NEG_INFINITY);
    for i in 0..n {
        for j in 0..n {
            let p = [
                -env::ARENA + 2.0 * env::ARENA * i as f64 / (n - 1) as f64,
                -env::ARENA + 2.0 * env::ARENA * j as f64 / (n - 1) as f64,
            ];
            state.agent_pos = p;
            let r = oracle.raw_vlm_reward(&env::observation(cfg, &state), cfg.task)?;
            if r > best.1 {
                best = (p, r);
            }
        }
    }
    Ok(best)
}

/// Identity-block projection, handy for first-order checks.
pub fn identity_projection(d_emb: usize) -> Vec<f64> {
    let mut p = vec![0.0; d_emb * VISUAL_DIM];
    for i in 0..d_emb.min(VISUAL_DIM) {
        p[i * VISUAL_DIM + i] = 1.0;
    }
    p
}
