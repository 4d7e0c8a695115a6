//! Soft actor-critic with twin critics, Polyak targets and a learned
//! temperature, over the tensor substrate.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::align::ProjectionHeads;
use crate::env::{EnvConfig, PointMassEnv};
use crate::error::{check_len, Error, Result};
use crate::oracle::Embedding;
use crate::tensor::gaussian::{squashed_draw, ACTION_CLAMP, LOG_STD_MAX, LOG_STD_MIN};
use crate::tensor::linalg::concat_rows;
use crate::tensor::{cosine_similarity, Activation, AdamState, Gradients, MlpParams};

#[derive(Debug, Clone, PartialEq)]
pub struct SacConfig {
    pub gamma: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    /// Defaults to `−|A|/2` when unset.
    pub target_entropy: Option<f64>,
    pub hidden: Vec<usize>,
    pub buffer_capacity: usize,
    pub updates_per_step: usize,
    /// Uniform-random steps before the first update.
    pub warmup_steps: usize,
    pub init_alpha: f64,
}

impl Default for SacConfig {
    fn default() -> Self {
        Self {
            gamma: 0.99,
            tau: 0.01,
            lr: 1e-4,
            batch_size: 256,
            target_entropy: None,
            hidden: vec![256, 256],
            buffer_capacity: 200_000,
            updates_per_step: 1,
            warmup_steps: 1000,
            init_alpha: 1.0,
        }
    }
}

impl SacConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return Err(Error::Config("gamma must lie in (0, 1)".into()));
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return Err(Error::Config("tau must lie in (0, 1]".into()));
        }
        if !(self.lr > 0.0) || !(self.init_alpha > 0.0) {
            return Err(Error::Config("learning rate and initial temperature must be positive".into()));
        }
        if self.batch_size == 0 || self.buffer_capacity == 0 || self.hidden.is_empty() {
            return Err(Error::Config("batch size, buffer capacity and hidden sizes must be non-empty".into()));
        }
        Ok(())
    }

    pub fn target_entropy_for(&self, act_dim: usize) -> f64 {
        self.target_entropy.unwrap_or(-(act_dim as f64) / 2.0)
    }
}

/// Which policy produced a transition. Kept for diagnostics only.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Actor {
    Warmup,
    Vlm,
    Sac,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub proprio: Vec<f64>,
    pub action: Vec<f64>,
    pub r_task: f64,
    /// Frozen image embedding of the observation reached by this step.
    pub img_emb: Embedding,
    pub next_proprio: Vec<f64>,
    /// Episode ended here, by success or time limit.
    pub done: bool,
    /// Episode ended by success; only these stop bootstrapping.
    pub terminal: bool,
    /// Reward as computed at collection time, used only by store-at-collect
    /// mode.
    pub collected_reward: f64,
    pub traj_id: u64,
    pub step_idx: u32,
    pub actor: Actor,
}

/// Column-major view of sampled transitions.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Batch {
    pub n: usize,
    pub obs_dim: usize,
    pub act_dim: usize,
    pub emb_dim: usize,
    pub obs: Vec<f64>,
    pub act: Vec<f64>,
    pub next_obs: Vec<f64>,
    pub img: Vec<f64>,
    pub r_task: Vec<f64>,
    pub collected_reward: Vec<f64>,
    pub terminal: Vec<bool>,
}

impl Batch {
    pub fn from_transitions(ts: &[Transition]) -> Result<Self> {
        let first = ts.first().ok_or(Error::Config("empty transition batch".into()))?;
        let mut b = Batch {
            n: 0,
            obs_dim: first.proprio.len(),
            act_dim: first.action.len(),
            emb_dim: first.img_emb.dim(),
            ..Batch::default()
        };
        for t in ts {
            b.push(t)?;
        }
        Ok(b)
    }

    fn push(&mut self, t: &Transition) -> Result<()> {
        check_len("transition proprio", self.obs_dim, t.proprio.len())?;
        check_len("transition next proprio", self.obs_dim, t.next_proprio.len())?;
        check_len("transition action", self.act_dim, t.action.len())?;
        check_len("transition embedding", self.emb_dim, t.img_emb.dim())?;
        self.obs.extend_from_slice(&t.proprio);
        self.act.extend_from_slice(&t.action);
        self.next_obs.extend_from_slice(&t.next_proprio);
        self.img.extend_from_slice(t.img_emb.as_slice());
        self.r_task.push(t.r_task);
        self.collected_reward.push(t.collected_reward);
        self.terminal.push(t.terminal);
        self.n += 1;
        Ok(())
    }
}

/// Fixed-capacity ring of transitions shared by every consumer.
#[derive(Debug, Clone)]
pub struct ReplayBuffer {
    capacity: usize,
    items: Vec<Transition>,
    head: usize,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity, items: Vec::new(), head: 0 }
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() < self.capacity {
            self.items.push(t);
        } else {
            self.items[self.head] = t;
            self.head = (self.head + 1) % self.capacity;
        }
    }

    /// Oldest-first access.
    pub fn get(&self, i: usize) -> Option<&Transition> {
        if i >= self.items.len() {
            return None;
        }
        Some(&self.items[(self.head + i) % self.items.len()])
    }

    /// Uniform sample with replacement.
    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Result<Batch> {
        if self.items.is_empty() {
            return Err(Error::Config("cannot sample from an empty replay buffer".into()));
        }
        let first = &self.items[0];
        let mut b = Batch {
            n: 0,
            obs_dim: first.proprio.len(),
            act_dim: first.action.len(),
            emb_dim: first.img_emb.dim(),
            ..Batch::default()
        };
        for _ in 0..n {
            b.push(&self.items[rng.gen_range(0..self.items.len())])?;
        }
        Ok(b)
    }
}

/// Rewards for a sampled batch, computed at sample time.
pub trait RewardFn {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>>;
}

impl<F: Fn(&Batch) -> Result<Vec<f64>>> RewardFn for F {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        self(batch)
    }
}

/// The sparse task reward alone.
#[derive(Debug, Clone, Copy, Default)]
pub struct TaskReward;

impl RewardFn for TaskReward {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(batch.r_task.clone())
    }
}

/// Whatever was recorded when the transition was collected.
#[derive(Debug, Clone, Copy, Default)]
pub struct StoredReward;

impl RewardFn for StoredReward {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        Ok(batch.collected_reward.clone())
    }
}

/// `task_weight · r_task + rho · cos(f_lang(l), f_img(e))`, recomputed with
/// the current heads.
#[derive(Debug, Clone)]
pub struct VlmReward<'a> {
    heads: &'a ProjectionHeads,
    lang_proj: Vec<f64>,
    pub rho: f64,
    pub task_weight: f64,
}

impl<'a> VlmReward<'a> {
    pub fn new(heads: &'a ProjectionHeads, lang: &Embedding, rho: f64, task_weight: f64) -> Result<Self> {
        Ok(Self { lang_proj: heads.project_language(lang)?, heads, rho, task_weight })
    }

    pub fn single(&self, img: &Embedding, r_task: f64) -> Result<f64> {
        let i = self.heads.img.forward(img.as_slice())?;
        Ok(self.task_weight * r_task + self.rho * cosine_similarity(&self.lang_proj, &i)?.value)
    }
}

impl RewardFn for VlmReward<'_> {
    fn rewards(&self, batch: &Batch) -> Result<Vec<f64>> {
        let vlm = if self.rho == 0.0 {
            vec![0.0; batch.n]
        } else {
            self.heads.rewards_for(&self.lang_proj, &batch.img, batch.n)?
        };
        Ok(batch.r_task.iter().zip(&vlm).map(|(t, v)| self.task_weight * t + self.rho * v).collect())
    }
}

/// Reward of one transition: `r_task + rho · aligned reward` when the VLM
/// term is on, `r_task` otherwise.
pub fn compute_reward(
    t: &Transition,
    heads: Option<&ProjectionHeads>,
    lang: &Embedding,
    rho: f64,
    use_vlm: bool,
) -> Result<f64> {
    if !use_vlm || rho == 0.0 {
        return Ok(t.r_task);
    }
    let heads = heads.ok_or(Error::Config("VLM reward requested without projection heads".into()))?;
    VlmReward::new(heads, lang, rho, 1.0)?.single(&t.img_emb, t.r_task)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ActionMode {
    Sample,
    Mean,
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct UpdateStats {
    pub q_loss: f64,
    pub actor_loss: f64,
    pub alpha: f64,
    pub mean_q: f64,
    pub entropy: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SacAgent {
    pub actor: MlpParams,
    pub q1: MlpParams,
    pub q2: MlpParams,
    pub q1_target: MlpParams,
    pub q2_target: MlpParams,
    pub log_alpha: f64,
    adam_actor: AdamState,
    adam_q1: AdamState,
    adam_q2: AdamState,
    adam_alpha: AdamState,
    obs_dim: usize,
    act_dim: usize,
    target_entropy: f64,
}

/// Squashed policy draws for a batch, with what the actor gradient needs.
struct PolicySample {
    actions: Vec<f64>,
    log_probs: Vec<f64>,
    noise: Vec<f64>,
    stds: Vec<f64>,
    clamped: Vec<bool>,
}

impl SacAgent {
    pub fn new<R: Rng + ?Sized>(obs_dim: usize, act_dim: usize, cfg: &SacConfig, rng: &mut R) -> Result<Self> {
        cfg.validate()?;
        let dims = |i: usize, o: usize| {
            let mut d = vec![i];
            d.extend_from_slice(&cfg.hidden);
            d.push(o);
            d
        };
        let actor = MlpParams::glorot(&dims(obs_dim, 2 * act_dim), Activation::Relu, Activation::Identity, rng);
        let q1 = MlpParams::glorot(&dims(obs_dim + act_dim, 1), Activation::Relu, Activation::Identity, rng);
        let q2 = MlpParams::glorot(&dims(obs_dim + act_dim, 1), Activation::Relu, Activation::Identity, rng);
        Ok(Self {
            adam_actor: AdamState::for_params(&actor, cfg.lr),
            adam_q1: AdamState::for_params(&q1, cfg.lr),
            adam_q2: AdamState::for_params(&q2, cfg.lr),
            adam_alpha: AdamState::new(1, cfg.lr),
            q1_target: q1.clone(),
            q2_target: q2.clone(),
            actor,
            q1,
            q2,
            log_alpha: libm::log(cfg.init_alpha),
            obs_dim,
            act_dim,
            target_entropy: cfg.target_entropy_for(act_dim),
        })
    }

    pub fn obs_dim(&self) -> usize {
        self.obs_dim
    }

    pub fn act_dim(&self) -> usize {
        self.act_dim
    }

    pub fn alpha(&self) -> f64 {
        libm::exp(self.log_alpha)
    }

    pub fn target_entropy(&self) -> f64 {
        self.target_entropy
    }

    /// Number of gradient updates applied.
    pub fn update_count(&self) -> u64 {
        self.adam_q1.step_count()
    }

    pub fn select_action<R: Rng + ?Sized>(&self, proprio: &[f64], mode: ActionMode, rng: &mut R) -> Result<Vec<f64>> {
        if mode == ActionMode::Mean {
            return self.mean_action(proprio);
        }
        check_len("actor input", self.obs_dim, proprio.len())?;
        let out = self.actor.forward(proprio)?;
        let (mean, log_std) = out.split_at(self.act_dim);
        Ok(mean
            .iter()
            .zip(log_std)
            .map(|(m, ls)| squashed_draw(*m, *ls, StandardNormal.sample(rng)).action)
            .collect())
    }

    /// `tanh(mean)`, the deterministic action used for evaluation.
    pub fn mean_action(&self, proprio: &[f64]) -> Result<Vec<f64>> {
        check_len("actor input", self.obs_dim, proprio.len())?;
        let out = self.actor.forward(proprio)?;
        Ok(out[..self.act_dim].iter().map(|m| libm::tanh(*m).clamp(-ACTION_CLAMP, ACTION_CLAMP)).collect())
    }

    fn sample_policy<R: Rng + ?Sized>(&self, actor_out: &[f64], n: usize, rng: &mut R) -> PolicySample {
        let noise: Vec<f64> = (0..n * self.act_dim).map(|_| StandardNormal.sample(rng)).collect();
        self.squash(actor_out, &noise)
    }

    fn squash(&self, actor_out: &[f64], noise: &[f64]) -> PolicySample {
        let ad = self.act_dim;
        let n = noise.len() / ad;
        let mut s = PolicySample {
            actions: Vec::with_capacity(n * ad),
            log_probs: vec![0.0; n],
            noise: noise.to_vec(),
            stds: Vec::with_capacity(n * ad),
            clamped: Vec::with_capacity(n * ad),
        };
        for (r, row) in actor_out.chunks_exact(2 * ad).enumerate() {
            for j in 0..ad {
                let raw = row[ad + j];
                let d = squashed_draw(row[j], raw, noise[r * ad + j]);
                s.actions.push(d.action);
                s.log_probs[r] += d.log_prob;
                s.stds.push(d.std);
                s.clamped.push(!(LOG_STD_MIN..=LOG_STD_MAX).contains(&raw));
            }
        }
        s
    }

    /// Mean of `α·log π(a|s) − min Q(s, a)` over the batch for the given
    /// reparameterisation noise, its gradient with respect to the actor, and
    /// the mean log-probability.
    fn actor_objective(&self, obs: &[f64], n: usize, noise: &[f64]) -> Result<(f64, Gradients, f64)> {
        let ad = self.act_dim;
        let inv_n = 1.0 / n as f64;
        let alpha = self.alpha();
        let actor_cache = self.actor.forward_batch(obs, n)?;
        let ps = self.squash(actor_cache.output(), noise);
        let pi_in = concat_rows(obs, self.obs_dim, &ps.actions, ad, n);
        let c1 = self.q1.forward_batch(&pi_in, n)?;
        let c2 = self.q2.forward_batch(&pi_in, n)?;
        let (v1, v2) = (c1.output(), c2.output());
        let mut up1 = vec![0.0; n];
        let mut up2 = vec![0.0; n];
        let mut loss = 0.0;
        for i in 0..n {
            loss += (alpha * ps.log_probs[i] - v1[i].min(v2[i])) * inv_n;
            if v1[i] <= v2[i] {
                up1[i] = 1.0;
            } else {
                up2[i] = 1.0;
            }
        }
        let g1 = self.q1.input_grad_batch(&c1, &up1)?;
        let g2 = self.q2.input_grad_batch(&c2, &up2)?;
        let width = self.obs_dim + ad;
        let mut actor_up = vec![0.0; n * 2 * ad];
        for i in 0..n {
            for j in 0..ad {
                let k = i * ad + j;
                let dq = g1[i * width + self.obs_dim + j] + g2[i * width + self.obs_dim + j];
                let a = ps.actions[k];
                let da = 1.0 - a * a;
                let sz = ps.stds[k] * ps.noise[k];
                actor_up[i * 2 * ad + j] = (alpha * 2.0 * a - dq * da) * inv_n;
                if !ps.clamped[k] {
                    actor_up[i * 2 * ad + ad + j] = (alpha * (-1.0 + 2.0 * a * sz) - dq * da * sz) * inv_n;
                }
            }
        }
        let grad = self.actor.backward_batch(&actor_cache, &actor_up)?.0;
        let mean_logp = ps.log_probs.iter().sum::<f64>() * inv_n;
        Ok((loss, grad, mean_logp))
    }

    /// `y = r + γ·(1 − terminal)·(min target Q(s′, a′) − α·log π(a′|s′))`
    /// with `a′` freshly drawn from the current policy.
    pub fn td_targets<R: Rng + ?Sized>(&self, batch: &Batch, rewards: &[f64], gamma: f64, rng: &mut R) -> Result<Vec<f64>> {
        check_len("td rewards", batch.n, rewards.len())?;
        let n = batch.n;
        let next = self.actor.forward_batch(&batch.next_obs, n)?;
        let ps = self.sample_policy(next.output(), n, rng);
        let input = concat_rows(&batch.next_obs, self.obs_dim, &ps.actions, self.act_dim, n);
        let t1 = self.q1_target.forward_batch(&input, n)?.into_output();
        let t2 = self.q2_target.forward_batch(&input, n)?.into_output();
        let alpha = self.alpha();
        Ok((0..n)
            .map(|i| {
                if batch.terminal[i] {
                    rewards[i]
                } else {
                    rewards[i] + gamma * (t1[i].min(t2[i]) - alpha * ps.log_probs[i])
                }
            })
            .collect())
    }

    /// One critic, actor and temperature step on `batch`, then a soft target
    /// update. Nothing is modified if any loss or gradient is non-finite.
    pub fn update<R: Rng + ?Sized>(&mut self, batch: &Batch, reward_fn: &dyn RewardFn, cfg: &SacConfig, rng: &mut R) -> Result<UpdateStats> {
        check_len("batch observations", self.obs_dim, batch.obs_dim)?;
        check_len("batch actions", self.act_dim, batch.act_dim)?;
        let n = batch.n;
        if n == 0 {
            return Err(Error::Config("empty SAC batch".into()));
        }
        let rewards = reward_fn.rewards(batch)?;
        let y = self.td_targets(batch, &rewards, cfg.gamma, rng)?;
        let inv_n = 1.0 / n as f64;

        let sa = concat_rows(&batch.obs, self.obs_dim, &batch.act, self.act_dim, n);
        let mut q_loss = 0.0;
        let mut mean_q = 0.0;
        let mut critic_grads = Vec::with_capacity(2);
        for q in [&self.q1, &self.q2] {
            let cache = q.forward_batch(&sa, n)?;
            let out = cache.output();
            let mut up = vec![0.0; n];
            for i in 0..n {
                let e = out[i] - y[i];
                q_loss += 0.5 * e * e * inv_n;
                mean_q += 0.5 * out[i] * inv_n;
                up[i] = e * inv_n;
            }
            critic_grads.push(q.backward_batch(&cache, &up)?.0);
        }

        // Actor step against the critics as they were before this update.
        let noise: Vec<f64> = (0..n * self.act_dim).map(|_| StandardNormal.sample(rng)).collect();
        let (actor_loss, actor_grad, mean_logp) = self.actor_objective(&batch.obs, n, &noise)?;
        let alpha_grad = -(mean_logp + self.target_entropy);

        if !(q_loss.is_finite() && actor_loss.is_finite() && alpha_grad.is_finite())
            || !critic_grads.iter().all(Gradients::is_finite)
            || !actor_grad.is_finite()
        {
            return Err(Error::NonFinite("SAC loss"));
        }
        self.adam_q1.step(self.q1.as_mut_slice(), critic_grads[0].as_slice())?;
        self.adam_q2.step(self.q2.as_mut_slice(), critic_grads[1].as_slice())?;
        self.adam_actor.step(self.actor.as_mut_slice(), actor_grad.as_slice())?;
        let mut la = [self.log_alpha];
        self.adam_alpha.step(&mut la, &[alpha_grad])?;
        self.log_alpha = la[0];
        self.q1_target.soft_update_from(&self.q1, cfg.tau);
        self.q2_target.soft_update_from(&self.q2, cfg.tau);
        Ok(UpdateStats { q_loss, actor_loss, alpha: self.alpha(), mean_q, entropy: -mean_logp })
    }
}

/// Anything that can drive the environment during evaluation.
pub trait Policy {
    fn act(&self, env: &PointMassEnv) -> Result<Vec<f64>>;
}

/// Mean action of the actor.
impl Policy for SacAgent {
    fn act(&self, env: &PointMassEnv) -> Result<Vec<f64>> {
        self.mean_action(&env.observe().proprio)
    }
}

/// The scripted expert.
#[derive(Debug, Clone, Copy, Default)]
pub struct ExpertPolicy;

impl Policy for ExpertPolicy {
    fn act(&self, env: &PointMassEnv) -> Result<Vec<f64>> {
        Ok(env.expert_action().to_vec())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalReport {
    pub success_rate: f64,
    pub mean_return: f64,
    pub mean_episode_len: f64,
}

/// Roll out `episodes` deterministic episodes. Initial states come from a
/// generator seeded with `eval_seed` alone, so every call sees the same
/// goals regardless of training randomness.
pub fn evaluate(policy: &dyn Policy, cfg: &EnvConfig, episodes: usize, eval_seed: u64) -> Result<EvalReport> {
    use rand::SeedableRng;
    if episodes == 0 {
        return Err(Error::Config("evaluation needs at least one episode".into()));
    }
    let mut rng = crate::rng::Rng::seed_from_u64(eval_seed);
    let mut env = PointMassEnv::new(cfg.clone())?;
    let (mut successes, mut ret, mut len) = (0usize, 0.0, 0usize);
    for _ in 0..episodes {
        env.reset(&mut rng);
        loop {
            let a = policy.act(&env)?;
            let step = env.step(&a)?;
            ret += step.r_task;
            len += 1;
            if step.done {
                successes += step.success as usize;
                break;
            }
        }
    }
    let e = episodes as f64;
    Ok(EvalReport {
        success_rate: successes as f64 / e,
        mean_return: ret / e,
        mean_episode_len: len as f64 / e,
    })
}
