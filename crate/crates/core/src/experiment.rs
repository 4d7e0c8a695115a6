//! Algorithm variants, their wiring, and the seeded training loop.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::align::{
    alignment_update, sample_stage1_batch, sample_stage2_batch, AlignConfig, AlignmentBuffers, HeadKind, HeadsConfig,
    ProjectionHeads, Stage,
};
use crate::env::{EnvConfig, PointMassEnv, Task, TrajectoryRow};
use crate::error::{Error, Result};
use crate::oracle::{Embedding, EmbeddingOracle, OracleConfig};
use crate::relay::{begin_episode, route_updates, Acting, RelayConfig};
use crate::rng::{self, Streams};
use crate::sac::{
    evaluate, Actor, ActionMode, RewardFn, ReplayBuffer, SacAgent, SacConfig, StoredReward, TaskReward, Transition,
    UpdateStats, VlmReward,
};
use crate::stats::normalized_auc;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Algo {
    Sac,
    VlmOnly,
    VlmPlusTask,
    RandomProj,
    Relay,
    Furl,
    FurlNoGoalImage,
    FurlNoRelay,
    FurlNoStage1,
    FurlNoStage2,
}

impl Algo {
    pub const ALL: [Algo; 10] = [
        Algo::Sac,
        Algo::VlmOnly,
        Algo::VlmPlusTask,
        Algo::RandomProj,
        Algo::Relay,
        Algo::Furl,
        Algo::FurlNoGoalImage,
        Algo::FurlNoRelay,
        Algo::FurlNoStage1,
        Algo::FurlNoStage2,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algo::Sac => "sac",
            Algo::VlmOnly => "vlm_only",
            Algo::VlmPlusTask => "vlm_plus_task",
            Algo::RandomProj => "random_proj",
            Algo::Relay => "relay",
            Algo::Furl => "furl",
            Algo::FurlNoGoalImage => "furl_no_goal_image",
            Algo::FurlNoRelay => "furl_no_relay",
            Algo::FurlNoStage1 => "furl_no_stage1",
            Algo::FurlNoStage2 => "furl_no_stage2",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Self::ALL.into_iter().find(|a| a.name() == s)
    }
}

/// Which reward terms and components a run uses.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Wiring {
    pub task_weight: f64,
    pub vlm_weight: f64,
    pub heads: HeadKind,
    pub relay: bool,
    /// Goal-image ranking before the first success.
    pub stage1: bool,
    /// Positive-sample ranking after it.
    pub stage2: bool,
}

impl Wiring {
    pub fn for_algo(algo: Algo, rho: f64) -> Self {
        let base = Wiring {
            task_weight: 1.0,
            vlm_weight: rho,
            heads: HeadKind::Identity,
            relay: false,
            stage1: false,
            stage2: false,
        };
        let furl = Wiring { heads: HeadKind::Trainable, relay: true, stage1: true, stage2: true, ..base };
        match algo {
            Algo::Sac => Wiring { vlm_weight: 0.0, ..base },
            Algo::VlmOnly => Wiring { task_weight: 0.0, vlm_weight: 1.0, ..base },
            Algo::VlmPlusTask => base,
            Algo::RandomProj => Wiring { heads: HeadKind::Frozen, ..base },
            Algo::Relay => Wiring { relay: true, ..base },
            Algo::Furl => furl,
            Algo::FurlNoGoalImage | Algo::FurlNoStage1 => Wiring { stage1: false, ..furl },
            Algo::FurlNoRelay => Wiring { relay: false, ..furl },
            Algo::FurlNoStage2 => Wiring { stage2: false, ..furl },
        }
        .normalized()
    }

    /// With no VLM term the heads cannot affect any reward, so alignment is
    /// dropped and the heads reduce to the identity.
    pub fn normalized(self) -> Self {
        if self.vlm_weight == 0.0 {
            Wiring { heads: HeadKind::Identity, stage1: false, stage2: false, ..self }
        } else {
            self
        }
    }

    pub fn uses_oracle(&self) -> bool {
        self.vlm_weight != 0.0
    }

    pub fn aligns(&self) -> bool {
        self.heads == HeadKind::Trainable && (self.stage1 || self.stage2)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RewardMode {
    /// Rewards are recomputed with the current heads whenever a batch is
    /// sampled.
    Recompute,
    /// Rewards are frozen at collection time.
    StoreAtCollect,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub algo: Algo,
    pub env: EnvConfig,
    pub rho: f64,
    pub oracle: OracleConfig,
    /// Oracle seed; derived from `seed` when unset.
    pub oracle_seed: Option<u64>,
    pub total_steps: usize,
    pub eval_every: usize,
    pub eval_episodes: usize,
    pub seed: u64,
    pub sac: SacConfig,
    pub heads: HeadsConfig,
    pub align: AlignConfig,
    pub relay: RelayConfig,
    pub reward_mode: RewardMode,
    /// Environment steps between alignment updates.
    pub align_every: usize,
    /// Dump every n-th training episode; 0 turns dumps off.
    pub trajectory_every: usize,
}

impl ExperimentConfig {
    pub fn new(algo: Algo, task: Task) -> Self {
        Self {
            algo,
            env: EnvConfig::new(task),
            rho: 0.05,
            oracle: OracleConfig::default(),
            oracle_seed: None,
            total_steps: 200_000,
            eval_every: 5_000,
            eval_episodes: 10,
            seed: 0,
            sac: SacConfig::default(),
            heads: HeadsConfig::default(),
            align: AlignConfig::default(),
            relay: RelayConfig::default(),
            reward_mode: RewardMode::Recompute,
            align_every: 1,
            trajectory_every: 0,
        }
    }

    pub fn wiring(&self) -> Wiring {
        Wiring::for_algo(self.algo, self.rho)
    }

    pub fn validate(&self) -> Result<()> {
        self.env.validate()?;
        self.sac.validate()?;
        self.align.validate()?;
        self.relay.validate(self.env.episode_len)?;
        if !(self.rho >= 0.0) || !self.rho.is_finite() {
            return Err(Error::Config("rho must be a non-negative number".into()));
        }
        if !(0.0..=1.0).contains(&self.oracle.epsilon) {
            return Err(Error::Config("epsilon must lie in [0, 1]".into()));
        }
        if self.eval_every == 0 || self.eval_episodes == 0 || self.align_every == 0 {
            return Err(Error::Config("eval_every, eval_episodes and align_every must be positive".into()));
        }
        if self.heads.out_dim == 0 || self.heads.hidden.contains(&0) {
            return Err(Error::Config("head sizes must be positive".into()));
        }
        Ok(())
    }

    pub fn resolved_oracle(&self) -> OracleConfig {
        let seed = self.oracle_seed.unwrap_or_else(|| Streams::new(self.seed).seed(rng::ORACLE));
        OracleConfig { seed, ..self.oracle.clone() }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalRow {
    pub env_step: usize,
    pub success_rate: f64,
    pub mean_return: f64,
    pub alpha: f64,
    pub q_loss: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlignRow {
    pub step: usize,
    pub stage: Stage,
    pub loss: f64,
    pub positive_count: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RelayRow {
    pub episode: u64,
    /// Segment length, 0 when the relay was off.
    pub relay_t: usize,
    pub segments: Vec<(Acting, usize, usize)>,
    pub success: bool,
}

impl RelayRow {
    /// `vlm:0-49|sac:50-99|…`, end-exclusive.
    pub fn segments_string(&self) -> String {
        let parts: Vec<String> = self.segments.iter().map(|(a, s, e)| format!("{}:{}-{}", a.name(), s, e)).collect();
        parts.join("|")
    }
}

/// Receives rows as they are produced.
pub trait MetricsSink {
    fn eval(&mut self, _row: &EvalRow) -> Result<()> {
        Ok(())
    }
    fn align(&mut self, _row: &AlignRow) -> Result<()> {
        Ok(())
    }
    fn relay(&mut self, _row: &RelayRow) -> Result<()> {
        Ok(())
    }
    fn trajectory(&mut self, _row: &TrajectoryRow) -> Result<()> {
        Ok(())
    }
}

/// Discards everything.
#[derive(Debug, Default)]
pub struct NullSink;

impl MetricsSink for NullSink {}

/// How often each reward path and component was exercised.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub env_steps: usize,
    pub episodes: u64,
    pub train_successes: u64,
    pub task_reward_batches: usize,
    pub vlm_reward_batches: usize,
    pub vlm_updates: usize,
    pub sac_updates: usize,
    pub stage1_updates: usize,
    pub stage2_updates: usize,
    pub oracle_image_calls: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Summary {
    pub final_success: f64,
    pub auc: f64,
    /// Env step at which the first successful training episode ended.
    pub first_success_step: Option<usize>,
    pub positive_count: usize,
}

#[derive(Debug, Clone)]
pub struct MetricsLog {
    pub eval: Vec<EvalRow>,
    pub relay: Vec<RelayRow>,
    pub align_rows: usize,
    pub summary: Summary,
    pub counters: Counters,
}

/// Everything a finished run leaves behind.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub log: MetricsLog,
    pub heads: ProjectionHeads,
    pub agent: SacAgent,
    pub oracle: EmbeddingOracle,
    pub oracle_checksum_before: u64,
}

/// Final success and normalised area under the success curve.
pub fn summarize(eval: &[EvalRow], first_success_step: Option<usize>, positive_count: usize) -> Summary {
    let pts: Vec<(f64, f64)> = eval.iter().map(|r| (r.env_step as f64, r.success_rate)).collect();
    Summary {
        final_success: eval.last().map_or(0.0, |r| r.success_rate),
        auc: normalized_auc(&pts),
        first_success_step,
        positive_count,
    }
}

/// Components of one run before any step is taken.
pub struct Built {
    pub cfg: ExperimentConfig,
    pub wiring: Wiring,
    pub oracle: EmbeddingOracle,
    pub lang: Embedding,
    pub heads: ProjectionHeads,
    pub vlm_agent: SacAgent,
    pub sac_agent: Option<SacAgent>,
    pub buffers: Option<AlignmentBuffers>,
}

pub fn build(cfg: &ExperimentConfig) -> Result<Built> {
    cfg.validate()?;
    let wiring = cfg.wiring();
    let streams = Streams::new(cfg.seed);
    let oracle = EmbeddingOracle::new(&cfg.resolved_oracle(), core::slice::from_ref(&cfg.env))?;
    let lang = oracle.embed_language(cfg.env.task)?;
    let d = oracle.d_emb();
    let heads = ProjectionHeads::random(d, &cfg.heads, wiring.heads, &mut streams.stream(rng::NET_INIT_HEADS));
    let obs_dim = cfg.env.task.proprio_dim();
    let vlm_agent = SacAgent::new(obs_dim, 2, &cfg.sac, &mut streams.stream(rng::NET_INIT_VLM))?;
    let sac_agent = if wiring.relay {
        Some(SacAgent::new(obs_dim, 2, &cfg.sac, &mut streams.stream(rng::NET_INIT_SAC))?)
    } else {
        None
    };
    let buffers = if wiring.aligns() {
        let goal = oracle.embed_image(&crate::env::goal_observation(&cfg.env).visual_feature)?;
        Some(AlignmentBuffers::new(goal, &cfg.align))
    } else {
        None
    };
    Ok(Built { cfg: cfg.clone(), wiring, oracle, lang, heads, vlm_agent, sac_agent, buffers })
}

fn stage_for(wiring: &Wiring, align: &AlignConfig, buffers: Option<&AlignmentBuffers>) -> Option<Stage> {
    let b = buffers?;
    if b.positive_count() > 0 {
        wiring.stage2.then_some(Stage::Positive)
    } else if wiring.stage1 && align.use_goal_image && b.num_negatives() >= 2 {
        Some(Stage::GoalDistance)
    } else {
        None
    }
}

struct Rngs {
    env: crate::rng::Rng,
    warmup: crate::rng::Rng,
    act_vlm: crate::rng::Rng,
    act_sac: crate::rng::Rng,
    replay_vlm: crate::rng::Rng,
    replay_sac: crate::rng::Rng,
    update_vlm: crate::rng::Rng,
    update_sac: crate::rng::Rng,
    relay: crate::rng::Rng,
    align: crate::rng::Rng,
}

impl Rngs {
    fn new(s: &Streams) -> Self {
        Self {
            env: s.stream(rng::ENV),
            warmup: s.stream(rng::WARMUP),
            act_vlm: s.stream(rng::ACTION_VLM),
            act_sac: s.stream(rng::ACTION_SAC),
            replay_vlm: s.stream(rng::REPLAY_VLM),
            replay_sac: s.stream(rng::REPLAY_SAC),
            update_vlm: s.stream(rng::UPDATE_VLM),
            update_sac: s.stream(rng::UPDATE_SAC),
            relay: s.stream(rng::RELAY),
            align: s.stream(rng::ALIGN),
        }
    }
}

/// Execute a full run, streaming rows into `sink`.
pub fn run(cfg: &ExperimentConfig, sink: &mut dyn MetricsSink) -> Result<RunOutput> {
    let Built { cfg, wiring, oracle, lang, mut heads, mut vlm_agent, mut sac_agent, mut buffers } = build(cfg)?;
    let checksum = oracle.checksum();
    let streams = Streams::new(cfg.seed);
    let eval_seed = streams.seed(rng::EVAL);
    let mut r = Rngs::new(&streams);
    let mut env = PointMassEnv::new(cfg.env.clone())?;
    let mut replay = ReplayBuffer::new(cfg.sac.buffer_capacity);
    let embeds = wiring.uses_oracle();

    let mut counters = Counters::default();
    let mut eval_rows = Vec::new();
    let mut relay_rows = Vec::new();
    let mut align_rows = 0usize;
    let mut last_stats = UpdateStats { alpha: vlm_agent.alpha(), ..UpdateStats::default() };
    let mut first_success = None;
    let mut positive_count = 0usize;

    let record_eval = |step: usize, agent: &SacAgent, stats: &UpdateStats, rows: &mut Vec<EvalRow>, sink: &mut dyn MetricsSink| -> Result<()> {
        let rep = evaluate(agent, &cfg.env, cfg.eval_episodes, eval_seed)?;
        let row = EvalRow {
            env_step: step,
            success_rate: rep.success_rate,
            mean_return: rep.mean_return,
            alpha: agent.alpha(),
            q_loss: stats.q_loss,
        };
        sink.eval(&row)?;
        rows.push(row);
        Ok(())
    };
    record_eval(0, &vlm_agent, &last_stats, &mut eval_rows, sink)?;

    let mut step = 0usize;
    while step < cfg.total_steps {
        let episode = counters.episodes;
        counters.episodes += 1;
        let mut obs = env.reset(&mut r.env);
        let mut relay_state = if wiring.relay {
            begin_episode(&cfg.relay, positive_count, &mut r.relay)
        } else {
            begin_episode(&RelayConfig::disabled(), positive_count, &mut r.relay)
        };
        let relay_t = if relay_state.disabled { 0 } else { relay_state.current_t };
        let mut owners: Vec<(Acting, usize, usize)> = Vec::new();
        let mut episode_embs: Vec<Embedding> = Vec::new();
        let mut success = false;
        let dump = cfg.trajectory_every > 0 && episode % cfg.trajectory_every as u64 == 0;
        let mut t = 0usize;
        loop {
            let acting = relay_state.active;
            let (action, actor) = if step < cfg.sac.warmup_steps {
                ([r.warmup.gen_range(-1.0..1.0), r.warmup.gen_range(-1.0..1.0)].to_vec(), Actor::Warmup)
            } else {
                match (acting, sac_agent.as_ref()) {
                    (Acting::Sac, Some(a)) => (a.select_action(&obs.proprio, ActionMode::Sample, &mut r.act_sac)?, Actor::Sac),
                    _ => (vlm_agent.select_action(&obs.proprio, ActionMode::Sample, &mut r.act_vlm)?, Actor::Vlm),
                }
            };
            let res = env.step(&action)?;
            let img_emb = if embeds { oracle.embed_image(&res.obs.visual_feature)? } else { Embedding(Vec::new()) };
            let collected_reward = match cfg.reward_mode {
                RewardMode::StoreAtCollect if embeds => {
                    VlmReward::new(&heads, &lang, wiring.vlm_weight, wiring.task_weight)?.single(&img_emb, res.r_task)?
                }
                _ => wiring.task_weight * res.r_task,
            };
            match owners.last_mut() {
                Some(o) if o.0 == acting => o.2 = t + 1,
                _ => owners.push((acting, t, t + 1)),
            }
            if dump {
                let s = env.state();
                sink.trajectory(&TrajectoryRow {
                    episode,
                    t: s.t,
                    agent: s.agent_pos,
                    object: s.object_pos,
                    goal: s.goal_pos,
                    action: [action[0], action[1]],
                    r_task: res.r_task,
                    success: res.success,
                })?;
            }
            if buffers.is_some() {
                episode_embs.push(img_emb.clone());
            }
            replay.push(Transition {
                proprio: obs.proprio.clone(),
                action,
                r_task: res.r_task,
                img_emb,
                next_proprio: res.obs.proprio.clone(),
                done: res.done,
                terminal: res.success,
                collected_reward,
                traj_id: episode,
                step_idx: t as u32,
                actor,
            });
            step += 1;
            t += 1;
            counters.env_steps = step;

            let plan = route_updates(relay_state.is_relaying() && sac_agent.is_some(), stage_for(&wiring, &cfg.align, buffers.as_ref()), cfg.sac.updates_per_step);
            if step >= cfg.sac.warmup_steps {
                for _ in 0..plan.vlm_updates {
                    let batch = replay.sample(cfg.sac.batch_size, &mut r.replay_vlm)?;
                    let stats = match cfg.reward_mode {
                        _ if !embeds => {
                            counters.task_reward_batches += 1;
                            vlm_agent.update(&batch, &TaskReward, &cfg.sac, &mut r.update_vlm)?
                        }
                        RewardMode::Recompute => {
                            counters.vlm_reward_batches += 1;
                            if wiring.task_weight != 0.0 {
                                counters.task_reward_batches += 1;
                            }
                            let rf = VlmReward::new(&heads, &lang, wiring.vlm_weight, wiring.task_weight)?;
                            vlm_agent.update(&batch, &rf as &dyn RewardFn, &cfg.sac, &mut r.update_vlm)?
                        }
                        RewardMode::StoreAtCollect => {
                            counters.vlm_reward_batches += 1;
                            vlm_agent.update(&batch, &StoredReward, &cfg.sac, &mut r.update_vlm)?
                        }
                    };
                    last_stats = stats;
                    counters.vlm_updates += 1;
                }
                if let Some(agent) = sac_agent.as_mut() {
                    for _ in 0..plan.sac_updates {
                        let batch = replay.sample(cfg.sac.batch_size, &mut r.replay_sac)?;
                        counters.task_reward_batches += 1;
                        agent.update(&batch, &TaskReward, &cfg.sac, &mut r.update_sac)?;
                        counters.sac_updates += 1;
                    }
                }
            }
            if let (Some(stage), Some(b)) = (plan.alignment, buffers.as_ref()) {
                if step.is_multiple_of(cfg.align_every) {
                    let batch = match stage {
                        Stage::GoalDistance => sample_stage1_batch(b, &cfg.align, &mut r.align)?,
                        Stage::Positive => sample_stage2_batch(b, &cfg.align, &mut r.align)?,
                    };
                    let loss = alignment_update(&mut heads, &batch, &lang, &cfg.align)?;
                    match stage {
                        Stage::GoalDistance => counters.stage1_updates += 1,
                        Stage::Positive => counters.stage2_updates += 1,
                    }
                    let row = AlignRow { step, stage, loss, positive_count: b.positive_count() };
                    sink.align(&row)?;
                    align_rows += 1;
                }
            }
            relay_state.advance();

            if step.is_multiple_of(cfg.eval_every) {
                record_eval(step, &vlm_agent, &last_stats, &mut eval_rows, sink)?;
            }
            obs = res.obs;
            if res.success {
                success = true;
            }
            if res.done || step >= cfg.total_steps {
                break;
            }
        }
        if success {
            counters.train_successes += 1;
            positive_count += t;
            first_success.get_or_insert(step);
        }
        if let Some(b) = buffers.as_mut() {
            b.add_episode(episode_embs, success);
        }
        let row = RelayRow { episode, relay_t, segments: owners, success };
        sink.relay(&row)?;
        relay_rows.push(row);
    }
    if eval_rows.last().is_none_or(|r| r.env_step != step) {
        record_eval(step, &vlm_agent, &last_stats, &mut eval_rows, sink)?;
    }
    counters.oracle_image_calls = oracle.image_calls();
    let summary = summarize(&eval_rows, first_success, positive_count);
    Ok(RunOutput {
        log: MetricsLog { eval: eval_rows, relay: relay_rows, align_rows, summary, counters },
        heads,
        agent: vlm_agent,
        oracle,
        oracle_checksum_before: checksum,
    })
}
