//! Trainable projection heads over the frozen oracle and the margin-ranking
//! losses that align them.
//!
//! The aligned reward is `cos(f_lang(l), f_img(e))`. Heads are trained on
//! preference pairs `(better, worse)` with the hinge
//! `max(0, r(worse) − r(better) + δ)`. Before any success, pairs come from
//! negatives ranked by their embedding distance to the goal image; after the
//! first success, from positive-vs-negative and within-trajectory progress.

use alloc::collections::VecDeque;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{check_len, Error, Result};
use crate::oracle::Embedding;
use crate::tensor::linalg::cosine_backward;
use crate::tensor::{adam_update, cosine_similarity, Activation, AdamState, Cosine, MlpParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HeadKind {
    /// Both heads are the identity map; the aligned reward is the raw one.
    Identity,
    /// Randomly initialised and never updated.
    Frozen,
    Trainable,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadsConfig {
    pub hidden: Vec<usize>,
    pub out_dim: usize,
    pub lr: f64,
}

impl Default for HeadsConfig {
    fn default() -> Self {
        Self { hidden: vec![256], out_dim: 64, lr: 1e-4 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionHeads {
    kind: HeadKind,
    pub img: MlpParams,
    pub lang: MlpParams,
    adam_img: AdamState,
    adam_lang: AdamState,
}

/// A single linear layer with identity weights.
fn identity_net(d: usize) -> MlpParams {
    let mut p = MlpParams::zeros(&[d, d], Activation::Tanh, Activation::Identity);
    for i in 0..d {
        p.as_mut_slice()[i * d + i] = 1.0;
    }
    p
}

impl ProjectionHeads {
    pub fn identity(d_emb: usize) -> Self {
        let net = identity_net(d_emb);
        Self {
            kind: HeadKind::Identity,
            adam_img: AdamState::for_params(&net, 0.0),
            adam_lang: AdamState::for_params(&net, 0.0),
            img: net.clone(),
            lang: net,
        }
    }

    /// Glorot-initialised heads `d_emb → hidden… → out_dim`, tanh hidden,
    /// linear output.
    pub fn random<R: Rng + ?Sized>(d_emb: usize, cfg: &HeadsConfig, kind: HeadKind, rng: &mut R) -> Self {
        if kind == HeadKind::Identity {
            return Self::identity(d_emb);
        }
        let mut dims = vec![d_emb];
        dims.extend_from_slice(&cfg.hidden);
        dims.push(cfg.out_dim);
        let img = MlpParams::glorot(&dims, Activation::Tanh, Activation::Identity, rng);
        let lang = MlpParams::glorot(&dims, Activation::Tanh, Activation::Identity, rng);
        Self {
            kind,
            adam_img: AdamState::for_params(&img, cfg.lr),
            adam_lang: AdamState::for_params(&lang, cfg.lr),
            img,
            lang,
        }
    }

    /// Wrap externally supplied networks, e.g. loaded from a checkpoint.
    pub fn from_nets(img: MlpParams, lang: MlpParams, kind: HeadKind, lr: f64) -> Result<Self> {
        check_len("head input dims", img.input_dim(), lang.input_dim())?;
        check_len("head output dims", img.output_dim(), lang.output_dim())?;
        Ok(Self {
            kind,
            adam_img: AdamState::for_params(&img, lr),
            adam_lang: AdamState::for_params(&lang, lr),
            img,
            lang,
        })
    }

    pub fn kind(&self) -> HeadKind {
        self.kind
    }

    pub fn input_dim(&self) -> usize {
        self.img.input_dim()
    }

    pub fn is_trainable(&self) -> bool {
        self.kind == HeadKind::Trainable
    }

    /// Number of Adam steps taken so far.
    pub fn update_count(&self) -> u64 {
        self.adam_img.step_count()
    }

    pub fn project_language(&self, lang: &Embedding) -> Result<Vec<f64>> {
        self.lang.forward(lang.as_slice())
    }

    /// Aligned rewards for a row-major `n × d_emb` block of image embeddings,
    /// given the already projected language embedding.
    pub fn rewards_for(&self, lang_proj: &[f64], imgs: &[f64], n: usize) -> Result<Vec<f64>> {
        let out = self.img.forward_batch(imgs, n)?;
        out.output()
            .chunks_exact(self.img.output_dim())
            .map(|row| cosine_similarity(lang_proj, row).map(|c| c.value))
            .collect()
    }
}

/// `cos(f_lang(lang), f_img(img))`.
pub fn projected_reward(heads: &ProjectionHeads, img: &Embedding, lang: &Embedding) -> Result<Cosine> {
    let l = heads.project_language(lang)?;
    let i = heads.img.forward(img.as_slice())?;
    cosine_similarity(&l, &i)
}

/// `max(0, r_neg − r_pos + delta)`.
pub fn ranking_loss(r_pos: f64, r_neg: f64, delta: f64) -> f64 {
    (r_neg - r_pos + delta).max(0.0)
}

#[derive(Debug, Clone, PartialEq)]
pub struct AlignConfig {
    /// Reward margin of the hinge.
    pub delta: f64,
    /// Minimum gap in distance-to-goal-image for a stage-1 pair.
    pub delta_l2: f64,
    /// Step gap of within-trajectory progress pairs.
    pub window_k: usize,
    pub batch_pairs: usize,
    pub use_goal_image: bool,
    pub max_positive_trajs: usize,
    pub negative_capacity: usize,
}

impl Default for AlignConfig {
    fn default() -> Self {
        Self {
            delta: 0.1,
            delta_l2: 0.2,
            window_k: 10,
            batch_pairs: 128,
            use_goal_image: true,
            max_positive_trajs: 200,
            negative_capacity: 20_000,
        }
    }
}

impl AlignConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.delta > 0.0) || !(self.delta_l2 > 0.0) {
            return Err(Error::Config("alignment margins must be positive".into()));
        }
        if self.window_k == 0 || self.batch_pairs == 0 {
            return Err(Error::Config("window_k and batch_pairs must be at least 1".into()));
        }
        if self.max_positive_trajs == 0 || self.negative_capacity == 0 {
            return Err(Error::Config("alignment buffer capacities must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NegativeSample {
    pub emb: Embedding,
    /// Embedding-space distance to the goal image, fixed at insertion.
    pub l2_to_goal: f64,
}

/// Successful trajectories and a ring of recent unsuccessful steps, all as
/// frozen image embeddings.
#[derive(Debug, Clone)]
pub struct AlignmentBuffers {
    positives: VecDeque<Vec<Embedding>>,
    positive_steps: usize,
    negatives: VecDeque<NegativeSample>,
    goal: Embedding,
    positive_count: usize,
    max_positive_trajs: usize,
    negative_capacity: usize,
}

impl AlignmentBuffers {
    pub fn new(goal: Embedding, cfg: &AlignConfig) -> Self {
        Self {
            positives: VecDeque::new(),
            positive_steps: 0,
            negatives: VecDeque::new(),
            goal,
            positive_count: 0,
            max_positive_trajs: cfg.max_positive_trajs,
            negative_capacity: cfg.negative_capacity,
        }
    }

    pub fn goal_embedding(&self) -> &Embedding {
        &self.goal
    }

    /// Positive steps ever collected. Never decreases, even when old
    /// trajectories are evicted.
    pub fn positive_count(&self) -> usize {
        self.positive_count
    }

    pub fn positive_trajectories(&self) -> impl Iterator<Item = &[Embedding]> {
        self.positives.iter().map(|t| t.as_slice())
    }

    pub fn negatives(&self) -> impl Iterator<Item = &NegativeSample> {
        self.negatives.iter()
    }

    pub fn num_negatives(&self) -> usize {
        self.negatives.len()
    }

    /// File a finished episode. `success` must mean the last step is a
    /// success step; successful episodes become one positive trajectory,
    /// the rest become negatives.
    pub fn add_episode(&mut self, steps: Vec<Embedding>, success: bool) {
        if steps.is_empty() {
            return;
        }
        if success {
            self.positive_count += steps.len();
            self.positive_steps += steps.len();
            self.positives.push_back(steps);
            if self.positives.len() > self.max_positive_trajs {
                if let Some(old) = self.positives.pop_front() {
                    self.positive_steps -= old.len();
                }
            }
        } else {
            for emb in steps {
                self.add_negative(emb);
            }
        }
    }

    pub fn add_negative(&mut self, emb: Embedding) {
        let l2_to_goal = emb.l2_to(&self.goal);
        if self.negatives.len() == self.negative_capacity {
            self.negatives.pop_front();
        }
        self.negatives.push_back(NegativeSample { emb, l2_to_goal });
    }

    fn positive_step(&self, mut flat: usize) -> &Embedding {
        for t in &self.positives {
            if flat < t.len() {
                return &t[flat];
            }
            flat -= t.len();
        }
        unreachable!("flat index within positive_steps")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Stage {
    /// Ranking negatives by distance to the goal image.
    GoalDistance,
    /// Ranking with positive samples.
    Positive,
}

impl Stage {
    pub fn number(self) -> u8 {
        match self {
            Stage::GoalDistance => 1,
            Stage::Positive => 2,
        }
    }
}

/// Preference pairs stored as two aligned row-major embedding blocks.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct PairSet {
    pub better: Vec<f64>,
    pub worse: Vec<f64>,
    pub len: usize,
}

impl PairSet {
    fn push(&mut self, better: &Embedding, worse: &Embedding) {
        self.better.extend_from_slice(better.as_slice());
        self.worse.extend_from_slice(worse.as_slice());
        self.len += 1;
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

/// Pair groups whose mean hinge losses are summed.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignBatch {
    pub stage: Stage,
    pub groups: Vec<PairSet>,
}

impl AlignBatch {
    pub fn num_pairs(&self) -> usize {
        self.groups.iter().map(|g| g.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.num_pairs() == 0
    }
}

/// Pairs of negatives ordered by distance to the goal image, keeping only
/// those at least `delta_l2` apart. Rejection sampling with at most four
/// draws per requested pair, so the batch may come back short or empty.
pub fn sample_stage1_batch<R: Rng + ?Sized>(buffers: &AlignmentBuffers, cfg: &AlignConfig, rng: &mut R) -> Result<AlignBatch> {
    if !cfg.use_goal_image {
        return Err(Error::StageGate("goal-distance pairs need the goal image"));
    }
    if buffers.positive_count > 0 {
        return Err(Error::StageGate("goal-distance pairs are only used before the first success"));
    }
    let mut pairs = PairSet::default();
    let n = buffers.negatives.len();
    if n >= 2 {
        for _ in 0..4 * cfg.batch_pairs {
            if pairs.len == cfg.batch_pairs {
                break;
            }
            let a = &buffers.negatives[rng.gen_range(0..n)];
            let b = &buffers.negatives[rng.gen_range(0..n)];
            if a.l2_to_goal < b.l2_to_goal - cfg.delta_l2 {
                pairs.push(&a.emb, &b.emb);
            } else if b.l2_to_goal < a.l2_to_goal - cfg.delta_l2 {
                pairs.push(&b.emb, &a.emb);
            }
        }
    }
    Ok(AlignBatch { stage: Stage::GoalDistance, groups: vec![pairs] })
}

/// Half positive-over-negative pairs, half "step i beats step i − k" pairs
/// from one successful trajectory.
pub fn sample_stage2_batch<R: Rng + ?Sized>(buffers: &AlignmentBuffers, cfg: &AlignConfig, rng: &mut R) -> Result<AlignBatch> {
    if buffers.positive_steps == 0 {
        return Err(Error::StageGate("positive pairs need at least one successful trajectory"));
    }
    let half = cfg.batch_pairs / 2;
    let mut pos_neg = PairSet::default();
    if !buffers.negatives.is_empty() {
        for _ in 0..cfg.batch_pairs - half {
            let p = buffers.positive_step(rng.gen_range(0..buffers.positive_steps));
            let n = &buffers.negatives[rng.gen_range(0..buffers.negatives.len())];
            pos_neg.push(p, &n.emb);
        }
    }
    let k = cfg.window_k;
    let eligible: Vec<&Vec<Embedding>> = buffers.positives.iter().filter(|t| t.len() > k).collect();
    let mut pos_pos = PairSet::default();
    if !eligible.is_empty() {
        for _ in 0..half {
            let t = eligible[rng.gen_range(0..eligible.len())];
            let i = rng.gen_range(k..t.len());
            pos_pos.push(&t[i], &t[i - k]);
        }
    }
    Ok(AlignBatch { stage: Stage::Positive, groups: vec![pos_neg, pos_pos] })
}

/// Loss and parameter gradients of both heads.
#[derive(Debug, Clone)]
pub struct LossGrad {
    pub loss: f64,
    pub img: crate::tensor::Gradients,
    pub lang: crate::tensor::Gradients,
    /// Pairs whose hinge was active.
    pub violated: usize,
}

/// Sum over groups of the mean hinge loss, with gradients.
pub fn alignment_loss_grad(heads: &ProjectionHeads, batch: &AlignBatch, lang: &Embedding, delta: f64) -> Result<LossGrad> {
    let d = heads.input_dim();
    check_len("alignment language embedding", d, lang.dim())?;
    let lang_cache = heads.lang.forward_batch(lang.as_slice(), 1)?;
    let lp = lang_cache.output().to_vec();
    let od = heads.img.output_dim();
    let mut g_img = crate::tensor::Gradients::zeros_like(&heads.img);
    let mut g_lp = vec![0.0; od];
    let mut loss = 0.0;
    let mut violated = 0;
    for g in batch.groups.iter().filter(|g| !g.is_empty()) {
        let n = g.len;
        check_len("alignment pair block", n * d, g.better.len())?;
        check_len("alignment pair block", n * d, g.worse.len())?;
        let mut rows = Vec::with_capacity(2 * n * d);
        rows.extend_from_slice(&g.better);
        rows.extend_from_slice(&g.worse);
        let cache = heads.img.forward_batch(&rows, 2 * n)?;
        let out = cache.output();
        let mut upstream = vec![0.0; 2 * n * od];
        let w = 1.0 / n as f64;
        for p in 0..n {
            let (ob, ow) = (&out[p * od..(p + 1) * od], &out[(n + p) * od..(n + p + 1) * od]);
            let rb = cosine_similarity(&lp, ob)?.value;
            let rw = cosine_similarity(&lp, ow)?.value;
            let l = ranking_loss(rb, rw, delta);
            if l > 0.0 {
                loss += w * l;
                violated += 1;
                let (ub, rest) = upstream.split_at_mut((n + p) * od);
                cosine_backward(&lp, ob, -w, &mut g_lp, &mut ub[p * od..(p + 1) * od]);
                cosine_backward(&lp, ow, w, &mut g_lp, &mut rest[..od]);
            }
        }
        if upstream.iter().any(|u| *u != 0.0) {
            heads.img.accumulate_grads(&cache, &upstream, &mut g_img)?;
        }
    }
    let mut g_lang = crate::tensor::Gradients::zeros_like(&heads.lang);
    if violated > 0 {
        heads.lang.accumulate_grads(&lang_cache, &g_lp, &mut g_lang)?;
    }
    Ok(LossGrad { loss, img: g_img, lang: g_lang, violated })
}

/// Loss only, for checks.
pub fn alignment_loss(heads: &ProjectionHeads, batch: &AlignBatch, lang: &Embedding, delta: f64) -> Result<f64> {
    Ok(alignment_loss_grad(heads, batch, lang, delta)?.loss)
}

/// One Adam step on both heads; returns the loss before the step. Batches
/// with zero loss, and heads that are not trainable, leave parameters
/// untouched.
pub fn alignment_update(heads: &mut ProjectionHeads, batch: &AlignBatch, lang: &Embedding, cfg: &AlignConfig) -> Result<f64> {
    if batch.is_empty() {
        return Ok(0.0);
    }
    let lg = alignment_loss_grad(heads, batch, lang, cfg.delta)?;
    if !lg.loss.is_finite() || !lg.img.is_finite() || !lg.lang.is_finite() {
        return Err(Error::NonFinite("alignment loss"));
    }
    if lg.violated == 0 || !heads.is_trainable() {
        return Ok(lg.loss);
    }
    adam_update(&mut heads.img, &lg.img, &mut heads.adam_img)?;
    adam_update(&mut heads.lang, &lg.lang, &mut heads.adam_lang)?;
    Ok(lg.loss)
}
