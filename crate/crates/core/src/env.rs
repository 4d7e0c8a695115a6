//! Sparse-reward point-mass tasks in the box [−1, 1]².
//!
//! Three tasks share one kinematic model: `reach` (move the agent onto the
//! goal), `trap_reach` (same, with a distractor location the embedding
//! oracle confuses with the goal) and `push` (shove a disk onto the goal).
//! The task reward is already shaped to {−1, 0}: every step costs −1 until
//! the success step, which pays 0 and ends the episode.

use alloc::vec;
use alloc::vec::Vec;

use rand::Rng;

use crate::error::{Error, Result};

pub type Vec2 = [f64; 2];

/// Half-width of the square arena.
pub const ARENA: f64 = 1.0;
pub const AGENT_RADIUS: f64 = 0.04;
pub const OBJECT_RADIUS: f64 = 0.08;
/// Radius of the distractor region in `trap_reach`.
pub const TRAP_RADIUS: f64 = 0.15;
/// Length of [`Observation::visual_feature`] for every task.
pub const VISUAL_DIM: usize = 8;

pub const TRAP_START: Vec2 = [-0.6, 0.0];
pub const TRAP_GOAL: Vec2 = [0.5, 0.8];
pub const TRAP_CENTER: Vec2 = [0.5, -0.8];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Task {
    Reach,
    TrapReach,
    Push,
}

impl Task {
    pub const ALL: [Task; 3] = [Task::Reach, Task::TrapReach, Task::Push];

    pub fn name(self) -> &'static str {
        match self {
            Task::Reach => "reach",
            Task::TrapReach => "trap_reach",
            Task::Push => "push",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Task::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn has_object(self) -> bool {
        self == Task::Push
    }

    pub fn has_trap(self) -> bool {
        self == Task::TrapReach
    }

    pub fn proprio_dim(self) -> usize {
        if self.has_object() {
            6
        } else {
            4
        }
    }

    fn start(self) -> (Vec2, Vec2) {
        match self {
            Task::Reach => ([-0.6, -0.4], [0.0, 0.0]),
            Task::TrapReach => (TRAP_START, [0.0, 0.0]),
            Task::Push => ([-0.8, 0.0], [-0.35, 0.0]),
        }
    }

    pub fn canonical_goal(self) -> Vec2 {
        match self {
            Task::Reach => [0.5, 0.4],
            Task::TrapReach => TRAP_GOAL,
            Task::Push => [0.4, 0.3],
        }
    }

    /// Axis-aligned box `(lo, hi)` that random goals are drawn from.
    fn goal_region(self) -> (Vec2, Vec2) {
        match self {
            Task::Reach => ([0.1, -0.6], [0.9, 0.9]),
            Task::TrapReach => ([0.5, 0.2], [0.9, 0.8]),
            Task::Push => ([0.1, -0.4], [0.6, 0.5]),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum GoalMode {
    Fixed,
    Random,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvConfig {
    pub task: Task,
    pub goal_mode: GoalMode,
    pub episode_len: usize,
    pub success_radius: f64,
    pub step_scale: f64,
    pub trap_center: Vec2,
    pub seed: u64,
}

impl EnvConfig {
    pub fn new(task: Task) -> Self {
        Self {
            task,
            goal_mode: GoalMode::Fixed,
            episode_len: 200,
            success_radius: 0.05,
            step_scale: 0.05,
            trap_center: TRAP_CENTER,
            seed: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.episode_len == 0 {
            return Err(Error::Config("episode_len must be positive".into()));
        }
        if !(self.success_radius > 0.0 && self.success_radius < ARENA) {
            return Err(Error::Config("success_radius must lie in (0, arena extent)".into()));
        }
        if !(self.step_scale > 0.0) {
            return Err(Error::Config("step_scale must be positive".into()));
        }
        if self.task.has_trap() {
            let g = self.task.canonical_goal();
            if distance(g, self.trap_center) <= self.success_radius {
                return Err(Error::Config("trap_center must differ from the goal".into()));
            }
            if self.trap_center.iter().any(|c| c.abs() > ARENA) {
                return Err(Error::Config("trap_center outside the arena".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnvState {
    pub agent_pos: Vec2,
    pub object_pos: Vec2,
    pub goal_pos: Vec2,
    pub t: usize,
    pub done: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Observation {
    /// Policy input: agent, goal and (push only) object positions.
    pub proprio: Vec<f64>,
    /// Oracle input: agent, object-or-zeros, goal, offset from the trap.
    pub visual_feature: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub obs: Observation,
    pub r_task: f64,
    pub success: bool,
    pub done: bool,
}

pub fn distance(a: Vec2, b: Vec2) -> f64 {
    libm::hypot(a[0] - b[0], a[1] - b[1])
}

fn clip_to_arena(p: Vec2) -> Vec2 {
    [p[0].clamp(-ARENA, ARENA), p[1].clamp(-ARENA, ARENA)]
}

#[derive(Debug, Clone)]
pub struct PointMassEnv {
    cfg: EnvConfig,
    state: EnvState,
}

impl PointMassEnv {
    pub fn new(cfg: EnvConfig) -> Result<Self> {
        cfg.validate()?;
        let state = canonical_state(&cfg);
        Ok(Self { cfg, state })
    }

    pub fn config(&self) -> &EnvConfig {
        &self.cfg
    }

    pub fn state(&self) -> &EnvState {
        &self.state
    }

    pub fn action_dim(&self) -> usize {
        2
    }

    /// Start a new episode. Random-goal mode draws the goal from `rng`;
    /// fixed mode never touches it.
    pub fn reset<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Observation {
        let mut state = canonical_state(&self.cfg);
        if self.cfg.goal_mode == GoalMode::Random {
            let (lo, hi) = self.cfg.task.goal_region();
            state.goal_pos = [rng.gen_range(lo[0]..=hi[0]), rng.gen_range(lo[1]..=hi[1])];
        }
        self.state = state;
        self.observe()
    }

    /// Replace the state wholesale, e.g. to start from a chosen position.
    pub fn set_state(&mut self, state: EnvState) {
        self.state = state;
    }

    pub fn observe(&self) -> Observation {
        observation(&self.cfg, &self.state)
    }

    pub fn step(&mut self, action: &[f64]) -> Result<StepResult> {
        if self.state.done {
            return Err(Error::EpisodeDone);
        }
        crate::error::check_len("env action", 2, action.len())?;
        if action.iter().any(|a| !a.is_finite()) {
            return Err(Error::NonFinite("env action"));
        }
        let a = [action[0].clamp(-1.0, 1.0), action[1].clamp(-1.0, 1.0)];
        let s = &mut self.state;
        s.agent_pos = clip_to_arena([
            s.agent_pos[0] + a[0] * self.cfg.step_scale,
            s.agent_pos[1] + a[1] * self.cfg.step_scale,
        ]);
        if self.cfg.task.has_object() {
            s.object_pos = resolve_contact(s.agent_pos, s.object_pos);
        }
        s.t += 1;
        let success = goal_distance(&self.cfg, s) <= self.cfg.success_radius;
        s.done = success || s.t >= self.cfg.episode_len;
        let done = s.done;
        Ok(StepResult {
            obs: self.observe(),
            r_task: if success { 0.0 } else { -1.0 },
            success,
            done,
        })
    }

    pub fn goal_distance(&self) -> f64 {
        goal_distance(&self.cfg, &self.state)
    }

    pub fn expert_action(&self) -> Vec2 {
        expert_policy(&self.cfg, &self.state)
    }
}

fn canonical_state(cfg: &EnvConfig) -> EnvState {
    let (agent, object) = cfg.task.start();
    EnvState {
        agent_pos: agent,
        object_pos: if cfg.task.has_object() { object } else { [0.0, 0.0] },
        goal_pos: cfg.task.canonical_goal(),
        t: 0,
        done: false,
    }
}

/// Push the object out of the agent disk along the line between centres.
fn resolve_contact(agent: Vec2, object: Vec2) -> Vec2 {
    let reach = AGENT_RADIUS + OBJECT_RADIUS;
    let d = distance(agent, object);
    if d >= reach {
        return object;
    }
    let dir = if d > 1e-12 {
        [(object[0] - agent[0]) / d, (object[1] - agent[1]) / d]
    } else {
        [1.0, 0.0]
    };
    let overlap = reach - d;
    clip_to_arena([object[0] + dir[0] * overlap, object[1] + dir[1] * overlap])
}

/// Distance from the task's target (agent, or object for push) to the goal.
pub fn goal_distance(cfg: &EnvConfig, s: &EnvState) -> f64 {
    let target = if cfg.task.has_object() { s.object_pos } else { s.agent_pos };
    distance(target, s.goal_pos)
}

pub fn observation(cfg: &EnvConfig, s: &EnvState) -> Observation {
    let mut proprio = vec![s.agent_pos[0], s.agent_pos[1], s.goal_pos[0], s.goal_pos[1]];
    if cfg.task.has_object() {
        proprio.extend_from_slice(&s.object_pos);
    }
    Observation {
        proprio,
        visual_feature: visual_feature(cfg, s),
    }
}

/// Scale on the agent-to-trap offset in the visual feature.
pub const TRAP_OFFSET_WEIGHT: f64 = 3.0;

fn visual_feature(cfg: &EnvConfig, s: &EnvState) -> Vec<f64> {
    let object = if cfg.task.has_object() { s.object_pos } else { [0.0, 0.0] };
    let offset = if cfg.task.has_trap() {
        [
            TRAP_OFFSET_WEIGHT * (s.agent_pos[0] - cfg.trap_center[0]),
            TRAP_OFFSET_WEIGHT * (s.agent_pos[1] - cfg.trap_center[1]),
        ]
    } else {
        [0.0, 0.0]
    };
    vec![
        s.agent_pos[0],
        s.agent_pos[1],
        object[0],
        object[1],
        s.goal_pos[0],
        s.goal_pos[1],
        offset[0],
        offset[1],
    ]
}

/// The observation of the canonical goal reached: the goal image.
pub fn goal_observation(cfg: &EnvConfig) -> Observation {
    let mut s = canonical_state(cfg);
    if cfg.task.has_object() {
        s.object_pos = s.goal_pos;
        let (start, _) = cfg.task.start();
        let dir = unit([s.goal_pos[0] - start[0], s.goal_pos[1] - start[1]]);
        let back = AGENT_RADIUS + OBJECT_RADIUS;
        s.agent_pos = [s.goal_pos[0] - dir[0] * back, s.goal_pos[1] - dir[1] * back];
    } else {
        s.agent_pos = s.goal_pos;
    }
    observation(cfg, &s)
}

/// The observation with the agent parked on the trap centre.
pub fn trap_observation(cfg: &EnvConfig) -> Observation {
    let mut s = canonical_state(cfg);
    s.agent_pos = cfg.trap_center;
    observation(cfg, &s)
}

fn unit(v: Vec2) -> Vec2 {
    let n = libm::hypot(v[0], v[1]);
    if n < 1e-12 {
        [0.0, 0.0]
    } else {
        [v[0] / n, v[1] / n]
    }
}

/// Move toward `target`, saturating while keeping the heading.
fn steer(from: Vec2, to: Vec2, step_scale: f64) -> Vec2 {
    let v = [(to[0] - from[0]) / step_scale, (to[1] - from[1]) / step_scale];
    let m = v[0].abs().max(v[1].abs()).max(1.0);
    [v[0] / m, v[1] / m]
}

/// Scripted controller that solves every task from anywhere in the arena.
pub fn expert_policy(cfg: &EnvConfig, s: &EnvState) -> Vec2 {
    if !cfg.task.has_object() {
        return steer(s.agent_pos, s.goal_pos, cfg.step_scale);
    }
    let obj = s.object_pos;
    let dir = unit([s.goal_pos[0] - obj[0], s.goal_pos[1] - obj[1]]);
    let perp = [-dir[1], dir[0]];
    let rel = [s.agent_pos[0] - obj[0], s.agent_pos[1] - obj[1]];
    let along = rel[0] * dir[0] + rel[1] * dir[1];
    let side = rel[0] * perp[0] + rel[1] * perp[1];
    let contact = AGENT_RADIUS + OBJECT_RADIUS;
    if along < -(contact - 0.02) && side.abs() < 0.025 {
        // Behind the object and on the push line: drive through it.
        let remaining = distance(obj, s.goal_pos);
        let speed = (remaining / cfg.step_scale).min(1.0);
        let v = [dir[0] - 4.0 * side * perp[0], dir[1] - 4.0 * side * perp[1]];
        let m = v[0].abs().max(v[1].abs()).max(1e-12);
        return [v[0] / m * speed, v[1] / m * speed];
    }
    let behind = [obj[0] - dir[0] * (contact + 0.02), obj[1] - dir[1] * (contact + 0.02)];
    if along < -(contact + 0.01) {
        return steer(s.agent_pos, behind, cfg.step_scale);
    }
    // Beside or in front of the object: first step out sideways, then
    // around to a point behind it.
    let sgn = if side >= 0.0 { 1.0 } else { -1.0 };
    let lateral = 0.22;
    let waypoint = if side.abs() < lateral - 0.03 {
        [
            obj[0] + dir[0] * along + sgn * perp[0] * lateral,
            obj[1] + dir[1] * along + sgn * perp[1] * lateral,
        ]
    } else {
        [
            obj[0] + sgn * perp[0] * lateral - dir[0] * 0.16,
            obj[1] + sgn * perp[1] * lateral - dir[1] * 0.16,
        ]
    };
    steer(s.agent_pos, waypoint, cfg.step_scale)
}

/// One row of a trajectory dump.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryRow {
    pub episode: u64,
    pub t: usize,
    pub agent: Vec2,
    pub object: Vec2,
    pub goal: Vec2,
    pub action: Vec2,
    pub r_task: f64,
    pub success: bool,
}

/// A complete rollout of observations with their goal distances.
#[derive(Debug, Clone, Default)]
pub struct Rollout {
    pub observations: Vec<Observation>,
    pub goal_distances: Vec<f64>,
    pub rows: Vec<TrajectoryRow>,
    pub success: bool,
}

impl Rollout {
    pub fn len(&self) -> usize {
        self.observations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.observations.is_empty()
    }
}

/// Roll the expert for one episode from the current state of `env`.
/// Records the post-step observation of every step.
pub fn expert_rollout(env: &mut PointMassEnv, episode: u64) -> Result<Rollout> {
    let mut out = Rollout::default();
    while !env.state().done {
        let a = env.expert_action();
        let res = env.step(&a)?;
        let s = env.state();
        out.rows.push(TrajectoryRow {
            episode,
            t: s.t,
            agent: s.agent_pos,
            object: s.object_pos,
            goal: s.goal_pos,
            action: a,
            r_task: res.r_task,
            success: res.success,
        });
        out.goal_distances.push(env.goal_distance());
        out.observations.push(res.obs);
        out.success |= res.success;
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    fn rng(seed: u64) -> crate::rng::Rng {
        crate::rng::Rng::seed_from_u64(seed)
    }

    #[test]
    fn fixed_goal_is_stable_across_resets() {
        let mut env = PointMassEnv::new(EnvConfig::new(Task::Reach)).unwrap();
        let mut r = rng(1);
        let g0 = {
            env.reset(&mut r);
            env.state().goal_pos
        };
        for _ in 0..5 {
            env.reset(&mut r);
            assert_eq!(env.state().goal_pos, g0);
        }
    }

    #[test]
    fn random_goals_reproduce_and_vary() {
        let mut cfg = EnvConfig::new(Task::Reach);
        cfg.goal_mode = GoalMode::Random;
        let goals = |seed| {
            let mut env = PointMassEnv::new(cfg.clone()).unwrap();
            let mut r = rng(seed);
            (0..100)
                .map(|_| {
                    env.reset(&mut r);
                    env.state().goal_pos
                })
                .collect::<Vec<_>>()
        };
        assert_eq!(goals(4), goals(4));
        let (a, b) = (goals(4), goals(5));
        assert!(a.iter().zip(&b).filter(|(x, y)| x != y).count() >= 99);
    }

    #[test]
    fn step_kinematics() {
        let mut env = PointMassEnv::new(EnvConfig::new(Task::Reach)).unwrap();
        env.reset(&mut rng(0));
        let mut s = env.state().clone();
        s.agent_pos = [0.0, 0.0];
        s.goal_pos = [1.0, 0.0];
        env.set_state(s);
        let r = env.step(&[1.0, 0.0]).unwrap();
        assert!((env.state().agent_pos[0] - 0.05).abs() < 1e-15);
        assert_eq!(env.state().agent_pos[1], 0.0);
        assert_eq!(r.r_task, -1.0);
        assert!(!r.success);

        let before = env.state().agent_pos;
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert_eq!(env.state().agent_pos, before);
        assert_eq!(r.r_task, -1.0);
    }

    #[test]
    fn success_at_goal_ends_episode() {
        let mut env = PointMassEnv::new(EnvConfig::new(Task::Reach)).unwrap();
        env.reset(&mut rng(0));
        let mut s = env.state().clone();
        s.agent_pos = s.goal_pos;
        env.set_state(s);
        let r = env.step(&[0.0, 0.0]).unwrap();
        assert!(r.success && r.done);
        assert_eq!(r.r_task, 0.0);
        assert_eq!(env.step(&[0.0, 0.0]).unwrap_err(), Error::EpisodeDone);
    }

    #[test]
    fn actions_are_clamped_and_positions_stay_in_arena() {
        let mut env = PointMassEnv::new(EnvConfig::new(Task::Push)).unwrap();
        env.reset(&mut rng(0));
        for _ in 0..100 {
            env.step(&[-5.0, 3.0]).unwrap();
            let s = env.state();
            assert!(s.agent_pos.iter().chain(&s.object_pos).all(|c| c.abs() <= ARENA));
        }
        assert_eq!(env.state().agent_pos, [-1.0, 1.0]);
    }

    #[test]
    fn time_limit_terminates() {
        let mut cfg = EnvConfig::new(Task::Reach);
        cfg.episode_len = 3;
        let mut env = PointMassEnv::new(cfg).unwrap();
        env.reset(&mut rng(0));
        assert!(!env.step(&[0.0, 0.0]).unwrap().done);
        assert!(!env.step(&[0.0, 0.0]).unwrap().done);
        let last = env.step(&[0.0, 0.0]).unwrap();
        assert!(last.done && !last.success);
    }

    #[test]
    fn goal_observation_is_the_success_configuration() {
        let cfg = EnvConfig::new(Task::Reach);
        let o = goal_observation(&cfg);
        assert_eq!(&o.visual_feature[..2], &cfg.task.canonical_goal());
        assert_eq!(o, goal_observation(&cfg));
        let push = EnvConfig::new(Task::Push);
        let o = goal_observation(&push);
        assert_eq!(&o.visual_feature[2..4], &Task::Push.canonical_goal());
    }

    #[test]
    fn expert_at_goal_is_still() {
        let cfg = EnvConfig::new(Task::Reach);
        let mut s = canonical_state(&cfg);
        s.agent_pos = s.goal_pos;
        let a = expert_policy(&cfg, &s);
        assert!(a[0].abs() < 1e-12 && a[1].abs() < 1e-12);
    }

    #[test]
    fn expert_reaches_from_far_corner() {
        let cfg = EnvConfig::new(Task::Reach);
        let mut env = PointMassEnv::new(cfg).unwrap();
        env.reset(&mut rng(0));
        let mut s = env.state().clone();
        s.agent_pos = [-0.9, -0.9];
        env.set_state(s);
        let roll = expert_rollout(&mut env, 0).unwrap();
        assert!(roll.success);
        assert!(roll.len() < 200);
    }

    #[test]
    fn trap_expert_avoids_the_trap() {
        let cfg = EnvConfig::new(Task::TrapReach);
        let mut env = PointMassEnv::new(cfg.clone()).unwrap();
        env.reset(&mut rng(0));
        let roll = expert_rollout(&mut env, 0).unwrap();
        assert!(roll.success);
        assert!(roll.rows.iter().all(|r| distance(r.agent, cfg.trap_center) > TRAP_RADIUS));
    }

    #[test]
    fn expert_success_rates() {
        for (task, need) in [(Task::Reach, 100), (Task::TrapReach, 100), (Task::Push, 90)] {
            let mut cfg = EnvConfig::new(task);
            cfg.goal_mode = GoalMode::Random;
            let mut env = PointMassEnv::new(cfg).unwrap();
            let mut r = rng(11);
            let mut wins = 0;
            for ep in 0..100 {
                env.reset(&mut r);
                let roll = expert_rollout(&mut env, ep).unwrap();
                let ret: f64 = roll.rows.iter().map(|r| r.r_task).sum();
                if roll.success {
                    wins += 1;
                    assert_eq!(ret, -((roll.len() - 1) as f64));
                }
                assert!((-200.0..=0.0).contains(&ret));
            }
            assert!(wins >= need, "{task:?}: {wins}/100");
        }
    }

    #[test]
    fn rollouts_are_bit_reproducible() {
        let mut cfg = EnvConfig::new(Task::Push);
        cfg.goal_mode = GoalMode::Random;
        let run = || {
            let mut env = PointMassEnv::new(cfg.clone()).unwrap();
            let mut r = rng(3);
            env.reset(&mut r);
            expert_rollout(&mut env, 0).unwrap().rows
        };
        assert_eq!(run(), run());
    }
}
