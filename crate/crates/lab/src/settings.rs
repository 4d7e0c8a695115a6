//! Run configuration as `section.key = value` pairs.
//!
//! A config file is INI-style text; every key can also be set from the
//! command line, and later sources win. The pairs are only turned into an
//! [`ExperimentConfig`] at the end, so the order in which sources are
//! merged never matters for parsing.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use furl_core::env::{GoalMode, Task};
use furl_core::experiment::{Algo, ExperimentConfig, RewardMode};
use ini::Ini;

use crate::error::{LabError, Result};

pub const OUT_DIR_ENV: &str = "FURL_OUT_DIR";
const DEFAULT_OUT_DIR: &str = "furl-out";

/// Every recognised key, grouped by section.
pub const KEYS: &[(&str, &[&str])] = &[
    (
        "run",
        &[
            "algo",
            "env",
            "seed",
            "steps",
            "eval_every",
            "eval_episodes",
            "rho",
            "out_dir",
            "reward_mode",
            "align_every",
            "trajectory_every",
        ],
    ),
    ("env", &["goal_mode", "episode_len", "success_radius", "step_scale", "trap_x", "trap_y", "seed"]),
    ("oracle", &["epsilon", "d_emb", "gain", "seed"]),
    (
        "sac",
        &[
            "gamma",
            "tau",
            "lr",
            "batch_size",
            "target_entropy",
            "hidden",
            "buffer_capacity",
            "updates_per_step",
            "warmup_steps",
            "init_alpha",
        ],
    ),
    ("heads", &["hidden", "out_dim", "lr"]),
    (
        "align",
        &["delta", "delta_l2", "window_k", "batch_pairs", "use_goal_image", "max_positive_trajs", "negative_capacity"],
    ),
    ("relay", &["steps", "positive_cutoff", "enabled"]),
];

fn known(section: &str, key: &str) -> bool {
    KEYS.iter().any(|(s, ks)| *s == section && ks.contains(&key))
}

/// A fully resolved run: configuration plus output directory.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSpec {
    pub cfg: ExperimentConfig,
    pub out_dir: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Settings {
    values: BTreeMap<(String, String), String>,
}

impl Settings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_ini_str(text: &str) -> Result<Self> {
        let ini = Ini::load_from_str(text).map_err(|e| LabError::Ini(e.to_string()))?;
        let mut out = Self::new();
        for (section, props) in ini.iter() {
            for (k, v) in props.iter() {
                let Some(section) = section else {
                    return Err(LabError::Config(format!("key `{k}` appears outside any section")));
                };
                out.set(section, k, v)?;
            }
        }
        Ok(out)
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| LabError::io(path, e))?;
        Self::from_ini_str(&text)
    }

    pub fn set(&mut self, section: &str, key: &str, value: &str) -> Result<()> {
        if !known(section, key) {
            return Err(LabError::Config(format!("unknown key `{section}.{key}`")));
        }
        self.values.insert((section.to_string(), key.to_string()), value.trim().to_string());
        Ok(())
    }

    /// `section.key=value`, as given to `--set`.
    pub fn set_assignment(&mut self, assignment: &str) -> Result<()> {
        let (path, value) = assignment
            .split_once('=')
            .ok_or_else(|| LabError::Config(format!("expected section.key=value, got `{assignment}`")))?;
        let (section, key) = path
            .trim()
            .split_once('.')
            .ok_or_else(|| LabError::Config(format!("expected section.key, got `{path}`")))?;
        self.set(section, key, value)
    }

    pub fn get(&self, section: &str, key: &str) -> Option<&str> {
        self.values.get(&(section.to_string(), key.to_string())).map(String::as_str)
    }

    /// Entries of `other` replace those of `self`.
    pub fn merge(&mut self, other: &Settings) {
        for (k, v) in &other.values {
            self.values.insert(k.clone(), v.clone());
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str, &str)> {
        self.values.iter().map(|((s, k), v)| (s.as_str(), k.as_str(), v.as_str()))
    }

    /// Resolve into a validated configuration. The output directory falls
    /// back to `$FURL_OUT_DIR`, then to `./furl-out`.
    pub fn resolve(&self) -> Result<RunSpec> {
        let algo = match self.get("run", "algo") {
            Some(name) => Algo::from_name(name).ok_or_else(|| LabError::Config(format!("unknown algo `{name}`")))?,
            None => Algo::Furl,
        };
        let task = match self.get("run", "env") {
            Some(name) => Task::from_name(name).ok_or_else(|| LabError::Config(format!("unknown env `{name}`")))?,
            None => Task::TrapReach,
        };
        let mut cfg = ExperimentConfig::new(algo, task);
        let mut out_dir = None;
        for (section, key, v) in self.iter() {
            apply(&mut cfg, &mut out_dir, section, key, v)?;
        }
        cfg.validate()?;
        let out_dir = out_dir
            .or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
            .unwrap_or_else(|| PathBuf::from(DEFAULT_OUT_DIR));
        Ok(RunSpec { cfg, out_dir })
    }
}

fn num<T: FromStr>(section: &str, key: &str, v: &str) -> Result<T> {
    v.parse().map_err(|_| LabError::Config(format!("`{section}.{key}`: cannot parse `{v}`")))
}

fn list(section: &str, key: &str, v: &str) -> Result<Vec<usize>> {
    v.split(',').filter(|s| !s.trim().is_empty()).map(|s| num(section, key, s.trim())).collect()
}

fn flag(section: &str, key: &str, v: &str) -> Result<bool> {
    match v.to_ascii_lowercase().as_str() {
        "true" | "yes" | "on" | "1" => Ok(true),
        "false" | "no" | "off" | "0" => Ok(false),
        _ => Err(LabError::Config(format!("`{section}.{key}`: expected a boolean, got `{v}`"))),
    }
}

fn apply(cfg: &mut ExperimentConfig, out_dir: &mut Option<PathBuf>, section: &str, key: &str, v: &str) -> Result<()> {
    match (section, key) {
        ("run", "algo") | ("run", "env") => {}
        ("run", "seed") => cfg.seed = num(section, key, v)?,
        ("run", "steps") => cfg.total_steps = num(section, key, v)?,
        ("run", "eval_every") => cfg.eval_every = num(section, key, v)?,
        ("run", "eval_episodes") => cfg.eval_episodes = num(section, key, v)?,
        ("run", "rho") => cfg.rho = num(section, key, v)?,
        ("run", "out_dir") => *out_dir = Some(PathBuf::from(v)),
        ("run", "reward_mode") => {
            cfg.reward_mode = match v {
                "recompute" => RewardMode::Recompute,
                "store" => RewardMode::StoreAtCollect,
                _ => return Err(LabError::Config(format!("`run.reward_mode`: expected recompute or store, got `{v}`"))),
            }
        }
        ("run", "align_every") => cfg.align_every = num(section, key, v)?,
        ("run", "trajectory_every") => cfg.trajectory_every = num(section, key, v)?,

        ("env", "goal_mode") => {
            cfg.env.goal_mode = match v {
                "fixed" => GoalMode::Fixed,
                "random" => GoalMode::Random,
                _ => return Err(LabError::Config(format!("`env.goal_mode`: expected fixed or random, got `{v}`"))),
            }
        }
        ("env", "episode_len") => cfg.env.episode_len = num(section, key, v)?,
        ("env", "success_radius") => cfg.env.success_radius = num(section, key, v)?,
        ("env", "step_scale") => cfg.env.step_scale = num(section, key, v)?,
        ("env", "trap_x") => cfg.env.trap_center[0] = num(section, key, v)?,
        ("env", "trap_y") => cfg.env.trap_center[1] = num(section, key, v)?,
        ("env", "seed") => cfg.env.seed = num(section, key, v)?,

        ("oracle", "epsilon") => cfg.oracle.epsilon = num(section, key, v)?,
        ("oracle", "d_emb") => cfg.oracle.d_emb = num(section, key, v)?,
        ("oracle", "gain") => cfg.oracle.gain = num(section, key, v)?,
        ("oracle", "seed") => cfg.oracle_seed = Some(num(section, key, v)?),

        ("sac", "gamma") => cfg.sac.gamma = num(section, key, v)?,
        ("sac", "tau") => cfg.sac.tau = num(section, key, v)?,
        ("sac", "lr") => cfg.sac.lr = num(section, key, v)?,
        ("sac", "batch_size") => cfg.sac.batch_size = num(section, key, v)?,
        ("sac", "target_entropy") => {
            cfg.sac.target_entropy = if v == "auto" { None } else { Some(num(section, key, v)?) }
        }
        ("sac", "hidden") => cfg.sac.hidden = list(section, key, v)?,
        ("sac", "buffer_capacity") => cfg.sac.buffer_capacity = num(section, key, v)?,
        ("sac", "updates_per_step") => cfg.sac.updates_per_step = num(section, key, v)?,
        ("sac", "warmup_steps") => cfg.sac.warmup_steps = num(section, key, v)?,
        ("sac", "init_alpha") => cfg.sac.init_alpha = num(section, key, v)?,

        ("heads", "hidden") => cfg.heads.hidden = list(section, key, v)?,
        ("heads", "out_dim") => cfg.heads.out_dim = num(section, key, v)?,
        ("heads", "lr") => cfg.heads.lr = num(section, key, v)?,

        ("align", "delta") => cfg.align.delta = num(section, key, v)?,
        ("align", "delta_l2") => cfg.align.delta_l2 = num(section, key, v)?,
        ("align", "window_k") => cfg.align.window_k = num(section, key, v)?,
        ("align", "batch_pairs") => cfg.align.batch_pairs = num(section, key, v)?,
        ("align", "use_goal_image") => cfg.align.use_goal_image = flag(section, key, v)?,
        ("align", "max_positive_trajs") => cfg.align.max_positive_trajs = num(section, key, v)?,
        ("align", "negative_capacity") => cfg.align.negative_capacity = num(section, key, v)?,

        ("relay", "steps") => cfg.relay.relay_steps = list(section, key, v)?,
        ("relay", "positive_cutoff") => cfg.relay.positive_cutoff = num(section, key, v)?,
        ("relay", "enabled") => cfg.relay.enabled = flag(section, key, v)?,
        _ => return Err(LabError::Config(format!("unknown key `{section}.{key}`"))),
    }
    Ok(())
}

/// Render a configuration back into settings, so that
/// `Settings::from(cfg).resolve()` reproduces it.
pub fn to_settings(spec: &RunSpec) -> Settings {
    let c = &spec.cfg;
    let join = |xs: &[usize]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let mut s = Settings::new();
    let mut put = |sec: &str, key: &str, v: String| {
        s.values.insert((sec.to_string(), key.to_string()), v);
    };
    put("run", "algo", c.algo.name().into());
    put("run", "env", c.env.task.name().into());
    put("run", "seed", c.seed.to_string());
    put("run", "steps", c.total_steps.to_string());
    put("run", "eval_every", c.eval_every.to_string());
    put("run", "eval_episodes", c.eval_episodes.to_string());
    put("run", "rho", c.rho.to_string());
    put("run", "out_dir", spec.out_dir.display().to_string());
    put(
        "run",
        "reward_mode",
        match c.reward_mode {
            RewardMode::Recompute => "recompute",
            RewardMode::StoreAtCollect => "store",
        }
        .into(),
    );
    put("run", "align_every", c.align_every.to_string());
    put("run", "trajectory_every", c.trajectory_every.to_string());
    put(
        "env",
        "goal_mode",
        match c.env.goal_mode {
            GoalMode::Fixed => "fixed",
            GoalMode::Random => "random",
        }
        .into(),
    );
    put("env", "episode_len", c.env.episode_len.to_string());
    put("env", "success_radius", c.env.success_radius.to_string());
    put("env", "step_scale", c.env.step_scale.to_string());
    put("env", "trap_x", c.env.trap_center[0].to_string());
    put("env", "trap_y", c.env.trap_center[1].to_string());
    put("env", "seed", c.env.seed.to_string());
    put("oracle", "epsilon", c.oracle.epsilon.to_string());
    put("oracle", "d_emb", c.oracle.d_emb.to_string());
    put("oracle", "gain", c.oracle.gain.to_string());
    if let Some(seed) = c.oracle_seed {
        put("oracle", "seed", seed.to_string());
    }
    put("sac", "gamma", c.sac.gamma.to_string());
    put("sac", "tau", c.sac.tau.to_string());
    put("sac", "lr", c.sac.lr.to_string());
    put("sac", "batch_size", c.sac.batch_size.to_string());
    put("sac", "target_entropy", c.sac.target_entropy.map_or("auto".into(), |t| t.to_string()));
    put("sac", "hidden", join(&c.sac.hidden));
    put("sac", "buffer_capacity", c.sac.buffer_capacity.to_string());
    put("sac", "updates_per_step", c.sac.updates_per_step.to_string());
    put("sac", "warmup_steps", c.sac.warmup_steps.to_string());
    put("sac", "init_alpha", c.sac.init_alpha.to_string());
    put("heads", "hidden", join(&c.heads.hidden));
    put("heads", "out_dim", c.heads.out_dim.to_string());
    put("heads", "lr", c.heads.lr.to_string());
    put("align", "delta", c.align.delta.to_string());
    put("align", "delta_l2", c.align.delta_l2.to_string());
    put("align", "window_k", c.align.window_k.to_string());
    put("align", "batch_pairs", c.align.batch_pairs.to_string());
    put("align", "use_goal_image", c.align.use_goal_image.to_string());
    put("align", "max_positive_trajs", c.align.max_positive_trajs.to_string());
    put("align", "negative_capacity", c.align.negative_capacity.to_string());
    put("relay", "steps", join(&c.relay.relay_steps));
    put("relay", "positive_cutoff", c.relay.positive_cutoff.to_string());
    put("relay", "enabled", c.relay.enabled.to_string());
    s
}

impl Settings {
    /// INI text with one section per group, in a fixed order.
    pub fn to_ini_string(&self) -> String {
        let mut out = String::new();
        for (section, keys) in KEYS {
            let present: Vec<_> = keys.iter().filter_map(|k| self.get(section, k).map(|v| (k, v))).collect();
            if present.is_empty() {
                continue;
            }
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("[{section}]\n"));
            for (k, v) in present {
                out.push_str(&format!("{k} = {v}\n"));
            }
        }
        out
    }
}
