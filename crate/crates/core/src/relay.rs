//! Within-episode alternation between the shaped-reward agent and the
//! task-reward agent.
//!
//! Each relayed episode draws a segment length `T` and hands control back
//! and forth every `T` steps, starting with the shaped-reward agent. Once
//! enough positive steps exist the relay switches off for good and the
//! shaped-reward agent acts alone.

use alloc::vec::Vec;

use rand::Rng;

use crate::align::Stage;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayConfig {
    pub relay_steps: Vec<usize>,
    pub positive_cutoff: usize,
    pub enabled: bool,
}

impl Default for RelayConfig {
    fn default() -> Self {
        Self {
            relay_steps: alloc::vec![25, 50, 75, 100],
            positive_cutoff: 2500,
            enabled: true,
        }
    }
}

impl RelayConfig {
    pub fn disabled() -> Self {
        Self { enabled: false, ..Self::default() }
    }

    pub fn validate(&self, episode_len: usize) -> Result<()> {
        if self.enabled && self.relay_steps.is_empty() {
            return Err(Error::Config("relay needs at least one segment length".into()));
        }
        if self.relay_steps.iter().any(|&t| t == 0 || t > episode_len) {
            return Err(Error::Config("relay segment lengths must lie in [1, episode_len]".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Acting {
    Vlm,
    Sac,
}

impl Acting {
    pub fn name(self) -> &'static str {
        match self {
            Acting::Vlm => "vlm",
            Acting::Sac => "sac",
        }
    }

    fn other(self) -> Self {
        match self {
            Acting::Vlm => Acting::Sac,
            Acting::Sac => Acting::Vlm,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RelayState {
    pub current_t: usize,
    pub active: Acting,
    pub steps_in_segment: usize,
    pub disabled: bool,
}

/// Start-of-episode state. The relay is off when disabled in the config or
/// once `positive_count` reaches the cutoff; otherwise `T` is drawn
/// uniformly from the configured lengths.
pub fn begin_episode<R: Rng + ?Sized>(cfg: &RelayConfig, positive_count: usize, rng: &mut R) -> RelayState {
    let disabled = !cfg.enabled || positive_count >= cfg.positive_cutoff || cfg.relay_steps.is_empty();
    let current_t = if disabled {
        0
    } else {
        cfg.relay_steps[rng.gen_range(0..cfg.relay_steps.len())]
    };
    RelayState { current_t, active: Acting::Vlm, steps_in_segment: 0, disabled }
}

impl RelayState {
    /// Account for one environment step taken by `self.active`.
    pub fn advance(&mut self) {
        if self.disabled {
            return;
        }
        self.steps_in_segment += 1;
        if self.steps_in_segment == self.current_t {
            self.active = self.active.other();
            self.steps_in_segment = 0;
        }
    }

    pub fn is_relaying(&self) -> bool {
        !self.disabled
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Segment {
    pub owner: Acting,
    pub start: usize,
    /// Exclusive.
    pub end: usize,
}

/// Segments of an `episode_len`-step episode, enumerated by running the
/// state machine.
pub fn segment_schedule(mut state: RelayState, episode_len: usize) -> Vec<Segment> {
    let mut out: Vec<Segment> = Vec::new();
    for step in 0..episode_len {
        match out.last_mut() {
            Some(seg) if seg.owner == state.active => seg.end = step + 1,
            _ => out.push(Segment { owner: state.active, start: step, end: step + 1 }),
        }
        state.advance();
    }
    out
}

/// Owner of `step` under segment length `t`: even segments belong to the
/// shaped-reward agent.
pub fn segment_owner(t: usize, step: usize) -> Acting {
    if (step / t).is_multiple_of(2) {
        Acting::Vlm
    } else {
        Acting::Sac
    }
}

/// Gradient work issued for one environment step.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct UpdatePlan {
    /// Updates of the shaped-reward agent.
    pub vlm_updates: usize,
    /// Updates of the task-reward agent.
    pub sac_updates: usize,
    pub alignment: Option<Stage>,
}

impl UpdatePlan {
    pub fn policy_updates(&self) -> usize {
        self.vlm_updates + self.sac_updates
    }

    pub fn alignment_updates(&self) -> usize {
        self.alignment.is_some() as usize
    }
}

/// While the relay runs both agents learn from the shared buffer; after it
/// stops only the shaped-reward agent does.
pub fn route_updates(relaying: bool, alignment: Option<Stage>, updates_per_step: usize) -> UpdatePlan {
    UpdatePlan {
        vlm_updates: updates_per_step,
        sac_updates: if relaying { updates_per_step } else { 0 },
        alignment,
    }
}
