#![no_std]
//! Algorithmic core of the fuzzy-reward RL lab.
//!
//! Everything here is pure computation over `alloc` collections: the MLP and
//! optimizer substrate, the point-mass tasks, the frozen embedding oracle,
//! projection-head alignment, soft actor-critic, relay scheduling and the
//! training loop that wires them together. File formats, CSV output and the
//! command line live in the `furl-lab` crate.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod align;
pub mod env;
pub mod error;
pub mod experiment;
pub mod oracle;
pub mod relay;
pub mod rng;
pub mod sac;
pub mod stats;
pub mod tensor;

pub use error::{Error, Result};
