//! Projection-head checkpoints: image net then language net, one bundle.

use std::path::Path;

use furl_core::align::{HeadKind, ProjectionHeads};
use furl_core::tensor::checkpoint::{decode_bundle, encode_bundle};

use crate::error::{LabError, Result};

pub const HEADS_FILE: &str = "heads.ckpt";

pub fn save_heads(path: &Path, heads: &ProjectionHeads) -> Result<()> {
    let bytes = encode_bundle(&[&heads.img, &heads.lang]);
    std::fs::write(path, bytes).map_err(|e| LabError::io(path, e))
}

/// Loaded heads are frozen; they are meant for auditing, not training.
pub fn load_heads(path: &Path) -> Result<ProjectionHeads> {
    let bytes = std::fs::read(path).map_err(|e| LabError::io(path, e))?;
    let mut nets = decode_bundle(&bytes)?;
    if nets.len() != 2 {
        return Err(LabError::Config(format!("{}: expected 2 networks, found {}", path.display(), nets.len())));
    }
    let lang = nets.pop().expect("two nets");
    let img = nets.pop().expect("two nets");
    Ok(ProjectionHeads::from_nets(img, lang, HeadKind::Frozen, 0.0)?)
}
