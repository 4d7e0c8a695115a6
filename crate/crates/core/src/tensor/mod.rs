//! Dense linear algebra, MLPs with reverse-mode gradients, and Adam.

pub mod adam;
pub mod checkpoint;
pub mod gaussian;
pub mod linalg;
pub mod mlp;

pub use adam::{adam_update, AdamState};
pub use gaussian::{gaussian_tanh_logprob, LOG_STD_MAX, LOG_STD_MIN};
pub use linalg::{cosine_similarity, Cosine, NORM_FLOOR};
pub use mlp::{mlp_backward, mlp_forward, Activation, ForwardCache, Gradients, MlpParams};
