use alloc::string::String;

/// Errors raised by the core crate.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch in {context}: expected {expected}, got {actual}")]
    Dimension {
        context: &'static str,
        expected: usize,
        actual: usize,
    },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("action component {0} outside the open interval (-1, 1)")]
    ActionOutOfRange(f64),
    #[error("episode already finished; call reset first")]
    EpisodeDone,
    #[error("task {0:?} is not known to this oracle")]
    UnknownTask(crate::env::Task),
    #[error("sampler precondition violated: {0}")]
    StageGate(&'static str),
    #[error("malformed checkpoint: {0}")]
    Checkpoint(&'static str),
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("metrics sink failed: {0}")]
    Sink(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

pub(crate) fn check_len(context: &'static str, expected: usize, actual: usize) -> Result<()> {
    if expected == actual {
        Ok(())
    } else {
        Err(Error::Dimension {
            context,
            expected,
            actual,
        })
    }
}
