//! Error types shared across the crate.

use thiserror::Error;

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// A scheme parameter violates its constraints. Names the offending field.
    #[error("invalid parameter `{field}`: {reason}")]
    InvalidParameter { field: &'static str, reason: String },

    /// The codebook cannot be partitioned among the requested users.
    #[error("codebook capacity exceeded: {users} users x {codes_per_user} codes > {spreading_factor} rows (at most {max_users} users supported)")]
    Capacity {
        users: usize,
        codes_per_user: usize,
        spreading_factor: usize,
        max_users: usize,
    },

    /// Input dimensions do not match the configured frame layout.
    #[error("framing error: {0}")]
    Framing(String),

    /// Equalization against a zero channel coefficient.
    #[error("degenerate channel: zero coefficient cannot be equalized")]
    DegenerateChannel,

    /// A conditional Monte Carlo estimate retained no usable trials.
    #[error("insufficient samples: {kept} of {trials} trials usable")]
    InsufficientSamples { kept: usize, trials: usize },

    /// PAPR of an all-zero waveform is undefined.
    #[error("PAPR undefined for an all-zero waveform")]
    UndefinedPapr,

    /// Unrecognized scheme name.
    #[error("unknown scheme `{0}`")]
    UnknownScheme(String),
}

impl Error {
    pub(crate) fn invalid(field: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            field,
            reason: reason.into(),
        }
    }

    pub(crate) fn framing(msg: impl Into<String>) -> Self {
        Error::Framing(msg.into())
    }
}
