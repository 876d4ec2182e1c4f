//! Link-level simulator and analysis toolkit for code-frequency index
//! modulation (CFIM) over flat Rayleigh fading.
//!
//! The transmit chain maps each block's bits onto a Gray PSK symbol plus a
//! (spreading code, subcarrier) index pair; the receiver despreads and
//! detects the pair with a square-law energy detector. Alongside the
//! simulated chain, the crate evaluates the closed-form error, efficiency,
//! complexity, and peak-power expressions for CFIM and its direct-spread
//! baselines, synthesizes time-domain waveforms for PAPR measurement, and
//! runs the synchronous multiuser extension.

pub mod analysis;
pub mod channel;
pub mod codebook;
pub mod config;
pub mod error;
pub mod modem;
pub mod seeding;
pub mod sim;
pub mod waveform;

pub use error::{Error, Result};
