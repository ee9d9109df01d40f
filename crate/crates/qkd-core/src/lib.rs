//! Performance model for quantum key distribution over polarization-entangled
//! photon pairs.
//!
//! The crate computes, from a single experiment description
//! ([`config::ExperimentConfig`]), the full chain of observable quantities of
//! an entangled-pair QKD link:
//!
//! * joint detection probabilities behind real (leaky) polarizing beam
//!   splitters, for an imperfect source state ([`polarization`]),
//! * per-detector singles rates with efficiency chains, dark counts,
//!   uncorrelated light and dead-time corrections ([`counting`]),
//! * true, accidental and total coincidence rates per detector pair
//!   ([`coincidence`]),
//! * sifted-key size, QBER and QABR for the BB84, Ekert-CHSH and
//!   Ekert-Wigner protocols ([`protocols`]),
//! * CHSH and Wigner security parameters and their normalized margins
//!   against the quantum and eavesdropping limits ([`security`]),
//! * iterative parity-pass error correction on the sifted key
//!   ([`correction`]).
//!
//! Every analytic rate can be cross-checked against an event-level
//! Monte-Carlo simulation ([`montecarlo`]) that generates time-tagged photon
//! streams and applies detection efficiency, dead time and coincidence
//! windowing explicitly.
//!
//! The `qkdsim` binary exposes the model as a CLI (`eval`, `sweep`,
//! `validate`, `presets`); see the crate README for the file formats.

pub mod coincidence;
pub mod config;
pub mod correction;
pub mod counting;
pub mod detector;
pub mod montecarlo;
pub mod polarization;
pub mod protocols;
pub mod security;
pub mod sweep;

pub use config::ExperimentConfig;
pub use detector::{AliceDet, BobDet, Channel, Detector, DetectorPair, PerDetector, PerPair};
pub use polarization::AnalyzerSetting;

/// Errors produced by configuration handling and model evaluation.
#[derive(Debug, thiserror::Error)]
pub enum QkdError {
    /// A physical parameter is outside its allowed range.
    #[error("invalid value for `{field}`: {message}")]
    InvalidParameter { field: String, message: String },

    /// A configuration or sweep file failed to parse.
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },

    /// Normalization of coincidence rates is undefined (zero total rate).
    #[error("total coincidence rate is zero; normalized rates are undefined")]
    ZeroCoincidenceRate,

    /// Error correction cannot start from a bit-error fraction above 1/2.
    #[error("input QBER {qber} exceeds 1/2; key is uncorrectable")]
    Uncorrectable { qber: f64 },

    /// An I/O failure while reading or writing model files.
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub(crate) fn invalid(field: &str, message: impl Into<String>) -> QkdError {
    QkdError::InvalidParameter {
        field: field.to_string(),
        message: message.into(),
    }
}
