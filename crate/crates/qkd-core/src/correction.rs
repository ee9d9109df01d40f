//! Iterative parity-pass error correction on the sifted key.
//!
//! Pass model: the key is grouped into disjoint random bit pairs; the
//! parities are compared over the public channel. Pairs with differing
//! parity are discarded entirely; pairs with matching parity keep one bit
//! and give up the other to pay for the leaked parity. A kept bit is wrong
//! only when both bits of its pair were wrong, so the error fraction maps to
//! `e' = e^2 / (e^2 + (1-e)^2)` and the expected key shrinks by
//! `(e^2 + (1-e)^2) / 2` per pass.
//!
//! Accidental-origin bookkeeping: erroneous bits are accidental-origin, and
//! correct accidental-origin bits survive parity comparison at the same rate
//! as other correct bits. Their share of the key can therefore never drop
//! below `qabr - qber`: parity passes remove errors, not the eavesdropper's
//! accidental-coincidence knowledge of correctly received bits.

use crate::QkdError;

/// Maximum number of parity passes before giving up.
pub const MAX_PASSES: u32 = 20;

/// Outcome of running [`correct`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrectionResult {
    /// Parity passes applied.
    pub passes: u32,
    /// Expected key size after correction.
    pub corrected_key: f64,
    /// Error fraction after the last pass.
    pub residual_qber: f64,
    /// Accidental-origin fraction after the last pass (errors plus
    /// surviving accidental-origin correct bits).
    pub residual_qabr: f64,
    /// The requested threshold.
    pub target_qber: f64,
    /// Whether `residual_qber <= target_qber` was reached within
    /// [`MAX_PASSES`].
    pub converged: bool,
}

/// One parity pass: returns the new error fraction and the expected
/// key-shrink factor.
fn parity_pass(e: f64) -> (f64, f64) {
    let match_prob = e * e + (1.0 - e) * (1.0 - e);
    (e * e / match_prob, match_prob / 2.0)
}

/// Runs parity passes until the error fraction reaches `target` or
/// [`MAX_PASSES`] is exhausted (reported via `converged`, not an error).
///
/// `key` is the expected sifted-key size, `qber` its error fraction and
/// `qabr` its accidental-origin fraction. Requires `qber <= 1/2`; beyond
/// that the pass model cannot make progress.
pub fn correct(key: f64, qber: f64, qabr: f64, target: f64) -> Result<CorrectionResult, QkdError> {
    if !(0.0..=0.5).contains(&qber) {
        return Err(QkdError::Uncorrectable { qber });
    }
    if target <= 0.0 || !target.is_finite() {
        return Err(crate::invalid("target_qber", "must be finite and > 0"));
    }
    if !(0.0..=1.0).contains(&qabr) {
        return Err(crate::invalid("qabr", "must be in [0, 1]"));
    }
    if key < 0.0 || !key.is_finite() {
        return Err(crate::invalid("key", "must be finite and >= 0"));
    }

    let mut e = qber;
    // Correct bits of accidental origin; errors are accidental by
    // assumption, so this floor survives every pass.
    let mut accidental_correct = (qabr - qber).max(0.0);
    let mut remaining = key;
    let mut passes = 0;

    while e > target && passes < MAX_PASSES {
        let (e_next, shrink) = parity_pass(e);
        if e_next >= e {
            // Fixed point at e = 1/2: no progress is possible.
            break;
        }
        // Correct bits survive in proportion; the accidental-origin share
        // among them is preserved by random pairing.
        accidental_correct *= (1.0 - e_next) / (1.0 - e);
        remaining *= shrink;
        e = e_next;
        passes += 1;
    }

    Ok(CorrectionResult {
        passes,
        corrected_key: remaining,
        residual_qber: e,
        residual_qabr: accidental_correct + e,
        target_qber: target,
        converged: e <= target,
    })
}
