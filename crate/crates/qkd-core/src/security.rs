//! CHSH and Wigner security parameters and their normalized margins.
//!
//! The correlation coefficient `E` and the inequality parameters `S`, `S'`
//! and `W` are built from normalized coincidence fractions, so every loss
//! and background term of the coincidence chain propagates into them. The
//! normalized margins rescale the observed values so that 1 sits at the
//! quantum limit and 0 at the eavesdropping threshold.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4, FRAC_PI_8, SQRT_2};

use crate::coincidence::total_coincidence_rates;
use crate::config::ExperimentConfig;
use crate::detector::{AliceDet, BobDet, DetectorPair, PerPair};
use crate::polarization::AnalyzerSetting;
use crate::QkdError;

/// Quantum limit of `|S|` for a maximally entangled state.
pub const CHSH_QUANTUM_LIMIT: f64 = 2.0 * SQRT_2;
/// Below this value an eavesdropper intercepting one or both channels can
/// remain undetected.
pub const CHSH_EAVESDROPPING_LIMIT: f64 = SQRT_2;
/// Quantum limit of `W` for a maximally entangled state.
pub const WIGNER_QUANTUM_LIMIT: f64 = -0.125;
/// Threshold for an eavesdropper intercepting a single photon of the pair.
pub const WIGNER_EAVESDROPPING_LIMIT: f64 = 0.0625;

/// The Wigner threshold above covers single-photon interception only; no
/// bound is known for total eavesdropping, so `w_norm <= 0` is a necessary
/// alarm condition but `w_norm > 0` alone does not certify the channel.
pub const WIGNER_BOUND_SINGLE_PHOTON_ONLY: bool = true;

const WIGNER_OFFSET: f64 = std::f64::consts::PI / 6.0;

/// Security parameters for one configuration and base angle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SecurityResult {
    pub s: f64,
    pub s_prime: f64,
    pub w_param: f64,
    /// `(|S| - sqrt(2)) / (2 sqrt(2) - sqrt(2))`: 1 at the quantum limit,
    /// <= 0 at or beyond the eavesdropping limit.
    pub s_norm: f64,
    /// `(W - 1/16) / (-1/8 - 1/16)`, same normalization. Subject to the
    /// single-photon caveat of [`WIGNER_BOUND_SINGLE_PHOTON_ONLY`].
    pub w_norm: f64,
}

/// Coincidence fractions `M = rate / total rate` for one setting.
///
/// Errors with [`QkdError::ZeroCoincidenceRate`] when nothing fires.
pub fn normalized_coincidence(
    config: &ExperimentConfig,
    theta_a: f64,
    theta_b: f64,
) -> Result<PerPair<f64>, QkdError> {
    let rates = total_coincidence_rates(config, &AnalyzerSetting::new(theta_a, theta_b));
    let total = rates.total_rate.sum();
    if total <= 0.0 || total.is_nan() {
        return Err(QkdError::ZeroCoincidenceRate);
    }
    Ok(PerPair::from_fn(|pair| rates.total_rate[pair] / total))
}

/// Correlation coefficient `E = M_11 - M_12 + M_22 - M_21`, in `[-1, 1]`.
pub fn correlation(config: &ExperimentConfig, theta_a: f64, theta_b: f64) -> Result<f64, QkdError> {
    let m = normalized_coincidence(config, theta_a, theta_b)?;
    Ok(m[DetectorPair::new(AliceDet::A1, BobDet::B1)]
        - m[DetectorPair::new(AliceDet::A1, BobDet::B2)]
        + m[DetectorPair::new(AliceDet::A2, BobDet::B2)]
        - m[DetectorPair::new(AliceDet::A2, BobDet::B1)])
}

/// CHSH parameters `(S, S')` over the standard pi/8 setting ladder.
pub fn chsh(config: &ExperimentConfig, theta_a: f64) -> Result<(f64, f64), QkdError> {
    let e = |a: f64, b: f64| correlation(config, a, b);
    let s = e(theta_a, theta_a + FRAC_PI_8)? - e(theta_a, theta_a + 3.0 * FRAC_PI_8)?
        + e(theta_a + FRAC_PI_4, theta_a + FRAC_PI_8)?
        + e(theta_a + FRAC_PI_4, theta_a + 3.0 * FRAC_PI_8)?;
    let s_prime = e(theta_a + FRAC_PI_8, theta_a + FRAC_PI_4)?
        - e(theta_a + FRAC_PI_8, theta_a + FRAC_PI_2)?
        + e(theta_a + 3.0 * FRAC_PI_8, theta_a + FRAC_PI_4)?
        + e(theta_a + 3.0 * FRAC_PI_8, theta_a + FRAC_PI_2)?;
    Ok((s, s_prime))
}

/// Wigner parameter
/// `W = M_11(a - pi/6, a) + M_11(a, a + pi/6) - M_11(a - pi/6, a + pi/6)`.
pub fn wigner(config: &ExperimentConfig, theta_a: f64) -> Result<f64, QkdError> {
    let m11 = |a: f64, b: f64| -> Result<f64, QkdError> {
        Ok(normalized_coincidence(config, a, b)?[DetectorPair::new(AliceDet::A1, BobDet::B1)])
    };
    Ok(
        m11(theta_a - WIGNER_OFFSET, theta_a)? + m11(theta_a, theta_a + WIGNER_OFFSET)?
            - m11(theta_a - WIGNER_OFFSET, theta_a + WIGNER_OFFSET)?,
    )
}

/// Rescales `|S|` and `W` to margins that read 1 at the quantum limits and
/// 0 at the eavesdropping thresholds.
pub fn normalized_margins(s: f64, w: f64) -> (f64, f64) {
    let s_norm =
        (s.abs() - CHSH_EAVESDROPPING_LIMIT) / (CHSH_QUANTUM_LIMIT - CHSH_EAVESDROPPING_LIMIT);
    let w_norm =
        (w - WIGNER_EAVESDROPPING_LIMIT) / (WIGNER_QUANTUM_LIMIT - WIGNER_EAVESDROPPING_LIMIT);
    (s_norm, w_norm)
}

/// All security parameters for one configuration and base angle.
pub fn evaluate(config: &ExperimentConfig, theta_a: f64) -> Result<SecurityResult, QkdError> {
    let (s, s_prime) = chsh(config, theta_a)?;
    let w_param = wigner(config, theta_a)?;
    let (s_norm, w_norm) = normalized_margins(s, w_param);
    Ok(SecurityResult {
        s,
        s_prime,
        w_param,
        s_norm,
        w_norm,
    })
}
