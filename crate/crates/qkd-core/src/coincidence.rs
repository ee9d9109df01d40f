//! True, accidental and total coincidence rates per detector pair.
//!
//! Alice's detectors are the triggers: an accidental coincidence is a count
//! on a Bob detector falling inside the window `w` centered on an Alice
//! count that does not share its origin. The pair-specific background rate
//! subtracts that pair's own true-coincidence rate from each side's total,
//! and the two Bob detectors share the window, so the no-double-counting
//! weights `q*` subtract half the probability of both firing.

use crate::config::ExperimentConfig;
use crate::counting::{singles_rates, RateSet};
use crate::detector::{BobDet, Channel, DetectorPair, PerPair};
use crate::polarization::{
    joint_probabilities_closed_form, AnalyzerSetting, JointProbabilityTable,
};
use crate::{invalid, QkdError};

/// Coincidence-window and measurement-time parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimingParams {
    /// Coincidence window `w` in seconds. The analytic formulas assume
    /// `w` below the channel dead times; larger values draw a warning at
    /// validation but are still evaluated.
    pub window: f64,
    /// Measurement duration `t` in seconds.
    pub duration: f64,
}

impl Default for TimingParams {
    fn default() -> TimingParams {
        TimingParams {
            window: 0.0,
            duration: 1.0,
        }
    }
}

impl TimingParams {
    pub fn validate(&self) -> Result<(), QkdError> {
        if self.window < 0.0 || !self.window.is_finite() {
            return Err(invalid("timing.window", "must be finite and >= 0"));
        }
        if self.duration <= 0.0 || !self.duration.is_finite() {
            return Err(invalid("timing.duration", "must be finite and > 0"));
        }
        Ok(())
    }
}

/// Per-pair coincidence rates for one analyzer setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoincidenceRates {
    /// Both photons of one pair detected.
    pub true_rate: PerPair<f64>,
    /// Unrelated counts landing in the same window.
    pub accidental_rate: PerPair<f64>,
    /// Sum of the two, per pair.
    pub total_rate: PerPair<f64>,
}

fn true_rates_from(probs: &JointProbabilityTable, rates: &RateSet, lambda_p: f64) -> PerPair<f64> {
    PerPair::from_fn(|pair| {
        rates.xi[pair.alice.into()] * rates.xi[pair.bob.into()] * probs.get(pair) * lambda_p
    })
}

fn accidental_rates_from(rates: &RateSet, true_rates: &PerPair<f64>, window: f64) -> PerPair<f64> {
    PerPair::from_fn(|pair| {
        // Background rate on the trigger side, net of this pair's true
        // coincidences.
        let trigger_rate = rates.lambda_tot[pair.alice.into()] - true_rates[pair];
        // Probability of at least one background count on a Bob detector
        // within the window, again net of that detector's pair rate with
        // this trigger.
        let q = |bob: BobDet| {
            let background =
                rates.lambda_tot[bob.into()] - true_rates[DetectorPair::new(pair.alice, bob)];
            1.0 - (-background * window).exp()
        };
        let q_this = q(pair.bob);
        let q_other = q(pair.bob.partner());
        let q_star = q_this * (1.0 - 0.5 * q_other);
        q_star * trigger_rate
    })
}

/// Mean rate of true coincidences per pair:
/// `xi_a * xi_b * p(x_a, y_b) * lambda_p`.
pub fn true_coincidence_rates(
    config: &ExperimentConfig,
    setting: &AnalyzerSetting,
) -> PerPair<f64> {
    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let rates = singles_rates(config, setting);
    true_rates_from(&probs, &rates, config.source.lambda_p)
}

/// Mean rate of accidental coincidences per pair.
pub fn accidental_rates(config: &ExperimentConfig, setting: &AnalyzerSetting) -> PerPair<f64> {
    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let rates = singles_rates(config, setting);
    let true_rates = true_rates_from(&probs, &rates, config.source.lambda_p);
    accidental_rates_from(&rates, &true_rates, config.timing.window)
}

/// True, accidental and total coincidence rates in one pass.
///
/// Counts over a duration `t` are Poisson with mean `total_rate * t`.
pub fn total_coincidence_rates(
    config: &ExperimentConfig,
    setting: &AnalyzerSetting,
) -> CoincidenceRates {
    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let rates = singles_rates(config, setting);
    let true_rate = true_rates_from(&probs, &rates, config.source.lambda_p);
    let accidental_rate = accidental_rates_from(&rates, &true_rate, config.timing.window);
    let total_rate = PerPair::from_fn(|pair| true_rate[pair] + accidental_rate[pair]);
    CoincidenceRates {
        true_rate,
        accidental_rate,
        total_rate,
    }
}

/// Warns when the window is not safely below the channel dead times.
pub(crate) fn warn_window_vs_dead_time(config: &ExperimentConfig) {
    let min_dead = Channel::ALL
        .iter()
        .map(|&c| config.channels[c].dead_time)
        .fold(f64::INFINITY, f64::min);
    if min_dead > 0.0 && config.timing.window >= min_dead {
        log::warn!(
            "coincidence window ({:.3e} s) is not below the channel dead times ({:.3e} s); \
             the accidental-rate formulas assume w < D",
            config.timing.window,
            min_dead
        );
    }
}
