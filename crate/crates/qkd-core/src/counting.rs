//! Per-detector singles statistics.
//!
//! All count distributions in the model are Poisson; this module produces
//! their mean rates. Each detector sees three independent contributions:
//! correlated photons of the pair source, uncorrelated photons (stray light
//! and unpaired emission), and dark counts. Losses are folded into the
//! efficiency chain `xi = pi * eta * tau` (dead-time correction, quantum
//! efficiency, optical transmittance).

use crate::config::ExperimentConfig;
use crate::detector::{AliceDet, BobDet, Channel, Detector, PerDetector};
use crate::polarization::{joint_probabilities_closed_form, AnalyzerSetting};
use crate::{invalid, QkdError};

/// Detection chain parameters of a single detector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectorParams {
    /// Quantum efficiency, in `[0, 1]`.
    pub eta: f64,
    /// Optical transmittance of everything between source and detector, in `[0, 1]`.
    pub tau: f64,
    /// Dark-count rate in 1/s.
    pub lambda_d: f64,
    /// Rate of uncorrelated photons reaching this detector, in 1/s.
    pub lambda_u: f64,
}

impl Default for DetectorParams {
    fn default() -> DetectorParams {
        DetectorParams {
            eta: 1.0,
            tau: 1.0,
            lambda_d: 0.0,
            lambda_u: 0.0,
        }
    }
}

impl DetectorParams {
    pub fn validate(&self, name: &str) -> Result<(), QkdError> {
        let field = |f: &str| format!("detectors.{name}.{f}");
        if !(0.0..=1.0).contains(&self.eta) || !self.eta.is_finite() {
            return Err(invalid(
                &field("eta"),
                format!("must be in [0, 1], got {}", self.eta),
            ));
        }
        if !(0.0..=1.0).contains(&self.tau) || !self.tau.is_finite() {
            return Err(invalid(
                &field("tau"),
                format!("must be in [0, 1], got {}", self.tau),
            ));
        }
        if self.lambda_d < 0.0 || !self.lambda_d.is_finite() {
            return Err(invalid(&field("lambda_d"), "rate must be finite and >= 0"));
        }
        if self.lambda_u < 0.0 || !self.lambda_u.is_finite() {
            return Err(invalid(&field("lambda_u"), "rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Electronics of one measurement channel (shared by its two detectors).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct ChannelParams {
    /// Non-extending dead time in seconds.
    pub dead_time: f64,
}

impl ChannelParams {
    pub fn validate(&self, name: &str) -> Result<(), QkdError> {
        if self.dead_time < 0.0 || !self.dead_time.is_finite() {
            return Err(invalid(
                &format!("channels.{name}.dead_time"),
                "must be finite and >= 0",
            ));
        }
        Ok(())
    }
}

/// Photon-pair source.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SourceParams {
    /// Mean photon-pair rate in 1/s.
    pub lambda_p: f64,
}

impl SourceParams {
    pub fn validate(&self) -> Result<(), QkdError> {
        if self.lambda_p < 0.0 || !self.lambda_p.is_finite() {
            return Err(invalid("source.lambda_p", "rate must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Singles rates per detector for one analyzer setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateSet {
    /// Correlated-photon count rate per detector.
    pub lambda_sp: PerDetector<f64>,
    /// Total count rate per detector: `lambda_sp + xi*lambda_u + lambda_d`.
    pub lambda_tot: PerDetector<f64>,
    /// Efficiency chain `pi * eta * tau` per detector.
    pub xi: PerDetector<f64>,
}

/// Dead-time correction factors `(pi_a, pi_b)` for the two channels.
///
/// With incident channel rate `R` and non-extending dead time `D`, the
/// measured rate is `R / (1 + R*D)`, so the correction is
/// `pi = 1 / (1 + R*D)`. The incident rate sums, over the channel's two
/// detectors, the correlated, uncorrelated and dark contributions with the
/// bare efficiency `eta*tau` (no `pi`) applied to the photon terms.
///
/// The factors depend on the analyzer setting through the joint detection
/// probabilities. Both lie in `(0, 1]` and equal 1 when the dead time is 0.
pub fn dead_time_corrections(config: &ExperimentConfig, setting: &AnalyzerSetting) -> (f64, f64) {
    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let lambda_p = config.source.lambda_p;

    let incident = |det: Detector, marginal: f64| -> f64 {
        let d = &config.detectors[det];
        let bare = d.eta * d.tau;
        marginal * bare * lambda_p + bare * d.lambda_u + d.lambda_d
    };

    let rate_a = incident(Detector::A1, probs.alice_marginal(AliceDet::A1))
        + incident(Detector::A2, probs.alice_marginal(AliceDet::A2));
    let rate_b = incident(Detector::B1, probs.bob_marginal(BobDet::B1))
        + incident(Detector::B2, probs.bob_marginal(BobDet::B2));

    let pi_a = 1.0 / (1.0 + rate_a * config.channels[Channel::Alice].dead_time);
    let pi_b = 1.0 / (1.0 + rate_b * config.channels[Channel::Bob].dead_time);
    (pi_a, pi_b)
}

/// Mean singles rates per detector for one analyzer setting.
///
/// The correlated rate marginalizes the joint probabilities over the partner
/// arm: `lambda_sp = xi * sum_partner p(.,.) * lambda_p`.
pub fn singles_rates(config: &ExperimentConfig, setting: &AnalyzerSetting) -> RateSet {
    let probs = joint_probabilities_closed_form(
        &config.entanglement,
        &config.pbs_a,
        &config.pbs_b,
        setting,
    );
    let (pi_a, pi_b) = dead_time_corrections(config, setting);

    let xi = PerDetector::from_fn(|det| {
        let pi = match det.channel() {
            Channel::Alice => pi_a,
            Channel::Bob => pi_b,
        };
        let d = &config.detectors[det];
        pi * d.eta * d.tau
    });

    let marginal = PerDetector([
        probs.alice_marginal(AliceDet::A1),
        probs.alice_marginal(AliceDet::A2),
        probs.bob_marginal(BobDet::B1),
        probs.bob_marginal(BobDet::B2),
    ]);

    let lambda_sp = PerDetector::from_fn(|det| xi[det] * marginal[det] * config.source.lambda_p);
    let lambda_tot = PerDetector::from_fn(|det| {
        let d = &config.detectors[det];
        lambda_sp[det] + xi[det] * d.lambda_u + d.lambda_d
    });

    RateSet {
        lambda_sp,
        lambda_tot,
        xi,
    }
}

const FACTORIALS: [f64; 21] = [
    1.0,
    1.0,
    2.0,
    6.0,
    24.0,
    120.0,
    720.0,
    5040.0,
    40320.0,
    362880.0,
    3628800.0,
    39916800.0,
    479001600.0,
    6227020800.0,
    87178291200.0,
    1307674368000.0,
    20922789888000.0,
    355687428096000.0,
    6402373705728000.0,
    121645100408832000.0,
    2432902008176640000.0,
];

fn ln_factorial(n: u64) -> f64 {
    if n < 21 {
        return FACTORIALS[n as usize].ln();
    }
    if n <= 1 << 20 {
        return (21..=n).map(|k| (k as f64).ln()).sum::<f64>() + FACTORIALS[20].ln();
    }
    // Stirling series; error far below f64 resolution at this size.
    let x = n as f64;
    x * x.ln() - x + 0.5 * (std::f64::consts::TAU * x).ln() + 1.0 / (12.0 * x)
        - 1.0 / (360.0 * x * x * x)
}

/// Poisson probability of `n` counts in duration `t` at rate `lambda`.
///
/// Evaluated in log space once `n` exceeds 20 (or the mean is large enough
/// for the direct exponential to underflow).
pub fn poisson_pmf(lambda: f64, t: f64, n: u64) -> f64 {
    assert!(
        lambda >= 0.0 && t >= 0.0,
        "poisson_pmf: negative rate or duration"
    );
    let mu = lambda * t;
    if n == 0 {
        return (-mu).exp();
    }
    if mu == 0.0 {
        return 0.0;
    }
    if n <= 20 && mu < 700.0 {
        mu.powi(n as i32) * (-mu).exp() / FACTORIALS[n as usize]
    } else {
        (n as f64 * mu.ln() - mu - ln_factorial(n)).exp()
    }
}

/// Channel rate budget derived from aggregate source descriptors.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SourceRates {
    /// Photon-pair rate.
    pub lambda_p: f64,
    /// Uncorrelated-photon rate per detector (equal split per arm).
    pub lambda_u: PerDetector<f64>,
}

/// Splits total channel rates into pair and uncorrelated components.
///
/// `lambda_a` is the total photon rate in Alice's channel, `alpha_a` the
/// fraction of it that is paired, and `ratio_ba` the ratio of Bob's total
/// channel rate to Alice's. The uncorrelated remainder of each channel is
/// split equally between its two detectors (individual detectors can still
/// be overridden in the configuration afterwards).
pub fn derive_source_rates(
    lambda_a: f64,
    alpha_a: f64,
    ratio_ba: f64,
) -> Result<SourceRates, QkdError> {
    if lambda_a < 0.0 || !lambda_a.is_finite() {
        return Err(invalid("source.lambda_a", "rate must be finite and >= 0"));
    }
    if !(alpha_a > 0.0 && alpha_a <= 1.0) {
        return Err(invalid(
            "source.alpha_a",
            format!("correlation level must be in (0, 1], got {alpha_a}"),
        ));
    }
    if ratio_ba <= 0.0 || !ratio_ba.is_finite() {
        return Err(invalid("source.ratio_ba", "ratio must be finite and > 0"));
    }
    let lambda_p = alpha_a * lambda_a;
    if ratio_ba * lambda_a < lambda_p {
        return Err(invalid(
            "source.ratio_ba",
            "Bob's channel rate is below the pair rate; uncorrelated rate would be negative",
        ));
    }
    let u_alice = (1.0 - alpha_a) * lambda_a / 2.0;
    let u_bob = (ratio_ba * lambda_a - lambda_p) / 2.0;
    Ok(SourceRates {
        lambda_p,
        lambda_u: PerDetector([u_alice, u_alice, u_bob, u_bob]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExperimentConfig;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn base_config(lambda_p: f64) -> ExperimentConfig {
        let mut cfg = ExperimentConfig::default();
        cfg.source.lambda_p = lambda_p;
        cfg
    }

    #[test]
    fn dark_counts_dominate_when_source_off() {
        let mut cfg = base_config(0.0);
        for det in Detector::ALL {
            cfg.detectors[det].lambda_d = 37.0;
        }
        let rates = singles_rates(&cfg, &AnalyzerSetting::parallel(0.0));
        for (_, tot) in rates.lambda_tot.iter() {
            assert_abs_diff_eq!(tot, 37.0, epsilon = 1e-12);
        }
        for (_, sp) in rates.lambda_sp.iter() {
            assert_abs_diff_eq!(sp, 0.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn lossless_singlet_splits_pairs_evenly() {
        let cfg = base_config(1e5);
        let rates = singles_rates(&cfg, &AnalyzerSetting::parallel(0.3));
        for (_, sp) in rates.lambda_sp.iter() {
            assert_abs_diff_eq!(sp, 5e4, epsilon = 1e-7);
        }
        for (_, xi) in rates.xi.iter() {
            assert_abs_diff_eq!(xi, 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn zero_dead_time_needs_no_correction() {
        let cfg = base_config(1e6);
        let (pi_a, pi_b) = dead_time_corrections(&cfg, &AnalyzerSetting::parallel(0.0));
        assert_eq!(pi_a, 1.0);
        assert_eq!(pi_b, 1.0);
    }

    #[test]
    fn correction_matches_direct_sum() {
        // Recompute the correction from raw parameters, independently of the
        // singles chain, at the standard low-noise operating point.
        let mut cfg = base_config(7e5);
        cfg.entanglement = crate::polarization::EntanglementParams::real(0.95, 1.0).unwrap();
        cfg.pbs_a = crate::polarization::PbsParams::from_transmittances(0.99, 0.025).unwrap();
        cfg.pbs_b = cfg.pbs_a;
        for det in Detector::ALL {
            cfg.detectors[det] = DetectorParams {
                eta: 0.5,
                tau: 0.1,
                lambda_d: 50.0,
                lambda_u: if det.channel() == Channel::Alice {
                    1.05e6
                } else {
                    1.33e6
                },
            };
        }
        cfg.channels.0 = [ChannelParams { dead_time: 1e-7 }; 2];

        let setting = AnalyzerSetting::parallel(0.0);
        let probs =
            joint_probabilities_closed_form(&cfg.entanglement, &cfg.pbs_a, &cfg.pbs_b, &setting);
        let marg: f64 = AliceDet::ALL.iter().map(|&d| probs.alice_marginal(d)).sum();
        assert_abs_diff_eq!(marg, 1.0, epsilon = 1e-12);
        let expected_a =
            1.0 / (1.0 + (0.05 * 7e5 * marg + 0.05 * 2.0 * 1.05e6 + 2.0 * 50.0) * 1e-7);
        let (pi_a, _) = dead_time_corrections(&cfg, &setting);
        assert_abs_diff_eq!(pi_a, expected_a, epsilon = 1e-12);
        assert!(pi_a > 0.0 && pi_a <= 1.0);
    }

    #[test]
    fn totals_close_over_components() {
        let mut cfg = base_config(2e5);
        for det in Detector::ALL {
            cfg.detectors[det] = DetectorParams {
                eta: 0.4,
                tau: 0.3,
                lambda_d: 11.0,
                lambda_u: 5e4,
            };
        }
        cfg.channels.0 = [ChannelParams { dead_time: 5e-8 }; 2];
        let rates = singles_rates(&cfg, &AnalyzerSetting::new(0.2, 0.9));
        for det in Detector::ALL {
            let d = &cfg.detectors[det];
            let expected = rates.lambda_sp[det] + rates.xi[det] * d.lambda_u + d.lambda_d;
            assert_abs_diff_eq!(rates.lambda_tot[det], expected, epsilon = 1e-9);
        }
        // Marginals over each arm sum to xi * lambda_p when xi is uniform.
        let alice_sum = rates.lambda_sp[Detector::A1] + rates.lambda_sp[Detector::A2];
        assert_abs_diff_eq!(
            alice_sum,
            rates.xi[Detector::A1] * cfg.source.lambda_p,
            epsilon = 1e-7
        );
    }

    #[test]
    fn poisson_closed_form_values() {
        assert_eq!(poisson_pmf(0.0, 1.0, 0), 1.0);
        assert_eq!(poisson_pmf(0.0, 5.0, 3), 0.0);
        let p = poisson_pmf(2.0, 1.0, 3);
        assert_abs_diff_eq!(p, 8.0 * (-2.0f64).exp() / 6.0, epsilon = 1e-15);
        assert_abs_diff_eq!(p, 0.180447, epsilon = 1e-6);
    }

    #[test]
    fn poisson_mass_sums_to_one() {
        let lambda = 3.0;
        let total: f64 = (0..=60).map(|n| poisson_pmf(lambda, 1.0, n)).sum();
        assert!((1.0 - total).abs() < 1e-12, "tail mass {}", 1.0 - total);
    }

    #[test]
    fn poisson_recurrence_across_log_space_boundary() {
        // pmf(n+1) = pmf(n) * mu / (n+1) must hold through the n = 20 switch.
        let mu = 18.5;
        for n in 15..30u64 {
            let lhs = poisson_pmf(mu, 1.0, n + 1);
            let rhs = poisson_pmf(mu, 1.0, n) * mu / (n + 1) as f64;
            assert_abs_diff_eq!(lhs, rhs, epsilon = 1e-13 * rhs.max(1e-300));
        }
        // Large-mean regime must not underflow spuriously.
        assert!(poisson_pmf(800.0, 1.0, 800) > 0.0);
        assert!(poisson_pmf(800.0, 1.0, 5) >= 0.0);
    }

    #[test]
    fn source_rate_derivation() {
        let rates = derive_source_rates(2.8e6, 0.25, 1.2).unwrap();
        assert_eq!(rates.lambda_p, 7e5);
        let u_bob_total = rates.lambda_u[Detector::B1] + rates.lambda_u[Detector::B2];
        assert_abs_diff_eq!(u_bob_total, 3.36e6 - 7e5, epsilon = 1e-6);

        let pure = derive_source_rates(1e6, 1.0, 1.0).unwrap();
        assert_eq!(pure.lambda_u[Detector::A1], 0.0);
        assert_eq!(pure.lambda_u[Detector::B2], 0.0);

        assert!(derive_source_rates(1e6, 0.5, 0.3).is_err());
        assert!(derive_source_rates(1e6, 0.0, 1.0).is_err());
        assert!(derive_source_rates(1e6, 1.1, 1.0).is_err());
    }

    proptest! {
        #[test]
        fn correction_shrinks_with_load(
            lambda_p in 0.0..1e7f64,
            lambda_u in 0.0..1e7f64,
            lambda_d in 0.0..1e5f64,
            dead_time in 0.0..1e-5f64,
        ) {
            let mut cfg = base_config(lambda_p);
            for det in Detector::ALL {
                cfg.detectors[det].lambda_u = lambda_u;
                cfg.detectors[det].lambda_d = lambda_d;
            }
            cfg.channels.0 = [ChannelParams { dead_time }; 2];
            let setting = AnalyzerSetting::parallel(0.4);
            let (pi_a, pi_b) = dead_time_corrections(&cfg, &setting);
            prop_assert!(pi_a > 0.0 && pi_a <= 1.0);
            prop_assert!(pi_b > 0.0 && pi_b <= 1.0);

            // Increasing any load term can only lower the correction.
            let mut heavier = cfg.clone();
            heavier.source.lambda_p = lambda_p * 2.0 + 1.0;
            let (pa2, pb2) = dead_time_corrections(&heavier, &setting);
            prop_assert!(pa2 <= pi_a + 1e-15);
            prop_assert!(pb2 <= pi_b + 1e-15);

            let mut longer = cfg.clone();
            longer.channels.0 = [ChannelParams { dead_time: dead_time * 3.0 + 1e-9 }; 2];
            let (pa3, pb3) = dead_time_corrections(&longer, &setting);
            prop_assert!(pa3 <= pi_a + 1e-15);
            prop_assert!(pb3 <= pi_b + 1e-15);
        }
    }
}
