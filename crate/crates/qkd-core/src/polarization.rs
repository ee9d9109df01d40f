//! Source state, analyzer rotations, PBS port coupling and joint detection
//! probabilities.
//!
//! Two independent routes compute the probability that a photon pair fires
//! detectors `x_a` and `y_b`:
//!
//! * [`joint_probabilities_trace`] builds the full 16x16 state/operator
//!   algebra (polarization pair tensor PBS port pair) and evaluates the
//!   projective trace directly;
//! * [`joint_probabilities_closed_form`] evaluates the closed-form
//!   expressions obtained by carrying out that trace analytically.
//!
//! They must agree to near machine precision; the rest of the crate uses the
//! closed form and the trace route serves as its oracle.
//!
//! # Basis ordering
//!
//! The 4-dim polarization-pair space is ordered `{H_aH_b, H_aV_b, V_aH_b,
//! V_aV_b}` (index `2*pol_a + pol_b` with `H = 0`, `V = 1`). The 4-dim PBS
//! port-pair space is ordered `{1a1b, 1a2b, 2a1b, 2a2b}` (index
//! `2*port_a + port_b` with port 1 = transmitted, port 2 = reflected). The
//! combined 16-dim index is port-major: `4*port_index + pol_index`, which
//! makes the coupling unitary a 4x4 grid of 4x4 polarization-diagonal blocks.

use nalgebra::{Matrix2, Matrix4, SMatrix};
use num_complex::Complex64;

use crate::detector::{AliceDet, BobDet, DetectorPair, PerPair};
use crate::{invalid, QkdError};

type Matrix16 = SMatrix<Complex64, 16, 16>;

/// Photon polarization along the PBS eigenaxes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pol {
    H,
    V,
}

/// Source-state imperfection parameters.
///
/// `epsilon` is the complex amplitude imbalance between the two populated
/// polarization terms; `zeta` (with `|zeta| <= 1`) is the residual coherence
/// between them. `epsilon = zeta = 1` gives the singlet state.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntanglementParams {
    epsilon: Complex64,
    zeta: Complex64,
}

impl EntanglementParams {
    /// Validates `|zeta| <= 1`. Any `epsilon` is accepted (the state is
    /// normalized for all values); magnitudes far above 1 are physically
    /// implausible and draw a warning.
    pub fn new(epsilon: Complex64, zeta: Complex64) -> Result<EntanglementParams, QkdError> {
        if !(epsilon.re.is_finite() && epsilon.im.is_finite()) {
            return Err(invalid("entanglement.epsilon", "must be finite"));
        }
        if !(zeta.re.is_finite() && zeta.im.is_finite()) || zeta.norm() > 1.0 + 1e-12 {
            return Err(invalid(
                "entanglement.zeta",
                format!("|zeta| must be <= 1, got {}", zeta.norm()),
            ));
        }
        if epsilon.norm() > 1.5 {
            log::warn!(
                "entanglement.epsilon has magnitude {:.3}; values far above 1 are unusual",
                epsilon.norm()
            );
        }
        Ok(EntanglementParams { epsilon, zeta })
    }

    /// Real-valued shorthand used by the bundled presets.
    pub fn real(epsilon: f64, zeta: f64) -> Result<EntanglementParams, QkdError> {
        EntanglementParams::new(Complex64::new(epsilon, 0.0), Complex64::new(zeta, 0.0))
    }

    /// Maximally entangled source (`epsilon = zeta = 1`).
    pub fn maximal() -> EntanglementParams {
        EntanglementParams {
            epsilon: Complex64::new(1.0, 0.0),
            zeta: Complex64::new(1.0, 0.0),
        }
    }

    pub fn epsilon(&self) -> Complex64 {
        self.epsilon
    }

    pub fn zeta(&self) -> Complex64 {
        self.zeta
    }
}

/// Lossless polarizing beam splitter with leakage.
///
/// `t_mag` is the amplitude transmittance for `H`, `tperp_mag` the amplitude
/// transmittance for `V` (the leakage; 0 for an ideal PBS). The reflected
/// amplitudes follow from losslessness with the fixed phase convention
/// `r = i|r|` relative to a real transmitted amplitude, under which
/// `t^2 - r^2 = |t|^2 + |r|^2 = 1` and the coupling matrix scalars reduce to
/// the amplitudes themselves.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PbsParams {
    t_mag: f64,
    tperp_mag: f64,
}

impl PbsParams {
    pub fn new(t_mag: f64, tperp_mag: f64) -> Result<PbsParams, QkdError> {
        for (field, v) in [("pbs.t", t_mag), ("pbs.tperp", tperp_mag)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(invalid(
                    field,
                    format!("amplitude must be in [0, 1], got {v}"),
                ));
            }
        }
        Ok(PbsParams { t_mag, tperp_mag })
    }

    /// Builds from intensity transmittances `|t|^2` and `|tperp|^2`.
    pub fn from_transmittances(t_sq: f64, tperp_sq: f64) -> Result<PbsParams, QkdError> {
        for (field, v) in [("pbs.t_sq", t_sq), ("pbs.tperp_sq", tperp_sq)] {
            if !(0.0..=1.0).contains(&v) || !v.is_finite() {
                return Err(invalid(
                    field,
                    format!("intensity transmittance must be in [0, 1], got {v}"),
                ));
            }
        }
        Ok(PbsParams {
            t_mag: t_sq.sqrt(),
            tperp_mag: tperp_sq.sqrt(),
        })
    }

    /// Perfect splitter: `H` fully transmitted, `V` fully reflected.
    pub fn ideal() -> PbsParams {
        PbsParams {
            t_mag: 1.0,
            tperp_mag: 0.0,
        }
    }

    pub fn t_mag(&self) -> f64 {
        self.t_mag
    }

    pub fn tperp_mag(&self) -> f64 {
        self.tperp_mag
    }

    pub fn r_mag(&self) -> f64 {
        (1.0 - self.t_mag * self.t_mag).max(0.0).sqrt()
    }

    pub fn rperp_mag(&self) -> f64 {
        (1.0 - self.tperp_mag * self.tperp_mag).max(0.0).sqrt()
    }

    /// Complex amplitude for a photon of polarization `pol` leaving through
    /// the transmitted (`true`) or reflected (`false`) output port.
    pub fn amplitude(&self, pol: Pol, transmitted: bool) -> Complex64 {
        match (pol, transmitted) {
            (Pol::H, true) => Complex64::new(self.t_mag, 0.0),
            (Pol::H, false) => Complex64::new(0.0, self.r_mag()),
            (Pol::V, true) => Complex64::new(self.tperp_mag, 0.0),
            (Pol::V, false) => Complex64::new(0.0, self.rperp_mag()),
        }
    }

    /// Intensity coefficients `(|amp(H)|^2, |amp(V)|^2)` for the output port
    /// feeding the given detector index (1 = transmitted, 2 = reflected).
    fn intensity_coeffs(&self, detector_one: bool) -> (f64, f64) {
        if detector_one {
            (self.t_mag * self.t_mag, self.tperp_mag * self.tperp_mag)
        } else {
            let r = self.r_mag();
            let rp = self.rperp_mag();
            (r * r, rp * rp)
        }
    }
}

/// One analyzer angle per arm, in radians. All probabilities are periodic in
/// each angle with period pi.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalyzerSetting {
    pub theta_a: f64,
    pub theta_b: f64,
}

impl AnalyzerSetting {
    pub fn new(theta_a: f64, theta_b: f64) -> AnalyzerSetting {
        AnalyzerSetting { theta_a, theta_b }
    }

    /// Both analyzers at the same angle.
    pub fn parallel(theta: f64) -> AnalyzerSetting {
        AnalyzerSetting {
            theta_a: theta,
            theta_b: theta,
        }
    }
}

/// The four joint detection probabilities for one analyzer setting.
///
/// This stage is lossless, so the four entries sum to 1; losses, dark counts
/// and dead time are applied downstream in the counting chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointProbabilityTable {
    pub p: PerPair<f64>,
}

impl JointProbabilityTable {
    pub fn get(&self, pair: DetectorPair) -> f64 {
        self.p[pair]
    }

    pub fn sum(&self) -> f64 {
        self.p.sum()
    }

    /// Marginal probability that Alice's photon reaches the given detector.
    pub fn alice_marginal(&self, det: AliceDet) -> f64 {
        BobDet::ALL
            .iter()
            .map(|&b| self.p[DetectorPair::new(det, b)])
            .sum()
    }

    /// Marginal probability that Bob's photon reaches the given detector.
    pub fn bob_marginal(&self, det: BobDet) -> f64 {
        AliceDet::ALL
            .iter()
            .map(|&a| self.p[DetectorPair::new(a, det)])
            .sum()
    }
}

/// Density matrix of the two-photon polarization state in the basis
/// `{H_aH_b, H_aV_b, V_aH_b, V_aV_b}`.
///
/// Only the `H_aV_b`/`V_aH_b` block is populated: diagonal entries
/// `1/(1+|eps|^2)` and `|eps|^2/(1+|eps|^2)`, off-diagonal
/// `-eps*zeta/(1+|eps|^2)` and its conjugate. Hermitian with unit trace for
/// any `eps`; positive semidefinite because `|zeta| <= 1`.
pub fn make_state(ent: &EntanglementParams) -> Matrix4<Complex64> {
    let eps = ent.epsilon;
    let zeta = ent.zeta;
    let norm = 1.0 / (1.0 + eps.norm_sqr());
    let mut rho = Matrix4::zeros();
    // Indices: 1 = H_aV_b, 2 = V_aH_b.
    rho[(1, 1)] = Complex64::new(norm, 0.0);
    rho[(2, 2)] = Complex64::new(norm * eps.norm_sqr(), 0.0);
    rho[(2, 1)] = -eps * zeta * norm;
    rho[(1, 2)] = -(eps * zeta).conj() * norm;
    rho
}

/// Analyzer rotation by `theta`: `[[cos, sin], [sin, -cos]]` in the `{H, V}`
/// basis. Orthogonal and involutory.
pub fn pas_rotation(theta: f64) -> Matrix2<f64> {
    let (s, c) = theta.sin_cos();
    Matrix2::new(c, s, s, -c)
}

/// Per-photon amplitude connecting input port `input` to output port
/// `output` for polarization `pol` (ports are 0-based: 0 = port 1).
fn port_amplitude(pbs: &PbsParams, pol: Pol, output: usize, input: usize) -> Complex64 {
    // Same port index means the transmitted path, crossing means reflection.
    pbs.amplitude(pol, output == input)
}

/// The 16x16 coupling unitary between the photon-pair polarization state and
/// the PBS ports of both arms.
///
/// In the port-major layout (see module docs) it is a 4x4 grid of 4x4
/// polarization-diagonal blocks; with the phase convention `r = i|r|` it is
/// unitary to machine precision.
pub fn pbs_unitary(pbs_a: &PbsParams, pbs_b: &PbsParams) -> Matrix16 {
    let mut u = Matrix16::zeros();
    for out_a in 0..2 {
        for out_b in 0..2 {
            for in_a in 0..2 {
                for in_b in 0..2 {
                    let row_block = 2 * out_a + out_b;
                    let col_block = 2 * in_a + in_b;
                    for (pol_idx, (pol_a, pol_b)) in [
                        (Pol::H, Pol::H),
                        (Pol::H, Pol::V),
                        (Pol::V, Pol::H),
                        (Pol::V, Pol::V),
                    ]
                    .into_iter()
                    .enumerate()
                    {
                        let amp = port_amplitude(pbs_a, pol_a, out_a, in_a)
                            * port_amplitude(pbs_b, pol_b, out_b, in_b);
                        u[(4 * row_block + pol_idx, 4 * col_block + pol_idx)] = amp;
                    }
                }
            }
        }
    }
    u
}

fn pair_port_block(pair: DetectorPair) -> usize {
    let a = match pair.alice {
        AliceDet::A1 => 0,
        AliceDet::A2 => 1,
    };
    let b = match pair.bob {
        BobDet::B1 => 0,
        BobDet::B2 => 1,
    };
    2 * a + b
}

/// Joint detection probabilities by the projective trace over the full
/// 16-dim polarization-and-port space.
///
/// The input state is `rho (x) |I1_a I1_b><I1_a I1_b|`; the analyzers act as
/// `T_a (x) T_b` on polarization (identity on ports), the PBS coupling as
/// [`pbs_unitary`], and each detector pair as the projector onto its output
/// port pair (identity on polarization).
pub fn joint_probabilities_trace(
    state: &Matrix4<Complex64>,
    pbs_a: &PbsParams,
    pbs_b: &PbsParams,
    setting: &AnalyzerSetting,
) -> JointProbabilityTable {
    let t_a = pas_rotation(setting.theta_a);
    let t_b = pas_rotation(setting.theta_b);

    // K4 = T_a (x) T_b on the polarization pair.
    let mut k4 = Matrix4::<Complex64>::zeros();
    for ia in 0..2 {
        for ib in 0..2 {
            for ja in 0..2 {
                for jb in 0..2 {
                    k4[(2 * ia + ib, 2 * ja + jb)] =
                        Complex64::new(t_a[(ia, ja)] * t_b[(ib, jb)], 0.0);
                }
            }
        }
    }

    // S = 1_ports (x) (T_a (x) T_b), port-major.
    let mut s16 = Matrix16::zeros();
    for port in 0..4 {
        for i in 0..4 {
            for j in 0..4 {
                s16[(4 * port + i, 4 * port + j)] = k4[(i, j)];
            }
        }
    }

    // rho_in = rho (x) |port 1a1b><port 1a1b| (both photons enter port 1).
    let mut rho_in = Matrix16::zeros();
    for i in 0..4 {
        for j in 0..4 {
            rho_in[(i, j)] = state[(i, j)];
        }
    }

    let u16 = pbs_unitary(pbs_a, pbs_b);
    let evolved = u16 * s16 * rho_in * s16.adjoint() * u16.adjoint();

    let p = PerPair::from_fn(|pair| {
        let block = pair_port_block(pair);
        let mut proj = Matrix16::zeros();
        for i in 0..4 {
            let idx = 4 * block + i;
            proj[(idx, idx)] = Complex64::new(1.0, 0.0);
        }
        (proj * evolved * proj.adjoint()).trace().re
    });
    JointProbabilityTable { p }
}

/// Joint detection probabilities by direct evaluation of the closed forms.
///
/// Each probability is a bilinear form in the PBS intensity coefficients with
/// `cos^2`/`sin^2` weights plus an interference term proportional to
/// `sin(2 theta_a) sin(2 theta_b) Re(eps zeta / 2)`.
pub fn joint_probabilities_closed_form(
    ent: &EntanglementParams,
    pbs_a: &PbsParams,
    pbs_b: &PbsParams,
    setting: &AnalyzerSetting,
) -> JointProbabilityTable {
    let eps_sq = ent.epsilon.norm_sqr();
    let norm = 1.0 / (1.0 + eps_sq);
    let re_ez_half = (ent.epsilon * ent.zeta).re / 2.0;

    let (sa, ca) = setting.theta_a.sin_cos();
    let (sb, cb) = setting.theta_b.sin_cos();
    let (ca2, sa2) = (ca * ca, sa * sa);
    let (cb2, sb2) = (cb * cb, sb * sb);
    let sin2a = (2.0 * setting.theta_a).sin();
    let sin2b = (2.0 * setting.theta_b).sin();

    let p = PerPair::from_fn(|pair| {
        let (gah, gav) = pbs_a.intensity_coeffs(pair.alice == AliceDet::A1);
        let (gbh, gbv) = pbs_b.intensity_coeffs(pair.bob == BobDet::B1);

        let cos_b_term =
            cb2 * (ca2 * (gah * gbv + gav * gbh * eps_sq) + sa2 * (gav * gbv + gah * gbh * eps_sq));
        let sin_b_term =
            sb2 * (ca2 * (gah * gbh + gav * gbv * eps_sq) + sa2 * (gav * gbh + gah * gbv * eps_sq));
        let interference =
            sin2a * sin2b * re_ez_half * (-gah * gbh + gav * gbh + gah * gbv - gav * gbv);

        norm * (cos_b_term + sin_b_term + interference)
    });
    JointProbabilityTable { p }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;
    use std::f64::consts::{FRAC_PI_4, FRAC_PI_8, PI};

    fn singlet() -> EntanglementParams {
        EntanglementParams::maximal()
    }

    #[test]
    fn singlet_state_matrix() {
        let rho = make_state(&singlet());
        assert_abs_diff_eq!(rho[(1, 1)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(2, 2)].re, 0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(1, 2)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(2, 1)].re, -0.5, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(0, 0)].norm(), 0.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(3, 3)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn zero_epsilon_gives_product_state() {
        let ent = EntanglementParams::real(0.0, 1.0).unwrap();
        let rho = make_state(&ent);
        assert_abs_diff_eq!(rho[(1, 1)].re, 1.0, epsilon = 1e-15);
        let trace: f64 = (0..4).map(|i| rho[(i, i)].re).sum();
        assert_abs_diff_eq!(trace, 1.0, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(1, 2)].norm(), 0.0, epsilon = 1e-15);
    }

    #[test]
    fn partially_entangled_state_entries() {
        let ent = EntanglementParams::real(0.95, 1.0).unwrap();
        let rho = make_state(&ent);
        let n = 1.0 + 0.95 * 0.95;
        assert_abs_diff_eq!(rho[(1, 1)].re, 1.0 / n, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(2, 2)].re, 0.95 * 0.95 / n, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(2, 1)].re, -0.95 / n, epsilon = 1e-15);
        assert_abs_diff_eq!(rho[(1, 2)].im, 0.0, epsilon = 1e-15);
    }

    #[test]
    fn unphysical_zeta_rejected() {
        assert!(EntanglementParams::real(1.0, 1.2).is_err());
        assert!(
            EntanglementParams::new(Complex64::new(1.0, 0.0), Complex64::new(0.8, 0.8)).is_err()
        );
    }

    #[test]
    fn rotation_special_angles() {
        let t0 = pas_rotation(0.0);
        assert_eq!(t0, Matrix2::new(1.0, 0.0, 0.0, -1.0));
        let t = pas_rotation(FRAC_PI_4);
        let h = std::f64::consts::FRAC_1_SQRT_2;
        assert_abs_diff_eq!(t[(0, 0)], h, epsilon = 1e-15);
        assert_abs_diff_eq!(t[(0, 1)], h, epsilon = 1e-15);
        assert_abs_diff_eq!(t[(1, 0)], h, epsilon = 1e-15);
        assert_abs_diff_eq!(t[(1, 1)], -h, epsilon = 1e-15);
    }

    #[test]
    fn ideal_coupling_matrix_is_sparse() {
        let ideal = PbsParams::ideal();
        let u = pbs_unitary(&ideal, &ideal);
        // Diagonal blocks of the ideal matrix: single unit-magnitude entries
        // in the HH / HV / VH / VV slots. The reflected amplitudes carry the
        // i phase, so the VV entry is i*i = -1 (a global phase per block;
        // probabilities are unaffected).
        assert_eq!(u[(0, 0)], Complex64::new(1.0, 0.0));
        assert_eq!(u[(4 + 1, 1)], Complex64::new(0.0, 1.0));
        assert_eq!(u[(8 + 2, 2)], Complex64::new(0.0, 1.0));
        assert_eq!(u[(12 + 3, 3)], Complex64::new(-1.0, 0.0));
        let nonzero = u.iter().filter(|c| c.norm() > 1e-15).count();
        assert_eq!(nonzero, 16);
        for entry in u.iter().filter(|c| c.norm() > 1e-15) {
            assert_abs_diff_eq!(entry.norm(), 1.0, epsilon = 1e-15);
        }
    }

    #[test]
    fn coupling_matrix_block_structure() {
        // The grid of blocks must follow the [[U1,U2,U3,U4],[U2,U1,U4,U3],
        // [U3,U4,U1,U2],[U4,U3,U2,U1]] arrangement, with U1..U4 the
        // transmit/reflect products per arm.
        let pbs_a = PbsParams::from_transmittances(0.99, 0.025).unwrap();
        let pbs_b = PbsParams::from_transmittances(0.98, 0.05).unwrap();
        let u = pbs_unitary(&pbs_a, &pbs_b);

        let diag = |ta: bool, tb: bool| -> [Complex64; 4] {
            [
                pbs_a.amplitude(Pol::H, ta) * pbs_b.amplitude(Pol::H, tb),
                pbs_a.amplitude(Pol::H, ta) * pbs_b.amplitude(Pol::V, tb),
                pbs_a.amplitude(Pol::V, ta) * pbs_b.amplitude(Pol::H, tb),
                pbs_a.amplitude(Pol::V, ta) * pbs_b.amplitude(Pol::V, tb),
            ]
        };
        let u1 = diag(true, true);
        let u2 = diag(true, false);
        let u3 = diag(false, true);
        let u4 = diag(false, false);
        let layout = [
            [&u1, &u2, &u3, &u4],
            [&u2, &u1, &u4, &u3],
            [&u3, &u4, &u1, &u2],
            [&u4, &u3, &u2, &u1],
        ];
        for (br, row) in layout.iter().enumerate() {
            for (bc, block) in row.iter().enumerate() {
                for i in 0..4 {
                    for j in 0..4 {
                        let expected = if i == j {
                            block[i]
                        } else {
                            Complex64::default()
                        };
                        let got = u[(4 * br + i, 4 * bc + j)];
                        assert!(
                            (got - expected).norm() < 1e-15,
                            "block ({br},{bc}) entry ({i},{j})"
                        );
                    }
                }
            }
        }
    }

    #[test]
    fn ideal_singlet_reproduces_sine_pattern() {
        let ideal = PbsParams::ideal();
        let rho = make_state(&singlet());
        for k in 0..50 {
            let d = -1.3 + 0.11 * k as f64;
            let setting = AnalyzerSetting::new(0.7 + d, 0.7);
            let probs = joint_probabilities_trace(&rho, &ideal, &ideal, &setting);
            let s2 = d.sin().powi(2) / 2.0;
            let c2 = d.cos().powi(2) / 2.0;
            assert_abs_diff_eq!(probs.p.0[0], s2, epsilon = 1e-12);
            assert_abs_diff_eq!(probs.p.0[3], s2, epsilon = 1e-12);
            assert_abs_diff_eq!(probs.p.0[1], c2, epsilon = 1e-12);
            assert_abs_diff_eq!(probs.p.0[2], c2, epsilon = 1e-12);
        }
    }

    #[test]
    fn eighth_turn_offset_probability() {
        let ideal = PbsParams::ideal();
        let rho = make_state(&singlet());
        let probs =
            joint_probabilities_trace(&rho, &ideal, &ideal, &AnalyzerSetting::new(0.0, FRAC_PI_8));
        let expected = FRAC_PI_8.sin().powi(2) / 2.0;
        assert_abs_diff_eq!(
            probs.get(DetectorPair::new(AliceDet::A1, BobDet::B1)),
            expected,
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(expected, 0.0732233, epsilon = 1e-7);
    }

    #[test]
    fn quarter_turn_offset_equalizes_probabilities() {
        let ideal = PbsParams::ideal();
        let ent = singlet();
        let probs = joint_probabilities_closed_form(
            &ent,
            &ideal,
            &ideal,
            &AnalyzerSetting::new(FRAC_PI_4 + 0.3, 0.3),
        );
        for (_, p) in probs.p.iter() {
            assert_abs_diff_eq!(p, 0.25, epsilon = 1e-12);
        }
    }

    #[test]
    fn leaky_pbs_opens_error_floor() {
        let pbs = PbsParams::from_transmittances(0.99, 0.025).unwrap();
        let probs = joint_probabilities_closed_form(
            &singlet(),
            &pbs,
            &pbs,
            &AnalyzerSetting::parallel(0.0),
        );
        let wrong = probs.get(DetectorPair::new(AliceDet::A1, BobDet::B1));
        assert!(wrong > 0.0, "leakage must produce a nonzero error floor");
        // Cross-check against the trace route at the same point.
        let trace = joint_probabilities_trace(
            &make_state(&singlet()),
            &pbs,
            &pbs,
            &AnalyzerSetting::parallel(0.0),
        );
        assert_abs_diff_eq!(wrong, trace.p.0[0], epsilon = 1e-13);
    }

    fn arb_params() -> impl Strategy<Value = (EntanglementParams, PbsParams, PbsParams, f64, f64)> {
        (
            -2.0..2.0f64,
            -1.0..1.0f64,
            0.0..1.0f64,
            0.0..std::f64::consts::TAU,
            0.0..1.0f64,
            0.0..1.0f64,
            0.0..1.0f64,
            0.0..1.0f64,
            -4.0..4.0f64,
            -4.0..4.0f64,
        )
            .prop_map(
                |(er, ei, zmag, zphase, ta, tpa, tb, tpb, theta_a, theta_b)| {
                    let eps = Complex64::new(er, ei);
                    let zeta = Complex64::from_polar(zmag, zphase);
                    (
                        EntanglementParams::new(eps, zeta).unwrap(),
                        PbsParams::new(ta, tpa).unwrap(),
                        PbsParams::new(tb, tpb).unwrap(),
                        theta_a,
                        theta_b,
                    )
                },
            )
    }

    proptest! {
        #[test]
        fn rotation_is_involutory(theta in -10.0..10.0f64) {
            let t = pas_rotation(theta);
            let id = t * t;
            prop_assert!((id - Matrix2::identity()).norm() < 1e-14);
        }

        #[test]
        fn coupling_matrix_is_unitary((_, pbs_a, pbs_b, _, _) in arb_params()) {
            let u = pbs_unitary(&pbs_a, &pbs_b);
            let gram = u.adjoint() * u;
            let id = Matrix16::identity();
            prop_assert!((gram - id).norm() < 1e-12);
        }

        #[test]
        fn probabilities_normalize((ent, pbs_a, pbs_b, ta, tb) in arb_params()) {
            let setting = AnalyzerSetting::new(ta, tb);
            let closed = joint_probabilities_closed_form(&ent, &pbs_a, &pbs_b, &setting);
            prop_assert!((closed.sum() - 1.0).abs() < 1e-12);
            for (_, p) in closed.p.iter() {
                prop_assert!((-1e-13..=1.0 + 1e-13).contains(&p));
            }
        }

        #[test]
        fn trace_and_closed_form_agree((ent, pbs_a, pbs_b, ta, tb) in arb_params()) {
            let setting = AnalyzerSetting::new(ta, tb);
            let rho = make_state(&ent);
            let trace = joint_probabilities_trace(&rho, &pbs_a, &pbs_b, &setting);
            let closed = joint_probabilities_closed_form(&ent, &pbs_a, &pbs_b, &setting);
            for pair in DetectorPair::ALL {
                prop_assert!((trace.get(pair) - closed.get(pair)).abs() < 1e-12);
            }
        }

        #[test]
        fn half_turn_symmetry((ent, pbs_a, pbs_b, ta, tb) in arb_params()) {
            let base = joint_probabilities_closed_form(
                &ent, &pbs_a, &pbs_b, &AnalyzerSetting::new(ta, tb));
            let shift_a = joint_probabilities_closed_form(
                &ent, &pbs_a, &pbs_b, &AnalyzerSetting::new(ta + PI, tb));
            let shift_b = joint_probabilities_closed_form(
                &ent, &pbs_a, &pbs_b, &AnalyzerSetting::new(ta, tb + PI));
            for pair in DetectorPair::ALL {
                prop_assert!((base.get(pair) - shift_a.get(pair)).abs() < 1e-12);
                prop_assert!((base.get(pair) - shift_b.get(pair)).abs() < 1e-12);
            }
        }
    }
}
