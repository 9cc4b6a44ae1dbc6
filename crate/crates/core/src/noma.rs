//! Two-user NOMA downlink metrics: effective gains, SINRs, rates and
//! energy efficiency.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::ChannelRealization;

/// Slack applied to QoS and power-budget comparisons.
pub const QOS_SLACK: f64 = 1e-9;

#[derive(Debug, Error, PartialEq)]
pub enum NomaError {
    #[error("vector length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("phase element {index} has modulus {modulus}, expected 1")]
    NotUnitModulus { index: usize, modulus: f64 },
    #[error("power split invalid: {0}")]
    InvalidPower(String),
    #[error("energy-efficiency denominator must be positive, got {0}")]
    NonPositiveDenominator(f64),
}

/// RIS phase vector `xi`, the conjugated diagonal of the reflection matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct RisPhase {
    xi: Vec<Complex64>,
}

impl RisPhase {
    pub const MODULUS_TOL: f64 = 1e-6;

    pub fn new(xi: Vec<Complex64>) -> Result<Self, NomaError> {
        for (index, x) in xi.iter().enumerate() {
            let modulus = x.norm();
            if !((modulus - 1.0).abs() <= Self::MODULUS_TOL) {
                return Err(NomaError::NotUnitModulus { index, modulus });
            }
        }
        Ok(Self { xi })
    }

    /// Projects every entry onto the unit circle; zero entries map to 1.
    pub fn project(values: &[Complex64]) -> Self {
        let xi = values
            .iter()
            .map(|v| {
                let n = v.norm();
                if n > 0.0 && n.is_finite() {
                    v / n
                } else {
                    Complex64::new(1.0, 0.0)
                }
            })
            .collect();
        Self { xi }
    }

    pub fn from_angles(angles: &[f64]) -> Self {
        Self {
            xi: angles.iter().map(|&a| Complex64::from_polar(1.0, a)).collect(),
        }
    }

    /// All reflection coefficients equal to one (zero phase shift).
    pub fn zero_phase(elements: usize) -> Self {
        Self {
            xi: vec![Complex64::new(1.0, 0.0); elements],
        }
    }

    pub fn rotated(&self, angle: f64) -> Self {
        let r = Complex64::from_polar(1.0, angle);
        Self {
            xi: self.xi.iter().map(|x| x * r).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.xi.len()
    }

    pub fn is_empty(&self) -> bool {
        self.xi.is_empty()
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.xi
    }

    /// Reflection coefficients `alpha_m = conj(xi_m)`.
    pub fn reflection(&self) -> Vec<Complex64> {
        self.xi.iter().map(|x| x.conj()).collect()
    }
}

/// NOMA power coefficients and the powers they scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerSplit {
    pub rho_strong: f64,
    pub rho_weak: f64,
    /// Satellite transmit power `P_l` in watts.
    pub p_total: f64,
    pub p_circuit: f64,
}

impl PowerSplit {
    /// Checks the coefficient box, the coefficient sum and the power budget.
    pub fn validate(&self, p_max: f64) -> Result<(), NomaError> {
        let in_unit = |r: f64| (-QOS_SLACK..=1.0 + QOS_SLACK).contains(&r);
        if !in_unit(self.rho_strong) || !in_unit(self.rho_weak) {
            return Err(NomaError::InvalidPower("coefficients must lie in [0, 1]".into()));
        }
        let sum = self.rho_strong + self.rho_weak;
        if sum > 1.0 + QOS_SLACK {
            return Err(NomaError::InvalidPower(format!("coefficient sum {sum} exceeds 1")));
        }
        if !(self.p_total >= 0.0) || self.p_total * sum > p_max * (1.0 + QOS_SLACK) {
            return Err(NomaError::InvalidPower("transmit power exceeds budget".into()));
        }
        if !(self.p_circuit >= 0.0) {
            return Err(NomaError::InvalidPower("circuit power must be nonnegative".into()));
        }
        Ok(())
    }

    /// Total consumed power `P_l (rho_i + rho_j) + p_c`.
    pub fn consumed(&self) -> f64 {
        self.p_total * (self.rho_strong + self.rho_weak) + self.p_circuit
    }
}

/// Minimum-quality requirement per user.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum QosSpec {
    /// Linear SINR threshold.
    Sinr(f64),
    /// Spectral efficiency in b/s/Hz, threshold `2^r - 1`.
    SpectralEfficiency(f64),
}

impl Default for QosSpec {
    fn default() -> Self {
        QosSpec::SpectralEfficiency(0.5)
    }
}

impl QosSpec {
    pub fn min_sinr(&self) -> f64 {
        match *self {
            QosSpec::Sinr(g) => g.max(0.0),
            QosSpec::SpectralEfficiency(r) => (2f64.powf(r) - 1.0).max(0.0),
        }
    }
}

pub fn check_qos(sinr: f64, qos: &QosSpec) -> bool {
    sinr >= qos.min_sinr() - QOS_SLACK
}

/// Per-element cascade coefficients `g_m f_m`.
pub fn hadamard_lift(g: &[Complex64], f: &[Complex64]) -> Result<Vec<Complex64>, NomaError> {
    if g.len() != f.len() {
        return Err(NomaError::LengthMismatch(g.len(), f.len()));
    }
    Ok(g.iter().zip(f).map(|(a, b)| a * b).collect())
}

/// RIS cascade `xi^H H_hat`.
pub fn cascade(xi: &RisPhase, lifted: &[Complex64]) -> Result<Complex64, NomaError> {
    if xi.len() != lifted.len() {
        return Err(NomaError::LengthMismatch(xi.len(), lifted.len()));
    }
    Ok(xi.as_slice().iter().zip(lifted).map(|(x, h)| x.conj() * h).sum())
}

/// Effective power gain `|h + g Theta f|^2`.
pub fn effective_gain(
    h: Complex64,
    g: &[Complex64],
    xi: &RisPhase,
    f: &[Complex64],
) -> Result<f64, NomaError> {
    let lifted = hadamard_lift(g, f)?;
    Ok((h + cascade(xi, &lifted)?).norm_sqr())
}

/// `(O_strong, O_weak)` for a channel and phase.
pub fn effective_gains(channel: &ChannelRealization, xi: &RisPhase) -> Result<[f64; 2], NomaError> {
    let mut out = [0.0; 2];
    for (u, slot) in out.iter_mut().enumerate() {
        *slot = effective_gain(channel.h_direct[u], &channel.g_sat_ris, xi, &channel.f_ris_gu[u])?;
    }
    Ok(out)
}

/// SINRs with SIC at the strong user: `(gamma_i, gamma_j)`.
pub fn sinr_pair(power: &PowerSplit, o_strong: f64, o_weak: f64, noise_var: f64) -> (f64, f64) {
    let p = power.p_total;
    let strong = p * power.rho_strong * o_strong / noise_var;
    let weak = p * power.rho_weak * o_weak / (noise_var + p * power.rho_strong * o_weak);
    (strong, weak)
}

pub fn rate(sinr: f64) -> f64 {
    (1.0 + sinr).log2()
}

/// `(R_i + R_j) / (P_l (rho_i + rho_j) + p_c)`; rates scaled by bandwidth in
/// absolute mode (bits per joule).
pub fn energy_efficiency(
    rates: (f64, f64),
    power: &PowerSplit,
    bandwidth: f64,
    absolute_units: bool,
) -> Result<f64, NomaError> {
    let denom = power.consumed();
    if !(denom > 0.0) {
        return Err(NomaError::NonPositiveDenominator(denom));
    }
    let scale = if absolute_units { bandwidth } else { 1.0 };
    Ok(scale * (rates.0 + rates.1) / denom)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LinkMetrics {
    pub o_strong: f64,
    pub o_weak: f64,
    pub sinr_strong: f64,
    pub sinr_weak: f64,
    pub rate_strong: f64,
    pub rate_weak: f64,
    pub ee: f64,
    /// Beamforming made the nominal weak user stronger than the SIC user.
    pub order_inverted: bool,
}

impl LinkMetrics {
    pub fn sum_rate(&self) -> f64 {
        self.rate_strong + self.rate_weak
    }

    pub fn meets(&self, qos: &QosSpec) -> bool {
        check_qos(self.sinr_strong, qos) && check_qos(self.sinr_weak, qos)
    }
}

/// Metrics from precomputed effective gains.
pub fn metrics_from_gains(
    gains: [f64; 2],
    power: &PowerSplit,
    noise_var: f64,
    bandwidth: f64,
    absolute_units: bool,
) -> Result<LinkMetrics, NomaError> {
    let (si, sj) = sinr_pair(power, gains[0], gains[1], noise_var);
    let (ri, rj) = (rate(si), rate(sj));
    Ok(LinkMetrics {
        o_strong: gains[0],
        o_weak: gains[1],
        sinr_strong: si,
        sinr_weak: sj,
        rate_strong: ri,
        rate_weak: rj,
        ee: energy_efficiency((ri, rj), power, bandwidth, absolute_units)?,
        order_inverted: gains[0] < gains[1],
    })
}

/// Full-link metrics including the direct paths.
pub fn evaluate_link(
    channel: &ChannelRealization,
    xi: &RisPhase,
    power: &PowerSplit,
    bandwidth: f64,
    absolute_units: bool,
) -> Result<LinkMetrics, NomaError> {
    let gains = effective_gains(channel, xi)?;
    metrics_from_gains(gains, power, channel.noise_var, bandwidth, absolute_units)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn split(ri: f64, rj: f64, p: f64, pc: f64) -> PowerSplit {
        PowerSplit {
            rho_strong: ri,
            rho_weak: rj,
            p_total: p,
            p_circuit: pc,
        }
    }

    #[test]
    fn single_coherent_path() {
        let xi = RisPhase::zero_phase(1);
        let o = effective_gain(c(0.0, 0.0), &[c(1.0, 0.0)], &xi, &[c(1.0, 0.0)]).unwrap();
        assert_eq!(o, 1.0);
    }

    #[test]
    fn two_paths_combine_coherently() {
        let xi = RisPhase::zero_phase(2);
        let ones = [c(1.0, 0.0), c(1.0, 0.0)];
        let o = effective_gain(c(0.0, 0.0), &ones, &xi, &ones).unwrap();
        assert_eq!(o, 4.0);
    }

    #[test]
    fn lift_matches_diagonal_matrix_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let mut draw = || c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        let m = 8;
        let g: Vec<_> = (0..m).map(|_| draw()).collect();
        let f: Vec<_> = (0..m).map(|_| draw()).collect();
        let h = draw();
        let angles: Vec<f64> = (0..m).map(|k| 0.7 * k as f64 + 0.3).collect();
        let xi = RisPhase::from_angles(&angles);
        // g^T diag(alpha) f, built as an explicit M x M product
        let alpha = xi.reflection();
        let mut theta_f = vec![c(0.0, 0.0); m];
        for r in 0..m {
            for col in 0..m {
                let theta_rc = if r == col { alpha[r] } else { c(0.0, 0.0) };
                theta_f[r] += theta_rc * f[col];
            }
        }
        let direct: Complex64 = g.iter().zip(&theta_f).map(|(a, b)| a * b).sum();
        let want = (h + direct).norm_sqr();
        let got = effective_gain(h, &g, &xi, &f).unwrap();
        assert!((got - want).abs() <= 1e-12 * want);
    }

    #[test]
    fn length_mismatch_is_rejected() {
        let xi = RisPhase::zero_phase(2);
        let r = effective_gain(c(0.0, 0.0), &[c(1.0, 0.0)], &xi, &[c(1.0, 0.0)]);
        assert_eq!(r, Err(NomaError::LengthMismatch(2, 1)));
    }

    #[test]
    fn phase_modulus_checked() {
        assert!(RisPhase::new(vec![c(1.0, 0.0), c(0.0, 1.0)]).is_ok());
        assert!(matches!(
            RisPhase::new(vec![c(1.0, 0.0), c(0.5, 0.0)]),
            Err(NomaError::NotUnitModulus { index: 1, .. })
        ));
        let p = RisPhase::project(&[c(3.0, 4.0), c(0.0, 0.0)]);
        assert!((p.as_slice()[0] - c(0.6, 0.8)).norm() < 1e-15);
        assert_eq!(p.as_slice()[1], c(1.0, 0.0));
    }

    #[test]
    fn sinr_without_strong_power() {
        let (gi, gj) = sinr_pair(&split(0.0, 1.0, 10.0, 1.0), 3.0, 2.0, 4.0);
        assert_eq!(gi, 0.0);
        assert_eq!(gj, 10.0 * 2.0 / 4.0);
    }

    #[test]
    fn sinr_half_split() {
        // P O_j = 2 sigma^2 with sigma^2 = 1
        let (_, gj) = sinr_pair(&split(0.5, 0.5, 2.0, 0.0), 1.0, 1.0, 1.0);
        assert!((gj - 0.5).abs() < 1e-15);
    }

    #[test]
    fn sinr_ratio_invariance() {
        let base = split(0.3, 0.7, 5.0, 1.0);
        let (a, b) = sinr_pair(&base, 1e-14, 4e-15, 2e-13);
        let scaled = PowerSplit {
            p_total: 5.0 * 37.0,
            ..base
        };
        let (a2, b2) = sinr_pair(&scaled, 1e-14, 4e-15, 2e-13 * 37.0);
        assert!((a - a2).abs() < 1e-12 * a && (b - b2).abs() < 1e-12 * b);
    }

    #[test]
    fn ee_basic_values() {
        let p = split(0.5, 0.5, 1.0, 1.0);
        assert_eq!(energy_efficiency((1.0, 1.0), &p, 2e7, false).unwrap(), 1.0);
        assert_eq!(energy_efficiency((1.0, 1.0), &p, 2e7, true).unwrap(), 2e7);
        assert_eq!(energy_efficiency((0.0, 0.0), &p, 2e7, false).unwrap(), 0.0);
        let heavier = split(0.5, 0.5, 1.0, 2.0);
        assert!(energy_efficiency((1.0, 1.0), &heavier, 1.0, false).unwrap() < 1.0);
        let dead = split(0.0, 0.0, 1.0, 0.0);
        assert!(matches!(
            energy_efficiency((1.0, 1.0), &dead, 1.0, false),
            Err(NomaError::NonPositiveDenominator(_))
        ));
    }

    #[test]
    fn ee_invariant_to_common_rescaling() {
        let p = split(0.2, 0.8, 10.0, 1.0);
        let a = metrics_from_gains([3e-15, 1e-15], &p, 2e-13, 1.0, false).unwrap();
        let b = metrics_from_gains([3e-15 * 1e4, 1e-15 * 1e4], &p, 2e-13 * 1e4, 1.0, false).unwrap();
        assert!((a.ee - b.ee).abs() < 1e-12 * a.ee);
    }

    #[test]
    fn ee_unimodal_in_transmit_power() {
        let gains = [4e-15, 1.5e-15];
        let ee: Vec<f64> = (0..=60)
            .map(|k| {
                let p = 0.1 * 10f64.powf(3.0 * k as f64 / 60.0);
                let split = split(0.3, 0.7, p, 1.0);
                metrics_from_gains(gains, &split, 2e-13, 1.0, false).unwrap().ee
            })
            .collect();
        let signs: Vec<bool> = ee.windows(2).map(|w| w[1] >= w[0]).collect();
        let changes = signs.windows(2).filter(|w| w[0] != w[1]).count();
        assert!(changes <= 1);
    }

    #[test]
    fn qos_thresholds() {
        assert!(check_qos(1.0, &QosSpec::Sinr(1.0)));
        assert_eq!(QosSpec::SpectralEfficiency(1.0).min_sinr(), 1.0);
        assert!(!check_qos(0.0, &QosSpec::Sinr(0.1)));
        assert!(check_qos(0.0, &QosSpec::SpectralEfficiency(0.0)));
    }

    #[test]
    fn power_split_validation() {
        assert!(split(0.3, 0.7, 100.0, 1.0).validate(100.0).is_ok());
        assert!(split(0.6, 0.7, 100.0, 1.0).validate(100.0).is_err());
        assert!(split(0.3, 0.7, 120.0, 1.0).validate(100.0).is_err());
        assert!(split(-0.1, 0.7, 10.0, 1.0).validate(100.0).is_err());
    }

    #[test]
    fn order_inversion_recorded() {
        let m = metrics_from_gains([1.0, 2.0], &split(0.3, 0.7, 1.0, 1.0), 1.0, 1.0, false).unwrap();
        assert!(m.order_inverted);
    }
}
