//! Brute-force references for the solvers. Everything here evaluates the
//! signal model from scratch and searches exhaustively; nothing calls into
//! the power, PSD or beamforming code.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::link::ChannelRealization;
use crate::noma::{PowerSplit, QosSpec, RisPhase};
use crate::power::{DualState, LagrangianInstance};

#[derive(Debug, Clone, PartialEq)]
pub struct OracleReport {
    /// Best value on the grid; `-inf` when no grid point is feasible.
    pub oracle_value: f64,
    /// Filled in by [`OracleReport::judge`].
    pub solver_value: f64,
    pub ratio: f64,
    pub pass: bool,
    pub feasible: bool,
    /// Coordinates of the best grid point.
    pub argmax: Vec<f64>,
    pub grid_spec: String,
}

impl OracleReport {
    fn new(oracle_value: f64, argmax: Vec<f64>, grid_spec: String) -> Self {
        Self {
            feasible: oracle_value.is_finite(),
            oracle_value,
            solver_value: f64::NAN,
            ratio: f64::NAN,
            pass: false,
            argmax,
            grid_spec,
        }
    }

    /// Records a solver value; passes when `solver >= min_ratio * oracle`.
    pub fn judge(mut self, solver_value: f64, min_ratio: f64) -> Self {
        self.solver_value = solver_value;
        self.ratio = if self.oracle_value > 0.0 {
            solver_value / self.oracle_value
        } else {
            f64::NAN
        };
        self.pass = self.feasible
            && if self.oracle_value > 0.0 {
                self.ratio >= min_ratio
            } else {
                solver_value >= self.oracle_value
            };
        self
    }
}

fn cascade_gain(h: Complex64, g: &[Complex64], f: &[Complex64], xi: &[Complex64]) -> f64 {
    let mut acc = h;
    for m in 0..g.len() {
        acc += xi[m].conj() * g[m] * f[m];
    }
    acc.norm_sqr()
}

fn log2_1p(x: f64) -> f64 {
    (1.0 + x).log2()
}

/// EE over `rho_i` in `[0, 1]` on `grid_points + 1` evenly spaced points with
/// `rho_j = 1 - rho_i`, keeping QoS-feasible points. Normalized units
/// (b/s/Hz/W). `p_total` is the transmit power, `p_circuit` the fixed draw.
pub fn oracle_power_grid(
    channel: &ChannelRealization,
    xi: &RisPhase,
    p_total: f64,
    p_circuit: f64,
    qos: &QosSpec,
    grid_points: usize,
) -> OracleReport {
    let o = [
        cascade_gain(channel.h_direct[0], &channel.g_sat_ris, &channel.f_ris_gu[0], xi.as_slice()),
        cascade_gain(channel.h_direct[1], &channel.g_sat_ris, &channel.f_ris_gu[1], xi.as_slice()),
    ];
    oracle_power_grid_gains(o, channel.noise_var, p_total, p_circuit, qos, grid_points)
}

/// [`oracle_power_grid`] from precomputed effective gains.
pub fn oracle_power_grid_gains(
    gains: [f64; 2],
    noise_var: f64,
    p_total: f64,
    p_circuit: f64,
    qos: &QosSpec,
    grid_points: usize,
) -> OracleReport {
    let gamma = match *qos {
        QosSpec::Sinr(g) => g.max(0.0),
        QosSpec::SpectralEfficiency(r) => (2f64.powf(r) - 1.0).max(0.0),
    };
    let n = grid_points.max(1);
    let mut best = (f64::NEG_INFINITY, f64::NAN);
    for k in 0..=n {
        let ri = k as f64 / n as f64;
        let rj = 1.0 - ri;
        let si = p_total * ri * gains[0] / noise_var;
        let sj = p_total * rj * gains[1] / (noise_var + p_total * ri * gains[1]);
        // same slack as the model's QoS check
        if si < gamma - 1e-9 || sj < gamma - 1e-9 {
            continue;
        }
        let ee = (log2_1p(si) + log2_1p(sj)) / (p_total + p_circuit);
        if ee > best.0 {
            best = (ee, ri);
        }
    }
    OracleReport::new(best.0, vec![best.1], format!("rho_i grid, {} points", n + 1))
}

/// Exhaustive search over phases `2 pi k / levels` per element, maximizing
/// the RIS-only sum rate at `power`. With `gamma_bar` set, only phases where
/// both users reach it through the RIS alone are kept.
pub fn oracle_phase_grid(
    channel: &ChannelRealization,
    power: &PowerSplit,
    levels: usize,
    gamma_bar: Option<f64>,
) -> Result<OracleReport, String> {
    let m = channel.elements();
    if m > 4 {
        return Err(format!("phase grid limited to 4 elements, got {m}"));
    }
    let levels = levels.max(1);
    let total = (levels as u64).checked_pow(m as u32).filter(|t| *t <= 1_000_000);
    let Some(total) = total else {
        return Err(format!("{levels}^{m} grid points exceed 1e6"));
    };
    let zero = Complex64::new(0.0, 0.0);
    let (g, fi, fj) = (&channel.g_sat_ris, &channel.f_ris_gu[0], &channel.f_ris_gu[1]);
    let p = power.p_total;
    let sigma2 = channel.noise_var;
    let unit: Vec<Complex64> = (0..levels)
        .map(|k| Complex64::from_polar(1.0, std::f64::consts::TAU * k as f64 / levels as f64))
        .collect();
    let eval = |idx: u64| -> f64 {
        let mut xi = [Complex64::new(1.0, 0.0); 4];
        let mut r = idx;
        for slot in xi.iter_mut().take(m) {
            *slot = unit[(r % levels as u64) as usize];
            r /= levels as u64;
        }
        let ci = cascade_gain(zero, g, fi, &xi[..m]);
        let cj = cascade_gain(zero, g, fj, &xi[..m]);
        let si = p * power.rho_strong * ci / sigma2;
        let sj = p * power.rho_weak * cj / (sigma2 + p * power.rho_strong * cj);
        if let Some(gb) = gamma_bar {
            if si < gb - 1e-9 || sj < gb - 1e-9 {
                return f64::NEG_INFINITY;
            }
        }
        log2_1p(si) + log2_1p(sj)
    };
    // max-reduction with lowest-index tie break keeps the result independent
    // of how rayon splits the range
    let (value, index) = (0..total)
        .into_par_iter()
        .map(|i| (eval(i), i))
        .reduce(
            || (f64::NEG_INFINITY, u64::MAX),
            |a, b| {
                if b.0 > a.0 || (b.0 == a.0 && b.1 < a.1) {
                    b
                } else {
                    a
                }
            },
        );
    let mut angles = Vec::with_capacity(m);
    let mut r = index;
    for _ in 0..m {
        angles.push(std::f64::consts::TAU * (r % levels as u64) as f64 / levels as f64);
        r /= levels as u64;
    }
    Ok(OracleReport::new(
        value,
        angles,
        format!("{levels} phase levels per element, {m} elements"),
    ))
}

/// Finite-difference estimate of `dL/d rho_i`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GradientEstimate {
    pub gradient: f64,
    /// Lagrangian value at `rho_i`.
    pub lagrangian: f64,
    /// A one-sided difference replaced the central one near a boundary.
    pub one_sided: bool,
}

fn lagrangian_value(inst: &LagrangianInstance, dual: &DualState, ri: f64, rj: f64) -> f64 {
    let a = inst.snr_strong;
    let b = inst.snr_weak;
    let g = inst.gamma_min;
    let gi = a * ri;
    let gj = b * rj / (1.0 + b * ri);
    let [l1, l2, l3, l4] = dual.lambda;
    inst.sca.psi[0] * gi.log2() + inst.sca.omega[0] + inst.sca.psi[1] * gj.log2() + inst.sca.omega[1]
        - inst.phi * (inst.p_total * (ri + rj) + inst.p_circuit)
        + l1 * (a * ri - g)
        + l2 * (b * rj - g * (1.0 + b * ri))
        + l3 * (inst.p_max - inst.p_total * (ri + rj))
        + l4 * (1.0 - ri - rj)
}

/// Richardson-extrapolated central difference of the surrogate Lagrangian in
/// `rho_i`, holding `rho_j` at `1 - rho_i`, with base step 1e-6.
pub fn oracle_lagrangian_gradient(rho_i: f64, dual: &DualState, inst: &LagrangianInstance) -> GradientEstimate {
    let rho_j = 1.0 - rho_i;
    let f = |x: f64| lagrangian_value(inst, dual, x, rho_j);
    let h = 1e-6;
    let central = |h: f64| (f(rho_i + h) - f(rho_i - h)) / (2.0 * h);
    let (gradient, one_sided) = if rho_i - h > 0.0 && rho_i + h < 1.0 {
        ((4.0 * central(h / 2.0) - central(h)) / 3.0, false)
    } else if rho_i - h <= 0.0 {
        // second-order forward difference
        ((-3.0 * f(rho_i) + 4.0 * f(rho_i + h) - f(rho_i + 2.0 * h)) / (2.0 * h), true)
    } else {
        ((3.0 * f(rho_i) - 4.0 * f(rho_i - h) + f(rho_i - 2.0 * h)) / (2.0 * h), true)
    };
    GradientEstimate {
        gradient,
        lagrangian: f(rho_i),
        one_sided,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::power::sca_coefficients;

    fn toy_channel(m: usize) -> ChannelRealization {
        ChannelRealization {
            h_direct: [Complex64::new(0.0, 0.0); 2],
            g_sat_ris: (0..m).map(|k| Complex64::from_polar(1.0, 0.3 * k as f64)).collect(),
            f_ris_gu: [
                (0..m).map(|k| Complex64::from_polar(0.8, -0.1 * k as f64)).collect(),
                (0..m).map(|k| Complex64::from_polar(0.4, 0.9 * k as f64)).collect(),
            ],
            noise_var: 0.5,
            user_order: [0, 1],
        }
    }

    #[test]
    fn infeasible_power_grid() {
        let ch = toy_channel(2);
        let r = oracle_power_grid(&ch, &RisPhase::zero_phase(2), 1.0, 1.0, &QosSpec::Sinr(1e9), 1000);
        assert!(!r.feasible);
        assert!(!r.judge(1.0, 0.999).pass);
    }

    #[test]
    fn judge_ratio() {
        let r = OracleReport::new(2.0, vec![0.5], String::new()).judge(1.999, 0.999);
        assert!(r.pass);
        assert!((r.ratio - 0.9995).abs() < 1e-12);
    }

    #[test]
    fn single_element_phase_invariant() {
        let ch = toy_channel(1);
        let pw = PowerSplit {
            rho_strong: 0.3,
            rho_weak: 0.7,
            p_total: 2.0,
            p_circuit: 1.0,
        };
        let a = oracle_phase_grid(&ch, &pw, 16, None).unwrap();
        let b = oracle_phase_grid(&ch, &pw, 1, None).unwrap();
        assert!((a.oracle_value - b.oracle_value).abs() < 1e-12);
    }

    #[test]
    fn phase_grid_limits() {
        let ch = toy_channel(5);
        let pw = PowerSplit {
            rho_strong: 0.3,
            rho_weak: 0.7,
            p_total: 2.0,
            p_circuit: 1.0,
        };
        assert!(oracle_phase_grid(&ch, &pw, 2, None).is_err());
        assert!(oracle_phase_grid(&toy_channel(4), &pw, 64, None).is_err());
    }

    #[test]
    fn linear_terms_have_expected_slope() {
        let inst = LagrangianInstance {
            snr_strong: 1.0,
            snr_weak: 1.0,
            p_total: 1.0,
            p_max: 1.0,
            p_circuit: 0.0,
            gamma_min: 0.0,
            phi: 0.0,
            sca: crate::power::ScaCoeffs {
                psi: [0.0, 0.0],
                omega: [0.0, 0.0],
            },
        };
        let g = oracle_lagrangian_gradient(0.4, &DualState::new([0.0; 4]), &inst);
        assert!(g.gradient.abs() < 1e-10);
        let g = oracle_lagrangian_gradient(0.4, &DualState::new([0.0, 0.0, 0.0, 2.0]), &inst);
        assert!((g.gradient + 2.0).abs() < 1e-8);
        let edge = oracle_lagrangian_gradient(0.0, &DualState::new([0.0; 4]), &inst);
        assert!(edge.one_sided);
    }

    #[test]
    fn gradient_matches_analytic_form() {
        let inst = LagrangianInstance {
            snr_strong: 20.0,
            snr_weak: 5.0,
            p_total: 10.0,
            p_max: 10.0,
            p_circuit: 1.0,
            gamma_min: 0.3,
            phi: 0.05,
            sca: sca_coefficients([3.0, 0.8]),
        };
        let dual = DualState::new([0.01, 0.02, 0.001, 0.05]);
        for r in [0.1, 0.35, 0.8] {
            let fd = oracle_lagrangian_gradient(r, &dual, &inst).gradient;
            let an = crate::power::lagrangian_gradient(&inst, &dual, r);
            assert!((fd - an).abs() < 1e-7 * (1.0 + an.abs()), "{fd} vs {an}");
        }
    }
}
