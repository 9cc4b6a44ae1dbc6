//! NOMA power allocation for a fixed RIS phase.
//!
//! The energy-efficiency ratio is handled with a Dinkelbach outer loop. For
//! each Dinkelbach parameter the sum rate is replaced by the SCA surrogate
//! `Psi log2(gamma) + Omega`, and the resulting problem is attacked through
//! its Lagrangian: the stationarity condition in `rho_i` clears to a
//! quadratic with closed-form roots, and the four multipliers follow a
//! projected subgradient schedule. The candidate set handed to the final
//! selection always contains the QoS-binding endpoints, so boundary optima
//! are never lost to the interior stationarity heuristic.
//!
//! QoS and interference terms are expressed in SNR units (divided by the
//! noise variance), which rescales `lambda_1` and `lambda_2` by `sigma^2`
//! relative to the watt-valued form.

use std::f64::consts::LN_2;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::link::ChannelRealization;
use crate::noma::{self, NomaError, PowerSplit, QosSpec, RisPhase};

/// SINRs below this are floored before forming SCA coefficients.
pub const SINR_FLOOR: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum PowerError {
    #[error("power coefficient {0} outside [0, 1]")]
    OutOfRange(f64),
    #[error("invalid budget: {0}")]
    InvalidBudget(String),
    #[error(transparent)]
    Signal(#[from] NomaError),
}

#[derive(Debug, Error, PartialEq, Eq, Clone, Copy)]
pub enum RootError {
    /// Negative discriminant: the stationarity quadratic has no real root.
    #[error("no interior stationary point (negative discriminant)")]
    NoRealRoot,
    /// Quadratic and linear coefficients both vanish.
    #[error("stationarity condition is degenerate")]
    Degenerate,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScaCoeffs {
    pub psi: [f64; 2],
    pub omega: [f64; 2],
}

/// Tangent coefficients of `log2(1 + gamma) >= Psi log2(gamma) + Omega`.
pub fn sca_coefficients(gamma: [f64; 2]) -> ScaCoeffs {
    let mut psi = [0.0; 2];
    let mut omega = [0.0; 2];
    for k in 0..2 {
        let g = gamma[k].max(SINR_FLOOR);
        psi[k] = g / (1.0 + g);
        omega[k] = (1.0 + g).log2() - psi[k] * g.log2();
    }
    ScaCoeffs { psi, omega }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DualState {
    pub lambda: [f64; 4],
    pub step_mu: f64,
    pub iter: usize,
}

impl DualState {
    pub fn new(lambda: [f64; 4]) -> Self {
        Self {
            lambda: lambda.map(|l| l.max(0.0)),
            step_mu: 0.0,
            iter: 0,
        }
    }
}

/// Diminishing step `mu(t) = mu0 / sqrt(t)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepSchedule {
    pub mu0: f64,
}

impl StepSchedule {
    pub fn step(&self, t: usize) -> f64 {
        self.mu0 / (t.max(1) as f64).sqrt()
    }
}

/// Projected subgradient step on the dual. `residuals[k] > 0` means
/// constraint `k` is slack; each multiplier moves from its own previous value.
pub fn subgradient_update(dual: &DualState, residuals: [f64; 4], schedule: &StepSchedule) -> DualState {
    let t = dual.iter + 1;
    let mu = schedule.step(t);
    let mut lambda = dual.lambda;
    for (l, r) in lambda.iter_mut().zip(residuals) {
        *l = (*l - mu * r).max(0.0);
    }
    DualState {
        lambda,
        step_mu: mu,
        iter: t,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DinkelbachState {
    pub phi: f64,
    pub eta: f64,
    pub iter: usize,
}

impl DinkelbachState {
    pub fn new(phi: f64) -> Self {
        Self {
            phi: phi.max(0.0),
            eta: f64::INFINITY,
            iter: 0,
        }
    }
}

pub fn dinkelbach_step(rate_sum: f64, power_cost: f64, state: &DinkelbachState) -> DinkelbachState {
    DinkelbachState {
        phi: rate_sum / power_cost,
        eta: rate_sum - state.phi * power_cost,
        iter: state.iter + 1,
    }
}

pub fn complement_rho(rho_i: f64) -> Result<f64, PowerError> {
    if !(0.0..=1.0).contains(&rho_i) {
        return Err(PowerError::OutOfRange(rho_i));
    }
    Ok(1.0 - rho_i)
}

/// Everything the Lagrangian needs except the multipliers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LagrangianInstance {
    /// `P O_i / sigma^2`
    pub snr_strong: f64,
    /// `P O_j / sigma^2`
    pub snr_weak: f64,
    pub p_total: f64,
    pub p_max: f64,
    pub p_circuit: f64,
    pub gamma_min: f64,
    pub phi: f64,
    pub sca: ScaCoeffs,
}

impl LagrangianInstance {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        phi: f64,
        o_strong: f64,
        o_weak: f64,
        p_total: f64,
        p_max: f64,
        p_circuit: f64,
        noise_var: f64,
        sca: ScaCoeffs,
        gamma_min: f64,
    ) -> Self {
        Self {
            snr_strong: p_total * o_strong / noise_var,
            snr_weak: p_total * o_weak / noise_var,
            p_total,
            p_max,
            p_circuit,
            gamma_min,
            phi,
            sca,
        }
    }

    pub fn sinrs(&self, rho_i: f64, rho_j: f64) -> [f64; 2] {
        let (a, b) = (self.snr_strong, self.snr_weak);
        [a * rho_i, b * rho_j / (1.0 + b * rho_i)]
    }

    /// Constraint values in the "positive means slack" convention:
    /// strong QoS, weak QoS, power budget, coefficient sum.
    pub fn residuals(&self, rho_i: f64, rho_j: f64) -> [f64; 4] {
        let (a, b, g) = (self.snr_strong, self.snr_weak, self.gamma_min);
        [
            a * rho_i - g,
            b * rho_j - g * (1.0 + b * rho_i),
            self.p_max - self.p_total * (rho_i + rho_j),
            1.0 - (rho_i + rho_j),
        ]
    }
}

/// Surrogate Lagrangian value.
pub fn lagrangian(inst: &LagrangianInstance, dual: &DualState, rho_i: f64, rho_j: f64) -> f64 {
    let [gi, gj] = inst.sinrs(rho_i, rho_j);
    let s = &inst.sca;
    let objective = s.psi[0] * gi.log2() + s.omega[0] + s.psi[1] * gj.log2() + s.omega[1]
        - inst.phi * (inst.p_total * (rho_i + rho_j) + inst.p_circuit);
    let r = inst.residuals(rho_i, rho_j);
    objective + dual.lambda.iter().zip(r).map(|(l, r)| l * r).sum::<f64>()
}

/// Analytic `dL/d rho_i` with `rho_j` held fixed.
pub fn lagrangian_gradient(inst: &LagrangianInstance, dual: &DualState, rho_i: f64) -> f64 {
    let (a, b) = (inst.snr_strong, inst.snr_weak);
    let [l1, l2, l3, l4] = dual.lambda;
    let s = &inst.sca;
    s.psi[0] / (rho_i * LN_2) - s.psi[1] * b / ((1.0 + b * rho_i) * LN_2) - inst.phi * inst.p_total
        + l1 * a
        - l2 * inst.gamma_min * b
        - l3 * inst.p_total
        - l4
}

/// `q2 rho^2 + q1 rho + q0 = 0`, the stationarity condition multiplied
/// through by `rho (1 + b rho) ln 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StationarityQuadratic {
    pub q2: f64,
    pub q1: f64,
    pub q0: f64,
}

/// Term-by-term expansion of the cleared stationarity condition.
pub fn stationarity_quadratic(inst: &LagrangianInstance, dual: &DualState) -> StationarityQuadratic {
    let (a, b) = (inst.snr_strong, inst.snr_weak);
    let [l1, l2, l3, l4] = dual.lambda;
    let (psi_i, psi_j) = (inst.sca.psi[0], inst.sca.psi[1]);
    let p = inst.p_total;
    // Psi_i (1 + b rho)
    let (mut q2, mut q1, q0) = (0.0, psi_i * b, psi_i);
    // - Psi_j b rho
    q1 -= psi_j * b;
    // constant part of the gradient times rho (1 + b rho) ln 2
    for k in [l1 * a, -l2 * inst.gamma_min * b, -(inst.phi + l3) * p, -l4] {
        q1 += k * LN_2;
        q2 += k * b * LN_2;
    }
    StationarityQuadratic { q2, q1, q0 }
}

/// Closed-form root data `rho = (A +- sqrt(B)) / C`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RootCoefficients {
    pub a: f64,
    pub b: f64,
    pub c: f64,
}

/// Root coefficients assembled around the shared multiplier group
/// `X = -lambda_1 a + lambda_4 + P(lambda_3 + phi) + lambda_2 gamma_min b`.
pub fn root_coefficients(inst: &LagrangianInstance, dual: &DualState) -> RootCoefficients {
    let (a_snr, b_snr) = (inst.snr_strong, inst.snr_weak);
    let [l1, l2, l3, l4] = dual.lambda;
    let (psi_i, psi_j) = (inst.sca.psi[0], inst.sca.psi[1]);
    let x = -l1 * a_snr + l4 + inst.p_total * (l3 + inst.phi) + l2 * inst.gamma_min * b_snr;
    let a = x * LN_2 + b_snr * (psi_j - psi_i);
    RootCoefficients {
        a,
        b: 4.0 * b_snr * psi_i * x * LN_2 + a * a,
        c: -2.0 * b_snr * x * LN_2,
    }
}

/// Real stationary points of the surrogate Lagrangian inside `[0, 1]`,
/// ascending. Each returned root satisfies `|dL/d rho_i| <= kkt_tol (1 + |L|)`.
pub fn rho_root_candidates(
    inst: &LagrangianInstance,
    dual: &DualState,
    kkt_tol: f64,
) -> Result<Vec<f64>, RootError> {
    let RootCoefficients { a, b, c } = root_coefficients(inst, dual);
    let psi_i = inst.sca.psi[0];
    let scale = a.abs() + (inst.snr_weak * psi_i).abs() + psi_i.abs();
    let raw: Vec<f64> = if c.abs() <= 1e-12 * scale.max(f64::MIN_POSITIVE) {
        // linear case: -A rho + Psi_i = 0
        if a.abs() <= 1e-15 * scale.max(f64::MIN_POSITIVE) {
            return Err(RootError::Degenerate);
        }
        vec![psi_i / a]
    } else {
        if b < 0.0 {
            return Err(RootError::NoRealRoot);
        }
        // (A +- sqrt(B)) / C, arranged to avoid cancellation
        let sq = b.sqrt();
        let big = a + a.signum() * sq;
        if big == 0.0 {
            vec![0.0]
        } else {
            // q2 = C/2, q0 = Psi_i: product of roots is 2 Psi_i / C
            vec![big / c, 2.0 * psi_i / big]
        }
    };
    let mut roots: Vec<f64> = raw
        .into_iter()
        .filter(|r| r.is_finite() && (0.0..=1.0).contains(r))
        .filter(|&r| {
            if r <= 0.0 || r >= 1.0 {
                return true;
            }
            let g = lagrangian_gradient(inst, dual, r);
            let l = lagrangian(inst, dual, r, 1.0 - r);
            !l.is_finite() || g.abs() <= kkt_tol * (1.0 + l.abs())
        })
        .collect();
    roots.sort_by(f64::total_cmp);
    roots.dedup_by(|x, y| (*x - *y).abs() <= 1e-15);
    Ok(roots)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerBudget {
    /// Satellite power budget `P_T` in watts; the allocator transmits at it.
    pub p_max: f64,
    pub p_circuit: f64,
}

impl PowerBudget {
    pub fn validate(&self) -> Result<(), PowerError> {
        if !(self.p_max.is_finite() && self.p_max > 0.0) {
            return Err(PowerError::InvalidBudget("P_T must be positive".into()));
        }
        if !(self.p_circuit.is_finite() && self.p_circuit >= 0.0) {
            return Err(PowerError::InvalidBudget("circuit power must be >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerTolerances {
    pub dinkelbach_tol: f64,
    pub kkt_tol: f64,
    pub mu0: f64,
    pub max_outer: usize,
    pub max_inner: usize,
    pub max_sca: usize,
    /// Inner loop stops once no multiplier moves by more than this.
    pub dual_tol: f64,
    pub phi0: f64,
    pub lambda0: [f64; 4],
    pub rho0: [f64; 2],
}

impl Default for PowerTolerances {
    fn default() -> Self {
        Self {
            dinkelbach_tol: 1e-6,
            kkt_tol: 1e-6,
            mu0: 0.1,
            max_outer: 50,
            max_inner: 500,
            max_sca: 30,
            dual_tol: 1e-10,
            phi0: 0.0,
            lambda0: [0.1; 4],
            rho0: [0.2, 0.8],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PowerSolveReport {
    pub solution: PowerSplit,
    pub dual: DualState,
    /// `(phi, eta)` after every Dinkelbach step.
    pub dinkelbach_trace: Vec<(f64, f64)>,
    /// Largest `|dL/d rho_i| / (1 + |L|)` over `interior_roots`.
    pub kkt_residual: f64,
    pub feasible: bool,
    pub diagnostic: Option<String>,
    /// Lagrangian data at the last inner solve.
    pub stationarity: LagrangianInstance,
    /// Roots at the final multipliers that lie in `(0, 1)` and meet both
    /// QoS constraints, i.e. the roots the selection step may return.
    pub interior_roots: Vec<f64>,
    /// Total dual subgradient iterations.
    pub inner_iterations: usize,
    pub sum_rate: f64,
}

/// Interval of `rho_i` on the line `rho_j = 1 - rho_i` that meets both QoS
/// constraints, or `None`.
pub fn feasible_interval(snr_strong: f64, snr_weak: f64, gamma_min: f64) -> Option<(f64, f64)> {
    if gamma_min <= 0.0 {
        return Some((0.0, 1.0));
    }
    if snr_strong <= 0.0 || snr_weak <= 0.0 {
        return None;
    }
    let lo = (gamma_min / snr_strong).max(0.0);
    let hi = ((snr_weak - gamma_min) / (snr_weak * (1.0 + gamma_min))).min(1.0);
    if lo <= hi {
        Some((lo, hi))
    } else if lo - hi <= 1e-12 {
        Some((lo, lo))
    } else {
        None
    }
}

fn true_sum_rate(snr_strong: f64, snr_weak: f64, rho_i: f64) -> f64 {
    let rho_j = 1.0 - rho_i;
    noma::rate(snr_strong * rho_i) + noma::rate(snr_weak * rho_j / (1.0 + snr_weak * rho_i))
}

/// Argmax of `score`, first (smallest) candidate wins ties.
fn best_candidate(cands: &mut Vec<f64>, score: impl Fn(f64) -> f64) -> f64 {
    cands.sort_by(f64::total_cmp);
    cands.dedup();
    let mut best = cands[0];
    let mut best_val = score(best);
    for &c in cands.iter().skip(1) {
        let v = score(c);
        if v > best_val + 1e-12 * best_val.abs().max(1e-300) {
            best = c;
            best_val = v;
        }
    }
    best
}

/// Step-1 allocation from precomputed effective gains `[O_i, O_j]`.
pub fn optimize_power_for_gains(
    gains: [f64; 2],
    noise_var: f64,
    qos: &QosSpec,
    budget: &PowerBudget,
    tol: &PowerTolerances,
) -> Result<PowerSolveReport, PowerError> {
    budget.validate()?;
    let p = budget.p_max;
    let cost = p + budget.p_circuit;
    let gamma_min = qos.min_sinr();
    let a = p * gains[0] / noise_var;
    let b = p * gains[1] / noise_var;
    let schedule = StepSchedule { mu0: tol.mu0 };
    let split = |rho_i: f64| PowerSplit {
        rho_strong: rho_i,
        rho_weak: 1.0 - rho_i,
        p_total: p,
        p_circuit: budget.p_circuit,
    };
    let mut dual = DualState::new(tol.lambda0);
    let sca0 = sca_coefficients([0.0, 0.0]);
    let inst_for = |phi: f64, sca: ScaCoeffs| {
        LagrangianInstance::new(phi, gains[0], gains[1], p, p, budget.p_circuit, noise_var, sca, gamma_min)
    };

    let Some((lo, hi)) = feasible_interval(a, b, gamma_min) else {
        let rho = tol.rho0[0].clamp(0.0, 1.0);
        return Ok(PowerSolveReport {
            solution: split(rho),
            dual,
            dinkelbach_trace: Vec::new(),
            kkt_residual: f64::NAN,
            feasible: false,
            diagnostic: Some(format!(
                "QoS gamma_min = {gamma_min:.4} unreachable: strong SNR {a:.4}, weak SNR {b:.4}"
            )),
            stationarity: inst_for(tol.phi0, sca0),
            interior_roots: Vec::new(),
            inner_iterations: 0,
            sum_rate: true_sum_rate(a, b, rho),
        });
    };

    let mut rho = tol.rho0[0].clamp(lo, hi);
    let mut state = DinkelbachState::new(tol.phi0);
    let mut trace = Vec::new();
    let mut inst = inst_for(state.phi, sca0);
    let mut inner_iterations = 0;

    for _ in 0..tol.max_outer {
        let phi = state.phi;
        let dinkelbach_obj = |r: f64| true_sum_rate(a, b, r) - phi * cost;
        for _ in 0..tol.max_sca {
            let sca = sca_coefficients(inst_for(phi, sca0).sinrs(rho, 1.0 - rho));
            inst = inst_for(phi, sca);
            for _ in 0..tol.max_inner {
                let mut cands = vec![lo, hi];
                if let Ok(roots) = rho_root_candidates(&inst, &dual, tol.kkt_tol) {
                    cands.extend(roots.into_iter().filter(|r| (lo..=hi).contains(r)));
                }
                let rho_t = best_candidate(&mut cands, |r| {
                    let v = lagrangian(&inst, &dual, r, 1.0 - r);
                    if v.is_nan() {
                        f64::NEG_INFINITY
                    } else {
                        v
                    }
                });
                let next = subgradient_update(&dual, inst.residuals(rho_t, 1.0 - rho_t), &schedule);
                inner_iterations += 1;
                let moved = next
                    .lambda
                    .iter()
                    .zip(dual.lambda)
                    .map(|(x, y)| (x - y).abs())
                    .fold(0.0, f64::max);
                dual = next;
                if moved <= tol.dual_tol {
                    break;
                }
            }
            let mut cands = vec![lo, hi, rho];
            if let Ok(roots) = rho_root_candidates(&inst, &dual, tol.kkt_tol) {
                cands.extend(roots.into_iter().filter(|r| (lo..=hi).contains(r)));
            }
            let next = best_candidate(&mut cands, dinkelbach_obj);
            let done = (next - rho).abs() <= 1e-12;
            rho = next;
            if done {
                break;
            }
        }
        state = dinkelbach_step(true_sum_rate(a, b, rho), cost, &state);
        trace.push((state.phi, state.eta));
        if state.eta.abs() <= tol.dinkelbach_tol {
            break;
        }
    }

    let interior_roots: Vec<f64> = rho_root_candidates(&inst, &dual, tol.kkt_tol)
        .unwrap_or_default()
        .into_iter()
        .filter(|&r| r > 0.0 && r < 1.0 && (lo..=hi).contains(&r))
        .collect();
    let kkt_residual = interior_roots
        .iter()
        .map(|&r| {
            lagrangian_gradient(&inst, &dual, r).abs()
                / (1.0 + lagrangian(&inst, &dual, r, 1.0 - r).abs())
        })
        .fold(0.0, f64::max);

    let solution = split(rho);
    let (gi, gj) = noma::sinr_pair(&solution, gains[0], gains[1], noise_var);
    let feasible = noma::check_qos(gi, qos) && noma::check_qos(gj, qos) && solution.validate(p).is_ok();
    Ok(PowerSolveReport {
        solution,
        dual,
        dinkelbach_trace: trace,
        kkt_residual,
        feasible,
        diagnostic: (!feasible).then(|| "selected split violates a constraint".to_string()),
        stationarity: inst,
        interior_roots,
        inner_iterations,
        sum_rate: true_sum_rate(a, b, rho),
    })
}

/// Step-1 allocation for a channel and RIS phase.
pub fn optimize_power(
    channel: &ChannelRealization,
    xi: &RisPhase,
    qos: &QosSpec,
    budget: &PowerBudget,
    tol: &PowerTolerances,
) -> Result<PowerSolveReport, PowerError> {
    let gains = noma::effective_gains(channel, xi)?;
    optimize_power_for_gains(gains, channel.noise_var, qos, budget, tol)
}
