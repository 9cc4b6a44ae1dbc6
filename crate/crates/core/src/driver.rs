//! Alternating optimization of power and RIS phase, plus the two reference
//! frameworks it is compared against.

use std::fmt;
use std::str::FromStr;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::beamform::{self, BeamformError, BeamformTolerances};
use crate::link::ChannelRealization;
use crate::noma::{self, LinkMetrics, NomaError, PowerSplit, QosSpec, RisPhase};
use crate::power::{self, PowerBudget, PowerError, PowerTolerances};

#[derive(Debug, Error, PartialEq)]
pub enum DriverError {
    #[error(transparent)]
    Power(#[from] PowerError),
    #[error(transparent)]
    Beamform(#[from] BeamformError),
    #[error(transparent)]
    Signal(#[from] NomaError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum FrameworkKind {
    #[serde(rename = "proposed")]
    Proposed,
    #[serde(rename = "fixed")]
    FixedPhaseBenchmark,
    #[serde(rename = "conventional")]
    ConventionalNoRis,
}

impl FrameworkKind {
    pub const ALL: [FrameworkKind; 3] = [
        FrameworkKind::Proposed,
        FrameworkKind::FixedPhaseBenchmark,
        FrameworkKind::ConventionalNoRis,
    ];

    pub fn as_str(&self) -> &'static str {
        match self {
            FrameworkKind::Proposed => "proposed",
            FrameworkKind::FixedPhaseBenchmark => "fixed",
            FrameworkKind::ConventionalNoRis => "conventional",
        }
    }
}

impl fmt::Display for FrameworkKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FrameworkKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "proposed" => Ok(FrameworkKind::Proposed),
            "fixed" | "fixed-phase" | "benchmark" => Ok(FrameworkKind::FixedPhaseBenchmark),
            "conventional" | "no-ris" => Ok(FrameworkKind::ConventionalNoRis),
            other => Err(format!("unknown framework '{other}' (proposed, fixed, conventional)")),
        }
    }
}

/// Phase used by the fixed-phase benchmark.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FixedPhase {
    /// Every reflection coefficient equal to one.
    Zero,
    /// Uniform random phases from the given seed.
    Random(u64),
}

impl FixedPhase {
    pub fn phase(&self, elements: usize) -> RisPhase {
        match *self {
            FixedPhase::Zero => RisPhase::zero_phase(elements),
            FixedPhase::Random(seed) => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let angles: Vec<f64> = (0..elements)
                    .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
                    .collect();
                RisPhase::from_angles(&angles)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriverConfig {
    pub qos: QosSpec,
    pub budget: PowerBudget,
    pub power_tol: PowerTolerances,
    pub beam_tol: BeamformTolerances,
    pub max_rounds: usize,
    /// Stop once the relative EE change of a round is at most this.
    pub ee_rel_tol: f64,
    pub bandwidth_hz: f64,
    /// Report EE in bits per joule instead of b/s/Hz/W.
    pub absolute_units: bool,
    /// Fixed RIS-only SINR target for the phase step; `None` derives it
    /// from the RIS share of each user's gain.
    pub gamma_bar_override: Option<f64>,
    /// Rotate each new phase globally to combine best with the direct links.
    pub align_global_phase: bool,
    /// Skip the phase step entirely.
    pub freeze_phase: bool,
    /// Swap user roles when the RIS makes the nominal weak user stronger.
    pub resort_users: bool,
    /// Also run the first phase step with the user roles swapped and keep
    /// the better of the two.
    pub try_both_orders: bool,
    pub fixed_phase: FixedPhase,
}

impl Default for DriverConfig {
    fn default() -> Self {
        Self {
            qos: QosSpec::SpectralEfficiency(10.0 / 20e6),
            budget: PowerBudget {
                p_max: 100.0,
                p_circuit: 1.0,
            },
            power_tol: PowerTolerances::default(),
            // the alternation only needs each phase step to improve EE
            beam_tol: BeamformTolerances {
                ccp_tol: 1e-4,
                ..BeamformTolerances::default()
            },
            max_rounds: 20,
            ee_rel_tol: 1e-3,
            bandwidth_hz: 20e6,
            absolute_units: true,
            gamma_bar_override: None,
            align_global_phase: true,
            freeze_phase: false,
            resort_users: true,
            try_both_orders: true,
            fixed_phase: FixedPhase::Zero,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub framework: FrameworkKind,
    /// EE after the initial power step and after every round.
    pub ee_trace: Vec<f64>,
    pub power: PowerSplit,
    pub xi: RisPhase,
    pub metrics: LinkMetrics,
    pub rounds: usize,
    pub converged: bool,
    pub feasible: bool,
    pub diagnostic: Option<String>,
    /// Current physical user in the strong (SIC) slot.
    pub user_order: [usize; 2],
    /// Rounds whose candidate was rejected for lowering EE.
    pub rejected_rounds: usize,
    pub power_iterations: usize,
    pub psd_iterations: usize,
}

impl RunResult {
    pub fn ee(&self) -> f64 {
        self.metrics.ee
    }
}

/// RIS share of each user's gain, `|c|^2 / (|h|^2 + |c|^2)`.
pub fn ris_share(channel: &ChannelRealization, xi: &RisPhase) -> Result<[f64; 2], NomaError> {
    let mut out = [0.0; 2];
    for (u, slot) in out.iter_mut().enumerate() {
        let lifted = noma::hadamard_lift(&channel.g_sat_ris, &channel.f_ris_gu[u])?;
        let c = noma::cascade(xi, &lifted)?.norm_sqr();
        let h = channel.h_direct[u].norm_sqr();
        *slot = if c + h > 0.0 { c / (c + h) } else { 0.0 };
    }
    Ok(out)
}

/// Swaps user roles so index 0 carries the larger effective gain.
fn swap_users(channel: &ChannelRealization) -> ChannelRealization {
    let mut c = channel.clone();
    c.h_direct.swap(0, 1);
    c.f_ris_gu.swap(0, 1);
    c.user_order.swap(0, 1);
    c
}

/// Global rotation of `xi` that maximizes the full-link sum rate at `power`.
fn align_with_direct(channel: &ChannelRealization, xi: &RisPhase, power: &PowerSplit) -> Result<RisPhase, NomaError> {
    let mut angles: Vec<f64> = (0..64).map(|k| k as f64 * std::f64::consts::TAU / 64.0).collect();
    for u in 0..2 {
        let lifted = noma::hadamard_lift(&channel.g_sat_ris, &channel.f_ris_gu[u])?;
        let c: Complex64 = noma::cascade(xi, &lifted)?;
        // xi e^{i t} turns the cascade into c e^{-i t}
        angles.push(c.arg() - channel.h_direct[u].arg());
    }
    let mut best = (f64::NEG_INFINITY, 0.0);
    for t in angles {
        let cand = xi.rotated(t);
        let gains = noma::effective_gains(channel, &cand)?;
        let (a, b) = noma::sinr_pair(power, gains[0], gains[1], channel.noise_var);
        let r = noma::rate(a) + noma::rate(b);
        if r > best.0 {
            best = (r, t);
        }
    }
    Ok(xi.rotated(best.1))
}

/// Phase step followed by the power step it enables.
struct Candidate {
    channel: ChannelRealization,
    xi: RisPhase,
    /// Link metrics and power split when the power step is feasible.
    outcome: Option<(LinkMetrics, PowerSplit)>,
    psd_iterations: usize,
    power_iterations: usize,
}

impl Candidate {
    fn ee(&self) -> f64 {
        self.outcome.as_ref().map_or(f64::NEG_INFINITY, |(m, _)| m.ee)
    }
}

fn phase_candidate(
    ch: &ChannelRealization,
    power: &PowerSplit,
    gamma_bar: f64,
    cfg: &DriverConfig,
) -> Result<Candidate, DriverError> {
    let beam = beamform::optimize_phase(ch, power, gamma_bar, &cfg.beam_tol)?;
    let mut cand = beam.xi;
    if cfg.align_global_phase {
        cand = align_with_direct(ch, &cand, power)?;
    }
    let mut cand_ch = ch.clone();
    if cfg.resort_users {
        let g = noma::effective_gains(&cand_ch, &cand)?;
        if g[1] > g[0] {
            cand_ch = swap_users(&cand_ch);
        }
    }
    let step = power::optimize_power(&cand_ch, &cand, &cfg.qos, &cfg.budget, &cfg.power_tol)?;
    let outcome = if step.feasible {
        let m = noma::evaluate_link(&cand_ch, &cand, &step.solution, cfg.bandwidth_hz, cfg.absolute_units)?;
        Some((m, step.solution))
    } else {
        None
    };
    Ok(Candidate {
        channel: cand_ch,
        xi: cand,
        outcome,
        psd_iterations: beam.psd_iterations,
        power_iterations: step.inner_iterations,
    })
}

/// Alternates the power and phase steps from the all-ones phase.
pub fn run_algorithm1(channel: &ChannelRealization, cfg: &DriverConfig) -> Result<RunResult, DriverError> {
    let m = channel.elements();
    let mut ch = channel.clone();
    let mut xi = RisPhase::zero_phase(m);
    let first = power::optimize_power(&ch, &xi, &cfg.qos, &cfg.budget, &cfg.power_tol)?;
    let mut power_iterations = first.inner_iterations;
    let mut psd_iterations = 0;
    let mut power = first.solution;
    let mut metrics = noma::evaluate_link(&ch, &xi, &power, cfg.bandwidth_hz, cfg.absolute_units)?;
    let mut result = RunResult {
        framework: FrameworkKind::Proposed,
        ee_trace: vec![metrics.ee],
        power,
        xi: xi.clone(),
        metrics,
        rounds: 0,
        converged: false,
        feasible: first.feasible,
        diagnostic: first.diagnostic.clone(),
        user_order: ch.user_order,
        rejected_rounds: 0,
        power_iterations,
        psd_iterations,
    };
    if !first.feasible {
        return Ok(result);
    }
    if cfg.freeze_phase || m == 0 {
        result.converged = true;
        return Ok(result);
    }

    let gamma_min = cfg.qos.min_sinr();
    let mut rejected = 0;
    let mut converged = false;
    let mut rounds = 0;
    for round in 1..=cfg.max_rounds {
        rounds = round;
        let gamma_bar = match cfg.gamma_bar_override {
            Some(g) => g,
            None => {
                let share = ris_share(&ch, &xi)?;
                gamma_min * share[0].min(share[1])
            }
        };
        let mut cand = phase_candidate(&ch, &power, gamma_bar, cfg)?;
        if round == 1 && cfg.try_both_orders {
            // start the phase from the other user as well; the first step
            // otherwise steers toward whoever holds most of the power
            let alt = phase_candidate(&swap_users(&ch), &power, gamma_bar, cfg)?;
            psd_iterations += alt.psd_iterations;
            power_iterations += alt.power_iterations;
            if alt.ee() > cand.ee() {
                cand = alt;
            }
        }
        psd_iterations += cand.psd_iterations;
        power_iterations += cand.power_iterations;
        let old = metrics.ee;
        let accepted = match cand.outcome {
            Some((m2, split)) if m2.ee >= old => {
                ch = cand.channel;
                xi = cand.xi;
                power = split;
                metrics = m2;
                true
            }
            _ => false,
        };
        rejected += usize::from(!accepted);
        result.ee_trace.push(metrics.ee);
        let change = (metrics.ee - old).abs() / old.abs().max(f64::MIN_POSITIVE);
        if change <= cfg.ee_rel_tol {
            converged = true;
            break;
        }
    }
    result.power = power;
    result.xi = xi;
    result.metrics = metrics;
    result.rounds = rounds;
    result.converged = converged;
    result.user_order = ch.user_order;
    result.rejected_rounds = rejected;
    result.power_iterations = power_iterations;
    result.psd_iterations = psd_iterations;
    Ok(result)
}

/// Runs one framework on a channel.
pub fn run_framework(kind: FrameworkKind, channel: &ChannelRealization, cfg: &DriverConfig) -> Result<RunResult, DriverError> {
    let (ch, xi) = match kind {
        FrameworkKind::Proposed => return run_algorithm1(channel, cfg),
        FrameworkKind::FixedPhaseBenchmark => (channel.clone(), cfg.fixed_phase.phase(channel.elements())),
        FrameworkKind::ConventionalNoRis => (channel.without_ris(), RisPhase::zero_phase(channel.elements())),
    };
    let rep = power::optimize_power(&ch, &xi, &cfg.qos, &cfg.budget, &cfg.power_tol)?;
    let metrics = noma::evaluate_link(&ch, &xi, &rep.solution, cfg.bandwidth_hz, cfg.absolute_units)?;
    Ok(RunResult {
        framework: kind,
        ee_trace: vec![metrics.ee],
        power: rep.solution,
        xi,
        metrics,
        rounds: 0,
        converged: rep.feasible,
        feasible: rep.feasible,
        diagnostic: rep.diagnostic,
        user_order: ch.user_order,
        rejected_rounds: 0,
        power_iterations: rep.inner_iterations,
        psd_iterations: 0,
    })
}
