//! RIS phase optimization for a fixed power split.
//!
//! The phase vector is lifted to `X = xi xi^H`, the rank-one constraint is
//! dropped, and the sum rate is written as a difference of concave log terms.
//! The subtracted term is linearized round by round (convex-concave
//! procedure); each round is a unit-diagonal PSD problem. A unit-modulus
//! vector is recovered from the relaxed solution by Gaussian randomization.
//!
//! Only the cascaded RIS paths enter here; the direct links are ignored.

use std::f64::consts::LN_2;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::link::ChannelRealization;
use crate::noma::{self, NomaError, PowerSplit, RisPhase, QOS_SLACK};
use crate::psd::{
    self, CMatrix, HermitianMatrix, LogTerm, PsdError, PsdTolerances, Sense, SolveStatus,
    TraceConstraint, TraceOperator, TraceProblem,
};

#[derive(Debug, Error, PartialEq)]
pub enum BeamformError {
    #[error("the RIS has no elements")]
    NoElements,
    #[error(transparent)]
    Signal(#[from] NomaError),
    #[error(transparent)]
    Solver(#[from] PsdError),
}

/// Cascade vectors and the rank-one matrices built from them.
#[derive(Debug, Clone, PartialEq)]
pub struct LiftedChannels {
    /// `g o f` for the strong and weak user.
    pub h_hat: [Vec<Complex64>; 2],
    /// `P rho_i h_i h_i^H`
    pub g_strong: HermitianMatrix,
    /// `P rho_j h_j h_j^H`
    pub g_weak: HermitianMatrix,
    /// `P rho_i h_j h_j^H`, the interference seen by the weak user.
    pub g_bar_weak: HermitianMatrix,
    pub power: PowerSplit,
}

pub fn build_lifted(channel: &ChannelRealization, power: &PowerSplit) -> Result<LiftedChannels, BeamformError> {
    let hi = noma::hadamard_lift(&channel.g_sat_ris, &channel.f_ris_gu[0])?;
    let hj = noma::hadamard_lift(&channel.g_sat_ris, &channel.f_ris_gu[1])?;
    let p = power.p_total;
    Ok(LiftedChannels {
        g_strong: HermitianMatrix::from_outer(&hi, p * power.rho_strong),
        g_weak: HermitianMatrix::from_outer(&hj, p * power.rho_weak),
        g_bar_weak: HermitianMatrix::from_outer(&hj, p * power.rho_strong),
        h_hat: [hi, hj],
        power: *power,
    })
}

/// Affine function `X -> Tr(X gradient) + constant`.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineBound {
    pub gradient: HermitianMatrix,
    pub constant: f64,
}

impl AffineBound {
    pub fn eval(&self, x: &HermitianMatrix) -> f64 {
        x.trace_with(&self.gradient) + self.constant
    }
}

/// Tangent of `log2(Tr(X G) + noise_var)` at `x_k`. Overestimates the log
/// everywhere since the log is concave.
pub fn dc_linearize(x_k: &HermitianMatrix, g_bar: &HermitianMatrix, noise_var: f64) -> AffineBound {
    let arg = x_k.trace_with(g_bar) + noise_var;
    let coef = 1.0 / (arg * LN_2);
    let gradient = HermitianMatrix::new(g_bar.as_matrix() * Complex64::new(coef, 0.0))
        .expect("scaled Hermitian stays Hermitian");
    AffineBound {
        constant: arg.log2() - x_k.trace_with(&gradient),
        gradient,
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamformTolerances {
    pub ccp_tol: f64,
    pub ccp_max_rounds: usize,
    pub n_randomizations: usize,
    pub seed: u64,
    pub max_restarts: usize,
    pub psd: PsdTolerances,
}

impl Default for BeamformTolerances {
    fn default() -> Self {
        Self {
            ccp_tol: 1e-6,
            ccp_max_rounds: 30,
            n_randomizations: 50,
            seed: 7,
            max_restarts: 3,
            psd: PsdTolerances {
                gap_tol: 1e-7,
                ..PsdTolerances::default()
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BeamformReport {
    pub xi_matrix: HermitianMatrix,
    pub xi: RisPhase,
    /// RIS-only sum rate at the relaxed solution, b/s/Hz.
    pub relaxation_objective: f64,
    /// RIS-only sum rate at the extracted phase, b/s/Hz.
    pub extracted_objective: f64,
    pub ccp_trace: Vec<f64>,
    /// Relaxation feasible and the extracted phase meets the threshold.
    pub feasible: bool,
    pub relaxation_feasible: bool,
    pub last_status: Option<SolveStatus>,
    pub psd_iterations: usize,
    pub restarts: usize,
}

/// Sum-rate model in noise-normalized units.
struct RateModel<'a> {
    hi: &'a [Complex64],
    hj: &'a [Complex64],
    /// `P rho_i / sigma^2`
    s_strong: f64,
    /// `P rho_j / sigma^2`
    s_weak: f64,
}

impl<'a> RateModel<'a> {
    fn new(lifted: &'a LiftedChannels, noise_var: f64) -> Self {
        let p = lifted.power.p_total;
        Self {
            hi: &lifted.h_hat[0],
            hj: &lifted.h_hat[1],
            s_strong: p * lifted.power.rho_strong / noise_var,
            s_weak: p * lifted.power.rho_weak / noise_var,
        }
    }

    fn quad(x: &HermitianMatrix, h: &[Complex64]) -> f64 {
        x.quad_form(h)
    }

    fn sinrs(&self, qi: f64, qj: f64) -> (f64, f64) {
        (self.s_strong * qi, self.s_weak * qj / (1.0 + self.s_strong * qj))
    }

    fn sum_rate(&self, qi: f64, qj: f64) -> f64 {
        let (a, b) = self.sinrs(qi, qj);
        noma::rate(a) + noma::rate(b)
    }

    fn relaxed_rate(&self, x: &HermitianMatrix) -> f64 {
        self.sum_rate(Self::quad(x, self.hi), Self::quad(x, self.hj))
    }

    fn phase_rate(&self, xi: &RisPhase) -> (f64, (f64, f64)) {
        let ci = noma::cascade(xi, self.hi).map(|c| c.norm_sqr()).unwrap_or(0.0);
        let cj = noma::cascade(xi, self.hj).map(|c| c.norm_sqr()).unwrap_or(0.0);
        (self.sum_rate(ci, cj), self.sinrs(ci, cj))
    }

    /// CCP subproblem with the interference log linearized at `x_k`.
    fn subproblem(&self, x_k: &HermitianMatrix, gamma_bar: f64) -> TraceProblem {
        let m = self.hi.len();
        let qj = Self::quad(x_k, self.hj);
        let slope = self.s_strong / ((1.0 + self.s_strong * qj) * LN_2);
        let mut p = TraceProblem::new(m);
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(self.hi, self.s_strong),
            offset: 1.0,
        });
        p.log_terms.push(LogTerm {
            weight: 1.0,
            op: TraceOperator::rank_one(self.hj, self.s_strong + self.s_weak),
            offset: 1.0,
        });
        p.linear = Some(TraceOperator::rank_one(self.hj, -slope));
        if gamma_bar > 0.0 {
            p.constraints.push(TraceConstraint {
                op: TraceOperator::rank_one(self.hi, self.s_strong),
                bound: gamma_bar,
                sense: Sense::AtLeast,
            });
            p.constraints.push(TraceConstraint {
                op: TraceOperator::rank_one(self.hj, self.s_weak - gamma_bar * self.s_strong),
                bound: gamma_bar,
                sense: Sense::AtLeast,
            });
        }
        p
    }
}

/// Result of rank-one recovery.
#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub xi: RisPhase,
    pub sum_rate: f64,
    pub meets_threshold: bool,
}

/// Recovers a unit-modulus phase from a relaxed solution: the projected
/// principal eigenvector plus `randomizations` projected Gaussian draws with
/// covariance `x`. Picks the best RIS-only sum rate among candidates meeting
/// `gamma_bar`, or the best overall when none do.
pub fn extract_rank_one(
    x: &HermitianMatrix,
    lifted: &LiftedChannels,
    noise_var: f64,
    gamma_bar: f64,
    randomizations: usize,
    seed: u64,
) -> Extraction {
    let model = RateModel::new(lifted, noise_var);
    let (values, vectors) = x.eigen();
    let m = x.dim();
    let principal = vectors.column(m - 1);
    let mut candidates = vec![RisPhase::project(principal.as_slice())];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let roots: Vec<f64> = values.iter().map(|l| l.max(0.0).sqrt()).collect();
    for _ in 0..randomizations {
        let w: Vec<Complex64> = (0..m)
            .map(|k| {
                let re: f64 = StandardNormal.sample(&mut rng);
                let im: f64 = StandardNormal.sample(&mut rng);
                Complex64::new(re, im) * (roots[k] * std::f64::consts::FRAC_1_SQRT_2)
            })
            .collect();
        let z = &vectors * CMatrix::from_column_slice(m, 1, &w);
        candidates.push(RisPhase::project(z.as_slice()));
    }
    let meets = |s: (f64, f64)| s.0 >= gamma_bar - QOS_SLACK && s.1 >= gamma_bar - QOS_SLACK;
    let scored: Vec<(f64, bool)> = candidates
        .iter()
        .map(|c| {
            let (r, s) = model.phase_rate(c);
            (r, meets(s))
        })
        .collect();
    let any_meets = scored.iter().any(|s| s.1);
    let mut best = None::<usize>;
    for (k, &(r, ok)) in scored.iter().enumerate() {
        if any_meets && !ok {
            continue;
        }
        if best.is_none_or(|b| r > scored[b].0) {
            best = Some(k);
        }
    }
    let b = best.unwrap_or(0);
    Extraction {
        xi: candidates.swap_remove(b),
        sum_rate: scored[b].0,
        meets_threshold: scored[b].1,
    }
}

/// RIS-only sum rate of a unit-modulus phase at the given power split.
pub fn ris_sum_rate(lifted: &LiftedChannels, noise_var: f64, xi: &RisPhase) -> f64 {
    RateModel::new(lifted, noise_var).phase_rate(xi).0
}

/// RIS-only sum rate of a relaxed matrix.
pub fn relaxed_sum_rate(lifted: &LiftedChannels, noise_var: f64, x: &HermitianMatrix) -> f64 {
    RateModel::new(lifted, noise_var).relaxed_rate(x)
}

struct CcpOutcome {
    x: HermitianMatrix,
    factor: CMatrix,
    objective: f64,
    trace: Vec<f64>,
    feasible: bool,
    status: Option<SolveStatus>,
    iterations: usize,
}

fn run_ccp(
    model: &RateModel,
    gamma_bar: f64,
    start: HermitianMatrix,
    start_factor: Option<CMatrix>,
    tol: &BeamformTolerances,
) -> Result<CcpOutcome, BeamformError> {
    let mut x = start;
    let mut factor = start_factor;
    let mut trace: Vec<f64> = Vec::new();
    let mut status = None;
    let mut iterations = 0;
    for _ in 0..tol.ccp_max_rounds {
        let problem = model.subproblem(&x, gamma_bar);
        let report = psd::solve_trace_problem_from(&problem, &tol.psd, factor.as_ref())?;
        iterations += report.iterations;
        status = Some(report.status);
        if report.status == SolveStatus::Infeasible {
            if trace.is_empty() {
                return Ok(CcpOutcome {
                    objective: model.relaxed_rate(&report.solution),
                    x: report.solution,
                    factor: report.factor,
                    trace,
                    feasible: false,
                    status,
                    iterations,
                });
            }
            break;
        }
        let value = model.relaxed_rate(&report.solution);
        let Some(&prev) = trace.last() else {
            trace.push(value);
            x = report.solution;
            factor = Some(report.factor);
            continue;
        };
        if value < prev {
            // solver noise; keep the previous iterate
            break;
        }
        trace.push(value);
        x = report.solution;
        factor = Some(report.factor);
        if value - prev <= tol.ccp_tol * prev.abs().max(1e-12) {
            break;
        }
    }
    let objective = *trace.last().unwrap_or(&f64::NEG_INFINITY);
    Ok(CcpOutcome {
        x,
        factor: factor.unwrap_or_else(|| CMatrix::zeros(0, 0)),
        objective,
        trace,
        feasible: true,
        status,
        iterations,
    })
}

/// Step-2 solve. `gamma_bar` is the linear SINR each user must reach through
/// the RIS paths alone (0 disables the constraints).
pub fn optimize_phase(
    channel: &ChannelRealization,
    power: &PowerSplit,
    gamma_bar: f64,
    tol: &BeamformTolerances,
) -> Result<BeamformReport, BeamformError> {
    let m = channel.elements();
    if m == 0 {
        return Err(BeamformError::NoElements);
    }
    let lifted = build_lifted(channel, power)?;
    let model = RateModel::new(&lifted, channel.noise_var);
    let mut ccp = run_ccp(&model, gamma_bar, HermitianMatrix::identity(m), None, tol)?;
    let mut trace = ccp.trace.clone();
    let mut iterations = ccp.iterations;
    if !ccp.feasible {
        let ex = extract_rank_one(&ccp.x, &lifted, channel.noise_var, gamma_bar, tol.n_randomizations, tol.seed);
        return Ok(BeamformReport {
            xi_matrix: ccp.x,
            xi: ex.xi,
            relaxation_objective: ccp.objective,
            extracted_objective: ex.sum_rate,
            ccp_trace: trace,
            feasible: false,
            relaxation_feasible: false,
            last_status: ccp.status,
            psd_iterations: iterations,
            restarts: 0,
        });
    }
    let mut ex = extract_rank_one(&ccp.x, &lifted, channel.noise_var, gamma_bar, tol.n_randomizations, tol.seed);
    let mut restarts = 0;
    while ex.sum_rate > ccp.objective + 1e-9 && restarts < tol.max_restarts {
        // the relaxation stopped short of the extracted point: resume from it
        restarts += 1;
        let start = HermitianMatrix::from_outer(ex.xi.as_slice(), 1.0);
        let mut f = ccp.factor.clone();
        if f.nrows() == m {
            f.set_column(0, &CMatrix::from_column_slice(m, 1, ex.xi.as_slice()).column(0));
        }
        let next = run_ccp(&model, gamma_bar, start, Some(f), tol)?;
        iterations += next.iterations;
        if next.feasible && next.objective > ccp.objective {
            for v in next.trace.iter().copied() {
                if trace.last().is_none_or(|last| v >= *last) {
                    trace.push(v);
                }
            }
            ccp = next;
            let again = extract_rank_one(&ccp.x, &lifted, channel.noise_var, gamma_bar, tol.n_randomizations, tol.seed);
            if again.sum_rate >= ex.sum_rate {
                ex = again;
            }
        } else {
            break;
        }
    }
    Ok(BeamformReport {
        xi_matrix: ccp.x,
        xi: ex.xi,
        relaxation_objective: ccp.objective,
        extracted_objective: ex.sum_rate,
        ccp_trace: trace,
        feasible: ex.meets_threshold,
        relaxation_feasible: true,
        last_status: ccp.status,
        psd_iterations: iterations,
        restarts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn random_channel(m: usize, rng: &mut ChaCha8Rng) -> ChannelRealization {
        let mut c = || Complex64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
        ChannelRealization {
            h_direct: [c(), c()],
            g_sat_ris: (0..m).map(|_| c()).collect(),
            f_ris_gu: [(0..m).map(|_| c()).collect(), (0..m).map(|_| c() * 0.5).collect()],
            noise_var: 1.0,
            user_order: [0, 1],
        }
    }

    fn split(ri: f64, p: f64) -> PowerSplit {
        PowerSplit {
            rho_strong: ri,
            rho_weak: 1.0 - ri,
            p_total: p,
            p_circuit: 1.0,
        }
    }

    #[test]
    fn single_element_lift() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let ch = random_channel(1, &mut rng);
        let pw = split(0.3, 2.0);
        let l = build_lifted(&ch, &pw).unwrap();
        let want = 2.0 * 0.3 * (ch.g_sat_ris[0] * ch.f_ris_gu[0][0]).norm_sqr();
        assert!((l.g_strong.as_matrix()[(0, 0)].re - want).abs() < 1e-14);
    }

    #[test]
    fn lifted_trace_matches_cascade() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let ch = random_channel(8, &mut rng);
        let pw = split(0.25, 3.0);
        let l = build_lifted(&ch, &pw).unwrap();
        for xi in [
            RisPhase::zero_phase(8),
            RisPhase::from_angles(&(0..8).map(|k| 0.7 * k as f64).collect::<Vec<_>>()),
        ] {
            let x = HermitianMatrix::from_outer(xi.as_slice(), 1.0);
            let direct: Complex64 = ch
                .g_sat_ris
                .iter()
                .zip(xi.reflection())
                .zip(&ch.f_ris_gu[0])
                .map(|((g, a), f)| g * a * f)
                .sum();
            let want = 3.0 * 0.25 * direct.norm_sqr();
            let got = x.trace_with(&l.g_strong);
            assert!((got - want).abs() <= 1e-10 * want);
        }
        let ratio = l.g_weak.as_matrix()[(2, 3)] / l.g_bar_weak.as_matrix()[(2, 3)];
        assert!((ratio - Complex64::new(0.75 / 0.25, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn linearization_is_tangent_and_dominates() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ch = random_channel(5, &mut rng);
        let l = build_lifted(&ch, &split(0.4, 1.0)).unwrap();
        let xi = RisPhase::from_angles(&[0.1, 0.5, 2.0, -1.0, 3.0]);
        let xk = HermitianMatrix::from_outer(xi.as_slice(), 1.0);
        let noise = 0.3;
        let aff = dc_linearize(&xk, &l.g_bar_weak, noise);
        let exact = |x: &HermitianMatrix| (x.trace_with(&l.g_bar_weak) + noise).log2();
        assert!((aff.eval(&xk) - exact(&xk)).abs() < 1e-12);
        for _ in 0..100 {
            let v = RisPhase::from_angles(&(0..5).map(|_| rng.random_range(0.0..6.3)).collect::<Vec<_>>());
            let x = HermitianMatrix::from_outer(v.as_slice(), 1.0);
            assert!(aff.eval(&x) - exact(&x) >= -1e-10);
        }
        let zero = dc_linearize(&xk, &HermitianMatrix::zeros(5), noise);
        assert!((zero.eval(&xk) - noise.log2()).abs() < 1e-15);
    }

    #[test]
    fn single_element_phase() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let ch = random_channel(1, &mut rng);
        let r = optimize_phase(&ch, &split(0.3, 5.0), 0.0, &BeamformTolerances::default()).unwrap();
        assert!((r.xi.as_slice()[0].norm() - 1.0).abs() < 1e-12);
        assert!((r.relaxation_objective - r.extracted_objective).abs() < 1e-9);
    }

    #[test]
    fn rank_one_fixed_point() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ch = random_channel(6, &mut rng);
        let l = build_lifted(&ch, &split(0.3, 1.0)).unwrap();
        let xi = RisPhase::from_angles(&[0.3, -1.2, 2.2, 0.0, 1.0, -2.9]);
        let x = HermitianMatrix::from_outer(xi.as_slice(), 1.0);
        let ex = extract_rank_one(&x, &l, 1.0, 0.0, 10, 9);
        let inner: Complex64 = ex.xi.as_slice().iter().zip(xi.as_slice()).map(|(a, b)| a.conj() * b).sum();
        assert!((inner.norm() - 6.0).abs() < 1e-8);
        let only = extract_rank_one(&x, &l, 1.0, 0.0, 0, 9);
        assert!(only.xi.as_slice().iter().all(|z| (z.norm() - 1.0).abs() < 1e-12));
    }

    #[test]
    fn ignores_direct_links() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let ch = random_channel(4, &mut rng);
        let mut other = ch.clone();
        other.h_direct = [Complex64::new(9.0, -3.0), Complex64::new(0.0, 0.0)];
        let tol = BeamformTolerances::default();
        let a = optimize_phase(&ch, &split(0.2, 4.0), 0.5, &tol).unwrap();
        let b = optimize_phase(&other, &split(0.2, 4.0), 0.5, &tol).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn ccp_trace_monotone_and_sandwiched() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for _ in 0..10 {
            let ch = random_channel(6, &mut rng);
            let r = optimize_phase(&ch, &split(0.2, 3.0), 0.2, &BeamformTolerances::default()).unwrap();
            assert!(r.relaxation_feasible);
            assert!(r.ccp_trace.windows(2).all(|w| w[1] >= w[0] - 1e-8));
            assert!(r.extracted_objective <= r.relaxation_objective + 1e-6);
            assert!(r.xi_matrix.max_diag_deviation() <= 1e-8);
        }
    }

    #[test]
    fn unreachable_threshold_is_infeasible() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let ch = random_channel(3, &mut rng);
        let r = optimize_phase(&ch, &split(0.2, 1.0), 1e6, &BeamformTolerances::default()).unwrap();
        assert!(!r.feasible);
        assert!(!r.relaxation_feasible);
    }
}
