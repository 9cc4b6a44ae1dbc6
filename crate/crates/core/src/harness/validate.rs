//! Oracle suites behind the `validate` subcommand. Each `*_cases` function
//! returns raw per-instance measurements; [`run_validation`] applies the
//! pass thresholds.

use std::time::Instant;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::beamform::{optimize_phase, BeamformTolerances};
use crate::link::{beam_gain, ChannelRealization};
use crate::noma::{effective_gains, hadamard_lift, PowerSplit, RisPhase};
use crate::oracle::{oracle_lagrangian_gradient, oracle_phase_grid, oracle_power_grid, OracleReport};
use crate::power::{optimize_power, PowerSolveReport, PowerTolerances};
use crate::psd::{project_psd, CMatrix, HermitianMatrix};

use super::{trial_seed, SimConfig};

/// Channel at the default operating point plus a uniformly random RIS phase.
pub fn power_instance(cfg: &SimConfig, t: usize) -> (ChannelRealization, RisPhase) {
    let channel = cfg.trial_channel(t, cfg.elements).expect("default config is valid");
    let mut rng = ChaCha8Rng::seed_from_u64(trial_seed(cfg.root_seed, t) ^ 0x5151);
    let angles: Vec<f64> = (0..cfg.elements)
        .map(|_| rng.random_range(0.0..std::f64::consts::TAU))
        .collect();
    (channel, RisPhase::from_angles(&angles))
}

fn solve_power(cfg: &SimConfig, channel: &ChannelRealization, xi: &RisPhase) -> Option<PowerSolveReport> {
    let d = cfg.driver();
    let tol = PowerTolerances {
        dinkelbach_tol: cfg.dinkelbach_tol,
        kkt_tol: cfg.kkt_tol,
        ..PowerTolerances::default()
    };
    optimize_power(channel, xi, &d.qos, &d.budget, &tol).ok()
}

/// Allocator EE against a `grid_points` grid, judged at `min_ratio`. Only
/// instances with a feasible grid point are returned; a solver error counts
/// as a zero EE.
pub fn power_oracle_cases(cfg: &SimConfig, n: usize, grid_points: usize, min_ratio: f64) -> Vec<OracleReport> {
    let d = cfg.driver();
    (0..n)
        .filter_map(|t| {
            let (ch, xi) = power_instance(cfg, t);
            let oracle = oracle_power_grid(&ch, &xi, d.budget.p_max, d.budget.p_circuit, &d.qos, grid_points);
            if !oracle.feasible {
                return None;
            }
            let solver = solve_power(cfg, &ch, &xi)
                .filter(|r| r.feasible)
                .map_or(0.0, |r| split_ee(&ch, &xi, &r.solution));
            Some(oracle.judge(solver, min_ratio))
        })
        .collect()
}

/// EE of a split in b/s/Hz/W, evaluated the same way as the power grid.
fn split_ee(ch: &ChannelRealization, xi: &RisPhase, s: &PowerSplit) -> f64 {
    let o = effective_gains(ch, xi).expect("matching dimensions");
    let si = s.p_total * s.rho_strong * o[0] / ch.noise_var;
    let sj = s.p_total * s.rho_weak * o[1] / (ch.noise_var + s.p_total * s.rho_strong * o[1]);
    ((1.0 + si).log2() + (1.0 + sj).log2()) / (s.p_total * (s.rho_strong + s.rho_weak) + s.p_circuit)
}

/// Finite-difference gradient at one returned interior root.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KktCase {
    pub instance: usize,
    pub root: f64,
    pub gradient: f64,
    pub lagrangian: f64,
    /// Gradient at `root + 0.1` (or `root - 0.1` near the upper edge).
    pub perturbed_gradient: f64,
    pub one_sided: bool,
}

pub fn kkt_cases(cfg: &SimConfig, n: usize) -> Vec<KktCase> {
    let mut out = Vec::new();
    for t in 0..n {
        let (ch, xi) = power_instance(cfg, t);
        let Some(r) = solve_power(cfg, &ch, &xi) else { continue };
        for &root in &r.interior_roots {
            let g = oracle_lagrangian_gradient(root, &r.dual, &r.stationarity);
            let off = if root + 0.1 < 1.0 { root + 0.1 } else { root - 0.1 };
            let p = oracle_lagrangian_gradient(off, &r.dual, &r.stationarity);
            out.push(KktCase {
                instance: t,
                root,
                gradient: g.gradient,
                lagrangian: g.lagrangian,
                perturbed_gradient: p.gradient,
                one_sided: g.one_sided,
            });
        }
    }
    out
}

/// `(phi, eta)` traces; an empty trace marks a solver error.
pub fn dinkelbach_cases(cfg: &SimConfig, n: usize) -> Vec<Vec<(f64, f64)>> {
    (0..n)
        .map(|t| {
            let (ch, xi) = power_instance(cfg, t);
            solve_power(cfg, &ch, &xi).map_or_else(Vec::new, |r| r.dinkelbach_trace)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SandwichCase {
    pub grid_best: f64,
    pub relaxation: f64,
    pub extracted: f64,
}

/// Small synthetic instance: unit-variance Rayleigh entries, unit noise.
pub fn sandwich_instance(elements: usize, seed: u64) -> (ChannelRealization, PowerSplit) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut cn = || {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
    };
    let g: Vec<Complex64> = (0..elements).map(|_| cn()).collect();
    let fi: Vec<Complex64> = (0..elements).map(|_| cn()).collect();
    let fj: Vec<Complex64> = (0..elements).map(|_| cn()).collect();
    let ch = ChannelRealization {
        h_direct: [Complex64::new(0.0, 0.0); 2],
        g_sat_ris: g,
        f_ris_gu: [fi, fj],
        noise_var: 1.0,
        user_order: [0, 1],
    };
    let rho = rng.random_range(0.05..0.45);
    let power = PowerSplit {
        rho_strong: rho,
        rho_weak: 1.0 - rho,
        p_total: 10.0,
        p_circuit: 1.0,
    };
    (ch, power)
}

/// Phase-grid optimum against the relaxation and the extracted phase, at
/// zero SINR target.
pub fn sandwich_cases(n: usize, elements: usize, levels: usize, seed: u64) -> Vec<SandwichCase> {
    let tol = BeamformTolerances::default();
    (0..n)
        .map(|t| {
            let (ch, power) = sandwich_instance(elements, trial_seed(seed, t));
            let grid = oracle_phase_grid(&ch, &power, levels, None).expect("small grid");
            match optimize_phase(&ch, &power, 0.0, &tol) {
                Ok(r) => SandwichCase {
                    grid_best: grid.oracle_value,
                    relaxation: r.relaxation_objective,
                    extracted: r.extracted_objective,
                },
                Err(_) => SandwichCase {
                    grid_best: grid.oracle_value,
                    relaxation: f64::NEG_INFINITY,
                    extracted: f64::NEG_INFINITY,
                },
            }
        })
        .collect()
}

/// Worst-case errors of the numerical kernels over `n` random draws.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelErrors {
    /// `|G(0) / G_max - 1|`
    pub boresight: f64,
    /// `|G(theta_3dB) / (G_max / 2) - 1|`
    pub half_power: f64,
    /// Worst violation of the PSD projection optimality conditions, relative
    /// to the input norm.
    pub projection: f64,
    /// Worst relative mismatch of the lifted trace identity.
    pub lift: f64,
}

pub fn kernel_errors(n: usize, seed: u64) -> KernelErrors {
    let theta = 0.2f64.to_radians();
    let g_max = 10f64.powf(5.21);
    let boresight = (beam_gain(0.0, theta, g_max) / g_max - 1.0).abs();
    let half_power = (beam_gain(theta, theta, g_max) / (0.5 * g_max) - 1.0).abs();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let cn = |rng: &mut ChaCha8Rng| {
        let re: f64 = rng.sample(StandardNormal);
        let im: f64 = rng.sample(StandardNormal);
        Complex64::new(re, im)
    };
    let mut projection: f64 = 0.0;
    let mut lift: f64 = 0.0;
    for _ in 0..n {
        let dim = rng.random_range(1..=8);
        let a = CMatrix::from_fn(dim, dim, |_, _| cn(&mut rng));
        let a = HermitianMatrix::new((&a + a.adjoint()) * Complex64::new(0.5, 0.0)).expect("hermitian");
        let p = project_psd(&a);
        let scale = a.as_matrix().norm().max(1e-300);
        let diff = HermitianMatrix::new(p.as_matrix() - a.as_matrix()).expect("hermitian");
        // P >= 0, P - A >= 0 and <P, P - A> = 0
        let v1 = (-p.min_eigenvalue()).max(0.0);
        let v2 = (-diff.min_eigenvalue()).max(0.0);
        let v3 = p.trace_with(&diff).abs() / scale;
        projection = projection.max(v1.max(v2) / scale).max(v3);

        let m = rng.random_range(1..=16);
        let g: Vec<Complex64> = (0..m).map(|_| cn(&mut rng)).collect();
        let f: Vec<Complex64> = (0..m).map(|_| cn(&mut rng)).collect();
        let xi: Vec<Complex64> = (0..m)
            .map(|_| Complex64::from_polar(1.0, rng.random_range(0.0..std::f64::consts::TAU)))
            .collect();
        let direct: Complex64 = (0..m).map(|k| xi[k].conj() * g[k] * f[k]).sum();
        let h = hadamard_lift(&g, &f).expect("same length");
        let x = HermitianMatrix::from_outer(&xi, 1.0);
        let lifted = x.trace_with(&HermitianMatrix::from_outer(&h, 1.0));
        lift = lift.max((lifted - direct.norm_sqr()).abs() / direct.norm_sqr().max(1e-300));
    }
    KernelErrors {
        boresight,
        half_power,
        projection,
        lift,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SuiteOutcome {
    pub name: &'static str,
    pub pass: bool,
    pub detail: String,
    pub seconds: f64,
}

pub const VALIDATE_HEADER: [&str; 4] = ["suite", "pass", "detail", "seconds"];

fn timed(name: &'static str, f: impl FnOnce() -> (bool, String)) -> SuiteOutcome {
    let start = Instant::now();
    let (pass, detail) = f();
    SuiteOutcome {
        name,
        pass,
        detail,
        seconds: start.elapsed().as_secs_f64(),
    }
}

/// Runs every oracle suite at the default operating point of `cfg`.
pub fn run_validation(cfg: &SimConfig) -> Vec<SuiteOutcome> {
    vec![
        timed("power_oracle", || {
            let cases = power_oracle_cases(cfg, 200, 10_000, 0.999);
            let ok = cases.iter().filter(|c| c.pass).count();
            let share = ok as f64 / cases.len().max(1) as f64;
            (
                !cases.is_empty() && share >= 0.95,
                format!("{ok}/{} feasible instances within 0.999 of the grid", cases.len()),
            )
        }),
        timed("kkt_stationarity", || {
            let cases = kkt_cases(cfg, 100);
            let bad = cases
                .iter()
                .filter(|c| c.one_sided || c.gradient.abs() > 1e-6 * (1.0 + c.lagrangian.abs()))
                .count();
            (bad == 0, format!("{bad} of {} interior roots off stationarity", cases.len()))
        }),
        timed("dinkelbach", || {
            let traces = dinkelbach_cases(cfg, 100);
            let bad = traces.iter().filter(|t| !dinkelbach_ok(t)).count();
            (bad == 0, format!("{bad} of {} traces fail", traces.len()))
        }),
        timed("phase_sandwich", || {
            let cases = sandwich_cases(100, 3, 16, cfg.root_seed);
            let upper = cases.iter().filter(|c| c.grid_best <= c.relaxation + 1e-6).count();
            let close = cases.iter().filter(|c| c.extracted >= 0.9 * c.grid_best).count();
            (
                upper == cases.len() && close as f64 >= 0.9 * cases.len() as f64,
                format!("relaxation above grid {upper}/{n}, extraction within 0.9 {close}/{n}", n = cases.len()),
            )
        }),
        timed("kernels", || {
            let e = kernel_errors(100, cfg.root_seed);
            (
                e.boresight <= 1e-9 && e.half_power <= 0.02 && e.projection <= 1e-9 && e.lift <= 1e-10,
                format!("{e:?}"),
            )
        }),
    ]
}

/// `phi` nondecreasing, final `|eta| <= 1e-3`, at most 50 steps.
pub fn dinkelbach_ok(trace: &[(f64, f64)]) -> bool {
    !trace.is_empty()
        && trace.len() <= 50
        && trace.windows(2).all(|w| w[1].0 >= w[0].0)
        && trace.last().is_some_and(|(_, eta)| eta.abs() <= 1e-3)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dinkelbach_predicate() {
        assert!(dinkelbach_ok(&[(0.0, 1.0), (0.5, 1e-4)]));
        assert!(!dinkelbach_ok(&[(0.5, 1.0), (0.4, 1e-4)]));
        assert!(!dinkelbach_ok(&[(0.5, 1e-2)]));
        assert!(!dinkelbach_ok(&[]));
    }

    #[test]
    fn sandwich_instance_is_deterministic() {
        let (a, pa) = sandwich_instance(3, 11);
        let (b, pb) = sandwich_instance(3, 11);
        assert_eq!(a, b);
        assert_eq!(pa, pb);
    }
}
