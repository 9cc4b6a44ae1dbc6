use leo_ris_noma::beamform::dc_linearize;
use leo_ris_noma::driver::{run_framework, DriverConfig, FrameworkKind};
use leo_ris_noma::harness::SimConfig;
use leo_ris_noma::link::{beam_gain, free_space_amplitude, realize_channels, AntennaConfig, FadingConfig, GeometryConfig};
use leo_ris_noma::noma::{cascade, energy_efficiency, hadamard_lift, metrics_from_gains, sinr_pair, PowerSplit, RisPhase};
use leo_ris_noma::power::{
    complement_rho, dinkelbach_step, optimize_power_for_gains, subgradient_update, DinkelbachState, DualState,
    PowerBudget, PowerTolerances, StepSchedule,
};
use leo_ris_noma::psd::{project_psd, CMatrix, HermitianMatrix};
use nalgebra::DMatrix;
use num_complex::Complex64;
use proptest::prelude::*;

fn complex() -> impl Strategy<Value = Complex64> {
    (-2.0..2.0f64, -2.0..2.0f64).prop_map(|(re, im)| Complex64::new(re, im))
}

fn hermitian(n: usize) -> impl Strategy<Value = HermitianMatrix> {
    prop::collection::vec(complex(), n * n).prop_map(move |v| {
        let a = CMatrix::from_vec(n, n, v);
        HermitianMatrix::new((&a + a.adjoint()) * Complex64::new(0.5, 0.0)).unwrap()
    })
}

fn split(rho: f64, p: f64, pc: f64) -> PowerSplit {
    PowerSplit {
        rho_strong: rho,
        rho_weak: 1.0 - rho,
        p_total: p,
        p_circuit: pc,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn sinrs_are_invariant_to_common_power_noise_scaling(
        rho in 0.0..1.0f64, os in 1e-3..10.0f64, ow in 1e-3..10.0f64, s in 1e-3..1e3f64,
    ) {
        let (a, b) = sinr_pair(&split(rho, 2.0, 1.0), os, ow, 0.5);
        let (c, d) = sinr_pair(&split(rho, 2.0 * s, 1.0), os, ow, 0.5 * s);
        prop_assert!((a - c).abs() <= 1e-12 * a.abs().max(1.0));
        prop_assert!((b - d).abs() <= 1e-12 * b.abs().max(1.0));
    }

    #[test]
    fn ee_depends_only_on_gain_to_noise_ratios(
        rho in 0.0..1.0f64, os in 1e-3..10.0f64, ow in 1e-3..10.0f64, s in 1e-6..1e6f64,
    ) {
        let p = split(rho, 5.0, 1.0);
        let a = metrics_from_gains([os, ow], &p, 0.2, 20e6, true).unwrap();
        let b = metrics_from_gains([os * s, ow * s], &p, 0.2 * s, 20e6, true).unwrap();
        prop_assert!((a.ee - b.ee).abs() <= 1e-9 * a.ee.abs().max(1.0));
    }

    #[test]
    fn ee_falls_as_circuit_power_grows(r0 in 0.01..5.0f64, r1 in 0.0..5.0f64, pc in 0.1..10.0f64) {
        let a = energy_efficiency((r0, r1), &split(0.3, 1.0, pc), 1.0, false).unwrap();
        let b = energy_efficiency((r0, r1), &split(0.3, 1.0, 2.0 * pc), 1.0, false).unwrap();
        prop_assert!(b < a);
    }

    #[test]
    fn free_space_amplitude_times_distance_is_constant(d1 in 1.0..1e7f64, d2 in 1.0..1e7f64, f in 1e9..4e10f64) {
        let a = free_space_amplitude(d1, f, 10.0, 2.0) * d1;
        let b = free_space_amplitude(d2, f, 10.0, 2.0) * d2;
        prop_assert!((a - b).abs() <= 1e-12 * a);
    }

    #[test]
    fn beam_gain_never_exceeds_peak(theta in 0.0..0.2f64, t3 in 1e-3..0.05f64) {
        let g = beam_gain(theta, t3, 1e5);
        prop_assert!(g >= 0.0 && g <= 1e5 * (1.0 + 1e-12));
    }

    #[test]
    fn lifted_cascade_matches_diagonal_reflection(
        g in prop::collection::vec(complex(), 8),
        f in prop::collection::vec(complex(), 8),
        angles in prop::collection::vec(0.0..std::f64::consts::TAU, 8),
    ) {
        let xi = RisPhase::from_angles(&angles);
        let lifted = hadamard_lift(&g, &f).unwrap();
        let via_lift = cascade(&xi, &lifted).unwrap();
        // g^T diag(theta) f with theta = conj(xi)
        let theta = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(8, xi.as_slice().iter().map(|x| x.conj())));
        let gv = nalgebra::DVector::from_vec(g.clone());
        let fv = nalgebra::DVector::from_vec(f.clone());
        let direct = (gv.transpose() * theta * fv)[(0, 0)];
        prop_assert!((via_lift - direct).norm() <= 1e-12 * direct.norm().max(1.0));
    }

    #[test]
    fn psd_projection_is_idempotent_and_psd(h in hermitian(5)) {
        let p = project_psd(&h);
        prop_assert!(p.min_eigenvalue() >= -1e-10);
        let pp = project_psd(&p);
        prop_assert!((p.as_matrix() - pp.as_matrix()).norm() <= 1e-10 * p.as_matrix().norm().max(1.0));
    }

    #[test]
    fn tangent_of_log_overestimates(x in hermitian(3), y in hermitian(3), g in hermitian(3)) {
        let psd = |m: &HermitianMatrix| {
            let p = project_psd(m);
            HermitianMatrix::new(p.as_matrix() + CMatrix::identity(3, 3) * Complex64::new(1e-3, 0.0)).unwrap()
        };
        let (xk, x, gb) = (psd(&x), psd(&y), psd(&g));
        let bound = dc_linearize(&xk, &gb, 0.5);
        let at = |m: &HermitianMatrix| (m.trace_with(&gb) + 0.5).log2();
        prop_assert!((bound.eval(&xk) - at(&xk)).abs() <= 1e-10 * at(&xk).abs().max(1.0));
        prop_assert!(bound.eval(&x) >= at(&x) - 1e-10);
    }

    #[test]
    fn multipliers_stay_nonnegative(
        l in prop::collection::vec(0.0..2.0f64, 4),
        r in prop::collection::vec(-50.0..50.0f64, 4),
        mu0 in 0.0..1.0f64,
    ) {
        let dual = DualState::new([l[0], l[1], l[2], l[3]]);
        let next = subgradient_update(&dual, [r[0], r[1], r[2], r[3]], &StepSchedule { mu0 });
        prop_assert!(next.lambda.iter().all(|x| *x >= 0.0));
        if mu0 == 0.0 {
            prop_assert_eq!(next.lambda, dual.lambda);
        }
    }

    #[test]
    fn complement_rho_sums_to_one(rho in 0.0..=1.0f64) {
        prop_assert!((complement_rho(rho).unwrap() + rho - 1.0).abs() <= f64::EPSILON);
    }

    #[test]
    fn dinkelbach_fixed_point_has_zero_residual(rate in 0.0..100.0f64, cost in 0.1..100.0f64) {
        let s = dinkelbach_step(rate, cost, &DinkelbachState::new(rate / cost));
        prop_assert!(s.eta.abs() <= 1e-12 * rate.max(1.0));
    }

    #[test]
    fn power_solution_stays_in_the_box(
        os in 1e-3..10.0f64, ratio in 0.01..1.0f64, p in 0.5..100.0f64, gamma in 0.0..0.5f64,
    ) {
        let budget = PowerBudget { p_max: p, p_circuit: 1.0 };
        let qos = leo_ris_noma::noma::QosSpec::Sinr(gamma);
        let rep = optimize_power_for_gains([os, os * ratio], 1.0, &qos, &budget, &PowerTolerances::default()).unwrap();
        let s = rep.solution;
        prop_assert!(rep.dual.lambda.iter().all(|x| *x >= 0.0));
        if rep.feasible {
            prop_assert!(s.validate(p).is_ok());
            let (a, b) = sinr_pair(&s, os, os * ratio, 1.0);
            prop_assert!(a >= gamma - 1e-6 && b >= gamma - 1e-6);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn channels_are_pure_and_nested(seed in any::<u64>(), m in 1usize..24) {
        let (g, a, f) = (GeometryConfig::default(), AntennaConfig::default(), FadingConfig::default());
        let small = realize_channels(seed, &g, &a, &f, m).unwrap();
        prop_assert_eq!(&small, &realize_channels(seed, &g, &a, &f, m).unwrap());
        let big = realize_channels(seed, &g, &a, &f, m + 8).unwrap();
        prop_assert_eq!(small.h_direct, big.h_direct);
        prop_assert_eq!(&small.g_sat_ris[..], &big.g_sat_ris[..m]);
        prop_assert_eq!(&small.f_ris_gu[1][..], &big.f_ris_gu[1][..m]);
        prop_assert!(small.h_direct[0].norm() >= small.h_direct[1].norm());
    }

    #[test]
    fn frameworks_are_ordered_per_instance(trial in 0usize..1000) {
        let cfg = SimConfig { elements: 8, ..SimConfig::default() };
        let ch = cfg.trial_channel(trial, 8).unwrap();
        let d = cfg.driver();
        let proposed = run_framework(FrameworkKind::Proposed, &ch, &d).unwrap();
        let fixed = run_framework(FrameworkKind::FixedPhaseBenchmark, &ch, &d).unwrap();
        prop_assert!(proposed.ee() >= fixed.ee() - 1e-6);
        prop_assert!(proposed.ee_trace.windows(2).all(|w| w[1] >= w[0]));
    }
}

#[test]
fn frozen_phase_reduces_to_the_power_step() {
    let cfg = SimConfig::default();
    for t in 0..5 {
        let ch = cfg.trial_channel(t, 16).unwrap();
        let frozen = DriverConfig { freeze_phase: true, ..cfg.driver() };
        let a = run_framework(FrameworkKind::Proposed, &ch, &frozen).unwrap();
        let b = run_framework(FrameworkKind::FixedPhaseBenchmark, &ch, &cfg.driver()).unwrap();
        assert_eq!(a.ee(), b.ee());
        assert_eq!(a.power, b.power);
    }
}

#[test]
fn conventional_ignores_element_count() {
    let cfg = SimConfig::default();
    let d = cfg.driver();
    let base = run_framework(FrameworkKind::ConventionalNoRis, &cfg.trial_channel(3, 4).unwrap(), &d).unwrap();
    for m in [8, 32, 96] {
        let r = run_framework(FrameworkKind::ConventionalNoRis, &cfg.trial_channel(3, m).unwrap(), &d).unwrap();
        assert_eq!(r.ee(), base.ee());
    }
}

#[test]
fn single_element_alternation_settles_fast() {
    let cfg = SimConfig::default();
    for t in 0..10 {
        let r = run_framework(FrameworkKind::Proposed, &cfg.trial_channel(t, 1).unwrap(), &cfg.driver()).unwrap();
        assert!(r.converged && r.rounds <= 2, "trial {t}: {} rounds", r.rounds);
    }
}
