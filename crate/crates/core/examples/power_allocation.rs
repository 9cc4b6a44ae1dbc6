//! Solves the power split for a fixed RIS phase and checks it against a
//! dense grid over the split.
use leo_ris_noma::harness::SimConfig;
use leo_ris_noma::noma::RisPhase;
use leo_ris_noma::oracle::oracle_power_grid;
use leo_ris_noma::power::optimize_power;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::default();
    let d = cfg.driver();
    for t in 0..5 {
        let ch = cfg.trial_channel(t, 32)?;
        let xi = RisPhase::zero_phase(32);
        let rep = optimize_power(&ch, &xi, &d.qos, &d.budget, &d.power_tol)?;
        let s = rep.solution;
        let ee = rep.sum_rate / (s.p_total + s.p_circuit);
        let grid = oracle_power_grid(&ch, &xi, d.budget.p_max, d.budget.p_circuit, &d.qos, 10_000).judge(ee, 0.999);
        println!(
            "trial {t}: rho = ({:.4}, {:.4}) p = {:.2} W  {} Dinkelbach steps  ratio to grid {:.6}  {}",
            s.rho_strong,
            s.rho_weak,
            s.p_total,
            rep.dinkelbach_trace.len(),
            grid.ratio,
            if rep.feasible { "feasible" } else { "infeasible" },
        );
    }
    Ok(())
}
