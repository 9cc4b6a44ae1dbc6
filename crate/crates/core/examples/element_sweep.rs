//! Small Monte Carlo sweep over the RIS size, aggregated per scheme.
use leo_ris_noma::harness::{aggregate, run_trials, SimConfig, Sweep};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig { trials: 8, ..SimConfig::default() };
    let rows = run_trials(&cfg, &Sweep::Elements(vec![8, 16, 32]))?;
    for a in aggregate(&rows) {
        let mean = a.mean_ee.map_or("NA".to_string(), |m| format!("{m:.4e}"));
        println!(
            "M = {:>3} {:<13} mean EE {mean:>11} b/J  feasible {:.0}%",
            a.sweep_value,
            a.framework.as_str(),
            100.0 * a.feasibility_rate
        );
    }
    Ok(())
}
