//! Runs the alternating power/phase optimization on one channel and prints
//! the energy efficiency after every round.
use leo_ris_noma::driver::run_algorithm1;
use leo_ris_noma::harness::SimConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::default();
    let ch = cfg.trial_channel(1, 64)?;
    let r = run_algorithm1(&ch, &cfg.driver())?;
    for (k, ee) in r.ee_trace.iter().enumerate() {
        println!("round {k}: {ee:.4e} b/J");
    }
    println!(
        "converged {} after {} rounds, rho = ({:.4}, {:.4}), p = {:.2} W",
        r.converged, r.rounds, r.power.rho_strong, r.power.rho_weak, r.power.p_total
    );
    println!(
        "rates {:.3e} / {:.3e} b/s/Hz",
        r.metrics.rate_strong, r.metrics.rate_weak
    );
    Ok(())
}
