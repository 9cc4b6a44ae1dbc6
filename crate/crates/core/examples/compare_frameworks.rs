//! Runs the optimized, fixed-phase and no-RIS schemes on the same channels.
use leo_ris_noma::driver::{run_framework, FrameworkKind};
use leo_ris_noma::harness::SimConfig;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::default();
    let d = cfg.driver();
    println!("{:>5} {:>12} {:>12} {:>12}", "trial", "proposed", "fixed", "conventional");
    for t in 0..8 {
        let ch = cfg.trial_channel(t, cfg.elements)?;
        let ee: Vec<f64> = FrameworkKind::ALL
            .iter()
            .map(|k| run_framework(*k, &ch, &d).map(|r| r.ee()))
            .collect::<Result<_, _>>()?;
        println!("{t:>5} {:>12.4e} {:>12.4e} {:>12.4e}", ee[0], ee[1], ee[2]);
    }
    Ok(())
}
