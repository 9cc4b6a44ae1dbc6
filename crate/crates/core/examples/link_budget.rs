//! Draws one channel realization at the default geometry and prints the
//! per-user gains with and without the RIS.
use leo_ris_noma::harness::SimConfig;
use leo_ris_noma::link::linear_to_db;
use leo_ris_noma::noma::{effective_gains, RisPhase};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let cfg = SimConfig::default();
    let m = 64;
    let ch = cfg.trial_channel(0, m)?;
    println!("noise variance {:.3e} W", ch.noise_var);
    println!("user order (strong, weak) = {:?}", ch.user_order);
    for (k, h) in ch.h_direct.iter().enumerate() {
        println!("direct path {k}: |h|^2/N = {:6.2} dB", linear_to_db(h.norm_sqr() / ch.noise_var));
    }
    let xi = RisPhase::zero_phase(m);
    let with_ris = effective_gains(&ch, &xi)?;
    let without = effective_gains(&ch.without_ris(), &RisPhase::zero_phase(m))?;
    for k in 0..2 {
        println!(
            "user {k}: gain/noise {:6.2} dB direct only, {:6.2} dB with {m} unphased elements",
            linear_to_db(without[k] / ch.noise_var),
            linear_to_db(with_ris[k] / ch.noise_var),
        );
    }
    Ok(())
}
