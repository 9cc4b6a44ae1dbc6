//! Runs the oracle suites that back the `validate` subcommand.
use leo_ris_noma::harness::validate::run_validation;
use leo_ris_noma::harness::SimConfig;

fn main() {
    for s in run_validation(&SimConfig::default()) {
        let tag = if s.pass { "ok  " } else { "FAIL" };
        println!("{tag} {:<16} {:>6.2} s  {}", s.name, s.seconds, s.detail);
    }
}
