//! Command-line front end. Exit codes: 0 success, 2 usage, config or output
//! error, 3 failed validation.

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};

use crate::driver::FrameworkKind;

use super::validate::{run_validation, VALIDATE_HEADER};
use super::{
    aggregate, median, prepare_out_dir, run_convergence, run_trials, write_aggregate, write_convergence,
    write_trials, HarnessError, SimConfig, Sweep, TrialRow,
};

#[derive(Debug, Parser)]
#[command(name = "risnoma", version, about = "Energy-efficiency simulation for RIS-assisted NOMA LEO downlinks")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// TOML config; built-in defaults when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory for CSV files.
    #[arg(long, global = true, default_value = "out")]
    pub out: PathBuf,
    /// Root seed override.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Monte Carlo trials per sweep point.
    #[arg(long, global = true)]
    pub trials: Option<usize>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true)]
    pub workers: Option<usize>,
    /// Comma-separated subset of proposed,fixed,conventional.
    #[arg(long, global = true, value_delimiter = ',')]
    pub frameworks: Option<Vec<FrameworkKind>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Subcommand)]
pub enum Command {
    /// Every framework at the configured operating point.
    Run,
    /// EE against the satellite transmit power.
    SweepPower,
    /// EE against the RIS element count.
    SweepElements,
    /// EE against the per-user QoS threshold.
    SweepQos,
    /// Per-round EE traces of the alternating optimization.
    Convergence,
    /// Oracle suites; exit 3 if any fails.
    Validate,
}

impl Command {
    fn file_stem(self) -> &'static str {
        match self {
            Command::Run => "run",
            Command::SweepPower => "sweep_power",
            Command::SweepElements => "sweep_elements",
            Command::SweepQos => "sweep_qos",
            Command::Convergence => "convergence",
            Command::Validate => "validate",
        }
    }
}

impl Cli {
    pub fn resolve_config(&self) -> Result<SimConfig, HarnessError> {
        let mut cfg = match &self.config {
            Some(p) => SimConfig::load(p)?,
            None => SimConfig::default(),
        };
        if let Some(s) = self.seed {
            cfg.root_seed = s;
        }
        if let Some(t) = self.trials {
            cfg.trials = t;
        }
        if let Some(w) = self.workers {
            cfg.workers = w;
        }
        if let Some(f) = &self.frameworks {
            cfg.frameworks = f.clone();
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses `args` (program name first), runs the command, returns the exit code.
pub fn run_cli<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn execute(cli: &Cli) -> Result<(), HarnessError> {
    let cfg = cli.resolve_config()?;
    let out = prepare_out_dir(&cli.out)?;
    let stem = cli.command.file_stem();
    match cli.command {
        Command::Run => sweep(&cfg, &Sweep::None, &out, stem),
        Command::SweepPower => sweep(&cfg, &Sweep::PowerDbm(cfg.sweep_power_dbm.clone()), &out, stem),
        Command::SweepElements => sweep(&cfg, &Sweep::Elements(cfg.sweep_elements.clone()), &out, stem),
        Command::SweepQos => sweep(&cfg, &Sweep::Qos(cfg.sweep_qos.clone()), &out, stem),
        Command::Convergence => convergence(&cfg, &out, stem),
        Command::Validate => validate(&cfg, &out, stem),
    }
}

fn sweep(cfg: &SimConfig, sweep: &Sweep, out: &Path, stem: &str) -> Result<(), HarnessError> {
    let rows = run_trials(cfg, sweep)?;
    let agg = aggregate(&rows);
    write_trials(&out.join(format!("{stem}_trials.csv")), &rows)?;
    write_aggregate(&out.join(format!("{stem}_aggregate.csv")), &agg)?;
    for r in &agg {
        let mean = r.mean_ee.map_or_else(|| super::ABSENT.to_string(), |m| format!("{m:.6e}"));
        println!(
            "{:>10} {:<13} mean_ee {mean} feasible {:.2} rounds {:.2}",
            r.sweep_value, r.framework, r.feasibility_rate, r.mean_rounds
        );
    }
    Ok(())
}

fn convergence(cfg: &SimConfig, out: &Path, stem: &str) -> Result<(), HarnessError> {
    let traces = run_convergence(cfg)?;
    write_convergence(&out.join(format!("{stem}_trace.csv")), &traces)?;
    let rows: Vec<TrialRow> = traces
        .iter()
        .map(|t| TrialRow {
            sweep_value: t.elements as f64,
            framework: FrameworkKind::Proposed,
            trial: t.trial,
            ee: t.ee.last().copied().unwrap_or(f64::NAN),
            rounds: t.rounds,
            feasible: !t.ee.is_empty(),
            seed: super::trial_seed(cfg.root_seed, t.trial),
        })
        .collect();
    write_trials(&out.join(format!("{stem}_trials.csv")), &rows)?;
    write_aggregate(&out.join(format!("{stem}_aggregate.csv")), &aggregate(&rows))?;
    for &m in &cfg.convergence_elements {
        let group: Vec<_> = traces.iter().filter(|t| t.elements == m).collect();
        let converged = group.iter().filter(|t| t.converged).count();
        let mut rounds: Vec<f64> = group.iter().map(|t| t.rounds as f64).collect();
        let med = median(&mut rounds).unwrap_or(f64::NAN);
        println!("M = {m}: converged {converged}/{} median rounds {med}", group.len());
    }
    Ok(())
}

fn validate(cfg: &SimConfig, out: &Path, stem: &str) -> Result<(), HarnessError> {
    let outcomes = run_validation(cfg);
    let mut w = csv::Writer::from_path(out.join(format!("{stem}.csv")))?;
    w.write_record(VALIDATE_HEADER)?;
    for o in &outcomes {
        println!("{} {:<17} {} ({:.2} s)", if o.pass { "PASS" } else { "FAIL" }, o.name, o.detail, o.seconds);
        w.write_record([o.name.to_string(), o.pass.to_string(), o.detail.clone(), format!("{:.3}", o.seconds)])?;
    }
    w.flush()?;
    let failed: Vec<&str> = outcomes.iter().filter(|o| !o.pass).map(|o| o.name).collect();
    if failed.is_empty() {
        Ok(())
    } else {
        Err(HarnessError::Validation(failed.join(", ")))
    }
}
