//! Monte Carlo orchestration: configuration, per-trial seeding, parallel
//! trial execution, aggregation and CSV output.

pub mod cli;
pub mod validate;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::driver::{run_framework, DriverConfig, FixedPhase, FrameworkKind};
use crate::link::{
    db_to_linear, realize_channels, AntennaConfig, ChannelRealization, DopplerMode, FadingConfig,
    GeometryConfig, LinkError, RisGuFading, SatRisFading,
};
use crate::noma::QosSpec;
use crate::power::PowerBudget;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("output error: {0}")]
    Io(String),
    #[error("validation failed: {0}")]
    Validation(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) | HarnessError::Io(_) => 2,
            HarnessError::Validation(_) => 3,
        }
    }
}

impl From<LinkError> for HarnessError {
    fn from(e: LinkError) -> Self {
        HarnessError::Config(e.to_string())
    }
}

impl From<csv::Error> for HarnessError {
    fn from(e: csv::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

impl From<std::io::Error> for HarnessError {
    fn from(e: std::io::Error) -> Self {
        HarnessError::Io(e.to_string())
    }
}

/// Flat simulation config as read from TOML. Angles in degrees, powers in
/// dBm unless the key says otherwise. See `configs/default.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub trials: usize,
    pub root_seed: u64,
    /// Thread count; 0 uses every core.
    pub workers: usize,
    pub frameworks: Vec<FrameworkKind>,

    pub elements: usize,
    pub p_max_dbm: f64,
    pub p_circuit_w: f64,
    /// Per-user minimum spectral efficiency in b/s/Hz.
    pub qos_spectral_efficiency: f64,

    pub sat_height_km: f64,
    pub carrier_freq_ghz: f64,
    pub bandwidth_mhz: f64,
    pub beam_offset_deg: [f64; 2],
    pub ris_offset_deg: f64,
    pub theta_3db_deg: f64,
    pub pathloss_exponent: f64,
    pub noise_density_dbm_hz: f64,
    /// Each trial draws both RIS-to-user distances uniformly from this range.
    pub d_ris_gu_m: [f64; 2],

    pub g_max_dbi: f64,
    pub g_rx_dbi: f64,
    pub g_flat_dbi: f64,
    pub bessel_pattern: bool,
    /// Absent means Rayleigh.
    pub ris_gu_rician_k: Option<f64>,
    /// Absent means pure line of sight.
    pub sat_ris_rician_k: Option<f64>,
    /// Absent means a uniform random Doppler term per trial.
    pub doppler_zeta: Option<f64>,
    /// Absent means the all-ones phase for the fixed benchmark.
    pub fixed_phase_seed: Option<u64>,

    pub max_rounds: usize,
    pub ee_rel_tol: f64,
    pub dinkelbach_tol: f64,
    pub kkt_tol: f64,
    pub psd_gap_tol: f64,
    pub ccp_tol: f64,
    pub randomizations: usize,

    pub sweep_power_dbm: Vec<f64>,
    pub sweep_elements: Vec<usize>,
    pub sweep_qos: Vec<f64>,
    pub convergence_elements: Vec<usize>,
}

impl Default for SimConfig {
    fn default() -> Self {
        let geo = GeometryConfig::default();
        let ant = AntennaConfig::default();
        let drv = DriverConfig::default();
        Self {
            trials: 200,
            root_seed: 2024,
            workers: 0,
            frameworks: FrameworkKind::ALL.to_vec(),
            elements: 64,
            p_max_dbm: 50.0,
            p_circuit_w: drv.budget.p_circuit,
            qos_spectral_efficiency: 10.0 / geo.bandwidth_hz,
            sat_height_km: geo.sat_height_m / 1e3,
            carrier_freq_ghz: geo.carrier_freq_hz / 1e9,
            bandwidth_mhz: geo.bandwidth_hz / 1e6,
            beam_offset_deg: geo.beam_offset_rad.map(f64::to_degrees),
            ris_offset_deg: geo.ris_offset_rad.to_degrees(),
            theta_3db_deg: geo.theta_3db_rad.to_degrees(),
            pathloss_exponent: geo.pathloss_exponent,
            noise_density_dbm_hz: geo.noise_density_dbm_per_hz,
            d_ris_gu_m: [50.0, 200.0],
            g_max_dbi: ant.g_max_dbi,
            g_rx_dbi: ant.g_rx_dbi,
            g_flat_dbi: ant.g_flat_dbi,
            bessel_pattern: ant.use_bessel_pattern,
            ris_gu_rician_k: None,
            sat_ris_rician_k: None,
            doppler_zeta: None,
            fixed_phase_seed: None,
            max_rounds: drv.max_rounds,
            ee_rel_tol: drv.ee_rel_tol,
            dinkelbach_tol: drv.power_tol.dinkelbach_tol,
            kkt_tol: drv.power_tol.kkt_tol,
            psd_gap_tol: drv.beam_tol.psd.gap_tol,
            ccp_tol: drv.beam_tol.ccp_tol,
            randomizations: drv.beam_tol.n_randomizations,
            sweep_power_dbm: (10..=25).map(|k| 2.0 * k as f64).collect(),
            sweep_elements: vec![16, 32, 64, 128],
            // 10 b/s, then 2 to 10 kb/s over the 20 MHz band
            sweep_qos: vec![5e-7, 1e-4, 2e-4, 3e-4, 4e-4, 5e-4],
            convergence_elements: vec![32, 64],
        }
    }
}

pub fn dbm_to_watts(dbm: f64) -> f64 {
    db_to_linear(dbm) / 1e3
}

impl SimConfig {
    pub fn from_toml_str(s: &str) -> Result<Self, HarnessError> {
        let cfg: SimConfig = toml::from_str(s).map_err(|e| HarnessError::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Config(m.to_string()));
        if self.trials == 0 {
            return bad("trials must be at least 1");
        }
        if self.frameworks.is_empty() {
            return bad("frameworks must not be empty");
        }
        if self.elements == 0 {
            return bad("elements must be at least 1");
        }
        if !(self.p_max_dbm.is_finite() && self.p_circuit_w.is_finite() && self.p_circuit_w >= 0.0) {
            return bad("power settings must be finite and p_circuit_w >= 0");
        }
        if !(self.qos_spectral_efficiency.is_finite() && self.qos_spectral_efficiency >= 0.0) {
            return bad("qos_spectral_efficiency must be >= 0");
        }
        let [lo, hi] = self.d_ris_gu_m;
        if !(lo > 0.0 && hi >= lo && hi.is_finite()) {
            return bad("d_ris_gu_m must be an increasing positive range");
        }
        if self.max_rounds == 0 {
            return bad("max_rounds must be at least 1");
        }
        let tols = [self.ee_rel_tol, self.dinkelbach_tol, self.kkt_tol, self.psd_gap_tol, self.ccp_tol];
        if tols.iter().any(|t| !(t.is_finite() && *t > 0.0)) {
            return bad("tolerances must be positive");
        }
        if self.sweep_power_dbm.is_empty()
            || self.sweep_elements.is_empty()
            || self.sweep_qos.is_empty()
            || self.convergence_elements.is_empty()
        {
            return bad("sweep lists must not be empty");
        }
        if self.sweep_elements.iter().chain(&self.convergence_elements).any(|m| *m == 0) {
            return bad("element counts must be at least 1");
        }
        if self.sweep_qos.iter().any(|r| !(r.is_finite() && *r >= 0.0)) {
            return bad("sweep_qos values must be >= 0");
        }
        if self.sweep_power_dbm.iter().any(|p| !p.is_finite()) {
            return bad("sweep_power_dbm values must be finite");
        }
        self.geometry([lo, lo]).validate()?;
        self.antennas().validate()?;
        self.fading().validate()?;
        Ok(())
    }

    pub fn geometry(&self, d_ris_gu_m: [f64; 2]) -> GeometryConfig {
        let h = self.sat_height_km * 1e3;
        GeometryConfig {
            sat_height_m: h,
            d_sat_gu_m: [h, h],
            d_sat_ris_m: h,
            d_ris_gu_m,
            carrier_freq_hz: self.carrier_freq_ghz * 1e9,
            bandwidth_hz: self.bandwidth_mhz * 1e6,
            beam_offset_rad: self.beam_offset_deg.map(f64::to_radians),
            ris_offset_rad: self.ris_offset_deg.to_radians(),
            theta_3db_rad: self.theta_3db_deg.to_radians(),
            pathloss_exponent: self.pathloss_exponent,
            noise_density_dbm_per_hz: self.noise_density_dbm_hz,
        }
    }

    pub fn antennas(&self) -> AntennaConfig {
        AntennaConfig {
            g_max_dbi: self.g_max_dbi,
            g_rx_dbi: self.g_rx_dbi,
            g_flat_dbi: self.g_flat_dbi,
            use_bessel_pattern: self.bessel_pattern,
        }
    }

    pub fn fading(&self) -> FadingConfig {
        FadingConfig {
            ris_gu: self.ris_gu_rician_k.map_or(RisGuFading::Rayleigh, RisGuFading::Rician),
            sat_ris: self.sat_ris_rician_k.map_or(SatRisFading::LineOfSight, SatRisFading::Rician),
            doppler: self.doppler_zeta.map_or(DopplerMode::RandomUniform, DopplerMode::Fixed),
        }
    }

    pub fn driver(&self) -> DriverConfig {
        let mut d = DriverConfig {
            qos: QosSpec::SpectralEfficiency(self.qos_spectral_efficiency),
            budget: PowerBudget {
                p_max: dbm_to_watts(self.p_max_dbm),
                p_circuit: self.p_circuit_w,
            },
            max_rounds: self.max_rounds,
            ee_rel_tol: self.ee_rel_tol,
            bandwidth_hz: self.bandwidth_mhz * 1e6,
            fixed_phase: self.fixed_phase_seed.map_or(FixedPhase::Zero, FixedPhase::Random),
            ..DriverConfig::default()
        };
        d.power_tol.dinkelbach_tol = self.dinkelbach_tol;
        d.power_tol.kkt_tol = self.kkt_tol;
        d.beam_tol.psd.gap_tol = self.psd_gap_tol;
        d.beam_tol.ccp_tol = self.ccp_tol;
        d.beam_tol.n_randomizations = self.randomizations;
        d
    }

    /// Channel for trial `trial` with `elements` RIS elements. Depends only on
    /// the root seed and the trial index, so every sweep point of a trial
    /// sees the same propagation environment.
    pub fn trial_channel(&self, trial: usize, elements: usize) -> Result<ChannelRealization, HarnessError> {
        let seed = trial_seed(self.root_seed, trial);
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xD1B5_4A32_D192_ED03);
        let [lo, hi] = self.d_ris_gu_m;
        let mut draw = || if hi > lo { rng.random_range(lo..hi) } else { lo };
        let d = [draw(), draw()];
        Ok(realize_channels(seed, &self.geometry(d), &self.antennas(), &self.fading(), elements)?)
    }
}

const GOLDEN_GAMMA: u64 = 0x9E37_79B9_7F4A_7C15;

/// SplitMix64 finalizer.
pub fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Seed of trial `t`: the `(t+1)`-th output of a SplitMix64 stream started
/// at `root`.
pub fn trial_seed(root: u64, t: usize) -> u64 {
    splitmix64(root.wrapping_add((t as u64).wrapping_add(1).wrapping_mul(GOLDEN_GAMMA)))
}

#[derive(Debug, Clone, PartialEq)]
pub enum Sweep {
    /// Single operating point; `sweep_value` holds the element count.
    None,
    PowerDbm(Vec<f64>),
    Elements(Vec<usize>),
    /// Minimum spectral efficiency per user, b/s/Hz.
    Qos(Vec<f64>),
}

impl Sweep {
    fn points(&self, cfg: &SimConfig) -> Vec<f64> {
        match self {
            Sweep::None => vec![cfg.elements as f64],
            Sweep::PowerDbm(v) | Sweep::Qos(v) => v.clone(),
            Sweep::Elements(v) => v.iter().map(|m| *m as f64).collect(),
        }
    }

    /// Driver config and element count at one sweep point.
    fn apply(&self, cfg: &SimConfig, value: f64) -> (DriverConfig, usize) {
        let mut d = cfg.driver();
        let mut m = cfg.elements;
        match self {
            Sweep::None => {}
            Sweep::PowerDbm(_) => d.budget.p_max = dbm_to_watts(value),
            Sweep::Elements(_) => m = value as usize,
            Sweep::Qos(_) => d.qos = QosSpec::SpectralEfficiency(value),
        }
        (d, m)
    }
}

/// One line of the per-trial CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRow {
    pub sweep_value: f64,
    pub framework: FrameworkKind,
    pub trial: usize,
    pub ee: f64,
    pub rounds: usize,
    pub feasible: bool,
    pub seed: u64,
}

/// One line of the aggregate CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub sweep_value: f64,
    pub framework: FrameworkKind,
    /// `None` when no trial in the group was feasible.
    pub mean_ee: Option<f64>,
    pub ee_stddev: Option<f64>,
    pub mean_rounds: f64,
    pub feasibility_rate: f64,
}

pub const TRIALS_HEADER: [&str; 7] = ["sweep_value", "framework", "trial", "ee", "rounds", "feasible", "seed"];
pub const AGGREGATE_HEADER: [&str; 6] =
    ["sweep_value", "framework", "mean_ee", "ee_stddev", "mean_rounds", "feasibility_rate"];
/// Written in place of a mean or deviation over an empty feasible set.
pub const ABSENT: &str = "NA";

fn pool(workers: usize) -> Result<rayon::ThreadPool, HarnessError> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))
}

/// Runs every framework on every (sweep point, trial) pair. Rows come back
/// sorted by sweep point, framework, then trial.
pub fn run_trials(cfg: &SimConfig, sweep: &Sweep) -> Result<Vec<TrialRow>, HarnessError> {
    cfg.validate()?;
    let points = sweep.points(cfg);
    let jobs: Vec<(usize, usize)> = (0..points.len())
        .flat_map(|p| (0..cfg.trials).map(move |t| (p, t)))
        .collect();
    let results: Vec<Result<Vec<(usize, TrialRow)>, HarnessError>> = pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(p, t)| {
                let value = points[p];
                let (driver, m) = sweep.apply(cfg, value);
                let channel = cfg.trial_channel(t, m)?;
                Ok(cfg
                    .frameworks
                    .iter()
                    .map(|&kind| {
                        let row = match run_framework(kind, &channel, &driver) {
                            Ok(r) => TrialRow {
                                sweep_value: value,
                                framework: kind,
                                trial: t,
                                ee: r.ee(),
                                rounds: r.rounds,
                                feasible: r.feasible,
                                seed: trial_seed(cfg.root_seed, t),
                            },
                            Err(_) => TrialRow {
                                sweep_value: value,
                                framework: kind,
                                trial: t,
                                ee: f64::NAN,
                                rounds: 0,
                                feasible: false,
                                seed: trial_seed(cfg.root_seed, t),
                            },
                        };
                        (p, row)
                    })
                    .collect())
            })
            .collect()
    });
    let mut rows = Vec::with_capacity(jobs.len() * cfg.frameworks.len());
    for r in results {
        rows.extend(r?);
    }
    let fw_rank = |k: FrameworkKind| cfg.frameworks.iter().position(|f| *f == k).unwrap_or(usize::MAX);
    rows.sort_by_key(|(p, r)| (*p, fw_rank(r.framework), r.trial));
    Ok(rows.into_iter().map(|(_, r)| r).collect())
}

/// Groups rows by (sweep value, framework) in order of first appearance.
/// Mean and sample standard deviation (`n - 1` denominator; zero for a
/// single trial) are taken over feasible trials only.
pub fn aggregate(rows: &[TrialRow]) -> Vec<SweepRow> {
    let mut order: Vec<(u64, FrameworkKind)> = Vec::new();
    let mut groups: HashMap<(u64, FrameworkKind), Vec<&TrialRow>> = HashMap::new();
    for r in rows {
        let key = (r.sweep_value.to_bits(), r.framework);
        groups
            .entry(key)
            .or_insert_with(|| {
                order.push(key);
                Vec::new()
            })
            .push(r);
    }
    order
        .into_iter()
        .map(|key| {
            let g = &groups[&key];
            let ok: Vec<f64> = g.iter().filter(|r| r.feasible).map(|r| r.ee).collect();
            let n = ok.len() as f64;
            let (mean, sd) = if ok.is_empty() {
                (None, None)
            } else {
                let mean = ok.iter().sum::<f64>() / n;
                let sd = if ok.len() > 1 {
                    (ok.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
                } else {
                    0.0
                };
                (Some(mean), Some(sd))
            };
            SweepRow {
                sweep_value: f64::from_bits(key.0),
                framework: key.1,
                mean_ee: mean,
                ee_stddev: sd,
                mean_rounds: g.iter().map(|r| r.rounds as f64).sum::<f64>() / g.len() as f64,
                feasibility_rate: ok.len() as f64 / g.len() as f64,
            }
        })
        .collect()
}

fn opt(x: Option<f64>) -> String {
    x.map_or_else(|| ABSENT.to_string(), |v| v.to_string())
}

pub fn write_trials(path: &Path, rows: &[TrialRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(TRIALS_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.framework.to_string(),
            r.trial.to_string(),
            r.ee.to_string(),
            r.rounds.to_string(),
            r.feasible.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate(path: &Path, rows: &[SweepRow]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(AGGREGATE_HEADER)?;
    for r in rows {
        w.write_record([
            r.sweep_value.to_string(),
            r.framework.to_string(),
            opt(r.mean_ee),
            opt(r.ee_stddev),
            r.mean_rounds.to_string(),
            r.feasibility_rate.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Per-round EE of one Proposed run.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTrace {
    pub elements: usize,
    pub trial: usize,
    pub ee: Vec<f64>,
    pub converged: bool,
    pub rounds: usize,
}

pub const CONVERGENCE_HEADER: [&str; 5] = ["elements", "trial", "iteration", "ee", "converged"];

/// Runs the full alternating optimization for each element count in
/// `cfg.convergence_elements` and keeps the EE after every round.
pub fn run_convergence(cfg: &SimConfig) -> Result<Vec<ConvergenceTrace>, HarnessError> {
    cfg.validate()?;
    let driver = cfg.driver();
    let jobs: Vec<(usize, usize)> = cfg
        .convergence_elements
        .iter()
        .flat_map(|&m| (0..cfg.trials).map(move |t| (m, t)))
        .collect();
    pool(cfg.workers)?.install(|| {
        jobs.par_iter()
            .map(|&(m, t)| {
                let channel = cfg.trial_channel(t, m)?;
                Ok(match run_framework(FrameworkKind::Proposed, &channel, &driver) {
                    Ok(r) => ConvergenceTrace {
                        elements: m,
                        trial: t,
                        ee: r.ee_trace,
                        converged: r.converged,
                        rounds: r.rounds,
                    },
                    Err(_) => ConvergenceTrace {
                        elements: m,
                        trial: t,
                        ee: Vec::new(),
                        converged: false,
                        rounds: 0,
                    },
                })
            })
            .collect()
    })
}

pub fn write_convergence(path: &Path, traces: &[ConvergenceTrace]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(CONVERGENCE_HEADER)?;
    for tr in traces {
        for (i, ee) in tr.ee.iter().enumerate() {
            w.write_record([
                tr.elements.to_string(),
                tr.trial.to_string(),
                i.to_string(),
                ee.to_string(),
                tr.converged.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Creates `dir` if needed and checks that a file can be written in it.
pub fn prepare_out_dir(dir: &Path) -> Result<PathBuf, HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".write_probe");
    fs::write(&probe, b"").map_err(|e| HarnessError::Io(format!("cannot write to {}: {e}", dir.display())))?;
    let _ = fs::remove_file(probe);
    Ok(dir.to_path_buf())
}

pub fn median(values: &mut [f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    values.sort_by(f64::total_cmp);
    let n = values.len();
    Some(if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    })
}
