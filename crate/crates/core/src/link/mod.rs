//! Satellite, RIS and ground-user channel generation.
//!
//! Direct satellite-to-user links follow a free-space budget with a
//! tapered-aperture (Bessel) beam pattern and a Doppler phase rotation.
//! The RIS cascade is a satellite-to-RIS vector `g` and per-user RIS-to-user
//! vectors `f = f_hat * d^(-beta/2)`.

pub mod bessel;

use std::f64::consts::PI;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use bessel::{bessel_j, bessel_j_over_power};

/// Speed of light in m/s.
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Beam-pattern argument constant: places the -3 dB point at `theta_3dB`.
pub const BEAM_PATTERN_CONSTANT: f64 = 2.07123;

#[derive(Debug, Error, PartialEq)]
pub enum LinkError {
    #[error("invalid geometry: {0}")]
    Geometry(String),
    #[error("invalid antenna configuration: {0}")]
    Antenna(String),
    #[error("invalid fading configuration: {0}")]
    Fading(String),
    #[error("RIS must have at least one element")]
    NoElements,
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

/// Static snapshot of the link geometry. Angles in radians.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometryConfig {
    pub sat_height_m: f64,
    /// Slant range satellite to each ground user.
    pub d_sat_gu_m: [f64; 2],
    pub d_sat_ris_m: f64,
    pub d_ris_gu_m: [f64; 2],
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    /// Angle between each user and the beam centre.
    pub beam_offset_rad: [f64; 2],
    /// Angle between the RIS and the beam centre.
    pub ris_offset_rad: f64,
    pub theta_3db_rad: f64,
    pub pathloss_exponent: f64,
    pub noise_density_dbm_per_hz: f64,
}

impl Default for GeometryConfig {
    fn default() -> Self {
        let height = 554.8e3;
        Self {
            sat_height_m: height,
            d_sat_gu_m: [height, height],
            d_sat_ris_m: height,
            d_ris_gu_m: [100.0, 100.0],
            carrier_freq_hz: 18.7e9,
            bandwidth_hz: 20e6,
            beam_offset_rad: [0.90f64.to_radians(), 0.96f64.to_radians()],
            ris_offset_rad: 0.44f64.to_radians(),
            theta_3db_rad: 0.2f64.to_radians(),
            pathloss_exponent: 2.5,
            noise_density_dbm_per_hz: -170.0,
        }
    }
}

impl GeometryConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let distances = [
            self.sat_height_m,
            self.d_sat_gu_m[0],
            self.d_sat_gu_m[1],
            self.d_sat_ris_m,
            self.d_ris_gu_m[0],
            self.d_ris_gu_m[1],
        ];
        if distances.iter().any(|d| !(d.is_finite() && *d > 0.0)) {
            return Err(LinkError::Geometry("all distances must be positive".into()));
        }
        if self
            .beam_offset_rad
            .iter()
            .chain(std::iter::once(&self.ris_offset_rad))
            .any(|a| !(a.is_finite() && *a >= 0.0 && *a < PI / 2.0))
        {
            return Err(LinkError::Geometry(
                "beam offset angles must lie in [0, pi/2)".into(),
            ));
        }
        if !(self.theta_3db_rad > 0.0 && self.theta_3db_rad < PI / 2.0) {
            return Err(LinkError::Geometry("theta_3dB must lie in (0, pi/2)".into()));
        }
        if !(self.bandwidth_hz.is_finite() && self.bandwidth_hz > 0.0) {
            return Err(LinkError::Geometry("bandwidth must be positive".into()));
        }
        if !(self.carrier_freq_hz.is_finite() && self.carrier_freq_hz > 0.0) {
            return Err(LinkError::Geometry("carrier frequency must be positive".into()));
        }
        if !(self.pathloss_exponent.is_finite() && self.pathloss_exponent >= 2.0) {
            return Err(LinkError::Geometry("pathloss exponent must be >= 2".into()));
        }
        if !self.noise_density_dbm_per_hz.is_finite() {
            return Err(LinkError::Geometry("noise density must be finite".into()));
        }
        Ok(())
    }

    pub fn noise_var(&self) -> f64 {
        noise_variance(self.noise_density_dbm_per_hz, self.bandwidth_hz)
    }
}

/// Transmit and receive antenna gains in dBi.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AntennaConfig {
    /// Peak gain at the beam centre.
    pub g_max_dbi: f64,
    /// Receive gain of ground users and RIS elements.
    pub g_rx_dbi: f64,
    /// Transmit gain used when the beam pattern is disabled.
    pub g_flat_dbi: f64,
    pub use_bessel_pattern: bool,
}

impl Default for AntennaConfig {
    fn default() -> Self {
        Self {
            g_max_dbi: 52.1,
            g_rx_dbi: 3.5,
            g_flat_dbi: 20.0,
            use_bessel_pattern: true,
        }
    }
}

impl AntennaConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        for (name, v) in [
            ("g_max_dbi", self.g_max_dbi),
            ("g_rx_dbi", self.g_rx_dbi),
            ("g_flat_dbi", self.g_flat_dbi),
        ] {
            if !v.is_finite() {
                return Err(LinkError::Antenna(format!("{name} must be finite")));
            }
        }
        Ok(())
    }

    /// Linear transmit gain toward a point `theta` off the beam centre.
    pub fn transmit_gain(&self, theta: f64, theta_3db: f64) -> f64 {
        if self.use_bessel_pattern {
            beam_gain(theta, theta_3db, db_to_linear(self.g_max_dbi))
        } else {
            db_to_linear(self.g_flat_dbi)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RisGuFading {
    Rayleigh,
    /// Rician with linear K factor.
    Rician(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum SatRisFading {
    /// Deterministic line of sight with a random global phase.
    LineOfSight,
    Rician(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DopplerMode {
    /// `zeta` uniform on `[0, 2)`; the phase rotation is `exp(j*pi*zeta)`.
    RandomUniform,
    Fixed(f64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FadingConfig {
    pub ris_gu: RisGuFading,
    pub sat_ris: SatRisFading,
    pub doppler: DopplerMode,
}

impl Default for FadingConfig {
    fn default() -> Self {
        Self {
            ris_gu: RisGuFading::Rayleigh,
            sat_ris: SatRisFading::LineOfSight,
            doppler: DopplerMode::RandomUniform,
        }
    }
}

impl FadingConfig {
    pub fn validate(&self) -> Result<(), LinkError> {
        let ks = [
            match self.ris_gu {
                RisGuFading::Rician(k) => Some(k),
                RisGuFading::Rayleigh => None,
            },
            match self.sat_ris {
                SatRisFading::Rician(k) => Some(k),
                SatRisFading::LineOfSight => None,
            },
        ];
        if ks.iter().flatten().any(|k| !(k.is_finite() && *k >= 0.0)) {
            return Err(LinkError::Fading("Rician K factor must be >= 0".into()));
        }
        if let DopplerMode::Fixed(z) = self.doppler {
            if !z.is_finite() {
                return Err(LinkError::Fading("Doppler value must be finite".into()));
            }
        }
        Ok(())
    }
}

/// One channel snapshot. Index 0 is the strong (SIC-decoding) user.
#[derive(Debug, Clone, PartialEq)]
pub struct ChannelRealization {
    pub h_direct: [Complex64; 2],
    pub g_sat_ris: Vec<Complex64>,
    pub f_ris_gu: [Vec<Complex64>; 2],
    pub noise_var: f64,
    /// `user_order[k]` is the physical user placed at position `k`.
    pub user_order: [usize; 2],
}

impl ChannelRealization {
    pub fn elements(&self) -> usize {
        self.g_sat_ris.len()
    }

    /// Copy with every RIS coefficient zeroed (no-RIS reference system).
    pub fn without_ris(&self) -> Self {
        let zero = vec![Complex64::new(0.0, 0.0); self.elements()];
        Self {
            g_sat_ris: zero.clone(),
            f_ris_gu: [zero.clone(), zero],
            ..self.clone()
        }
    }
}

/// Tapered-aperture beam gain `G_max [J1(v)/(2v) + 36 J3(v)/v^3]^2`
/// with `v = 2.07123 sin(theta) / sin(theta_3dB)`.
pub fn beam_gain(theta: f64, theta_3db: f64, g_max_linear: f64) -> f64 {
    let v = BEAM_PATTERN_CONSTANT * theta.sin() / theta_3db.sin();
    let bracket = 0.5 * bessel_j_over_power(1, v) + 36.0 * bessel_j_over_power(3, v);
    g_max_linear * bracket * bracket
}

/// Free-space amplitude `sqrt(g_tx g_rx (c / (4 pi f d))^2)`.
pub fn free_space_amplitude(d: f64, f_c: f64, g_tx_linear: f64, g_rx_linear: f64) -> f64 {
    (g_tx_linear * g_rx_linear).sqrt() * SPEED_OF_LIGHT / (4.0 * PI * f_c * d)
}

/// Thermal noise power in watts over `bandwidth` for a density in dBm/Hz.
pub fn noise_variance(n0_dbm_per_hz: f64, bandwidth: f64) -> f64 {
    10f64.powf((n0_dbm_per_hz + 10.0 * bandwidth.log10() - 30.0) / 10.0)
}

fn complex_normal(rng: &mut ChaCha8Rng) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

fn unit_phase(rng: &mut ChaCha8Rng) -> Complex64 {
    Complex64::from_polar(1.0, rng.random_range(0.0..2.0 * PI))
}

fn rician(k: f64, los: Complex64, scatter: Complex64) -> Complex64 {
    los * (k / (k + 1.0)).sqrt() + scatter * (1.0 / (k + 1.0)).sqrt()
}

/// Draws a channel snapshot. Pure in `(seed, configs, elements)`.
///
/// Draw order is fixed: Doppler phases, LoS phases, then six normals per RIS
/// element regardless of the fading model. A realization with `M` elements
/// is therefore a prefix of the one with `M' > M` elements, and the direct
/// links never depend on `M`.
pub fn realize_channels(
    seed: u64,
    geometry: &GeometryConfig,
    antennas: &AntennaConfig,
    fading: &FadingConfig,
    elements: usize,
) -> Result<ChannelRealization, LinkError> {
    if elements == 0 {
        return Err(LinkError::NoElements);
    }
    geometry.validate()?;
    antennas.validate()?;
    fading.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let g_rx = db_to_linear(antennas.g_rx_dbi);
    let fc = geometry.carrier_freq_hz;

    let mut h = [Complex64::new(0.0, 0.0); 2];
    for (u, slot) in h.iter_mut().enumerate() {
        let zeta = match fading.doppler {
            DopplerMode::RandomUniform => rng.random_range(0.0..2.0),
            DopplerMode::Fixed(z) => z,
        };
        let g_tx = antennas.transmit_gain(geometry.beam_offset_rad[u], geometry.theta_3db_rad);
        let amp = free_space_amplitude(geometry.d_sat_gu_m[u], fc, g_tx, g_rx);
        *slot = Complex64::from_polar(amp, PI * zeta);
    }

    let g_tx_ris = antennas.transmit_gain(geometry.ris_offset_rad, geometry.theta_3db_rad);
    let g_amp = free_space_amplitude(geometry.d_sat_ris_m, fc, g_tx_ris, g_rx);
    let g_los = unit_phase(&mut rng);
    let f_los = [unit_phase(&mut rng), unit_phase(&mut rng)];
    let f_scale = [
        geometry.d_ris_gu_m[0].powf(-geometry.pathloss_exponent / 2.0),
        geometry.d_ris_gu_m[1].powf(-geometry.pathloss_exponent / 2.0),
    ];

    let mut g = Vec::with_capacity(elements);
    let mut f = [Vec::with_capacity(elements), Vec::with_capacity(elements)];
    for _ in 0..elements {
        let g_scatter = complex_normal(&mut rng);
        let f_scatter = [complex_normal(&mut rng), complex_normal(&mut rng)];
        let g_hat = match fading.sat_ris {
            SatRisFading::LineOfSight => g_los,
            SatRisFading::Rician(k) => rician(k, g_los, g_scatter),
        };
        g.push(g_hat * g_amp);
        for u in 0..2 {
            let f_hat = match fading.ris_gu {
                RisGuFading::Rayleigh => f_scatter[u],
                RisGuFading::Rician(k) => rician(k, f_los[u], f_scatter[u]),
            };
            f[u].push(f_hat * f_scale[u]);
        }
    }

    let [f0, f1] = f;
    let mut realization = ChannelRealization {
        h_direct: h,
        g_sat_ris: g,
        f_ris_gu: [f0, f1],
        noise_var: geometry.noise_var(),
        user_order: [0, 1],
    };
    if realization.h_direct[1].norm() > realization.h_direct[0].norm() {
        realization.h_direct.swap(0, 1);
        realization.f_ris_gu.swap(0, 1);
        realization.user_order = [1, 0];
    }
    Ok(realization)
}
