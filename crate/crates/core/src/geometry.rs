//! Line-of-sight air-to-ground channel model.
//!
//! The transmit array is a linear array whose axis is the world x-axis, so the
//! direction cosine towards a ground user reduces to `(x_user - x_uav) / d`.
//! Everything here is a pure function of its arguments.

use std::f64::consts::PI;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Gain assigned to exact nulls when converting to decibels.
pub const DEFAULT_GAIN_FLOOR_DB: f64 = -60.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Position3D {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Position3D {
    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn horizontal_distance(&self, other: &Position3D) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum User {
    Bob,
    Eve,
}

/// Static description of the scenario: ground users, altitude, carrier and
/// link-budget constants.
///
/// `noise_eve` may be `f64::INFINITY`, which models a scenario without an
/// eavesdropper (its SNR is identically zero).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioGeometry {
    pub bob: Position3D,
    pub eve: Position3D,
    pub altitude: f64,
    pub wavelength: f64,
    /// Reference channel power gain at 1 m.
    pub beta0: f64,
    /// Path-loss exponent.
    pub alpha: f64,
    /// Noise power at Bob in watts.
    pub noise_bob: f64,
    /// Noise power at Eve in watts.
    pub noise_eve: f64,
    /// Transmit power budget in watts.
    pub p_max: f64,
}

/// Wavelength of the 28 GHz carrier used throughout the experiments.
pub const DEFAULT_WAVELENGTH: f64 = 0.0107;

/// Free-space reference gain `(λ / 4π)²` at 1 m.
pub fn free_space_beta0(wavelength: f64) -> f64 {
    (wavelength / (4.0 * PI)).powi(2)
}

/// Converts a power in dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

pub fn watts_to_dbm(watts: f64) -> f64 {
    10.0 * watts.log10() + 30.0
}

impl ScenarioGeometry {
    /// Bob at the origin, Eve at (400, 0, 0), 28 GHz carrier, free-space
    /// reference gain, -90 dBm noise at both receivers and a 1 W budget.
    pub fn reference(altitude: f64) -> Self {
        Self {
            bob: Position3D::new(0.0, 0.0, 0.0),
            eve: Position3D::new(400.0, 0.0, 0.0),
            altitude,
            wavelength: DEFAULT_WAVELENGTH,
            beta0: free_space_beta0(DEFAULT_WAVELENGTH),
            alpha: 2.0,
            noise_bob: dbm_to_watts(-90.0),
            noise_eve: dbm_to_watts(-90.0),
            p_max: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive and finite, got {v}")))
            }
        };
        positive("altitude", self.altitude)?;
        positive("wavelength", self.wavelength)?;
        positive("beta0", self.beta0)?;
        positive("noise_bob", self.noise_bob)?;
        positive("p_max", self.p_max)?;
        if !(self.noise_eve > 0.0) {
            return Err(Error::invalid("noise_eve", "must be positive"));
        }
        if !(self.alpha >= 2.0 && self.alpha.is_finite()) {
            return Err(Error::invalid("alpha", format!("must be >= 2, got {}", self.alpha)));
        }
        for (name, p) in [("bob", &self.bob), ("eve", &self.eve)] {
            if !p.is_finite() || p.z != 0.0 {
                return Err(Error::invalid(
                    if name == "bob" { "bob" } else { "eve" },
                    "ground users must have finite coordinates and z = 0",
                ));
            }
        }
        Ok(())
    }

    pub fn user(&self, user: User) -> Position3D {
        match user {
            User::Bob => self.bob,
            User::Eve => self.eve,
        }
    }

    pub fn noise(&self, user: User) -> f64 {
        match user {
            User::Bob => self.noise_bob,
            User::Eve => self.noise_eve,
        }
    }

    /// UAV position at horizontal coordinates `(x, y)` and the scenario altitude.
    pub fn uav_at(&self, x: f64, y: f64) -> Position3D {
        Position3D::new(x, y, self.altitude)
    }

    /// Effective SNR per unit beam response, `β0 / (d^α σ²)`.
    pub fn snr_scale(&self, uav: &Position3D, user: User) -> f64 {
        let d = distance(uav, &self.user(user));
        self.beta0 / (d.powf(self.alpha) * self.noise(user))
    }
}

pub fn distance(uav: &Position3D, user: &Position3D) -> f64 {
    let dx = user.x - uav.x;
    let dy = user.y - uav.y;
    let dz = user.z - uav.z;
    (dx * dx + dy * dy + dz * dz).sqrt()
}

/// Cosine of the angle between the array axis (world x) and the line of sight.
pub fn direction_cosine(uav: &Position3D, user: &Position3D) -> f64 {
    let d = distance(uav, user);
    ((user.x - uav.x) / d).clamp(-1.0, 1.0)
}

/// Unit-modulus array response of a linear array.
#[derive(Debug, Clone, PartialEq)]
pub struct SteeringVector(Vec<Complex64>);

impl SteeringVector {
    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

pub fn steering_vector(antenna_x: &[f64], cos_alpha: f64, wavelength: f64) -> Result<SteeringVector> {
    if !(wavelength > 0.0) {
        return Err(Error::invalid(
            "wavelength",
            format!("must be positive, got {wavelength}"),
        ));
    }
    if antenna_x.is_empty() {
        return Err(Error::invalid("antenna_x", "at least one antenna is required"));
    }
    let k = 2.0 * PI / wavelength * cos_alpha;
    Ok(SteeringVector(
        antenna_x.iter().map(|&x| Complex64::from_polar(1.0, k * x)).collect(),
    ))
}

/// Free-space path gain `β0 / d^α`.
pub fn path_gain(beta0: f64, d: f64, alpha: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(Error::invalid("d", format!("distance must be positive, got {d}")));
    }
    Ok(beta0 / d.powf(alpha))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChannelVector(Vec<Complex64>);

impl ChannelVector {
    pub fn from_steering(steering: &SteeringVector, gain: f64) -> Self {
        let amp = gain.sqrt();
        Self(steering.entries().iter().map(|a| a * amp).collect())
    }

    pub fn entries(&self) -> &[Complex64] {
        &self.0
    }
}

pub fn channel_vector(
    geometry: &ScenarioGeometry,
    antenna_x: &[f64],
    uav: &Position3D,
    user: User,
) -> Result<ChannelVector> {
    let target = geometry.user(user);
    let cos = direction_cosine(uav, &target);
    let a = steering_vector(antenna_x, cos, geometry.wavelength)?;
    let g = path_gain(geometry.beta0, distance(uav, &target), geometry.alpha)?;
    Ok(ChannelVector::from_steering(&a, g))
}

/// Inner product `a^H w`.
pub fn beam_response(a: &[Complex64], w: &[Complex64]) -> Complex64 {
    a.iter().zip(w).map(|(a, w)| a.conj() * w).sum()
}

pub fn snr(h: &ChannelVector, w: &[Complex64], noise: f64) -> Result<f64> {
    if h.entries().len() != w.len() {
        return Err(Error::DimensionMismatch {
            expected: h.entries().len(),
            got: w.len(),
        });
    }
    if !(noise > 0.0) {
        return Err(Error::invalid("noise", "must be positive"));
    }
    Ok(beam_response(h.entries(), w).norm_sqr() / noise)
}

/// `[log2(1 + γ_b) - log2(1 + γ_e)]^+`.
pub fn secrecy_rate(gamma_b: f64, gamma_e: f64) -> f64 {
    raw_secrecy_rate(gamma_b, gamma_e).max(0.0)
}

/// Rate difference before clipping; negative when Eve is better served.
pub fn raw_secrecy_rate(gamma_b: f64, gamma_e: f64) -> f64 {
    (1.0 + gamma_b).log2() - (1.0 + gamma_e).log2()
}

pub fn average_secrecy_rate(rates: &[f64]) -> Result<f64> {
    if rates.is_empty() {
        return Err(Error::invalid("rates", "at least one slot is required"));
    }
    Ok(rates.iter().sum::<f64>() / rates.len() as f64)
}

/// `10 log10 |a(cos α)^H w|²` over a grid of direction cosines. Exact nulls
/// (and anything below the floor) are reported as `floor_db`.
pub fn beam_gain_grid(
    w: &[Complex64],
    antenna_x: &[f64],
    wavelength: f64,
    cos_alpha_grid: &[f64],
    floor_db: f64,
) -> Result<Vec<f64>> {
    if cos_alpha_grid.is_empty() {
        return Err(Error::invalid("cos_alpha_grid", "grid must not be empty"));
    }
    if w.len() != antenna_x.len() {
        return Err(Error::DimensionMismatch {
            expected: antenna_x.len(),
            got: w.len(),
        });
    }
    cos_alpha_grid
        .iter()
        .map(|&c| {
            let a = steering_vector(antenna_x, c, wavelength)?;
            Ok(to_db(beam_response(a.entries(), w).norm_sqr(), floor_db))
        })
        .collect()
}

pub(crate) fn to_db(power: f64, floor_db: f64) -> f64 {
    let db = 10.0 * power.log10();
    if db.is_nan() || db < floor_db {
        floor_db
    } else {
        db
    }
}
