//! Metropolis acceptance with geometric cooling.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::SolverRng;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnnealSchedule {
    pub temperature: f64,
    pub cooling: f64,
    pub rng_seed: u64,
}

impl AnnealSchedule {
    pub fn new(temperature: f64, cooling: f64, rng_seed: u64) -> Result<Self> {
        if !(temperature > 0.0 && temperature.is_finite()) {
            return Err(Error::invalid(
                "initial_temperature",
                format!("must be positive, got {temperature}"),
            ));
        }
        if !(cooling > 0.0 && cooling < 1.0) {
            return Err(Error::invalid("cooling", format!("must lie in (0, 1), got {cooling}")));
        }
        Ok(Self {
            temperature,
            cooling,
            rng_seed,
        })
    }

    pub fn rng(&self) -> SolverRng {
        rand::SeedableRng::seed_from_u64(self.rng_seed)
    }
}

/// 1 on strict improvement, `exp((τ_new - τ_old) / T)` otherwise.
pub fn acceptance_probability(tau_new: f64, tau_old: f64, temperature: f64) -> f64 {
    if tau_new > tau_old {
        1.0
    } else {
        ((tau_new - tau_old) / temperature).exp()
    }
}

/// Draws `u ~ U[0, 1)` and accepts unless `p < u`.
pub fn accept(p: f64, rng: &mut SolverRng) -> bool {
    let u: f64 = rng.gen();
    !(p < u)
}

pub fn cool(schedule: &AnnealSchedule) -> AnnealSchedule {
    AnnealSchedule {
        temperature: schedule.temperature * schedule.cooling,
        ..*schedule
    }
}
