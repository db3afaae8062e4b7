//! Gyromagnetic conversions between fields and precession frequencies.

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// γ/2π of ¹H in MHz/G.
pub const PROTON_GAMMA: f64 = 4.2577e-3;
/// γ/2π of the electron in MHz/G.
pub const ELECTRON_GAMMA: f64 = 2.8025;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Species {
    Proton,
    Electron,
    /// γ/2π in MHz/G.
    Custom(f64),
}

impl Species {
    /// γ/2π in MHz/G.
    pub fn gamma(&self) -> Result<f64> {
        match *self {
            Species::Proton => Ok(PROTON_GAMMA),
            Species::Electron => Ok(ELECTRON_GAMMA),
            Species::Custom(g) if g > 0.0 && g.is_finite() => Ok(g),
            Species::Custom(g) => Err(Error::domain(format!("gyromagnetic ratio must be > 0, got {g}"))),
        }
    }
}

/// `γ/2π · B0` in MHz, with `B0` in G.
pub fn larmor_frequency(b0: f64, species: Species) -> Result<f64> {
    if !(b0 >= 0.0 && b0.is_finite()) {
        return Err(Error::domain(format!("B0 must be finite and >= 0, got {b0}")));
    }
    Ok(species.gamma()? * b0)
}

/// Field-to-current ratio in G/A from a Rabi-frequency slope in kHz/A, taking
/// `Ωd = γ/2π · B1`.
pub fn rabi_to_field(slope_khz_per_a: f64, species: Species) -> Result<f64> {
    if !(slope_khz_per_a > 0.0 && slope_khz_per_a.is_finite()) {
        return Err(Error::domain(format!(
            "slope must be finite and > 0, got {slope_khz_per_a}"
        )));
    }
    Ok(slope_khz_per_a / (1e3 * species.gamma()?))
}
