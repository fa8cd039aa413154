//! Purcell-enhancement design calculator for a cavity at the boundary
//! between weak and strong coupling (κ = 4g).

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::model::SPEED_OF_LIGHT;

/// Refractive index of silicon near 1550 nm.
pub const SILICON_INDEX: f64 = 3.48;

/// Inputs of a cavity design.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CavityInputs {
    pub wavelength_nm: f64,
    #[serde(default = "default_index")]
    pub refractive_index: f64,
    /// Bulk spontaneous emission rate, Hz.
    pub gamma_bulk_hz: f64,
    pub purcell_factor: f64,
}

fn default_index() -> f64 {
    SILICON_INDEX
}

/// A cavity design with all derived quantities.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityDesign {
    pub wavelength_nm: f64,
    pub refractive_index: f64,
    pub gamma_bulk_hz: f64,
    pub purcell_factor: f64,
    /// Ion–cavity coupling g = F γ / 2, Hz.
    pub coupling_hz: f64,
    /// Cavity damping κ = 4g, Hz.
    pub kappa_hz: f64,
    pub quality_factor: f64,
    pub mode_volume_m3: f64,
    /// Mode volume in units of (λ/n)³.
    pub mode_volume_cubic_wavelengths: f64,
}

fn check_positive(values: &[(&str, f64)]) -> Result<()> {
    for (name, v) in values {
        if !(v.is_finite() && *v > 0.0) {
            return domain(format!("{name} must be positive, got {v}"));
        }
    }
    Ok(())
}

/// V_m = 3λ²c / (2π n³ F² γ) in m³, and in (λ/n)³ units.
pub fn mode_volume(wavelength_nm: f64, refractive_index: f64, purcell_factor: f64, gamma_bulk_hz: f64) -> Result<(f64, f64)> {
    check_positive(&[
        ("wavelength", wavelength_nm),
        ("refractive index", refractive_index),
        ("Purcell factor", purcell_factor),
        ("bulk emission rate", gamma_bulk_hz),
    ])?;
    let lambda = wavelength_nm * 1e-9;
    let v =
        3.0 * lambda * lambda * SPEED_OF_LIGHT / (2.0 * PI * refractive_index.powi(3) * purcell_factor * purcell_factor * gamma_bulk_hz);
    Ok((v, v / (lambda / refractive_index).powi(3)))
}

/// Purcell factor reached by a mode volume given in m³.
pub fn purcell_for_mode_volume(wavelength_nm: f64, refractive_index: f64, mode_volume_m3: f64, gamma_bulk_hz: f64) -> Result<f64> {
    check_positive(&[
        ("wavelength", wavelength_nm),
        ("refractive index", refractive_index),
        ("mode volume", mode_volume_m3),
        ("bulk emission rate", gamma_bulk_hz),
    ])?;
    let lambda = wavelength_nm * 1e-9;
    Ok((3.0 * lambda * lambda * SPEED_OF_LIGHT / (2.0 * PI * refractive_index.powi(3) * mode_volume_m3 * gamma_bulk_hz)).sqrt())
}

impl CavityDesign {
    pub fn new(inputs: CavityInputs) -> Result<Self> {
        let CavityInputs { wavelength_nm, refractive_index, gamma_bulk_hz, purcell_factor } = inputs;
        let (v, v_units) = mode_volume(wavelength_nm, refractive_index, purcell_factor, gamma_bulk_hz)?;
        let g = purcell_factor * gamma_bulk_hz / 2.0;
        let kappa = 4.0 * g;
        let frequency = SPEED_OF_LIGHT / (wavelength_nm * 1e-9);
        Ok(CavityDesign {
            wavelength_nm,
            refractive_index,
            gamma_bulk_hz,
            purcell_factor,
            coupling_hz: g,
            kappa_hz: kappa,
            quality_factor: frequency / kappa,
            mode_volume_m3: v,
            mode_volume_cubic_wavelengths: v_units,
        })
    }
}

/// Cavity damping κ = f/Q for a quality factor at `wavelength_nm`.
pub fn kappa_for_quality(wavelength_nm: f64, quality_factor: f64) -> Result<f64> {
    check_positive(&[("wavelength", wavelength_nm), ("quality factor", quality_factor)])?;
    Ok(SPEED_OF_LIGHT / (wavelength_nm * 1e-9) / quality_factor)
}
