use std::path::{Path, PathBuf};

use ple_core::analysis::{SurveyOptions, DEFAULT_MATCH_TOLERANCE_HZ};
use ple_core::cavity::{CavityInputs, SILICON_INDEX};
use ple_core::dynamics::{HoleBurnConfig, ZeemanSite};
use ple_core::reproduce::ReproduceOptions;
use ple_core::{DetectorModel, ScanProtocol};
use serde::{Deserialize, Serialize};

use crate::CliError;

/// Everything a run depends on. Loaded from an optional JSON file, then
/// overridden by command-line flags; the merged result is written next to
/// the outputs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub seed: Option<u64>,
    /// Catalog CSV; the bundled Table 1 when absent.
    pub catalog: Option<PathBuf>,
    pub protocol: ScanProtocol,
    pub detector: DetectorModel,
    pub survey: SurveyOptions,
    pub decay: DecaySettings,
    pub hole: HoleBurnConfig,
    pub zeeman: ZeemanSettings,
    pub matching: MatchSettings,
    pub cavity: CavitySettings,
    pub reproduce: ReproduceOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DecaySettings {
    /// Line to excite, looked up in the catalog.
    pub wavelength_nm: f64,
    pub duration_s: f64,
    pub bin_width_s: f64,
}

impl Default for DecaySettings {
    fn default() -> Self {
        DecaySettings { wavelength_nm: 1527.565, duration_s: 5e-3, bin_width_s: 10e-6 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ZeemanSettings {
    pub field_t: f64,
    pub polarization_rad: f64,
    /// Site description; the six-line example site when absent.
    pub site: Option<ZeemanSite>,
}

impl Default for ZeemanSettings {
    fn default() -> Self {
        ZeemanSettings { field_t: 0.05, polarization_rad: 0.0, site: None }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct MatchSettings {
    pub tolerance_hz: f64,
}

impl Default for MatchSettings {
    fn default() -> Self {
        MatchSettings { tolerance_hz: DEFAULT_MATCH_TOLERANCE_HZ }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CavitySettings {
    pub inputs: CavityInputs,
    /// Quality factor to convert to a cavity damping rate, if given.
    pub quality_factor: Option<f64>,
}

impl Default for CavitySettings {
    fn default() -> Self {
        CavitySettings {
            inputs: CavityInputs { wavelength_nm: 1540.0, refractive_index: SILICON_INDEX, gamma_bulk_hz: 1e3, purcell_factor: 1e6 },
            quality_factor: None,
        }
    }
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(RunConfig::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        serde_json::from_str(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
    }

    pub fn require_seed(&self, command: &str) -> Result<u64, CliError> {
        self.seed.ok_or_else(|| CliError::Config(format!("{command} samples Poisson noise and needs --seed (or \"seed\" in the config)")))
    }
}
