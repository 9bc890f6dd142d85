//! Scenario files: TOML with one table per subsystem.
//!
//! Units at the file boundary are km, degrees and GHz; everything is
//! converted to SI and radians by the accessor methods. Unknown keys are
//! rejected so typos cannot silently fall back to defaults.

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::field::EarthPoint;
use crate::grid::CoverageSpec;
use crate::model::ArrayLimits;
use crate::optimizer::{OptimizerConfig, Scheme};
use crate::orbit::{OrbitConfig, DEFAULT_EARTH_RADIUS, DEFAULT_GRAVITATIONAL_PARAMETER};
use crate::qcqp::SolverSettings;

pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

const PAPER_PRESET: &str = include_str!("../scenarios/paper.scenario");
const DESK_PRESET: &str = include_str!("../scenarios/desk.scenario");

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Preset {
    Paper,
    Desk,
}

impl Preset {
    pub fn source(&self) -> &'static str {
        match self {
            Self::Paper => PAPER_PRESET,
            Self::Desk => DESK_PRESET,
        }
    }
}

impl FromStr for Preset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "paper" => Ok(Self::Paper),
            "desk" => Ok(Self::Desk),
            _ => Err(Error::Config(format!("unknown preset `{s}` (expected paper or desk)"))),
        }
    }
}

/// Gain threshold: an absolute value or a multiple of the antenna count (`"0.5N"`).
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Threshold {
    Absolute(f64),
    PerAntenna(f64),
}

impl Threshold {
    pub fn resolve(&self, antennas: usize) -> f64 {
        match *self {
            Self::Absolute(v) => v,
            Self::PerAntenna(f) => f * antennas as f64,
        }
    }
}

impl fmt::Display for Threshold {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Absolute(v) => write!(f, "{v}"),
            Self::PerAntenna(v) => write!(f, "{v}N"),
        }
    }
}

impl Serialize for Threshold {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Self::Absolute(v) => s.serialize_f64(*v),
            Self::PerAntenna(_) => s.serialize_str(&self.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Threshold {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Int(i64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(v) => Ok(Self::Absolute(v)),
            Raw::Int(v) => Ok(Self::Absolute(v as f64)),
            Raw::Text(t) => {
                let factor = t
                    .trim()
                    .strip_suffix('N')
                    .and_then(|f| f.trim().parse::<f64>().ok())
                    .ok_or_else(|| serde::de::Error::custom(format!("gain_threshold `{t}` is neither a number nor `<factor>N`")))?;
                Ok(Self::PerAntenna(factor))
            }
        }
    }
}

fn default_earth_radius_km() -> f64 {
    DEFAULT_EARTH_RADIUS / 1e3
}
fn default_mu() -> f64 {
    DEFAULT_GRAVITATIONAL_PARAMETER
}
fn default_reference_loss() -> f64 {
    1.0
}
fn default_block_slots() -> usize {
    5
}
fn default_max_iterations() -> usize {
    1000
}
fn default_tolerance() -> f64 {
    1e-4
}
fn default_solver_tolerance() -> f64 {
    SolverSettings::default().tol
}
fn default_solver_max_iterations() -> usize {
    SolverSettings::default().max_iter
}
fn default_schemes() -> Vec<Scheme> {
    vec![Scheme::UpaSteering, Scheme::UpaOptimized, Scheme::Ma, Scheme::LcMa]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OrbitSection {
    pub altitude_km: f64,
    pub inclination_deg: f64,
    pub sats_per_plane: u32,
    pub initial_anomaly_deg: f64,
    #[serde(default = "default_earth_radius_km")]
    pub earth_radius_km: f64,
    #[serde(default = "default_mu")]
    pub gravitational_parameter: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LinkSection {
    pub frequency_ghz: f64,
    pub path_loss_exponent: f64,
    /// Only scales absolute powers; every optimized quantity is normalized.
    #[serde(default = "default_reference_loss")]
    pub reference_path_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoverageSection {
    pub center_elevation_deg: f64,
    pub center_azimuth_deg: f64,
    pub half_angle_deg: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub time_slots: usize,
    pub elevation_cells: usize,
    pub azimuth_cells: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArraySection {
    pub antennas: usize,
    pub region_side_wavelengths: f64,
    pub min_spacing_wavelengths: f64,
    /// Largest antenna speed [m/s].
    pub max_speed: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OptimizerSection {
    pub gain_threshold: Threshold,
    #[serde(default = "default_block_slots")]
    pub block_slots: usize,
    #[serde(default = "default_max_iterations")]
    pub max_iterations: usize,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default = "default_solver_tolerance")]
    pub solver_tolerance: f64,
    #[serde(default = "default_solver_max_iterations")]
    pub solver_max_iterations: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schemes")]
    pub schemes: Vec<Scheme>,
    pub orbit: OrbitSection,
    pub link: LinkSection,
    pub coverage: CoverageSection,
    pub grid: GridSection,
    pub array: ArraySection,
    pub optimizer: OptimizerSection,
}

impl ScenarioConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn preset(preset: Preset) -> Self {
        Self::from_toml_str(preset.source()).expect("shipped presets are valid")
    }

    /// Fully resolved configuration (defaults filled in) as TOML.
    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("configuration serializes")
    }

    pub fn orbit_config(&self) -> OrbitConfig {
        OrbitConfig {
            earth_radius: self.orbit.earth_radius_km * 1e3,
            altitude: self.orbit.altitude_km * 1e3,
            inclination: self.orbit.inclination_deg.to_radians(),
            sats_per_plane: self.orbit.sats_per_plane,
            initial_anomaly: self.orbit.initial_anomaly_deg.to_radians(),
            gravitational_parameter: self.orbit.gravitational_parameter,
        }
    }

    /// Carrier wavelength [m].
    pub fn wavelength(&self) -> f64 {
        SPEED_OF_LIGHT / (self.link.frequency_ghz * 1e9)
    }

    pub fn coverage_spec(&self) -> CoverageSpec {
        CoverageSpec {
            center: EarthPoint::new(
                self.coverage.center_elevation_deg.to_radians(),
                self.coverage.center_azimuth_deg.to_radians(),
            ),
            half_angle: self.coverage.half_angle_deg.to_radians(),
        }
    }

    pub fn gain_threshold(&self) -> f64 {
        self.optimizer.gain_threshold.resolve(self.array.antennas)
    }

    /// Array limits in wavelengths; the per-slot step is `v_max·T/M`.
    pub fn array_limits(&self) -> ArrayLimits {
        let slot = self.orbit_config().interval() / self.grid.time_slots as f64;
        ArrayLimits {
            region_side: self.array.region_side_wavelengths,
            min_spacing: self.array.min_spacing_wavelengths,
            max_step: self.array.max_speed * slot / self.wavelength(),
        }
    }

    pub fn optimizer_config(&self, scheme: Scheme) -> OptimizerConfig {
        OptimizerConfig {
            scheme,
            gain_threshold: self.gain_threshold(),
            limits: self.array_limits(),
            block_slots: self.optimizer.block_slots,
            max_iterations: self.optimizer.max_iterations,
            tolerance: self.optimizer.tolerance,
            solver: SolverSettings {
                tol: self.optimizer.solver_tolerance,
                max_iter: self.optimizer.solver_max_iterations,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, msg: String| if ok { Ok(()) } else { Err(Error::Config(msg)) };
        self.orbit_config().validate()?;
        check(
            self.link.frequency_ghz > 0.0 && self.link.frequency_ghz.is_finite(),
            "link.frequency_ghz must be > 0".into(),
        )?;
        check(self.link.path_loss_exponent >= 0.0, "link.path_loss_exponent must be >= 0".into())?;
        check(self.link.reference_path_loss > 0.0, "link.reference_path_loss must be > 0".into())?;
        check(
            self.coverage.center_elevation_deg.abs() <= 90.0,
            "coverage.center_elevation_deg must lie in [-90, 90]".into(),
        )?;
        check(
            self.coverage.center_azimuth_deg > -180.0 && self.coverage.center_azimuth_deg <= 180.0,
            "coverage.center_azimuth_deg must lie in (-180, 180]".into(),
        )?;
        self.coverage_spec().validate()?;
        check(self.grid.time_slots >= 1, "grid.time_slots must be >= 1".into())?;
        check(
            self.grid.elevation_cells >= 1 && self.grid.azimuth_cells >= 1,
            "grid.elevation_cells and grid.azimuth_cells must be >= 1".into(),
        )?;
        check(self.array.antennas >= 1, "array.antennas must be >= 1".into())?;
        check(self.array.region_side_wavelengths > 0.0, "array.region_side_wavelengths must be > 0".into())?;
        check(self.array.min_spacing_wavelengths > 0.0, "array.min_spacing_wavelengths must be > 0".into())?;
        check(self.array.max_speed >= 0.0, "array.max_speed must be >= 0".into())?;
        let eta = self.gain_threshold();
        check(eta > 0.0 && eta.is_finite(), format!("optimizer.gain_threshold must be > 0, got {eta}"))?;
        let m0 = self.optimizer.block_slots;
        check(
            m0 >= 1 && m0 <= self.grid.time_slots && self.grid.time_slots.is_multiple_of(m0),
            format!(
                "optimizer.block_slots ({m0}) must divide grid.time_slots ({})",
                self.grid.time_slots
            ),
        )?;
        check(self.optimizer.tolerance > 0.0, "optimizer.tolerance must be > 0".into())?;
        check(self.optimizer.solver_tolerance > 0.0, "optimizer.solver_tolerance must be > 0".into())?;
        check(self.optimizer.solver_max_iterations >= 1, "optimizer.solver_max_iterations must be >= 1".into())?;
        check(!self.schemes.is_empty(), "schemes must not be empty".into())?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn paper_preset_values() {
        let cfg = ScenarioConfig::preset(Preset::Paper);
        assert!((cfg.orbit_config().interval() - 289.56).abs() < 0.05);
        assert_eq!(cfg.gain_threshold(), 8.0);
        assert_eq!(cfg.grid.time_slots, 50);
        assert_eq!(cfg.array.antennas, 16);
        assert_relative_eq!(cfg.wavelength(), 0.021_413_747, max_relative = 1e-7);
        assert_eq!(cfg.optimizer.max_iterations, 1000);
        assert_eq!(cfg.schemes.len(), 4);
    }

    #[test]
    fn desk_preset_values() {
        let cfg = ScenarioConfig::preset(Preset::Desk);
        assert_eq!((cfg.grid.time_slots, cfg.array.antennas), (10, 8));
        assert_eq!((cfg.grid.elevation_cells, cfg.grid.azimuth_cells), (36, 72));
        assert_eq!((cfg.optimizer.max_iterations, cfg.optimizer.block_slots), (50, 5));
        assert_eq!(cfg.gain_threshold(), 4.0);
    }

    #[test]
    fn round_trip() {
        for p in [Preset::Paper, Preset::Desk] {
            let cfg = ScenarioConfig::preset(p);
            let text = cfg.to_toml_string();
            assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap(), cfg);
            assert_eq!(ScenarioConfig::from_toml_str(&text).unwrap().to_toml_string(), text);
        }
    }

    #[test]
    fn rejects_unknown_and_missing_keys() {
        let base = Preset::Desk.source();
        let typo = base.replace("max_speed", "max_sped");
        let err = ScenarioConfig::from_toml_str(&typo).unwrap_err().to_string();
        assert!(err.contains("max_sped"), "{err}");

        let missing = base.replace("altitude_km = 1500.0\n", "");
        let err = ScenarioConfig::from_toml_str(&missing).unwrap_err().to_string();
        assert!(err.contains("altitude_km"), "{err}");
    }

    #[test]
    fn threshold_forms() {
        let base = Preset::Desk.source();
        let abs = base.replace("gain_threshold = \"0.5N\"", "gain_threshold = 3");
        assert_eq!(ScenarioConfig::from_toml_str(&abs).unwrap().gain_threshold(), 3.0);
        let bad = base.replace("\"0.5N\"", "\"half\"");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }

    #[test]
    fn validation_names_the_parameter() {
        let base = Preset::Desk.source();
        let bad = base.replace("block_slots = 5", "block_slots = 3");
        let err = ScenarioConfig::from_toml_str(&bad).unwrap_err().to_string();
        assert!(err.contains("block_slots"), "{err}");
        let bad = base.replace("inclination_deg = 65.0", "inclination_deg = 120.0");
        assert!(ScenarioConfig::from_toml_str(&bad).is_err());
    }
}
