//! Propagation geometry between the satellite and points on the earth surface.

use nalgebra::{Vector2, Vector3};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::orbit::{spherical_to_cartesian, OrbitConfig, SatelliteState};

/// A point on the earth surface in geocentric angles [rad].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EarthPoint {
    pub elevation: f64,
    pub azimuth: f64,
}

impl EarthPoint {
    pub fn new(elevation: f64, azimuth: f64) -> Self {
        Self { elevation, azimuth }
    }

    pub fn unit_vector(&self) -> Vector3<f64> {
        spherical_to_cartesian(1.0, self.elevation, self.azimuth)
    }

    /// Great-circle (geocentric) angle to `other`.
    pub fn angle_to(&self, other: &EarthPoint) -> f64 {
        let a = self.unit_vector();
        let b = other.unit_vector();
        // atan2 form keeps precision for nearly coincident points
        a.cross(&b).norm().atan2(a.dot(&b))
    }

    /// Radial projection of the satellite onto the surface.
    pub fn sub_satellite(state: &SatelliteState) -> Self {
        Self::new(state.elevation, state.azimuth)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct WaveGeometry {
    /// Earth point minus satellite position [m].
    pub kbar_gccs: Vector3<f64>,
    pub k_gccs: Vector3<f64>,
    pub k_sccs: Vector3<f64>,
    pub distance: f64,
    pub wavelength: f64,
}

/// Antenna positions (SCCS x–y plane) and weight phases for one time slot.
#[derive(Debug, Clone, PartialEq)]
pub struct ArraySlotState {
    pub positions: Vec<Vector2<f64>>,
    pub phases: Vec<f64>,
}

impl ArraySlotState {
    /// Constant-modulus weights `e^{jφ_n}/√N`.
    pub fn weights(&self) -> Vec<Complex64> {
        weights_from_phases(&self.phases)
    }
}

pub fn weights_from_phases(phases: &[f64]) -> Vec<Complex64> {
    let scale = 1.0 / (phases.len() as f64).sqrt();
    phases.iter().map(|&p| Complex64::from_polar(scale, p)).collect()
}

pub fn wave_geometry(
    cfg: &OrbitConfig,
    point: &EarthPoint,
    state: &SatelliteState,
    wavelength: f64,
) -> Result<WaveGeometry> {
    let ground = point.unit_vector() * cfg.earth_radius;
    let kbar = ground - state.position;
    let distance = kbar.norm();
    if !(distance > 0.0) {
        return Err(Error::Domain("earth point coincides with the satellite".into()));
    }
    let k_gccs = kbar * (2.0 * std::f64::consts::PI / (wavelength * distance));
    let k_sccs = state.rotation.transpose() * k_gccs;
    Ok(WaveGeometry { kbar_gccs: kbar, k_gccs, k_sccs, distance, wavelength })
}

/// Steering vector `[exp(j kᵀ[q_n; 0])]_n`.
pub fn steering_vector(k_sccs: &Vector3<f64>, positions: &[Vector2<f64>]) -> Vec<Complex64> {
    positions
        .iter()
        .map(|q| Complex64::from_polar(1.0, k_sccs.x * q.x + k_sccs.y * q.y))
        .collect()
}

/// `aᴴw` for the in-plane wave vector `k` (only the x–y components act on planar arrays).
pub fn array_response(k: &Vector2<f64>, positions: &[Vector2<f64>], weights: &[Complex64]) -> Complex64 {
    positions
        .iter()
        .zip(weights)
        .map(|(q, w)| Complex64::from_polar(1.0, -k.dot(q)) * w)
        .sum()
}

pub fn path_loss(reference: f64, exponent: f64, distance: f64) -> Result<f64> {
    if !(distance > 0.0) {
        return Err(Error::Domain(format!("path loss needs a positive distance, got {distance}")));
    }
    Ok(reference * distance.powf(-exponent))
}

/// Line-of-sight test `‖k̄‖² ≤ (R_e+H_s)² − R_e²` (boundary inclusive).
pub fn is_visible(cfg: &OrbitConfig, point: &EarthPoint, state: &SatelliteState) -> bool {
    let kbar = point.unit_vector() * cfg.earth_radius - state.position;
    kbar.norm_squared() <= cfg.orbit_radius().powi(2) - cfg.earth_radius.powi(2)
}

/// Half-space isotropic element: radiates only towards +z (the geocenter side).
pub fn element_pattern(k_sccs: &Vector3<f64>) -> f64 {
    if k_sccs.z > 0.0 {
        1.0
    } else {
        0.0
    }
}

/// Effective channel gain `G_AE · ρ · |aᴴw|²`.
pub fn effective_gain(
    cfg: &OrbitConfig,
    point: &EarthPoint,
    state: &SatelliteState,
    array: &ArraySlotState,
    wavelength: f64,
    reference_loss: f64,
    exponent: f64,
) -> Result<f64> {
    let geo = wave_geometry(cfg, point, state, wavelength)?;
    let rho = path_loss(reference_loss, exponent, geo.distance)?;
    let k = geo.k_sccs.xy();
    let response = array_response(&k, &array.positions, &array.weights());
    Ok(element_pattern(&geo.k_sccs) * rho * response.norm_sqr())
}
