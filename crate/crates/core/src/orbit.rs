//! Circular-orbit kinematics of the serving satellite.
//!
//! Angles follow the geocentric spherical convention: elevation `Θ` measured
//! from the equatorial plane (north positive), azimuth `Φ` measured eastwards
//! from the prime meridian. The satellite-centric frame (SCCS) has its x axis
//! along the velocity, y normal to the orbital plane and z towards the
//! geocenter.

use std::f64::consts::{FRAC_PI_2, PI};

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};

/// Mean earth radius used when none is configured [m].
pub const DEFAULT_EARTH_RADIUS: f64 = 6_371_000.0;
/// Standard gravitational parameter of the earth, `G·M` [m³/s²].
pub const DEFAULT_GRAVITATIONAL_PARAMETER: f64 = 3.986_004_418e14;

#[derive(Debug, Clone, PartialEq)]
pub struct OrbitConfig {
    /// Earth radius `R_e` [m].
    pub earth_radius: f64,
    /// Orbit altitude above the surface `H_s` [m].
    pub altitude: f64,
    /// Inclination `β` [rad].
    pub inclination: f64,
    /// Satellites per orbital plane `K_s`.
    pub sats_per_plane: u32,
    /// Anomaly at `t = 0` measured from the ascending node [rad].
    pub initial_anomaly: f64,
    /// `G·M` [m³/s²].
    pub gravitational_parameter: f64,
}

/// Snapshot of the satellite at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SatelliteState {
    pub time: f64,
    pub anomaly: f64,
    pub elevation: f64,
    pub azimuth: f64,
    pub position: Vector3<f64>,
    /// Columns are the SCCS axes expressed in the geocentric Cartesian frame.
    pub rotation: Matrix3<f64>,
}

impl OrbitConfig {
    pub fn validate(&self) -> Result<()> {
        let check = |ok: bool, what: &str| {
            if ok {
                Ok(())
            } else {
                Err(Error::Config(format!("orbit: {what}")))
            }
        };
        check(self.earth_radius > 0.0 && self.earth_radius.is_finite(), "earth_radius must be > 0")?;
        check(self.altitude > 0.0 && self.altitude.is_finite(), "altitude must be > 0")?;
        check(
            (0.0..=FRAC_PI_2).contains(&self.inclination),
            "inclination must lie in [0, 90] degrees",
        )?;
        check(self.sats_per_plane >= 1, "sats_per_plane must be >= 1")?;
        check(self.initial_anomaly.is_finite(), "initial_anomaly must be finite")?;
        check(
            self.gravitational_parameter > 0.0 && self.gravitational_parameter.is_finite(),
            "gravitational_parameter must be > 0",
        )
    }

    /// Orbit radius `R_e + H_s`.
    pub fn orbit_radius(&self) -> f64 {
        self.earth_radius + self.altitude
    }

    /// Returns `(T_s, T)`: the orbital period and the handover interval `T_s / K_s`.
    pub fn orbital_period(&self) -> (f64, f64) {
        let period = 2.0 * PI * (self.orbit_radius().powi(3) / self.gravitational_parameter).sqrt();
        (period, period / f64::from(self.sats_per_plane))
    }

    /// Handover interval `T`.
    pub fn interval(&self) -> f64 {
        self.orbital_period().1
    }

    pub fn anomaly(&self, t: f64) -> f64 {
        2.0 * PI * t / self.orbital_period().0 + self.initial_anomaly
    }

    /// `(α, Θ_s, Φ_s)` at time `t`.
    pub fn satellite_angles(&self, t: f64) -> (f64, f64, f64) {
        let alpha = self.anomaly(t);
        let (elevation, azimuth) = angles_from_anomaly(self.inclination, alpha);
        (alpha, elevation, azimuth)
    }

    pub fn satellite_position_gccs(&self, t: f64) -> Vector3<f64> {
        let (_, elevation, azimuth) = self.satellite_angles(t);
        spherical_to_cartesian(self.orbit_radius(), elevation, azimuth)
    }

    /// SCCS → GCCS rotation at time `t`.
    pub fn transform_matrix(&self, t: f64) -> Matrix3<f64> {
        let (_, elevation, azimuth) = self.satellite_angles(t);
        transform_from_angles(self.inclination, elevation, azimuth)
    }

    pub fn state(&self, t: f64) -> SatelliteState {
        let (anomaly, elevation, azimuth) = self.satellite_angles(t);
        SatelliteState {
            time: t,
            anomaly,
            elevation,
            azimuth,
            position: spherical_to_cartesian(self.orbit_radius(), elevation, azimuth),
            rotation: transform_from_angles(self.inclination, elevation, azimuth),
        }
    }

    /// Geocentric half-angle of the visible cap, `arccos(R_e / (R_e + H_s))`.
    pub fn visibility_half_angle(&self) -> f64 {
        (self.earth_radius / self.orbit_radius()).acos()
    }
}

/// Sub-satellite elevation and azimuth for anomaly `alpha`.
///
/// The azimuth uses `atan2(cos β sin α, cos α)` so it covers the full `(−π, π]`
/// range; a plain `arctan(cos β tan α)` folds the far half of the orbit onto
/// the near half.
pub fn angles_from_anomaly(inclination: f64, alpha: f64) -> (f64, f64) {
    let (sin_a, cos_a) = alpha.sin_cos();
    let elevation = (inclination.sin() * sin_a).clamp(-1.0, 1.0).asin();
    let mut azimuth = (inclination.cos() * sin_a).atan2(cos_a);
    if azimuth <= -PI {
        azimuth += 2.0 * PI;
    }
    (elevation, azimuth)
}

pub fn spherical_to_cartesian(radius: f64, elevation: f64, azimuth: f64) -> Vector3<f64> {
    let (sin_e, cos_e) = elevation.sin_cos();
    let (sin_a, cos_a) = azimuth.sin_cos();
    Vector3::new(radius * cos_e * cos_a, radius * cos_e * sin_a, radius * sin_e)
}

pub fn transform_from_angles(inclination: f64, elevation: f64, azimuth: f64) -> Matrix3<f64> {
    let (sb, cb) = inclination.sin_cos();
    let (se, ce) = elevation.sin_cos();
    let (sa, ca) = azimuth.sin_cos();
    Matrix3::new(
        -sb * se - cb * ce * sa, 0.0, -ce * ca,
        cb * ce * ca, sb, -ce * sa,
        sb * ce * ca, -cb, -se,
    )
}
