//! Time slots, the angular quadrature grid, and the per-slot coverage and
//! interference point sets with their normalized path-loss weights.

use std::f64::consts::PI;

use log::warn;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{is_visible, path_loss, wave_geometry, EarthPoint};
use crate::orbit::{OrbitConfig, SatelliteState};

#[derive(Debug, Clone, PartialEq)]
pub struct TimeGrid {
    pub interval: f64,
    /// Slot midpoints `t_m = (m − 1/2)T/M`.
    pub times: Vec<f64>,
}

impl TimeGrid {
    pub fn slots(&self) -> usize {
        self.times.len()
    }
}

pub fn build_time_grid(interval: f64, slots: usize) -> Result<TimeGrid> {
    if slots == 0 {
        return Err(Error::Domain("time grid needs at least one slot".into()));
    }
    let m = slots as f64;
    let times = (0..slots).map(|i| (i as f64 + 0.5) * interval / m).collect();
    Ok(TimeGrid { interval, times })
}

/// Uniform grid over `[−π/2, π/2] × (−π, π]`, stored row-major in elevation.
#[derive(Debug, Clone, PartialEq)]
pub struct AngularGrid {
    pub elevation_cells: usize,
    pub azimuth_cells: usize,
    pub elevations: Vec<f64>,
    pub azimuths: Vec<f64>,
}

impl AngularGrid {
    pub fn len(&self) -> usize {
        self.elevations.len() * self.azimuths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn point(&self, index: usize) -> EarthPoint {
        let la = self.azimuths.len();
        EarthPoint::new(self.elevations[index / la], self.azimuths[index % la])
    }

    pub fn points(&self) -> impl Iterator<Item = EarthPoint> + '_ {
        self.elevations
            .iter()
            .flat_map(move |&e| self.azimuths.iter().map(move |&a| EarthPoint::new(e, a)))
    }
}

pub fn build_angular_grid(elevation_cells: usize, azimuth_cells: usize) -> Result<AngularGrid> {
    if elevation_cells == 0 || azimuth_cells == 0 {
        return Err(Error::Domain("angular grid needs non-zero cell counts".into()));
    }
    let le = elevation_cells as f64;
    let la = azimuth_cells as f64;
    let elevations = (1..=elevation_cells)
        .map(|l| -PI / 2.0 + (l as f64 - 0.5) * PI / le)
        .collect();
    let azimuths = (1..=azimuth_cells)
        .map(|l| -PI + (2.0 * l as f64 - 1.0) * PI / la)
        .collect();
    Ok(AngularGrid { elevation_cells, azimuth_cells, elevations, azimuths })
}

/// Circular coverage area: all points within a geocentric half-angle of `center`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoverageSpec {
    pub center: EarthPoint,
    pub half_angle: f64,
}

impl CoverageSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.half_angle > 0.0 && self.half_angle < PI / 2.0) {
            return Err(Error::Config(format!(
                "coverage half-angle must lie in (0, 90) degrees, got {}",
                self.half_angle.to_degrees()
            )));
        }
        Ok(())
    }
}

pub fn in_coverage(point: &EarthPoint, spec: &CoverageSpec) -> bool {
    point.unit_vector().dot(&spec.center.unit_vector()) >= spec.half_angle.cos()
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridSets {
    pub coverage_points: Vec<EarthPoint>,
    /// `[m][l]`, each row sums to one.
    pub coverage_weights: Vec<Vec<f64>>,
    pub interference_points: Vec<Vec<EarthPoint>>,
    /// `[m][l]`, each non-empty row sums to one.
    pub interference_weights: Vec<Vec<f64>>,
}

impl GridSets {
    pub fn slots(&self) -> usize {
        self.coverage_weights.len()
    }
}

/// Path-loss weights normalized to unit sum.
fn normalized_weights(
    cfg: &OrbitConfig,
    state: &SatelliteState,
    points: &[EarthPoint],
    exponent: f64,
    reference_loss: f64,
) -> Result<Vec<f64>> {
    // Distances are computed with a unit wavelength; only the norm is used here.
    let losses = points
        .iter()
        .map(|p| {
            let geo = wave_geometry(cfg, p, state, 1.0)?;
            path_loss(reference_loss, exponent, geo.distance)
        })
        .collect::<Result<Vec<_>>>()?;
    let total: f64 = losses.iter().sum();
    Ok(losses.into_iter().map(|l| l / total).collect())
}

pub fn build_grid_sets(
    grid: &AngularGrid,
    spec: &CoverageSpec,
    states: &[SatelliteState],
    cfg: &OrbitConfig,
    exponent: f64,
    reference_loss: f64,
) -> Result<GridSets> {
    let coverage_points: Vec<EarthPoint> = grid.points().filter(|p| in_coverage(p, spec)).collect();
    if coverage_points.is_empty() {
        return Err(Error::Config(format!(
            "no grid center falls inside the coverage area: refine grid.elevation_cells/grid.azimuth_cells \
             ({}x{}) or enlarge coverage.half_angle_deg ({})",
            grid.elevation_cells,
            grid.azimuth_cells,
            spec.half_angle.to_degrees()
        )));
    }

    let per_slot = states
        .par_iter()
        .enumerate()
        .map(|(m, state)| {
            let hidden = coverage_points.iter().filter(|p| !is_visible(cfg, p, state)).count();
            if hidden > 0 {
                warn!("slot {}: {hidden} coverage points are outside the visible area", m + 1);
            }
            let interference: Vec<EarthPoint> = grid
                .points()
                .filter(|p| is_visible(cfg, p, state) && !in_coverage(p, spec))
                .collect();
            let cov_w = normalized_weights(cfg, state, &coverage_points, exponent, reference_loss)?;
            let int_w = normalized_weights(cfg, state, &interference, exponent, reference_loss)?;
            Ok((cov_w, interference, int_w))
        })
        .collect::<Result<Vec<_>>>()?;

    let mut sets = GridSets {
        coverage_points,
        coverage_weights: Vec::with_capacity(states.len()),
        interference_points: Vec::with_capacity(states.len()),
        interference_weights: Vec::with_capacity(states.len()),
    };
    for (cov_w, int_p, int_w) in per_slot {
        sets.coverage_weights.push(cov_w);
        sets.interference_points.push(int_p);
        sets.interference_weights.push(int_w);
    }
    Ok(sets)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::orbit::{DEFAULT_EARTH_RADIUS, DEFAULT_GRAVITATIONAL_PARAMETER};
    use approx::assert_relative_eq;

    fn orbit() -> OrbitConfig {
        OrbitConfig {
            earth_radius: DEFAULT_EARTH_RADIUS,
            altitude: 1.5e6,
            inclination: 65f64.to_radians(),
            sats_per_plane: 24,
            initial_anomaly: -7.5f64.to_radians(),
            gravitational_parameter: DEFAULT_GRAVITATIONAL_PARAMETER,
        }
    }

    #[test]
    fn time_grid_cases() {
        assert_eq!(build_time_grid(1.0, 2).unwrap().times, vec![0.25, 0.75]);
        assert_relative_eq!(build_time_grid(289.56, 50).unwrap().times[0], 2.8956, max_relative = 1e-14);
        assert_eq!(build_time_grid(7.0, 1).unwrap().times, vec![3.5]);
        assert!(build_time_grid(1.0, 0).is_err());
        let g = build_time_grid(289.56, 50).unwrap();
        assert!(g.times.windows(2).all(|w| w[0] < w[1]));
        assert!(*g.times.last().unwrap() < 289.56);
    }

    #[test]
    fn angular_grid_cases() {
        let g = build_angular_grid(2, 2).unwrap();
        assert_relative_eq!(g.elevations[0], -PI / 4.0);
        assert_relative_eq!(g.elevations[1], PI / 4.0);
        assert_relative_eq!(g.azimuths[0], -PI / 2.0);
        assert_relative_eq!(g.azimuths[1], PI / 2.0);

        let g = build_angular_grid(100, 200).unwrap();
        assert_eq!(g.len(), 20_000);
        for w in g.elevations.windows(2) {
            assert_relative_eq!(w[1] - w[0], PI / 100.0, epsilon = 1e-12);
        }
        assert!(g.elevations.iter().all(|&e| e > -PI / 2.0 && e < PI / 2.0));
        assert!(g.azimuths.iter().all(|&a| a > -PI && a <= PI));
        assert!(build_angular_grid(0, 4).is_err());
        assert!(build_angular_grid(4, 0).is_err());
    }

    #[test]
    fn coverage_membership() {
        let spec = CoverageSpec { center: EarthPoint::new(0.0, 0.0), half_angle: 3f64.to_radians() };
        assert!(in_coverage(&spec.center, &spec));
        assert!(in_coverage(&EarthPoint::new(0.0, 2.9f64.to_radians()), &spec));
        assert!(!in_coverage(&EarthPoint::new(0.0, 3.1f64.to_radians()), &spec));
        for (e, a) in [(0.01, 0.05), (0.04, 0.02), (-0.03, 0.03), (0.052, 0.001)] {
            let expected = f64::cos(e) * f64::cos(a) >= spec.half_angle.cos();
            assert_eq!(in_coverage(&EarthPoint::new(e, a), &spec), expected);
        }
    }

    #[test]
    fn paper_grid_sets() {
        let cfg = orbit();
        let tg = build_time_grid(cfg.interval(), 50).unwrap();
        let states: Vec<_> = tg.times.iter().map(|&t| cfg.state(t)).collect();
        let grid = build_angular_grid(100, 200).unwrap();
        let spec = CoverageSpec { center: EarthPoint::new(0.0, 0.0), half_angle: 3f64.to_radians() };
        let sets = build_grid_sets(&grid, &spec, &states, &cfg, 2.8, 1.0).unwrap();
        assert_eq!(sets.coverage_points.len(), 12);
        for (m, s) in states.iter().enumerate() {
            assert!(sets.coverage_points.iter().all(|p| is_visible(&cfg, p, s)));
            assert!(!sets.interference_points[m].is_empty());
            for p in &sets.interference_points[m] {
                assert!(is_visible(&cfg, p, s));
                assert!(!in_coverage(p, &spec));
                assert!(!sets.coverage_points.contains(p));
            }
            assert_relative_eq!(sets.coverage_weights[m].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
            assert_relative_eq!(sets.interference_weights[m].iter().sum::<f64>(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn huge_coverage_leaves_no_interference() {
        let cfg = orbit();
        let states = vec![cfg.state(0.0)];
        let grid = build_angular_grid(20, 40).unwrap();
        let spec = CoverageSpec { center: EarthPoint::sub_satellite(&states[0]), half_angle: 1.5 };
        let sets = build_grid_sets(&grid, &spec, &states, &cfg, 2.8, 1.0).unwrap();
        assert!(sets.interference_points[0].is_empty());
        assert!(sets.interference_weights[0].is_empty());
    }

    #[test]
    fn coarse_grid_is_rejected() {
        let cfg = orbit();
        let states = vec![cfg.state(0.0)];
        let grid = build_angular_grid(36, 72).unwrap();
        let spec = CoverageSpec { center: EarthPoint::new(0.0, 0.0), half_angle: 3f64.to_radians() };
        let err = build_grid_sets(&grid, &spec, &states, &cfg, 2.8, 1.0).unwrap_err();
        assert!(err.to_string().contains("half_angle"));
    }
}
