//! A configuration turned into satellite states, grid sets and the discrete
//! optimization data.

use nalgebra::Vector2;
use rayon::prelude::*;

use crate::config::ScenarioConfig;
use crate::error::Result;
use crate::field::{wave_geometry, EarthPoint};
use crate::grid::{build_angular_grid, build_grid_sets, build_time_grid, AngularGrid, CoverageSpec, GridSets, TimeGrid};
use crate::model::Problem;
use crate::orbit::{OrbitConfig, SatelliteState};

#[derive(Debug, Clone)]
pub struct Scenario {
    pub config: ScenarioConfig,
    pub orbit: OrbitConfig,
    /// Carrier wavelength [m].
    pub wavelength: f64,
    pub time_grid: TimeGrid,
    pub states: Vec<SatelliteState>,
    pub angular_grid: AngularGrid,
    pub coverage: CoverageSpec,
    pub grid_sets: GridSets,
    pub problem: Problem,
}

/// In-plane SCCS wave vectors in radians per wavelength.
fn in_plane_dirs(
    orbit: &OrbitConfig,
    state: &SatelliteState,
    points: &[EarthPoint],
    wavelength: f64,
) -> Result<Vec<Vector2<f64>>> {
    points
        .iter()
        .map(|p| {
            let k = wave_geometry(orbit, p, state, wavelength)?.k_sccs * wavelength;
            Ok(Vector2::new(k.x, k.y))
        })
        .collect()
}

impl Scenario {
    pub fn build(config: &ScenarioConfig) -> Result<Self> {
        config.validate()?;
        let orbit = config.orbit_config();
        let wavelength = config.wavelength();
        let time_grid = build_time_grid(orbit.interval(), config.grid.time_slots)?;
        let states: Vec<SatelliteState> = time_grid.times.iter().map(|&t| orbit.state(t)).collect();
        let angular_grid = build_angular_grid(config.grid.elevation_cells, config.grid.azimuth_cells)?;
        let coverage = config.coverage_spec();
        let grid_sets = build_grid_sets(
            &angular_grid,
            &coverage,
            &states,
            &orbit,
            config.link.path_loss_exponent,
            config.link.reference_path_loss,
        )?;

        let per_slot = states
            .par_iter()
            .enumerate()
            .map(|(m, s)| {
                let cov = in_plane_dirs(&orbit, s, &grid_sets.coverage_points, wavelength)?;
                let int = in_plane_dirs(&orbit, s, &grid_sets.interference_points[m], wavelength)?;
                let steer = in_plane_dirs(&orbit, s, &[coverage.center], wavelength)?[0];
                Ok((cov, int, steer))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut problem = Problem {
            antennas: config.array.antennas,
            coverage_dirs: Vec::new(),
            coverage_weights: grid_sets.coverage_weights.clone(),
            interference_dirs: Vec::new(),
            interference_weights: grid_sets.interference_weights.clone(),
            steering_dirs: Vec::new(),
        };
        for (cov, int, steer) in per_slot {
            problem.coverage_dirs.push(cov);
            problem.interference_dirs.push(int);
            problem.steering_dirs.push(steer);
        }
        problem.validate()?;

        Ok(Self {
            config: config.clone(),
            orbit,
            wavelength,
            time_grid,
            states,
            angular_grid,
            coverage,
            grid_sets,
            problem,
        })
    }
}
