//! Discrete optimization data shared by the optimizer and the metrics.
//!
//! Lengths are expressed in wavelengths, so in-plane wave vectors are in
//! radians per wavelength (`2π` times the direction cosines).

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::surrogate::SlotTerms;

/// Per-slot wave vectors and normalized weights of the coverage and
/// interference grid points.
#[derive(Debug, Clone, PartialEq)]
pub struct Problem {
    pub antennas: usize,
    /// `[m][l]` in-plane wave vectors of the coverage points.
    pub coverage_dirs: Vec<Vec<Vector2<f64>>>,
    pub coverage_weights: Vec<Vec<f64>>,
    pub interference_dirs: Vec<Vec<Vector2<f64>>>,
    pub interference_weights: Vec<Vec<f64>>,
    /// Per-slot wave vector towards the coverage center, used for steering.
    pub steering_dirs: Vec<Vector2<f64>>,
}

impl Problem {
    pub fn slots(&self) -> usize {
        self.coverage_dirs.len()
    }

    pub fn validate(&self) -> Result<()> {
        let m = self.slots();
        let same = [
            self.coverage_weights.len(),
            self.interference_dirs.len(),
            self.interference_weights.len(),
            self.steering_dirs.len(),
        ];
        if m == 0 || same.iter().any(|&l| l != m) {
            return Err(Error::Contract("per-slot problem data disagree on the slot count".into()));
        }
        for s in 0..m {
            if self.coverage_dirs[s].len() != self.coverage_weights[s].len()
                || self.interference_dirs[s].len() != self.interference_weights[s].len()
            {
                return Err(Error::Contract(format!("slot {}: points and weights disagree", s + 1)));
            }
        }
        if self.antennas == 0 {
            return Err(Error::Contract("array needs at least one antenna".into()));
        }
        Ok(())
    }

    pub fn coverage_terms<'a>(&'a self, traj: &'a Trajectory, m: usize) -> SlotTerms<'a> {
        SlotTerms {
            positions: &traj.positions[m],
            phases: &traj.phases[m],
            directions: &self.coverage_dirs[m],
            weights: &self.coverage_weights[m],
        }
    }

    pub fn interference_terms<'a>(&'a self, traj: &'a Trajectory, m: usize) -> SlotTerms<'a> {
        SlotTerms {
            positions: &traj.positions[m],
            phases: &traj.phases[m],
            directions: &self.interference_dirs[m],
            weights: &self.interference_weights[m],
        }
    }
}

/// Antenna positions [wavelengths] and weight phases [rad] for every slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub positions: Vec<Vec<Vector2<f64>>>,
    pub phases: Vec<Vec<f64>>,
}

impl Trajectory {
    pub fn slots(&self) -> usize {
        self.positions.len()
    }

    pub fn antennas(&self) -> usize {
        self.positions.first().map_or(0, Vec::len)
    }
}

/// Geometric limits on the antenna positions, in wavelengths.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ArrayLimits {
    /// Side of the square moving region centered at the origin.
    pub region_side: f64,
    pub min_spacing: f64,
    /// Largest displacement of one antenna between consecutive slots.
    pub max_step: f64,
}

/// Largest constraint violations of a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct FeasibilityReport {
    /// `max(0, d_min − min pairwise distance)`.
    pub spacing: f64,
    /// Distance outside the moving region.
    pub region: f64,
    /// `max(0, step − max_step)`.
    pub speed: f64,
}

impl FeasibilityReport {
    pub fn within(&self, tol: f64) -> bool {
        self.spacing <= tol && self.region <= tol && self.speed <= tol
    }
}

pub fn check_geometry(traj: &Trajectory, limits: &ArrayLimits) -> FeasibilityReport {
    let half = 0.5 * limits.region_side;
    let mut rep = FeasibilityReport::default();
    for (m, slot) in traj.positions.iter().enumerate() {
        for (i, q) in slot.iter().enumerate() {
            rep.region = rep.region.max(q.x.abs() - half).max(q.y.abs() - half);
            for p in &slot[i + 1..] {
                rep.spacing = rep.spacing.max(limits.min_spacing - (q - p).norm());
            }
            if m > 0 {
                rep.speed = rep.speed.max((q - traj.positions[m - 1][i]).norm() - limits.max_step);
            }
        }
    }
    rep
}
