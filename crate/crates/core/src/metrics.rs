//! Coverage gain, interference leakage, SLR and beam-pattern evaluation.

use nalgebra::Vector2;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{array_response, is_visible, wave_geometry, weights_from_phases, EarthPoint};
use crate::grid::in_coverage;
use crate::model::{Problem, Trajectory};
use crate::scenario::Scenario;

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub gains: Vec<f64>,
    pub leakages: Vec<f64>,
    /// `Σ_m I_m`.
    pub leakage: f64,
    pub average_gain: f64,
    pub slr: f64,
    pub slr_db: f64,
}

impl EvaluationReport {
    pub fn min_gain(&self) -> f64 {
        self.gains.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

fn weighted_power(dirs: &[Vector2<f64>], weights: &[f64], positions: &[Vector2<f64>], w: &[Complex64]) -> f64 {
    dirs.iter()
        .zip(weights)
        .map(|(k, g)| g * array_response(k, positions, w).norm_sqr())
        .sum()
}

/// `G_m = Σ_l g^cov_{m,l} |aᴴw|²`.
pub fn eval_gain(problem: &Problem, traj: &Trajectory, m: usize) -> f64 {
    let w = weights_from_phases(&traj.phases[m]);
    weighted_power(&problem.coverage_dirs[m], &problem.coverage_weights[m], &traj.positions[m], &w)
}

/// `I_m = Σ_l g^int_{m,l} |aᴴw|²`; zero for an empty interference set.
pub fn eval_slot_leakage(problem: &Problem, traj: &Trajectory, m: usize) -> f64 {
    let w = weights_from_phases(&traj.phases[m]);
    weighted_power(&problem.interference_dirs[m], &problem.interference_weights[m], &traj.positions[m], &w)
}

/// Returns `(I, [I_m])` with `I = Σ_m I_m`.
pub fn eval_leakage(problem: &Problem, traj: &Trajectory) -> (f64, Vec<f64>) {
    let per: Vec<f64> = (0..problem.slots()).into_par_iter().map(|m| eval_slot_leakage(problem, traj, m)).collect();
    (per.iter().sum(), per)
}

/// Mean slot gain over total leakage; `+∞` when there is no leakage.
pub fn eval_slr(average_gain: f64, leakage: f64) -> f64 {
    if leakage > 0.0 {
        average_gain / leakage
    } else {
        f64::INFINITY
    }
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}

pub fn evaluate(problem: &Problem, traj: &Trajectory) -> EvaluationReport {
    let gains: Vec<f64> = (0..problem.slots()).into_par_iter().map(|m| eval_gain(problem, traj, m)).collect();
    let (leakage, leakages) = eval_leakage(problem, traj);
    let average_gain = gains.iter().sum::<f64>() / gains.len() as f64;
    let slr = eval_slr(average_gain, leakage);
    EvaluationReport { gains, leakages, leakage, average_gain, slr, slr_db: to_db(slr) }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RegionTag {
    Coverage,
    Interference,
    Invisible,
}

impl RegionTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            Self::Coverage => "coverage",
            Self::Interference => "interference",
            Self::Invisible => "invisible",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternSample {
    pub point: EarthPoint,
    /// `|aᴴw|²`, in `[0, N]`.
    pub gain: f64,
    pub tag: RegionTag,
}

/// Beam pattern of slot `m` over the whole angular grid, plus the value at
/// the sub-satellite point.
pub fn eval_pattern(scenario: &Scenario, traj: &Trajectory, m: usize) -> Result<(Vec<PatternSample>, PatternSample)> {
    if m >= scenario.states.len() || m >= traj.slots() {
        return Err(Error::Config(format!("slot {} outside 1..={}", m + 1, scenario.states.len())));
    }
    let state = &scenario.states[m];
    let lambda = scenario.wavelength;
    let w = weights_from_phases(&traj.phases[m]);
    let positions = &traj.positions[m];
    let sample = |p: EarthPoint| -> Result<PatternSample> {
        let geo = wave_geometry(&scenario.orbit, &p, state, lambda)?;
        let k = Vector2::new(geo.k_sccs.x, geo.k_sccs.y) * lambda;
        let tag = if in_coverage(&p, &scenario.coverage) {
            RegionTag::Coverage
        } else if is_visible(&scenario.orbit, &p, state) {
            RegionTag::Interference
        } else {
            RegionTag::Invisible
        };
        Ok(PatternSample { point: p, gain: array_response(&k, positions, &w).norm_sqr(), tag })
    };
    let points: Vec<EarthPoint> = scenario.angular_grid.points().collect();
    let grid = points.into_par_iter().map(sample).collect::<Result<Vec<_>>>()?;
    let nadir = sample(EarthPoint::sub_satellite(state))?;
    Ok((grid, nadir))
}
