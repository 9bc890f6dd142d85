//! Delimiter-separated output files.
//!
//! Everything written here is a deterministic function of the configuration;
//! wall-clock measurements go to separate timing files.

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::grid::GridSets;
use crate::metrics::{EvaluationReport, PatternSample};
use crate::optimizer::{IterationLog, Scheme};
use crate::orbit::{OrbitConfig, SatelliteState};
use crate::scenario::Scenario;
use crate::model::Trajectory;

fn create(path: &Path) -> Result<BufWriter<File>> {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

/// Positions in meters and phases in radians, one row per slot and antenna.
pub fn write_trajectory(path: &Path, scenario: &Scenario, traj: &Trajectory) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slot,time_s,antenna,x_m,y_m,phase_rad")?;
    for (m, (pos, ph)) in traj.positions.iter().zip(&traj.phases).enumerate() {
        let t = scenario.time_grid.times[m];
        for (n, (q, p)) in pos.iter().zip(ph).enumerate() {
            let (x, y) = (q.x * scenario.wavelength, q.y * scenario.wavelength);
            writeln!(w, "{},{t},{},{x},{y},{p}", m + 1, n + 1)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn write_iterations(path: &Path, log: &IterationLog) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iteration,leakage,min_gain,optimal,infeasible,max_iterations,numerical_failure,rejected")?;
    for r in &log.records {
        let s = &r.statuses;
        writeln!(
            w,
            "{},{},{},{},{},{},{},{}",
            r.iteration, r.leakage, r.min_gain, s.optimal, s.infeasible, s.max_iterations, s.numerical_failure, r.rejected
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing(path: &Path, log: &IterationLog) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "iteration,wall_time_s")?;
    for r in &log.records {
        writeln!(w, "{},{}", r.iteration, r.wall_time)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_report(path: &Path, scheme: Scheme, log: &IterationLog, report: &EvaluationReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "scheme = {scheme}")?;
    writeln!(w, "termination = {}", log.termination)?;
    writeln!(w, "iterations = {}", log.iterations())?;
    writeln!(w, "leakage = {}", report.leakage)?;
    writeln!(w, "average_gain = {}", report.average_gain)?;
    writeln!(w, "min_gain = {}", report.min_gain())?;
    writeln!(w, "slr = {}", report.slr)?;
    writeln!(w, "slr_db = {:.4}", report.slr_db)?;
    w.flush()?;
    Ok(())
}

pub fn write_slot_metrics(path: &Path, scenario: &Scenario, report: &EvaluationReport) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slot,time_s,gain,leakage")?;
    for (m, (g, l)) in report.gains.iter().zip(&report.leakages).enumerate() {
        writeln!(w, "{},{},{g},{l}", m + 1, scenario.time_grid.times[m])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_pattern(path: &Path, samples: &[PatternSample]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "theta_rad,phi_rad,gain,tag")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.point.elevation, s.point.azimuth, s.gain, s.tag.as_str())?;
    }
    w.flush()?;
    Ok(())
}

/// Sub-satellite gain per slot.
pub fn write_nadir(path: &Path, rows: &[(usize, PatternSample)]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slot,theta_rad,phi_rad,gain,tag")?;
    for (m, s) in rows {
        writeln!(w, "{},{},{},{},{}", m + 1, s.point.elevation, s.point.azimuth, s.gain, s.tag.as_str())?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_orbit(path: &Path, states: &[SatelliteState]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slot,time_s,anomaly_rad,elevation_rad,azimuth_rad,x_m,y_m,z_m")?;
    for (m, s) in states.iter().enumerate() {
        let p = &s.position;
        writeln!(w, "{},{},{},{},{},{},{},{}", m + 1, s.time, s.anomaly, s.elevation, s.azimuth, p.x, p.y, p.z)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_orbit_summary(path: &Path, orbit: &OrbitConfig) -> Result<()> {
    let mut w = create(path)?;
    let (ts, t) = orbit.orbital_period();
    writeln!(w, "orbital_period_s = {ts}")?;
    writeln!(w, "interval_s = {t}")?;
    writeln!(w, "visibility_half_angle_deg = {}", orbit.visibility_half_angle().to_degrees())?;
    w.flush()?;
    Ok(())
}

/// Point lists and weights of the coverage and per-slot interference sets.
pub fn write_grid_sets(path: &Path, sets: &GridSets) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "slot,set,theta_rad,phi_rad,weight")?;
    for m in 0..sets.slots() {
        for (p, g) in sets.coverage_points.iter().zip(&sets.coverage_weights[m]) {
            writeln!(w, "{},coverage,{},{},{g}", m + 1, p.elevation, p.azimuth)?;
        }
        for (p, g) in sets.interference_points[m].iter().zip(&sets.interference_weights[m]) {
            writeln!(w, "{},interference,{},{},{g}", m + 1, p.elevation, p.azimuth)?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Reads a file written by [`write_trajectory`] back into wavelength units.
pub fn read_trajectory(path: &Path, wavelength: f64) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    let bad = |line: usize, what: &str| Error::Config(format!("{}:{line}: {what}", path.display()));
    let mut traj = Trajectory { positions: Vec::new(), phases: Vec::new() };
    for (i, line) in text.lines().enumerate().skip(1) {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(bad(i + 1, "expected 6 fields"));
        }
        let int = |s: &str| s.parse::<usize>().map_err(|_| bad(i + 1, "invalid index"));
        let num = |s: &str| s.parse::<f64>().map_err(|_| bad(i + 1, "invalid number"));
        let (slot, antenna) = (int(fields[0])?, int(fields[2])?);
        if slot == 0 || slot > traj.slots() + 1 {
            return Err(bad(i + 1, "slots must be consecutive from 1"));
        }
        if slot > traj.slots() {
            traj.positions.push(Vec::new());
            traj.phases.push(Vec::new());
        }
        let m = slot - 1;
        if antenna != traj.positions[m].len() + 1 {
            return Err(bad(i + 1, "antennas must be consecutive from 1"));
        }
        traj.positions[m].push(Vector2::new(num(fields[3])? / wavelength, num(fields[4])? / wavelength));
        traj.phases[m].push(num(fields[5])?);
    }
    if traj.slots() == 0 {
        return Err(Error::Config(format!("{}: no trajectory rows", path.display())));
    }
    Ok(traj)
}
