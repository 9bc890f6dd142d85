//! Outer loops: alternating optimization of antenna positions (in blocks of
//! slots) and weight phases (per slot), the common-geometry variant, and the
//! fixed-array baselines.
//!
//! Every subproblem minimizes a tight convex upper bound of the leakage
//! subject to tight concave lower bounds of the coverage gains, so any point
//! it returns can only lower the true leakage and keeps the true constraints.
//! Candidates are still re-checked against the exact metrics before they are
//! accepted; a candidate that fails the check leaves the slot unchanged.

use std::fmt;
use std::ops::Range;
use std::str::FromStr;
use std::time::Instant;

use log::{debug, info};
use nalgebra::{DVector, Vector2};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::metrics::{eval_gain, eval_slot_leakage, evaluate};
use crate::model::{check_geometry, ArrayLimits, Problem, Trajectory};
use crate::qcqp::{ConeConstraint, ConvexProgram, ConvexSolver, InteriorPoint, LinearRow, QuadConstraint, SolveStatus, SolverSettings};
use crate::surrogate::{
    gain_minorizer, leakage_majorizer, phase_gain_minorizer, phase_leakage_majorizer, slot_leakage_majorizer,
    spacing_linearization, QuadraticForm,
};

/// Distance below which two antennas are treated as coincident [wavelengths].
pub const SPACING_GUARD: f64 = 1e-6;
/// Slack allowed on the exact constraints when a candidate is re-checked.
const ACCEPT_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Scheme {
    /// Fixed UPA steered at the coverage center.
    UpaSteering,
    /// Fixed UPA with optimized phases.
    UpaOptimized,
    /// Time-varying positions and phases.
    Ma,
    /// One common geometry for the whole interval, per-slot phases.
    LcMa,
}

impl Scheme {
    pub const ALL: [Scheme; 4] = [Scheme::UpaSteering, Scheme::UpaOptimized, Scheme::Ma, Scheme::LcMa];

    pub fn name(&self) -> &'static str {
        match self {
            Self::UpaSteering => "upa-steering",
            Self::UpaOptimized => "upa-optimized",
            Self::Ma => "ma",
            Self::LcMa => "lc-ma",
        }
    }
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Scheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.chars().filter(|c| *c != '-' && *c != '_').collect::<String>().to_lowercase();
        match key.as_str() {
            "upasteering" => Ok(Self::UpaSteering),
            "upaoptimized" => Ok(Self::UpaOptimized),
            "ma" => Ok(Self::Ma),
            "lcma" => Ok(Self::LcMa),
            _ => Err(Error::Config(format!(
                "unknown scheme `{s}` (expected one of upa-steering, upa-optimized, ma, lc-ma)"
            ))),
        }
    }
}

impl TryFrom<String> for Scheme {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Scheme> for String {
    fn from(s: Scheme) -> String {
        s.name().to_string()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    pub scheme: Scheme,
    /// Minimum coverage gain `η` per slot.
    pub gain_threshold: f64,
    pub limits: ArrayLimits,
    /// Slots per position block `M_0`.
    pub block_slots: usize,
    pub max_iterations: usize,
    /// Stop when the leakage changes by at most this much in one iteration.
    pub tolerance: f64,
    pub solver: SolverSettings,
}

impl OptimizerConfig {
    pub fn validate(&self, slots: usize) -> Result<()> {
        let l = &self.limits;
        let bad = |msg: String| Err(Error::Config(msg));
        if !(self.gain_threshold > 0.0) {
            return bad(format!("gain threshold must be > 0, got {}", self.gain_threshold));
        }
        if !(l.min_spacing > 0.0) || !(l.region_side > 0.0) || !(l.max_step >= 0.0) {
            return bad("array limits must be positive (speed may be zero)".into());
        }
        if self.block_slots == 0 || self.block_slots > slots || !slots.is_multiple_of(self.block_slots) {
            return bad(format!("block size {} must divide the {slots} slots", self.block_slots));
        }
        if !(self.tolerance > 0.0) {
            return bad("termination tolerance must be > 0".into());
        }
        Ok(())
    }
}

/// Solver outcomes seen during one iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct StatusCounts {
    pub optimal: usize,
    pub infeasible: usize,
    pub max_iterations: usize,
    pub numerical_failure: usize,
}

impl StatusCounts {
    pub fn record(&mut self, s: SolveStatus) {
        match s {
            SolveStatus::Optimal => self.optimal += 1,
            SolveStatus::Infeasible => self.infeasible += 1,
            SolveStatus::MaxIterations => self.max_iterations += 1,
            SolveStatus::NumericalFailure => self.numerical_failure += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    /// Total leakage `I = Σ_m I_m` after the iteration.
    pub leakage: f64,
    pub min_gain: f64,
    pub statuses: StatusCounts,
    /// Subproblem results discarded by the exact re-check.
    pub rejected: usize,
    /// Seconds since the start of the run.
    pub wall_time: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Termination {
    Converged,
    IterationLimit,
    /// Baseline without an optimization loop.
    NotOptimized,
    /// A subproblem was infeasible; the trajectory is the last accepted one.
    Aborted(String),
}

impl fmt::Display for Termination {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Self::Converged => f.write_str("converged"),
            Self::IterationLimit => f.write_str("iteration_limit"),
            Self::NotOptimized => f.write_str("not_optimized"),
            Self::Aborted(why) => write!(f, "aborted: {why}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationLog {
    /// Record 0 is the initial point.
    pub records: Vec<IterationRecord>,
    pub termination: Termination,
}

impl IterationLog {
    pub fn final_leakage(&self) -> f64 {
        self.records.last().map_or(f64::NAN, |r| r.leakage)
    }

    /// Number of optimization iterations performed (excluding the initial record).
    pub fn iterations(&self) -> usize {
        self.records.len().saturating_sub(1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutcome {
    pub trajectory: Trajectory,
    pub log: IterationLog,
}

/// Uniform planar array centered at the origin.
///
/// `N = r×c` with `r` the largest divisor of `N` not above `√N`; rows run
/// along y, columns along x.
pub fn init_apv(antennas: usize, spacing: f64, region_side: f64) -> Result<Vec<Vector2<f64>>> {
    if antennas == 0 {
        return Err(Error::Config("array.antennas must be >= 1".into()));
    }
    let rows = (1..=antennas).filter(|r| r * r <= antennas && antennas.is_multiple_of(*r)).max().unwrap_or(1);
    let cols = antennas / rows;
    let span = (cols - 1) as f64 * spacing;
    if span > region_side {
        return Err(Error::Config(format!(
            "a {rows}x{cols} array at spacing {spacing} spans {span}, more than the region side {region_side}"
        )));
    }
    let cx = 0.5 * (cols - 1) as f64;
    let cy = 0.5 * (rows - 1) as f64;
    Ok((0..rows)
        .flat_map(|r| (0..cols).map(move |c| Vector2::new((c as f64 - cx) * spacing, (r as f64 - cy) * spacing)))
        .collect())
}

/// Phases of the normalized steering vector towards in-plane wave vector `k`.
pub fn init_awv(positions: &[Vector2<f64>], k: &Vector2<f64>) -> Vec<f64> {
    positions.iter().map(|q| k.dot(q)).collect()
}

pub fn initial_trajectory(problem: &Problem, limits: &ArrayLimits) -> Result<Trajectory> {
    let q0 = init_apv(problem.antennas, limits.min_spacing, limits.region_side)?;
    let positions = vec![q0; problem.slots()];
    let phases = positions.iter().zip(&problem.steering_dirs).map(|(q, k)| init_awv(q, k)).collect();
    Ok(Trajectory { positions, phases })
}

fn stack(positions: &[Vector2<f64>]) -> impl Iterator<Item = f64> + '_ {
    positions.iter().flat_map(|q| [q.x, q.y])
}

fn unstack(x: &[f64]) -> Vec<Vector2<f64>> {
    x.chunks(2).map(|c| Vector2::new(c[0], c[1])).collect()
}

fn push_spacing(prog: &mut ConvexProgram, positions: &[Vector2<f64>], offset: usize, min_spacing: f64) -> Result<()> {
    for a in 0..positions.len() {
        for c in a + 1..positions.len() {
            let constraint = spacing_linearization(&positions[a], &positions[c], min_spacing, SPACING_GUARD)?;
            let vars = vec![offset + 2 * a, offset + 2 * a + 1, offset + 2 * c, offset + 2 * c + 1];
            prog.linear_constraints.push(LinearRow { vars, constraint });
        }
    }
    Ok(())
}

fn solve_checked(solver: &dyn ConvexSolver, prog: &ConvexProgram, context: &str) -> Result<(DVector<f64>, SolveStatus)> {
    let res = solver.solve(prog)?;
    debug!("{context}: {} after {} iterations", res.status, res.iterations);
    if res.status == SolveStatus::Infeasible {
        return Err(Error::Subproblem { context: context.into(), message: "surrogate problem is infeasible".into() });
    }
    Ok((res.x, res.status))
}

/// Outcome of one subproblem.
#[derive(Debug, Clone, PartialEq)]
pub struct Update<T> {
    /// The accepted new value, or `None` if the candidate failed the re-check.
    pub value: Option<T>,
    pub status: SolveStatus,
}

/// Position subproblem for the slots in `block`, with all other slots fixed.
pub fn apv_block_program(problem: &Problem, traj: &Trajectory, block: Range<usize>, cfg: &OptimizerConfig) -> Result<ConvexProgram> {
    let n = problem.antennas;
    let m_total = problem.slots();
    let width = 2 * n;
    let terms: Vec<_> = block.clone().map(|m| problem.interference_terms(traj, m)).collect();
    let mut prog = ConvexProgram::new(leakage_majorizer(&terms)?);
    let half = 0.5 * cfg.limits.region_side;
    prog.bounds = vec![(-half, half); prog.dim];
    let last = block.end - 1;
    for (j, m) in block.clone().enumerate() {
        let o = width * j;
        prog.quad_constraints.push(QuadConstraint {
            vars: (o..o + width).collect(),
            form: gain_minorizer(&problem.coverage_terms(traj, m))?,
            bound: cfg.gain_threshold,
        });
        push_spacing(&mut prog, &traj.positions[m], o, cfg.limits.min_spacing)?;
        for a in 0..n {
            let lhs = vec![o + 2 * a, o + 2 * a + 1];
            if j > 0 {
                let p = o - width;
                prog.cones.push(ConeConstraint {
                    lhs: lhs.clone(),
                    rhs: Some(vec![p + 2 * a, p + 2 * a + 1]),
                    offset: vec![0.0, 0.0],
                    radius: cfg.limits.max_step,
                });
            } else if m > 0 {
                let q = traj.positions[m - 1][a];
                prog.cones.push(ConeConstraint { lhs: lhs.clone(), rhs: None, offset: vec![q.x, q.y], radius: cfg.limits.max_step });
            }
            if m == last && m + 1 < m_total {
                let q = traj.positions[m + 1][a];
                prog.cones.push(ConeConstraint { lhs, rhs: None, offset: vec![q.x, q.y], radius: cfg.limits.max_step });
            }
        }
    }
    prog.start = Some(DVector::from_iterator(prog.dim, block.clone().flat_map(|m| stack(&traj.positions[m]).collect::<Vec<_>>())));
    Ok(prog)
}

fn block_leakage(problem: &Problem, traj: &Trajectory, slots: Range<usize>) -> f64 {
    slots.map(|m| eval_slot_leakage(problem, traj, m)).sum()
}

fn gains_hold(problem: &Problem, traj: &Trajectory, slots: Range<usize>, eta: f64) -> bool {
    slots.into_iter().all(|m| eval_gain(problem, traj, m) >= eta - ACCEPT_TOL)
}

pub fn optimize_apv_block(
    problem: &Problem,
    traj: &Trajectory,
    block: Range<usize>,
    cfg: &OptimizerConfig,
    solver: &dyn ConvexSolver,
) -> Result<Update<Vec<Vec<Vector2<f64>>>>> {
    let prog = apv_block_program(problem, traj, block.clone(), cfg)?;
    let context = format!("position block of slots {}..={}", block.start + 1, block.end);
    let (x, status) = solve_checked(solver, &prog, &context)?;
    let width = 2 * problem.antennas;
    let new: Vec<Vec<Vector2<f64>>> = x.as_slice().chunks(width).map(unstack).collect();

    let mut cand = traj.clone();
    for (j, m) in block.clone().enumerate() {
        cand.positions[m] = new[j].clone();
    }
    let ok = gains_hold(problem, &cand, block.clone(), cfg.gain_threshold)
        && check_geometry(&cand, &cfg.limits).within(ACCEPT_TOL)
        && block_leakage(problem, &cand, block.clone()) <= block_leakage(problem, traj, block);
    Ok(Update { value: ok.then_some(new), status })
}

/// Common-geometry subproblem: one position vector shared by every slot.
pub fn common_apv_program(problem: &Problem, traj: &Trajectory, cfg: &OptimizerConfig) -> Result<ConvexProgram> {
    let n = problem.antennas;
    let mut objective = QuadraticForm::zeros(2 * n);
    for m in 0..problem.slots() {
        objective.add_embedded(&slot_leakage_majorizer(&problem.interference_terms(traj, m))?, 0);
    }
    let mut prog = ConvexProgram::new(objective);
    let half = 0.5 * cfg.limits.region_side;
    prog.bounds = vec![(-half, half); 2 * n];
    for m in 0..problem.slots() {
        prog.quad_constraints.push(QuadConstraint {
            vars: (0..2 * n).collect(),
            form: gain_minorizer(&problem.coverage_terms(traj, m))?,
            bound: cfg.gain_threshold,
        });
    }
    push_spacing(&mut prog, &traj.positions[0], 0, cfg.limits.min_spacing)?;
    prog.start = Some(DVector::from_iterator(2 * n, stack(&traj.positions[0])));
    Ok(prog)
}

pub fn optimize_common_apv(
    problem: &Problem,
    traj: &Trajectory,
    cfg: &OptimizerConfig,
    solver: &dyn ConvexSolver,
) -> Result<Update<Vec<Vector2<f64>>>> {
    let prog = common_apv_program(problem, traj, cfg)?;
    let (x, status) = solve_checked(solver, &prog, "common positions")?;
    let new = unstack(x.as_slice());
    let mut cand = traj.clone();
    for p in cand.positions.iter_mut() {
        *p = new.clone();
    }
    let all = 0..problem.slots();
    let ok = gains_hold(problem, &cand, all.clone(), cfg.gain_threshold)
        && check_geometry(&cand, &cfg.limits).within(ACCEPT_TOL)
        && block_leakage(problem, &cand, all.clone()) <= block_leakage(problem, traj, all);
    Ok(Update { value: ok.then_some(new), status })
}

pub fn awv_slot_program(problem: &Problem, traj: &Trajectory, m: usize, cfg: &OptimizerConfig) -> Result<ConvexProgram> {
    let n = problem.antennas;
    let mut prog = ConvexProgram::new(phase_leakage_majorizer(&problem.interference_terms(traj, m))?);
    prog.quad_constraints.push(QuadConstraint {
        vars: (0..n).collect(),
        form: phase_gain_minorizer(&problem.coverage_terms(traj, m))?,
        bound: cfg.gain_threshold,
    });
    prog.start = Some(DVector::from_column_slice(&traj.phases[m]));
    Ok(prog)
}

/// Phase subproblem of slot `m`. With `repair` set the candidate is accepted
/// whenever it restores the gain constraint, even if the leakage grows.
pub fn optimize_awv_slot(
    problem: &Problem,
    traj: &Trajectory,
    m: usize,
    cfg: &OptimizerConfig,
    solver: &dyn ConvexSolver,
    repair: bool,
) -> Result<Update<Vec<f64>>> {
    let prog = awv_slot_program(problem, traj, m, cfg)?;
    let (x, status) = solve_checked(solver, &prog, &format!("phases of slot {}", m + 1))?;
    let new: Vec<f64> = x.iter().copied().collect();
    let mut cand = traj.clone();
    cand.phases[m] = new.clone();
    let gain_ok = eval_gain(problem, &cand, m) >= cfg.gain_threshold - ACCEPT_TOL;
    let ok = gain_ok && (repair || eval_slot_leakage(problem, &cand, m) <= eval_slot_leakage(problem, traj, m));
    Ok(Update { value: ok.then_some(new), status })
}

/// Phase updates of all slots (independent, solved in parallel).
fn awv_pass(
    problem: &Problem,
    traj: &mut Trajectory,
    slots: &[usize],
    cfg: &OptimizerConfig,
    solver: &dyn ConvexSolver,
    repair: bool,
) -> Result<(StatusCounts, usize)> {
    let mut counts = StatusCounts::default();
    let mut rejected = 0;
    let snapshot = &*traj;
    let updates = slots
        .par_iter()
        .map(|&m| optimize_awv_slot(problem, snapshot, m, cfg, solver, repair))
        .collect::<Vec<_>>();
    for (&m, upd) in slots.iter().zip(updates) {
        let upd = upd?;
        counts.record(upd.status);
        match upd.value {
            Some(p) => traj.phases[m] = p,
            None => rejected += 1,
        }
    }
    Ok((counts, rejected))
}

/// Runs `cfg.scheme` with the built-in interior-point solver.
pub fn run(problem: &Problem, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    run_with_solver(problem, cfg, &InteriorPoint { settings: cfg.solver })
}

pub fn run_upa_steering(problem: &Problem, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    run(problem, &OptimizerConfig { scheme: Scheme::UpaSteering, ..cfg.clone() })
}

pub fn run_ao(problem: &Problem, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    run(problem, &OptimizerConfig { scheme: Scheme::Ma, ..cfg.clone() })
}

pub fn run_lc(problem: &Problem, cfg: &OptimizerConfig) -> Result<RunOutcome> {
    run(problem, &OptimizerConfig { scheme: Scheme::LcMa, ..cfg.clone() })
}

fn record(problem: &Problem, traj: &Trajectory, iteration: usize, statuses: StatusCounts, rejected: usize, start: Instant) -> IterationRecord {
    let rep = evaluate(problem, traj);
    IterationRecord {
        iteration,
        leakage: rep.leakage,
        min_gain: rep.min_gain(),
        statuses,
        rejected,
        wall_time: start.elapsed().as_secs_f64(),
    }
}

/// Makes every slot gain-feasible with one phase-only pass, or reports the worst slot.
fn repair(problem: &Problem, traj: &mut Trajectory, cfg: &OptimizerConfig, solver: &dyn ConvexSolver) -> Result<StatusCounts> {
    let eta = cfg.gain_threshold;
    let short: Vec<usize> = (0..problem.slots()).filter(|&m| eval_gain(problem, traj, m) < eta).collect();
    if short.is_empty() {
        return Ok(StatusCounts::default());
    }
    info!("{} slots start below the gain threshold; running a phase-only repair pass", short.len());
    let counts = match awv_pass(problem, traj, &short, cfg, solver, true) {
        Ok((counts, _)) => counts,
        Err(Error::Subproblem { .. }) => StatusCounts::default(),
        Err(e) => return Err(e),
    };
    let (worst, gain) = (0..problem.slots())
        .map(|m| (m, eval_gain(problem, traj, m)))
        .min_by(|a, b| a.1.total_cmp(&b.1))
        .expect("at least one slot");
    if gain < eta - ACCEPT_TOL {
        return Err(Error::Config(format!(
            "coverage gain threshold {eta} is unreachable: slot {} reaches only {gain:.6} after repair; \
             lower optimizer.gain_threshold or enlarge the array",
            worst + 1
        )));
    }
    Ok(counts)
}

pub fn run_with_solver(problem: &Problem, cfg: &OptimizerConfig, solver: &dyn ConvexSolver) -> Result<RunOutcome> {
    run_observed(problem, cfg, solver, &mut |_, _| {})
}

/// Like [`run_with_solver`], calling `observer(i, trajectory)` with the
/// initial point (`i = 0`) and after every iteration.
pub fn run_observed(
    problem: &Problem,
    cfg: &OptimizerConfig,
    solver: &dyn ConvexSolver,
    observer: &mut dyn FnMut(usize, &Trajectory),
) -> Result<RunOutcome> {
    problem.validate()?;
    cfg.validate(problem.slots())?;
    let start = Instant::now();
    let mut traj = initial_trajectory(problem, &cfg.limits)?;

    if cfg.scheme == Scheme::UpaSteering {
        let rec = record(problem, &traj, 0, StatusCounts::default(), 0, start);
        observer(0, &traj);
        let log = IterationLog { records: vec![rec], termination: Termination::NotOptimized };
        return Ok(RunOutcome { trajectory: traj, log });
    }

    let repair_counts = repair(problem, &mut traj, cfg, solver)?;
    let mut records = vec![record(problem, &traj, 0, repair_counts, 0, start)];
    observer(0, &traj);
    let m_total = problem.slots();
    let all_slots: Vec<usize> = (0..m_total).collect();
    let mut termination = Termination::IterationLimit;

    for it in 1..=cfg.max_iterations {
        let mut counts = StatusCounts::default();
        let mut rejected = 0;
        let step = (|| -> Result<()> {
            match cfg.scheme {
                Scheme::Ma => {
                    for k in 0..m_total / cfg.block_slots {
                        let block = k * cfg.block_slots..(k + 1) * cfg.block_slots;
                        let upd = optimize_apv_block(problem, &traj, block.clone(), cfg, solver)?;
                        counts.record(upd.status);
                        match upd.value {
                            Some(new) => {
                                for (j, m) in block.enumerate() {
                                    traj.positions[m] = new[j].clone();
                                }
                            }
                            None => rejected += 1,
                        }
                    }
                }
                Scheme::LcMa => {
                    let upd = optimize_common_apv(problem, &traj, cfg, solver)?;
                    counts.record(upd.status);
                    match upd.value {
                        Some(new) => traj.positions.iter_mut().for_each(|p| *p = new.clone()),
                        None => rejected += 1,
                    }
                }
                Scheme::UpaOptimized | Scheme::UpaSteering => {}
            }
            let (c, r) = awv_pass(problem, &mut traj, &all_slots, cfg, solver, false)?;
            counts.optimal += c.optimal;
            counts.infeasible += c.infeasible;
            counts.max_iterations += c.max_iterations;
            counts.numerical_failure += c.numerical_failure;
            rejected += r;
            Ok(())
        })();

        let rec = record(problem, &traj, it, counts, rejected, start);
        let prev = records.last().expect("initial record").leakage;
        let delta = (prev - rec.leakage).abs();
        debug!("iteration {it}: leakage {:.9e}, min gain {:.6}, rejected {rejected}", rec.leakage, rec.min_gain);
        records.push(rec);
        observer(it, &traj);
        if let Err(e) = step {
            match e {
                Error::Subproblem { .. } => {
                    termination = Termination::Aborted(e.to_string());
                    break;
                }
                other => return Err(other),
            }
        }
        if delta <= cfg.tolerance {
            termination = Termination::Converged;
            break;
        }
    }
    info!("{}: {} after {} iterations, leakage {:.6e}", cfg.scheme, termination, records.len() - 1, records.last().unwrap().leakage);
    Ok(RunOutcome { trajectory: traj, log: IterationLog { records, termination } })
}
