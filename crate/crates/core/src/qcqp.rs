//! Small dense convex QCQP solver.
//!
//! Problems have a convex quadratic objective, concave quadratic `≥`
//! constraints, linear `≥` constraints, coordinate boxes and Euclidean-ball
//! ("speed") constraints between groups of variables. Everything is reduced to
//! smooth convex inequalities `f_i(x) ≤ 0` plus linear equalities and solved
//! with a feasible-start primal-dual interior-point method; a phase-I problem
//! provides the strictly feasible start when the given point is on or outside
//! the boundary.

use std::fmt::Write as _;

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};
use crate::surrogate::{LinearConstraint, QuadraticForm};

/// `form(x[vars]) ≥ bound` with a concave `form`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadConstraint {
    pub vars: Vec<usize>,
    pub form: QuadraticForm,
    pub bound: f64,
}

/// `constraint.a · x[vars] ≥ constraint.b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearRow {
    pub vars: Vec<usize>,
    pub constraint: LinearConstraint,
}

/// `‖x[lhs] − x[rhs] − offset‖₂ ≤ radius`; with `rhs = None` the constant
/// `offset` is the whole reference point.
#[derive(Debug, Clone, PartialEq)]
pub struct ConeConstraint {
    pub lhs: Vec<usize>,
    pub rhs: Option<Vec<usize>>,
    pub offset: Vec<f64>,
    pub radius: f64,
}

impl ConeConstraint {
    fn displacement(&self, x: &DVector<f64>) -> Vec<f64> {
        self.lhs
            .iter()
            .enumerate()
            .map(|(i, &l)| {
                let r = self.rhs.as_ref().map_or(0.0, |rhs| x[rhs[i]]);
                x[l] - r - self.offset[i]
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvexProgram {
    pub dim: usize,
    pub objective: QuadraticForm,
    pub quad_constraints: Vec<QuadConstraint>,
    pub linear_constraints: Vec<LinearRow>,
    /// Per-coordinate `[lo, hi]`; infinite ends are unconstrained.
    pub bounds: Vec<(f64, f64)>,
    pub cones: Vec<ConeConstraint>,
    /// Preferred start (usually the expansion point of the surrogates).
    pub start: Option<DVector<f64>>,
}

impl ConvexProgram {
    pub fn new(objective: QuadraticForm) -> Self {
        let dim = objective.dim();
        Self {
            dim,
            objective,
            quad_constraints: Vec::new(),
            linear_constraints: Vec::new(),
            bounds: vec![(f64::NEG_INFINITY, f64::INFINITY); dim],
            cones: Vec::new(),
            start: None,
        }
    }

    /// Constraint violations of `x`, measured in each constraint's own units.
    pub fn violations(&self, x: &DVector<f64>, tol: f64) -> Vec<String> {
        let mut out = Vec::new();
        for (i, q) in self.quad_constraints.iter().enumerate() {
            let v = q.form.eval(&gather(x, &q.vars));
            if v < q.bound - tol {
                out.push(format!("quadratic constraint {i}: {v} < {}", q.bound));
            }
        }
        for (i, l) in self.linear_constraints.iter().enumerate() {
            let v = l.constraint.value(&gather(x, &l.vars));
            if v < l.constraint.b - tol {
                out.push(format!("linear constraint {i}: {v} < {}", l.constraint.b));
            }
        }
        for (j, &(lo, hi)) in self.bounds.iter().enumerate() {
            if x[j] < lo - tol || x[j] > hi + tol {
                out.push(format!("bound {j}: {} outside [{lo}, {hi}]", x[j]));
            }
        }
        for (i, c) in self.cones.iter().enumerate() {
            let n = c.displacement(x).iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > c.radius + tol {
                out.push(format!("cone {i}: {n} > {}", c.radius));
            }
        }
        out
    }
}

fn gather(x: &DVector<f64>, vars: &[usize]) -> DVector<f64> {
    DVector::from_iterator(vars.len(), vars.iter().map(|&v| x[v]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SolveStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

impl std::fmt::Display for SolveStatus {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Self::Optimal => "optimal",
            Self::Infeasible => "infeasible",
            Self::MaxIterations => "max_iterations",
            Self::NumericalFailure => "numerical_failure",
        };
        f.write_str(s)
    }
}

/// Scaled residuals at the returned point; `Optimal` means all three are `≤ tol`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct KktResiduals {
    pub stationarity: f64,
    pub primal_infeasibility: f64,
    pub complementarity: f64,
}

/// Residual norm before and after the accepted step of one iteration,
/// both measured at that iteration's barrier parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationTrace {
    pub residual_before: f64,
    pub residual_after: f64,
    pub step: f64,
    pub gap: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub x: DVector<f64>,
    pub objective: f64,
    pub status: SolveStatus,
    pub kkt: KktResiduals,
    pub iterations: usize,
    pub trace: Vec<IterationTrace>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tol: 1e-8, max_iter: 200 }
    }
}

/// Anything that can solve a [`ConvexProgram`]; lets an external conic solver
/// stand in for the built-in one.
pub trait ConvexSolver: Sync {
    fn solve(&self, program: &ConvexProgram) -> Result<SolveResult>;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct InteriorPoint {
    pub settings: SolverSettings,
}

impl ConvexSolver for InteriorPoint {
    fn solve(&self, program: &ConvexProgram) -> Result<SolveResult> {
        solve(program, self.settings.tol, self.settings.max_iter)
    }
}

const SYM_TOL: f64 = 1e-12;
const CURVATURE_TOL: f64 = 1e-9;

fn symmetry_error(p: &DMatrix<f64>) -> f64 {
    (p - p.transpose()).abs().max()
}

fn extreme_eigenvalues(p: &DMatrix<f64>) -> (f64, f64) {
    if p.nrows() == 0 {
        return (0.0, 0.0);
    }
    let sym = (p + p.transpose()) * 0.5;
    let eig = SymmetricEigen::new(sym).eigenvalues;
    (eig.min(), eig.max())
}

/// Reports structural problems; an empty list means the program is well formed.
pub fn validate(program: &ConvexProgram) -> Vec<String> {
    let mut out = Vec::new();
    let d = program.dim;
    let scale = |p: &DMatrix<f64>| p.abs().max().max(1.0);

    let obj = &program.objective;
    if obj.dim() != d || obj.p.nrows() != d || obj.p.ncols() != d {
        out.push(format!("objective has dimension {} but program has {d}", obj.dim()));
    } else {
        let asym = symmetry_error(&obj.p);
        if asym > SYM_TOL * scale(&obj.p) {
            out.push(format!("objective curvature is not symmetric (max asymmetry {asym:e})"));
        }
        let (lo, _) = extreme_eigenvalues(&obj.p);
        if lo < -CURVATURE_TOL * scale(&obj.p) {
            out.push(format!("objective curvature is not PSD: eigenvalue {lo:e}"));
        }
    }

    for (i, q) in program.quad_constraints.iter().enumerate() {
        if q.form.dim() != q.vars.len() || q.form.p.nrows() != q.vars.len() {
            out.push(format!("quadratic constraint {i}: form dimension does not match its variables"));
            continue;
        }
        if let Some(&v) = q.vars.iter().find(|&&v| v >= d) {
            out.push(format!("quadratic constraint {i}: variable {v} out of range"));
        }
        let asym = symmetry_error(&q.form.p);
        if asym > SYM_TOL * scale(&q.form.p) {
            out.push(format!("quadratic constraint {i}: curvature not symmetric ({asym:e})"));
        }
        let (_, hi) = extreme_eigenvalues(&q.form.p);
        if hi > CURVATURE_TOL * scale(&q.form.p) {
            out.push(format!("quadratic constraint {i}: curvature not NSD: eigenvalue {hi:e}"));
        }
        if !q.bound.is_finite() {
            out.push(format!("quadratic constraint {i}: bound is not finite"));
        }
    }

    for (i, l) in program.linear_constraints.iter().enumerate() {
        if l.constraint.a.len() != l.vars.len() {
            out.push(format!("linear constraint {i}: coefficient count does not match its variables"));
        }
        if let Some(&v) = l.vars.iter().find(|&&v| v >= d) {
            out.push(format!("linear constraint {i}: variable {v} out of range"));
        }
        if l.constraint.a.iter().all(|&a| a == 0.0) {
            out.push(format!("linear constraint {i}: all coefficients are zero"));
        }
    }

    if program.bounds.len() != d {
        out.push(format!("{} bounds for {d} variables", program.bounds.len()));
    }
    for (j, &(lo, hi)) in program.bounds.iter().enumerate() {
        if lo.is_nan() || hi.is_nan() || lo > hi {
            out.push(format!("bound {j}: empty interval [{lo}, {hi}]"));
        }
    }

    for (i, c) in program.cones.iter().enumerate() {
        if !(c.radius >= 0.0) || !c.radius.is_finite() {
            out.push(format!("cone {i}: negative or invalid radius {}", c.radius));
        }
        if c.offset.len() != c.lhs.len() || c.rhs.as_ref().is_some_and(|r| r.len() != c.lhs.len()) {
            out.push(format!("cone {i}: selector lengths disagree"));
        }
        let all = c.lhs.iter().chain(c.rhs.iter().flatten());
        if let Some(&v) = all.clone().find(|&&v| v >= d) {
            out.push(format!("cone {i}: variable {v} out of range"));
        }
    }

    if let Some(s) = &program.start {
        if s.len() != d {
            out.push(format!("start point has dimension {} instead of {d}", s.len()));
        }
    }
    out
}

/// Human-readable dump for cross-checking with an external solver.
pub fn dump(program: &ConvexProgram) -> String {
    let mut s = String::new();
    let vec = |v: &[f64]| v.iter().map(|x| format!("{x:e}")).collect::<Vec<_>>().join(" ");
    let mat = |m: &DMatrix<f64>, s: &mut String| {
        for r in 0..m.nrows() {
            let row: Vec<f64> = m.row(r).iter().copied().collect();
            let _ = writeln!(s, "  {}", vec(&row));
        }
    };
    let _ = writeln!(s, "dim {}", program.dim);
    let _ = writeln!(s, "objective r {:e}", program.objective.r);
    let _ = writeln!(s, " c {}", vec(program.objective.c.as_slice()));
    let _ = writeln!(s, " P");
    mat(&program.objective.p, &mut s);
    for (i, q) in program.quad_constraints.iter().enumerate() {
        let _ = writeln!(s, "quad {i} >= {:e} vars {:?}", q.bound, q.vars);
        let _ = writeln!(s, " r {:e}", q.form.r);
        let _ = writeln!(s, " c {}", vec(q.form.c.as_slice()));
        let _ = writeln!(s, " P");
        mat(&q.form.p, &mut s);
    }
    for (i, l) in program.linear_constraints.iter().enumerate() {
        let _ = writeln!(s, "linear {i} >= {:e} vars {:?} a {}", l.constraint.b, l.vars, vec(l.constraint.a.as_slice()));
    }
    for (j, (lo, hi)) in program.bounds.iter().enumerate() {
        if lo.is_finite() || hi.is_finite() {
            let _ = writeln!(s, "bound {j} {lo:e} {hi:e}");
        }
    }
    for (i, c) in program.cones.iter().enumerate() {
        let _ = writeln!(
            s,
            "cone {i} radius {:e} lhs {:?} rhs {:?} offset {}",
            c.radius,
            c.lhs,
            c.rhs,
            vec(&c.offset)
        );
    }
    s
}

/// Smooth convex inequality `½x_vᵀHx_v + linᵀx_v + constant ≤ 0`.
#[derive(Debug, Clone)]
struct Ineq {
    vars: Vec<usize>,
    hess: Option<DMatrix<f64>>,
    lin: Vec<f64>,
    constant: f64,
}

impl Ineq {
    fn value(&self, x: &DVector<f64>) -> f64 {
        let mut v = self.constant;
        for (i, &vi) in self.vars.iter().enumerate() {
            v += self.lin[i] * x[vi];
        }
        if let Some(h) = &self.hess {
            let xl = gather(x, &self.vars);
            v += 0.5 * xl.dot(&(h * &xl));
        }
        v
    }

    fn grad(&self, x: &DVector<f64>) -> Vec<f64> {
        let mut g = self.lin.clone();
        if let Some(h) = &self.hess {
            let hx = h * gather(x, &self.vars);
            for (gi, hi) in g.iter_mut().zip(hx.iter()) {
                *gi += hi;
            }
        }
        g
    }
}

struct Equalities {
    a: DMatrix<f64>,
    b: DVector<f64>,
}

struct Lowered {
    dim: usize,
    p: DMatrix<f64>,
    c: DVector<f64>,
    r: f64,
    ineqs: Vec<Ineq>,
    eq: Equalities,
}

impl Lowered {
    fn from_program(program: &ConvexProgram) -> Self {
        let d = program.dim;
        let mut ineqs = Vec::new();
        let mut eq_rows: Vec<(Vec<(usize, f64)>, f64)> = Vec::new();

        for q in &program.quad_constraints {
            let nonzero = q.form.p.iter().any(|&v| v != 0.0);
            ineqs.push(Ineq {
                vars: q.vars.clone(),
                hess: nonzero.then(|| -&q.form.p),
                lin: q.form.c.iter().map(|c| -c).collect(),
                constant: q.bound - q.form.r,
            });
        }
        for l in &program.linear_constraints {
            let norm = l.constraint.a.norm();
            ineqs.push(Ineq {
                vars: l.vars.clone(),
                hess: None,
                lin: l.constraint.a.iter().map(|a| -a / norm).collect(),
                constant: l.constraint.b / norm,
            });
        }
        for (j, &(lo, hi)) in program.bounds.iter().enumerate() {
            if lo == hi {
                eq_rows.push((vec![(j, 1.0)], lo));
                continue;
            }
            if lo.is_finite() {
                ineqs.push(Ineq { vars: vec![j], hess: None, lin: vec![-1.0], constant: lo });
            }
            if hi.is_finite() {
                ineqs.push(Ineq { vars: vec![j], hess: None, lin: vec![1.0], constant: -hi });
            }
        }
        for c in &program.cones {
            if c.radius == 0.0 {
                for (i, &l) in c.lhs.iter().enumerate() {
                    let mut row = vec![(l, 1.0)];
                    if let Some(rhs) = &c.rhs {
                        row.push((rhs[i], -1.0));
                    }
                    eq_rows.push((row, c.offset[i]));
                }
                continue;
            }
            // (‖u‖² − r²)/(2r) keeps the constraint in distance units
            let k = c.lhs.len();
            let paired = c.rhs.is_some();
            let width = if paired { 2 * k } else { k };
            let mut vars = c.lhs.clone();
            if let Some(rhs) = &c.rhs {
                vars.extend_from_slice(rhs);
            }
            let inv = 1.0 / c.radius;
            let mut hess = DMatrix::zeros(width, width);
            let mut lin = vec![0.0; width];
            for i in 0..k {
                hess[(i, i)] = inv;
                lin[i] = -c.offset[i] * inv;
                if paired {
                    hess[(k + i, k + i)] = inv;
                    hess[(i, k + i)] = -inv;
                    hess[(k + i, i)] = -inv;
                    lin[k + i] = c.offset[i] * inv;
                }
            }
            let off2: f64 = c.offset.iter().map(|o| o * o).sum();
            ineqs.push(Ineq {
                vars,
                hess: Some(hess),
                lin,
                constant: 0.5 * (off2 - c.radius * c.radius) * inv,
            });
        }

        let mut a = DMatrix::zeros(eq_rows.len(), d);
        let mut b = DVector::zeros(eq_rows.len());
        for (r, (row, rhs)) in eq_rows.into_iter().enumerate() {
            for (j, v) in row {
                a[(r, j)] += v;
            }
            b[r] = rhs;
        }

        Self {
            dim: d,
            p: program.objective.p.clone(),
            c: program.objective.c.clone(),
            r: program.objective.r,
            ineqs,
            eq: Equalities { a, b },
        }
    }

    fn objective(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x) + self.r
    }

    fn max_ineq(&self, x: &DVector<f64>) -> f64 {
        self.ineqs.iter().map(|f| f.value(x)).fold(f64::NEG_INFINITY, f64::max)
    }

    /// Phase-I problem over `(x, s)`: minimize `s` subject to `f_i(x) ≤ s`, `s ≥ floor`.
    fn phase_one(&self, floor: f64) -> Lowered {
        let d = self.dim;
        let s = d;
        let mut ineqs: Vec<Ineq> = self
            .ineqs
            .iter()
            .map(|f| {
                let mut g = f.clone();
                g.vars.push(s);
                g.lin.push(-1.0);
                if let Some(h) = &f.hess {
                    let k = h.nrows();
                    let mut big = DMatrix::zeros(k + 1, k + 1);
                    big.view_mut((0, 0), (k, k)).copy_from(h);
                    g.hess = Some(big);
                }
                g
            })
            .collect();
        ineqs.push(Ineq { vars: vec![s], hess: None, lin: vec![-1.0], constant: floor });
        let mut a = DMatrix::zeros(self.eq.a.nrows(), d + 1);
        a.view_mut((0, 0), (self.eq.a.nrows(), d)).copy_from(&self.eq.a);
        let mut c = DVector::zeros(d + 1);
        c[s] = 1.0;
        Lowered {
            dim: d + 1,
            p: DMatrix::zeros(d + 1, d + 1),
            c,
            r: 0.0,
            ineqs,
            eq: Equalities { a, b: self.eq.b.clone() },
        }
    }
}

struct PdState {
    x: DVector<f64>,
    lam: DVector<f64>,
    nu: DVector<f64>,
}

struct PdOutcome {
    state: PdState,
    status: SolveStatus,
    kkt: KktResiduals,
    iterations: usize,
    trace: Vec<IterationTrace>,
}

const MU: f64 = 10.0;
const ALPHA: f64 = 0.01;
const BETA: f64 = 0.5;

struct Residuals {
    dual: DVector<f64>,
    cent: DVector<f64>,
    pri: DVector<f64>,
}

impl Residuals {
    fn norm(&self) -> f64 {
        (self.dual.norm_squared() + self.cent.norm_squared() + self.pri.norm_squared()).sqrt()
    }
}

fn residuals(prob: &Lowered, st: &PdState, fvals: &[f64], t: f64) -> Residuals {
    let mut dual = &prob.p * &st.x + &prob.c;
    for (f, &l) in prob.ineqs.iter().zip(st.lam.iter()) {
        for (i, g) in f.grad(&st.x).into_iter().enumerate() {
            dual[f.vars[i]] += l * g;
        }
    }
    if prob.eq.a.nrows() > 0 {
        dual += prob.eq.a.transpose() * &st.nu;
    }
    let cent = DVector::from_iterator(
        fvals.len(),
        fvals.iter().zip(st.lam.iter()).map(|(f, l)| -l * f - 1.0 / t),
    );
    let pri = if prob.eq.a.nrows() > 0 { &prob.eq.a * &st.x - &prob.eq.b } else { DVector::zeros(0) };
    Residuals { dual, cent, pri }
}

fn solve_newton(h: DMatrix<f64>, a: &DMatrix<f64>, rhs_x: DVector<f64>, rhs_eq: DVector<f64>) -> Option<(DVector<f64>, DVector<f64>)> {
    let d = h.nrows();
    let p = a.nrows();
    let diag_scale = (0..d).map(|i| h[(i, i)].abs()).fold(1.0, f64::max);
    if p == 0 {
        let mut delta = 1e-12 * diag_scale;
        for _ in 0..8 {
            let mut reg = h.clone();
            for i in 0..d {
                reg[(i, i)] += delta;
            }
            if let Some(ch) = reg.cholesky() {
                return Some((ch.solve(&rhs_x), DVector::zeros(0)));
            }
            delta *= 100.0;
        }
        return None;
    }
    let mut k = DMatrix::zeros(d + p, d + p);
    k.view_mut((0, 0), (d, d)).copy_from(&h);
    for i in 0..d {
        k[(i, i)] += 1e-12 * diag_scale;
    }
    k.view_mut((d, 0), (p, d)).copy_from(a);
    k.view_mut((0, d), (d, p)).copy_from(&a.transpose());
    let mut rhs = DVector::zeros(d + p);
    rhs.rows_mut(0, d).copy_from(&rhs_x);
    rhs.rows_mut(d, p).copy_from(&rhs_eq);
    let sol = k.full_piv_lu().solve(&rhs)?;
    if sol.iter().any(|v| !v.is_finite()) {
        return None;
    }
    Some((sol.rows(0, d).into_owned(), sol.rows(d, p).into_owned()))
}

/// Primal-dual iterations from a strictly feasible `x`.
///
/// `stop_early` is consulted after every iteration (used by phase I).
fn primal_dual(
    prob: &Lowered,
    x0: DVector<f64>,
    tol: f64,
    max_iter: usize,
    stop_early: &dyn Fn(&DVector<f64>) -> bool,
) -> PdOutcome {
    let m = prob.ineqs.len();
    let p = prob.eq.a.nrows();
    let mut fvals: Vec<f64> = prob.ineqs.iter().map(|f| f.value(&x0)).collect();
    let lam = DVector::from_iterator(m, fvals.iter().map(|f| (1.0 / -f).min(1e6)));
    let mut st = PdState { x: x0, lam, nu: DVector::zeros(p) };
    let grad0 = &prob.p * &st.x + &prob.c;
    let dual_scale = 1.0 + grad0.amax();
    let mut trace = Vec::new();

    let measure = |st: &PdState, fvals: &[f64]| {
        let gap: f64 = -fvals.iter().zip(st.lam.iter()).map(|(f, l)| f * l).sum::<f64>();
        let r = residuals(prob, st, fvals, 1.0);
        let obj = prob.objective(&st.x);
        KktResiduals {
            stationarity: r.dual.amax() / dual_scale,
            primal_infeasibility: fvals.iter().fold(0.0f64, |a, &f| a.max(f)) + if p > 0 { r.pri.amax() } else { 0.0 },
            complementarity: gap / (1.0 + obj.abs()),
        }
    };

    for iter in 0..max_iter {
        let kkt = measure(&st, &fvals);
        if kkt.stationarity <= tol && kkt.primal_infeasibility <= tol && kkt.complementarity <= tol {
            return PdOutcome { state: st, status: SolveStatus::Optimal, kkt, iterations: iter, trace };
        }
        if stop_early(&st.x) {
            return PdOutcome { state: st, status: SolveStatus::Optimal, kkt, iterations: iter, trace };
        }

        let gap: f64 = -fvals.iter().zip(st.lam.iter()).map(|(f, l)| f * l).sum::<f64>();
        let t = if m > 0 && gap > 0.0 { MU * m as f64 / gap } else { 1.0 };
        let res = residuals(prob, &st, &fvals, t);
        let res_norm = res.norm();

        let d = prob.dim;
        let mut h = prob.p.clone();
        let mut rhs = -(&prob.p * &st.x + &prob.c);
        if p > 0 {
            rhs -= prob.eq.a.transpose() * &st.nu;
        }
        let grads: Vec<Vec<f64>> = prob.ineqs.iter().map(|f| f.grad(&st.x)).collect();
        for ((f, g), (&fv, &l)) in prob.ineqs.iter().zip(&grads).zip(fvals.iter().zip(st.lam.iter())) {
            let w = l / -fv;
            for (i, &vi) in f.vars.iter().enumerate() {
                for (j, &vj) in f.vars.iter().enumerate() {
                    h[(vi, vj)] += w * g[i] * g[j];
                }
                rhs[vi] -= g[i] / (t * -fv);
            }
            if let Some(fh) = &f.hess {
                for (i, &vi) in f.vars.iter().enumerate() {
                    for (j, &vj) in f.vars.iter().enumerate() {
                        h[(vi, vj)] += l * fh[(i, j)];
                    }
                }
            }
        }
        let rhs_eq = -res.pri.clone();
        let Some((dx, dnu)) = solve_newton(h, &prob.eq.a, rhs, rhs_eq) else {
            let kkt = measure(&st, &fvals);
            return PdOutcome { state: st, status: SolveStatus::NumericalFailure, kkt, iterations: iter, trace };
        };
        let _ = d;
        let dlam = DVector::from_iterator(
            m,
            (0..m).map(|i| {
                let gdx: f64 = prob.ineqs[i].vars.iter().zip(&grads[i]).map(|(&v, g)| g * dx[v]).sum();
                (res.cent[i] - st.lam[i] * gdx) / fvals[i]
            }),
        );

        let mut s_max: f64 = 1.0;
        for i in 0..m {
            if dlam[i] < 0.0 {
                s_max = s_max.min(-st.lam[i] / dlam[i]);
            }
        }
        let mut s = 0.99 * s_max;
        let mut accepted = None;
        for _ in 0..80 {
            let x_new = &st.x + &dx * s;
            let f_new: Vec<f64> = prob.ineqs.iter().map(|f| f.value(&x_new)).collect();
            if f_new.iter().all(|&v| v < 0.0) {
                let cand = PdState { x: x_new, lam: &st.lam + &dlam * s, nu: &st.nu + &dnu * s };
                let r_new = residuals(prob, &cand, &f_new, t).norm();
                if r_new <= (1.0 - ALPHA * s) * res_norm {
                    accepted = Some((cand, f_new, r_new));
                    break;
                }
            }
            s *= BETA;
        }
        let Some((cand, f_new, r_new)) = accepted else {
            let kkt = measure(&st, &fvals);
            return PdOutcome { state: st, status: SolveStatus::NumericalFailure, kkt, iterations: iter, trace };
        };
        trace.push(IterationTrace { residual_before: res_norm, residual_after: r_new, step: s, gap });
        st = cand;
        fvals = f_new;
    }
    let kkt = measure(&st, &fvals);
    let status = if kkt.stationarity <= tol && kkt.primal_infeasibility <= tol && kkt.complementarity <= tol {
        SolveStatus::Optimal
    } else {
        SolveStatus::MaxIterations
    };
    PdOutcome { state: st, status, kkt, iterations: max_iter, trace }
}

/// Largest violation below which a start point is treated as strictly feasible.
const INTERIOR_MARGIN: f64 = 1e-10;
/// Phase I stops once every constraint has at least this much slack.
const PHASE_ONE_TARGET: f64 = 1e-4;

fn default_start(program: &ConvexProgram) -> DVector<f64> {
    DVector::from_iterator(
        program.dim,
        program.bounds.iter().map(|&(lo, hi)| match (lo.is_finite(), hi.is_finite()) {
            (true, true) => 0.5 * (lo + hi),
            (true, false) => lo + 1.0,
            (false, true) => hi - 1.0,
            (false, false) => 0.0,
        }),
    )
}

/// Solves `program` to tolerance `tol`.
///
/// Returns `Err` only for malformed programs; solver outcomes (including
/// infeasibility) are reported through [`SolveResult::status`].
pub fn solve(program: &ConvexProgram, tol: f64, max_iter: usize) -> Result<SolveResult> {
    let issues = validate(program);
    if !issues.is_empty() {
        return Err(Error::Contract(issues.join("; ")));
    }
    let prob = Lowered::from_program(program);
    let mut x = program.start.clone().unwrap_or_else(|| default_start(program));
    let mut iterations = 0;

    let needs_phase_one = !prob.ineqs.is_empty() && prob.max_ineq(&x) >= -INTERIOR_MARGIN;
    if needs_phase_one {
        let fmax = prob.max_ineq(&x);
        let floor = -1.0;
        let phase = prob.phase_one(floor);
        let mut z = DVector::zeros(prob.dim + 1);
        z.rows_mut(0, prob.dim).copy_from(&x);
        z[prob.dim] = fmax + 1.0 + fmax.abs();
        let inner = &prob;
        let early = move |z: &DVector<f64>| {
            let s = z[z.len() - 1];
            s < 0.0 && inner.max_ineq(&z.rows(0, inner.dim).into_owned()) <= -PHASE_ONE_TARGET
        };
        let out = primal_dual(&phase, z, tol, max_iter, &early);
        iterations += out.iterations;
        let zx = out.state.x.rows(0, prob.dim).into_owned();
        let slack = prob.max_ineq(&zx);
        if slack >= -INTERIOR_MARGIN {
            let infeasible = out.status == SolveStatus::Optimal;
            let status = if infeasible { SolveStatus::Infeasible } else { out.status };
            let x_ret = program.start.clone().unwrap_or(zx);
            return Ok(SolveResult {
                objective: prob.objective(&x_ret),
                x: x_ret,
                status,
                kkt: KktResiduals { primal_infeasibility: slack.max(0.0), ..out.kkt },
                iterations,
                trace: Vec::new(),
            });
        }
        x = zx;
    }

    let out = primal_dual(&prob, x, tol, max_iter.saturating_sub(iterations).max(1), &|_| false);
    iterations += out.iterations;
    let x = out.state.x;
    Ok(SolveResult { objective: prob.objective(&x), x, status: out.status, kkt: out.kkt, iterations, trace: out.trace })
}
