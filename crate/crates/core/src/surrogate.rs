//! Quadratic bounds on the cosine terms of the array power pattern.
//!
//! Every pair term of `|aᴴw|²` is a cosine of an affine function of the
//! variables. Replacing its second-order Taylor coefficient `−½cos(·)` by
//! `±½` gives a global majorizer (`+`) or minorizer (`−`) that is tight in
//! value and gradient at the expansion point. Summed over pairs and grid
//! points, the curvature collapses to a Kronecker product of the complete-graph
//! Laplacian with the weighted second moment of the wave vectors, so each
//! slot's bound only needs the true value, the true gradient and that moment.

use nalgebra::{DMatrix, DVector, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};

/// `x ↦ ½xᵀPx + cᵀx + r`.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticForm {
    pub p: DMatrix<f64>,
    pub c: DVector<f64>,
    pub r: f64,
}

impl QuadraticForm {
    pub fn zeros(dim: usize) -> Self {
        Self { p: DMatrix::zeros(dim, dim), c: DVector::zeros(dim), r: 0.0 }
    }

    pub fn dim(&self) -> usize {
        self.c.len()
    }

    pub fn eval(&self, x: &DVector<f64>) -> f64 {
        0.5 * x.dot(&(&self.p * x)) + self.c.dot(x) + self.r
    }

    pub fn gradient(&self, x: &DVector<f64>) -> DVector<f64> {
        &self.p * x + &self.c
    }

    /// Quadratic model `value + gradᵀ(x − x0) + ½(x − x0)ᵀP(x − x0)`.
    pub fn from_expansion(x0: &DVector<f64>, value: f64, grad: &DVector<f64>, curvature: DMatrix<f64>) -> Self {
        let px0 = &curvature * x0;
        let c = grad - &px0;
        let r = value - grad.dot(x0) + 0.5 * x0.dot(&px0);
        Self { p: curvature, c, r }
    }

    /// Adds `other`, whose variables occupy `offset..offset + other.dim()`.
    pub fn add_embedded(&mut self, other: &QuadraticForm, offset: usize) {
        let d = other.dim();
        let mut block = self.p.view_mut((offset, offset), (d, d));
        block += &other.p;
        let mut rows = self.c.rows_mut(offset, d);
        rows += &other.c;
        self.r += other.r;
    }
}

/// `aᵀx ≥ b`.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearConstraint {
    pub a: DVector<f64>,
    pub b: f64,
}

impl LinearConstraint {
    pub fn value(&self, x: &DVector<f64>) -> f64 {
        self.a.dot(x)
    }

    pub fn is_satisfied(&self, x: &DVector<f64>, tol: f64) -> bool {
        self.value(x) >= self.b - tol
    }
}

fn cos_bound(q0: &[f64], k: &[f64], phi: f64, sign: f64) -> QuadraticForm {
    assert_eq!(q0.len(), k.len(), "expansion point and wave vector differ in dimension");
    let k = DVector::from_column_slice(k);
    let q0 = DVector::from_column_slice(q0);
    let theta = k.dot(&q0) + phi;
    let grad = &k * (-theta.sin());
    let curvature = (&k * k.transpose()) * sign;
    QuadraticForm::from_expansion(&q0, theta.cos(), &grad, curvature)
}

/// Upper bound of `cos(kᵀq + φ)` tight at `q0`.
pub fn cos_majorizer(q0: &[f64], k: &[f64], phi: f64) -> QuadraticForm {
    cos_bound(q0, k, phi, 1.0)
}

/// Lower bound of `cos(kᵀq + φ)` tight at `q0`.
pub fn cos_minorizer(q0: &[f64], k: &[f64], phi: f64) -> QuadraticForm {
    cos_bound(q0, k, phi, -1.0)
}

/// One slot of the weighted power pattern `Σ_l g_l |a(k_l, q)ᴴ w|²`.
#[derive(Debug, Clone, Copy)]
pub struct SlotTerms<'a> {
    pub positions: &'a [Vector2<f64>],
    pub phases: &'a [f64],
    /// In-plane wave vectors, in the reciprocal of the position unit.
    pub directions: &'a [Vector2<f64>],
    pub weights: &'a [f64],
}

impl SlotTerms<'_> {
    fn check(&self) -> Result<()> {
        if self.positions.len() != self.phases.len() {
            return Err(Error::Contract(format!(
                "{} positions but {} phases",
                self.positions.len(),
                self.phases.len()
            )));
        }
        if self.directions.len() != self.weights.len() {
            return Err(Error::Contract(format!(
                "{} directions but {} weights",
                self.directions.len(),
                self.weights.len()
            )));
        }
        if self.positions.is_empty() {
            return Err(Error::Contract("empty array".into()));
        }
        Ok(())
    }

    /// Value with gradients in positions and phases.
    pub fn value_and_gradients(&self) -> (f64, Vec<Vector2<f64>>, Vec<f64>) {
        let n = self.positions.len();
        let scale = 1.0 / (n as f64).sqrt();
        let mut value = 0.0;
        let mut grad_q = vec![Vector2::zeros(); n];
        let mut grad_phi = vec![0.0; n];
        let mut z = vec![Complex64::new(0.0, 0.0); n];
        for (k, &g) in self.directions.iter().zip(self.weights) {
            for ((zn, q), &phi) in z.iter_mut().zip(self.positions).zip(self.phases) {
                *zn = Complex64::from_polar(scale, phi - k.dot(q));
            }
            let s: Complex64 = z.iter().sum();
            value += g * s.norm_sqr();
            let sc = s.conj();
            for ((zn, gq), gp) in z.iter().zip(grad_q.iter_mut()).zip(grad_phi.iter_mut()) {
                let im = (sc * zn).im;
                *gq += k * (2.0 * g * im);
                *gp -= 2.0 * g * im;
            }
        }
        (value, grad_q, grad_phi)
    }

    /// Weighted second moment `Σ_l g_l k_l k_lᵀ`.
    pub fn second_moment(&self) -> Matrix2<f64> {
        self.directions
            .iter()
            .zip(self.weights)
            .fold(Matrix2::zeros(), |acc, (k, &g)| acc + k * k.transpose() * g)
    }

    fn position_vector(&self) -> DVector<f64> {
        DVector::from_iterator(2 * self.positions.len(), self.positions.iter().flat_map(|q| [q.x, q.y]))
    }
}

/// Laplacian of the complete graph on `n` nodes counted over ordered pairs: `2nI − 2·11ᵀ`.
fn pair_laplacian(n: usize) -> DMatrix<f64> {
    DMatrix::from_fn(n, n, |i, j| if i == j { 2.0 * n as f64 - 2.0 } else { -2.0 })
}

fn position_curvature(slot: &SlotTerms, sign: f64) -> DMatrix<f64> {
    let n = slot.positions.len();
    let lap = pair_laplacian(n) * (sign / n as f64);
    lap.kronecker(&slot.second_moment())
}

fn position_bound(slot: &SlotTerms, sign: f64) -> Result<QuadraticForm> {
    slot.check()?;
    let (value, grad_q, _) = slot.value_and_gradients();
    let grad = DVector::from_iterator(2 * grad_q.len(), grad_q.iter().flat_map(|g| [g.x, g.y]));
    Ok(QuadraticForm::from_expansion(&slot.position_vector(), value, &grad, position_curvature(slot, sign)))
}

/// Convex upper bound of the summed slot leakage over the stacked positions
/// `[q[1]; …; q[B]]` (each `q[b] = [x_1, y_1, …, x_N, y_N]`).
pub fn leakage_majorizer(slots: &[SlotTerms]) -> Result<QuadraticForm> {
    let first = slots.first().ok_or_else(|| Error::Contract("no slots".into()))?;
    let n = first.positions.len();
    let mut total = QuadraticForm::zeros(2 * n * slots.len());
    for (b, slot) in slots.iter().enumerate() {
        if slot.positions.len() != n {
            return Err(Error::Contract("slots disagree on the number of antennas".into()));
        }
        total.add_embedded(&position_bound(slot, 1.0)?, 2 * n * b);
    }
    Ok(total)
}

/// Convex upper bound of one slot's leakage over `q[m]`.
pub fn slot_leakage_majorizer(slot: &SlotTerms) -> Result<QuadraticForm> {
    position_bound(slot, 1.0)
}

/// Concave lower bound of one slot's coverage gain over `q[m]`.
pub fn gain_minorizer(slot: &SlotTerms) -> Result<QuadraticForm> {
    position_bound(slot, -1.0)
}

fn phase_bound(slot: &SlotTerms, sign: f64) -> Result<QuadraticForm> {
    slot.check()?;
    let n = slot.positions.len();
    let (value, _, grad_phi) = slot.value_and_gradients();
    let mass: f64 = slot.weights.iter().sum();
    let curvature = pair_laplacian(n) * (sign * mass / n as f64);
    let x0 = DVector::from_column_slice(slot.phases);
    Ok(QuadraticForm::from_expansion(&x0, value, &DVector::from_vec(grad_phi), curvature))
}

/// Convex upper bound of one slot's leakage over its phase vector.
pub fn phase_leakage_majorizer(slot: &SlotTerms) -> Result<QuadraticForm> {
    phase_bound(slot, 1.0)
}

/// Concave lower bound of one slot's coverage gain over its phase vector.
pub fn phase_gain_minorizer(slot: &SlotTerms) -> Result<QuadraticForm> {
    phase_bound(slot, -1.0)
}

/// Linearized spacing `d̂(q_n, q_n̂) ≥ d_min` over `[q_n; q_n̂]`, expanded at
/// the current positions. The linearization never exceeds the true distance.
pub fn spacing_linearization(
    qn: &Vector2<f64>,
    qm: &Vector2<f64>,
    min_spacing: f64,
    guard: f64,
) -> Result<LinearConstraint> {
    let delta = qn - qm;
    let dist = delta.norm();
    if dist < guard {
        return Err(Error::Domain(format!(
            "antennas {dist:e} apart are too close to linearize the spacing constraint"
        )));
    }
    let u = delta / dist;
    Ok(LinearConstraint { a: DVector::from_vec(vec![u.x, u.y, -u.x, -u.y]), b: min_spacing })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn rand_vec(rng: &mut ChaCha8Rng, d: usize, s: f64) -> Vec<f64> {
        (0..d).map(|_| rng.gen_range(-s..s)).collect()
    }

    #[test]
    fn cos_bounds_tight_and_ordered() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..10_000 {
            let d = rng.gen_range(1..5);
            let q0 = rand_vec(&mut rng, d, 2.0);
            let k = rand_vec(&mut rng, d, 7.0);
            let q = rand_vec(&mut rng, d, 2.0);
            let phi = rng.gen_range(-PI..PI);
            let truth = |x: &[f64]| (x.iter().zip(&k).map(|(a, b)| a * b).sum::<f64>() + phi).cos();
            let ub = cos_majorizer(&q0, &k, phi);
            let lb = cos_minorizer(&q0, &k, phi);
            let x0 = DVector::from_column_slice(&q0);
            let x = DVector::from_column_slice(&q);
            assert!((ub.eval(&x0) - truth(&q0)).abs() < 1e-12);
            assert!((lb.eval(&x0) - truth(&q0)).abs() < 1e-12);
            assert!(ub.eval(&x) >= truth(&q) - 1e-9);
            assert!(lb.eval(&x) <= truth(&q) + 1e-9);
        }
    }

    #[test]
    fn zero_wave_vector_is_constant() {
        let f = cos_majorizer(&[0.3, -0.2], &[0.0, 0.0], 0.7);
        for x in [[0.0, 0.0], [5.0, -3.0]] {
            assert_relative_eq!(f.eval(&DVector::from_column_slice(&x)), 0.7f64.cos(), epsilon = 1e-15);
        }
        let g = cos_minorizer(&[0.3, -0.2], &[0.0, 0.0], 0.7);
        assert_relative_eq!(g.eval(&DVector::from_vec(vec![9.0, 1.0])), 0.7f64.cos(), epsilon = 1e-15);
    }

    #[test]
    fn spacing_linearization_cases() {
        let qn = Vector2::new(0.3, 0.1);
        let qm = Vector2::new(-0.2, 0.4);
        let c = spacing_linearization(&qn, &qm, 0.5, 1e-6).unwrap();
        let stack = |a: &Vector2<f64>, b: &Vector2<f64>| DVector::from_vec(vec![a.x, a.y, b.x, b.y]);
        assert_relative_eq!(c.value(&stack(&qn, &qm)), (qn - qm).norm(), epsilon = 1e-14);
        let dir = (qn - qm).normalize();
        let moved = qn + dir * 0.37;
        assert_relative_eq!(c.value(&stack(&moved, &qm)), (moved - qm).norm(), epsilon = 1e-14);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..10_000 {
            let a = Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            let b = Vector2::new(rng.gen_range(-2.0..2.0), rng.gen_range(-2.0..2.0));
            assert!(c.value(&stack(&a, &b)) <= (a - b).norm() + 1e-12);
        }
        assert!(spacing_linearization(&qn, &qn, 0.5, 1e-6).is_err());
    }

    #[test]
    fn slot_checks_dimensions() {
        let q = [Vector2::zeros(); 2];
        let slot = SlotTerms { positions: &q, phases: &[0.0], directions: &[], weights: &[] };
        assert!(gain_minorizer(&slot).is_err());
        assert!(phase_leakage_majorizer(&slot).is_err());
    }
}
