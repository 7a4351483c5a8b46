//! Quantitative implicit function theorem.
//!
//! Given `F: R^j × R^m → R^j` with `F(v0, y0) = 0` and invertible
//! `∂F/∂v(v0, y0)`, set `T0 = (∂F/∂v(v0, y0))⁻¹`. If on the closed balls
//! `B1 = B(v0, r1)`, `B2 = B(y0, r2)`
//!
//! ```text
//! sup_{y∈B2} |F(v0, y)|            ≤ r1 / (2‖T0‖)
//! sup_{B1×B2} ‖I − T0 ∂F/∂v(v, y)‖ ≤ 1/2
//! ```
//!
//! then `v ↦ v − T0 F(v, y)` is a ½-contraction of `B1` for every `y ∈ B2`,
//! and its fixed point `q(y)` is the unique root of `F(·, y)` in `B1`.

use nalgebra::{DMatrix, DVector};

use crate::constraints::{checked_inverse, op_norm, MultiIndex};
use crate::error::{Error, Result};

/// Anchor residual tolerance for `F(v0, y0) = 0`.
pub const ANCHOR_TOL: f64 = 1e-10;
pub const DEFAULT_SAMPLES: usize = 4096;
pub const DEFAULT_TOL: f64 = 1e-12;
pub const MAX_ITER: usize = 200;

/// `F(v, y)` with its partial Jacobians.
pub trait ImplicitMap: Send + Sync {
    /// `(j, m)`: dimensions of `v` and `y`.
    fn dims(&self) -> (usize, usize);
    fn eval(&self, v: &DVector<f64>, y: &DVector<f64>) -> DVector<f64>;
    fn jac_v(&self, v: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
    fn jac_y(&self, v: &DVector<f64>, y: &DVector<f64>) -> DMatrix<f64>;
    fn in_domain(&self, _v: &DVector<f64>, _y: &DVector<f64>) -> bool {
        true
    }
}

/// `F(v, y) = v − A y − b`.
#[derive(Debug, Clone)]
pub struct LinearMap {
    pub a: DMatrix<f64>,
    pub b: DVector<f64>,
}

impl ImplicitMap for LinearMap {
    fn dims(&self) -> (usize, usize) {
        (self.a.nrows(), self.a.ncols())
    }
    fn eval(&self, v: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        v - &self.a * y - &self.b
    }
    fn jac_v(&self, _v: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::identity(self.a.nrows(), self.a.nrows())
    }
    fn jac_y(&self, _v: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        -&self.a
    }
}

/// `F(v, y) = v∘v − y` componentwise (`j = m`).
#[derive(Debug, Clone, Copy)]
pub struct SquareMap {
    pub dim: usize,
}

impl ImplicitMap for SquareMap {
    fn dims(&self) -> (usize, usize) {
        (self.dim, self.dim)
    }
    fn eval(&self, v: &DVector<f64>, y: &DVector<f64>) -> DVector<f64> {
        v.component_mul(v) - y
    }
    fn jac_v(&self, v: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        DMatrix::from_diagonal(&(v * 2.0))
    }
    fn jac_y(&self, _v: &DVector<f64>, _y: &DVector<f64>) -> DMatrix<f64> {
        -DMatrix::identity(self.dim, self.dim)
    }
}

pub struct ImplicitProblem {
    map: Box<dyn ImplicitMap>,
    v0: DVector<f64>,
    y0: DVector<f64>,
    r1: f64,
    r2: f64,
    t0: DMatrix<f64>,
}

impl std::fmt::Debug for ImplicitProblem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImplicitProblem")
            .field("v0", &self.v0.as_slice())
            .field("y0", &self.y0.as_slice())
            .field("r1", &self.r1)
            .field("r2", &self.r2)
            .finish_non_exhaustive()
    }
}

impl ImplicitProblem {
    pub fn new(map: Box<dyn ImplicitMap>, v0: DVector<f64>, y0: DVector<f64>, r1: f64, r2: f64) -> Result<Self> {
        let (j, m) = map.dims();
        if v0.len() != j {
            return Err(Error::DimensionMismatch { expected: j, found: v0.len() });
        }
        if y0.len() != m {
            return Err(Error::DimensionMismatch { expected: m, found: y0.len() });
        }
        if !(r1 > 0.0) || !(r2 > 0.0) {
            return Err(Error::InvalidInput(format!("radii must be positive (r1={r1}, r2={r2})")));
        }
        let residual = map.eval(&v0, &y0).norm();
        if residual > ANCHOR_TOL {
            return Err(Error::InvalidInput(format!("anchor is not a root: |F(v0, y0)| = {residual:e}")));
        }
        let jv = map.jac_v(&v0, &y0);
        let t0 = checked_inverse(&jv).ok_or(Error::SingularJacobian { det: jv.determinant() })?;
        Ok(Self { map, v0, y0, r1, r2, t0 })
    }

    pub fn map(&self) -> &dyn ImplicitMap {
        self.map.as_ref()
    }
    pub fn v0(&self) -> &DVector<f64> {
        &self.v0
    }
    pub fn y0(&self) -> &DVector<f64> {
        &self.y0
    }
    pub fn r1(&self) -> f64 {
        self.r1
    }
    pub fn r2(&self) -> f64 {
        self.r2
    }
    pub fn t0(&self) -> &DMatrix<f64> {
        &self.t0
    }
}

/// Sampled suprema of both radius conditions.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RadiiReport {
    /// `sup_{y∈B2} |F(v0, y)|`.
    pub residual_sup: f64,
    /// `r1 / (2‖T0‖)`.
    pub residual_limit: f64,
    /// `sup_{B1×B2} ‖I − T0 ∂F/∂v‖`.
    pub contraction_sup: f64,
    pub contraction_limit: f64,
    pub samples: usize,
}

impl RadiiReport {
    pub fn residual_margin(&self) -> f64 {
        self.residual_limit - self.residual_sup
    }

    pub fn contraction_margin(&self) -> f64 {
        self.contraction_limit - self.contraction_sup
    }

    /// Both margins strictly positive; tight cases are rejected.
    pub fn holds(&self) -> bool {
        self.residual_margin() > 0.0 && self.contraction_margin() > 0.0
    }
}

const PRIMES: [u32; 16] = [2, 3, 5, 7, 11, 13, 17, 19, 23, 29, 31, 37, 41, 43, 47, 53];

fn radical_inverse(mut i: u64, base: u32) -> f64 {
    let b = base as u64;
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut acc = 0.0;
    while i > 0 {
        acc += (i % b) as f64 * f;
        i /= b;
        f *= inv;
    }
    acc
}

/// Halton point `index` in `[-1, 1]^dim`.
fn halton_cube(index: u64, dim: usize) -> Vec<f64> {
    (0..dim).map(|k| 2.0 * radical_inverse(index, PRIMES[k % PRIMES.len()]) - 1.0).collect()
}

/// Points of `[-1,1]^dim` outside the unit ball are pushed radially onto the
/// sphere, so the sample covers interior and boundary.
fn fold_into_ball(z: &[f64], center: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = z.iter().map(|c| c * c).sum::<f64>().sqrt();
    let scale = if n > 1.0 { radius / n } else { radius };
    DVector::from_iterator(z.len(), z.iter().map(|c| c * scale)) + center
}

/// Center, the `2·dim` axis extremes, and folded Halton points.
fn ball_points(center: &DVector<f64>, radius: f64, n: usize) -> Vec<DVector<f64>> {
    let dim = center.len();
    let mut pts = vec![center.clone()];
    for axis in 0..dim {
        for s in [-1.0, 1.0] {
            let mut p = center.clone();
            p[axis] += s * radius;
            pts.push(p);
        }
    }
    pts.extend((1..=n as u64).map(|i| fold_into_ball(&halton_cube(i, dim), center, radius)));
    pts
}

/// Checks both radius conditions on low-discrepancy samples.
pub fn verify_radii(p: &ImplicitProblem, n_samples: usize) -> Result<RadiiReport> {
    let (j, m) = p.map.dims();
    let t0_norm = op_norm(&p.t0);
    let identity = DMatrix::<f64>::identity(j, j);

    let mut residual_sup = 0.0_f64;
    for y in ball_points(&p.y0, p.r2, n_samples) {
        if !p.map.in_domain(&p.v0, &y) {
            return Err(Error::DomainViolation { point: p.v0.iter().chain(y.iter()).copied().collect() });
        }
        residual_sup = residual_sup.max(p.map.eval(&p.v0, &y).norm());
    }

    let mut pairs: Vec<(DVector<f64>, DVector<f64>)> = Vec::new();
    let corners_v = ball_points(&p.v0, p.r1, 0);
    let corners_y = ball_points(&p.y0, p.r2, 0);
    for v in &corners_v {
        for y in &corners_y {
            pairs.push((v.clone(), y.clone()));
        }
    }
    for i in 1..=n_samples as u64 {
        let z = halton_cube(i, j + m);
        pairs.push((fold_into_ball(&z[..j], &p.v0, p.r1), fold_into_ball(&z[j..], &p.y0, p.r2)));
    }
    let mut contraction_sup = 0.0_f64;
    for (v, y) in &pairs {
        if !p.map.in_domain(v, y) {
            return Err(Error::DomainViolation { point: v.iter().chain(y.iter()).copied().collect() });
        }
        let defect = &identity - &p.t0 * p.map.jac_v(v, y);
        contraction_sup = contraction_sup.max(op_norm(&defect));
    }

    Ok(RadiiReport {
        residual_sup,
        residual_limit: p.r1 / (2.0 * t0_norm),
        contraction_sup,
        contraction_limit: 0.5,
        samples: n_samples,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ImplicitSolution {
    pub v: DVector<f64>,
    pub residual: f64,
    pub iterations: usize,
    /// `|F(v_n, y)|` for every iterate, starting with `v0`.
    pub residual_history: Vec<f64>,
}

/// Fixed-point iteration `v ← v − T0 F(v, y)` from `v0`.
pub fn solve_implicit(p: &ImplicitProblem, y: &DVector<f64>, tol: f64) -> Result<ImplicitSolution> {
    solve_implicit_from(p, p.v0.clone(), y, tol)
}

/// Same iteration from an arbitrary start in `B1`.
pub fn solve_implicit_from(p: &ImplicitProblem, start: DVector<f64>, y: &DVector<f64>, tol: f64) -> Result<ImplicitSolution> {
    let (j, m) = p.map.dims();
    if y.len() != m {
        return Err(Error::DimensionMismatch { expected: m, found: y.len() });
    }
    if start.len() != j {
        return Err(Error::DimensionMismatch { expected: j, found: start.len() });
    }
    let gap = (y - &p.y0).norm();
    if gap > p.r2 * (1.0 + 1e-12) {
        return Err(Error::InvalidInput(format!("|y - y0| = {gap} exceeds r2 = {}", p.r2)));
    }
    let mut v = start;
    let mut history = Vec::new();
    for iterations in 0..=MAX_ITER {
        let f = p.map.eval(&v, y);
        let residual = f.norm();
        history.push(residual);
        if residual <= tol {
            return Ok(ImplicitSolution { v, residual, iterations, residual_history: history });
        }
        if iterations == MAX_ITER {
            return Err(Error::NoConvergence { iterations, residual });
        }
        v -= &p.t0 * f;
        let distance = (&v - &p.v0).norm();
        if distance > p.r1 * (1.0 + 1e-12) {
            return Err(Error::LeftBall { radius: p.r1, distance });
        }
    }
    unreachable!("loop returns on its last iteration")
}

/// `∂q/∂y = −(∂F/∂v)⁻¹ ∂F/∂y` at `(v, y)`.
pub fn implicit_jacobian(p: &ImplicitProblem, y: &DVector<f64>, v: &DVector<f64>) -> Result<DMatrix<f64>> {
    let jv = p.map.jac_v(v, y);
    let inv = checked_inverse(&jv).ok_or(Error::SingularJacobian { det: jv.determinant() })?;
    Ok(-(inv * p.map.jac_y(v, y)))
}

/// Copy of `u` with the coordinates listed in `pi` replaced by `v`.
pub fn embed_z_pi(u: &[f64], v: &[f64], pi: &MultiIndex) -> Result<Vec<f64>> {
    if pi.len() != v.len() {
        return Err(Error::DimensionMismatch { expected: pi.len(), found: v.len() });
    }
    if pi.indices().iter().any(|&i| i >= u.len()) {
        return Err(Error::InvalidInput(format!("multi-index {:?} out of range for d={}", pi.indices(), u.len())));
    }
    let mut out = u.to_vec();
    for (&i, &value) in pi.indices().iter().zip(v) {
        out[i] = value;
    }
    Ok(out)
}
