//! Inequality constraint systems `c(u, x) ≤ 0` on a control manifold, the
//! admissible-control multifunction `U(x)`, and sampled estimates of its
//! regularity constants.
//!
//! For a regular control `u` (not a manifold vertex and not flagged degenerate
//! by the system) with assigned chart `φ`, the control differential in chart
//! coordinates is the `j×d` matrix `∂c/∂u · φ'`. A multi-index `π` selects `j`
//! of its columns; `π` is usable at `(u,x)` when that square block is
//! invertible. The sensitivity at `(u,x)` is
//!
//! ```text
//! T(u,x) = max_π ‖ (∂c/∂u · φ' · T_π)⁻¹ · ∂c/∂x ‖
//! ```
//!
//! and `τ` is its supremum over feasible regular pairs. The split bound
//! `λ ≥ ‖(…)⁻¹‖`, `μ ≥ ‖∂c/∂y‖` (for `y` near `x`) gives `τ ≤ λμ`.

use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::geometry::{ControlManifold, StateSpace, ON_MANIFOLD_TOL};
use crate::hausdorff::{dist, hausdorff_distance, FiniteSet};

/// Feasibility tolerance on `max_i c_i(u, x)`.
pub const FEAS_TOL: f64 = 1e-12;

/// Relative floor on `|det|` for a square block to count as invertible.
pub const DET_REL_TOL: f64 = 1e-10;

/// Relative step of the central finite-difference fallback.
pub const FD_REL_STEP: f64 = 1e-6;

/// Number of halvings of `σ` tried by [`check_adherence`].
pub const ADHERENCE_LEVELS: usize = 8;

/// Vector constraint map `c: M × A → R^j` with `u ∈ R^n`, `x ∈ R^m`.
///
/// Jacobians default to central finite differences; analytic systems should
/// override them.
pub trait ConstraintSystem: Send + Sync {
    fn num_constraints(&self) -> usize;
    fn control_dim(&self) -> usize;
    fn state_dim(&self) -> usize;

    fn eval(&self, u: &[f64], x: &[f64], out: &mut [f64]);

    /// `∂c/∂u` in ambient coordinates, `j × n`.
    fn jac_u(&self, u: &[f64], x: &[f64]) -> DMatrix<f64> {
        let j = self.num_constraints();
        central_difference(j, u, |up, out| self.eval(up, x, out))
    }

    /// `∂c/∂x`, `j × m`.
    fn jac_x(&self, u: &[f64], x: &[f64]) -> DMatrix<f64> {
        let j = self.num_constraints();
        central_difference(j, x, |xp, out| self.eval(u, xp, out))
    }

    /// Controls where `c` is not differentiable or otherwise excluded,
    /// beyond the manifold's own nonregular points.
    fn is_degenerate(&self, _u: &[f64]) -> bool {
        false
    }
}

fn central_difference<F>(rows: usize, at: &[f64], f: F) -> DMatrix<f64>
where
    F: Fn(&[f64], &mut [f64]),
{
    let mut jac = DMatrix::zeros(rows, at.len());
    let mut p = at.to_vec();
    let mut plus = vec![0.0; rows];
    let mut minus = vec![0.0; rows];
    for col in 0..at.len() {
        let step = FD_REL_STEP * at[col].abs().max(1.0);
        p[col] = at[col] + step;
        f(&p, &mut plus);
        p[col] = at[col] - step;
        f(&p, &mut minus);
        p[col] = at[col];
        for row in 0..rows {
            jac[(row, col)] = (plus[row] - minus[row]) / (2.0 * step);
        }
    }
    jac
}

/// `max_i c_i(u, x)`.
pub fn max_violation(cs: &dyn ConstraintSystem, u: &[f64], x: &[f64]) -> f64 {
    let mut out = vec![0.0; cs.num_constraints()];
    cs.eval(u, x, &mut out);
    out.into_iter().fold(f64::NEG_INFINITY, f64::max)
}

pub fn is_feasible(cs: &dyn ConstraintSystem, u: &[f64], x: &[f64]) -> bool {
    max_violation(cs, u, x) <= FEAS_TOL
}

/// Strictly increasing multi-index `π = (i_1 < … < i_j)`, zero-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct MultiIndex(Vec<usize>);

impl MultiIndex {
    /// Validates `indices` against the ambient dimension `d`.
    pub fn new(indices: Vec<usize>, d: usize) -> Result<Self> {
        if indices.is_empty() || indices.len() > d {
            return Err(Error::InvalidInput(format!("multi-index length must be in 1..={d}")));
        }
        if indices.windows(2).any(|w| w[0] >= w[1]) || indices.iter().any(|&i| i >= d) {
            return Err(Error::InvalidInput(format!("malformed multi-index {indices:?} for d={d}")));
        }
        Ok(Self(indices))
    }

    pub fn indices(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Selection matrix `T_π` (`d × j`): `(T_π)_{h,l} = 1` iff `h = i_l`.
    pub fn selection_matrix(&self, d: usize) -> DMatrix<f64> {
        let mut t = DMatrix::zeros(d, self.0.len());
        for (l, &h) in self.0.iter().enumerate() {
            t[(h, l)] = 1.0;
        }
        t
    }
}

/// All multi-indices of length `j` over `0..d`, in lexicographic order.
pub fn all_multi_indices(d: usize, j: usize) -> Vec<MultiIndex> {
    fn rec(start: usize, d: usize, left: usize, cur: &mut Vec<usize>, out: &mut Vec<MultiIndex>) {
        if left == 0 {
            out.push(MultiIndex(cur.clone()));
            return;
        }
        for i in start..=(d - left) {
            cur.push(i);
            rec(i + 1, d, left - 1, cur, out);
            cur.pop();
        }
    }
    let mut out = Vec::new();
    if j >= 1 && j <= d {
        rec(0, d, j, &mut Vec::with_capacity(j), &mut out);
    }
    out
}

/// Operator 2-norm.
pub fn op_norm(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 0.0;
    }
    if m.nrows() == 1 || m.ncols() == 1 {
        return m.norm();
    }
    m.clone().singular_values().max()
}

/// `√(p1·p2)·max|S_hl|`, an upper bound on [`op_norm`].
pub fn entrywise_norm_bound(m: &DMatrix<f64>) -> f64 {
    let max_abs = m.iter().fold(0.0_f64, |a, v| a.max(v.abs()));
    ((m.nrows() * m.ncols()) as f64).sqrt() * max_abs
}

/// Inverse of a square matrix if `|det| ≥ DET_REL_TOL × max|entry|`.
pub fn checked_inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let scale = a.iter().fold(0.0_f64, |s, v| s.max(v.abs()));
    let scale = if scale == 0.0 { 1.0 } else { scale };
    let det = a.determinant();
    if det.abs() < DET_REL_TOL * scale {
        return None;
    }
    a.clone().try_inverse()
}

/// `∂c/∂u · φ'` at a regular control, `j × d`.
pub fn chart_differential(cs: &dyn ConstraintSystem, manifold: &ControlManifold, u: &[f64], x: &[f64]) -> Result<DMatrix<f64>> {
    let (chart, _) = manifold.chart_at(u)?;
    let tangent = chart.tangent();
    let t = DMatrix::from_column_slice(manifold.ambient_dim(), manifold.chart_dim(), &tangent);
    Ok(cs.jac_u(u, x) * t)
}

/// Sensitivities at one feasible regular pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalRegularity {
    /// `max_π ‖(dc∘T_π)⁻¹ ∂c/∂x‖`.
    pub tau: f64,
    /// `max_π ‖(dc∘T_π)⁻¹‖`.
    pub inverse_norm: f64,
}

pub fn local_regularity(cs: &dyn ConstraintSystem, manifold: &ControlManifold, u: &[f64], x: &[f64]) -> Result<LocalRegularity> {
    let dc = chart_differential(cs, manifold, u, x)?;
    let dx = cs.jac_x(u, x);
    let j = cs.num_constraints();
    let d = dc.ncols();
    let mut tau = f64::NEG_INFINITY;
    let mut inverse_norm = f64::NEG_INFINITY;
    for pi in all_multi_indices(d, j) {
        let block = &dc * pi.selection_matrix(d);
        if let Some(inv) = checked_inverse(&block) {
            inverse_norm = inverse_norm.max(op_norm(&inv));
            tau = tau.max(op_norm(&(&inv * &dx)));
        }
    }
    if tau == f64::NEG_INFINITY {
        return Err(Error::NoInvertibleProjection { control: u.to_vec(), state: x.to_vec() });
    }
    Ok(LocalRegularity { tau, inverse_norm })
}

/// Feasible sampled controls at one state.
#[derive(Debug, Clone, PartialEq)]
pub struct AdmissibleSample {
    pub state: Vec<f64>,
    pub controls: FiniteSet,
    pub mesh: f64,
}

/// `U(x)` sampled at mesh `h`.
pub fn admissible_set(cs: &dyn ConstraintSystem, manifold: &ControlManifold, x: &[f64], h: f64) -> Result<AdmissibleSample> {
    let candidates = manifold.sample(h)?;
    filter_admissible(cs, &candidates, x, h)
}

/// Keeps the feasible points of a precomputed manifold sample.
pub fn filter_admissible(cs: &dyn ConstraintSystem, candidates: &FiniteSet, x: &[f64], h: f64) -> Result<AdmissibleSample> {
    let mut out = vec![0.0; cs.num_constraints()];
    let mut coords = Vec::new();
    for u in candidates.iter() {
        cs.eval(u, x, &mut out);
        if out.iter().all(|&c| c <= FEAS_TOL) {
            coords.extend_from_slice(u);
        }
    }
    if coords.is_empty() {
        return Err(Error::EmptyAdmissible { state: x.to_vec(), mesh: h });
    }
    Ok(AdmissibleSample { state: x.to_vec(), controls: FiniteSet::from_flat(candidates.dim(), coords)?, mesh: h })
}

fn is_regular(cs: &dyn ConstraintSystem, manifold: &ControlManifold, u: &[f64]) -> bool {
    !manifold.is_nonregular(u, ON_MANIFOLD_TOL) && !cs.is_degenerate(u)
}

/// Grid suprema of the regularity quantities, with the meshes used.
///
/// Values are lower bounds of the continuum suprema.
#[derive(Debug, Clone, PartialEq)]
pub struct RegularitySweep {
    pub tau: f64,
    pub lambda: f64,
    pub mu: f64,
    pub tau_witness: Option<(Vec<f64>, Vec<f64>)>,
    pub lambda_witness: Option<(Vec<f64>, Vec<f64>)>,
    pub h_x: f64,
    pub h_u: f64,
    pub r: f64,
}

#[derive(Clone)]
struct PartialSweep {
    tau: f64,
    lambda: f64,
    mu: f64,
    tau_witness: Option<(Vec<f64>, Vec<f64>)>,
    lambda_witness: Option<(Vec<f64>, Vec<f64>)>,
}

impl PartialSweep {
    fn empty() -> Self {
        Self { tau: 0.0, lambda: 0.0, mu: 0.0, tau_witness: None, lambda_witness: None }
    }

    fn merge(mut self, other: Self) -> Self {
        if other.tau > self.tau {
            self.tau = other.tau;
            self.tau_witness = other.tau_witness;
        }
        if other.lambda > self.lambda {
            self.lambda = other.lambda;
            self.lambda_witness = other.lambda_witness;
        }
        self.mu = self.mu.max(other.mu);
        self
    }
}

/// Offsets `y − x` used for the μ sweep: zero and `±r` along each axis.
fn mu_offsets(m: usize, r: f64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![0.0; m]];
    for axis in 0..m {
        for s in [-1.0, 1.0] {
            let mut e = vec![0.0; m];
            e[axis] = s * r;
            out.push(e);
        }
    }
    out
}

/// One sweep over state nodes (mesh `h_x`) and admissible controls (mesh
/// `h_u`) computing sampled `τ`, `λ` and `μ` together, so that `τ ≤ λμ`
/// holds on the same samples.
pub fn regularity_sweep(
    cs: &dyn ConstraintSystem,
    manifold: &ControlManifold,
    space: &StateSpace,
    h_x: f64,
    h_u: f64,
    r: f64,
) -> Result<RegularitySweep> {
    if !(r > 0.0) {
        return Err(Error::InvalidInput(format!("state radius must be positive, got {r}")));
    }
    let states = space.sample_grid(h_x)?;
    let candidates = manifold.sample(h_u)?;
    let offsets = mu_offsets(space.dim(), r);
    let partial = states
        .par_iter()
        .map(|x| -> Result<PartialSweep> {
            let sample = filter_admissible(cs, &candidates, x, h_u)?;
            let mut acc = PartialSweep::empty();
            let mut y = x.clone();
            for u in sample.controls.iter() {
                if !is_regular(cs, manifold, u) {
                    continue;
                }
                let local = local_regularity(cs, manifold, u, x)?;
                if acc.tau_witness.is_none() || local.tau > acc.tau {
                    acc.tau = local.tau;
                    acc.tau_witness = Some((u.to_vec(), x.clone()));
                }
                if acc.lambda_witness.is_none() || local.inverse_norm > acc.lambda {
                    acc.lambda = local.inverse_norm;
                    acc.lambda_witness = Some((u.to_vec(), x.clone()));
                }
                for off in &offsets {
                    for (yi, (xi, oi)) in y.iter_mut().zip(x.iter().zip(off)) {
                        *yi = xi + oi;
                    }
                    acc.mu = acc.mu.max(op_norm(&cs.jac_x(u, &y)));
                }
            }
            Ok(acc)
        })
        .try_reduce(PartialSweep::empty, |a, b| Ok(a.merge(b)))?;
    Ok(RegularitySweep {
        tau: partial.tau,
        lambda: partial.lambda,
        mu: partial.mu,
        tau_witness: partial.tau_witness,
        lambda_witness: partial.lambda_witness,
        h_x,
        h_u,
        r,
    })
}

/// Sampled `τ` over the state and control grids.
pub fn tau_estimate(cs: &dyn ConstraintSystem, manifold: &ControlManifold, space: &StateSpace, h_x: f64, h_u: f64) -> Result<f64> {
    Ok(regularity_sweep(cs, manifold, space, h_x, h_u, 1.0)?.tau)
}

/// Sampled `(λ, μ)`; `μ` looks at states within `r` of each grid node.
pub fn lambda_mu_bounds(
    cs: &dyn ConstraintSystem,
    manifold: &ControlManifold,
    space: &StateSpace,
    h_x: f64,
    h_u: f64,
    r: f64,
) -> Result<(f64, f64)> {
    let s = regularity_sweep(cs, manifold, space, h_x, h_u, r)?;
    Ok((s.lambda, s.mu))
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdherenceReport {
    pub holds: bool,
    /// A degenerate feasible control with no regular feasible neighbour.
    pub failing: Option<Vec<f64>>,
    /// Smallest radius at which the failing control was probed.
    pub failing_radius: Option<f64>,
    /// Number of degenerate feasible controls examined.
    pub checked: usize,
}

/// Checks that every sampled feasible control within `h` of the degenerate
/// set is a limit of regular feasible controls.
///
/// For each such `u` the radii `σ, σ/2, …` ([`ADHERENCE_LEVELS`] values) are
/// probed; at radius `s` the manifold is resampled near `u` at mesh
/// `min(h, s/2)` and a feasible regular control other than `u` within `s`
/// must exist.
pub fn check_adherence(cs: &dyn ConstraintSystem, manifold: &ControlManifold, x: &[f64], sigma: f64, h: f64) -> Result<AdherenceReport> {
    if !(sigma > 0.0) {
        return Err(Error::InvalidInput(format!("sigma must be positive, got {sigma}")));
    }
    let sample = match admissible_set(cs, manifold, x, h) {
        Ok(s) => s,
        Err(Error::EmptyAdmissible { .. }) => {
            return Ok(AdherenceReport { holds: true, failing: None, failing_radius: None, checked: 0 })
        }
        Err(e) => return Err(e),
    };
    let vertices = manifold.nonregular_points();
    let near_degenerate = |u: &[f64]| cs.is_degenerate(u) || vertices.iter().any(|v| dist(u, v) <= h);
    let mut checked = 0;
    for u in sample.controls.iter().filter(|u| near_degenerate(u)) {
        checked += 1;
        for level in 0..ADHERENCE_LEVELS {
            let radius = sigma / (1u64 << level) as f64;
            let mesh = h.min(radius / 2.0);
            let found = manifold.sample_window(mesh, u, radius)?.is_some_and(|local| {
                local.iter().any(|w| dist(w, u) > 0.0 && is_regular(cs, manifold, w) && is_feasible(cs, w, x))
            });
            if !found {
                return Ok(AdherenceReport {
                    holds: false,
                    failing: Some(u.to_vec()),
                    failing_radius: Some(radius),
                    checked,
                });
            }
        }
    }
    Ok(AdherenceReport { holds: true, failing: None, failing_radius: None, checked })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub x: Vec<f64>,
    pub x_prime: Vec<f64>,
    pub distance: f64,
    pub hausdorff: f64,
    /// `bound_factor·distance + slack`.
    pub bound: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeReport {
    pub rows: Vec<ProbeRow>,
    /// `max d_H / |x − x'|` over the rows.
    pub modulus: f64,
    /// `a(X)·τ·Lip_M` as supplied.
    pub bound_factor: f64,
    /// `2 h_u`.
    pub slack: f64,
}

impl ProbeReport {
    pub fn all_within_bound(&self) -> bool {
        self.rows.iter().all(|r| r.hausdorff <= r.bound)
    }
}

/// Empirical `d_H`-modulus of `x ↦ U(x)` over `n_pairs` random pairs of
/// distinct state grid nodes (mesh `h_x`), using admissible samples at mesh
/// `h_u`. `tau` is the regularity constant the bound `a(X)·τ·Lip_M` is
/// formed with.
#[allow(clippy::too_many_arguments)]
pub fn multifunction_lipschitz_probe<R: Rng + ?Sized>(
    cs: &dyn ConstraintSystem,
    manifold: &ControlManifold,
    space: &StateSpace,
    h_x: f64,
    h_u: f64,
    n_pairs: usize,
    tau: f64,
    rng: &mut R,
) -> Result<ProbeReport> {
    let nodes = space.sample_grid(h_x)?;
    if nodes.len() < 2 {
        return Err(Error::InvalidInput("state grid has fewer than two nodes".into()));
    }
    let pairs: Vec<(usize, usize)> = (0..n_pairs)
        .map(|_| {
            let picked = sample_indices(rng, nodes.len(), 2);
            (picked.index(0), picked.index(1))
        })
        .collect();
    let candidates = manifold.sample(h_u)?;
    let bound_factor = space.con_constant() * tau * manifold.lip_m();
    let slack = 2.0 * h_u;
    let rows = pairs
        .par_iter()
        .map(|&(a, b)| -> Result<ProbeRow> {
            let (x, xp) = (&nodes[a], &nodes[b]);
            let ua = filter_admissible(cs, &candidates, x, h_u)?;
            let ub = filter_admissible(cs, &candidates, xp, h_u)?;
            let distance = dist(x, xp);
            Ok(ProbeRow {
                x: x.clone(),
                x_prime: xp.clone(),
                distance,
                hausdorff: hausdorff_distance(&ua.controls, &ub.controls)?,
                bound: bound_factor * distance + slack,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let modulus = rows.iter().map(|r| r.hausdorff / r.distance).fold(0.0, f64::max);
    Ok(ProbeReport { rows, modulus, bound_factor, slack })
}
