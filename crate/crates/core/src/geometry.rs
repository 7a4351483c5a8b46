//! State spaces, regular lattices over them, and chart-parameterized control
//! manifolds (rectangle boundaries and solid rectangles).

use rand::Rng;

use crate::error::{Error, Result};
use crate::hausdorff::FiniteSet;

/// Absolute tolerance for "lies on the manifold".
pub const ON_MANIFOLD_TOL: f64 = 1e-10;

/// Number of cells of width at most `h` covering an interval of length `len`.
pub(crate) fn cell_count(len: f64, h: f64) -> usize {
    ((len / h) - 1e-9).ceil().max(1.0) as usize
}

/// Regular rectangular lattice: `counts[i]` nodes along axis `i`, spaced `step[i]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Lattice {
    lo: Vec<f64>,
    hi: Vec<f64>,
    step: Vec<f64>,
    counts: Vec<usize>,
}

impl Lattice {
    /// Lattice spanning `[lo, hi]` with spacing at most `h` on every axis.
    pub fn covering(lo: &[f64], hi: &[f64], h: f64) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() {
            return Err(Error::InvalidInput("lattice bounds must have equal, positive length".into()));
        }
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("mesh must be positive, got {h}")));
        }
        let mut step = Vec::with_capacity(lo.len());
        let mut counts = Vec::with_capacity(lo.len());
        for (&a, &b) in lo.iter().zip(hi) {
            if !(b > a) {
                return Err(Error::InvalidInput(format!("degenerate lattice axis [{a}, {b}]")));
            }
            let cells = cell_count(b - a, h);
            step.push((b - a) / cells as f64);
            counts.push(cells + 1);
        }
        Ok(Self { lo: lo.to_vec(), hi: hi.to_vec(), step, counts })
    }

    pub fn dim(&self) -> usize {
        self.lo.len()
    }

    pub fn len(&self) -> usize {
        self.counts.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn counts(&self) -> &[usize] {
        &self.counts
    }

    pub fn step(&self) -> &[f64] {
        &self.step
    }

    pub fn min_step(&self) -> f64 {
        self.step.iter().copied().fold(f64::INFINITY, f64::min)
    }

    /// Multi-index of node `flat` (last axis fastest).
    pub fn multi_index(&self, mut flat: usize) -> Vec<usize> {
        let mut idx = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            idx[axis] = flat % self.counts[axis];
            flat /= self.counts[axis];
        }
        idx
    }

    pub fn flat_index(&self, idx: &[usize]) -> usize {
        idx.iter().zip(&self.counts).fold(0, |acc, (&i, &n)| acc * n + i)
    }

    pub fn node(&self, flat: usize) -> Vec<f64> {
        self.multi_index(flat)
            .iter()
            .enumerate()
            .map(|(axis, &i)| self.coord(axis, i))
            .collect()
    }

    fn coord(&self, axis: usize, i: usize) -> f64 {
        if i + 1 == self.counts[axis] {
            self.hi[axis]
        } else {
            self.lo[axis] + self.step[axis] * i as f64
        }
    }

    /// Multilinear interpolation of node values at `x`, clamping `x` into the
    /// lattice box first.
    pub fn interpolate(&self, values: &[f64], x: &[f64]) -> f64 {
        debug_assert_eq!(values.len(), self.len());
        let m = self.dim();
        let mut base = vec![0usize; m];
        let mut frac = vec![0.0f64; m];
        for axis in 0..m {
            let cells = self.counts[axis] - 1;
            let t = ((x[axis] - self.lo[axis]) / self.step[axis]).clamp(0.0, cells as f64);
            let i = (t.floor() as usize).min(cells - 1);
            base[axis] = i;
            frac[axis] = t - i as f64;
        }
        let mut acc = 0.0;
        let mut idx = vec![0usize; m];
        for corner in 0..(1usize << m) {
            let mut w = 1.0;
            for axis in 0..m {
                let up = (corner >> axis) & 1 == 1;
                idx[axis] = base[axis] + up as usize;
                w *= if up { frac[axis] } else { 1.0 - frac[axis] };
            }
            if w != 0.0 {
                acc += w * values[self.flat_index(&idx)];
            }
        }
        acc
    }
}

/// Convex state region in `R^m`.
#[derive(Debug, Clone, PartialEq)]
pub enum StateSpace {
    /// Axis-aligned box `[lo, hi]`.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// `{x : x_i ≥ floor for all i, Σ x_i ≤ cap}` in `R^dim`.
    CappedSimplex { dim: usize, floor: f64, cap: f64 },
}

impl StateSpace {
    pub fn new_box(lo: Vec<f64>, hi: Vec<f64>) -> Result<Self> {
        if lo.len() != hi.len() || lo.is_empty() || lo.iter().zip(&hi).any(|(a, b)| !(b > a)) {
            return Err(Error::InvalidInput("box state space needs lo < hi on every axis".into()));
        }
        Ok(StateSpace::Box { lo, hi })
    }

    pub fn new_capped_simplex(dim: usize, floor: f64, cap: f64) -> Result<Self> {
        if dim == 0 || !floor.is_finite() || !cap.is_finite() || !(cap > dim as f64 * floor) {
            return Err(Error::InvalidInput(format!(
                "capped simplex needs cap > dim * floor (dim={dim}, floor={floor}, cap={cap})"
            )));
        }
        Ok(StateSpace::CappedSimplex { dim, floor, cap })
    }

    pub fn dim(&self) -> usize {
        match self {
            StateSpace::Box { lo, .. } => lo.len(),
            StateSpace::CappedSimplex { dim, .. } => *dim,
        }
    }

    /// Characteristic number of the arc-connectedness property; 1 for convex sets.
    pub fn con_constant(&self) -> f64 {
        1.0
    }

    pub fn bounding_box(&self) -> (Vec<f64>, Vec<f64>) {
        match self {
            StateSpace::Box { lo, hi } => (lo.clone(), hi.clone()),
            StateSpace::CappedSimplex { dim, floor, cap } => {
                let top = cap - (*dim as f64 - 1.0) * floor;
                (vec![*floor; *dim], vec![top; *dim])
            }
        }
    }

    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        match self {
            StateSpace::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).all(|(v, (a, b))| *v >= a - tol && *v <= b + tol)
            }
            StateSpace::CappedSimplex { floor, cap, .. } => {
                x.iter().all(|v| *v >= floor - tol) && x.iter().sum::<f64>() <= cap + tol
            }
        }
    }

    /// Euclidean projection onto the region.
    pub fn project(&self, x: &[f64]) -> Vec<f64> {
        match self {
            StateSpace::Box { lo, hi } => {
                x.iter().zip(lo.iter().zip(hi)).map(|(v, (a, b))| v.clamp(*a, *b)).collect()
            }
            StateSpace::CappedSimplex { floor, cap, dim } => {
                let budget = cap - *dim as f64 * floor;
                let z: Vec<f64> = x.iter().map(|v| (v - floor).max(0.0)).collect();
                if z.iter().sum::<f64>() <= budget {
                    return z.iter().map(|v| v + floor).collect();
                }
                let shifted: Vec<f64> = x.iter().map(|v| v - floor).collect();
                project_onto_simplex(&shifted, budget).into_iter().map(|v| v + floor).collect()
            }
        }
    }

    pub fn distance(&self, x: &[f64]) -> f64 {
        crate::hausdorff::dist(x, &self.project(x))
    }

    /// Lattice over the bounding box with mesh at most `h`.
    pub fn lattice(&self, h: f64) -> Result<Lattice> {
        let (lo, hi) = self.bounding_box();
        Lattice::covering(&lo, &hi, h)
    }

    /// Lattice nodes that lie in the region.
    pub fn sample_grid(&self, h: f64) -> Result<Vec<Vec<f64>>> {
        let lattice = self.lattice(h)?;
        Ok((0..lattice.len())
            .map(|i| lattice.node(i))
            .filter(|x| self.contains(x, 1e-9))
            .collect())
    }

    /// Uniform draw from the region by rejection from the bounding box.
    pub fn sample_uniform<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<f64> = lo.iter().zip(&hi).map(|(a, b)| a + (b - a) * rng.gen::<f64>()).collect();
            if self.contains(&x, 0.0) {
                return x;
            }
        }
    }
}

/// Projection onto `{z ≥ 0, Σ z = s}` by the sort-and-threshold rule.
fn project_onto_simplex(y: &[f64], s: f64) -> Vec<f64> {
    let mut sorted = y.to_vec();
    sorted.sort_by(|a, b| b.partial_cmp(a).unwrap());
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (i, &v) in sorted.iter().enumerate() {
        cumsum += v;
        let t = (cumsum - s) / (i + 1) as f64;
        if v - t > 0.0 {
            theta = t;
        }
    }
    y.iter().map(|v| (v - theta).max(0.0)).collect()
}

/// Axis-aligned rectangle `[u_lo, u_hi] × [v_lo, v_hi]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rect {
    pub u_lo: f64,
    pub u_hi: f64,
    pub v_lo: f64,
    pub v_hi: f64,
}

impl Rect {
    pub fn new(u_lo: f64, u_hi: f64, v_lo: f64, v_hi: f64) -> Result<Self> {
        if !(u_hi > u_lo) || !(v_hi > v_lo) {
            return Err(Error::InvalidInput("rectangle must have positive width and height".into()));
        }
        Ok(Self { u_lo, u_hi, v_lo, v_hi })
    }

    pub fn vertices(&self) -> [[f64; 2]; 4] {
        [
            [self.u_lo, self.v_lo],
            [self.u_hi, self.v_lo],
            [self.u_hi, self.v_hi],
            [self.u_lo, self.v_hi],
        ]
    }

    fn inside(&self, u: &[f64], tol: f64) -> bool {
        u[0] >= self.u_lo - tol && u[0] <= self.u_hi + tol && u[1] >= self.v_lo - tol && u[1] <= self.v_hi + tol
    }

    fn near_vertex(&self, u: &[f64], tol: f64) -> bool {
        self.vertices().iter().any(|p| (p[0] - u[0]).abs() <= tol && (p[1] - u[1]).abs() <= tol)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Edge {
    Bottom,
    Right,
    Top,
    Left,
}

/// Inverse of a chart: the unit-speed parameterization `t ↦ anchor + t·e_axis`
/// of one open rectangle edge.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Chart {
    pub edge: Edge,
    /// Point at parameter 0.
    anchor: [f64; 2],
    /// Coordinate that varies along the edge (0 = u, 1 = v).
    axis: usize,
    /// Open parameter interval.
    pub range: (f64, f64),
}

impl Chart {
    fn for_edge(rect: &Rect, edge: Edge) -> Self {
        match edge {
            Edge::Bottom => Chart { edge, anchor: [0.0, rect.v_lo], axis: 0, range: (rect.u_lo, rect.u_hi) },
            Edge::Right => Chart { edge, anchor: [rect.u_hi, 0.0], axis: 1, range: (rect.v_lo, rect.v_hi) },
            Edge::Top => Chart { edge, anchor: [0.0, rect.v_hi], axis: 0, range: (rect.u_lo, rect.u_hi) },
            Edge::Left => Chart { edge, anchor: [rect.u_lo, 0.0], axis: 1, range: (rect.v_lo, rect.v_hi) },
        }
    }

    pub fn eval(&self, t: f64) -> [f64; 2] {
        let mut p = self.anchor;
        p[self.axis] = t;
        p
    }

    pub fn param(&self, u: &[f64]) -> f64 {
        u[self.axis]
    }

    /// Derivative of the parameterization, a unit vector in `R^2`.
    pub fn tangent(&self) -> [f64; 2] {
        let mut e = [0.0; 2];
        e[self.axis] = 1.0;
        e
    }
}

/// Control manifold in `R^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlManifold {
    /// Boundary of a rectangle: a closed polygonal curve, nonregular at its
    /// four vertices.
    BoxBoundary(Rect),
    /// Solid rectangle `[u_lo,u_hi]×[v_lo,v_hi]`, viewed as the union of the
    /// boundaries of `[s, u_hi]×[v_lo,v_hi]` for `s ∈ [u_lo, u_hi)`.
    Box(Rect),
}

impl ControlManifold {
    pub fn rect(&self) -> &Rect {
        match self {
            ControlManifold::BoxBoundary(r) | ControlManifold::Box(r) => r,
        }
    }

    pub fn ambient_dim(&self) -> usize {
        2
    }

    /// Dimension of the chart domain.
    pub fn chart_dim(&self) -> usize {
        1
    }

    /// Upper bound on the Lipschitz constants of the chart inverses. Every
    /// chart is a unit-speed axis-parallel segment.
    pub fn lip_m(&self) -> f64 {
        1.0
    }

    pub fn nonregular_points(&self) -> Vec<[f64; 2]> {
        self.rect().vertices().to_vec()
    }

    pub fn is_nonregular(&self, u: &[f64], tol: f64) -> bool {
        self.rect().near_vertex(u, tol)
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        let r = self.rect();
        if u.len() != 2 || !r.inside(u, tol) {
            return false;
        }
        match self {
            ControlManifold::Box(_) => true,
            ControlManifold::BoxBoundary(_) => {
                (u[0] - r.u_lo).abs() <= tol
                    || (u[0] - r.u_hi).abs() <= tol
                    || (u[1] - r.v_lo).abs() <= tol
                    || (u[1] - r.v_hi).abs() <= tol
            }
        }
    }

    /// The chart assigned to a regular point `u`, together with its parameter.
    ///
    /// On a solid rectangle, points of the bottom and top sides get the
    /// horizontal chart; every other point gets the vertical chart through it
    /// (the left side of the nest member starting at `u[0]`, or the right side).
    pub fn chart_at(&self, u: &[f64]) -> Result<(Chart, f64)> {
        let tol = ON_MANIFOLD_TOL;
        if !self.contains(u, tol) {
            return Err(Error::OffManifold { point: u.to_vec() });
        }
        if self.is_nonregular(u, tol) {
            return Err(Error::NonregularPoint { point: u.to_vec() });
        }
        let r = *self.rect();
        let chart = if (u[1] - r.v_lo).abs() <= tol {
            Chart::for_edge(&r, Edge::Bottom)
        } else if (u[1] - r.v_hi).abs() <= tol {
            Chart::for_edge(&r, Edge::Top)
        } else if (u[0] - r.u_hi).abs() <= tol {
            Chart::for_edge(&r, Edge::Right)
        } else {
            match self {
                ControlManifold::BoxBoundary(_) => Chart::for_edge(&r, Edge::Left),
                ControlManifold::Box(_) => {
                    let member = Rect { u_lo: u[0], ..r };
                    Chart::for_edge(&member, Edge::Left)
                }
            }
        };
        Ok((chart, chart.param(u)))
    }

    /// Samples with spacing at most `h`, always including the four vertices.
    /// Points are returned in lexicographic order.
    pub fn sample(&self, h: f64) -> Result<FiniteSet> {
        let coords = self.sample_coords(h, None)?;
        FiniteSet::from_flat(2, coords)
    }

    /// The points of `sample(h)` lying within `radius` of `center`, or `None`
    /// when there are none.
    pub fn sample_window(&self, h: f64, center: &[f64], radius: f64) -> Result<Option<FiniteSet>> {
        let coords = self.sample_coords(h, Some((center, radius)))?;
        if coords.is_empty() {
            return Ok(None);
        }
        FiniteSet::from_flat(2, coords).map(Some)
    }

    fn sample_coords(&self, h: f64, window: Option<(&[f64], f64)>) -> Result<Vec<f64>> {
        if !(h > 0.0) {
            return Err(Error::InvalidInput(format!("mesh must be positive, got {h}")));
        }
        let r = *self.rect();
        let nu = cell_count(r.u_hi - r.u_lo, h);
        let nv = cell_count(r.v_hi - r.v_lo, h);
        let at = |lo: f64, hi: f64, i: usize, n: usize| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        };
        // index range along one axis that can reach the window
        let span = |lo: f64, hi: f64, n: usize, c: f64, rad: f64| {
            let step = (hi - lo) / n as f64;
            let a = ((c - rad - lo) / step).floor().max(0.0) as usize;
            let b = (((c + rad - lo) / step).ceil().max(0.0) as usize).min(n);
            (a, b)
        };
        let ((i0, i1), (j0, j1)) = match window {
            None => ((0, nu), (0, nv)),
            Some((c, rad)) => (span(r.u_lo, r.u_hi, nu, c[0], rad), span(r.v_lo, r.v_hi, nv, c[1], rad)),
        };
        let keep = |p: [f64; 2]| match window {
            None => true,
            Some((c, rad)) => crate::hausdorff::dist(&p, c) <= rad,
        };
        let mut coords = Vec::new();
        if i0 > i1 || j0 > j1 {
            return Ok(coords);
        }
        for i in i0..=i1 {
            let u = at(r.u_lo, r.u_hi, i, nu);
            let full_column = matches!(self, ControlManifold::Box(_)) || i == 0 || i == nu;
            let rows: Vec<usize> = if full_column {
                (j0..=j1).collect()
            } else {
                [0, nv].into_iter().filter(|j| (j0..=j1).contains(j)).collect()
            };
            for j in rows {
                let p = [u, at(r.v_lo, r.v_hi, j, nv)];
                if keep(p) {
                    coords.extend_from_slice(&p);
                }
            }
        }
        Ok(coords)
    }

    /// Finite nest of rectangle boundaries whose union of samples at mesh `h`
    /// equals the sample of the solid rectangle. A boundary is its own nest.
    pub fn nest(&self, h: f64) -> Vec<ControlManifold> {
        match self {
            ControlManifold::BoxBoundary(_) => vec![*self],
            ControlManifold::Box(r) => {
                let n = cell_count(r.u_hi - r.u_lo, h);
                (0..n)
                    .map(|i| {
                        let s = r.u_lo + (r.u_hi - r.u_lo) * i as f64 / n as f64;
                        ControlManifold::BoxBoundary(Rect { u_lo: s, ..*r })
                    })
                    .collect()
            }
        }
    }
}
