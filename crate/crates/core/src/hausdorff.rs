//! Hausdorff distance on finite point clouds and the marginal-max operator.
//!
//! A [`FiniteSet`] stands in for a compact subset of `R^p`. On finite sets the
//! Hausdorff distance
//!
//! ```text
//! d_H(K1, K2) = max( max_{a∈K1} min_{b∈K2} |a−b| , max_{b∈K2} min_{a∈K1} |a−b| )
//! ```
//!
//! is computed exactly by pairwise enumeration. The marginal map
//! `K ↦ max_K f` is Lipschitz in `d_H` with the Lipschitz constant of `f`.

use crate::error::{Error, Result};

/// Non-empty finite set of points with a common dimension.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSet {
    dim: usize,
    // row-major, `len * dim` coordinates
    coords: Vec<f64>,
}

impl FiniteSet {
    pub fn new(points: Vec<Vec<f64>>) -> Result<Self> {
        let first = points.first().ok_or(Error::EmptySet)?;
        let dim = first.len();
        if dim == 0 {
            return Err(Error::InvalidInput("points must have dimension >= 1".into()));
        }
        let mut coords = Vec::with_capacity(points.len() * dim);
        for p in &points {
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, found: p.len() });
            }
            if p.iter().any(|c| !c.is_finite()) {
                return Err(Error::InvalidInput("non-finite coordinate".into()));
            }
            coords.extend_from_slice(p);
        }
        Ok(Self { dim, coords })
    }

    /// Builds a set from flat row-major coordinates.
    pub fn from_flat(dim: usize, coords: Vec<f64>) -> Result<Self> {
        if dim == 0 || coords.len() % dim != 0 {
            return Err(Error::InvalidInput("flat coordinates do not match dimension".into()));
        }
        if coords.is_empty() {
            return Err(Error::EmptySet);
        }
        if coords.iter().any(|c| !c.is_finite()) {
            return Err(Error::InvalidInput("non-finite coordinate".into()));
        }
        Ok(Self { dim, coords })
    }

    pub fn singleton(point: Vec<f64>) -> Result<Self> {
        Self::new(vec![point])
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.coords.len() / self.dim
    }

    /// Always false; kept for the `len`/`is_empty` pairing.
    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn point(&self, i: usize) -> &[f64] {
        &self.coords[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl Iterator<Item = &[f64]> + '_ {
        self.coords.chunks_exact(self.dim)
    }

    pub fn contains_point(&self, p: &[f64], tol: f64) -> bool {
        self.iter().any(|q| dist(p, q) <= tol)
    }

    /// Distance from `p` to the nearest point of the set.
    pub fn distance_to(&self, p: &[f64]) -> f64 {
        self.iter().map(|q| dist_sq(p, q)).fold(f64::INFINITY, f64::min).sqrt()
    }
}

#[inline]
pub(crate) fn dist_sq(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[inline]
pub(crate) fn dist(a: &[f64], b: &[f64]) -> f64 {
    dist_sq(a, b).sqrt()
}

/// `max_{a∈from} min_{b∈to} |a−b|`.
///
/// The inner scan starts at the previous nearest neighbour and stops as soon
/// as it finds a point closer than the running maximum, since such an `a`
/// cannot raise the maximum. The result is exact.
pub fn directed_hausdorff(from: &FiniteSet, to: &FiniteSet) -> Result<f64> {
    check_dims(from, to)?;
    let n = to.len();
    let mut worst = 0.0_f64;
    let mut start = 0;
    for a in from.iter() {
        let mut best = f64::INFINITY;
        let mut best_at = start;
        for k in 0..n {
            let idx = if start + k < n { start + k } else { start + k - n };
            let d = dist_sq(a, to.point(idx));
            if d < best {
                best = d;
                best_at = idx;
                if best <= worst {
                    break;
                }
            }
        }
        start = best_at;
        if best > worst {
            worst = best;
        }
    }
    Ok(worst.sqrt())
}

pub fn hausdorff_distance(k1: &FiniteSet, k2: &FiniteSet) -> Result<f64> {
    check_dims(k1, k2)?;
    Ok(directed_hausdorff(k1, k2)?.max(directed_hausdorff(k2, k1)?))
}

fn check_dims(a: &FiniteSet, b: &FiniteSet) -> Result<()> {
    if a.dim != b.dim {
        return Err(Error::DimensionMismatch { expected: a.dim, found: b.dim });
    }
    Ok(())
}

/// `max_{x∈K} f(x)`; errors raised by `f` are propagated.
pub fn marginal_max<F, E>(f: F, k: &FiniteSet) -> std::result::Result<f64, E>
where
    F: Fn(&[f64]) -> std::result::Result<f64, E>,
{
    let mut best = f64::NEG_INFINITY;
    for p in k.iter() {
        best = best.max(f(p)?);
    }
    Ok(best)
}
