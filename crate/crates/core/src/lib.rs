//! Lipschitz continuity of value functions for finite-horizon stochastic
//! control problems whose admissible controls are cut out of a control
//! manifold by state-dependent constraints.
//!
//! The crate provides Hausdorff distances on finite sets, state spaces and
//! control manifolds with their lattices and charts, regularity constants of
//! constraint systems, a quantitative implicit function solver, backward
//! dynamic programming with a Lipschitz certificate, and the portfolio model
//! with transaction costs and a regulatory bond fraction.

pub mod constraints;
pub mod dp;
pub mod error;
pub mod finance;
pub mod geometry;
pub mod hausdorff;
pub mod ift;
pub mod rng;

pub use error::{Error, Result};
pub use hausdorff::{hausdorff_distance, marginal_max, FiniteSet};
