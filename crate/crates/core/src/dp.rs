//! Backward dynamic programming over sampled admissible controls, empirical
//! Lipschitz moduli of the value functions, and the stage-wise Lipschitz
//! bound chain
//!
//! ```text
//! L_N = Lip(g),   L_k = L_{k+1} · E_k[V_k] · (1 + a_k τ_k Lip_{M_k}).
//! ```

use std::sync::Arc;

use rand::seq::index::sample as sample_indices;
use rayon::prelude::*;

use crate::constraints::{filter_admissible, ConstraintSystem};
use crate::error::{Error, Result};
use crate::geometry::{ControlManifold, Lattice, StateSpace};
use crate::hausdorff::dist;
use crate::rng;

/// Tolerance for dynamics landing outside the next state space.
pub const CLAMP_TOL: f64 = 1e-9;

/// Above this many node pairs the empirical modulus is taken over a random
/// subsample of [`LIPSCHITZ_SUBSAMPLE`] pairs.
pub const LIPSCHITZ_FULL_LIMIT: usize = 1_000_000;
pub const LIPSCHITZ_SUBSAMPLE: usize = 100_000;

/// Finite disturbance law.
#[derive(Debug, Clone, PartialEq)]
pub struct DisturbanceLaw {
    support: Vec<Vec<f64>>,
    weights: Vec<f64>,
}

impl DisturbanceLaw {
    pub fn new(support: Vec<Vec<f64>>, weights: Vec<f64>) -> Result<Self> {
        if support.is_empty() {
            return Err(Error::InvalidInput("disturbance support is empty".into()));
        }
        if support.len() != weights.len() {
            return Err(Error::InvalidInput(format!(
                "{} support points but {} weights",
                support.len(),
                weights.len()
            )));
        }
        let dim = support[0].len();
        if let Some(bad) = support.iter().find(|y| y.len() != dim) {
            return Err(Error::DimensionMismatch { expected: dim, found: bad.len() });
        }
        if weights.iter().any(|w| !(*w >= 0.0) || !w.is_finite()) {
            return Err(Error::InvalidInput("weights must be finite and nonnegative".into()));
        }
        let total: f64 = weights.iter().sum();
        if (total - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidInput(format!("weights sum to {total}, not 1")));
        }
        Ok(Self { support, weights })
    }

    pub fn point_mass(y: Vec<f64>) -> Self {
        Self { support: vec![y], weights: vec![1.0] }
    }

    pub fn uniform(support: Vec<Vec<f64>>) -> Result<Self> {
        let n = support.len();
        Self::new(support, vec![1.0 / n as f64; n])
    }

    pub fn support(&self) -> &[Vec<f64>] {
        &self.support
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn atoms(&self) -> impl Iterator<Item = (&[f64], f64)> + '_ {
        self.support.iter().map(Vec::as_slice).zip(self.weights.iter().copied())
    }
}

/// `Σ_y p(y) φ(y)`.
pub fn expectation<F: Fn(&[f64]) -> f64>(law: &DisturbanceLaw, phi: F) -> f64 {
    law.atoms().map(|(y, w)| w * phi(y)).sum()
}

/// Stage dynamics `x' = f(x, u, y)`.
pub trait Dynamics: Send + Sync {
    fn apply(&self, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]);

    /// `V(y)` with `|f(x,u,y) − f(x',u',y)| ≤ V(y)·|(x−x', u−u')|`.
    fn lipschitz_factor(&self, y: &[f64]) -> f64;
}

#[derive(Clone)]
pub struct StageModel {
    pub state_space: StateSpace,
    pub manifold: ControlManifold,
    pub constraints: Arc<dyn ConstraintSystem>,
    pub dynamics: Arc<dyn Dynamics>,
    pub law: DisturbanceLaw,
}

impl std::fmt::Debug for StageModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StageModel")
            .field("state_space", &self.state_space)
            .field("manifold", &self.manifold)
            .field("law", &self.law)
            .finish_non_exhaustive()
    }
}

/// Stages `0..N` plus the terminal state space `X_N`.
#[derive(Debug, Clone)]
pub struct DpProblem {
    pub stages: Vec<StageModel>,
    pub terminal_space: StateSpace,
}

impl DpProblem {
    pub fn horizon(&self) -> usize {
        self.stages.len()
    }

    pub fn state_space(&self, k: usize) -> &StateSpace {
        if k == self.stages.len() {
            &self.terminal_space
        } else {
            &self.stages[k].state_space
        }
    }
}

/// Node values on a lattice over a state space's bounding box.
///
/// Every node carries a value so interpolation inside boundary cells is well
/// defined. Backward induction values a node outside the region at its
/// projection onto the region.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueFunction {
    space: StateSpace,
    lattice: Lattice,
    values: Vec<f64>,
    in_region: Vec<bool>,
}

impl ValueFunction {
    /// Tabulates `f` at every lattice node, including nodes outside the region.
    pub fn from_fn<F: Fn(&[f64]) -> f64>(space: &StateSpace, h: f64, f: F) -> Result<Self> {
        let lattice = space.lattice(h)?;
        let mut values = Vec::with_capacity(lattice.len());
        let mut in_region = Vec::with_capacity(lattice.len());
        for i in 0..lattice.len() {
            let node = lattice.node(i);
            in_region.push(space.contains(&node, CLAMP_TOL));
            values.push(f(&node));
        }
        Ok(Self { space: space.clone(), lattice, values, in_region })
    }

    fn from_parts(space: &StateSpace, lattice: Lattice, values: Vec<f64>) -> Self {
        let in_region = (0..lattice.len()).map(|i| space.contains(&lattice.node(i), CLAMP_TOL)).collect();
        Self { space: space.clone(), lattice, values, in_region }
    }

    pub fn space(&self) -> &StateSpace {
        &self.space
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_in_region(&self, node: usize) -> bool {
        self.in_region[node]
    }

    /// Indices of lattice nodes inside the region.
    pub fn region_nodes(&self) -> Vec<usize> {
        (0..self.lattice.len()).filter(|&i| self.in_region[i]).collect()
    }

    /// Multilinear interpolation after projecting `x` onto the region.
    pub fn eval(&self, x: &[f64]) -> f64 {
        self.lattice.interpolate(&self.values, &self.space.project(x))
    }
}

/// Maximizing control at every lattice node of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct Policy {
    pub controls: Vec<Vec<f64>>,
}

/// `values[k]` is `J_k` for `k = 0..=N`; `policies[k]` the stage-`k` argmax.
#[derive(Debug, Clone, PartialEq)]
pub struct DpSolution {
    pub values: Vec<ValueFunction>,
    pub policies: Vec<Policy>,
}

/// `max` over the sampled admissible controls of the expected continuation
/// value at one state; ties go to the lexicographically smallest control.
fn best_control(stage: &StageModel, candidates: &crate::hausdorff::FiniteSet, next: &ValueFunction, x: &[f64], h_u: f64) -> Result<(f64, Vec<f64>)> {
    let admissible = filter_admissible(stage.constraints.as_ref(), candidates, x, h_u)?;
    let next_space = next.space();
    let mut landed = vec![0.0; next_space.dim()];
    let mut best = f64::NEG_INFINITY;
    let mut best_u: &[f64] = admissible.controls.point(0);
    for u in admissible.controls.iter() {
        let mut value = 0.0;
        for (y, w) in stage.law.atoms() {
            stage.dynamics.apply(x, u, y, &mut landed);
            if !next_space.contains(&landed, CLAMP_TOL) {
                let excess = next_space.distance(&landed);
                if excess > CLAMP_TOL {
                    return Err(Error::OutOfRegion { point: landed.clone(), excess });
                }
            }
            value += w * next.eval(&landed);
        }
        if value > best {
            best = value;
            best_u = u;
        }
    }
    Ok((best, best_u.to_vec()))
}

/// Backward induction `J_N = g`, `J_k(x) = max_{u∈U_k(x)} E_k[J_{k+1}(f_k(x,u,y))]`
/// on lattices of mesh `h_x`, with admissible controls sampled at mesh `h_u`.
pub fn backward_induct<G>(problem: &DpProblem, terminal: G, h_x: f64, h_u: f64) -> Result<DpSolution>
where
    G: Fn(&[f64]) -> f64,
{
    let n = problem.horizon();
    let mut values = vec![ValueFunction::from_fn(&problem.terminal_space, h_x, terminal)?];
    let mut policies = Vec::with_capacity(n);
    for k in (0..n).rev() {
        let stage = &problem.stages[k];
        let next = values.last().expect("terminal value present");
        let lattice = stage.state_space.lattice(h_x)?;
        let candidates = stage.manifold.sample(h_u)?;
        let solved = (0..lattice.len())
            .into_par_iter()
            .map(|node| {
                let x = stage.state_space.project(&lattice.node(node));
                best_control(stage, &candidates, next, &x, h_u)
                    .map_err(|e| Error::Stage { stage: k, node, source: Box::new(e) })
            })
            .collect::<Result<Vec<_>>>()?;
        let (node_values, controls): (Vec<f64>, Vec<Vec<f64>>) = solved.into_iter().unzip();
        values.push(ValueFunction::from_parts(&stage.state_space, lattice, node_values));
        policies.push(Policy { controls });
    }
    values.reverse();
    policies.reverse();
    Ok(DpSolution { values, policies })
}

/// Largest difference quotient `|J(x) − J(x')| / |x − x'|` over pairs of
/// region nodes: all pairs when there are at most [`LIPSCHITZ_FULL_LIMIT`],
/// otherwise [`LIPSCHITZ_SUBSAMPLE`] random pairs drawn with `seed`.
pub fn empirical_lipschitz(j: &ValueFunction, seed: u64) -> f64 {
    let nodes = j.region_nodes();
    let points: Vec<Vec<f64>> = nodes.iter().map(|&i| j.lattice.node(i)).collect();
    let vals: Vec<f64> = nodes.iter().map(|&i| j.values[i]).collect();
    let n = nodes.len();
    if n < 2 {
        return 0.0;
    }
    let quotient = |a: usize, b: usize| {
        let d = dist(&points[a], &points[b]);
        if d > 0.0 {
            (vals[a] - vals[b]).abs() / d
        } else {
            0.0
        }
    };
    let total_pairs = n * (n - 1) / 2;
    if total_pairs <= LIPSCHITZ_FULL_LIMIT {
        (0..n)
            .into_par_iter()
            .map(|a| ((a + 1)..n).map(|b| quotient(a, b)).fold(0.0, f64::max))
            .reduce(|| 0.0, f64::max)
    } else {
        let mut rng = rng::seeded(seed);
        (0..LIPSCHITZ_SUBSAMPLE)
            .map(|_| {
                let pick = sample_indices(&mut rng, n, 2);
                quotient(pick.index(0), pick.index(1))
            })
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauSource {
    ClosedForm,
    Empirical,
}

impl TauSource {
    pub fn as_str(&self) -> &'static str {
        match self {
            TauSource::ClosedForm => "closed-form",
            TauSource::Empirical => "empirical",
        }
    }
}

/// Per-stage inputs of the bound chain.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChainFactors {
    pub a: f64,
    pub tau: f64,
    pub lip_m: f64,
    pub expected_v: f64,
}

/// `[L_0, …, L_N]` from `L_N = lip_g` and the per-stage factors.
pub fn bound_chain(lip_g: f64, factors: &[ChainFactors]) -> Vec<f64> {
    let mut bounds = vec![0.0; factors.len() + 1];
    bounds[factors.len()] = lip_g;
    for k in (0..factors.len()).rev() {
        let f = &factors[k];
        bounds[k] = bounds[k + 1] * f.expected_v * (1.0 + f.a * f.tau * f.lip_m);
    }
    bounds
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCertificate {
    pub stage: usize,
    /// `None` at the terminal stage.
    pub factors: Option<ChainFactors>,
    pub tau_source: Option<TauSource>,
    pub bound: f64,
    pub empirical: f64,
    pub slack: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LipschitzCertificate {
    pub stages: Vec<StageCertificate>,
    pub params: CertifyParams,
}

impl LipschitzCertificate {
    pub fn all_pass(&self) -> bool {
        self.stages.iter().all(|s| s.pass)
    }
}

/// Meshes, slack factor and seed of a certificate run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertifyParams {
    pub h_x: f64,
    pub h_u: f64,
    /// Multiplier of `L_k·h_u / spacing` in the slack; 2 by default.
    pub slack_factor: f64,
    /// Seeds the pair subsampling of [`empirical_lipschitz`]; stage `k` uses `seed + k`.
    pub seed: u64,
}

impl CertifyParams {
    pub fn new(h_x: f64, h_u: f64, seed: u64) -> Self {
        Self { h_x, h_u, slack_factor: 2.0, seed }
    }
}

/// Builds the bound chain for `problem` and checks it against the empirical
/// moduli of `solution`. `taus[k]` is the regularity constant of stage `k`.
///
/// Stage `k` passes iff `Ê_k ≤ L_k + slack_k` with
/// `slack_k = slack_factor·L_k·h_u / (smallest node spacing of the stage lattice)`.
pub fn certify(
    problem: &DpProblem,
    solution: &DpSolution,
    lip_g: f64,
    taus: &[(f64, TauSource)],
    params: &CertifyParams,
) -> Result<LipschitzCertificate> {
    let n = problem.horizon();
    if taus.len() != n {
        return Err(Error::InvalidInput(format!("expected {n} tau values, got {}", taus.len())));
    }
    if solution.values.len() != n + 1 {
        return Err(Error::InvalidInput("solution does not match the problem horizon".into()));
    }
    let factors: Vec<ChainFactors> = problem
        .stages
        .iter()
        .zip(taus)
        .map(|(stage, &(tau, _))| ChainFactors {
            a: stage.state_space.con_constant(),
            tau,
            lip_m: stage.manifold.lip_m(),
            expected_v: expectation(&stage.law, |y| stage.dynamics.lipschitz_factor(y)),
        })
        .collect();
    let bounds = bound_chain(lip_g, &factors);
    let stages = (0..=n)
        .map(|k| {
            let value = &solution.values[k];
            let empirical = empirical_lipschitz(value, params.seed.wrapping_add(k as u64));
            let slack = params.slack_factor * bounds[k] * params.h_u / value.lattice().min_step();
            StageCertificate {
                stage: k,
                factors: factors.get(k).copied(),
                tau_source: taus.get(k).map(|t| t.1),
                bound: bounds[k],
                empirical,
                slack,
                pass: empirical <= bounds[k] + slack,
            }
        })
        .collect();
    Ok(LipschitzCertificate { stages, params: *params })
}
