//! Two-asset allocation with proportional transaction costs and a regulatory
//! floor on the riskless wealth fraction.
//!
//! State `x = (S, B)` holds the stock and bond positions, control `(u, v)`
//! the fractions sold from stock into bonds and from bonds into stock:
//!
//! ```text
//! S' = [S(1−u) + Bv(1−λs)]·y_s
//! B' = [B(1−v) + Su(1−λb)]·y_b
//! c(u,v,S,B) = S(1−u) + vB(1−λs) − q[B(1−v) + uS(1−λb)] ≤ 0
//! ```

use std::sync::Arc;

use nalgebra::DMatrix;

use crate::constraints::ConstraintSystem;
use crate::dp::{DisturbanceLaw, DpProblem, Dynamics, StageModel};
use crate::error::{Error, Result};
use crate::geometry::{ControlManifold, Rect, StateSpace};

#[derive(Debug, Clone, PartialEq)]
pub struct MarketModel {
    pub horizon: usize,
    /// `λs`, charged on buying stock.
    pub cost_stock: f64,
    /// `λb`, charged on buying bonds.
    pub cost_bond: f64,
    pub alpha: f64,
    /// One law over `(y_s, y_b)` per stage.
    pub laws: Vec<DisturbanceLaw>,
    pub s0: f64,
    pub b0: f64,
    pub floor0: f64,
    pub cap0: f64,
}

fn open_unit(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidInput(format!("{name} must lie in (0, 1), got {value}")))
    }
}

impl MarketModel {
    pub fn validate(&self) -> Result<()> {
        if self.horizon == 0 {
            return Err(Error::InvalidInput("horizon must be at least 1".into()));
        }
        open_unit("cost_stock", self.cost_stock)?;
        open_unit("cost_bond", self.cost_bond)?;
        open_unit("alpha", self.alpha)?;
        if self.laws.len() != self.horizon {
            return Err(Error::InvalidInput(format!(
                "{} yield laws for horizon {}",
                self.laws.len(),
                self.horizon
            )));
        }
        for (k, law) in self.laws.iter().enumerate() {
            for y in law.support() {
                if y.len() != 2 {
                    return Err(Error::DimensionMismatch { expected: 2, found: y.len() });
                }
                if !(y[0] > 0.0 && y[1] > 0.0 && y[0].is_finite() && y[1].is_finite()) {
                    return Err(Error::InvalidInput(format!("stage {k} yields must be positive, got {y:?}")));
                }
            }
        }
        if !(self.floor0 > 0.0 && self.cap0 > self.floor0) {
            return Err(Error::InvalidInput(format!(
                "need cap0 > floor0 > 0, got floor0 = {}, cap0 = {}",
                self.floor0, self.cap0
            )));
        }
        let (s, b) = (self.s0, self.b0);
        if !(s >= self.floor0 && b >= self.floor0 && s + b <= self.cap0) {
            return Err(Error::InvalidInput(format!(
                "initial state ({s}, {b}) outside S, B >= {}, S + B <= {}",
                self.floor0, self.cap0
            )));
        }
        Ok(())
    }

    /// Three stages, 5% costs both ways, `α = 0.4`, yields
    /// `{(1.1, 1.02), (0.9, 1.02)}` with equal weights.
    pub fn desk() -> Self {
        let law = DisturbanceLaw::uniform(vec![vec![1.1, 1.02], vec![0.9, 1.02]]).expect("valid law");
        Self {
            horizon: 3,
            cost_stock: 0.05,
            cost_bond: 0.05,
            alpha: 0.4,
            laws: vec![law; 3],
            s0: 0.8,
            b0: 1.0,
            floor0: 0.1,
            cap0: 2.0,
        }
    }
}

/// `q = (1−α)/α · min(1, min y_b/y_s)`.
pub fn q_coefficient(alpha: f64, law: &DisturbanceLaw) -> f64 {
    let ratio = law.support().iter().map(|y| y[1] / y[0]).fold(1.0, f64::min);
    (1.0 - alpha) / alpha * ratio
}

/// `δ = 1/(q(1−λb) + 1)`, the largest stock sale fraction for which
/// `c(δ, 0, S, B) ≤ 0` for all positive positions.
pub fn delta_coefficient(q: f64, cost_bond: f64) -> f64 {
    1.0 / (q * (1.0 - cost_bond) + 1.0)
}

pub fn dynamics(s: f64, b: f64, u: f64, v: f64, ys: f64, yb: f64, cost_stock: f64, cost_bond: f64) -> (f64, f64) {
    (
        (s * (1.0 - u) + b * v * (1.0 - cost_stock)) * ys,
        (b * (1.0 - v) + s * u * (1.0 - cost_bond)) * yb,
    )
}

pub fn constraint(u: f64, v: f64, s: f64, b: f64, q: f64, cost_stock: f64, cost_bond: f64) -> f64 {
    s * (1.0 - u) + v * b * (1.0 - cost_stock) - q * (b * (1.0 - v) + u * s * (1.0 - cost_bond))
}

/// Closed-form regularity and dynamics constants of one stage.
///
/// `lambda` and `lip_f_factor` follow the published formulas. The sampled
/// suprema can exceed them; `lambda_edge_max` and `lip_f_factor_frobenius`
/// are bounds that always hold.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LipschitzConstants {
    /// `min(δ/Δ, 1/(Δ(1−λs+q)))`.
    pub lambda: f64,
    /// `√(1 + max(q, |δ(q+1−λs) − q|)²)`.
    pub mu: f64,
    /// `λμ`.
    pub tau: f64,
    /// `√(1 + D² + (1−min(λs,λb))²)`; `V(y)` is this times `max(y_s, y_b)`.
    pub lip_f_factor: f64,
    /// `max(δ/Δ, 1/(Δ(1−λs+q)))`.
    pub lambda_edge_max: f64,
    /// `√2·√(1 + D²)`, a Frobenius bound of the dynamics Jacobian.
    pub lip_f_factor_frobenius: f64,
}

impl LipschitzConstants {
    pub fn tau_edge_max(&self) -> f64 {
        self.lambda_edge_max * self.mu
    }
}

pub fn lipschitz_constants(q: f64, delta: f64, floor: f64, cap: f64, cost_stock: f64, cost_bond: f64) -> LipschitzConstants {
    let horizontal = delta / floor;
    let vertical = 1.0 / (floor * (1.0 - cost_stock + q));
    let lambda = horizontal.min(vertical);
    let mu = (1.0 + q.max((delta * (q + 1.0 - cost_stock) - q).abs()).powi(2)).sqrt();
    let min_cost = cost_stock.min(cost_bond);
    LipschitzConstants {
        lambda,
        mu,
        tau: lambda * mu,
        lip_f_factor: (1.0 + cap * cap + (1.0 - min_cost).powi(2)).sqrt(),
        lambda_edge_max: horizontal.max(vertical),
        lip_f_factor_frobenius: 2f64.sqrt() * (1.0 + cap * cap).sqrt(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageConstants {
    pub stage: usize,
    pub q: f64,
    pub delta: f64,
    /// `Δ_k`.
    pub floor: f64,
    /// `D_k`.
    pub cap: f64,
    /// Largest yield over the support.
    pub y_max: f64,
    /// Smallest yield over the support.
    pub y_min: f64,
    pub lipschitz: LipschitzConstants,
}

impl StageConstants {
    pub fn lip_f(&self, y: &[f64]) -> f64 {
        self.lipschitz.lip_f_factor * y[0].max(y[1])
    }

    pub fn state_space(&self) -> StateSpace {
        StateSpace::new_capped_simplex(2, self.floor, self.cap).expect("validated recursion")
    }

    pub fn manifold(&self) -> ControlManifold {
        ControlManifold::Box(Rect::new(0.0, self.delta, 0.0, self.delta).expect("delta in (0,1)"))
    }
}

/// Stage constants for `k = 0..N` and the terminal bounds `(Δ_N, D_N)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTable {
    pub stages: Vec<StageConstants>,
    pub terminal_floor: f64,
    pub terminal_cap: f64,
}

impl StageTable {
    pub fn terminal_space(&self) -> StateSpace {
        StateSpace::new_capped_simplex(2, self.terminal_floor, self.terminal_cap).expect("validated recursion")
    }
}

/// `Δ_{k+1} = Δ_k(1−δ_k)·y̲_k` and `D_{k+1} = D_k·ȳ_k`, where `y̲_k`, `ȳ_k`
/// are the smallest and largest yields over the whole support.
pub fn state_space_recursion(m: &MarketModel) -> Result<StageTable> {
    m.validate()?;
    let mut floor = m.floor0;
    let mut cap = m.cap0;
    let mut stages = Vec::with_capacity(m.horizon);
    for (k, law) in m.laws.iter().enumerate() {
        let q = q_coefficient(m.alpha, law);
        let delta = delta_coefficient(q, m.cost_bond);
        let all = law.support().iter().flatten().copied();
        let y_max = all.clone().fold(f64::NEG_INFINITY, f64::max);
        let y_min = all.fold(f64::INFINITY, f64::min);
        stages.push(StageConstants {
            stage: k,
            q,
            delta,
            floor,
            cap,
            y_max,
            y_min,
            lipschitz: lipschitz_constants(q, delta, floor, cap, m.cost_stock, m.cost_bond),
        });
        floor *= (1.0 - delta) * y_min;
        cap *= y_max;
    }
    Ok(StageTable { stages, terminal_floor: floor, terminal_cap: cap })
}

/// `c ≤ 0` with analytic differentials.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegulatoryConstraint {
    pub q: f64,
    pub cost_stock: f64,
    pub cost_bond: f64,
}

impl ConstraintSystem for RegulatoryConstraint {
    fn num_constraints(&self) -> usize {
        1
    }

    fn control_dim(&self) -> usize {
        2
    }

    fn state_dim(&self) -> usize {
        2
    }

    fn eval(&self, u: &[f64], x: &[f64], out: &mut [f64]) {
        out[0] = constraint(u[0], u[1], x[0], x[1], self.q, self.cost_stock, self.cost_bond);
    }

    fn jac_u(&self, _u: &[f64], x: &[f64]) -> DMatrix<f64> {
        let (s, b) = (x[0], x[1]);
        DMatrix::from_row_slice(
            1,
            2,
            &[-s * (1.0 + self.q * (1.0 - self.cost_bond)), b * (1.0 - self.cost_stock + self.q)],
        )
    }

    fn jac_x(&self, u: &[f64], _x: &[f64]) -> DMatrix<f64> {
        let (uu, v) = (u[0], u[1]);
        DMatrix::from_row_slice(
            1,
            2,
            &[
                (1.0 - uu) - self.q * uu * (1.0 - self.cost_bond),
                v * (1.0 - self.cost_stock + self.q) - self.q,
            ],
        )
    }
}

/// Allocation dynamics with `V(y) = factor·max(y_s, y_b)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AllocationDynamics {
    pub cost_stock: f64,
    pub cost_bond: f64,
    pub lip_f_factor: f64,
}

impl Dynamics for AllocationDynamics {
    fn apply(&self, x: &[f64], u: &[f64], y: &[f64], out: &mut [f64]) {
        let (s, b) = dynamics(x[0], x[1], u[0], u[1], y[0], y[1], self.cost_stock, self.cost_bond);
        out[0] = s;
        out[1] = b;
    }

    fn lipschitz_factor(&self, y: &[f64]) -> f64 {
        self.lip_f_factor * y[0].max(y[1])
    }
}

/// Terminal utility `g(S, B)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Utility {
    /// `S + B`.
    Wealth,
    /// `min(S + B, W*)`.
    CappedWealth(f64),
    /// `g ≡ 0`.
    Zero,
}

impl Utility {
    pub fn value(&self, x: &[f64]) -> f64 {
        match *self {
            Utility::Wealth => x[0] + x[1],
            Utility::CappedWealth(w) => (x[0] + x[1]).min(w),
            Utility::Zero => 0.0,
        }
    }

    pub fn lipschitz(&self) -> f64 {
        match self {
            Utility::Zero => 0.0,
            _ => 2f64.sqrt(),
        }
    }
}

/// Stage `k` has `X_k = {S, B ≥ Δ_k, S + B ≤ D_k}`, controls on the solid
/// square `[0, δ_k]²` (the nest of boundaries of `[s, δ_k] × [0, δ_k]`),
/// the regulatory constraint, and the published `V_k`.
pub fn build_stage_models(m: &MarketModel) -> Result<(DpProblem, StageTable)> {
    let table = state_space_recursion(m)?;
    let stages = table
        .stages
        .iter()
        .zip(&m.laws)
        .map(|(sc, law)| StageModel {
            state_space: sc.state_space(),
            manifold: sc.manifold(),
            constraints: Arc::new(RegulatoryConstraint { q: sc.q, cost_stock: m.cost_stock, cost_bond: m.cost_bond }),
            dynamics: Arc::new(AllocationDynamics {
                cost_stock: m.cost_stock,
                cost_bond: m.cost_bond,
                lip_f_factor: sc.lipschitz.lip_f_factor,
            }),
            law: law.clone(),
        })
        .collect();
    let problem = DpProblem { stages, terminal_space: table.terminal_space() };
    Ok((problem, table))
}
