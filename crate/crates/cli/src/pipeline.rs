use std::fmt::Write as _;
use std::sync::Arc;

use lipdp_core::constraints::{multifunction_lipschitz_probe, tau_estimate, ConstraintSystem, ProbeReport};
use lipdp_core::dp::{backward_induct, certify, CertifyParams, DpProblem, DpSolution, LipschitzCertificate, TauSource};
use lipdp_core::finance::{build_stage_models, StageTable, Utility};
use lipdp_core::ift::{implicit_jacobian, solve_implicit, verify_radii, ImplicitProblem, LinearMap, RadiiReport, SquareMap, DEFAULT_TOL};
use lipdp_core::{rng, Result};
use nalgebra::{DMatrix, DVector};

use crate::config::{MapKind, ProblemKind, RunConfig};

/// `a_u·u + a_v·v ≤ bound`, independent of the state.
#[derive(Debug, Clone, Copy)]
struct StateFree {
    a_u: f64,
    a_v: f64,
    bound: f64,
}

impl ConstraintSystem for StateFree {
    fn num_constraints(&self) -> usize {
        1
    }
    fn control_dim(&self) -> usize {
        2
    }
    fn state_dim(&self) -> usize {
        2
    }
    fn eval(&self, u: &[f64], _x: &[f64], out: &mut [f64]) {
        out[0] = self.a_u * u[0] + self.a_v * u[1] - self.bound;
    }
    fn jac_u(&self, _u: &[f64], _x: &[f64]) -> DMatrix<f64> {
        DMatrix::from_row_slice(1, 2, &[self.a_u, self.a_v])
    }
    fn jac_x(&self, _u: &[f64], _x: &[f64]) -> DMatrix<f64> {
        DMatrix::zeros(1, 2)
    }
}

pub struct Built {
    pub problem: DpProblem,
    pub table: StageTable,
    pub h_u: f64,
    /// Closed-form τ per stage.
    pub closed_taus: Vec<f64>,
}

pub fn build(cfg: &RunConfig) -> Result<Built> {
    let (mut problem, table) = build_stage_models(&cfg.market)?;
    let closed_taus = match cfg.problem {
        ProblemKind::Finance => table.stages.iter().map(|s| s.lipschitz.tau).collect(),
        ProblemKind::Custom { a_u, a_v, bound } => {
            let cs: Arc<dyn ConstraintSystem> = Arc::new(StateFree { a_u, a_v, bound });
            for stage in &mut problem.stages {
                stage.constraints = cs.clone();
            }
            vec![0.0; table.stages.len()]
        }
    };
    let deltas: Vec<f64> = table.stages.iter().map(|s| s.delta).collect();
    let h_u = cfg.control_mesh(&deltas);
    Ok(Built { problem, table, h_u, closed_taus })
}

pub fn solve(cfg: &RunConfig, built: &Built) -> Result<DpSolution> {
    backward_induct(&built.problem, |x| cfg.utility.value(x), cfg.h_x, built.h_u)
}

/// One CSV per stage: region nodes with `S,B,J` and, before the horizon,
/// the maximizing `u,v`.
pub fn stage_csv(solution: &DpSolution, k: usize) -> String {
    let value = &solution.values[k];
    let policy = solution.policies.get(k);
    let mut out = String::from(if policy.is_some() { "S,B,J,u,v\n" } else { "S,B,J\n" });
    for node in value.region_nodes() {
        let x = value.lattice().node(node);
        write!(out, "{},{},{}", x[0], x[1], value.values()[node]).unwrap();
        if let Some(p) = policy {
            let u = &p.controls[node];
            write!(out, ",{},{}", u[0], u[1]).unwrap();
        }
        out.push('\n');
    }
    out
}

pub struct CertifyOutcome {
    pub certificate: LipschitzCertificate,
    pub probes: Vec<ProbeReport>,
    pub report: String,
}

impl CertifyOutcome {
    pub fn verdict(&self) -> bool {
        self.certificate.all_pass() && self.probes.iter().all(ProbeReport::all_within_bound)
    }
}

pub fn run_certify(cfg: &RunConfig, built: &Built, solution: &DpSolution) -> Result<CertifyOutcome> {
    let problem = &built.problem;
    let taus: Vec<(f64, TauSource)> = match cfg.tau {
        TauSource::ClosedForm => built.closed_taus.iter().map(|&t| (t, TauSource::ClosedForm)).collect(),
        TauSource::Empirical => problem
            .stages
            .iter()
            .map(|s| {
                tau_estimate(s.constraints.as_ref(), &s.manifold, &s.state_space, cfg.h_x, built.h_u)
                    .map(|t| (t, TauSource::Empirical))
            })
            .collect::<Result<_>>()?,
    };
    let mut prng = rng::seeded(cfg.seed);
    let probes = problem
        .stages
        .iter()
        .zip(&taus)
        .map(|(s, &(tau, _))| {
            multifunction_lipschitz_probe(
                s.constraints.as_ref(),
                &s.manifold,
                &s.state_space,
                cfg.h_x,
                built.h_u,
                cfg.probe_pairs,
                tau,
                &mut prng,
            )
        })
        .collect::<Result<Vec<_>>>()?;
    let mut params = CertifyParams::new(cfg.h_x, built.h_u, cfg.seed);
    params.slack_factor = cfg.slack_factor;
    let certificate = certify(problem, solution, cfg.utility.lipschitz(), &taus, &params)?;
    let mut outcome = CertifyOutcome { certificate, probes, report: String::new() };
    outcome.report = render_report(cfg, built, &outcome);
    Ok(outcome)
}

fn render_report(cfg: &RunConfig, built: &Built, o: &CertifyOutcome) -> String {
    let mut r = String::new();
    let mut kv = |key: String, value: String| {
        writeln!(r, "{key} = {value}").unwrap();
    };
    kv("run.seed".into(), cfg.seed.to_string());
    kv("run.h_x".into(), cfg.h_x.to_string());
    kv("run.h_u".into(), built.h_u.to_string());
    kv("run.slack_factor".into(), cfg.slack_factor.to_string());
    kv("run.probe_pairs".into(), cfg.probe_pairs.to_string());
    kv(
        "problem.kind".into(),
        match cfg.problem {
            ProblemKind::Finance => "finance".into(),
            ProblemKind::Custom { a_u, a_v, bound } => format!("custom {a_u} {a_v} {bound}"),
        },
    );
    kv(
        "problem.utility".into(),
        match cfg.utility {
            Utility::Wealth => "wealth".into(),
            Utility::CappedWealth(w) => format!("capped {w}"),
            Utility::Zero => "zero".into(),
        },
    );
    kv("problem.lip_g".into(), cfg.utility.lipschitz().to_string());
    kv("problem.floor_recursion".into(), "min-over-support".into());
    let m = &cfg.market;
    kv("market.horizon".into(), m.horizon.to_string());
    kv("market.cost_stock".into(), m.cost_stock.to_string());
    kv("market.cost_bond".into(), m.cost_bond.to_string());
    kv("market.alpha".into(), m.alpha.to_string());
    kv("market.initial_state".into(), format!("{} {}", m.s0, m.b0));
    for (k, law) in m.laws.iter().enumerate() {
        let atoms: Vec<String> = law.atoms().map(|(y, w)| format!("{} {} {}", y[0], y[1], w)).collect();
        kv(format!("market.yields.{k}"), atoms.join(", "));
    }
    for sc in &built.table.stages {
        let k = sc.stage;
        kv(format!("constants.{k}.q"), sc.q.to_string());
        kv(format!("constants.{k}.delta"), sc.delta.to_string());
        kv(format!("constants.{k}.floor"), sc.floor.to_string());
        kv(format!("constants.{k}.cap"), sc.cap.to_string());
        kv(format!("constants.{k}.lambda"), sc.lipschitz.lambda.to_string());
        kv(format!("constants.{k}.mu"), sc.lipschitz.mu.to_string());
        kv(format!("constants.{k}.lip_f_factor"), sc.lipschitz.lip_f_factor.to_string());
    }
    kv(format!("constants.{}.floor", built.table.stages.len()), built.table.terminal_floor.to_string());
    kv(format!("constants.{}.cap", built.table.stages.len()), built.table.terminal_cap.to_string());
    for st in &o.certificate.stages {
        let k = st.stage;
        if let Some(f) = st.factors {
            kv(format!("stage.{k}.a"), f.a.to_string());
            kv(format!("stage.{k}.tau"), f.tau.to_string());
            kv(format!("stage.{k}.tau_source"), st.tau_source.map_or("", |t| t.as_str()).into());
            kv(format!("stage.{k}.lip_m"), f.lip_m.to_string());
            kv(format!("stage.{k}.expected_v"), f.expected_v.to_string());
        }
        kv(format!("stage.{k}.bound"), st.bound.to_string());
        kv(format!("stage.{k}.empirical"), st.empirical.to_string());
        kv(format!("stage.{k}.slack"), st.slack.to_string());
        kv(format!("stage.{k}.pass"), st.pass.to_string());
    }
    for (k, p) in o.probes.iter().enumerate() {
        kv(format!("probe.{k}.bound_factor"), p.bound_factor.to_string());
        kv(format!("probe.{k}.slack"), p.slack.to_string());
        kv(format!("probe.{k}.modulus"), p.modulus.to_string());
        kv(format!("probe.{k}.within_bound"), p.all_within_bound().to_string());
        kv(format!("probe.{k}.columns"), "distance, hausdorff, bound".into());
        for (i, row) in p.rows.iter().enumerate() {
            kv(format!("probe.{k}.row.{i}"), format!("{}, {}, {}", row.distance, row.hausdorff, row.bound));
        }
    }
    kv("verdict".into(), if o.verdict() { "PASS" } else { "FAIL" }.into());
    r
}

pub struct IftOutcome {
    pub radii: RadiiReport,
    pub csv: Option<String>,
    pub summary: String,
}

pub fn ift_problem(cfg: &RunConfig) -> Result<ImplicitProblem> {
    let c = &cfg.ift;
    let scalar = |x: f64| DVector::from_element(1, x);
    let map: Box<dyn lipdp_core::ift::ImplicitMap> = match c.map {
        MapKind::Linear { a, b } => Box::new(LinearMap { a: DMatrix::from_element(1, 1, a), b: scalar(b) }),
        MapKind::Square => Box::new(SquareMap { dim: 1 }),
    };
    ImplicitProblem::new(map, scalar(c.v0), scalar(c.y0), c.r1, c.r2)
}

/// Radius check, then on success the table `y, q(y), residual, dq/dy` over
/// `grid` equally spaced points of `[y0 − r2, y0 + r2]`.
pub fn run_ift(cfg: &RunConfig) -> Result<IftOutcome> {
    let c = &cfg.ift;
    let p = ift_problem(cfg)?;
    let radii = verify_radii(&p, c.samples)?;
    let mut summary = String::new();
    writeln!(summary, "residual_sup = {}", radii.residual_sup).unwrap();
    writeln!(summary, "residual_limit = {}", radii.residual_limit).unwrap();
    writeln!(summary, "residual_margin = {}", radii.residual_margin()).unwrap();
    writeln!(summary, "contraction_sup = {}", radii.contraction_sup).unwrap();
    writeln!(summary, "contraction_limit = {}", radii.contraction_limit).unwrap();
    writeln!(summary, "contraction_margin = {}", radii.contraction_margin()).unwrap();
    writeln!(summary, "verdict = {}", if radii.holds() { "PASS" } else { "FAIL" }).unwrap();
    if !radii.holds() {
        return Ok(IftOutcome { radii, csv: None, summary });
    }
    let mut csv = String::from("y,q,residual,jacobian\n");
    for i in 0..c.grid {
        let t = i as f64 / (c.grid - 1) as f64;
        let y = if i + 1 == c.grid { c.y0 + c.r2 } else { c.y0 - c.r2 + 2.0 * c.r2 * t };
        let yv = DVector::from_element(1, y);
        let sol = solve_implicit(&p, &yv, DEFAULT_TOL)?;
        let jac = implicit_jacobian(&p, &yv, &sol.v)?;
        writeln!(csv, "{},{},{},{}", y, sol.v[0], sol.residual, jac[(0, 0)]).unwrap();
    }
    Ok(IftOutcome { radii, csv: Some(csv), summary })
}
