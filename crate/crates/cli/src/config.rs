//! `key = value` configuration with `[section]` headers.
//!
//! ```text
//! [problem]
//! kind = finance            # finance | custom
//! utility = wealth          # wealth | capped | zero
//! wealth_cap = 2.5
//!
//! [market]
//! horizon = 3
//! cost_stock = 0.05
//! cost_bond = 0.05
//! alpha = 0.4
//! s0 = 0.8
//! b0 = 1.0
//! floor0 = 0.1
//! cap0 = 2.0
//! yields = 1.1 1.02 0.5, 0.9 1.02 0.5   # y_s y_b weight, per atom
//! yields.2 = 1.0 1.0 1.0                # optional per-stage override
//!
//! [custom]                  # kind = custom: a_u·u + a_v·v <= bound
//! a_u = 1
//! a_v = 1
//! bound = 0.5
//!
//! [mesh]
//! h_x = 0.07
//! h_u = auto                # or a number; auto = min_k δ_k / control_divisions
//! control_divisions = 60
//!
//! [certificate]
//! tau = closed-form         # closed-form | empirical
//! slack_factor = 2
//! probe_pairs = 200
//!
//! [run]
//! seed = 1
//! output = out
//!
//! [ift]
//! map = linear              # linear (F = v − a·y − b) | square (F = v² − y)
//! a = 1
//! b = 0
//! v0 = 0
//! y0 = 0
//! r1 = 1
//! r2 = 0.4
//! samples = 4096
//! grid = 21
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;

use lipdp_core::dp::{DisturbanceLaw, TauSource};
use lipdp_core::finance::{MarketModel, Utility};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: field `{field}`: {message}")]
    Field { line: usize, field: String, message: String },
    #[error("field `{field}`: {message}")]
    Invalid { field: String, message: String },
    #[error("cannot read config: {0}")]
    Io(String),
}

const KNOWN_KEYS: &[&str] = &[
    "problem.kind",
    "problem.utility",
    "problem.wealth_cap",
    "market.horizon",
    "market.cost_stock",
    "market.cost_bond",
    "market.alpha",
    "market.s0",
    "market.b0",
    "market.floor0",
    "market.cap0",
    "market.yields",
    "custom.a_u",
    "custom.a_v",
    "custom.bound",
    "mesh.h_x",
    "mesh.h_u",
    "mesh.control_divisions",
    "certificate.tau",
    "certificate.slack_factor",
    "certificate.probe_pairs",
    "run.seed",
    "run.output",
    "ift.map",
    "ift.a",
    "ift.b",
    "ift.v0",
    "ift.y0",
    "ift.r1",
    "ift.r2",
    "ift.samples",
    "ift.grid",
];

/// Raw `section.key → (line, value)` table.
#[derive(Debug, Clone, Default)]
struct Table {
    entries: BTreeMap<String, (usize, String)>,
}

fn is_known(key: &str) -> bool {
    if KNOWN_KEYS.contains(&key) {
        return true;
    }
    key.strip_prefix("market.yields.").is_some_and(|k| k.parse::<usize>().is_ok())
}

fn parse_table(text: &str) -> Result<Table, ConfigError> {
    let mut table = Table::default();
    let mut section = String::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .ok_or_else(|| ConfigError::Syntax { line, message: "unterminated section header".into() })?
                .trim();
            if name.is_empty() {
                return Err(ConfigError::Syntax { line, message: "empty section name".into() });
            }
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let key = key.trim();
        if section.is_empty() {
            return Err(ConfigError::Syntax { line, message: format!("`{key}` appears before any section header") });
        }
        let full = format!("{section}.{key}");
        if !is_known(&full) {
            return Err(ConfigError::Field { line, field: full, message: "unknown field".into() });
        }
        if let Some((first, _)) = table.entries.get(&full) {
            return Err(ConfigError::Field { line, field: full, message: format!("already set on line {first}") });
        }
        table.entries.insert(full, (line, value.trim().to_string()));
    }
    Ok(table)
}

impl Table {
    fn raw(&self, key: &str) -> Option<(usize, &str)> {
        self.entries.get(key).map(|(l, v)| (*l, v.as_str()))
    }

    fn parse<T: std::str::FromStr>(&self, key: &str, default: T) -> Result<T, ConfigError> {
        match self.raw(key) {
            None => Ok(default),
            Some((line, v)) => v.parse().map_err(|_| ConfigError::Field {
                line,
                field: key.into(),
                message: format!("cannot parse `{v}`"),
            }),
        }
    }

    fn field_error(&self, key: &str, message: String) -> ConfigError {
        match self.raw(key) {
            Some((line, _)) => ConfigError::Field { line, field: key.into(), message },
            None => ConfigError::Invalid { field: key.into(), message },
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ProblemKind {
    Finance,
    /// Finance dynamics and state spaces with the state-free constraint
    /// `a_u·u + a_v·v ≤ bound`.
    Custom { a_u: f64, a_v: f64, bound: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ControlMesh {
    Auto { divisions: usize },
    Fixed(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MapKind {
    Linear { a: f64, b: f64 },
    Square,
}

#[derive(Debug, Clone, PartialEq)]
pub struct IftConfig {
    pub map: MapKind,
    pub v0: f64,
    pub y0: f64,
    pub r1: f64,
    pub r2: f64,
    pub samples: usize,
    pub grid: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub problem: ProblemKind,
    pub utility: Utility,
    pub market: MarketModel,
    pub h_x: f64,
    pub h_u: ControlMesh,
    pub tau: TauSource,
    pub slack_factor: f64,
    pub probe_pairs: usize,
    pub seed: u64,
    pub output: PathBuf,
    pub ift: IftConfig,
}

fn parse_law(table: &Table, key: &str) -> Result<Option<DisturbanceLaw>, ConfigError> {
    let Some((line, text)) = table.raw(key) else {
        return Ok(None);
    };
    let err = |message: String| ConfigError::Field { line, field: key.into(), message };
    let mut support = Vec::new();
    let mut weights = Vec::new();
    for atom in text.split(',') {
        let nums: Vec<f64> = atom
            .split_whitespace()
            .map(|t| t.parse::<f64>().map_err(|_| err(format!("cannot parse `{t}`"))))
            .collect::<Result<_, _>>()?;
        if nums.len() != 3 {
            return Err(err(format!("atom `{}` needs `y_s y_b weight`", atom.trim())));
        }
        support.push(vec![nums[0], nums[1]]);
        weights.push(nums[2]);
    }
    DisturbanceLaw::new(support, weights).map(Some).map_err(|e| err(e.to_string()))
}

fn check(table: &Table, key: &str, ok: bool, message: &str) -> Result<(), ConfigError> {
    if ok {
        Ok(())
    } else {
        Err(table.field_error(key, message.into()))
    }
}

impl RunConfig {
    pub fn from_text(text: &str) -> Result<Self, ConfigError> {
        let t = parse_table(text)?;
        let desk = MarketModel::desk();

        let problem = match t.raw("problem.kind").map(|(_, v)| v).unwrap_or("finance") {
            "finance" => ProblemKind::Finance,
            "custom" => ProblemKind::Custom {
                a_u: t.parse("custom.a_u", 1.0)?,
                a_v: t.parse("custom.a_v", 1.0)?,
                bound: t.parse("custom.bound", 1.0)?,
            },
            other => return Err(t.field_error("problem.kind", format!("expected finance or custom, got `{other}`"))),
        };
        let utility = match t.raw("problem.utility").map(|(_, v)| v).unwrap_or("wealth") {
            "wealth" => Utility::Wealth,
            "capped" => {
                let w: f64 = t.parse("problem.wealth_cap", 2.0)?;
                check(&t, "problem.wealth_cap", w.is_finite(), "must be finite")?;
                Utility::CappedWealth(w)
            }
            "zero" => Utility::Zero,
            other => {
                return Err(t.field_error("problem.utility", format!("expected wealth, capped or zero, got `{other}`")))
            }
        };

        let horizon: usize = t.parse("market.horizon", desk.horizon)?;
        check(&t, "market.horizon", horizon >= 1, "must be at least 1")?;
        let base_law = parse_law(&t, "market.yields")?.unwrap_or_else(|| desk.laws[0].clone());
        let mut laws = vec![base_law; horizon];
        let overrides: Vec<String> =
            t.entries.keys().filter(|k| k.starts_with("market.yields.")).cloned().collect();
        for key in overrides {
            let k: usize = key["market.yields.".len()..].parse().expect("checked by is_known");
            check(&t, &key, k < horizon, "stage index beyond the horizon")?;
            laws[k] = parse_law(&t, &key)?.expect("key present");
        }
        let market = MarketModel {
            horizon,
            cost_stock: t.parse("market.cost_stock", desk.cost_stock)?,
            cost_bond: t.parse("market.cost_bond", desk.cost_bond)?,
            alpha: t.parse("market.alpha", desk.alpha)?,
            laws,
            s0: t.parse("market.s0", desk.s0)?,
            b0: t.parse("market.b0", desk.b0)?,
            floor0: t.parse("market.floor0", desk.floor0)?,
            cap0: t.parse("market.cap0", desk.cap0)?,
        };
        for field in ["cost_stock", "cost_bond", "alpha"] {
            let key = format!("market.{field}");
            let value = match field {
                "cost_stock" => market.cost_stock,
                "cost_bond" => market.cost_bond,
                _ => market.alpha,
            };
            check(&t, &key, value > 0.0 && value < 1.0, "must lie in (0, 1)")?;
        }
        market.validate().map_err(|e| ConfigError::Invalid { field: "market".into(), message: e.to_string() })?;

        let h_x: f64 = t.parse("mesh.h_x", 0.07)?;
        check(&t, "mesh.h_x", h_x > 0.0 && h_x.is_finite(), "must be positive")?;
        let divisions: usize = t.parse("mesh.control_divisions", 60)?;
        check(&t, "mesh.control_divisions", divisions >= 1, "must be at least 1")?;
        let h_u = match t.raw("mesh.h_u").map(|(_, v)| v).unwrap_or("auto") {
            "auto" => ControlMesh::Auto { divisions },
            _ => {
                let h: f64 = t.parse("mesh.h_u", 0.0)?;
                check(&t, "mesh.h_u", h > 0.0 && h.is_finite(), "must be positive or `auto`")?;
                ControlMesh::Fixed(h)
            }
        };

        let tau = match t.raw("certificate.tau").map(|(_, v)| v).unwrap_or("closed-form") {
            "closed-form" => TauSource::ClosedForm,
            "empirical" => TauSource::Empirical,
            other => {
                return Err(t.field_error("certificate.tau", format!("expected closed-form or empirical, got `{other}`")))
            }
        };
        let slack_factor: f64 = t.parse("certificate.slack_factor", 2.0)?;
        check(&t, "certificate.slack_factor", slack_factor >= 0.0 && slack_factor.is_finite(), "must be nonnegative")?;
        let probe_pairs: usize = t.parse("certificate.probe_pairs", 200)?;

        let map = match t.raw("ift.map").map(|(_, v)| v).unwrap_or("linear") {
            "linear" => MapKind::Linear { a: t.parse("ift.a", 1.0)?, b: t.parse("ift.b", 0.0)? },
            "square" => MapKind::Square,
            other => return Err(t.field_error("ift.map", format!("expected linear or square, got `{other}`"))),
        };
        let ift = IftConfig {
            map,
            v0: t.parse("ift.v0", 0.0)?,
            y0: t.parse("ift.y0", 0.0)?,
            r1: t.parse("ift.r1", 1.0)?,
            r2: t.parse("ift.r2", 0.4)?,
            samples: t.parse("ift.samples", 4096)?,
            grid: t.parse("ift.grid", 21)?,
        };
        check(&t, "ift.r1", ift.r1 > 0.0, "must be positive")?;
        check(&t, "ift.r2", ift.r2 > 0.0, "must be positive")?;
        check(&t, "ift.grid", ift.grid >= 2, "must be at least 2")?;

        Ok(Self {
            problem,
            utility,
            market,
            h_x,
            h_u,
            tau,
            slack_factor,
            probe_pairs,
            seed: t.parse("run.seed", 1)?,
            output: PathBuf::from(t.raw("run.output").map(|(_, v)| v).unwrap_or("out")),
            ift,
        })
    }

    pub fn load(path: &std::path::Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io(format!("{}: {e}", path.display())))?;
        Self::from_text(&text)
    }

    /// Control mesh used at every stage.
    pub fn control_mesh(&self, deltas: &[f64]) -> f64 {
        match self.h_u {
            ControlMesh::Fixed(h) => h,
            ControlMesh::Auto { divisions } => deltas.iter().copied().fold(f64::INFINITY, f64::min) / divisions as f64,
        }
    }
}
