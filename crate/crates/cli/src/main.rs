mod config;
mod pipeline;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use config::{ConfigError, ControlMesh, RunConfig};

#[derive(Parser, Debug)]
#[command(name = "lipdp", version, about = "Constrained stochastic DP with Lipschitz certificates")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Backward induction; writes one CSV of values and policies per stage.
    Solve(Common),
    /// Solve, probe the admissible-set map and write the certificate report.
    Certify(Common),
    /// Radius check and solution table for a scalar implicit equation.
    Ift(Common),
}

#[derive(Args, Debug)]
struct Common {
    /// Configuration file; built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    /// State lattice mesh.
    #[arg(long)]
    hx: Option<f64>,
    /// Control sampling mesh.
    #[arg(long)]
    hu: Option<f64>,
    /// Worker threads for the node sweeps.
    #[arg(long)]
    threads: Option<usize>,
    /// Exit with status 4 when a check fails.
    #[arg(long)]
    strict: bool,
}

#[derive(Debug, Error)]
enum CliError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Pipeline(#[from] lipdp_core::Error),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    CheckFailed(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Pipeline(e) if e.is_numerical() => 3,
            CliError::Pipeline(lipdp_core::Error::InvalidInput(_)) => 2,
            CliError::Pipeline(_) => 3,
            CliError::Io(_) => 1,
            CliError::CheckFailed(_) => 4,
        }
    }
}

fn load(common: &Common) -> Result<RunConfig, CliError> {
    let mut cfg = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::from_text("")?,
    };
    if let Some(out) = &common.out {
        cfg.output = out.clone();
    }
    if let Some(seed) = common.seed {
        cfg.seed = seed;
    }
    if let Some(hx) = common.hx {
        if !(hx > 0.0 && hx.is_finite()) {
            return Err(ConfigError::Invalid { field: "--hx".into(), message: "must be positive".into() }.into());
        }
        cfg.h_x = hx;
    }
    if let Some(hu) = common.hu {
        if !(hu > 0.0 && hu.is_finite()) {
            return Err(ConfigError::Invalid { field: "--hu".into(), message: "must be positive".into() }.into());
        }
        cfg.h_u = ControlMesh::Fixed(hu);
    }
    if let Some(n) = common.threads {
        if n == 0 {
            return Err(ConfigError::Invalid { field: "--threads".into(), message: "must be at least 1".into() }.into());
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| CliError::Io(format!("cannot start worker pool: {e}")))?;
    }
    Ok(cfg)
}

fn write_file(dir: &Path, name: &str, contents: &str) -> Result<(), CliError> {
    std::fs::create_dir_all(dir).map_err(|e| CliError::Io(format!("{}: {e}", dir.display())))?;
    let path = dir.join(name);
    std::fs::write(&path, contents).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Solve(common) => {
            let cfg = load(&common)?;
            let built = pipeline::build(&cfg)?;
            let solution = pipeline::solve(&cfg, &built)?;
            for k in 0..solution.values.len() {
                write_file(&cfg.output, &format!("stage_{k}.csv"), &pipeline::stage_csv(&solution, k))?;
            }
            println!("wrote {} stage tables to {}", solution.values.len(), cfg.output.display());
            Ok(())
        }
        Command::Certify(common) => {
            let cfg = load(&common)?;
            let built = pipeline::build(&cfg)?;
            let solution = pipeline::solve(&cfg, &built)?;
            let outcome = pipeline::run_certify(&cfg, &built, &solution)?;
            write_file(&cfg.output, "certificate.txt", &outcome.report)?;
            print!("{}", outcome.report);
            if common.strict && !outcome.verdict() {
                return Err(CliError::CheckFailed("certificate check failed".into()));
            }
            Ok(())
        }
        Command::Ift(common) => {
            let cfg = load(&common)?;
            let outcome = pipeline::run_ift(&cfg)?;
            print!("{}", outcome.summary);
            write_file(&cfg.output, "ift_report.txt", &outcome.summary)?;
            match outcome.csv {
                Some(csv) => write_file(&cfg.output, "ift.csv", &csv),
                None => Err(CliError::CheckFailed(format!(
                    "radius conditions fail (margins {}, {})",
                    outcome.radii.residual_margin(),
                    outcome.radii.contraction_margin()
                ))),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
