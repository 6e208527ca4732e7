mod commands;
mod config;
mod manifest;
mod output;

use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use commands::{CliError, Context};
use config::{ConfigError, Overrides, RunConfig};
use manifest::{git_blob_hash, Manifest};

#[derive(Parser)]
#[command(name = "wkam", version, about = "Weak KAM numerics for weakly coupled Hamilton-Jacobi systems")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Sample the structural assumptions on H and the coupling.
    Check(RunArgs),
    /// Ergodic constant and a stationary solution.
    Ergodic(RunArgs),
    /// Viscous Cauchy evolution from the stationary solution, per ε.
    Cauchy(RunArgs),
    /// Backward adjoint density from the configured source, per ε.
    Adjoint(RunArgs),
    /// Minimizing holonomic measure from the linear program.
    MatherLp(RunArgs),
    /// Measure built from the adjoint density, per ε.
    MatherAdjoint(RunArgs),
    /// Comparison check on two explicit solutions (d = 1).
    Compare(RunArgs),
    /// Sampled uniqueness set from vertices of the optimal face.
    UniquenessSet(RunArgs),
    /// The full acceptance battery.
    Suite(RunArgs),
}

#[derive(Args)]
struct RunArgs {
    /// TOML configuration (optional for `suite`).
    config: Option<PathBuf>,
    /// Grid points per axis.
    #[arg(long)]
    grid: Option<usize>,
    /// Comma-separated viscosity ladder.
    #[arg(long, value_delimiter = ',')]
    eps: Option<Vec<f64>>,
    /// Residual tolerance of the ergodic solver.
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

impl RunArgs {
    fn overrides(&self) -> Overrides {
        Overrides {
            grid: self.grid,
            eps: self.eps.clone(),
            tol: self.tol,
            seed: self.seed,
            out: self.out.clone(),
        }
    }
}

fn init_threads() -> Result<(), ConfigError> {
    if let Ok(v) = std::env::var("WKAM_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|n| *n > 0)
            .ok_or_else(|| ConfigError(format!("WKAM_THREADS: `{v}` is not a positive integer")))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| ConfigError(format!("WKAM_THREADS: {e}")))?;
    }
    Ok(())
}

fn run(name: &str, args: &RunArgs, command: &Command) -> Result<bool, CliError> {
    let start = Instant::now();
    init_threads()?;
    let is_suite = matches!(command, Command::Suite(_));
    let mut inputs = BTreeMap::new();
    let cfg = match &args.config {
        Some(path) => {
            let mut cfg = RunConfig::load(path)?;
            cfg.apply(&args.overrides())?;
            inputs.insert(path.display().to_string(), git_blob_hash(&fs::read(path)?));
            if let Some(table) = &cfg.problem.potential_table {
                let full = cfg.resolve(table);
                inputs.insert(full.display().to_string(), git_blob_hash(&fs::read(&full)?));
            }
            Some(cfg)
        }
        None if is_suite => None,
        None => return Err(ConfigError(format!("{name} needs a configuration file")).into()),
    };
    let out = match (&cfg, &args.out) {
        (Some(c), _) => c.output.dir.clone(),
        (None, Some(o)) => o.clone(),
        (None, None) => PathBuf::from("out"),
    };
    let mut ctx = Context::new(cfg, out)?;
    let outcome = match command {
        Command::Check(_) => commands::check(&mut ctx),
        Command::Ergodic(_) => commands::ergodic(&mut ctx),
        Command::Cauchy(_) => commands::cauchy(&mut ctx),
        Command::Adjoint(_) => commands::adjoint(&mut ctx),
        Command::MatherLp(_) => commands::mather_lp(&mut ctx),
        Command::MatherAdjoint(_) => commands::mather_adjoint(&mut ctx),
        Command::Compare(_) => commands::compare(&mut ctx),
        Command::UniquenessSet(_) => commands::uniqueness(&mut ctx),
        Command::Suite(a) => commands::suite(&mut ctx, a.seed),
    }?;
    let manifest = Manifest {
        command: name.to_string(),
        version: env!("CARGO_PKG_VERSION"),
        config: serde_json::to_value(&ctx.cfg).unwrap_or(serde_json::Value::Null),
        inputs,
        wall_seconds: start.elapsed().as_secs_f64(),
        threads: rayon::current_num_threads(),
        tolerances: std::mem::take(&mut ctx.tolerances),
        constants: std::mem::take(&mut ctx.constants),
        runs: std::mem::take(&mut ctx.runs),
        artifacts: ctx.artifacts.clone(),
        outcome,
    };
    let bytes = serde_json::to_vec_pretty(&manifest).map_err(wkam_core::Error::from)?;
    ctx.write("manifest.json", &bytes)?;
    println!(
        "{name}: {} ({})",
        if manifest.outcome.passed { "ok" } else { "verification failed" },
        manifest.outcome.detail
    );
    Ok(manifest.outcome.passed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    let (name, args) = match &cli.command {
        Command::Check(a) => ("check", a),
        Command::Ergodic(a) => ("ergodic", a),
        Command::Cauchy(a) => ("cauchy", a),
        Command::Adjoint(a) => ("adjoint", a),
        Command::MatherLp(a) => ("mather-lp", a),
        Command::MatherAdjoint(a) => ("mather-adjoint", a),
        Command::Compare(a) => ("compare", a),
        Command::UniquenessSet(a) => ("uniqueness-set", a),
        Command::Suite(a) => ("suite", a),
    };
    match run(name, args, &cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
