//! Command-line driver: `fit` a model to a dataset, run the synthetic
//! `bench`mark grid, `simulate` a dataset or print a resolved `config`.

mod bench;
mod fit;
pub mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use infact_core::config::{format_designs, parse_designs, parse_pairs};
use infact_core::synth::{generate_dataset, generate_true_model, replicate_stream};
use infact_core::{PriorKind, RunConfig, SimDesign};

pub use bench::{bench, report_failures};
pub use fit::{fit, resume};

/// Environment variable holding the worker-thread count.
pub const WORKERS_ENV: &str = "INFACT_WORKERS";

/// Exit status when some benchmark replicates failed.
pub const EXIT_REPLICATE_FAILURES: u8 = 3;

pub const CONFIG_FILE: &str = "config.txt";

#[derive(Debug, Parser)]
#[command(
    name = "infact",
    version,
    about = "Bayesian infinite factor models with adaptive Gibbs samplers"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a factor model to a dataset (CSV or binary)
    Fit(FitArgs),
    /// Run replicated chains on simulated data over a grid of designs
    Bench(BenchArgs),
    /// Write a simulated dataset
    Simulate(SimulateArgs),
    /// Print the fully resolved configuration
    Config(RunArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct RunArgs {
    /// mgp, cusp or ibp
    #[arg(long)]
    pub prior: Option<PriorKind>,
    /// key = value file, or a manifest.json from an earlier run
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub iterations: Option<usize>,
    #[arg(long)]
    pub burn_in: Option<usize>,
    /// Output directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Override any configuration key (repeatable)
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Dataset: CSV (T rows by p columns, optional header) or binary
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub chains: Option<usize>,
    /// Continue an interrupted run from its output directory
    #[arg(long, value_name = "DIR", conflicts_with_all = ["prior", "config", "seed", "iterations", "burn_in", "out", "set", "data", "chains"])]
    pub resume: Option<PathBuf>,
    /// Stop (with checkpoints written) once this many iterations are done
    #[arg(long, hide = true)]
    pub stop_after: Option<usize>,
}

#[derive(Debug, Args)]
pub struct BenchArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Designs as p:K pairs, e.g. 6:2,10:3
    #[arg(long)]
    pub design: Option<String>,
    #[arg(long)]
    pub replicates: Option<usize>,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    /// One design as p:K
    #[arg(long)]
    pub design: String,
    #[arg(long, default_value_t = 100)]
    pub observations: usize,
    #[arg(long, default_value_t = 20_240_601)]
    pub seed: u64,
    /// Replicate index; the same index in `bench` sees the same data
    #[arg(long, default_value_t = 0)]
    pub replicate: usize,
    /// Dataset CSV to write
    #[arg(long)]
    pub out: PathBuf,
    /// Also write the true covariance matrix here
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

/// Reads `key = value` pairs from a config file or from the `config` block
/// of a run manifest.
pub fn load_config_pairs(path: &Path) -> Result<Vec<(String, String)>> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    if text.trim_start().starts_with('{') {
        let m: manifest::Manifest =
            serde_json::from_str(&text).with_context(|| format!("parsing manifest {}", path.display()))?;
        return Ok(m.config.into_iter().collect());
    }
    Ok(parse_pairs(&text)?)
}

/// Config file first, then flags, then `--set` overrides.
pub fn resolve_config(run: &RunArgs, extra: &[(&str, String)]) -> Result<RunConfig> {
    let mut pairs: Vec<(String, String)> = Vec::new();
    if let Some(path) = &run.config {
        pairs.extend(load_config_pairs(path)?);
    }
    let mut flag = |k: &str, v: Option<String>| {
        if let Some(v) = v {
            pairs.push((k.to_string(), v));
        }
    };
    flag("prior", run.prior.map(|p| p.to_string()));
    flag("seed", run.seed.map(|v| v.to_string()));
    flag("iterations", run.iterations.map(|v| v.to_string()));
    flag("burn_in", run.burn_in.map(|v| v.to_string()));
    flag("out", run.out.as_ref().map(|v| v.display().to_string()));
    for (k, v) in extra {
        pairs.push((k.to_string(), v.clone()));
    }
    for s in &run.set {
        let (k, v) = s
            .split_once('=')
            .with_context(|| format!("--set expects KEY=VALUE, got '{s}'"))?;
        pairs.push((k.trim().to_string(), v.trim().to_string()));
    }
    Ok(RunConfig::from_pairs(&pairs)?)
}

pub fn write_config(cfg: &RunConfig, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(CONFIG_FILE), cfg.emit())?;
    Ok(())
}

fn simulate(a: &SimulateArgs) -> Result<()> {
    let designs = parse_designs(&a.design)?;
    let &[(p, k)] = designs.as_slice() else {
        bail!("--design takes exactly one p:K pair for simulate");
    };
    let design = SimDesign {
        observations: a.observations,
        ..SimDesign::new(p, k)
    };
    design.validate()?;
    let root = replicate_stream(a.seed, &design, a.replicate);
    let truth = generate_true_model(&design, &mut root.substream(1))?;
    let data = generate_dataset(&truth, design.observations, &mut root.substream(2))?;
    infact_core::model::write_dataset_csv(&data, &a.out)?;
    if let Some(path) = &a.truth {
        infact_core::runner::write_matrix_csv(path, &truth.covariance())?;
    }
    eprintln!(
        "wrote {} ({} x {}, design {})",
        a.out.display(),
        data.t(),
        data.p(),
        format_designs(&designs)
    );
    Ok(())
}

/// Sizes the global worker pool from `INFACT_WORKERS` when it is set.
pub fn init_workers() -> Result<()> {
    if let Ok(v) = std::env::var(WORKERS_ENV) {
        let n: usize = v
            .trim()
            .parse()
            .with_context(|| format!("{WORKERS_ENV} must be a positive integer, got '{v}'"))?;
        if n == 0 {
            bail!("{WORKERS_ENV} must be >= 1");
        }
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    Ok(())
}

pub fn run(cli: Cli) -> Result<ExitCode> {
    match cli.command {
        Command::Fit(a) => {
            if let Some(dir) = &a.resume {
                return resume(dir, a.stop_after);
            }
            let mut extra = Vec::new();
            if let Some(d) = &a.data {
                extra.push(("data", d.display().to_string()));
            }
            if let Some(c) = a.chains {
                extra.push(("chains", c.to_string()));
            }
            fit(resolve_config(&a.run, &extra)?, a.stop_after)
        }
        Command::Bench(a) => {
            let mut extra = Vec::new();
            if let Some(d) = &a.design {
                extra.push(("designs", d.clone()));
            }
            if let Some(r) = a.replicates {
                extra.push(("replicates", r.to_string()));
            }
            bench(resolve_config(&a.run, &extra)?)
        }
        Command::Simulate(a) => {
            simulate(&a)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Config(a) => {
            print!("{}", resolve_config(&a, &[])?.emit());
            Ok(ExitCode::SUCCESS)
        }
    }
}
