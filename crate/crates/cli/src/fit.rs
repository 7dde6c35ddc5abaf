use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, ensure, Context, Result};
use infact_core::model::read_dataset;
use infact_core::runner::{
    write_matrix_csv, write_trace_csv, Chain, ChainCheckpoint, ChainResult, ChainSettings, CheckpointPolicy,
    TRACE_COLUMNS,
};
use infact_core::synth::summarize;
use infact_core::{Dataset, RngStream, RunConfig};
use nalgebra::DMatrix;
use rayon::prelude::*;

use crate::manifest::{FileEntry, Manifest, RunStatus};
use crate::{write_config, CONFIG_FILE};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const ACTIVE_FILE: &str = "active_counts.csv";
pub const OMEGA_FILE: &str = "omega.csv";
pub const CHECKPOINT_DIR: &str = "checkpoints";

pub const SUMMARY_COLUMNS: [&str; 10] = [
    "chain",
    "prior",
    "iterations",
    "burn_in",
    "kept",
    "mode",
    "iqr",
    "mean_active",
    "a1_mean",
    "a2_mean",
];
pub const ACTIVE_COLUMNS: [&str; 3] = ["active", "count", "proportion"];

pub fn trace_file(chain: usize) -> String {
    format!("trace-chain{chain}.csv")
}

fn checkpoint_path(out: &Path, chain: usize) -> PathBuf {
    out.join(CHECKPOINT_DIR).join(format!("chain-{chain}.json"))
}

/// Chains draw from streams that depend only on the seed and chain index.
fn chain_stream(seed: u64, chain: usize) -> RngStream {
    RngStream::new(seed, 1).substream(chain as u64)
}

/// Fits `cfg.chains` chains to `cfg.data` and writes results into `cfg.out`.
pub fn fit(cfg: RunConfig, stop_after: Option<usize>) -> Result<ExitCode> {
    cfg.validate()?;
    write_config(&cfg, &cfg.out)?;
    execute(cfg, stop_after, false)
}

/// Continues an interrupted `fit` from the checkpoints under `dir`.
pub fn resume(dir: &Path, stop_after: Option<usize>) -> Result<ExitCode> {
    let mut cfg = RunConfig::from_file(&dir.join(CONFIG_FILE))
        .with_context(|| format!("{} is not a run directory", dir.display()))?;
    if let Ok(m) = Manifest::read(dir) {
        ensure!(
            m.status != RunStatus::Complete,
            "run in {} is already complete",
            dir.display()
        );
    }
    cfg.out = dir.to_path_buf();
    execute(cfg, stop_after, true)
}

fn execute(cfg: RunConfig, stop_after: Option<usize>, resuming: bool) -> Result<ExitCode> {
    let started = Instant::now();
    let Some(data_path) = cfg.data.clone() else {
        bail!("fit needs a dataset: pass --data or set data in the config");
    };
    let data = read_dataset(&data_path).with_context(|| format!("reading {}", data_path.display()))?;
    let settings = cfg.chain_settings(data.p(), data.t());
    settings.validate()?;
    let out = cfg.out.clone();
    fs::create_dir_all(out.join(CHECKPOINT_DIR))?;
    eprintln!(
        "fitting {} prior to {} x {} data: {} chain(s), {} iterations ({} burn-in)",
        cfg.prior,
        data.t(),
        data.p(),
        cfg.chains,
        cfg.iterations,
        cfg.burn_in
    );

    let outcomes: Vec<Option<ChainResult>> = (0..cfg.chains)
        .into_par_iter()
        .map(|c| run_one(&cfg, &settings, &data, c, resuming, stop_after))
        .collect::<Result<_>>()?;

    let mut manifest = Manifest::new("fit", &cfg);
    if outcomes.iter().any(Option::is_none) {
        manifest.status = RunStatus::Interrupted;
        manifest.wall_seconds = started.elapsed().as_secs_f64();
        manifest.write(&out)?;
        eprintln!("stopped early; continue with: infact fit --resume {}", out.display());
        return Ok(ExitCode::SUCCESS);
    }
    let results: Vec<ChainResult> = outcomes.into_iter().flatten().collect();

    write_summary(&out.join(SUMMARY_FILE), &cfg, &results)?;
    manifest.files.push(FileEntry::table(SUMMARY_FILE, &SUMMARY_COLUMNS));
    let pooled: Vec<usize> = results.iter().flat_map(|r| r.active_counts.iter().copied()).collect();
    write_active_counts(&out.join(ACTIVE_FILE), &pooled)?;
    manifest.files.push(FileEntry::table(ACTIVE_FILE, &ACTIVE_COLUMNS));
    let omega = results
        .iter()
        .fold(DMatrix::zeros(data.p(), data.p()), |acc, r| acc + &r.omega_mean)
        / results.len() as f64;
    write_matrix_csv(&out.join(OMEGA_FILE), &omega)?;
    manifest.files.push(FileEntry::matrix(OMEGA_FILE));
    if cfg.write_traces {
        for (c, r) in results.iter().enumerate() {
            write_trace_csv(&out.join(trace_file(c)), &r.trace)?;
            manifest.files.push(FileEntry::table(trace_file(c), &TRACE_COLUMNS));
        }
    }
    let ckpt = out.join(CHECKPOINT_DIR);
    if ckpt.exists() {
        fs::remove_dir_all(&ckpt)?;
    }

    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.write(&out)?;
    let (mode, iqr) = summarize(&pooled)?;
    eprintln!(
        "done in {:.1}s: active factors mode {mode}, IQR {iqr}; results in {}",
        manifest.wall_seconds,
        out.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn run_one(
    cfg: &RunConfig,
    settings: &ChainSettings,
    data: &Dataset,
    c: usize,
    resuming: bool,
    stop_after: Option<usize>,
) -> Result<Option<ChainResult>> {
    let path = checkpoint_path(&cfg.out, c);
    let mut chain = if resuming {
        let cp = ChainCheckpoint::load(&path).with_context(|| format!("loading checkpoint {}", path.display()))?;
        ensure!(
            &cp.settings == settings,
            "checkpoint {} was written with different chain settings",
            path.display()
        );
        Chain::from_checkpoint(cp)
    } else {
        Chain::start(data, settings.clone(), chain_stream(cfg.seed, c))?
    };
    let policy = CheckpointPolicy {
        path,
        every: cfg.checkpoint_every,
    };
    if !chain.run(data, Some(&policy), stop_after)? {
        eprintln!("chain {c}: checkpoint at iteration {}", chain.next_iteration());
        return Ok(None);
    }
    Ok(Some(chain.finish()?))
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn mean_opt(vs: impl Iterator<Item = Option<f64>>) -> Option<f64> {
    let vs: Option<Vec<f64>> = vs.collect();
    vs.filter(|v| !v.is_empty())
        .map(|v| v.iter().sum::<f64>() / v.len() as f64)
}

fn write_summary(path: &Path, cfg: &RunConfig, results: &[ChainResult]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(SUMMARY_COLUMNS)?;
    let mut row = |label: String, counts: &[usize], a1: Option<f64>, a2: Option<f64>| -> Result<()> {
        let (mode, iqr) = summarize(counts)?;
        let mean = counts.iter().sum::<usize>() as f64 / counts.len() as f64;
        w.write_record([
            label,
            cfg.prior.to_string(),
            cfg.iterations.to_string(),
            cfg.burn_in.to_string(),
            counts.len().to_string(),
            mode.to_string(),
            iqr.to_string(),
            mean.to_string(),
            fmt_opt(a1),
            fmt_opt(a2),
        ])?;
        Ok(())
    };
    for (c, r) in results.iter().enumerate() {
        row(c.to_string(), &r.active_counts, r.a1_mean, r.a2_mean)?;
    }
    let pooled: Vec<usize> = results.iter().flat_map(|r| r.active_counts.iter().copied()).collect();
    row(
        "all".into(),
        &pooled,
        mean_opt(results.iter().map(|r| r.a1_mean)),
        mean_opt(results.iter().map(|r| r.a2_mean)),
    )?;
    w.flush()?;
    Ok(())
}

fn write_active_counts(path: &Path, counts: &[usize]) -> Result<()> {
    let max = counts.iter().copied().max().unwrap_or(0);
    let mut hist = vec![0usize; max + 1];
    for &k in counts {
        hist[k] += 1;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(ACTIVE_COLUMNS)?;
    for (k, &n) in hist.iter().enumerate().filter(|(_, &n)| n > 0) {
        w.write_record([
            k.to_string(),
            n.to_string(),
            (n as f64 / counts.len() as f64).to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
