use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use anyhow::Result;
use infact_core::synth::{
    run_benchmark, BenchmarkRun, ReplicateStatus, ReplicateSummary, AGGREGATE_COLUMNS, REPLICATES_FILE,
    REPLICATE_COLUMNS, SUMMARY_FILE, TIMINGS_FILE, TIMING_COLUMNS,
};
use infact_core::RunConfig;

use crate::manifest::{FileEntry, Manifest, RunStatus};
use crate::{write_config, EXIT_REPLICATE_FAILURES};

pub const TRACE_DIR: &str = "traces";
pub const BENCH_TRACE_COLUMNS: [&str; 2] = ["kept_index", "active"];

/// Runs the replicated benchmark. Exits with status 3 when any replicate
/// failed; the tables are still written and mark the failed rows.
pub fn bench(cfg: RunConfig) -> Result<ExitCode> {
    cfg.validate()?;
    let started = Instant::now();
    let out = cfg.out.clone();
    write_config(&cfg, &out)?;
    eprintln!(
        "benchmark: {} prior, {} design(s) x {} replicate(s), {} iterations ({} burn-in)",
        cfg.prior,
        cfg.designs.len(),
        cfg.replicates,
        cfg.iterations,
        cfg.burn_in
    );
    let run = run_benchmark(&cfg, |d, rows| {
        let ok: Vec<&ReplicateSummary> = rows.iter().filter(|r| r.is_ok()).collect();
        let exact = ok.iter().filter(|r| r.mode == d.k_true as f64).count();
        let secs: f64 = rows.iter().map(|r| r.wall_seconds).sum();
        eprintln!(
            "  p={:<4} K={:<3} mode = K in {exact}/{} ok replicates, {} failed, {secs:.1}s",
            d.p,
            d.k_true,
            ok.len(),
            rows.len() - ok.len()
        );
    })?;
    run.write(&out)?;

    let mut manifest = Manifest::new("bench", &cfg);
    manifest
        .files
        .push(FileEntry::table(REPLICATES_FILE, &REPLICATE_COLUMNS));
    manifest.files.push(FileEntry::table(SUMMARY_FILE, &AGGREGATE_COLUMNS));
    manifest.files.push(FileEntry::table(TIMINGS_FILE, &TIMING_COLUMNS));
    if cfg.write_traces {
        std::fs::create_dir_all(out.join(TRACE_DIR))?;
        for r in run.replicates.iter().filter(|r| r.is_ok()) {
            let rel = format!("{TRACE_DIR}/p{}_k{}-r{}.csv", r.p, r.k_true, r.replicate);
            write_counts(&out.join(&rel), &r.active_counts)?;
            manifest.files.push(FileEntry::table(rel, &BENCH_TRACE_COLUMNS));
        }
    }

    let failures: Vec<&ReplicateSummary> = run.failures().collect();
    if !failures.is_empty() {
        manifest.status = RunStatus::Partial;
    }
    manifest.wall_seconds = started.elapsed().as_secs_f64();
    manifest.write(&out)?;

    if failures.is_empty() {
        eprintln!("done in {:.1}s; results in {}", manifest.wall_seconds, out.display());
    }
    Ok(ExitCode::from(report_failures(&run)))
}

/// Prints a table of failed replicates and returns the process exit status.
pub fn report_failures(run: &BenchmarkRun) -> u8 {
    let failures: Vec<&ReplicateSummary> = run.failures().collect();
    if failures.is_empty() {
        return 0;
    }
    eprintln!("{} replicate(s) failed:", failures.len());
    eprintln!("  {:<12} {:>9}  reason", "design", "replicate");
    for r in failures {
        let reason = match &r.status {
            ReplicateStatus::Failed(m) => m.as_str(),
            ReplicateStatus::Ok => "",
        };
        eprintln!(
            "  {:<12} {:>9}  {reason}",
            format!("p{}_k{}", r.p, r.k_true),
            r.replicate
        );
    }
    EXIT_REPLICATE_FAILURES
}

fn write_counts(path: &Path, counts: &[usize]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(BENCH_TRACE_COLUMNS)?;
    for (i, k) in counts.iter().enumerate() {
        w.write_record([i.to_string(), k.to_string()])?;
    }
    w.flush()?;
    Ok(())
}
