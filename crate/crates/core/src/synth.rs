//! Synthetic benchmark: sparse true models, simulated data, replicated
//! chains and mode/IQR summaries of the active-factor count.

use std::path::Path;
use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::model::{Dataset, LoadingMatrix};
use crate::rng::RngStream;
use crate::runner::{csv_err, run_chain, ChainSettings};
use crate::stats::{sample_inv_gamma, sample_normal, sample_std_normal};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SimDesign {
    pub p: usize,
    pub k_true: usize,
    pub observations: usize,
    /// Variance of the nonzero true loadings.
    pub loading_variance: f64,
    /// Inverse-gamma parameters of the true idiosyncratic variances.
    pub idio_shape: f64,
    pub idio_scale: f64,
    pub replicates: usize,
}

impl SimDesign {
    pub fn new(p: usize, k_true: usize) -> Self {
        Self {
            p,
            k_true,
            observations: 100,
            loading_variance: 9.0,
            idio_shape: 1.0,
            idio_scale: 0.25,
            replicates: 10,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.p < 2 || self.k_true == 0 || self.k_true > self.p {
            return Err(Error::param(format!(
                "design needs p >= 2 and 1 <= K <= p, got ({}, {})",
                self.p, self.k_true
            )));
        }
        if self.observations < 2 || self.replicates == 0 {
            return Err(Error::param("design needs at least 2 observations and 1 replicate"));
        }
        for v in [self.loading_variance, self.idio_shape, self.idio_scale] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param("design variances and idiosyncratic prior must be > 0"));
            }
        }
        Ok(())
    }

    pub fn id(&self) -> String {
        format!("p{}_k{}", self.p, self.k_true)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub loadings: LoadingMatrix,
    pub idio_variances: DVector<f64>,
}

impl TrueModel {
    pub fn covariance(&self) -> DMatrix<f64> {
        crate::model::implied_covariance(&self.loadings, &self.idio_variances)
    }
}

/// Each column gets a uniformly drawn number of nonzeros in `[K+1, 2K]`
/// (capped at `p`) at uniformly chosen rows, with `N(0, loading_variance)`
/// values; `σ_i² ~ IG(idio_shape, idio_scale)`.
pub fn generate_true_model<R: Rng + ?Sized>(design: &SimDesign, rng: &mut R) -> Result<TrueModel> {
    design.validate()?;
    let (p, k) = (design.p, design.k_true);
    let mut lam = DMatrix::zeros(p, k);
    for h in 0..k {
        let lo = (k + 1).min(p);
        let hi = (2 * k).min(p).max(lo);
        let count = rng.random_range(lo..=hi);
        for i in sample_indices(rng, p, count) {
            lam[(i, h)] = sample_normal(0.0, design.loading_variance, rng);
        }
    }
    let mut idio = DVector::zeros(p);
    for i in 0..p {
        idio[i] = sample_inv_gamma(design.idio_shape, design.idio_scale, rng)?;
    }
    Ok(TrueModel {
        loadings: LoadingMatrix::new(lam)?,
        idio_variances: idio,
    })
}

/// `T` draws `y_t = Λf_t + ε_t`, i.e. iid `N_p(0, ΛΛᵀ + Σ)`.
pub fn generate_dataset<R: Rng + ?Sized>(truth: &TrueModel, t: usize, rng: &mut R) -> Result<Dataset> {
    let lam = truth.loadings.matrix();
    let (p, k) = (lam.nrows(), lam.ncols());
    let sd = truth.idio_variances.map(f64::sqrt);
    let mut y = DMatrix::zeros(t, p);
    let mut f = DVector::zeros(k);
    for tt in 0..t {
        for h in 0..k {
            f[h] = sample_std_normal(rng);
        }
        let mean = lam * &f;
        for i in 0..p {
            y[(tt, i)] = mean[i] + sd[i] * sample_std_normal(rng);
        }
    }
    Dataset::new(y)
}

/// Linear-interpolation quantile of sorted data (`h = (n-1)q`).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mode (ties go to the smallest value) and interquartile range of a trace.
pub fn summarize(counts: &[usize]) -> Result<(f64, f64)> {
    if counts.is_empty() {
        return Err(Error::param("cannot summarize an empty trace"));
    }
    let mut sorted = counts.to_vec();
    sorted.sort_unstable();
    let (mut best, mut best_n) = (sorted[0], 0);
    let mut i = 0;
    while i < sorted.len() {
        let j = sorted[i..].iter().take_while(|&&x| x == sorted[i]).count();
        if j > best_n {
            best = sorted[i];
            best_n = j;
        }
        i += j;
    }
    let xs: Vec<f64> = sorted.iter().map(|&x| x as f64).collect();
    Ok((best as f64, quantile_sorted(&xs, 0.75) - quantile_sorted(&xs, 0.25)))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum ReplicateStatus {
    Ok,
    Failed(String),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReplicateSummary {
    pub p: usize,
    pub k_true: usize,
    pub replicate: usize,
    pub seed: u64,
    pub prior: String,
    pub status: ReplicateStatus,
    pub active_counts: Vec<usize>,
    pub mode: f64,
    pub iqr: f64,
    pub a1_mean: Option<f64>,
    pub a2_mean: Option<f64>,
    /// `‖Ω̂ - Ω‖_F / ‖Ω‖_F` for the posterior-mean covariance.
    pub omega_rel_error: f64,
    pub wall_seconds: f64,
}

impl ReplicateSummary {
    pub fn is_ok(&self) -> bool {
        self.status == ReplicateStatus::Ok
    }
}

/// Stream for one replicate; it depends only on the master seed, the design
/// and the replicate index, so scheduling order never matters.
pub fn replicate_stream(seed: u64, design: &SimDesign, replicate: usize) -> RngStream {
    let tag = ((design.p as u64) << 40) ^ ((design.k_true as u64) << 20) ^ replicate as u64;
    RngStream::new(seed, 0).substream(tag)
}

/// Generates a true model and dataset, runs one chain and summarizes the
/// kept active-factor counts. Sampler failures are reported in `status`.
pub fn run_replicate(design: &SimDesign, chain: &ChainSettings, seed: u64, replicate: usize) -> ReplicateSummary {
    let start = Instant::now();
    let root = replicate_stream(seed, design, replicate);
    let mut out = ReplicateSummary {
        p: design.p,
        k_true: design.k_true,
        replicate,
        seed,
        prior: chain.prior.kind().to_string(),
        status: ReplicateStatus::Ok,
        active_counts: Vec::new(),
        mode: f64::NAN,
        iqr: f64::NAN,
        a1_mean: None,
        a2_mean: None,
        omega_rel_error: f64::NAN,
        wall_seconds: 0.0,
    };
    let res = (|| -> Result<()> {
        let truth = generate_true_model(design, &mut root.substream(1))?;
        let data = generate_dataset(&truth, design.observations, &mut root.substream(2))?;
        let r = run_chain(&data, chain.clone(), root.substream(3))?;
        let (mode, iqr) = summarize(&r.active_counts)?;
        let omega = truth.covariance();
        out.mode = mode;
        out.iqr = iqr;
        out.a1_mean = r.a1_mean;
        out.a2_mean = r.a2_mean;
        out.omega_rel_error = (&r.omega_mean - &omega).norm() / omega.norm();
        out.active_counts = r.active_counts;
        Ok(())
    })();
    if let Err(e) = res {
        out.status = ReplicateStatus::Failed(e.to_string());
    }
    out.wall_seconds = start.elapsed().as_secs_f64();
    out
}

/// All replicates of a design, in parallel on the current rayon pool.
/// Results come back in replicate order.
pub fn run_design(design: &SimDesign, chain: &ChainSettings, seed: u64) -> Vec<ReplicateSummary> {
    (0..design.replicates)
        .into_par_iter()
        .map(|r| run_replicate(design, chain, seed, r))
        .collect()
}

/// Cross-replicate summary in the layout of the comparison tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DesignAggregate {
    pub p: usize,
    pub k_true: usize,
    pub prior: String,
    pub replicates: usize,
    pub failed: usize,
    pub mean_mode: f64,
    pub mean_iqr: f64,
    /// IQR of all replicates' kept counts pooled together.
    pub pooled_iqr: f64,
    pub exact_modes: usize,
    pub mean_a1: Option<f64>,
    pub mean_a2: Option<f64>,
    pub mean_omega_rel_error: f64,
}

pub fn aggregate(rows: &[ReplicateSummary]) -> Result<DesignAggregate> {
    let first = rows.first().ok_or_else(|| Error::param("no replicates to aggregate"))?;
    let ok: Vec<&ReplicateSummary> = rows.iter().filter(|r| r.is_ok()).collect();
    let n = ok.len() as f64;
    let mean = |f: &dyn Fn(&ReplicateSummary) -> f64| ok.iter().map(|r| f(r)).sum::<f64>() / n;
    let mean_opt = |f: &dyn Fn(&ReplicateSummary) -> Option<f64>| -> Option<f64> {
        let v: Option<Vec<f64>> = ok.iter().map(|r| f(r)).collect();
        v.filter(|v| !v.is_empty())
            .map(|v| v.iter().sum::<f64>() / v.len() as f64)
    };
    let pooled: Vec<usize> = ok.iter().flat_map(|r| r.active_counts.iter().copied()).collect();
    let pooled_iqr = if pooled.is_empty() {
        f64::NAN
    } else {
        summarize(&pooled)?.1
    };
    Ok(DesignAggregate {
        p: first.p,
        k_true: first.k_true,
        prior: first.prior.clone(),
        replicates: rows.len(),
        failed: rows.len() - ok.len(),
        mean_mode: mean(&|r| r.mode),
        mean_iqr: mean(&|r| r.iqr),
        pooled_iqr,
        exact_modes: ok.iter().filter(|r| r.mode == r.k_true as f64).count(),
        mean_a1: mean_opt(&|r| r.a1_mean),
        mean_a2: mean_opt(&|r| r.a2_mean),
        mean_omega_rel_error: mean(&|r| r.omega_rel_error),
    })
}

pub const REPLICATE_COLUMNS: [&str; 12] = [
    "design",
    "p",
    "k_true",
    "prior",
    "seed",
    "replicate",
    "status",
    "mode",
    "iqr",
    "a1_mean",
    "a2_mean",
    "omega_rel_error",
];

pub const AGGREGATE_COLUMNS: [&str; 13] = [
    "design",
    "p",
    "k_true",
    "prior",
    "replicates",
    "failed",
    "mean_mode",
    "mean_iqr",
    "pooled_iqr",
    "exact_modes",
    "mean_a1",
    "mean_a2",
    "mean_omega_rel_error",
];

pub const TIMING_COLUMNS: [&str; 3] = ["design", "replicate", "wall_seconds"];

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

fn fmt_f(v: f64) -> String {
    if v.is_nan() {
        String::new()
    } else {
        v.to_string()
    }
}

/// One row per replicate. Wall times are kept out of this file so reruns
/// with the same seed produce identical bytes.
pub fn write_replicates_csv(path: &Path, rows: &[ReplicateSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(REPLICATE_COLUMNS).map_err(csv_err)?;
    for r in rows {
        let status = match &r.status {
            ReplicateStatus::Ok => "ok".to_string(),
            ReplicateStatus::Failed(m) => format!("failed: {m}"),
        };
        w.write_record([
            format!("p{}_k{}", r.p, r.k_true),
            r.p.to_string(),
            r.k_true.to_string(),
            r.prior.clone(),
            r.seed.to_string(),
            r.replicate.to_string(),
            status,
            fmt_f(r.mode),
            fmt_f(r.iqr),
            fmt_opt(r.a1_mean),
            fmt_opt(r.a2_mean),
            fmt_f(r.omega_rel_error),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_aggregate_csv(path: &Path, rows: &[DesignAggregate]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(AGGREGATE_COLUMNS).map_err(csv_err)?;
    for a in rows {
        w.write_record([
            format!("p{}_k{}", a.p, a.k_true),
            a.p.to_string(),
            a.k_true.to_string(),
            a.prior.clone(),
            a.replicates.to_string(),
            a.failed.to_string(),
            fmt_f(a.mean_mode),
            fmt_f(a.mean_iqr),
            fmt_f(a.pooled_iqr),
            a.exact_modes.to_string(),
            fmt_opt(a.mean_a1),
            fmt_opt(a.mean_a2),
            fmt_f(a.mean_omega_rel_error),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timings_csv(path: &Path, rows: &[ReplicateSummary]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TIMING_COLUMNS).map_err(csv_err)?;
    for r in rows {
        w.write_record([
            format!("p{}_k{}", r.p, r.k_true),
            r.replicate.to_string(),
            r.wall_seconds.to_string(),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub const REPLICATES_FILE: &str = "replicates.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TIMINGS_FILE: &str = "timings.csv";

/// Every replicate of every design plus the per-design aggregates.
#[derive(Clone, Debug)]
pub struct BenchmarkRun {
    pub replicates: Vec<ReplicateSummary>,
    pub aggregates: Vec<DesignAggregate>,
}

impl BenchmarkRun {
    pub fn failures(&self) -> impl Iterator<Item = &ReplicateSummary> {
        self.replicates.iter().filter(|r| !r.is_ok())
    }

    /// Writes the replicate, summary and timing tables into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_replicates_csv(&dir.join(REPLICATES_FILE), &self.replicates)?;
        write_aggregate_csv(&dir.join(SUMMARY_FILE), &self.aggregates)?;
        write_timings_csv(&dir.join(TIMINGS_FILE), &self.replicates)
    }
}

/// Runs every configured design; `on_design` sees each design's replicates
/// as soon as they finish.
pub fn run_benchmark(
    cfg: &RunConfig,
    mut on_design: impl FnMut(&SimDesign, &[ReplicateSummary]),
) -> Result<BenchmarkRun> {
    cfg.validate()?;
    let mut replicates = Vec::new();
    let mut aggregates = Vec::new();
    for design in cfg.sim_designs() {
        design.validate()?;
        let chain = cfg.chain_settings(design.p, design.observations);
        let rows = run_design(&design, &chain, cfg.seed);
        on_design(&design, &rows);
        aggregates.push(aggregate(&rows)?);
        replicates.extend(rows);
    }
    Ok(BenchmarkRun { replicates, aggregates })
}
