//! Chain execution with posterior accumulators and resumable checkpoints.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::adapt::AdaptationSchedule;
use crate::error::{Error, Result};
use crate::model::Dataset;
use crate::rng::{RngState, RngStream};
use crate::sampler::{PriorConfig, Sampler, SweepRecord};

pub const CHECKPOINT_VERSION: u32 = 1;

/// What one chain runs: the prior, its length and its adaptation schedule.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainSettings {
    pub prior: PriorConfig,
    pub iterations: usize,
    pub burn_in: usize,
    pub schedule: Option<AdaptationSchedule>,
}

impl ChainSettings {
    pub fn validate(&self) -> Result<()> {
        self.prior.validate()?;
        if self.burn_in >= self.iterations {
            return Err(Error::Config(format!(
                "burn_in: must be smaller than iterations ({} >= {})",
                self.burn_in, self.iterations
            )));
        }
        if let Some(s) = &self.schedule {
            s.validate()?;
        }
        Ok(())
    }
}

/// Running sums over the kept (post burn-in) iterations.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainAccumulator {
    pub kept: usize,
    pub omega_sum: DMatrix<f64>,
    pub a1_sum: f64,
    pub a2_sum: f64,
    pub active_counts: Vec<usize>,
}

impl ChainAccumulator {
    fn new(p: usize) -> Self {
        Self {
            kept: 0,
            omega_sum: DMatrix::zeros(p, p),
            a1_sum: 0.0,
            a2_sum: 0.0,
            active_counts: Vec::new(),
        }
    }
}

/// Everything needed to continue a chain exactly where it stopped.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ChainCheckpoint {
    pub version: u32,
    pub settings: ChainSettings,
    pub next_iteration: usize,
    pub sampler: Sampler,
    pub rng: RngState,
    pub trace: Vec<SweepRecord>,
    pub acc: ChainAccumulator,
}

impl ChainCheckpoint {
    pub fn save(&self, path: &Path) -> Result<()> {
        let tmp = path.with_extension("tmp");
        {
            let mut f = fs::File::create(&tmp)?;
            serde_json::to_writer(&mut f, self)?;
            f.flush()?;
        }
        fs::rename(&tmp, path)?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)?;
        let c: Self = serde_json::from_str(&text)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(Error::Format(format!(
                "checkpoint version {} is not supported (expected {CHECKPOINT_VERSION})",
                c.version
            )));
        }
        Ok(c)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChainResult {
    pub trace: Vec<SweepRecord>,
    /// Active-factor count at every kept iteration.
    pub active_counts: Vec<usize>,
    /// Posterior mean of `ΛΛᵀ + Σ`.
    pub omega_mean: DMatrix<f64>,
    pub a1_mean: Option<f64>,
    pub a2_mean: Option<f64>,
    pub final_sampler: Sampler,
}

#[derive(Clone, Debug)]
pub struct CheckpointPolicy {
    pub path: PathBuf,
    pub every: usize,
}

/// A chain in progress.
#[derive(Clone, Debug)]
pub struct Chain {
    settings: ChainSettings,
    next: usize,
    sampler: Sampler,
    rng: RngStream,
    trace: Vec<SweepRecord>,
    acc: ChainAccumulator,
}

impl Chain {
    /// Initializes the sampler from `rng`, which then drives every sweep.
    pub fn start(data: &Dataset, settings: ChainSettings, mut rng: RngStream) -> Result<Self> {
        settings.validate()?;
        let sampler = Sampler::new(data, &settings.prior, settings.schedule, &mut rng)?;
        Ok(Self {
            next: 0,
            sampler,
            rng,
            trace: Vec::with_capacity(settings.iterations),
            acc: ChainAccumulator::new(data.p()),
            settings,
        })
    }

    pub fn from_checkpoint(c: ChainCheckpoint) -> Self {
        Self {
            settings: c.settings,
            next: c.next_iteration,
            sampler: c.sampler,
            rng: RngStream::from_state(c.rng),
            trace: c.trace,
            acc: c.acc,
        }
    }

    pub fn checkpoint(&self) -> ChainCheckpoint {
        ChainCheckpoint {
            version: CHECKPOINT_VERSION,
            settings: self.settings.clone(),
            next_iteration: self.next,
            sampler: self.sampler.clone(),
            rng: self.rng.state(),
            trace: self.trace.clone(),
            acc: self.acc.clone(),
        }
    }

    pub fn next_iteration(&self) -> usize {
        self.next
    }

    pub fn is_finished(&self) -> bool {
        self.next >= self.settings.iterations
    }

    pub fn sampler(&self) -> &Sampler {
        &self.sampler
    }

    /// Runs one sweep and folds it into the accumulators.
    pub fn step(&mut self, data: &Dataset) -> Result<SweepRecord> {
        let g = self.next;
        let rec = self.sampler.sweep(data, g, &mut self.rng)?;
        if g >= self.settings.burn_in {
            let core = self.sampler.core();
            self.acc.omega_sum += core.implied_covariance();
            if let Some((a1, a2)) = rec.shapes() {
                self.acc.a1_sum += a1;
                self.acc.a2_sum += a2;
            }
            self.acc.active_counts.push(rec.active_count());
            self.acc.kept += 1;
        }
        self.trace.push(rec);
        self.next += 1;
        Ok(rec)
    }

    /// Runs until the chain is finished or `stop_at` iterations have been
    /// completed, writing a checkpoint every `policy.every` iterations and
    /// on stopping. Returns whether the chain finished.
    pub fn run(&mut self, data: &Dataset, policy: Option<&CheckpointPolicy>, stop_at: Option<usize>) -> Result<bool> {
        while !self.is_finished() {
            if stop_at.is_some_and(|s| self.next >= s) {
                if let Some(pol) = policy {
                    self.checkpoint().save(&pol.path)?;
                }
                return Ok(false);
            }
            self.step(data)?;
            if let Some(pol) = policy {
                if self.next.is_multiple_of(pol.every) && !self.is_finished() {
                    self.checkpoint().save(&pol.path)?;
                }
            }
        }
        Ok(true)
    }

    pub fn finish(self) -> Result<ChainResult> {
        if !self.is_finished() {
            return Err(Error::Config(format!(
                "chain stopped at iteration {} of {}",
                self.next, self.settings.iterations
            )));
        }
        let n = self.acc.kept as f64;
        let shapes = matches!(self.sampler, Sampler::Mgp(_));
        Ok(ChainResult {
            omega_mean: &self.acc.omega_sum / n,
            a1_mean: shapes.then(|| self.acc.a1_sum / n),
            a2_mean: shapes.then(|| self.acc.a2_sum / n),
            active_counts: self.acc.active_counts,
            trace: self.trace,
            final_sampler: self.sampler,
        })
    }
}

/// Runs a chain start to finish without checkpoints.
pub fn run_chain(data: &Dataset, settings: ChainSettings, rng: RngStream) -> Result<ChainResult> {
    let mut chain = Chain::start(data, settings, rng)?;
    chain.run(data, None, None)?;
    chain.finish()
}

pub const TRACE_COLUMNS: [&str; 8] = [
    "iteration",
    "columns",
    "active",
    "a1",
    "a2",
    "a1_accepted",
    "a2_accepted",
    "ibp_alpha",
];

/// Trace CSV: one row per iteration.
pub fn write_trace_csv(path: &Path, trace: &[SweepRecord]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(TRACE_COLUMNS).map_err(csv_err)?;
    for (g, r) in trace.iter().enumerate() {
        let (a1, a2, acc1, acc2, alpha) = match r {
            SweepRecord::Mgp(m) => (
                m.a1.to_string(),
                m.a2.to_string(),
                u8::from(m.a1_accepted).to_string(),
                u8::from(m.a2_accepted).to_string(),
                String::new(),
            ),
            SweepRecord::Ibp(b) => (
                String::new(),
                String::new(),
                String::new(),
                String::new(),
                b.alpha.to_string(),
            ),
            SweepRecord::Cusp(_) => Default::default(),
        };
        w.write_record([
            g.to_string(),
            r.columns().to_string(),
            r.active_count().to_string(),
            a1,
            a2,
            acc1,
            acc2,
            alpha,
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_matrix_csv(path: &Path, m: &DMatrix<f64>) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    for i in 0..m.nrows() {
        w.write_record(m.row(i).iter().map(|x| x.to_string()))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    Error::Format(e.to_string())
}
