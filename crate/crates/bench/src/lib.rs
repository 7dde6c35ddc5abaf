//! Fixtures shared by the benchmarks: a simulated dataset and a sampler
//! warmed up on it.

use infact_core::synth::{generate_dataset, generate_true_model};
use infact_core::{Dataset, PriorKind, Result, RngStream, RunConfig, Sampler, SimDesign};

/// Design sizes benchmarked by default, as `(p, K)`.
pub const DESIGNS: [(usize, usize); 3] = [(10, 3), (30, 5), (50, 8)];

pub struct Fixture {
    pub data: Dataset,
    pub sampler: Sampler,
    pub rng: RngStream,
    /// Iteration index of the next sweep.
    pub next: usize,
}

impl Fixture {
    /// Simulates data for `(p, k)` and runs `warmup` sweeps so the sampler
    /// sits near its stationary column count.
    pub fn new(prior: PriorKind, p: usize, k: usize, warmup: usize) -> Result<Self> {
        let design = SimDesign::new(p, k);
        let root = RngStream::new(7, 0);
        let truth = generate_true_model(&design, &mut root.substream(1))?;
        let data = generate_dataset(&truth, design.observations, &mut root.substream(2))?;
        let settings = RunConfig::defaults(prior).chain_settings(p, data.t());
        let mut rng = root.substream(3);
        let mut sampler = Sampler::new(&data, &settings.prior, settings.schedule, &mut rng)?;
        for g in 0..warmup {
            sampler.sweep(&data, g, &mut rng)?;
        }
        Ok(Self {
            data,
            sampler,
            rng,
            next: warmup,
        })
    }

    pub fn sweep(&mut self) -> Result<usize> {
        let rec = self.sampler.sweep(&self.data, self.next, &mut self.rng)?;
        self.next += 1;
        Ok(rec.active_count())
    }
}
