//! Uniform interface over the three shrinkage-prior samplers.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::AdaptationSchedule;
use crate::config::PriorKind;
use crate::cusp::{CuspHyper, CuspRecord, CuspSampler};
use crate::error::Result;
use crate::ibp::{IbpHyper, IbpRecord, IbpSampler};
use crate::mgp::{initial_truncation, MgpHyper, MgpRecord, MgpSampler};
use crate::model::{CorePriors, CoreState, Dataset};

/// Hyperparameters of one shrinkage prior.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum PriorHyper {
    Mgp(MgpHyper),
    Cusp(CuspHyper),
    Ibp(IbpHyper),
}

/// A shrinkage prior together with the inverse-gamma prior on the
/// idiosyncratic variances.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PriorConfig {
    pub hyper: PriorHyper,
    pub core: CorePriors,
}

impl PriorConfig {
    pub fn kind(&self) -> PriorKind {
        match self.hyper {
            PriorHyper::Mgp(_) => PriorKind::Mgp,
            PriorHyper::Cusp(_) => PriorKind::Cusp,
            PriorHyper::Ibp(_) => PriorKind::Ibp,
        }
    }

    pub fn default_for(kind: PriorKind) -> Self {
        let hyper = match kind {
            PriorKind::Mgp => PriorHyper::Mgp(MgpHyper::default()),
            PriorKind::Cusp => PriorHyper::Cusp(CuspHyper::default()),
            PriorKind::Ibp => PriorHyper::Ibp(IbpHyper::default()),
        };
        Self {
            hyper,
            core: CorePriors::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.core.validate()?;
        match &self.hyper {
            PriorHyper::Mgp(h) => h.validate(),
            PriorHyper::Cusp(h) => h.validate(),
            PriorHyper::Ibp(h) => h.validate(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub enum SweepRecord {
    Mgp(MgpRecord),
    Cusp(CuspRecord),
    Ibp(IbpRecord),
}

impl SweepRecord {
    /// Number of active factors: `k*`, `H*` or `K₊`.
    pub fn active_count(&self) -> usize {
        match self {
            SweepRecord::Mgp(r) => r.k_star,
            SweepRecord::Cusp(r) => r.h_star,
            SweepRecord::Ibp(r) => r.k_plus,
        }
    }

    /// Number of columns currently carried by the sampler.
    pub fn columns(&self) -> usize {
        match self {
            SweepRecord::Mgp(r) => r.k_star,
            SweepRecord::Cusp(r) => r.h,
            SweepRecord::Ibp(r) => r.k,
        }
    }

    pub fn shapes(&self) -> Option<(f64, f64)> {
        match self {
            SweepRecord::Mgp(r) => Some((r.a1, r.a2)),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub enum Sampler {
    Mgp(MgpSampler),
    Cusp(CuspSampler),
    Ibp(IbpSampler),
}

impl Sampler {
    /// Initializes a chain. `schedule` is ignored by the IBP sampler, whose
    /// pool size moves through births and deaths instead.
    pub fn new<R: Rng + ?Sized>(
        data: &Dataset,
        prior: &PriorConfig,
        schedule: Option<AdaptationSchedule>,
        rng: &mut R,
    ) -> Result<Self> {
        if let Some(s) = &schedule {
            s.validate()?;
        }
        let core = prior.core.clone();
        Ok(match &prior.hyper {
            PriorHyper::Mgp(h) => {
                let k0 = h
                    .initial_factors
                    .unwrap_or_else(|| initial_truncation(data.p(), data.t()));
                Sampler::Mgp(MgpSampler::new(data, h.clone(), core, k0, schedule, rng)?)
            }
            PriorHyper::Cusp(h) => Sampler::Cusp(CuspSampler::new(data, h.clone(), core, schedule, rng)?),
            PriorHyper::Ibp(h) => Sampler::Ibp(IbpSampler::new(data, h.clone(), core, rng)?),
        })
    }

    /// One full sweep at iteration `g` (0-based).
    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, g: usize, rng: &mut R) -> Result<SweepRecord> {
        Ok(match self {
            Sampler::Mgp(s) => SweepRecord::Mgp(s.sweep(data, g, rng)?),
            Sampler::Cusp(s) => SweepRecord::Cusp(s.sweep(data, g, rng)?),
            Sampler::Ibp(s) => SweepRecord::Ibp(s.sweep(data, rng)?),
        })
    }

    pub fn kind(&self) -> PriorKind {
        match self {
            Sampler::Mgp(_) => PriorKind::Mgp,
            Sampler::Cusp(_) => PriorKind::Cusp,
            Sampler::Ibp(_) => PriorKind::Ibp,
        }
    }

    pub fn core(&self) -> &CoreState {
        match self {
            Sampler::Mgp(s) => &s.core,
            Sampler::Cusp(s) => &s.core,
            Sampler::Ibp(s) => &s.core,
        }
    }

    pub fn active_count(&self) -> usize {
        match self {
            Sampler::Mgp(s) => s.state.k_star,
            Sampler::Cusp(s) => s.state.h_star,
            Sampler::Ibp(s) => s.state.k_plus(),
        }
    }

    pub fn check_invariants(&self) -> Result<()> {
        match self {
            Sampler::Mgp(s) => s.check_invariants(),
            Sampler::Cusp(s) => s.check_invariants(),
            Sampler::Ibp(s) => s.check_invariants(),
        }
    }
}
