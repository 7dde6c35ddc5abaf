//! Structural audits run after every sweep of an always-adapting chain.

use infact_core::cusp::{CuspHyper, CuspSampler};
use infact_core::ibp::{IbpHyper, IbpSampler};
use infact_core::mgp::{MgpHyper, MgpSampler};
use infact_core::synth::{generate_dataset, generate_true_model};
use infact_core::{AdaptationSchedule, CorePriors, CoreState, Dataset, SimDesign};

use super::*;

pub struct Tally {
    pub sampler: &'static str,
    pub sweeps: usize,
    pub checks: usize,
    pub min_cols: usize,
    pub max_cols: usize,
    pub violations: Vec<String>,
}

impl Tally {
    fn new(sampler: &'static str) -> Self {
        Self {
            sampler,
            sweeps: 0,
            checks: 0,
            min_cols: usize::MAX,
            max_cols: 0,
            violations: Vec::new(),
        }
    }

    fn expect(&mut self, ok: bool, what: impl FnOnce() -> String) {
        self.checks += 1;
        if !ok && self.violations.len() < 20 {
            self.violations.push(what());
        }
    }

    fn columns(&mut self, k: usize) {
        self.min_cols = self.min_cols.min(k);
        self.max_cols = self.max_cols.max(k);
    }
}

/// Fires on every iteration: `exp(0 - 1e-300 g)` rounds to one.
pub fn always() -> AdaptationSchedule {
    AdaptationSchedule::new(0.0, -1e-300, 0).unwrap()
}

pub fn audit_data(seed: u64) -> Dataset {
    let design = SimDesign::new(10, 3);
    let mut r = rng(seed);
    let truth = generate_true_model(&design, &mut r).unwrap();
    generate_dataset(&truth, 60, &mut r).unwrap()
}

fn core_dims(t: &mut Tally, g: usize, core: &CoreState, k: usize, data: &Dataset) {
    t.expect(core.loadings.k() == k && core.loadings.p() == data.p(), || {
        format!("g={g}: loadings shape")
    });
    t.expect(core.factors.nrows() == k && core.factors.ncols() == data.t(), || {
        format!("g={g}: factor shape")
    });
    t.expect(core.idio_variances.len() == data.p(), || format!("g={g}: idio length"));
    t.expect(core.idio_variances.iter().all(|s| *s > 0.0 && s.is_finite()), || {
        format!("g={g}: idio not positive")
    });
    t.expect(core.loadings.matrix().iter().all(|x| x.is_finite()), || {
        format!("g={g}: non-finite loading")
    });
}

pub fn mgp(sweeps: usize, seed: u64) -> Tally {
    let data = audit_data(seed);
    let mut r = rng(seed + 1);
    let mut s = MgpSampler::new(
        &data,
        MgpHyper::default(),
        CorePriors::default(),
        6,
        Some(always()),
        &mut r,
    )
    .unwrap();
    let mut t = Tally::new("mgp");
    for g in 0..sweeps {
        s.sweep(&data, g, &mut r).unwrap();
        t.sweeps += 1;
        let k = s.state.k_star;
        t.columns(k);
        core_dims(&mut t, g, &s.core, k, &data);
        t.expect(k >= 1 && k <= data.p(), || format!("g={g}: k*={k} out of range"));
        t.expect(s.state.phi.shape() == (data.p(), k), || format!("g={g}: phi shape"));
        t.expect(s.state.delta.len() == k && s.state.tau.len() == k, || {
            format!("g={g}: delta/tau length")
        });
        let mut prod = 1.0;
        for h in 0..s.state.delta.len().min(s.state.tau.len()) {
            prod *= s.state.delta[h];
            let tau = s.state.tau[h];
            t.expect((tau - prod).abs() <= 1e-10 * prod.abs(), || {
                format!("g={g}: tau[{h}]={tau} vs product {prod}")
            });
        }
    }
    t
}

pub fn cusp(sweeps: usize, seed: u64) -> Tally {
    let data = audit_data(seed);
    let mut r = rng(seed + 1);
    let hyper = CuspHyper::default();
    let theta_inf = hyper.theta_inf;
    let mut s = CuspSampler::new(&data, hyper, CorePriors::default(), Some(always()), &mut r).unwrap();
    let mut t = Tally::new("cusp");
    for g in 0..sweeps {
        s.sweep(&data, g, &mut r).unwrap();
        t.sweeps += 1;
        let st = &s.state;
        let h = st.theta.len();
        t.columns(h);
        core_dims(&mut t, g, &s.core, h, &data);
        t.expect(st.z.len() == h && st.v.len() == h && st.w.len() == h, || {
            format!("g={g}: label/weight lengths")
        });
        let sum: f64 = st.w.iter().sum();
        t.expect((sum - 1.0).abs() <= 1e-12, || format!("g={g}: weights sum to {sum}"));
        t.expect(st.w.iter().all(|w| *w >= 0.0), || format!("g={g}: negative weight"));
        t.expect(st.v.iter().next_back() == Some(&1.0), || {
            format!("g={g}: last fraction not one")
        });
        let mut active = 0;
        for c in 0..h {
            t.expect(st.z[c] < h, || format!("g={g}: label {} >= H={h}", st.z[c]));
            let spike = st.theta[c] == theta_inf;
            let slab_label = st.z[c] > c;
            t.expect(spike != slab_label, || {
                format!("g={g}: column {c} theta={} label={}", st.theta[c], st.z[c])
            });
            active += slab_label as usize;
        }
        t.expect(st.h_star == active, || {
            format!("g={g}: H*={} but {active} slab labels", st.h_star)
        });
    }
    t
}

pub fn ibp(sweeps: usize, seed: u64) -> Tally {
    let data = audit_data(seed);
    let mut r = rng(seed + 1);
    let mut s = IbpSampler::new(&data, IbpHyper::default(), CorePriors::default(), &mut r).unwrap();
    let mut t = Tally::new("ibp");
    for g in 0..sweeps {
        s.sweep(&data, &mut r).unwrap();
        t.sweeps += 1;
        let k = s.state.z.len();
        t.columns(k);
        core_dims(&mut t, g, &s.core, k, &data);
        t.expect(s.state.beta.len() == k, || format!("g={g}: beta length"));
        t.expect(s.state.beta.iter().all(|b| *b > 0.0), || {
            format!("g={g}: beta not positive")
        });
        let lam = s.core.loadings.matrix();
        for h in 0..k.min(lam.ncols()) {
            let col = &s.state.z[h];
            t.expect(col.len() == data.p(), || format!("g={g}: inclusion column {h} length"));
            t.expect(col.iter().any(|b| *b), || {
                format!("g={g}: empty column {h} survived pruning")
            });
            for i in 0..col.len().min(data.p()) {
                t.expect(lam[(i, h)] == 0.0 || col[i], || {
                    format!("g={g}: loading ({i},{h}) nonzero while excluded")
                });
            }
        }
    }
    t
}
