//! Joint-distribution ("getting it right") checks: forward simulation of
//! (parameters, data) against a chain alternating a data draw with one
//! sampler sweep.

use infact_core::cusp::{stick_breaking_weights, CuspHyper, CuspSampler, CuspState};
use infact_core::ibp::{IbpHyper, IbpSampler, IbpState};
use infact_core::mgp::{tau_from_delta, MgpHyper, MgpSampler, MgpState};
use infact_core::model::core_sweep;
use infact_core::stats::{
    sample_beta, sample_gamma, sample_inv_gamma, sample_normal, sample_std_normal, sample_uniform,
};
use infact_core::{CorePriors, CoreState, Dataset, LoadingMatrix};
use nalgebra::{DMatrix, DVector};

use super::*;

pub const P: usize = 4;
pub const T: usize = 10;

pub struct StatZ {
    pub name: String,
    pub z_mean: f64,
    pub z_second: f64,
}

pub struct GewekeReport {
    pub sampler: &'static str,
    pub samples: usize,
    pub stats: Vec<StatZ>,
}

impl GewekeReport {
    pub fn max_abs_z(&self) -> f64 {
        self.stats
            .iter()
            .map(|s| s.z_mean.abs().max(s.z_second.abs()))
            .fold(0.0, f64::max)
    }

    pub fn describe(&self) -> String {
        self.stats
            .iter()
            .map(|s| format!("{}: z1={:+.2} z2={:+.2}", s.name, s.z_mean, s.z_second))
            .collect::<Vec<_>>()
            .join("; ")
    }
}

pub fn simulate_data(core: &CoreState, rng: &mut RngStream) -> Dataset {
    let mean = core.loadings.matrix() * &core.factors;
    let y = DMatrix::from_fn(core.factors.ncols(), core.p(), |t, i| {
        mean[(i, t)] + core.idio_variances[i].sqrt() * sample_std_normal(rng)
    });
    Dataset::new(y).unwrap()
}

fn mean_var(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let m = xs.iter().sum::<f64>() / n;
    let v = xs.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (n - 1.0);
    (m, v)
}

/// Variance of the mean by non-overlapping batch means.
fn batch_var_of_mean(xs: &[f64], batches: usize) -> f64 {
    let b = xs.len() / batches;
    let means: Vec<f64> = (0..batches)
        .map(|j| xs[j * b..(j + 1) * b].iter().sum::<f64>() / b as f64)
        .collect();
    mean_var(&means).1 / batches as f64
}

fn z_score(forward: &[f64], chain: &[f64]) -> f64 {
    let (m1, v1) = mean_var(forward);
    let (m2, _) = mean_var(chain);
    let se2 = v1 / forward.len() as f64 + batch_var_of_mean(chain, 50);
    (m1 - m2) / se2.sqrt()
}

/// Runs both simulators for `n` samples each and returns a z-score per
/// statistic for its mean and its second moment.
#[allow(clippy::too_many_arguments)]
pub fn run<S: Clone>(
    sampler: &'static str,
    n: usize,
    seed: u64,
    names: &[&str],
    prior: impl Fn(&mut RngStream) -> S,
    core: impl Fn(&S) -> &CoreState,
    mut sweep: impl FnMut(&mut S, &Dataset, &mut RngStream),
    stats: impl Fn(&S, &Dataset) -> Vec<f64>,
) -> GewekeReport {
    let k = names.len();
    let mut fwd = vec![Vec::with_capacity(n); k];
    let mut chn = vec![Vec::with_capacity(n); k];
    let mut r = rng(seed);
    for _ in 0..n {
        let s = prior(&mut r);
        let d = simulate_data(core(&s), &mut r);
        for (j, v) in stats(&s, &d).into_iter().enumerate() {
            fwd[j].push(v);
        }
    }
    let mut r = rng(seed ^ 0x5EED);
    let mut s = prior(&mut r);
    for _ in 0..n {
        let d = simulate_data(core(&s), &mut r);
        sweep(&mut s, &d, &mut r);
        let d = simulate_data(core(&s), &mut r);
        for (j, v) in stats(&s, &d).into_iter().enumerate() {
            chn[j].push(v);
        }
    }
    let sq = |xs: &[f64]| xs.iter().map(|x| x * x).collect::<Vec<_>>();
    let stats = (0..k)
        .map(|j| StatZ {
            name: names[j].to_string(),
            z_mean: z_score(&fwd[j], &chn[j]),
            z_second: z_score(&sq(&fwd[j]), &sq(&chn[j])),
        })
        .collect();
    GewekeReport {
        sampler,
        samples: n,
        stats,
    }
}

fn draw_core(prior_var: &DMatrix<f64>, priors: &CorePriors, k: usize, r: &mut RngStream) -> CoreState {
    let lam = DMatrix::from_fn(P, k, |i, h| sample_normal(0.0, prior_var[(i, h)], r));
    let sig = DVector::from_fn(P, |_, _| sample_inv_gamma(priors.shape, priors.scale, r).unwrap());
    let f = DMatrix::from_fn(k, T, |_, _| sample_std_normal(r));
    CoreState::new(LoadingMatrix::new(lam).unwrap(), sig, f).unwrap()
}

fn geweke_priors() -> CorePriors {
    CorePriors::new(6.0, 5.0).unwrap()
}

fn core_stats(c: &CoreState, d: &Dataset) -> Vec<f64> {
    let lam = c.loadings.matrix();
    vec![
        lam[(0, 0)],
        lam[(1, 1)],
        c.idio_variances[0],
        c.factors[(0, 0)],
        d.y()[(0, 0)] * d.y()[(0, 1)],
    ]
}

const CORE_NAMES: [&str; 5] = ["loading(0,0)", "loading(1,1)", "idio(0)", "factor(0,0)", "y00*y01"];

/// The shared loading, variance and factor updates alone, with fixed unit prior precisions.
pub fn core_only(n: usize, seed: u64) -> GewekeReport {
    core_with_sweep_priors(n, seed, geweke_priors())
}

/// Same as [`core_only`] but the sweep conditions on `sweep_priors`, which
/// lets a test confirm that a wrong conditional is caught.
pub fn core_with_sweep_priors(n: usize, seed: u64, sweep_priors: CorePriors) -> GewekeReport {
    let k = 2;
    let priors = geweke_priors();
    let prec = DMatrix::from_element(P, k, 1.0);
    run(
        "core",
        n,
        seed,
        &CORE_NAMES,
        |r| draw_core(&prec, &priors, k, r),
        |c| c,
        |c, d, r| core_sweep(c, d, &sweep_priors, &prec, r).unwrap(),
        core_stats,
    )
}

pub fn mgp_hyper(update_shapes: bool) -> MgpHyper {
    MgpHyper {
        nu1: 12.0,
        nu2: 12.0,
        a1_init: 6.0,
        a2_init: 6.0,
        a_prior_shape: 36.0,
        a_prior_rate: 6.0,
        s1: 0.8,
        s2: 0.8,
        update_shapes,
        ..MgpHyper::default()
    }
}

fn mgp_prior(hyper: &MgpHyper, priors: &CorePriors, k: usize, r: &mut RngStream) -> MgpSampler {
    let (a1, a2) = if hyper.update_shapes {
        (
            sample_gamma(hyper.a_prior_shape, hyper.a_prior_rate, r).unwrap(),
            sample_gamma(hyper.a_prior_shape, hyper.a_prior_rate, r).unwrap(),
        )
    } else {
        (hyper.a1_init, hyper.a2_init)
    };
    let phi = DMatrix::from_fn(P, k, |_, _| sample_gamma(hyper.nu1 / 2.0, hyper.nu2 / 2.0, r).unwrap());
    let delta = DVector::from_fn(k, |h, _| {
        if h == 0 {
            sample_gamma(a1, hyper.b1, r).unwrap()
        } else {
            sample_gamma(a2, hyper.b2, r).unwrap()
        }
    });
    let state = MgpState {
        tau: tau_from_delta(&delta),
        phi,
        delta,
        a1,
        a2,
        k_star: k,
    };
    let var = state.prior_precisions().map(|x| 1.0 / x);
    MgpSampler {
        core: draw_core(&var, priors, k, r),
        state,
        hyper: hyper.clone(),
        priors: priors.clone(),
        schedule: None,
    }
}

pub fn mgp(n: usize, seed: u64, update_shapes: bool) -> GewekeReport {
    let k = 3;
    let hyper = mgp_hyper(update_shapes);
    let priors = geweke_priors();
    let mut names = CORE_NAMES.to_vec();
    names.extend(["ln delta1", "ln delta3", "ln phi(0,1)", "loading(0,2)"]);
    if update_shapes {
        names.extend(["a1", "a2"]);
    }
    run(
        if update_shapes { "mgp (shape updates)" } else { "mgp" },
        n,
        seed,
        &names,
        |r| mgp_prior(&hyper, &priors, k, r),
        |s| &s.core,
        |s, d, r| {
            s.sweep(d, 0, r).unwrap();
        },
        |s, d| {
            let mut v = core_stats(&s.core, d);
            v.extend([
                s.state.delta[0].ln(),
                s.state.delta[2].ln(),
                s.state.phi[(0, 1)].ln(),
                s.core.loadings.matrix()[(0, 2)],
            ]);
            if s.hyper.update_shapes {
                v.extend([s.state.a1, s.state.a2]);
            }
            v
        },
    )
}

pub fn cusp_hyper() -> CuspHyper {
    CuspHyper {
        alpha: 2.0,
        a_theta: 6.0,
        b_theta: 5.0,
        theta_inf: 0.05,
        initial_columns: Some(3),
        ..CuspHyper::default()
    }
}

fn cusp_prior(hyper: &CuspHyper, priors: &CorePriors, h: usize, r: &mut RngStream) -> CuspSampler {
    let mut v = DVector::from_element(h, 1.0);
    for l in 0..h - 1 {
        v[l] = sample_beta(1.0, hyper.alpha, r).unwrap();
    }
    let (w, _) = stick_breaking_weights(&v);
    let z: Vec<usize> = (0..h)
        .map(|_| {
            let u = sample_uniform(r);
            let mut acc = 0.0;
            for (l, wl) in w.iter().enumerate() {
                acc += wl;
                if u < acc {
                    return l;
                }
            }
            h - 1
        })
        .collect();
    let theta = DVector::from_fn(h, |c, _| {
        if z[c] > c {
            sample_inv_gamma(hyper.a_theta, hyper.b_theta, r).unwrap()
        } else {
            hyper.theta_inf
        }
    });
    let var = DMatrix::from_fn(P, h, |_, c| theta[c]);
    let core = draw_core(&var, priors, h, r);
    let mut state = CuspState {
        theta,
        z,
        v,
        w,
        h_star: 0,
    };
    state.h_star = state.count_active();
    CuspSampler {
        core,
        state,
        hyper: hyper.clone(),
        priors: priors.clone(),
        schedule: None,
    }
}

pub fn cusp(n: usize, seed: u64) -> GewekeReport {
    let h = 3;
    let hyper = cusp_hyper();
    let priors = geweke_priors();
    let mut names = CORE_NAMES.to_vec();
    names.extend(["active(0)", "label(1)", "v0", "ln theta0", "active count"]);
    run(
        "cusp",
        n,
        seed,
        &names,
        |r| cusp_prior(&hyper, &priors, h, r),
        |s| &s.core,
        |s, d, r| {
            s.sweep(d, 0, r).unwrap();
        },
        |s, d| {
            let mut v = core_stats(&s.core, d);
            v.extend([
                s.state.is_active(0) as u8 as f64,
                s.state.z[1] as f64,
                s.state.v[0],
                s.state.theta[0].ln(),
                s.state.h_star as f64,
            ]);
            v
        },
    )
}

pub fn ibp_hyper(pool: usize) -> IbpHyper {
    IbpHyper {
        a_beta: 6.0,
        b_beta: 5.0,
        alpha_init: Some(2.0),
        update_alpha: false,
        finite_pool: Some(pool),
        ..IbpHyper::default()
    }
}

fn ibp_prior(hyper: &IbpHyper, priors: &CorePriors, k: usize, r: &mut RngStream) -> IbpSampler {
    let alpha = hyper.alpha_init.unwrap();
    let beta = DVector::from_fn(k, |_, _| sample_gamma(hyper.a_beta, hyper.b_beta, r).unwrap());
    let z: Vec<Vec<bool>> = (0..k)
        .map(|_| {
            let pi = sample_beta(alpha / k as f64, 1.0, r).unwrap();
            (0..P).map(|_| sample_uniform(r) < pi).collect()
        })
        .collect();
    let var = DMatrix::from_fn(P, k, |i, h| 1.0 / beta[h] * if z[h][i] { 1.0 } else { 0.0 });
    let mut core = draw_core(&var, priors, k, r);
    for (h, col) in z.iter().enumerate() {
        for (i, &on) in col.iter().enumerate() {
            if !on {
                core.loadings.matrix_mut()[(i, h)] = 0.0;
            }
        }
    }
    IbpSampler {
        core,
        state: IbpState { z, beta, alpha },
        hyper: hyper.clone(),
        priors: priors.clone(),
    }
}

pub fn ibp(n: usize, seed: u64) -> GewekeReport {
    let k = 3;
    let hyper = ibp_hyper(k);
    let priors = geweke_priors();
    let mut names = CORE_NAMES.to_vec();
    names.extend(["included(0,0)", "column count(1)", "ln beta0", "nonzero columns"]);
    run(
        "ibp",
        n,
        seed,
        &names,
        |r| ibp_prior(&hyper, &priors, k, r),
        |s| &s.core,
        |s, d, r| {
            s.sweep(d, r).unwrap();
        },
        |s, d| {
            let mut v = core_stats(&s.core, d);
            v.extend([
                s.state.z[0][0] as u8 as f64,
                s.state.column_count(1) as f64,
                s.state.beta[0].ln(),
                s.state.k_plus() as f64,
            ]);
            v
        },
    )
}
