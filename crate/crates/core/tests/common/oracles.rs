//! Brute-force posteriors for every closed-form conditional. Each suite draws
//! random small instances, normalizes prior x likelihood numerically and
//! returns the worst relative density error against the library's answer.

use infact_core::cusp::{self, CuspHyper, SlabForm};
use infact_core::ibp::{self, IbpHyper, PriorOdds};
use infact_core::mgp::{self, MgpHyper, MgpState};
use infact_core::model::{factor_conditional, idio_conditional, loadings_row_conditional};
use infact_core::stats::GaussianParams;
use infact_core::LoadingMatrix;
use nalgebra::{DMatrix, DVector};
use statrs::distribution::{Continuous, Gamma, InverseGamma, Normal};

use super::*;

pub struct OracleOutcome {
    pub name: &'static str,
    pub instances: usize,
    pub max_rel_err: f64,
}

fn ln_gamma_pdf(x: f64, shape: f64, rate: f64) -> f64 {
    Gamma::new(shape, rate).unwrap().ln_pdf(x)
}

fn ln_inv_gamma_pdf(x: f64, shape: f64, scale: f64) -> f64 {
    InverseGamma::new(shape, scale).unwrap().ln_pdf(x)
}

fn ln_normal_pdf(x: f64, mean: f64, var: f64) -> f64 {
    Normal::new(mean, var.sqrt()).unwrap().ln_pdf(x)
}

/// Relative error of `exp(analytic)` against `exp(unnorm - log_z)`.
fn density_err(analytic: f64, unnorm: f64, log_z: f64) -> f64 {
    ((analytic - (unnorm - log_z)).exp() - 1.0).abs()
}

/// Evaluation points around a 1-d posterior with given mean and sd.
fn points(mean: f64, sd: f64, positive: bool) -> Vec<f64> {
    [-2.5, -1.5, -0.7, -0.2, 0.0, 0.3, 0.9, 1.6, 2.4, 3.5]
        .iter()
        .map(|z| mean + z * sd)
        .filter(|x| !positive || *x > 0.0)
        .collect()
}

fn gauss_2d_check(post: &GaussianParams, unnorm: impl Fn(f64, f64) -> f64, rng: &mut RngStream) -> f64 {
    let (m0, m1) = (post.mean[0], post.mean[1]);
    let (s0, s1) = (post.covariance[(0, 0)].sqrt(), post.covariance[(1, 1)].sqrt());
    let log_z = log_norm_2d(&unnorm, (m0, m1), (12.0 * s0, 12.0 * s1), 480);
    let mut worst: f64 = 0.0;
    for _ in 0..12 {
        let x = DVector::from_vec(vec![
            m0 + 2.0 * s0 * uniform(-1.0, 1.0, rng),
            m1 + 2.0 * s1 * uniform(-1.0, 1.0, rng),
        ]);
        let a = post.log_density(&x).unwrap();
        worst = worst.max(density_err(a, unnorm(x[0], x[1]), log_z));
    }
    worst
}

pub fn loadings_row(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let f = random_matrix(2, 5, 1.0, &mut r);
        let y = random_vector(5, 1.5, &mut r);
        let s2 = uniform(0.3, 2.0, &mut r);
        let prec = DVector::from_fn(2, |_, _| uniform(0.2, 3.0, &mut r));
        let post = loadings_row_conditional(&f, &y, s2, &prec).unwrap();
        let unnorm = |a: f64, b: f64| {
            let lik: f64 = (0..5)
                .map(|t| ln_normal_pdf(y[t], a * f[(0, t)] + b * f[(1, t)], s2))
                .sum();
            lik + ln_normal_pdf(a, 0.0, 1.0 / prec[0]) + ln_normal_pdf(b, 0.0, 1.0 / prec[1])
        };
        worst = worst.max(gauss_2d_check(&post, unnorm, &mut r));
    }
    OracleOutcome {
        name: "loadings row",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn factor(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let lam = random_matrix(6, 2, 1.0, &mut r);
        let s2 = DVector::from_fn(6, |_, _| uniform(0.2, 1.5, &mut r));
        let y = random_vector(6, 2.0, &mut r);
        let post = factor_conditional(&LoadingMatrix::new(lam.clone()).unwrap(), &s2, &y).unwrap();
        let unnorm = |a: f64, b: f64| {
            let lik: f64 = (0..6)
                .map(|i| ln_normal_pdf(y[i], lam[(i, 0)] * a + lam[(i, 1)] * b, s2[i]))
                .sum();
            lik + ln_normal_pdf(a, 0.0, 1.0) + ln_normal_pdf(b, 0.0, 1.0)
        };
        worst = worst.max(gauss_2d_check(&post, unnorm, &mut r));
    }
    OracleOutcome {
        name: "factor",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn idio(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let resid = random_vector(20, uniform(0.3, 2.0, &mut r), &mut r);
        let (c0, cc0) = (uniform(0.5, 4.0, &mut r), uniform(0.1, 3.0, &mut r));
        let post = idio_conditional(&resid, c0, cc0);
        let unnorm =
            |s2: f64| ln_inv_gamma_pdf(s2, c0, cc0) + resid.iter().map(|e| ln_normal_pdf(*e, 0.0, s2)).sum::<f64>();
        let log_z = log_norm_positive(unnorm);
        // posterior of the variance itself: gamma density of 1/x times 1/x^2
        let mean_var = post.rate / (post.shape - 1.0);
        for x in points(mean_var, mean_var / (post.shape - 2.0).max(1.0).sqrt(), true) {
            let a = post.log_density(1.0 / x) - 2.0 * x.ln();
            worst = worst.max(density_err(a, unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "idiosyncratic variance",
        instances: n,
        max_rel_err: worst,
    }
}

fn gamma_points(shape: f64, rate: f64) -> Vec<f64> {
    points(shape / rate, shape.sqrt() / rate, true)
}

pub fn local_shrinkage(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let hyper = MgpHyper {
            nu1: uniform(1.0, 6.0, &mut r),
            nu2: uniform(1.0, 6.0, &mut r),
            ..MgpHyper::default()
        };
        let lam = uniform(-2.0, 2.0, &mut r);
        let tau = uniform(0.1, 20.0, &mut r);
        let post = mgp::phi_conditional(lam, tau, &hyper);
        let unnorm =
            |x: f64| ln_gamma_pdf(x, hyper.nu1 / 2.0, hyper.nu2 / 2.0) + ln_normal_pdf(lam, 0.0, 1.0 / (x * tau));
        let log_z = log_norm_positive(unnorm);
        for x in gamma_points(post.shape, post.rate) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "local shrinkage",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn column_shrinkage(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let (p, k) = (5, 4);
    for _ in 0..n {
        let hyper = MgpHyper {
            b1: uniform(0.5, 2.0, &mut r),
            b2: uniform(0.5, 2.0, &mut r),
            ..MgpHyper::default()
        };
        let lam = random_matrix(p, k, 0.7, &mut r);
        let phi = DMatrix::from_fn(p, k, |_, _| uniform(0.3, 3.0, &mut r));
        let delta = DVector::from_fn(k, |_, _| uniform(0.5, 3.0, &mut r));
        let state = MgpState {
            phi: phi.clone(),
            tau: mgp::tau_from_delta(&delta),
            delta: delta.clone(),
            a1: uniform(1.5, 4.0, &mut r),
            a2: uniform(2.5, 6.0, &mut r),
            k_star: k,
        };
        let h = (uniform(0.0, k as f64, &mut r) as usize).min(k - 1);
        let post = mgp::delta_conditional(h, &state, &LoadingMatrix::new(lam.clone()).unwrap(), &hyper);
        let (a, b) = if h == 0 {
            (state.a1, hyper.b1)
        } else {
            (state.a2, hyper.b2)
        };
        let unnorm = |x: f64| {
            let mut d = delta.clone();
            d[h] = x;
            let mut lik = 0.0;
            for l in h..k {
                let tau_l: f64 = d.iter().take(l + 1).product();
                for i in 0..p {
                    lik += ln_normal_pdf(lam[(i, l)], 0.0, 1.0 / (phi[(i, l)] * tau_l));
                }
            }
            ln_gamma_pdf(x, a, b) + lik
        };
        let log_z = log_norm_positive(unnorm);
        for x in gamma_points(post.shape, post.rate) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "column shrinkage",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn stick_fraction(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let hcols = 5;
    for _ in 0..n {
        let alpha = uniform(0.5, 6.0, &mut r);
        let z: Vec<usize> = (0..hcols)
            .map(|_| (uniform(0.0, hcols as f64, &mut r) as usize).min(hcols - 1))
            .collect();
        let mut v: Vec<f64> = (0..hcols).map(|_| uniform(0.05, 0.95, &mut r)).collect();
        v[hcols - 1] = 1.0;
        let l = (uniform(0.0, (hcols - 1) as f64, &mut r) as usize).min(hcols - 2);
        let post = cusp::v_conditional(l, &z, alpha);
        let unnorm = |x: f64| {
            let mut vv = v.clone();
            vv[l] = x;
            // weights from the explicit product, not the library routine
            let w = |m: usize| vv[m] * (0..m).map(|j| 1.0 - vv[j]).product::<f64>();
            let prior = statrs::distribution::Beta::new(1.0, alpha).unwrap().ln_pdf(x);
            prior + z.iter().map(|&zh| w(zh).ln()).sum::<f64>()
        };
        let log_z = log_norm_unit(unnorm);
        let mean = post.a / (post.a + post.b);
        let sd = (mean * (1.0 - mean) / (post.a + post.b + 1.0)).sqrt();
        for x in points(mean, sd, true).into_iter().filter(|x| *x < 1.0) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "stick-breaking fraction",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn slab_variance(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let hyper = CuspHyper {
            a_theta: uniform(1.0, 4.0, &mut r),
            b_theta: uniform(0.5, 4.0, &mut r),
            ..CuspHyper::default()
        };
        let col = random_vector(6, uniform(0.2, 3.0, &mut r), &mut r);
        let post = cusp::theta_slab_conditional(&col, &hyper);
        let unnorm = |th: f64| {
            ln_inv_gamma_pdf(th, hyper.a_theta, hyper.b_theta)
                + col.iter().map(|x| ln_normal_pdf(*x, 0.0, th)).sum::<f64>()
        };
        let log_z = log_norm_positive(unnorm);
        let mean = post.rate / (post.shape - 1.0);
        for x in points(mean, mean / (post.shape - 2.0).sqrt(), true) {
            let a = post.log_density(1.0 / x) - 2.0 * x.ln();
            worst = worst.max(density_err(a, unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "slab variance",
        instances: n,
        max_rel_err: worst,
    }
}

/// `ln ∫ Π_i N(x_i; 0, θ) IG(θ; a, b) dθ` by quadrature.
fn slab_marginal_quadrature(xs: &[f64], a: f64, b: f64) -> f64 {
    log_norm_positive(|th| ln_inv_gamma_pdf(th, a, b) + xs.iter().map(|x| ln_normal_pdf(*x, 0.0, th)).sum::<f64>())
}

pub fn column_label(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let hcols = 5;
    for inst in 0..n {
        let slab = if inst % 2 == 0 {
            SlabForm::Joint
        } else {
            SlabForm::Product
        };
        let hyper = CuspHyper {
            a_theta: uniform(1.0, 4.0, &mut r),
            b_theta: uniform(0.5, 4.0, &mut r),
            theta_inf: uniform(0.02, 0.5, &mut r),
            slab,
            ..CuspHyper::default()
        };
        let col = random_vector(4, uniform(0.1, 1.5, &mut r), &mut r);
        let mut v = DVector::from_fn(hcols, |_, _| uniform(0.05, 0.95, &mut r));
        v[hcols - 1] = 1.0;
        let (w, _) = cusp::stick_breaking_weights(&v);
        let h = (uniform(0.0, hcols as f64, &mut r) as usize).min(hcols - 1);
        let got = cusp::z_conditional_logprobs(&col, &w, h, &hyper).unwrap();

        let spike: f64 = col.iter().map(|x| ln_normal_pdf(*x, 0.0, hyper.theta_inf)).sum();
        let slab_ml = match slab {
            SlabForm::Joint => slab_marginal_quadrature(col.as_slice(), hyper.a_theta, hyper.b_theta),
            SlabForm::Product => col
                .iter()
                .map(|x| slab_marginal_quadrature(&[*x], hyper.a_theta, hyper.b_theta))
                .sum(),
        };
        let un: Vec<f64> = (0..hcols)
            .map(|l| w[l].ln() + if l <= h { spike } else { slab_ml })
            .collect();
        let m = un.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let total: f64 = un.iter().map(|u| (u - m).exp()).sum();
        for l in 0..hcols {
            let want = (un[l] - m).exp() / total;
            let err = if want > 1e-12 {
                rel_err(got[l].exp(), want)
            } else {
                (got[l].exp() - want).abs()
            };
            worst = worst.max(err);
        }
    }
    OracleOutcome {
        name: "column label",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn sparse_loading(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let t = 6;
        let f = random_vector(t, 1.0, &mut r);
        let resid = random_vector(t, 1.5, &mut r);
        let s2 = uniform(0.3, 2.0, &mut r);
        let beta = uniform(0.2, 3.0, &mut r);
        let post = ibp::loading_element_conditional(&f, &resid, s2, beta);
        let unnorm = |x: f64| {
            ln_normal_pdf(x, 0.0, 1.0 / beta) + (0..t).map(|j| ln_normal_pdf(resid[j], x * f[j], s2)).sum::<f64>()
        };
        let log_z = log_norm_real(unnorm);
        for x in points(post.mean, post.variance.sqrt(), false) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "sparse loading",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn column_precision(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let hyper = IbpHyper {
            a_beta: uniform(0.5, 4.0, &mut r),
            b_beta: uniform(0.5, 4.0, &mut r),
            ..IbpHyper::default()
        };
        let p = 7;
        let z: Vec<bool> = (0..p).map(|_| uniform(0.0, 1.0, &mut r) < 0.6).collect();
        let lam = DVector::from_fn(p, |i, _| {
            if z[i] {
                1.2 * infact_core::stats::sample_std_normal(&mut r)
            } else {
                0.0
            }
        });
        let post = ibp::beta_conditional(&z, &lam, &hyper);
        let unnorm = |x: f64| {
            ln_gamma_pdf(x, hyper.a_beta, hyper.b_beta)
                + (0..p)
                    .filter(|&i| z[i])
                    .map(|i| ln_normal_pdf(lam[i], 0.0, 1.0 / x))
                    .sum::<f64>()
        };
        let log_z = log_norm_positive(unnorm);
        for x in gamma_points(post.shape, post.rate) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "column precision",
        instances: n,
        max_rel_err: worst,
    }
}

/// `ln P([Z] | α)` for the equivalence class of a binary matrix.
pub fn ibp_log_pmf(cols: &[Vec<bool>], p: usize, alpha: f64) -> f64 {
    use std::collections::HashMap;
    let nz: Vec<&Vec<bool>> = cols.iter().filter(|c| c.iter().any(|b| *b)).collect();
    let mut hist: HashMap<&Vec<bool>, usize> = HashMap::new();
    for c in &nz {
        *hist.entry(c).or_default() += 1;
    }
    let lnfact = |n: usize| statrs::function::gamma::ln_gamma(n as f64 + 1.0);
    let hp: f64 = (1..=p).map(|j| 1.0 / j as f64).sum();
    let mut lp = nz.len() as f64 * alpha.ln() - alpha * hp;
    lp -= hist.values().map(|&k| lnfact(k)).sum::<f64>();
    for c in &nz {
        let m = c.iter().filter(|b| **b).count();
        lp += lnfact(p - m) + lnfact(m - 1) - lnfact(p);
    }
    lp
}

pub fn feature_rate(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    for _ in 0..n {
        let hyper = IbpHyper {
            a_alpha: uniform(0.5, 4.0, &mut r),
            b_alpha: uniform(0.5, 4.0, &mut r),
            ..IbpHyper::default()
        };
        let p = 6;
        let cols = ibp::sample_ibp_prior(p, uniform(0.5, 3.0, &mut r), &mut r).unwrap();
        let k_plus = cols.iter().filter(|c| c.iter().any(|b| *b)).count();
        let post = ibp::alpha_conditional(k_plus, p, &hyper);
        let unnorm = |x: f64| ln_gamma_pdf(x, hyper.a_alpha, hyper.b_alpha) + ibp_log_pmf(&cols, p, x);
        let log_z = log_norm_positive(unnorm);
        for x in gamma_points(post.shape, post.rate) {
            worst = worst.max(density_err(post.log_density(x), unnorm(x), log_z));
        }
    }
    OracleOutcome {
        name: "feature rate",
        instances: n,
        max_rel_err: worst,
    }
}

/// Inclusion probabilities against numerically integrated marginal
/// likelihoods (`T = 3`).
pub fn inclusion(n: usize, seed: u64) -> OracleOutcome {
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let (t, p) = (3, 8);
    for inst in 0..n {
        let f = random_vector(t, 1.0, &mut r);
        let resid = random_vector(t, 1.5, &mut r);
        let s2 = uniform(0.3, 2.0, &mut r);
        let beta = uniform(0.2, 3.0, &mut r);
        let m = 1 + (uniform(0.0, (p - 2) as f64, &mut r) as usize).min(p - 3);
        let null: f64 = (0..t).map(|j| ln_normal_pdf(resid[j], 0.0, s2)).sum();
        let alt = log_norm_real(|x| {
            ln_normal_pdf(x, 0.0, 1.0 / beta) + (0..t).map(|j| ln_normal_pdf(resid[j], x * f[j], s2)).sum::<f64>()
        });
        let (got, prior_odds) = if inst % 2 == 0 {
            let lo = ibp::z_posterior_logodds(&f, &resid, s2, beta, m, p, PriorOdds::OthersComplement);
            (ibp::inclusion_probability(lo), m as f64 / (p - 1 - m) as f64)
        } else {
            let a_over_k = uniform(0.1, 2.0, &mut r);
            let lo = ibp::z_posterior_logodds_finite(&f, &resid, s2, beta, m, p, a_over_k);
            (ibp::inclusion_probability(lo), (m as f64 + a_over_k) / (p - m) as f64)
        };
        let odds = prior_odds * (alt - null).exp();
        worst = worst.max(rel_err(got, odds / (1.0 + odds)));
    }
    OracleOutcome {
        name: "inclusion",
        instances: n,
        max_rel_err: worst,
    }
}

/// Birth acceptance ratio against marginal likelihoods with the new factor
/// scores integrated out numerically (`T = 3`, one or two new columns).
pub fn birth(n: usize, seed: u64) -> OracleOutcome {
    use statrs::distribution::{Discrete, Poisson};
    let mut r = rng(seed);
    let mut worst: f64 = 0.0;
    let t = 3;
    for inst in 0..n {
        let kappa = if inst % 4 == 3 { 2 } else { 1 };
        let resid = random_vector(t, 1.5, &mut r);
        let s2 = uniform(0.3, 2.0, &mut r);
        let l: Vec<f64> = (0..kappa).map(|_| uniform(-2.0, 2.0, &mut r)).collect();
        let rate = uniform(0.1, 2.0, &mut r);
        let nu = uniform(0.5, 3.0, &mut r);
        let got = ibp::birth_log_ratio(&resid, s2, &l, rate, nu);

        let mut ml = 0.0;
        for j in 0..t {
            let null = ln_normal_pdf(resid[j], 0.0, s2);
            let alt = if kappa == 1 {
                log_norm_real(|f| ln_normal_pdf(resid[j], l[0] * f, s2) + ln_normal_pdf(f, 0.0, 1.0))
            } else {
                log_norm_2d(
                    |a, b| {
                        ln_normal_pdf(resid[j], l[0] * a + l[1] * b, s2)
                            + ln_normal_pdf(a, 0.0, 1.0)
                            + ln_normal_pdf(b, 0.0, 1.0)
                    },
                    (0.0, 0.0),
                    (12.0, 12.0),
                    600,
                )
            };
            ml += alt - null;
        }
        let target = Poisson::new(rate).unwrap().ln_pmf(kappa as u64);
        let proposal = Poisson::new(rate * nu).unwrap().ln_pmf(kappa as u64);
        let want = ml + target - proposal;
        worst = worst.max(rel_err(got.exp(), want.exp()));
    }
    OracleOutcome {
        name: "birth ratio",
        instances: n,
        max_rel_err: worst,
    }
}

pub fn all(n: usize, seed: u64) -> Vec<OracleOutcome> {
    vec![
        loadings_row(n, seed),
        factor(n, seed + 1),
        idio(n, seed + 2),
        local_shrinkage(n, seed + 3),
        column_shrinkage(n, seed + 4),
        stick_fraction(n, seed + 5),
        slab_variance(n, seed + 6),
        column_label(n, seed + 7),
        sparse_loading(n, seed + 8),
        column_precision(n, seed + 9),
        feature_rate(n, seed + 10),
    ]
}
