//! Multiplicative gamma process prior.
//!
//! `λ_ih ~ N(0, 1/(φ_ih τ_h))`, `φ_ih ~ Ga(ν₁/2, ν₂/2)`, `τ_h = Π_{l≤h} δ_l`,
//! `δ_1 ~ Ga(a₁, b₁)`, `δ_l ~ Ga(a₂, b₂)` for `l ≥ 2`, with `Ga(2, 1)`
//! hyperpriors on `a₁`, `a₂` updated by random-walk Metropolis–Hastings.
//! Columns whose loadings mostly fall inside a small neighbourhood of zero
//! are discarded at adaptation time; otherwise a column is added.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::AdaptationSchedule;
use crate::error::{Error, Result};
use crate::model::{core_sweep, CorePriors, CoreState, Dataset, LoadingMatrix};
use crate::stats::{ln_gamma, sample_gamma, sample_normal, sample_std_normal, sample_uniform, GammaParams};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgpHyper {
    pub nu1: f64,
    pub nu2: f64,
    pub b1: f64,
    pub b2: f64,
    /// Gamma(shape, rate) hyperprior on both `a₁` and `a₂`.
    pub a_prior_shape: f64,
    pub a_prior_rate: f64,
    /// Random-walk proposal standard deviations for `a₁`, `a₂`.
    pub s1: f64,
    pub s2: f64,
    /// Neighbourhood of zero used by the redundancy rule.
    pub epsilon: f64,
    /// Fraction of a column's loadings that must lie within `epsilon`.
    pub prop_required: f64,
    /// Starting values of `a₁`, `a₂` (held fixed when `update_shapes` is off).
    pub a1_init: f64,
    pub a2_init: f64,
    pub update_shapes: bool,
    /// Upper bound on `k*`; `None` means `p`.
    pub max_factors: Option<usize>,
    /// Starting truncation; `None` uses [`initial_truncation`].
    pub initial_factors: Option<usize>,
}

impl Default for MgpHyper {
    fn default() -> Self {
        Self {
            nu1: 3.0,
            nu2: 3.0,
            b1: 1.0,
            b2: 1.0,
            a_prior_shape: 2.0,
            a_prior_rate: 1.0,
            s1: 0.5,
            s2: 0.5,
            epsilon: 0.01,
            prop_required: 0.8,
            a1_init: 2.1,
            a2_init: 3.1,
            update_shapes: true,
            max_factors: None,
            initial_factors: None,
        }
    }
}

impl MgpHyper {
    pub fn validate(&self) -> Result<()> {
        let pos = [
            ("nu1", self.nu1),
            ("nu2", self.nu2),
            ("b1", self.b1),
            ("b2", self.b2),
            ("a_prior_shape", self.a_prior_shape),
            ("a_prior_rate", self.a_prior_rate),
            ("s1", self.s1),
            ("s2", self.s2),
            ("epsilon", self.epsilon),
            ("prop_required", self.prop_required),
            ("a1_init", self.a1_init),
            ("a2_init", self.a2_init),
        ];
        for (name, v) in pos {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("mgp {name} must be > 0, got {v}")));
            }
        }
        if self.prop_required > 1.0 {
            return Err(Error::param("mgp prop_required must be <= 1"));
        }
        Ok(())
    }
}

/// Shrinkage parameters of the MGP prior at the current truncation `k*`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgpState {
    /// p x k* local shrinkage.
    pub phi: DMatrix<f64>,
    pub delta: DVector<f64>,
    /// Cached cumulative product of `delta`.
    pub tau: DVector<f64>,
    pub a1: f64,
    pub a2: f64,
    pub k_star: usize,
}

impl MgpState {
    /// `φ_ih τ_h`, the prior precision of every loading.
    pub fn prior_precisions(&self) -> DMatrix<f64> {
        let mut prec = self.phi.clone();
        for (h, mut col) in prec.column_iter_mut().enumerate() {
            col *= self.tau[h];
        }
        prec
    }

    pub fn refresh_tau(&mut self) {
        self.tau = tau_from_delta(&self.delta);
    }
}

pub fn tau_from_delta(delta: &DVector<f64>) -> DVector<f64> {
    let mut acc = 1.0;
    delta.map(|d| {
        acc *= d;
        acc
    })
}

/// `φ_ih | − ~ Ga((ν₁+1)/2, (ν₂ + τ_h λ_ih²)/2)`.
pub fn phi_conditional(lambda_ih: f64, tau_h: f64, hyper: &MgpHyper) -> GammaParams {
    GammaParams {
        shape: 0.5 * (hyper.nu1 + 1.0),
        rate: 0.5 * (hyper.nu2 + tau_h * lambda_ih * lambda_ih),
    }
}

/// Conditional of `δ_h` (0-based column `h`) given everything else.
/// Uses `τ_l^{(h)} = Π_{t≤l, t≠h} δ_t`, the cumulative product with `δ_h`
/// left out.
pub fn delta_conditional(h: usize, state: &MgpState, loadings: &LoadingMatrix, hyper: &MgpHyper) -> GammaParams {
    let k = state.delta.len();
    let p = loadings.p() as f64;
    let lam = loadings.matrix();
    let mut rate_sum = 0.0;
    let mut tau_excl: f64 = state.delta.iter().take(h).product();
    for l in h..k {
        if l > h {
            tau_excl *= state.delta[l];
        }
        let col: f64 = (0..loadings.p())
            .map(|i| state.phi[(i, l)] * lam[(i, l)] * lam[(i, l)])
            .sum();
        rate_sum += tau_excl * col;
    }
    let (a, b) = if h == 0 {
        (state.a1, hyper.b1)
    } else {
        (state.a2, hyper.b2)
    };
    GammaParams {
        shape: a + 0.5 * p * (k - h) as f64,
        rate: b + 0.5 * rate_sum,
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ShapeParam {
    A1,
    A2,
}

/// Log posterior (up to a constant) of `a₁` or `a₂` given the `δ`s it
/// governs: `Ga(2,1)` prior times the gamma likelihood of `δ_1` (for `a₁`)
/// or of `δ_2, …, δ_k*` (for `a₂`). Non-positive values have zero density.
pub fn shape_log_posterior(which: ShapeParam, a: f64, delta: &DVector<f64>, hyper: &MgpHyper) -> f64 {
    if a.is_nan() || a <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let prior = (hyper.a_prior_shape - 1.0) * a.ln() - hyper.a_prior_rate * a;
    let (range, b) = match which {
        ShapeParam::A1 => (0..delta.len().min(1), hyper.b1),
        ShapeParam::A2 => (1.min(delta.len())..delta.len(), hyper.b2),
    };
    let lik: f64 = range
        .map(|l| a * b.ln() - ln_gamma(a) + (a - 1.0) * delta[l].ln())
        .sum();
    prior + lik
}

/// Log Metropolis–Hastings ratio for moving `current -> proposal` under a
/// symmetric random walk.
pub fn mh_log_ratio(which: ShapeParam, current: f64, proposal: f64, delta: &DVector<f64>, hyper: &MgpHyper) -> f64 {
    shape_log_posterior(which, proposal, delta, hyper) - shape_log_posterior(which, current, delta, hyper)
}

/// One random-walk MH update; returns the new value and whether the
/// proposal was accepted. A rejected proposal returns `current` unchanged.
pub fn mh_update_shape<R: Rng + ?Sized>(
    which: ShapeParam,
    current: f64,
    delta: &DVector<f64>,
    hyper: &MgpHyper,
    rng: &mut R,
) -> (f64, bool) {
    let s = match which {
        ShapeParam::A1 => hyper.s1,
        ShapeParam::A2 => hyper.s2,
    };
    let proposal = current + s * sample_std_normal(rng);
    let u = sample_uniform(rng);
    if proposal <= 0.0 {
        return (current, false);
    }
    let log_rho = mh_log_ratio(which, current, proposal, delta, hyper);
    if u.ln() < log_rho {
        (proposal, true)
    } else {
        (current, false)
    }
}

/// Columns with at least `ceil(prop_required * p)` loadings inside
/// `(-epsilon, epsilon)`.
pub fn redundant_columns(loadings: &LoadingMatrix, epsilon: f64, prop_required: f64) -> Vec<usize> {
    let needed = (prop_required * loadings.p() as f64 - 1e-9).ceil() as usize;
    loadings
        .matrix()
        .column_iter()
        .enumerate()
        .filter(|(_, col)| col.iter().filter(|v| v.abs() < epsilon).count() >= needed)
        .map(|(h, _)| h)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum AdaptOutcome {
    /// The adaptation coin came up tails.
    NotFired,
    Removed(usize),
    Added,
    /// Nothing was redundant but `k*` is already at its cap.
    AtCap,
}

/// Adaptation step (call only once `g` has passed the schedule's gate).
pub fn adapt<R: Rng + ?Sized>(
    core: &mut CoreState,
    state: &mut MgpState,
    hyper: &MgpHyper,
    g: usize,
    sched: &AdaptationSchedule,
    rng: &mut R,
) -> Result<AdaptOutcome> {
    let u = sample_uniform(rng);
    if u > sched.probability(g) {
        return Ok(AdaptOutcome::NotFired);
    }
    let mut redundant = redundant_columns(&core.loadings, hyper.epsilon, hyper.prop_required);
    let k = state.k_star;
    if !redundant.is_empty() {
        if redundant.len() == k {
            // keep the leading column so k* stays >= 1
            redundant.remove(0);
            if redundant.is_empty() {
                return Ok(AdaptOutcome::Removed(0));
            }
        }
        let m = redundant.len();
        core.remove_factors(&redundant);
        let phi = std::mem::replace(&mut state.phi, DMatrix::zeros(0, 0));
        state.phi = phi.remove_columns_at(&redundant);
        let delta = std::mem::replace(&mut state.delta, DVector::zeros(0));
        state.delta = delta.remove_rows_at(&redundant);
        state.refresh_tau();
        state.k_star = k - m;
        return Ok(AdaptOutcome::Removed(m));
    }

    let cap = hyper.max_factors.unwrap_or(core.p());
    if k >= cap {
        return Ok(AdaptOutcome::AtCap);
    }
    let p = core.p();
    let mut phi_col = DVector::zeros(p);
    for i in 0..p {
        phi_col[i] = sample_gamma(0.5 * hyper.nu1, 0.5 * hyper.nu2, rng)?;
    }
    let delta_new = sample_gamma(state.a2, hyper.b2, rng)?;
    let tau_new = state.tau.iter().next_back().copied().unwrap_or(1.0) * delta_new;
    let mut lam_col = DVector::zeros(p);
    for i in 0..p {
        lam_col[i] = sample_normal(0.0, 1.0 / (phi_col[i] * tau_new), rng);
    }
    let t_len = core.factors.ncols();
    let mut f_row = DVector::zeros(t_len);
    for t in 0..t_len {
        f_row[t] = sample_std_normal(rng);
    }
    core.push_factor(&lam_col, &f_row);
    let phi = std::mem::replace(&mut state.phi, DMatrix::zeros(0, 0));
    let mut phi = phi.insert_column(k, 0.0);
    phi.set_column(k, &phi_col);
    state.phi = phi;
    let delta = std::mem::replace(&mut state.delta, DVector::zeros(0));
    let mut delta = delta.insert_row(k, 0.0);
    delta[k] = delta_new;
    state.delta = delta;
    state.refresh_tau();
    state.k_star = k + 1;
    Ok(AdaptOutcome::Added)
}

/// Sufficient conditions for increasing shrinkage in expectation:
/// `(a₂ > b₂ + 1, a₂ > a₁)`.
pub fn check_increasing_shrinkage(a1: f64, a2: f64, b2: f64) -> (bool, bool) {
    (a2 > b2 + 1.0, a2 > a1)
}

/// Smallest number of leading columns whose variance, together with the
/// idiosyncratic variance, explains at least a fraction `q` of `tr(Ω)`.
pub fn variance_explained_rank(loadings: &LoadingMatrix, idio_variances: &DVector<f64>, q: f64) -> usize {
    let k = loadings.k();
    let col_var: Vec<f64> = (0..k).map(|h| loadings.column_sq_norm(h)).collect();
    let idio: f64 = idio_variances.sum();
    let total = idio + col_var.iter().sum::<f64>();
    let mut explained = idio;
    for (h, v) in col_var.iter().enumerate() {
        explained += v;
        if explained / total >= q {
            return h + 1;
        }
    }
    k
}

/// Conservative starting truncation: `min(p, ceil(5 ln p))`, or
/// `ceil(10 ln p)` when there are more variables than observations.
pub fn initial_truncation(p: usize, t: usize) -> usize {
    let lp = (p as f64).ln();
    let k = if p > t {
        (10.0 * lp).ceil() as usize
    } else {
        ((5.0 * lp).ceil() as usize).min(p)
    };
    k.max(1)
}

/// Per-sweep summary.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgpRecord {
    pub k_star: usize,
    pub a1: f64,
    pub a2: f64,
    pub a1_accepted: bool,
    pub a2_accepted: bool,
}

/// Adaptive Gibbs sampler for the MGP factor model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MgpSampler {
    pub core: CoreState,
    pub state: MgpState,
    pub hyper: MgpHyper,
    pub priors: CorePriors,
    /// `None` disables adaptation (fixed truncation).
    pub schedule: Option<AdaptationSchedule>,
}

impl MgpSampler {
    /// Starts a chain at truncation `k0`: shrinkage parameters drawn from
    /// their priors, zero loadings, unit idiosyncratic variances and
    /// standard-normal factors.
    pub fn new<R: Rng + ?Sized>(
        data: &Dataset,
        hyper: MgpHyper,
        priors: CorePriors,
        k0: usize,
        schedule: Option<AdaptationSchedule>,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        priors.validate()?;
        if k0 == 0 {
            return Err(Error::param("mgp initial truncation must be >= 1"));
        }
        let (p, t) = (data.p(), data.t());
        let mut phi = DMatrix::zeros(p, k0);
        for h in 0..k0 {
            for i in 0..p {
                phi[(i, h)] = sample_gamma(0.5 * hyper.nu1, 0.5 * hyper.nu2, rng)?;
            }
        }
        let mut delta = DVector::zeros(k0);
        delta[0] = sample_gamma(hyper.a1_init, hyper.b1, rng)?;
        for l in 1..k0 {
            delta[l] = sample_gamma(hyper.a2_init, hyper.b2, rng)?;
        }
        let mut factors = DMatrix::zeros(k0, t);
        for tt in 0..t {
            for h in 0..k0 {
                factors[(h, tt)] = sample_std_normal(rng);
            }
        }
        let core = CoreState::new(LoadingMatrix::zeros(p, k0), DVector::from_element(p, 1.0), factors)?;
        let state = MgpState {
            phi,
            tau: tau_from_delta(&delta),
            delta,
            a1: hyper.a1_init,
            a2: hyper.a2_init,
            k_star: k0,
        };
        Ok(Self {
            core,
            state,
            hyper,
            priors,
            schedule,
        })
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, g: usize, rng: &mut R) -> Result<MgpRecord> {
        let prec = self.state.prior_precisions();
        core_sweep(&mut self.core, data, &self.priors, &prec, rng)?;

        let (p, k) = (self.core.p(), self.state.k_star);
        let lam = self.core.loadings.matrix();
        for h in 0..k {
            for i in 0..p {
                let post = phi_conditional(lam[(i, h)], self.state.tau[h], &self.hyper);
                self.state.phi[(i, h)] = post.sample(rng)?;
            }
        }

        for h in 0..k {
            let post = delta_conditional(h, &self.state, &self.core.loadings, &self.hyper);
            self.state.delta[h] = post.sample(rng)?;
            self.state.refresh_tau();
        }

        let (mut acc1, mut acc2) = (false, false);
        if self.hyper.update_shapes {
            let (a1, ok1) = mh_update_shape(ShapeParam::A1, self.state.a1, &self.state.delta, &self.hyper, rng);
            let (a2, ok2) = mh_update_shape(ShapeParam::A2, self.state.a2, &self.state.delta, &self.hyper, rng);
            self.state.a1 = a1;
            self.state.a2 = a2;
            acc1 = ok1;
            acc2 = ok2;
        }

        if let Some(sched) = self.schedule {
            if g >= sched.burn_in_gate {
                adapt(&mut self.core, &mut self.state, &self.hyper, g, &sched, rng)?;
            }
        }

        Ok(MgpRecord {
            k_star: self.state.k_star,
            a1: self.state.a1,
            a2: self.state.a2,
            a1_accepted: acc1,
            a2_accepted: acc2,
        })
    }

    /// Dimension and cache consistency audit.
    pub fn check_invariants(&self) -> Result<()> {
        self.core.check()?;
        let k = self.state.k_star;
        let dims = [
            self.state.delta.len(),
            self.state.tau.len(),
            self.state.phi.ncols(),
            self.core.k(),
            self.core.factors.nrows(),
        ];
        if dims.iter().any(|d| *d != k) || k == 0 {
            return Err(Error::dim(format!("mgp dimension audit failed: k*={k}, dims={dims:?}")));
        }
        let fresh = tau_from_delta(&self.state.delta);
        for h in 0..k {
            if (fresh[h] - self.state.tau[h]).abs() > 1e-10 * fresh[h].abs() {
                return Err(Error::Numeric(format!("tau cache drifted at column {h}")));
            }
        }
        if self
            .state
            .phi
            .iter()
            .chain(self.state.delta.iter())
            .any(|v| v.is_nan() || *v <= 0.0)
        {
            return Err(Error::Numeric("non-positive shrinkage parameter".into()));
        }
        Ok(())
    }
}
