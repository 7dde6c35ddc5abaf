//! Cumulative shrinkage process prior.
//!
//! Column variances follow spike-and-slab mixtures
//! `θ_h ~ (1-π_h) IG(a_θ, b_θ) + π_h δ_{θ∞}` whose spike probability
//! `π_h = Σ_{l≤h} w_l` grows with the column index through stick-breaking
//! weights `w_l = v_l Π_{m<l}(1 - v_m)`, `v_l ~ Beta(1, α)`. Latent labels
//! `z_h` decide spike (`z_h ≤ h`) or slab (`z_h > h`).
//!
//! Column and label indices are 0-based here; since both shift by one the
//! activity test `z_h > h` reads the same as in 1-based notation.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::adapt::AdaptationSchedule;
use crate::error::{Error, Result};
use crate::model::{core_sweep, CorePriors, CoreState, Dataset, LoadingMatrix};
use crate::stats::{
    ln_gamma, normalize_log_weights, sample_beta, sample_categorical_log, sample_inv_gamma, sample_normal,
    sample_std_normal, sample_uniform, BetaParams, GammaParams,
};

/// How the slab marginal of a whole column is evaluated in the label update.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum SlabForm {
    /// Multivariate t with `2a_θ` degrees of freedom and scale matrix
    /// `(b_θ/a_θ) I_p`: the exact marginal when one `θ_h` is shared by the
    /// column.
    Joint,
    /// Product of `p` univariate t densities.
    Product,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspHyper {
    pub alpha: f64,
    pub a_theta: f64,
    pub b_theta: f64,
    pub theta_inf: f64,
    pub slab: SlabForm,
    /// Initial truncation; `None` means `p + 1`.
    pub initial_columns: Option<usize>,
    /// Optional cap on `H` when growing.
    pub max_columns: Option<usize>,
}

impl Default for CuspHyper {
    fn default() -> Self {
        Self {
            alpha: 5.0,
            a_theta: 2.0,
            b_theta: 2.0,
            theta_inf: 0.05,
            slab: SlabForm::Joint,
            initial_columns: None,
            max_columns: None,
        }
    }
}

impl CuspHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("alpha", self.alpha),
            ("a_theta", self.a_theta),
            ("b_theta", self.b_theta),
            ("theta_inf", self.theta_inf),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("cusp {name} must be > 0, got {v}")));
            }
        }
        if self.initial_columns == Some(0) {
            return Err(Error::param("cusp initial_columns must be >= 1"));
        }
        Ok(())
    }

    /// True when the spike is not clearly smaller than the slab's scale.
    pub fn spike_too_wide(&self) -> bool {
        self.theta_inf >= 0.1 * self.b_theta / self.a_theta
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspState {
    pub theta: DVector<f64>,
    /// Latent labels, each in `0..H`.
    pub z: Vec<usize>,
    pub v: DVector<f64>,
    pub w: DVector<f64>,
    pub h_star: usize,
}

impl CuspState {
    pub fn h(&self) -> usize {
        self.theta.len()
    }

    pub fn is_active(&self, h: usize) -> bool {
        self.z[h] > h
    }

    pub fn count_active(&self) -> usize {
        (0..self.z.len()).filter(|&h| self.is_active(h)).count()
    }
}

/// Weights `w_l = v_l Π_{m<l}(1-v_m)` and their running sums `π_h`.
pub fn stick_breaking_weights(v: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let mut w = DVector::zeros(v.len());
    let mut remaining = 1.0;
    for (l, vl) in v.iter().enumerate() {
        w[l] = vl * remaining;
        remaining *= 1.0 - vl;
    }
    let mut acc = 0.0;
    let pi = w.map(|wl| {
        acc += wl;
        acc
    });
    (w, pi)
}

/// `ln N_p(λ; 0, θ∞ I)`.
pub fn spike_log_density(lambda_col: &DVector<f64>, theta_inf: f64) -> f64 {
    let p = lambda_col.len() as f64;
    -0.5 * p * (2.0 * PI * theta_inf).ln() - lambda_col.norm_squared() / (2.0 * theta_inf)
}

/// Log slab marginal of a column with `θ` integrated out.
pub fn slab_log_density(lambda_col: &DVector<f64>, hyper: &CuspHyper) -> f64 {
    let dof = 2.0 * hyper.a_theta;
    let scale2 = hyper.b_theta / hyper.a_theta;
    match hyper.slab {
        SlabForm::Joint => {
            let p = lambda_col.len() as f64;
            ln_gamma(0.5 * (dof + p))
                - ln_gamma(0.5 * dof)
                - 0.5 * p * (dof * PI * scale2).ln()
                - 0.5 * (dof + p) * (lambda_col.norm_squared() / (dof * scale2)).ln_1p()
        }
        SlabForm::Product => {
            let c = ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI * scale2).ln();
            lambda_col
                .iter()
                .map(|x| c - 0.5 * (dof + 1.0) * (x * x / (dof * scale2)).ln_1p())
                .sum()
        }
    }
}

/// Normalized log-probabilities of `z_h = l` for `l = 0..H`: spike
/// likelihood for `l ≤ h`, slab marginal for `l > h`, each weighted by `w_l`.
pub fn z_conditional_logprobs(
    lambda_col: &DVector<f64>,
    w: &DVector<f64>,
    h: usize,
    hyper: &CuspHyper,
) -> Result<Vec<f64>> {
    let spike = spike_log_density(lambda_col, hyper.theta_inf);
    let slab = slab_log_density(lambda_col, hyper);
    let mut lp: Vec<f64> = w
        .iter()
        .enumerate()
        .map(|(l, wl)| wl.ln() + if l <= h { spike } else { slab })
        .collect();
    normalize_log_weights(&mut lp)?;
    Ok(lp)
}

/// `v_l | z ~ Beta(1 + #{z_h = l}, α + #{z_h > l})`.
pub fn v_conditional(l: usize, z: &[usize], alpha: f64) -> BetaParams {
    let eq = z.iter().filter(|&&zh| zh == l).count() as f64;
    let gt = z.iter().filter(|&&zh| zh > l).count() as f64;
    BetaParams {
        a: 1.0 + eq,
        b: alpha + gt,
    }
}

/// Gamma conditional of `1/θ_h` on the slab branch.
pub fn theta_slab_conditional(lambda_col: &DVector<f64>, hyper: &CuspHyper) -> GammaParams {
    GammaParams {
        shape: hyper.a_theta + 0.5 * lambda_col.len() as f64,
        rate: hyper.b_theta + 0.5 * lambda_col.norm_squared(),
    }
}

/// Column variance: the spike value when `z_h ≤ h`, otherwise a draw
/// from `IG(a_θ + p/2, b_θ + ½Σλ²)`.
pub fn theta_update<R: Rng + ?Sized>(
    z_h: usize,
    h: usize,
    lambda_col: &DVector<f64>,
    hyper: &CuspHyper,
    rng: &mut R,
) -> Result<f64> {
    if z_h <= h {
        Ok(hyper.theta_inf)
    } else {
        theta_slab_conditional(lambda_col, hyper).sample_reciprocal(rng)
    }
}

/// Marginal prior density of one loading with `θ_h` integrated out:
/// `(1-π_h) t_{2a_θ}(0, b_θ/a_θ) + π_h N(0, θ∞)`.
pub fn marginal_loading_density(x: f64, pi_h: f64, hyper: &CuspHyper) -> f64 {
    let col = DVector::from_element(1, x);
    let spike = spike_log_density(&col, hyper.theta_inf).exp();
    let slab = slab_log_density(&col, hyper).exp();
    (1.0 - pi_h) * slab + pi_h * spike
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CuspAdaptOutcome {
    NotFired,
    /// Inactive columns dropped; `H` is now `H* + 1`.
    Truncated {
        from: usize,
        to: usize,
    },
    Grown,
    AtCap,
}

/// Adaptation step (call only once `g` has passed the schedule's gate).
pub fn adapt_cusp<R: Rng + ?Sized>(
    core: &mut CoreState,
    state: &mut CuspState,
    hyper: &CuspHyper,
    g: usize,
    sched: &AdaptationSchedule,
    rng: &mut R,
) -> Result<CuspAdaptOutcome> {
    let u = sample_uniform(rng);
    if u > sched.probability(g) {
        return Ok(CuspAdaptOutcome::NotFired);
    }
    let h_len = state.h();
    let p = core.p();
    let t_len = core.factors.ncols();
    let active: Vec<usize> = (0..h_len).filter(|&h| state.is_active(h)).collect();
    let h_star = active.len();

    let spike_column = |rng: &mut R| -> (DVector<f64>, DVector<f64>) {
        let mut lam = DVector::zeros(p);
        for i in 0..p {
            lam[i] = sample_normal(0.0, hyper.theta_inf, rng);
        }
        let mut f = DVector::zeros(t_len);
        for t in 0..t_len {
            f[t] = sample_std_normal(rng);
        }
        (lam, f)
    };

    if h_star + 1 < h_len {
        let inactive: Vec<usize> = (0..h_len).filter(|h| !state.is_active(*h)).collect();
        core.remove_factors(&inactive);
        let (lam, f) = spike_column(rng);
        core.push_factor(&lam, &f);

        let mut w: Vec<f64> = active.iter().map(|&h| state.w[h]).collect();
        let kept: f64 = w.iter().sum();
        w.push((1.0 - kept).max(0.0));
        let w = DVector::from_vec(w);
        let mut theta: Vec<f64> = active.iter().map(|&h| state.theta[h]).collect();
        theta.push(hyper.theta_inf);

        let new_h = h_star + 1;
        state.w = w;
        state.v = v_from_weights(&state.w);
        state.theta = DVector::from_vec(theta);
        // survivors point past themselves (slab); the new column points at itself (spike)
        state.z = (0..new_h).map(|j| if j < h_star { new_h - 1 } else { j }).collect();
        state.h_star = h_star;
        return Ok(CuspAdaptOutcome::Truncated { from: h_len, to: new_h });
    }

    if hyper.max_columns.is_some_and(|cap| h_len >= cap) {
        return Ok(CuspAdaptOutcome::AtCap);
    }
    let (lam, f) = spike_column(rng);
    core.push_factor(&lam, &f);
    let mut v: Vec<f64> = state.v.iter().copied().collect();
    if let Some(last) = v.last_mut() {
        *last = sample_beta(1.0, hyper.alpha, rng)?;
    }
    v.push(1.0);
    state.v = DVector::from_vec(v);
    state.w = stick_breaking_weights(&state.v).0;
    let mut theta: Vec<f64> = state.theta.iter().copied().collect();
    theta.push(hyper.theta_inf);
    state.theta = DVector::from_vec(theta);
    state.z.push(h_len);
    state.h_star = state.count_active();
    Ok(CuspAdaptOutcome::Grown)
}

// Inverse of the stick-breaking map; the last fraction is forced to one.
fn v_from_weights(w: &DVector<f64>) -> DVector<f64> {
    let n = w.len();
    let mut v = DVector::zeros(n);
    let mut remaining = 1.0;
    for l in 0..n {
        v[l] = if l + 1 == n || remaining <= 0.0 {
            1.0
        } else {
            (w[l] / remaining).clamp(0.0, 1.0)
        };
        remaining -= w[l];
    }
    v
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspRecord {
    pub h: usize,
    pub h_star: usize,
}

/// Adaptive Gibbs sampler for the CUSP factor model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CuspSampler {
    pub core: CoreState,
    pub state: CuspState,
    pub hyper: CuspHyper,
    pub priors: CorePriors,
    pub schedule: Option<AdaptationSchedule>,
}

impl CuspSampler {
    /// Starts with `H = p + 1` columns (unless overridden), every column but
    /// the last assigned to the slab with `θ` drawn from the slab prior, zero
    /// loadings and standard-normal factors.
    pub fn new<R: Rng + ?Sized>(
        data: &Dataset,
        hyper: CuspHyper,
        priors: CorePriors,
        schedule: Option<AdaptationSchedule>,
        rng: &mut R,
    ) -> Result<Self> {
        hyper.validate()?;
        priors.validate()?;
        let (p, t) = (data.p(), data.t());
        let h0 = hyper.initial_columns.unwrap_or(p + 1);
        let z: Vec<usize> = vec![h0 - 1; h0];
        let mut theta = DVector::zeros(h0);
        for h in 0..h0 {
            theta[h] = if z[h] > h {
                sample_inv_gamma(hyper.a_theta, hyper.b_theta, rng)?
            } else {
                hyper.theta_inf
            };
        }
        let mut v = DVector::from_element(h0, 1.0);
        for l in 0..h0 - 1 {
            v[l] = sample_beta(1.0, hyper.alpha, rng)?;
        }
        let (w, _) = stick_breaking_weights(&v);
        let mut factors = DMatrix::zeros(h0, t);
        for tt in 0..t {
            for h in 0..h0 {
                factors[(h, tt)] = sample_std_normal(rng);
            }
        }
        let core = CoreState::new(LoadingMatrix::zeros(p, h0), DVector::from_element(p, 1.0), factors)?;
        let mut state = CuspState {
            theta,
            z,
            v,
            w,
            h_star: 0,
        };
        state.h_star = state.count_active();
        Ok(Self {
            core,
            state,
            hyper,
            priors,
            schedule,
        })
    }

    pub fn prior_precisions(&self) -> DMatrix<f64> {
        let p = self.core.p();
        let h = self.state.h();
        DMatrix::from_fn(p, h, |_, c| 1.0 / self.state.theta[c])
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, g: usize, rng: &mut R) -> Result<CuspRecord> {
        let prec = self.prior_precisions();
        core_sweep(&mut self.core, data, &self.priors, &prec, rng)?;
        let h_len = self.state.h();

        // labels
        for h in 0..h_len {
            let col = self.core.loadings.matrix().column(h).into_owned();
            let lp = z_conditional_logprobs(&col, &self.state.w, h, &self.hyper)?;
            self.state.z[h] = sample_categorical_log(&lp, rng)?;
        }

        // stick-breaking fractions
        for l in 0..h_len.saturating_sub(1) {
            self.state.v[l] = v_conditional(l, &self.state.z, self.hyper.alpha).sample(rng)?;
        }
        self.state.v[h_len - 1] = 1.0;
        self.state.w = stick_breaking_weights(&self.state.v).0;

        // column variances
        for h in 0..h_len {
            let col = self.core.loadings.matrix().column(h).into_owned();
            self.state.theta[h] = theta_update(self.state.z[h], h, &col, &self.hyper, rng)?;
        }
        self.state.h_star = self.state.count_active();

        if let Some(sched) = self.schedule {
            if g >= sched.burn_in_gate {
                adapt_cusp(&mut self.core, &mut self.state, &self.hyper, g, &sched, rng)?;
            }
        }
        Ok(CuspRecord {
            h: self.state.h(),
            h_star: self.state.h_star,
        })
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.core.check()?;
        let s = &self.state;
        let h = s.h();
        let dims = [
            s.z.len(),
            s.v.len(),
            s.w.len(),
            self.core.k(),
            self.core.factors.nrows(),
        ];
        if h == 0 || dims.iter().any(|d| *d != h) {
            return Err(Error::dim(format!("cusp dimension audit failed: H={h}, dims={dims:?}")));
        }
        if s.z.iter().any(|&zh| zh >= h) {
            return Err(Error::dim("cusp label out of range"));
        }
        let wsum: f64 = s.w.iter().sum();
        if (wsum - 1.0).abs() > 1e-12 {
            return Err(Error::Numeric(format!("stick-breaking weights sum to {wsum}")));
        }
        if s.v[h - 1] != 1.0 {
            return Err(Error::Numeric("last stick-breaking fraction must be 1".into()));
        }
        for hh in 0..h {
            let spike = s.theta[hh] == self.hyper.theta_inf;
            if spike == s.is_active(hh) {
                return Err(Error::Numeric(format!(
                    "column {hh}: theta={} but z={} (spike/activity coupling broken)",
                    s.theta[hh], s.z[hh]
                )));
            }
        }
        if s.h_star != s.count_active() {
            return Err(Error::Numeric("stored H* disagrees with labels".into()));
        }
        Ok(())
    }
}
