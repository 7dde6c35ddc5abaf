//! Indian buffet process spike-and-slab prior.
//!
//! `λ_ih = z_ih · N(0, 1/β_h)` with `Z` drawn from an IBP over an unbounded
//! pool of columns. Each sweep updates the included loadings one element at
//! a time, refreshes the column precisions, then for every variable
//! resamples its inclusion in shared columns and proposes a fresh set of
//! columns private to that variable.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{update_factors, update_idio, CorePriors, CoreState, Dataset, LoadingMatrix};
use crate::stats::{
    sample_gamma, sample_normal, sample_poisson, sample_std_normal, sample_uniform, GammaParams, NormalParams,
};

/// Probability used in place of one when the prior odds of inclusion diverge.
pub const INCLUSION_CAP: f64 = 1.0 - 1e-12;

/// Prior odds of `z_ih = 1` given `m` other variables using column `h`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum PriorOdds {
    /// `m / (p - 1 - m)`, with births at rate `α/(p-1)`.
    OthersComplement,
    /// `m / (p - m)`, the exchangeable IBP predictive, with births at rate `α/p`.
    Exchangeable,
    /// `m / (T - 1 - m)`, with births at rate `α/(p-1)`.
    Observations,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpHyper {
    pub a_beta: f64,
    pub b_beta: f64,
    pub a_alpha: f64,
    pub b_alpha: f64,
    /// Birth proposal tuning: new columns are proposed at `ν` times the
    /// prior rate.
    pub nu: f64,
    pub odds: PriorOdds,
    /// Starting pool size; `None` means `min(p, ⌈5 ln p⌉)`.
    pub initial_factors: Option<usize>,
    /// Starting concentration; `None` draws it from its prior.
    pub alpha_init: Option<f64>,
    pub update_alpha: bool,
    /// Finite Beta-Bernoulli pool of this many columns: inclusion odds become
    /// `(m + α/K)/(p - m)` for every column, births and pruning are off.
    pub finite_pool: Option<usize>,
}

impl Default for IbpHyper {
    fn default() -> Self {
        Self {
            a_beta: 1.0,
            b_beta: 1.0,
            a_alpha: 1.0,
            b_alpha: 1.0,
            nu: 1.0,
            odds: PriorOdds::OthersComplement,
            initial_factors: None,
            alpha_init: None,
            update_alpha: true,
            finite_pool: None,
        }
    }
}

impl IbpHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("a_beta", self.a_beta),
            ("b_beta", self.b_beta),
            ("a_alpha", self.a_alpha),
            ("b_alpha", self.b_alpha),
            ("nu", self.nu),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::param(format!("ibp {name} must be > 0, got {v}")));
            }
        }
        if let Some(a) = self.alpha_init {
            if !(a > 0.0 && a.is_finite()) {
                return Err(Error::param(format!("ibp alpha_init must be > 0, got {a}")));
            }
        }
        if self.finite_pool == Some(0) {
            return Err(Error::param("ibp finite_pool must be >= 1"));
        }
        Ok(())
    }

    /// Divisor of `α` in the birth rate.
    pub fn birth_denominator(&self, p: usize) -> f64 {
        match self.odds {
            PriorOdds::Exchangeable => p as f64,
            PriorOdds::OthersComplement | PriorOdds::Observations => (p - 1) as f64,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpState {
    /// Inclusion indicators, one `Vec` of length `p` per column.
    pub z: Vec<Vec<bool>>,
    pub beta: DVector<f64>,
    pub alpha: f64,
}

impl IbpState {
    pub fn k(&self) -> usize {
        self.z.len()
    }

    pub fn column_count(&self, h: usize) -> usize {
        self.z[h].iter().filter(|&&b| b).count()
    }

    /// Columns used by at least one variable.
    pub fn k_plus(&self) -> usize {
        (0..self.k()).filter(|&h| self.column_count(h) > 0).count()
    }
}

/// Conditional of one included loading given the residual of its
/// variable with every other column removed.
pub fn loading_element_conditional(f_h: &DVector<f64>, resid: &DVector<f64>, sigma2: f64, beta_h: f64) -> NormalParams {
    let s_inv = 1.0 / sigma2;
    let variance = 1.0 / (beta_h + s_inv * f_h.norm_squared());
    NormalParams {
        mean: variance * s_inv * f_h.dot(resid),
        variance,
    }
}

/// `β_h ~ G(a_β + ½Σ_i z_ih, b_β + ½Σ_i λ_ih²)`.
pub fn beta_conditional(z_col: &[bool], lambda_col: &DVector<f64>, hyper: &IbpHyper) -> GammaParams {
    let m = z_col.iter().filter(|&&b| b).count() as f64;
    GammaParams {
        shape: hyper.a_beta + 0.5 * m,
        rate: hyper.b_beta + 0.5 * lambda_col.norm_squared(),
    }
}

/// Log marginal-likelihood ratio of `z_ih = 1` against `z_ih = 0` with
/// `λ_ih` integrated out.
pub fn inclusion_log_likelihood_ratio(f_h: &DVector<f64>, resid: &DVector<f64>, sigma2: f64, beta_h: f64) -> f64 {
    let s_inv = 1.0 / sigma2;
    let v = 1.0 / (beta_h + s_inv * f_h.norm_squared());
    let b = s_inv * f_h.dot(resid);
    0.5 * (beta_h * v).ln() + 0.5 * v * b * b
}

/// Log posterior odds of `z_ih = 1`. Returns `+∞` when the prior odds
/// diverge (no variable left outside the column).
#[allow(clippy::too_many_arguments)]
pub fn z_posterior_logodds(
    f_h: &DVector<f64>,
    resid: &DVector<f64>,
    sigma2: f64,
    beta_h: f64,
    m_minus: usize,
    p: usize,
    odds: PriorOdds,
) -> f64 {
    let lik = inclusion_log_likelihood_ratio(f_h, resid, sigma2, beta_h);
    let m = m_minus as f64;
    let denom = match odds {
        PriorOdds::OthersComplement => p as f64 - 1.0 - m,
        PriorOdds::Exchangeable => p as f64 - m,
        PriorOdds::Observations => resid.len() as f64 - 1.0 - m,
    };
    if denom <= 0.0 {
        return f64::INFINITY;
    }
    lik + m.ln() - denom.ln()
}

/// Finite-pool variant: prior odds `(m + α/K)/(p - m)`.
pub fn z_posterior_logodds_finite(
    f_h: &DVector<f64>,
    resid: &DVector<f64>,
    sigma2: f64,
    beta_h: f64,
    m_minus: usize,
    p: usize,
    alpha_over_k: f64,
) -> f64 {
    let m = m_minus as f64;
    inclusion_log_likelihood_ratio(f_h, resid, sigma2, beta_h) + (m + alpha_over_k).ln() - (p as f64 - m).ln()
}

/// Turns log-odds into an inclusion probability, capping divergent odds.
pub fn inclusion_probability(log_odds: f64) -> f64 {
    if log_odds == f64::INFINITY {
        INCLUSION_CAP
    } else if log_odds >= 0.0 {
        1.0 / (1.0 + (-log_odds).exp())
    } else {
        let e = log_odds.exp();
        e / (1.0 + e)
    }
    .min(INCLUSION_CAP)
}

/// Log weight of a set of loadings private to one variable: the marginal
/// likelihood ratio of its residual with the private factors integrated out,
/// times the target-over-proposal Poisson ratio for their number.
///
/// With `M = I + σ⁻²llᵀ` and `m_t = M⁻¹σ⁻²l r_t` this is
/// `-T/2 ln|M| + ½Σ_t m_tᵀMm_t + ln Pois(κ; a) - ln Pois(κ; aν)`,
/// `a = α / birth_denominator`.
pub fn birth_log_ratio(resid: &DVector<f64>, sigma2: f64, new_loadings: &[f64], birth_rate: f64, nu: f64) -> f64 {
    let kappa = new_loadings.len() as f64;
    let s_inv = 1.0 / sigma2;
    let l2: f64 = new_loadings.iter().map(|x| x * x).sum();
    let det = 1.0 + s_inv * l2;
    // lᵀM⁻¹l by Sherman-Morrison
    let quad = l2 / det;
    let t = resid.len() as f64;
    let lik = -0.5 * t * det.ln() + 0.5 * s_inv * s_inv * quad * resid.norm_squared();
    let poisson = -birth_rate + birth_rate * nu - kappa * nu.ln();
    lik + poisson
}

/// `α ~ G(a_α + K₊, b_α + H_p)`.
pub fn alpha_conditional(k_plus: usize, p: usize, hyper: &IbpHyper) -> GammaParams {
    GammaParams {
        shape: hyper.a_alpha + k_plus as f64,
        rate: hyper.b_alpha + harmonic(p),
    }
}

pub fn harmonic(p: usize) -> f64 {
    (1..=p).map(|j| 1.0 / j as f64).sum()
}

/// One draw from the IBP over `p` customers (variables): customer `i` takes
/// each existing dish with probability `m_h / i` and `Pois(α/i)` new ones.
/// Columns are returned in order of first appearance.
pub fn sample_ibp_prior<R: Rng + ?Sized>(p: usize, alpha: f64, rng: &mut R) -> Result<Vec<Vec<bool>>> {
    let mut cols: Vec<Vec<bool>> = Vec::new();
    let mut counts: Vec<usize> = Vec::new();
    for i in 0..p {
        let n = (i + 1) as f64;
        for (col, m) in cols.iter_mut().zip(counts.iter_mut()) {
            if sample_uniform(rng) < *m as f64 / n {
                col[i] = true;
                *m += 1;
            }
        }
        for _ in 0..sample_poisson(alpha / n, rng)? {
            let mut col = vec![false; p];
            col[i] = true;
            cols.push(col);
            counts.push(1);
        }
    }
    Ok(cols)
}

/// `y_i - F'λ_i` for one variable.
fn row_residual(core: &CoreState, data: &Dataset, i: usize) -> DVector<f64> {
    let lam_i = core.loadings.matrix().row(i).transpose();
    data.y().column(i) - core.factors.tr_mul(&lam_i)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpRecord {
    pub k: usize,
    pub k_plus: usize,
    pub alpha: f64,
    pub births_accepted: usize,
}

/// Gibbs sampler for the IBP factor model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IbpSampler {
    pub core: CoreState,
    pub state: IbpState,
    pub hyper: IbpHyper,
    pub priors: CorePriors,
}

impl IbpSampler {
    /// Starts with an all-ones `Z` over the initial pool, zero loadings,
    /// unit idiosyncratic variances and standard-normal factors.
    pub fn new<R: Rng + ?Sized>(data: &Dataset, hyper: IbpHyper, priors: CorePriors, rng: &mut R) -> Result<Self> {
        hyper.validate()?;
        priors.validate()?;
        let (p, t) = (data.p(), data.t());
        let k0 = hyper
            .finite_pool
            .or(hyper.initial_factors)
            .unwrap_or_else(|| p.min((5.0 * (p as f64).ln()).ceil() as usize));
        let mut beta = DVector::zeros(k0);
        for h in 0..k0 {
            beta[h] = sample_gamma(hyper.a_beta, hyper.b_beta, rng)?;
        }
        let alpha = match hyper.alpha_init {
            Some(a) => a,
            None => sample_gamma(hyper.a_alpha, hyper.b_alpha, rng)?,
        };
        let factors = DMatrix::from_fn(k0, t, |_, _| sample_std_normal(rng));
        let core = CoreState::new(LoadingMatrix::zeros(p, k0), DVector::from_element(p, 1.0), factors)?;
        Ok(Self {
            core,
            state: IbpState {
                z: vec![vec![true; p]; k0],
                beta,
                alpha,
            },
            hyper,
            priors,
        })
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, data: &Dataset, rng: &mut R) -> Result<IbpRecord> {
        if data.p() != self.core.p() || data.t() != self.core.factors.ncols() {
            return Err(Error::dim("ibp sampler state does not match the data"));
        }
        self.update_loadings(data, rng);
        update_idio(&mut self.core, data, &self.priors, rng)?;
        update_factors(&mut self.core, data, rng)?;
        self.update_beta(rng)?;
        let mut births = 0;
        for i in 0..self.core.p() {
            self.update_row_inclusion(data, i, rng);
            if self.hyper.finite_pool.is_none() && self.birth_new_factors(data, i, rng)? {
                births += 1;
            }
        }
        if self.hyper.update_alpha && self.hyper.finite_pool.is_none() {
            self.state.alpha = alpha_conditional(self.state.k_plus(), self.core.p(), &self.hyper).sample(rng)?;
        }
        if self.hyper.finite_pool.is_none() {
            self.prune();
        }
        Ok(IbpRecord {
            k: self.state.k(),
            k_plus: self.state.k_plus(),
            alpha: self.state.alpha,
            births_accepted: births,
        })
    }

    fn update_loadings<R: Rng + ?Sized>(&mut self, data: &Dataset, rng: &mut R) {
        let k = self.state.k();
        for i in 0..self.core.p() {
            let sigma2 = self.core.idio_variances[i];
            let mut r = row_residual(&self.core, data, i);
            for h in 0..k {
                if !self.state.z[h][i] {
                    continue;
                }
                let f_h = self.core.factors.row(h).transpose();
                let old = self.core.loadings.matrix()[(i, h)];
                r.axpy(old, &f_h, 1.0);
                let new = loading_element_conditional(&f_h, &r, sigma2, self.state.beta[h]).sample(rng);
                r.axpy(-new, &f_h, 1.0);
                self.core.loadings.matrix_mut()[(i, h)] = new;
            }
        }
    }

    fn update_beta<R: Rng + ?Sized>(&mut self, rng: &mut R) -> Result<()> {
        for h in 0..self.state.k() {
            let col = self.core.loadings.matrix().column(h).into_owned();
            self.state.beta[h] = beta_conditional(&self.state.z[h], &col, &self.hyper).sample(rng)?;
        }
        Ok(())
    }

    /// For variable `i`: joint draw of `(z_ih, λ_ih)` for every shared
    /// column (every column in finite-pool mode).
    pub fn update_row_inclusion<R: Rng + ?Sized>(&mut self, data: &Dataset, i: usize, rng: &mut R) {
        let p = self.core.p();
        let k = self.state.k();
        let sigma2 = self.core.idio_variances[i];
        let mut r = row_residual(&self.core, data, i);
        for h in 0..k {
            let m_minus = self.state.column_count(h) - usize::from(self.state.z[h][i]);
            let log_odds = match self.hyper.finite_pool {
                Some(kk) => {
                    let f_h = self.core.factors.row(h).transpose();
                    let old = self.core.loadings.matrix()[(i, h)];
                    r.axpy(old, &f_h, 1.0);
                    z_posterior_logodds_finite(
                        &f_h,
                        &r,
                        sigma2,
                        self.state.beta[h],
                        m_minus,
                        p,
                        self.state.alpha / kk as f64,
                    )
                }
                None if m_minus == 0 => continue,
                None => {
                    let f_h = self.core.factors.row(h).transpose();
                    let old = self.core.loadings.matrix()[(i, h)];
                    r.axpy(old, &f_h, 1.0);
                    z_posterior_logodds(&f_h, &r, sigma2, self.state.beta[h], m_minus, p, self.hyper.odds)
                }
            };
            let f_h = self.core.factors.row(h).transpose();
            let include = sample_uniform(rng) < inclusion_probability(log_odds);
            let new = if include {
                loading_element_conditional(&f_h, &r, sigma2, self.state.beta[h]).sample(rng)
            } else {
                0.0
            };
            r.axpy(-new, &f_h, 1.0);
            self.state.z[h][i] = include;
            self.core.loadings.matrix_mut()[(i, h)] = new;
        }
    }

    /// For variable `i`: Metropolis-Hastings replacement of the
    /// columns private to `i` by `κ ~ Pois(αν/d)` fresh ones with precisions
    /// and loadings drawn from their priors. On acceptance the new factor
    /// rows are drawn from their conditional.
    pub fn birth_new_factors<R: Rng + ?Sized>(&mut self, data: &Dataset, i: usize, rng: &mut R) -> Result<bool> {
        let p = self.core.p();
        let t_len = data.t();
        let sigma2 = self.core.idio_variances[i];
        let rate = self.state.alpha / self.hyper.birth_denominator(p);
        let private: Vec<usize> = (0..self.state.k())
            .filter(|&h| self.state.z[h][i] && self.state.column_count(h) == 1)
            .collect();
        let old_loadings: Vec<f64> = private.iter().map(|&h| self.core.loadings.matrix()[(i, h)]).collect();
        // residual with the private columns removed
        let mut r = row_residual(&self.core, data, i);
        for (&h, &l) in private.iter().zip(&old_loadings) {
            r.axpy(l, &self.core.factors.row(h).transpose(), 1.0);
        }

        let kappa = sample_poisson(rate * self.hyper.nu, rng)?;
        let mut new_beta = Vec::with_capacity(kappa);
        let mut new_loadings = Vec::with_capacity(kappa);
        for _ in 0..kappa {
            let b = sample_gamma(self.hyper.a_beta, self.hyper.b_beta, rng)?;
            new_beta.push(b);
            new_loadings.push(sample_normal(0.0, 1.0 / b, rng));
        }
        let log_accept = birth_log_ratio(&r, sigma2, &new_loadings, rate, self.hyper.nu)
            - birth_log_ratio(&r, sigma2, &old_loadings, rate, self.hyper.nu);
        if sample_uniform(rng).ln() >= log_accept {
            return Ok(false);
        }

        self.remove_columns(&private);
        if kappa > 0 {
            let l = DVector::from_vec(new_loadings);
            let s_inv = 1.0 / sigma2;
            let mut precision = &l * l.transpose() * s_inv;
            for j in 0..kappa {
                precision[(j, j)] += 1.0;
            }
            let chol = crate::stats::linalg_factorize(precision, "private factor precision")?;
            let linear = (&l * s_inv) * r.transpose();
            let means = chol.solve(&linear);
            let z = DMatrix::from_fn(kappa, t_len, |_, _| sample_std_normal(rng));
            let noise = chol
                .l_dirty()
                .tr_solve_lower_triangular(&z)
                .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
            let f_new = means + noise;
            for j in 0..kappa {
                let mut col = DVector::zeros(p);
                col[i] = l[j];
                self.core.push_factor(&col, &f_new.row(j).transpose());
                let mut zc = vec![false; p];
                zc[i] = true;
                self.state.z.push(zc);
            }
            let mut beta: Vec<f64> = self.state.beta.iter().copied().collect();
            beta.extend(new_beta);
            self.state.beta = DVector::from_vec(beta);
        }
        Ok(true)
    }

    fn remove_columns(&mut self, cols: &[usize]) {
        if cols.is_empty() {
            return;
        }
        self.core.remove_factors(cols);
        let keep: Vec<usize> = (0..self.state.k()).filter(|h| !cols.contains(h)).collect();
        self.state.z = keep.iter().map(|&h| std::mem::take(&mut self.state.z[h])).collect();
        self.state.beta = DVector::from_iterator(keep.len(), keep.iter().map(|&h| self.state.beta[h]));
    }

    fn prune(&mut self) {
        let dead: Vec<usize> = (0..self.state.k())
            .filter(|&h| self.state.column_count(h) == 0)
            .collect();
        self.remove_columns(&dead);
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.core.check()?;
        let k = self.state.k();
        if self.core.k() != k || self.state.beta.len() != k {
            return Err(Error::dim(format!(
                "ibp dimension audit failed: Z has {k} columns, Λ {}, β {}",
                self.core.k(),
                self.state.beta.len()
            )));
        }
        let lam = self.core.loadings.matrix();
        for h in 0..k {
            if self.state.z[h].len() != self.core.p() {
                return Err(Error::dim("ibp indicator column has wrong length"));
            }
            for i in 0..self.core.p() {
                if lam[(i, h)] != 0.0 && !self.state.z[h][i] {
                    return Err(Error::Numeric(format!("loading ({i},{h}) is nonzero with z = 0")));
                }
            }
        }
        if self.state.k_plus() > k {
            return Err(Error::Numeric("K+ exceeds pool size".into()));
        }
        Ok(())
    }
}
