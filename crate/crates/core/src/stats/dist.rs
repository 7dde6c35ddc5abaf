use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::{Beta, Distribution, Gamma, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use super::linalg::{factorize, GaussianParams};
use crate::error::{Error, Result};

pub fn ln_gamma(x: f64) -> f64 {
    statrs::function::gamma::ln_gamma(x)
}

/// One of the distributions the samplers draw from. Gamma is shape/rate,
/// inverse-gamma is shape/scale, normal is mean/variance and the Student-t
/// `scale` is the scale (not its square).
#[derive(Clone, Debug, PartialEq)]
pub enum DistSpec {
    Gamma {
        shape: f64,
        rate: f64,
    },
    InvGamma {
        shape: f64,
        scale: f64,
    },
    Beta {
        a: f64,
        b: f64,
    },
    Normal {
        mean: f64,
        variance: f64,
    },
    MvNormal {
        mean: DVector<f64>,
        covariance: DMatrix<f64>,
    },
    StudentT {
        dof: f64,
        location: f64,
        scale: f64,
    },
    Categorical {
        log_weights: Vec<f64>,
    },
    Bernoulli {
        p: f64,
    },
    Poisson {
        rate: f64,
    },
    Uniform,
}

/// A point in the support of a [`DistSpec`].
#[derive(Clone, Debug, PartialEq)]
pub enum Draw {
    Real(f64),
    Vector(DVector<f64>),
    Index(usize),
}

impl Draw {
    pub fn real(&self) -> Option<f64> {
        match self {
            Draw::Real(x) => Some(*x),
            Draw::Index(i) => Some(*i as f64),
            Draw::Vector(_) => None,
        }
    }

    pub fn index(&self) -> Option<usize> {
        match self {
            Draw::Index(i) => Some(*i),
            _ => None,
        }
    }

    pub fn into_vector(self) -> Option<DVector<f64>> {
        match self {
            Draw::Vector(v) => Some(v),
            _ => None,
        }
    }
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x > 0.0 && x.is_finite() {
        Ok(())
    } else {
        Err(Error::param(format!("{name} must be finite and > 0, got {x}")))
    }
}

// (a - 1) * ln(x) with the convention 0 * ln(0) = 0.
fn xlogy(a: f64, x: f64) -> f64 {
    if a == 0.0 {
        0.0
    } else {
        a * x.ln()
    }
}

impl DistSpec {
    pub fn validate(&self) -> Result<()> {
        match self {
            DistSpec::Gamma { shape, rate } => {
                positive("gamma shape", *shape)?;
                positive("gamma rate", *rate)
            }
            DistSpec::InvGamma { shape, scale } => {
                positive("inverse-gamma shape", *shape)?;
                positive("inverse-gamma scale", *scale)
            }
            DistSpec::Beta { a, b } => {
                positive("beta a", *a)?;
                positive("beta b", *b)
            }
            DistSpec::Normal { mean, variance } => {
                if !mean.is_finite() {
                    return Err(Error::param("normal mean must be finite"));
                }
                positive("normal variance", *variance)
            }
            DistSpec::MvNormal { mean, covariance } => {
                let d = mean.len();
                if covariance.nrows() != d || covariance.ncols() != d {
                    return Err(Error::dim(format!(
                        "mean has length {d}, covariance is {}x{}",
                        covariance.nrows(),
                        covariance.ncols()
                    )));
                }
                let scale = covariance.amax().max(f64::MIN_POSITIVE);
                if (covariance - covariance.transpose()).amax() > 1e-10 * scale {
                    return Err(Error::param("covariance is not symmetric"));
                }
                Ok(())
            }
            DistSpec::StudentT { dof, location, scale } => {
                positive("t dof", *dof)?;
                positive("t scale", *scale)?;
                if location.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("t location must be finite"))
                }
            }
            DistSpec::Categorical { log_weights } => {
                if log_weights.is_empty() {
                    return Err(Error::param("categorical needs at least one weight"));
                }
                if log_weights.iter().any(|w| w.is_nan() || *w == f64::INFINITY) {
                    return Err(Error::param("categorical log-weights must not be NaN or +inf"));
                }
                if log_weights.iter().all(|w| *w == f64::NEG_INFINITY) {
                    return Err(Error::Numeric("all categorical weights are zero".into()));
                }
                Ok(())
            }
            DistSpec::Bernoulli { p } => {
                if (0.0..=1.0).contains(p) {
                    Ok(())
                } else {
                    Err(Error::param(format!("bernoulli p must be in [0,1], got {p}")))
                }
            }
            DistSpec::Poisson { rate } => {
                if *rate >= 0.0 && rate.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param(format!("poisson rate must be >= 0, got {rate}")))
                }
            }
            DistSpec::Uniform => Ok(()),
        }
    }

    /// Natural-log density (or mass). Points outside the support give
    /// negative infinity; invalid parameters are an error.
    pub fn log_density(&self, x: &Draw) -> Result<f64> {
        self.validate()?;
        if let DistSpec::MvNormal { mean, covariance } = self {
            let v = match x {
                Draw::Vector(v) => v,
                _ => return Err(Error::dim("multivariate normal needs a vector argument")),
            };
            if v.len() != mean.len() {
                return Err(Error::dim("argument length differs from mean length"));
            }
            let chol = factorize(covariance.clone(), "multivariate normal covariance")?;
            let diff = v - mean;
            let half_log_det: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
            let whitened = chol
                .l_dirty()
                .solve_lower_triangular(&diff)
                .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
            let d = mean.len() as f64;
            return Ok(-0.5 * d * (2.0 * PI).ln() - half_log_det - 0.5 * whitened.norm_squared());
        }

        let x = match x {
            Draw::Real(x) => *x,
            Draw::Index(i) => *i as f64,
            Draw::Vector(_) => return Err(Error::dim("scalar distribution given a vector")),
        };
        if x.is_nan() {
            return Err(Error::param("density evaluated at NaN"));
        }
        Ok(match self {
            DistSpec::Gamma { shape, rate } => {
                if x < 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * rate.ln() - ln_gamma(*shape) + xlogy(shape - 1.0, x) - rate * x
                }
            }
            DistSpec::InvGamma { shape, scale } => {
                if x <= 0.0 {
                    f64::NEG_INFINITY
                } else {
                    shape * scale.ln() - ln_gamma(*shape) - (shape + 1.0) * x.ln() - scale / x
                }
            }
            DistSpec::Beta { a, b } => {
                if !(0.0..=1.0).contains(&x) {
                    f64::NEG_INFINITY
                } else {
                    ln_gamma(a + b) - ln_gamma(*a) - ln_gamma(*b) + xlogy(a - 1.0, x) + xlogy(b - 1.0, 1.0 - x)
                }
            }
            DistSpec::Normal { mean, variance } => {
                -0.5 * (2.0 * PI * variance).ln() - (x - mean).powi(2) / (2.0 * variance)
            }
            DistSpec::StudentT { dof, location, scale } => {
                let u = (x - location) / scale;
                ln_gamma(0.5 * (dof + 1.0))
                    - ln_gamma(0.5 * dof)
                    - 0.5 * (dof * PI).ln()
                    - scale.ln()
                    - 0.5 * (dof + 1.0) * (u * u / dof).ln_1p()
            }
            DistSpec::Categorical { log_weights } => {
                if x < 0.0 || x.fract() != 0.0 || x as usize >= log_weights.len() {
                    f64::NEG_INFINITY
                } else {
                    log_weights[x as usize] - log_sum_exp(log_weights)
                }
            }
            DistSpec::Bernoulli { p } => {
                if x == 1.0 {
                    p.ln()
                } else if x == 0.0 {
                    (-p).ln_1p()
                } else {
                    f64::NEG_INFINITY
                }
            }
            DistSpec::Poisson { rate } => {
                if x < 0.0 || x.fract() != 0.0 {
                    f64::NEG_INFINITY
                } else {
                    xlogy(x, *rate) - rate - ln_gamma(x + 1.0)
                }
            }
            DistSpec::Uniform => {
                if (0.0..=1.0).contains(&x) {
                    0.0
                } else {
                    f64::NEG_INFINITY
                }
            }
            DistSpec::MvNormal { .. } => unreachable!(),
        })
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Draw> {
        self.validate()?;
        Ok(match self {
            DistSpec::Gamma { shape, rate } => Draw::Real(sample_gamma(*shape, *rate, rng)?),
            DistSpec::InvGamma { shape, scale } => Draw::Real(sample_inv_gamma(*shape, *scale, rng)?),
            DistSpec::Beta { a, b } => Draw::Real(sample_beta(*a, *b, rng)?),
            DistSpec::Normal { mean, variance } => Draw::Real(sample_normal(*mean, *variance, rng)),
            DistSpec::MvNormal { mean, covariance } => {
                let chol = factorize(covariance.clone(), "multivariate normal covariance")?;
                let z = DVector::from_fn(mean.len(), |_, _| sample_std_normal(rng));
                Draw::Vector(mean + chol.l_dirty().lower_triangle() * z)
            }
            DistSpec::StudentT { dof, location, scale } => {
                // t = z / sqrt(g / dof), g ~ chi2(dof) = gamma(dof / 2, 1 / 2)
                let z = sample_std_normal(rng);
                let g = sample_gamma(0.5 * dof, 0.5, rng)?;
                Draw::Real(location + scale * z / (g / dof).sqrt())
            }
            DistSpec::Categorical { log_weights } => Draw::Index(sample_categorical_log(log_weights, rng)?),
            DistSpec::Bernoulli { p } => Draw::Index(usize::from(sample_uniform(rng) < *p)),
            DistSpec::Poisson { rate } => Draw::Index(sample_poisson(*rate, rng)?),
            DistSpec::Uniform => Draw::Real(sample_uniform(rng)),
        })
    }
}

/// Gamma(shape, rate) parameters, as returned by the conjugate updates.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GammaParams {
    pub shape: f64,
    pub rate: f64,
}

impl GammaParams {
    pub fn new(shape: f64, rate: f64) -> Self {
        Self { shape, rate }
    }

    pub fn spec(&self) -> DistSpec {
        DistSpec::Gamma {
            shape: self.shape,
            rate: self.rate,
        }
    }

    pub fn log_density(&self, x: f64) -> f64 {
        if x <= 0.0 {
            return f64::NEG_INFINITY;
        }
        self.shape * self.rate.ln() - ln_gamma(self.shape) + (self.shape - 1.0) * x.ln() - self.rate * x
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_gamma(self.shape, self.rate, rng)
    }

    /// Draws the reciprocal, i.e. an inverse-gamma with scale = rate.
    pub fn sample_reciprocal<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        Ok(1.0 / sample_gamma(self.shape, self.rate, rng)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BetaParams {
    pub a: f64,
    pub b: f64,
}

impl BetaParams {
    pub fn log_density(&self, x: f64) -> f64 {
        DistSpec::Beta { a: self.a, b: self.b }
            .log_density(&Draw::Real(x))
            .unwrap_or(f64::NEG_INFINITY)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<f64> {
        sample_beta(self.a, self.b, rng)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormalParams {
    pub mean: f64,
    pub variance: f64,
}

impl NormalParams {
    pub fn log_density(&self, x: f64) -> f64 {
        -0.5 * (2.0 * PI * self.variance).ln() - (x - self.mean).powi(2) / (2.0 * self.variance)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        sample_normal(self.mean, self.variance, rng)
    }
}

impl From<NormalParams> for GaussianParams {
    fn from(n: NormalParams) -> Self {
        GaussianParams {
            mean: DVector::from_element(1, n.mean),
            covariance: DMatrix::from_element(1, 1, n.variance),
        }
    }
}

pub fn sample_uniform<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>()
}

pub fn sample_std_normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

pub fn sample_normal<R: Rng + ?Sized>(mean: f64, variance: f64, rng: &mut R) -> f64 {
    mean + variance.sqrt() * sample_std_normal(rng)
}

pub fn sample_gamma<R: Rng + ?Sized>(shape: f64, rate: f64, rng: &mut R) -> Result<f64> {
    positive("gamma shape", shape)?;
    positive("gamma rate", rate)?;
    let g = Gamma::new(shape, 1.0).map_err(|e| Error::param(e.to_string()))?;
    let x = g.sample(rng) / rate;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        // Underflow for tiny shapes; clamp to the smallest positive value so
        // downstream reciprocals stay finite.
        Ok(x.clamp(f64::MIN_POSITIVE, f64::MAX))
    }
}

pub fn sample_inv_gamma<R: Rng + ?Sized>(shape: f64, scale: f64, rng: &mut R) -> Result<f64> {
    Ok(1.0 / sample_gamma(shape, scale, rng)?)
}

pub fn sample_beta<R: Rng + ?Sized>(a: f64, b: f64, rng: &mut R) -> Result<f64> {
    positive("beta a", a)?;
    positive("beta b", b)?;
    let d = Beta::new(a, b).map_err(|e| Error::param(e.to_string()))?;
    Ok(d.sample(rng))
}

pub fn sample_poisson<R: Rng + ?Sized>(rate: f64, rng: &mut R) -> Result<usize> {
    if rate == 0.0 {
        return Ok(0);
    }
    positive("poisson rate", rate)?;
    let d = Poisson::new(rate).map_err(|e| Error::param(e.to_string()))?;
    let x: f64 = d.sample(rng);
    Ok(x as usize)
}

pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let max = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return f64::NEG_INFINITY;
    }
    max + xs.iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// Shifts unnormalized log-weights so that they exponentiate to a simplex.
pub fn normalize_log_weights(log_weights: &mut [f64]) -> Result<()> {
    let lse = log_sum_exp(log_weights);
    if !lse.is_finite() {
        return Err(Error::Numeric(format!(
            "cannot normalize log-weights (log-sum-exp = {lse})"
        )));
    }
    for w in log_weights.iter_mut() {
        *w -= lse;
    }
    Ok(())
}

/// Draws an index with probability proportional to `exp(log_weights)`,
/// shifting by the maximum before exponentiating.
pub fn sample_categorical_log<R: Rng + ?Sized>(log_weights: &[f64], rng: &mut R) -> Result<usize> {
    let max = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || max.is_nan() {
        return Err(Error::Numeric("categorical weights are all zero".into()));
    }
    let total: f64 = log_weights.iter().map(|w| (w - max).exp()).sum();
    let target = sample_uniform(rng) * total;
    let mut cum = 0.0;
    let mut last_positive = 0;
    for (i, w) in log_weights.iter().enumerate() {
        let weight = (w - max).exp();
        if weight > 0.0 {
            last_positive = i;
        }
        cum += weight;
        if cum > target {
            return Ok(i);
        }
    }
    Ok(last_positive)
}
