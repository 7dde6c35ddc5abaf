use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::Rng;

use super::dist::{sample_std_normal, DistSpec, Draw};
use crate::error::{Error, Result};

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return f64::NAN;
    }
    let sym = (m + m.transpose()) * 0.5;
    sym.symmetric_eigenvalues().min()
}

pub(crate) fn factorize(m: DMatrix<f64>, context: &'static str) -> Result<Cholesky<f64, Dyn>> {
    if !m.is_square() {
        return Err(Error::dim(format!(
            "{context}: expected a square matrix, got {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|x| !x.is_finite()) {
        return Err(Error::Numeric(format!("{context}: non-finite entries")));
    }
    let probe = m.clone();
    Cholesky::new(m).ok_or_else(|| Error::NotPositiveDefinite {
        context,
        min_eigenvalue: min_eigenvalue(&probe),
    })
}

/// Mean and covariance of a multivariate normal.
#[derive(Clone, Debug, PartialEq)]
pub struct GaussianParams {
    pub mean: DVector<f64>,
    pub covariance: DMatrix<f64>,
}

impl GaussianParams {
    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn spec(&self) -> DistSpec {
        DistSpec::MvNormal {
            mean: self.mean.clone(),
            covariance: self.covariance.clone(),
        }
    }

    pub fn log_density(&self, x: &DVector<f64>) -> Result<f64> {
        self.spec().log_density(&Draw::Vector(x.clone()))
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<DVector<f64>> {
        let chol = factorize(self.covariance.clone(), "gaussian covariance")?;
        let z = DVector::from_fn(self.dim(), |_, _| sample_std_normal(rng));
        Ok(&self.mean + chol.l_dirty().lower_triangle() * z)
    }
}

/// Converts a Gaussian in information form (precision `Q`, linear term `b`)
/// to moment form: covariance `Q^-1`, mean `Q^-1 b`.
pub fn cholesky_solve_posterior(
    precision_contrib: &DMatrix<f64>,
    linear_contrib: &DVector<f64>,
) -> Result<GaussianParams> {
    if precision_contrib.nrows() != linear_contrib.len() {
        return Err(Error::dim(format!(
            "precision is {}x{}, linear term has length {}",
            precision_contrib.nrows(),
            precision_contrib.ncols(),
            linear_contrib.len()
        )));
    }
    let chol = factorize(precision_contrib.clone(), "posterior precision")?;
    let mean = chol.solve(linear_contrib);
    let mut covariance = chol.inverse();
    covariance = (&covariance + covariance.transpose()) * 0.5;
    Ok(GaussianParams { mean, covariance })
}

/// Draws from `N(Q^-1 b, Q^-1)` without forming the inverse:
/// with `Q = L L^T`, the draw is `Q^-1 b + L^-T z`.
pub fn sample_mvn_precision<R: Rng + ?Sized>(
    precision: DMatrix<f64>,
    linear: &DVector<f64>,
    rng: &mut R,
) -> Result<DVector<f64>> {
    let k = linear.len();
    if k == 0 {
        return Ok(DVector::zeros(0));
    }
    let chol = factorize(precision, "posterior precision")?;
    let mean = chol.solve(linear);
    let z = DVector::from_fn(k, |_, _| sample_std_normal(rng));
    let noise = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    Ok(mean + noise)
}
