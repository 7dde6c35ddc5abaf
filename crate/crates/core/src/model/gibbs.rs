use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{CorePriors, CoreState, Dataset, LoadingMatrix};
use crate::error::{Error, Result};
use crate::stats::{cholesky_solve_posterior, sample_mvn_precision, sample_std_normal, GammaParams, GaussianParams};

/// Full conditional of one loading row:
/// `N((Ψ⁻¹ + σ⁻²FFᵀ)⁻¹ F σ⁻² y_i, (Ψ⁻¹ + σ⁻²FFᵀ)⁻¹)` where `Ψ⁻¹` is the
/// diagonal of `prior_precisions`.
pub fn loadings_row_conditional(
    factors: &DMatrix<f64>,
    y_i: &DVector<f64>,
    sigma_i2: f64,
    prior_precisions: &DVector<f64>,
) -> Result<GaussianParams> {
    let k = factors.nrows();
    if prior_precisions.len() != k || factors.ncols() != y_i.len() {
        return Err(Error::dim(format!(
            "factors {}x{}, y_i length {}, {} prior precisions",
            factors.nrows(),
            factors.ncols(),
            y_i.len(),
            prior_precisions.len()
        )));
    }
    let s_inv = 1.0 / sigma_i2;
    let mut precision = factors * factors.transpose() * s_inv;
    for h in 0..k {
        precision[(h, h)] += prior_precisions[h];
    }
    let linear = factors * y_i * s_inv;
    cholesky_solve_posterior(&precision, &linear)
}

/// Gamma conditional of the idiosyncratic precision `σ_i⁻²` given the
/// residuals `y_it − λ_iᵀ f_t`.
pub fn idio_conditional(residuals_i: &DVector<f64>, shape: f64, scale: f64) -> GammaParams {
    GammaParams {
        shape: shape + 0.5 * residuals_i.len() as f64,
        rate: scale + 0.5 * residuals_i.norm_squared(),
    }
}

/// Full conditional of one factor vector:
/// `N((I + ΛᵀΣ⁻¹Λ)⁻¹ΛᵀΣ⁻¹y_t, (I + ΛᵀΣ⁻¹Λ)⁻¹)`.
pub fn factor_conditional(
    loadings: &LoadingMatrix,
    idio_variances: &DVector<f64>,
    y_t: &DVector<f64>,
) -> Result<GaussianParams> {
    let lam = loadings.matrix();
    if idio_variances.len() != lam.nrows() || y_t.len() != lam.nrows() {
        return Err(Error::dim("factor_conditional: p mismatch"));
    }
    let scaled = scale_rows(lam, idio_variances);
    let mut precision = lam.transpose() * &scaled;
    for h in 0..lam.ncols() {
        precision[(h, h)] += 1.0;
    }
    let linear = scaled.transpose() * y_t;
    cholesky_solve_posterior(&precision, &linear)
}

/// `Ω = ΛΛᵀ + diag(σ²)`.
pub fn implied_covariance(loadings: &LoadingMatrix, idio_variances: &DVector<f64>) -> DMatrix<f64> {
    let lam = loadings.matrix();
    let mut omega = lam * lam.transpose();
    for i in 0..omega.nrows() {
        omega[(i, i)] += idio_variances[i];
    }
    omega
}

/// T x p residual matrix `Y − (ΛF)ᵀ`.
pub fn residuals(state: &CoreState, data: &Dataset) -> DMatrix<f64> {
    if state.k() == 0 {
        return data.y().clone();
    }
    data.y() - (state.factors.transpose() * state.loadings.matrix().transpose())
}

// Σ⁻¹Λ: row i of Λ divided by σ_i².
fn scale_rows(lam: &DMatrix<f64>, idio: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = lam.clone();
    for (i, mut row) in scaled.row_iter_mut().enumerate() {
        row /= idio[i];
    }
    scaled
}

/// Redraws every loading row from its conditional. `prior_precisions`
/// is p x k.
pub fn update_loadings<R: Rng + ?Sized>(
    state: &mut CoreState,
    data: &Dataset,
    prior_precisions: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    let (p, k) = (state.p(), state.k());
    if prior_precisions.nrows() != p || prior_precisions.ncols() != k {
        return Err(Error::dim(format!(
            "prior precisions are {}x{}, expected {p}x{k}",
            prior_precisions.nrows(),
            prior_precisions.ncols()
        )));
    }
    if k == 0 {
        return Ok(());
    }
    let f = &state.factors;
    let fft = f * f.transpose();
    let fy = f * data.y();
    let lam = state.loadings.matrix_mut();
    for i in 0..p {
        let s_inv = 1.0 / state.idio_variances[i];
        let mut precision = &fft * s_inv;
        for h in 0..k {
            precision[(h, h)] += prior_precisions[(i, h)];
        }
        let linear = fy.column(i) * s_inv;
        let row = sample_mvn_precision(precision, &linear, rng)?;
        lam.set_row(i, &row.transpose());
    }
    Ok(())
}

/// Redraws each `σ_i²`, using residuals computed from the current
/// (already updated) loadings.
pub fn update_idio<R: Rng + ?Sized>(
    state: &mut CoreState,
    data: &Dataset,
    priors: &CorePriors,
    rng: &mut R,
) -> Result<()> {
    let resid = residuals(state, data);
    for i in 0..state.p() {
        let (shape, scale) = priors.for_variable(i);
        let g = idio_conditional(&resid.column(i).into_owned(), shape, scale);
        state.idio_variances[i] = g.sample_reciprocal(rng)?;
    }
    Ok(())
}

/// Redraws all factor vectors. The posterior precision is shared by
/// every observation, so it is factorized once.
pub fn update_factors<R: Rng + ?Sized>(state: &mut CoreState, data: &Dataset, rng: &mut R) -> Result<()> {
    let k = state.k();
    let t_len = data.t();
    if k == 0 {
        state.factors = DMatrix::zeros(0, t_len);
        return Ok(());
    }
    let lam = state.loadings.matrix();
    let scaled = scale_rows(lam, &state.idio_variances);
    let mut precision = lam.transpose() * &scaled;
    for h in 0..k {
        precision[(h, h)] += 1.0;
    }
    let linear = scaled.transpose() * data.y().transpose();
    let chol = crate::stats::linalg_factorize(precision, "factor posterior precision")?;
    let means = chol.solve(&linear);
    let mut z = DMatrix::zeros(k, t_len);
    for t in 0..t_len {
        for h in 0..k {
            z[(h, t)] = sample_std_normal(rng);
        }
    }
    let noise = chol
        .l_dirty()
        .tr_solve_lower_triangular(&z)
        .ok_or_else(|| Error::Numeric("triangular solve failed".into()))?;
    state.factors = means + noise;
    Ok(())
}

/// One systematic scan over loadings, idiosyncratic variances and factors,
/// in that order.
pub fn core_sweep<R: Rng + ?Sized>(
    state: &mut CoreState,
    data: &Dataset,
    priors: &CorePriors,
    prior_precisions: &DMatrix<f64>,
    rng: &mut R,
) -> Result<()> {
    if data.p() != state.p() || state.factors.ncols() != data.t() {
        return Err(Error::dim(format!(
            "state is p={} with {} factor columns, data is p={} T={}",
            state.p(),
            state.factors.ncols(),
            data.p(),
            data.t()
        )));
    }
    update_loadings(state, data, prior_precisions, rng)?;
    update_idio(state, data, priors, rng)?;
    update_factors(state, data, rng)?;
    Ok(())
}
