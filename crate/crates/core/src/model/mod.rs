//! The Gaussian factor model `y_t = Λ f_t + ε_t` and the Gibbs updates for
//! loadings, idiosyncratic variances and factors that every shrinkage prior
//! shares.

mod gibbs;
mod io;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use gibbs::{
    core_sweep, factor_conditional, idio_conditional, implied_covariance, loadings_row_conditional, residuals,
    update_factors, update_idio, update_loadings,
};
pub use io::{read_dataset, read_dataset_binary, read_dataset_csv, write_dataset_binary, write_dataset_csv};

/// Observed data: `T` rows (observations) by `p` columns (variables).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    y: DMatrix<f64>,
}

impl Dataset {
    pub fn new(y: DMatrix<f64>) -> Result<Self> {
        if y.nrows() < 2 || y.ncols() < 2 {
            return Err(Error::dim(format!(
                "dataset needs T >= 2 and p >= 2, got T={} p={}",
                y.nrows(),
                y.ncols()
            )));
        }
        if let Some(pos) = y.iter().position(|v| !v.is_finite()) {
            let (t, i) = (pos % y.nrows(), pos / y.nrows());
            return Err(Error::Format(format!(
                "non-finite value at observation {t}, variable {i}"
            )));
        }
        Ok(Self { y })
    }

    /// T x p data matrix.
    pub fn y(&self) -> &DMatrix<f64> {
        &self.y
    }

    pub fn p(&self) -> usize {
        self.y.ncols()
    }

    pub fn t(&self) -> usize {
        self.y.nrows()
    }

    /// All observations of variable `i` (length T).
    pub fn variable(&self, i: usize) -> DVector<f64> {
        self.y.column(i).into_owned()
    }

    /// Observation `t` (length p).
    pub fn observation(&self, t: usize) -> DVector<f64> {
        self.y.row(t).transpose()
    }

    pub fn sample_covariance(&self) -> DMatrix<f64> {
        let t = self.t() as f64;
        let mean = self.y.row_mean();
        let mut centered = self.y.clone();
        for mut row in centered.row_iter_mut() {
            row -= &mean;
        }
        centered.transpose() * &centered / (t - 1.0)
    }
}

/// p x k loading matrix. The column count changes as samplers adapt their
/// truncation level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LoadingMatrix(DMatrix<f64>);

impl LoadingMatrix {
    pub fn new(values: DMatrix<f64>) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("loading matrix has non-finite entries".into()));
        }
        Ok(Self(values))
    }

    pub fn zeros(p: usize, k: usize) -> Self {
        Self(DMatrix::zeros(p, k))
    }

    pub fn p(&self) -> usize {
        self.0.nrows()
    }

    pub fn k(&self) -> usize {
        self.0.ncols()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn matrix_mut(&mut self) -> &mut DMatrix<f64> {
        &mut self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn column_sq_norm(&self, h: usize) -> f64 {
        self.0.column(h).norm_squared()
    }

    /// Largest row sum of squares; finite iff `ΛΛᵀ` has finite entries.
    pub fn max_row_sq_norm(&self) -> f64 {
        self.0.row_iter().map(|r| r.norm_squared()).fold(0.0, f64::max)
    }

    pub fn remove_columns(&mut self, cols: &[usize]) {
        let m = std::mem::replace(&mut self.0, DMatrix::zeros(0, 0));
        self.0 = m.remove_columns_at(cols);
    }

    pub fn push_column(&mut self, col: &DVector<f64>) {
        let k = self.k();
        let m = std::mem::replace(&mut self.0, DMatrix::zeros(0, 0));
        let mut m = m.insert_column(k, 0.0);
        m.set_column(k, col);
        self.0 = m;
    }
}

/// The parameters every factor model carries: loadings, idiosyncratic
/// variances and the k x T factor matrix (one column per observation).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoreState {
    pub loadings: LoadingMatrix,
    pub idio_variances: DVector<f64>,
    pub factors: DMatrix<f64>,
}

impl CoreState {
    pub fn new(loadings: LoadingMatrix, idio_variances: DVector<f64>, factors: DMatrix<f64>) -> Result<Self> {
        let s = Self {
            loadings,
            idio_variances,
            factors,
        };
        s.check()?;
        Ok(s)
    }

    pub fn p(&self) -> usize {
        self.loadings.p()
    }

    pub fn k(&self) -> usize {
        self.loadings.k()
    }

    pub fn check(&self) -> Result<()> {
        if self.idio_variances.len() != self.loadings.p() {
            return Err(Error::dim("idiosyncratic variances length differs from p"));
        }
        if self.idio_variances.iter().any(|s| *s <= 0.0 || !s.is_finite()) {
            return Err(Error::Numeric("idiosyncratic variances must be positive".into()));
        }
        if self.factors.nrows() != self.loadings.k() {
            return Err(Error::dim(format!(
                "factor rows ({}) differ from loading columns ({})",
                self.factors.nrows(),
                self.loadings.k()
            )));
        }
        Ok(())
    }

    pub fn remove_factors(&mut self, cols: &[usize]) {
        self.loadings.remove_columns(cols);
        let f = std::mem::replace(&mut self.factors, DMatrix::zeros(0, 0));
        self.factors = f.remove_rows_at(cols);
    }

    pub fn push_factor(&mut self, loading_col: &DVector<f64>, factor_row: &DVector<f64>) {
        self.loadings.push_column(loading_col);
        let k = self.factors.nrows();
        let f = std::mem::replace(&mut self.factors, DMatrix::zeros(0, 0));
        let mut f = f.insert_row(k, 0.0);
        f.set_row(k, &factor_row.transpose());
        self.factors = f;
    }

    pub fn implied_covariance(&self) -> DMatrix<f64> {
        implied_covariance(&self.loadings, &self.idio_variances)
    }
}

/// Inverse-gamma prior `σ_i² ~ IG(shape, scale)`, shared across variables
/// unless `per_variable` overrides it.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CorePriors {
    pub shape: f64,
    pub scale: f64,
    #[serde(default)]
    pub per_variable: Option<Vec<(f64, f64)>>,
}

impl Default for CorePriors {
    fn default() -> Self {
        Self {
            shape: 1.0,
            scale: 0.3,
            per_variable: None,
        }
    }
}

impl CorePriors {
    pub fn new(shape: f64, scale: f64) -> Result<Self> {
        let p = Self {
            shape,
            scale,
            per_variable: None,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        let all = std::iter::once((self.shape, self.scale)).chain(self.per_variable.iter().flatten().copied());
        for (a, b) in all {
            if !(a > 0.0 && b > 0.0 && a.is_finite() && b.is_finite()) {
                return Err(Error::param(format!(
                    "idiosyncratic prior needs positive shape and scale, got ({a}, {b})"
                )));
            }
        }
        Ok(())
    }

    pub fn for_variable(&self, i: usize) -> (f64, f64) {
        match &self.per_variable {
            Some(v) => v[i],
            None => (self.shape, self.scale),
        }
    }
}
