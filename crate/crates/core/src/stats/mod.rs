//! Log densities, seeded draws and the Gaussian posterior kernel shared by
//! every sampler. All probability arithmetic that can underflow is done in
//! log space here.

mod dist;
mod linalg;

pub(crate) use linalg::factorize as linalg_factorize;

pub use dist::{
    ln_gamma, log_sum_exp, normalize_log_weights, sample_beta, sample_categorical_log, sample_gamma, sample_inv_gamma,
    sample_normal, sample_poisson, sample_std_normal, sample_uniform, BetaParams, DistSpec, Draw, GammaParams,
    NormalParams,
};
pub use linalg::{cholesky_solve_posterior, min_eigenvalue, sample_mvn_precision, GaussianParams};
