//! Special functions, Beta fitting and the Beta-prior distribution.

pub mod beta;
pub mod beta_prior;
pub mod quadrature;
pub mod special;

pub use beta::{beta_log_pdf, log_beta_fn, log_time_pair, solve_beta_from_logstats, solve_beta_with_slack, BetaParams, FEAS_EPS};
pub use beta_prior::{
    beta_prior_moments, check_beta_prior_integrable, laplace, rho_regularized, BetaPriorMoments, BetaPriorParams,
    BetaPriorPosterior, LaplaceResult, MomentMethod, TimeSuffStats,
};
pub use special::{digamma, inv_digamma, ln_gamma, log_sum_exp, trigamma};
