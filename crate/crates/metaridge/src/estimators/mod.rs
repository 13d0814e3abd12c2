//! Ridge fits and hyper-covariance estimators.

pub mod correlation;
pub mod dicker;
pub mod gradcheck;
pub mod l1;
pub mod mle;
pub mod mom;
pub mod rgd;
pub mod ridge;

pub use correlation::{
    diag_weight, fit_correlation_fullrank, fit_correlation_split, left_inverse_apply, CorrelationFit,
};
pub use dicker::{dicker_sigma2, DickerEstimate};
pub use gradcheck::{max_fd_error, mle_gradcheck, mom_gradcheck, random_directions};
pub use l1::{fit_l1_prox_rgd, fit_l1_prox_rgd_with, l1_objective, l1_penalty};
pub use mle::{fit_mle_rgd, mle_gradient, mle_negloglik};
pub use mom::{
    fit_mom_rgd, fit_mom_rgd_with, mom_gradient, mom_gradient_moments, mom_objective, mom_objective_moments,
    MomOperator,
};
pub use rgd::{offdiag_l1, soft_threshold, FitOptions, FitReport, MAX_HALVINGS};
pub use ridge::{generalized_ridge, generalized_ridge_labeled, RidgeFit};
