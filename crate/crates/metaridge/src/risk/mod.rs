//! Finite-sample, Monte Carlo and limiting predictive risk.

pub mod exact;
pub mod limit;
pub mod stieltjes;

pub use exact::{
    conditional_risk, empirical_risk, empirical_risk_with_error, oracle_risk_exact, plugin_risk_exact,
    plugin_risk_inverse_form, risk_weight_gradient, EmpiricalRisk, RiskBreakdown,
};
pub use limit::{
    limiting_risk, mp_law_risk, mp_stieltjes, optimal_lambda_asymptotic, optimal_lambda_finite, optimal_risk,
    optimal_risk_expression,
};
pub use stieltjes::{
    fixed_point_stieltjes, integrate, silverstein_convert, silverstein_inverse, stieltjes_from_eigs, SpectralLaw,
    StieltjesEval,
};
