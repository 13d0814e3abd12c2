//! Limiting (proportional-asymptotics) predictive risk and the optimal
//! regularization rules.

use crate::error::{Error, Result};
use crate::risk::stieltjes::StieltjesEval;

/// Limiting risk from the transforms of Λ at z = −λ:
/// r = (1/D)[σ² + (λ/γ − σ²)(γλs − γλ²s′)/D] with D = λγs + 1 − γ.
pub fn limiting_risk(eval: &StieltjesEval, sigma2: f64) -> Result<f64> {
    let StieltjesEval { s, s_prime, lambda, gamma, .. } = *eval;
    let denom = lambda * gamma * s + 1.0 - gamma;
    if !(denom > 0.0) || !denom.is_finite() {
        return Err(Error::DegenerateDenominator(denom));
    }
    let slope = gamma * lambda * s - gamma * lambda * lambda * s_prime;
    Ok((sigma2 + (lambda / gamma - sigma2) * slope / denom) / denom)
}

/// Stieltjes transform m(−λ) of the Marchenko–Pastur law with scale ϱ and
/// its z-derivative m′(−λ).
pub fn mp_stieltjes(lambda: f64, gamma: f64, rho: f64) -> (f64, f64) {
    let b = rho - rho * gamma + lambda;
    let quad = rho * gamma * lambda;
    let root = (b * b + 4.0 * quad).sqrt();
    // ϱγλm² + bm − 1 = 0, positive root without cancellation
    let m = if b > 0.0 { 2.0 / (b + root) } else { (root - b) / (2.0 * quad) };
    let m_prime = m * (1.0 + rho * gamma * m) / root;
    (m, m_prime)
}

/// Closed-form limiting risk when Σ = ϱΩ⁻¹, so Λ = ϱI.
pub fn mp_law_risk(lambda: f64, gamma: f64, sigma2: f64, rho: f64) -> f64 {
    let (m, m_prime) = mp_stieltjes(lambda, gamma, rho);
    sigma2 + rho * (gamma * sigma2 * m + lambda * (lambda - gamma * sigma2) * m_prime)
}

/// The published optimal-risk expression. It equals the true optimum
/// [`optimal_risk`] only at ϱ = 1.
pub fn optimal_risk_expression(gamma: f64, sigma2: f64, rho: f64) -> f64 {
    let shift = (gamma - 1.0) / gamma;
    (1.0 - 1.0 / (2.0 * rho)) * sigma2
        + 0.5 * shift
        + 0.5 * ((sigma2 / rho - shift).powi(2) + 4.0 * sigma2 / rho).sqrt()
}

/// Minimum over λ of [`mp_law_risk`], attained at λ = γσ².
pub fn optimal_risk(gamma: f64, sigma2: f64, rho: f64) -> f64 {
    let unit = optimal_risk_expression(gamma, sigma2 / rho, 1.0);
    sigma2 + rho * (unit - sigma2 / rho)
}

pub fn optimal_lambda_asymptotic(gamma: f64, sigma2: f64) -> f64 {
    gamma * sigma2
}

/// λ = c·pσ²/n.
pub fn optimal_lambda_finite(p: usize, n: usize, sigma2: f64, c: f64) -> f64 {
    c * p as f64 * sigma2 / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::risk::stieltjes::{fixed_point_stieltjes, SpectralLaw};
    use approx::assert_relative_eq;

    #[test]
    fn hand_evaluated_point() {
        let expected = 0.75 + 0.25 + 0.5 * 7f64.sqrt();
        assert_relative_eq!(mp_law_risk(3.0, 2.0, 1.5, 1.0), expected, epsilon = 1e-12);
        assert_relative_eq!(optimal_risk_expression(2.0, 1.5, 1.0), expected, epsilon = 1e-12);
        let e = fixed_point_stieltjes(&SpectralLaw::PointMass(1.0), 2.0, 3.0, 10_000, 1e-14).unwrap();
        assert_relative_eq!(limiting_risk(&e, 1.5).unwrap(), expected, epsilon = 1e-10);
    }

    #[test]
    fn null_predictor_limit() {
        for rho in [0.5, 1.0, 2.0] {
            assert_relative_eq!(mp_law_risk(1e6, 2.0, 1.5, rho), 1.5 + rho, epsilon = 1e-4);
        }
    }

    #[test]
    fn derivative_matches_central_difference() {
        for (gamma, rho, lambda) in [(1.5, 0.5, 0.3), (2.0, 1.0, 3.0), (10.0, 2.0, 7.0)] {
            let h = 1e-5 * lambda;
            let fd = -(mp_stieltjes(lambda + h, gamma, rho).0 - mp_stieltjes(lambda - h, gamma, rho).0) / (2.0 * h);
            assert_relative_eq!(mp_stieltjes(lambda, gamma, rho).1, fd, max_relative = 1e-8);
        }
    }

    #[test]
    fn optimum_is_attained_at_product() {
        for rho in [0.5, 1.0, 2.0] {
            let at = mp_law_risk(3.0, 2.0, 1.5, rho);
            assert_relative_eq!(at, optimal_risk(2.0, 1.5, rho), epsilon = 1e-12);
            assert!(mp_law_risk(2.9, 2.0, 1.5, rho) > at && mp_law_risk(3.1, 2.0, 1.5, rho) > at);
        }
    }

    #[test]
    fn lambda_rules() {
        assert_eq!(optimal_lambda_asymptotic(2.0, 1.5), 3.0);
        assert_eq!(optimal_lambda_asymptotic(1.5, 1.0), 1.5);
        assert_relative_eq!(optimal_lambda_finite(128, 100, 1.0, 1.0), 1.28, epsilon = 1e-15);
    }
}
