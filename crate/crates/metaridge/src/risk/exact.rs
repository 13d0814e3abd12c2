//! Exact finite-sample predictive risk of generalized ridge regression,
//! conditional on the test design, plus Monte-Carlo counterparts.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spd::{spd_inv_sqrt, spd_sqrt, symmetrize, trace_of_product, SpdMatrix, SymmetricMatrix};

/// Risk split into noise, bias, variance correction and variance.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RiskBreakdown {
    pub noise: f64,
    pub bias: f64,
    pub variance_correction: f64,
    pub variance: f64,
    pub total: f64,
}

impl RiskBreakdown {
    fn new(noise: f64, bias: f64, variance_correction: f64, variance: f64) -> Self {
        Self {
            noise,
            bias,
            variance_correction,
            variance,
            total: noise + bias + variance_correction + variance,
        }
    }
}

struct Shape {
    p: usize,
}

fn check_inputs(
    sigma: &SpdMatrix,
    sigma_hat: &SymmetricMatrix,
    others: &[&SpdMatrix],
    sigma2: f64,
    lambda: f64,
    n: usize,
) -> Result<Shape> {
    let p = sigma.dim();
    check_dim("sample covariance", p, sigma_hat.dim())?;
    for m in others {
        check_dim("covariance", p, m.dim())?;
    }
    if !(lambda > 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2} < 0")));
    }
    if n == 0 {
        return Err(Error::InvalidInput("test sample size must be positive".into()));
    }
    Ok(Shape { p })
}

/// (M + λI)⁻¹ for symmetric positive semidefinite M.
fn shifted_inverse(m: &DMatrix<f64>, lambda: f64) -> Result<DMatrix<f64>> {
    let p = m.nrows();
    let shifted = symmetrize(&(m + DMatrix::identity(p, p) * lambda)).into_matrix();
    let chol = shifted
        .cholesky()
        .ok_or_else(|| Error::NotSpd("sample covariance has a negative eigenvalue below -λ".into()))?;
    Ok(symmetrize(&chol.inverse()).into_matrix())
}

fn congruence(half: &DMatrix<f64>, m: &DMatrix<f64>) -> DMatrix<f64> {
    symmetrize(&(half * m * half)).into_matrix()
}

/// Risk with the true hyper-covariance as weight, through
/// Λ = Ω^{1/2}ΣΩ^{1/2}, Λ̃ = Ω^{1/2}Σ̂Ω^{1/2} and R = (Λ̃ + λI)⁻¹:
/// bias (λ²/p)tr(ΛR²), correction −(λσ²/n)tr(ΛR²), variance (σ²/n)tr(ΛR).
pub fn oracle_risk_exact(
    omega: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma_hat: &SymmetricMatrix,
    sigma2: f64,
    lambda: f64,
    n: usize,
) -> Result<RiskBreakdown> {
    let shape = check_inputs(sigma, sigma_hat, &[omega], sigma2, lambda, n)?;
    let half = spd_sqrt(omega)?.into_matrix();
    let lam = congruence(&half, sigma.as_matrix());
    let lam_tilde = congruence(&half, sigma_hat.as_matrix());
    let r = shifted_inverse(&lam_tilde, lambda)?;
    let lr = &lam * &r;
    let t1 = lr.trace();
    let t2 = trace_of_product(&lr, &r);
    let p = shape.p as f64;
    let n = n as f64;
    Ok(RiskBreakdown::new(
        sigma2,
        lambda * lambda / p * t2,
        -lambda * sigma2 / n * t2,
        sigma2 / n * t1,
    ))
}

/// Risk of the fit weighted by `weight` when coefficients have covariance
/// `coef_cov`/p. With Λ̌ = W^{1/2}ΣW^{1/2}, Λ̂ = W^{1/2}Σ̂W^{1/2} and
/// R̂ = (Λ̂ + λI)⁻¹: bias (λ²/p)tr(Υ W^{-1/2}R̂Λ̌R̂W^{-1/2}), correction
/// −(λσ²/n)tr(Λ̌R̂²), variance (σ²/n)tr(Λ̌R̂).
pub fn plugin_risk_exact(
    coef_cov: &SpdMatrix,
    weight: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma_hat: &SymmetricMatrix,
    sigma2: f64,
    lambda: f64,
    n: usize,
) -> Result<RiskBreakdown> {
    let shape = check_inputs(sigma, sigma_hat, &[coef_cov, weight], sigma2, lambda, n)?;
    let half = spd_sqrt(weight)?.into_matrix();
    let inv_half = spd_inv_sqrt(weight)?.into_matrix();
    let lam_check = congruence(&half, sigma.as_matrix());
    let lam_hat = congruence(&half, sigma_hat.as_matrix());
    let r = shifted_inverse(&lam_hat, lambda)?;
    let k = &inv_half * &r;
    let inner = &k * &lam_check * k.transpose();
    let lr = &lam_check * &r;
    let p = shape.p as f64;
    let n = n as f64;
    let t2 = trace_of_product(&lr, &r);
    Ok(RiskBreakdown::new(
        sigma2,
        lambda * lambda / p * trace_of_product(coef_cov.as_matrix(), &inner),
        -lambda * sigma2 / n * t2,
        sigma2 / n * lr.trace(),
    ))
}

/// The same risk through B = (Σ̂ + λW⁻¹)⁻¹, which needs W⁻¹ explicitly:
/// bias (λ²/p)tr(ΥW⁻¹BΣBW⁻¹), correction −(λσ²/n)tr(ΣBW⁻¹B), variance
/// (σ²/n)tr(ΣB).
pub fn plugin_risk_inverse_form(
    coef_cov: &SpdMatrix,
    weight: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma_hat: &SymmetricMatrix,
    sigma2: f64,
    lambda: f64,
    n: usize,
) -> Result<RiskBreakdown> {
    let shape = check_inputs(sigma, sigma_hat, &[coef_cov, weight], sigma2, lambda, n)?;
    let w_inv = weight.inverse().into_matrix();
    let system = symmetrize(&(sigma_hat.as_matrix() + &w_inv * lambda)).into_matrix();
    let b = symmetrize(
        &system
            .cholesky()
            .ok_or_else(|| Error::Singular("Σ̂ + λW⁻¹ is not positive definite".into()))?
            .inverse(),
    )
    .into_matrix();
    let sb = sigma.as_matrix() * &b;
    let wb = &w_inv * &b;
    let bw = &b * &w_inv;
    let bias_inner = bw.transpose() * sigma.as_matrix() * &bw;
    let p = shape.p as f64;
    let n = n as f64;
    let t2 = trace_of_product(&sb, &wb);
    Ok(RiskBreakdown::new(
        sigma2,
        lambda * lambda / p * trace_of_product(coef_cov.as_matrix(), &bias_inner),
        -lambda * sigma2 / n * t2,
        sigma2 / n * sb.trace(),
    ))
}

/// Gradient of the plug-in risk with respect to the inverse weight
/// P = Q⁻¹ in half-vectorized coordinates: 2λ[M + Mᵀ − diag(M)] with
/// M = B Σ B (λ/p·PΩ − σ²/n·I) Σ̂ B and B = (Σ̂ + λP)⁻¹.
pub fn risk_weight_gradient(
    coef_cov: &SpdMatrix,
    weight: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma_hat: &SymmetricMatrix,
    sigma2: f64,
    lambda: f64,
    n: usize,
) -> Result<SymmetricMatrix> {
    let shape = check_inputs(sigma, sigma_hat, &[coef_cov, weight], sigma2, lambda, n)?;
    let p = shape.p;
    let p_mat = weight.inverse().into_matrix();
    let system = symmetrize(&(sigma_hat.as_matrix() + &p_mat * lambda)).into_matrix();
    let b = system
        .cholesky()
        .ok_or_else(|| Error::Singular("Σ̂ + λQ⁻¹ is not positive definite".into()))?
        .inverse();
    let mut middle = &p_mat * coef_cov.as_matrix() * (lambda / p as f64);
    for i in 0..p {
        middle[(i, i)] -= sigma2 / n as f64;
    }
    let m = &b * sigma.as_matrix() * &b * middle * sigma_hat.as_matrix() * &b;
    let mut g = &m + m.transpose();
    for i in 0..p {
        g[(i, i)] -= m[(i, i)];
    }
    SymmetricMatrix::new(g * (2.0 * lambda))
}

/// σ² + (β̄ − β̂)ᵀΣ(β̄ − β̂).
pub fn conditional_risk(beta_hat: &DVector<f64>, beta_true: &DVector<f64>, sigma: &SpdMatrix, sigma2: f64) -> Result<f64> {
    check_dim("estimate length", sigma.dim(), beta_hat.len())?;
    check_dim("coefficient length", sigma.dim(), beta_true.len())?;
    let d = beta_true - beta_hat;
    Ok(sigma2 + d.dot(&(sigma.as_matrix() * &d)))
}

/// Monte-Carlo mean squared prediction error with its standard error.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EmpiricalRisk {
    pub mean: f64,
    pub std_error: f64,
}

/// Mean of (xᵀβ̂ − y)² over `m_test` fresh draws x ~ N(0, Σ),
/// y = xᵀβ̄ + ε.
pub fn empirical_risk<R: Rng + ?Sized>(
    beta_hat: &DVector<f64>,
    beta_true: &DVector<f64>,
    sigma: &SpdMatrix,
    sigma2: f64,
    m_test: usize,
    rng: &mut R,
) -> Result<f64> {
    Ok(empirical_risk_with_error(beta_hat, beta_true, sigma, sigma2, m_test, rng)?.mean)
}

pub fn empirical_risk_with_error<R: Rng + ?Sized>(
    beta_hat: &DVector<f64>,
    beta_true: &DVector<f64>,
    sigma: &SpdMatrix,
    sigma2: f64,
    m_test: usize,
    rng: &mut R,
) -> Result<EmpiricalRisk> {
    check_dim("estimate length", sigma.dim(), beta_hat.len())?;
    check_dim("coefficient length", sigma.dim(), beta_true.len())?;
    if m_test == 0 {
        return Err(Error::InvalidInput("m_test must be positive".into()));
    }
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2} < 0")));
    }
    let half = spd_sqrt(sigma)?.into_matrix();
    let p = sigma.dim();
    let sd = sigma2.sqrt();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut g = DVector::zeros(p);
    for _ in 0..m_test {
        for v in g.iter_mut() {
            *v = rng.sample(StandardNormal);
        }
        let x = &half * &g;
        let noise: f64 = rng.sample(StandardNormal);
        let y = x.dot(beta_true) + sd * noise;
        let e = x.dot(beta_hat) - y;
        let e2 = e * e;
        sum += e2;
        sum_sq += e2 * e2;
    }
    let m = m_test as f64;
    let mean = sum / m;
    let var = if m_test > 1 { (sum_sq - m * mean * mean).max(0.0) / (m - 1.0) } else { 0.0 };
    Ok(EmpiricalRisk { mean, std_error: (var / m).sqrt() })
}
