//! Generalized ridge regression β = (XᵀX + nλA⁻¹)⁻¹Xᵀy.

use nalgebra::{DMatrix, DVector};

use crate::error::{check_dim, Error, Result};
use crate::spd::SpdMatrix;

#[derive(Clone, Debug, PartialEq)]
pub struct RidgeFit {
    pub beta: DVector<f64>,
    pub lambda: f64,
    pub weight_label: String,
}

/// Minimizes (1/n)‖y − Xβ‖² + λ βᵀA⁻¹β.
pub fn generalized_ridge(x: &DMatrix<f64>, y: &DVector<f64>, lambda: f64, weight: &SpdMatrix) -> Result<RidgeFit> {
    generalized_ridge_labeled(x, y, lambda, weight, "A")
}

pub fn generalized_ridge_labeled(
    x: &DMatrix<f64>,
    y: &DVector<f64>,
    lambda: f64,
    weight: &SpdMatrix,
    label: &str,
) -> Result<RidgeFit> {
    check_dim("response length", x.nrows(), y.len())?;
    check_dim("weight dimension", x.ncols(), weight.dim())?;
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::NonPositiveLambda(lambda));
    }
    let n = x.nrows() as f64;
    let mut system = x.tr_mul(x);
    if lambda > 0.0 {
        system += weight.inverse().into_matrix() * (n * lambda);
    }
    let rhs = x.tr_mul(y);
    let chol = system
        .clone()
        .cholesky()
        .ok_or_else(|| Error::Singular("XᵀX + nλA⁻¹ is not positive definite".into()))?;
    let mut beta = chol.solve(&rhs);
    let correction = chol.solve(&(&rhs - &system * &beta));
    beta += correction;
    // normwise backward error, so a weight near the cone boundary is not
    // mistaken for a singular system
    let resid = (&system * &beta - &rhs).norm();
    let scale = system.norm() * beta.norm() + rhs.norm();
    if !(resid <= 1e-10 * scale) && rhs.norm() > 0.0 {
        return Err(Error::Singular(format!("ridge system residual {resid:e}")));
    }
    Ok(RidgeFit { beta, lambda, weight_label: label.to_string() })
}
