//! Moment-based noise-variance estimate from a single task.

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::error::{check_dim, Result};
use crate::spd::SpdMatrix;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct DickerEstimate {
    /// The raw estimate, which can be negative in small samples.
    pub sigma2: f64,
    /// Set when the raw estimate is negative.
    pub negative: bool,
}

impl DickerEstimate {
    /// The estimate clamped at zero.
    pub fn clamped(&self) -> f64 {
        self.sigma2.max(0.0)
    }
}

/// σ̂² = ((p+n+1)/(n(n+1)))‖y‖² − (1/(n(n+1)))‖Σ̂^{-1/2}Xᵀy‖².
pub fn dicker_sigma2(x: &DMatrix<f64>, y: &DVector<f64>, sigma_hat: &SpdMatrix) -> Result<DickerEstimate> {
    check_dim("response length", x.nrows(), y.len())?;
    check_dim("covariance dimension", x.ncols(), sigma_hat.dim())?;
    let n = x.nrows() as f64;
    let p = x.ncols() as f64;
    let u = x.tr_mul(y);
    let whitened = u.dot(&sigma_hat.cholesky().solve(&u));
    let denom = n * (n + 1.0);
    let sigma2 = (p + n + 1.0) / denom * y.norm_squared() - whitened / denom;
    Ok(DickerEstimate { sigma2, negative: sigma2 < 0.0 })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hand_values() {
        let x = DMatrix::from_element(1, 1, 0.0);
        let y = DVector::from_element(1, 1.0);
        let est = dicker_sigma2(&x, &y, &SpdMatrix::identity(1)).unwrap();
        assert!((est.sigma2 - 1.5).abs() < 1e-15);
        let zero = dicker_sigma2(&DMatrix::from_element(3, 2, 1.0), &DVector::zeros(3), &SpdMatrix::identity(2)).unwrap();
        assert_eq!(zero.sigma2, 0.0);
        assert!(!zero.negative);
    }
}
