//! Off-diagonal L1-penalized method of moments, fitted by proximal RGD.

use super::mom::{mom_objective, MomOperator};
use super::rgd::{descend, offdiag_l1, FitOptions, FitReport, ProxSpec};
use crate::error::{Error, Result};
use crate::model::MetaDataset;
use crate::spd::SpdMatrix;

/// λ̃ Σ_{i≠j} |Ω_ij| over ordered pairs.
pub fn l1_penalty(omega: &SpdMatrix, lambda_tilde: f64) -> f64 {
    lambda_tilde * offdiag_l1(omega.as_matrix())
}

/// h(Ω) = f(Ω) + λ̃ Σ_{i≠j} |Ω_ij|.
pub fn l1_objective(omega: &SpdMatrix, data: &MetaDataset, lambda_tilde: f64) -> Result<f64> {
    if !(lambda_tilde >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_tilde must be >= 0, got {lambda_tilde}")));
    }
    Ok(mom_objective(omega, data)? + l1_penalty(omega, lambda_tilde))
}

/// Proximal RGD: a Euclidean gradient step, soft-thresholding of the
/// off-diagonal entries, then the second-order retraction from the current
/// iterate; steps are halved until h decreases sufficiently.
pub fn fit_l1_prox_rgd(data: &MetaDataset, opts: &FitOptions) -> Result<FitReport> {
    let op = MomOperator::from_dataset(data)?;
    fit_l1_prox_rgd_with(&op, opts)
}

pub fn fit_l1_prox_rgd_with(op: &MomOperator, opts: &FitOptions) -> Result<FitReport> {
    if !(opts.lambda_tilde >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_tilde must be >= 0, got {}", opts.lambda_tilde)));
    }
    let prox = ProxSpec {
        lambda_tilde: opts.lambda_tilde,
        unit_diagonal: false,
        eig_floor: opts.eig_floor,
    };
    descend(op, opts, Some(prox))
}
