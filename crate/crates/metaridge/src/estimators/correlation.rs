//! Two-stage correlation estimators Ω̂ = Ŵ^{1/2} Θ̂ Ŵ^{1/2}: a diagonal scale
//! from full-rank noiseless tasks and a sparse unit-diagonal correlation.

use nalgebra::{DMatrix, DVector};

use super::mom::MomOperator;
use super::rgd::{descend, project_floor, soft_threshold, FitOptions, ProxSpec};
use crate::error::{check_dim, Error, Result};
use crate::model::{MetaDataset, Task};
use crate::spd::{symmetrize, SpdMatrix};

/// Result of a correlation-based fit.
#[derive(Clone, Debug)]
pub struct CorrelationFit {
    pub omega_hat: SpdMatrix,
    pub theta_hat: SpdMatrix,
    pub weight: SpdMatrix,
}

/// z = (XᵀX)⁻¹Xᵀy.
pub fn left_inverse_apply(x: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("response length", x.nrows(), y.len())?;
    if x.nrows() < x.ncols() {
        return Err(Error::Singular(format!("n = {} < p = {}", x.nrows(), x.ncols())));
    }
    let chol = x
        .tr_mul(x)
        .cholesky()
        .ok_or_else(|| Error::Singular("design is rank deficient".into()))?;
    Ok(chol.solve(&x.tr_mul(y)))
}

fn left_inverses(tasks: &[Task]) -> Result<Vec<DVector<f64>>> {
    if tasks.is_empty() {
        return Err(Error::InvalidInput("no full-rank tasks".into()));
    }
    tasks.iter().map(|t| left_inverse_apply(&t.x, &t.y)).collect()
}

fn weight_from(zs: &[DVector<f64>]) -> Result<SpdMatrix> {
    let p = zs[0].len();
    let scale = p as f64 / zs.len() as f64;
    let diag: Vec<f64> = (0..p).map(|i| scale * zs.iter().map(|z| z[i] * z[i]).sum::<f64>()).collect();
    if let Some(bad) = diag.iter().position(|&w| !(w > 0.0)) {
        return Err(Error::NotSpd(format!("diagonal weight entry {bad} is {}", diag[bad])));
    }
    SpdMatrix::from_diagonal(&diag)
}

/// Ŵ_ii = [(p/L₀) Σ z zᵀ]_ii.
pub fn diag_weight(tasks: &[Task]) -> Result<SpdMatrix> {
    weight_from(&left_inverses(tasks)?)
}

/// (p/L) Σ Ŵ^{-1/2} z zᵀ Ŵ^{-1/2}; its diagonal is exactly one.
fn normalized_moment(zs: &[DVector<f64>], weight: &SpdMatrix) -> DMatrix<f64> {
    let p = weight.dim();
    let inv_half: Vec<f64> = (0..p).map(|i| 1.0 / weight.as_matrix()[(i, i)].sqrt()).collect();
    let mut acc = DMatrix::zeros(p, p);
    for z in zs {
        let u = DVector::from_fn(p, |i, _| z[i] * inv_half[i]);
        acc += &u * u.transpose();
    }
    acc * (p as f64 / zs.len() as f64)
}

fn recombine(weight: &SpdMatrix, theta: &SpdMatrix) -> Result<SpdMatrix> {
    let p = weight.dim();
    let half: Vec<f64> = (0..p).map(|i| weight.as_matrix()[(i, i)].sqrt()).collect();
    let m = DMatrix::from_fn(p, p, |i, j| half[i] * theta.as_matrix()[(i, j)] * half[j]);
    SpdMatrix::new(symmetrize(&m).into_matrix())
}

/// Closed-form estimator when every task is full rank and noiseless:
/// Θ̂_ij = soft(p·M̄_ij, λ̃p²/2) off the diagonal, Θ̂_ii = 1, followed by an
/// eigenvalue floor if the thresholded matrix is not positive definite.
pub fn fit_correlation_fullrank(tasks: &[Task], lambda_tilde: f64, eig_floor: f64) -> Result<CorrelationFit> {
    if !(lambda_tilde >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_tilde must be >= 0, got {lambda_tilde}")));
    }
    let zs = left_inverses(tasks)?;
    let weight = weight_from(&zs)?;
    let p = weight.dim();
    let moment = normalized_moment(&zs, &weight);
    let threshold = lambda_tilde * (p * p) as f64 / 2.0;
    let raw = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else {
            soft_threshold(moment[(i, j)], threshold)
        }
    });
    let theta = project_floor(&raw, eig_floor, true)?;
    let omega_hat = recombine(&weight, &theta)?;
    Ok(CorrelationFit { omega_hat, theta_hat: theta, weight })
}

/// Split estimator: Ŵ from the first `full_rank_count` tasks, Θ̂ by
/// proximal RGD on the design-weighted moment objective of the rest,
/// constrained to unit diagonal.
pub fn fit_correlation_split(
    data: &MetaDataset,
    full_rank_count: usize,
    lambda_tilde: f64,
    opts: &FitOptions,
) -> Result<CorrelationFit> {
    if full_rank_count == 0 || full_rank_count >= data.len() {
        return Err(Error::InvalidInput(format!(
            "split needs 0 < L0 < L, got L0 = {full_rank_count}, L = {}",
            data.len()
        )));
    }
    if !(lambda_tilde >= 0.0) {
        return Err(Error::InvalidInput(format!("lambda_tilde must be >= 0, got {lambda_tilde}")));
    }
    let (head, tail) = data.tasks.split_at(full_rank_count);
    let weight = diag_weight(head)?;
    let p = weight.dim();
    let half: Vec<f64> = (0..p).map(|i| weight.as_matrix()[(i, i)].sqrt()).collect();
    let scaled: Vec<Task> = tail
        .iter()
        .map(|t| {
            let mut x = t.x.clone();
            for (j, h) in half.iter().enumerate() {
                x.column_mut(j).scale_mut(*h);
            }
            Task { x, y: t.y.clone(), beta_true: None }
        })
        .collect();
    let scaled = MetaDataset::new(scaled, None, 0.0)?;
    let op = MomOperator::from_dataset(&scaled)?;
    let prox = ProxSpec { lambda_tilde, unit_diagonal: true, eig_floor: opts.eig_floor };
    let report = descend(&op, opts, Some(prox))?;
    let theta = report.omega_hat;
    let omega_hat = recombine(&weight, &theta)?;
    Ok(CorrelationFit { omega_hat, theta_hat: theta, weight })
}
