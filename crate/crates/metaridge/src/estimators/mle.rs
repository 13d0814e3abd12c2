//! Gaussian negative log-likelihood of the marginal model
//! y ~ N(0, σ²I + XΩXᵀ/p) and its RGD fit. The objective is not
//! geodesically convex, so fits reach stationary points only.

use nalgebra::{Cholesky, DMatrix, Dyn};

use super::rgd::{descend, FitOptions, FitReport, SmoothObjective};
use crate::error::{check_dim, Error, Result};
use crate::model::{MetaDataset, Task};
use crate::spd::{symmetrize, SpdMatrix, SymmetricMatrix};

fn marginal_cholesky(task: &Task, omega: &DMatrix<f64>, sigma2: f64) -> Result<Cholesky<f64, Dyn>> {
    let p = task.p() as f64;
    let mut s = &task.x * omega * task.x.transpose() / p;
    for i in 0..s.nrows() {
        s[(i, i)] += sigma2;
    }
    symmetrize(&s)
        .into_matrix()
        .cholesky()
        .ok_or_else(|| Error::NotSpd("marginal covariance σ²I + XΩXᵀ/p".into()))
}

fn check(omega: &SpdMatrix, sigma2: f64, data: &MetaDataset) -> Result<()> {
    check_dim("omega dimension", data.p(), omega.dim())?;
    if !(sigma2 >= 0.0) {
        return Err(Error::InvalidInput(format!("noise variance {sigma2} < 0")));
    }
    Ok(())
}

/// ½ Σ [log det S + yᵀ S⁻¹ y] with S = σ²I + XΩXᵀ/p (constants dropped).
pub fn mle_negloglik(omega: &SpdMatrix, sigma2: f64, data: &MetaDataset) -> Result<f64> {
    check(omega, sigma2, data)?;
    let mut total = 0.0;
    for t in &data.tasks {
        let chol = marginal_cholesky(t, omega.as_matrix(), sigma2)?;
        let log_det = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        let quad = t.y.dot(&chol.solve(&t.y));
        total += 0.5 * (log_det + quad);
    }
    Ok(total)
}

/// (1/(2p)) Σ Xᵀ(S⁻¹ − S⁻¹ y yᵀ S⁻¹)X.
pub fn mle_gradient(omega: &SpdMatrix, sigma2: f64, data: &MetaDataset) -> Result<SymmetricMatrix> {
    check(omega, sigma2, data)?;
    let p = data.p();
    let mut g = DMatrix::zeros(p, p);
    for t in &data.tasks {
        let chol = marginal_cholesky(t, omega.as_matrix(), sigma2)?;
        let s_inv_x = chol.solve(&t.x);
        let w = s_inv_x.tr_mul(&t.y);
        g += t.x.tr_mul(&s_inv_x) - &w * w.transpose();
    }
    Ok(symmetrize(&(g / (2.0 * p as f64))))
}

struct Likelihood<'a> {
    data: &'a MetaDataset,
    sigma2: f64,
}

impl SmoothObjective for Likelihood<'_> {
    fn dim(&self) -> usize {
        self.data.p()
    }

    fn value(&self, omega: &SpdMatrix) -> Result<f64> {
        mle_negloglik(omega, self.sigma2, self.data)
    }

    fn gradient(&self, omega: &SpdMatrix) -> Result<SymmetricMatrix> {
        mle_gradient(omega, self.sigma2, self.data)
    }

    /// Fisher information operator Ξ ↦ (1/(2p²)) Σ K Ξ K with K = XᵀS⁻¹X.
    fn curvature_apply(&self, at: &SpdMatrix, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = self.dim();
        let mut out = DMatrix::zeros(p, p);
        for t in &self.data.tasks {
            let chol = marginal_cholesky(t, at.as_matrix(), self.sigma2)?;
            let k = t.x.tr_mul(&chol.solve(&t.x));
            out += &k * xi * &k;
        }
        Ok(out / (2.0 * (p * p) as f64))
    }
}

/// Backtracked RGD on the negative log-likelihood.
pub fn fit_mle_rgd(data: &MetaDataset, sigma2: f64, opts: &FitOptions) -> Result<FitReport> {
    check(&opts.init, sigma2, data)?;
    descend(&Likelihood { data, sigma2 }, opts, None)
}
