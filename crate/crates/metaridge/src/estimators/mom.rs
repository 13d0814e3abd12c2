//! Method-of-moments objective f(Ω) = (1/L) Σ ‖y yᵀ − XΩXᵀ/p − σ²I‖²_F and
//! its gradient, plus a precomputed quadratic-form operator used for fitting.

use nalgebra::{DMatrix, DVector};

use super::rgd::{descend, power_iteration, FitOptions, FitReport, SmoothObjective};
use crate::error::{check_dim, Error, Result};
use crate::model::MetaDataset;
use crate::spd::{frobenius_inner, symmetrize, SpdMatrix, SymmetricMatrix};

/// Largest p for which the dense half-vectorized operator is built.
const DENSE_OPERATOR_MAX_P: usize = 64;

fn residual(x: &DMatrix<f64>, moment: &DMatrix<f64>, omega: &DMatrix<f64>, sigma2: f64) -> DMatrix<f64> {
    let p = x.ncols() as f64;
    let mut r = moment - x * omega * x.transpose() / p;
    for i in 0..r.nrows() {
        r[(i, i)] -= sigma2;
    }
    r
}

fn check_moments(p: usize, designs: &[DMatrix<f64>], moments: &[DMatrix<f64>]) -> Result<()> {
    if designs.is_empty() {
        return Err(Error::InvalidInput("no tasks".into()));
    }
    check_dim("moment count", designs.len(), moments.len())?;
    for (x, m) in designs.iter().zip(moments) {
        check_dim("design columns", p, x.ncols())?;
        check_dim("moment rows", x.nrows(), m.nrows())?;
        check_dim("moment columns", x.nrows(), m.ncols())?;
    }
    Ok(())
}

fn outer_moments(data: &MetaDataset) -> (Vec<DMatrix<f64>>, Vec<DMatrix<f64>>) {
    let designs = data.tasks.iter().map(|t| t.x.clone()).collect();
    let moments = data.tasks.iter().map(|t| &t.y * t.y.transpose()).collect();
    (designs, moments)
}

/// Objective with explicit per-task second-moment matrices in place of y yᵀ.
pub fn mom_objective_moments(
    omega: &SpdMatrix,
    designs: &[DMatrix<f64>],
    moments: &[DMatrix<f64>],
    sigma2: f64,
) -> Result<f64> {
    check_moments(omega.dim(), designs, moments)?;
    let total: f64 = designs
        .iter()
        .zip(moments)
        .map(|(x, m)| residual(x, m, omega.as_matrix(), sigma2).norm_squared())
        .sum();
    Ok(total / designs.len() as f64)
}

/// Gradient with explicit per-task second-moment matrices.
pub fn mom_gradient_moments(
    omega: &SpdMatrix,
    designs: &[DMatrix<f64>],
    moments: &[DMatrix<f64>],
    sigma2: f64,
) -> Result<SymmetricMatrix> {
    let p = omega.dim();
    check_moments(p, designs, moments)?;
    let mut g = DMatrix::zeros(p, p);
    for (x, m) in designs.iter().zip(moments) {
        let r = residual(x, m, omega.as_matrix(), sigma2);
        g += x.transpose() * r * x;
    }
    let scale = -2.0 / (p as f64 * designs.len() as f64);
    Ok(symmetrize(&(g * scale)))
}

/// f(Ω) evaluated task by task.
pub fn mom_objective(omega: &SpdMatrix, data: &MetaDataset) -> Result<f64> {
    let (designs, moments) = outer_moments(data);
    mom_objective_moments(omega, &designs, &moments, data.sigma2)
}

/// Frobenius gradient −(2/(pL)) Σ Xᵀ(y yᵀ − XΩXᵀ/p − σ²I)X.
pub fn mom_gradient(omega: &SpdMatrix, data: &MetaDataset) -> Result<SymmetricMatrix> {
    let (designs, moments) = outer_moments(data);
    mom_gradient_moments(omega, &designs, &moments, data.sigma2)
}

#[derive(Clone, Debug)]
enum Quadratic {
    /// Half-vectorized coefficients T[(ij),(kl)] = mean(S_ik S_jl + S_il S_jk).
    Dense { pairs: Vec<(usize, usize)>, coeffs: DMatrix<f64> },
    /// Per-task Gram matrices S = XᵀX.
    Grams(Vec<DMatrix<f64>>),
}

/// The objective written as c − (2/p)⟨Ω, B⟩ + (1/p²)⟨Ω, 𝓗(Ω)⟩ with
/// 𝓗(Ω) = (1/L) Σ SΩS precomputed once.
#[derive(Clone, Debug)]
pub struct MomOperator {
    p: usize,
    constant: f64,
    linear: DMatrix<f64>,
    quadratic: Quadratic,
}

fn pair_index(p: usize) -> (Vec<(usize, usize)>, DMatrix<usize>) {
    let mut pairs = Vec::with_capacity(p * (p + 1) / 2);
    let mut index = DMatrix::zeros(p, p);
    for i in 0..p {
        for j in i..p {
            index[(i, j)] = pairs.len();
            index[(j, i)] = pairs.len();
            pairs.push((i, j));
        }
    }
    (pairs, index)
}

impl MomOperator {
    pub fn from_dataset(data: &MetaDataset) -> Result<Self> {
        let p = data.p();
        let count = data.len() as f64;
        let sigma2 = data.sigma2;
        let mut constant = 0.0;
        let mut linear = DMatrix::zeros(p, p);
        let mut grams = Vec::with_capacity(data.len());
        for t in &data.tasks {
            let gram = t.x.tr_mul(&t.x);
            let u: DVector<f64> = t.x.tr_mul(&t.y);
            let yy = t.y.norm_squared();
            constant += yy * yy - 2.0 * sigma2 * yy + t.n() as f64 * sigma2 * sigma2;
            linear += &u * u.transpose() - &gram * sigma2;
            grams.push(gram);
        }
        Ok(Self::assemble(p, constant / count, linear / count, grams))
    }

    pub fn from_moments(designs: &[DMatrix<f64>], moments: &[DMatrix<f64>], sigma2: f64) -> Result<Self> {
        let p = designs
            .first()
            .map(|x| x.ncols())
            .ok_or_else(|| Error::InvalidInput("no tasks".into()))?;
        check_moments(p, designs, moments)?;
        let count = designs.len() as f64;
        let mut constant = 0.0;
        let mut linear = DMatrix::zeros(p, p);
        let mut grams = Vec::with_capacity(designs.len());
        for (x, m) in designs.iter().zip(moments) {
            let mut centered = m.clone();
            for i in 0..centered.nrows() {
                centered[(i, i)] -= sigma2;
            }
            constant += centered.norm_squared();
            linear += x.transpose() * &centered * x;
            grams.push(x.tr_mul(x));
        }
        Ok(Self::assemble(p, constant / count, linear / count, grams))
    }

    fn assemble(p: usize, constant: f64, linear: DMatrix<f64>, grams: Vec<DMatrix<f64>>) -> Self {
        let linear = symmetrize(&linear).into_matrix();
        let quadratic = if p <= DENSE_OPERATOR_MAX_P {
            let (pairs, index) = pair_index(p);
            let d = pairs.len();
            let count = grams.len() as f64;
            let rows = DMatrix::from_fn(grams.len(), d, |l, a| {
                let (i, j) = pairs[a];
                grams[l][(i, j)]
            });
            let second = rows.tr_mul(&rows) / count;
            let coeffs = DMatrix::from_fn(d, d, |a, b| {
                let (i, j) = pairs[a];
                let (k, l) = pairs[b];
                second[(index[(i, k)], index[(j, l)])] + second[(index[(i, l)], index[(j, k)])]
            });
            Quadratic::Dense { pairs, coeffs }
        } else {
            Quadratic::Grams(grams)
        };
        Self { p, constant, linear, quadratic }
    }

    pub fn dim(&self) -> usize {
        self.p
    }

    /// 𝓗(Ξ) = (1/L) Σ S Ξ S.
    pub fn hessian_apply(&self, xi: &DMatrix<f64>) -> DMatrix<f64> {
        match &self.quadratic {
            Quadratic::Dense { pairs, coeffs } => {
                let theta = DVector::from_iterator(
                    pairs.len(),
                    pairs.iter().map(|&(k, l)| if k == l { 0.5 * xi[(k, k)] } else { 0.5 * (xi[(k, l)] + xi[(l, k)]) }),
                );
                let h = coeffs * theta;
                let mut out = DMatrix::zeros(self.p, self.p);
                for (a, &(i, j)) in pairs.iter().enumerate() {
                    out[(i, j)] = h[a];
                    out[(j, i)] = h[a];
                }
                out
            }
            Quadratic::Grams(grams) => {
                let mut out = DMatrix::zeros(self.p, self.p);
                for s in grams {
                    out += s * xi * s;
                }
                out / grams.len() as f64
            }
        }
    }

    pub fn objective(&self, omega: &DMatrix<f64>) -> f64 {
        let p = self.p as f64;
        let h = self.hessian_apply(omega);
        self.constant - 2.0 / p * frobenius_inner(omega, &self.linear) + frobenius_inner(omega, &h) / (p * p)
    }

    pub fn gradient(&self, omega: &DMatrix<f64>) -> DMatrix<f64> {
        let p = self.p as f64;
        let h = self.hessian_apply(omega);
        symmetrize(&(h * (2.0 / (p * p)) - &self.linear * (2.0 / p))).into_matrix()
    }

    /// f(Ω + Δ) − f(Ω) = ⟨∇f(Ω), Δ⟩ + (1/p²)⟨Δ, 𝓗Δ⟩, free of cancellation.
    pub fn difference(&self, omega: &DMatrix<f64>, delta: &DMatrix<f64>) -> f64 {
        let p = self.p as f64;
        let g = self.gradient(omega);
        frobenius_inner(&g, delta) + frobenius_inner(delta, &self.hessian_apply(delta)) / (p * p)
    }

    /// Smoothness constant (2/p²)‖𝓗‖ estimated by power iteration.
    pub fn smooth_bound(&self) -> f64 {
        let p = self.p as f64;
        let rho = power_iteration(self.p, |xi| Ok(self.hessian_apply(xi))).unwrap_or(0.0);
        2.0 * rho / (p * p)
    }
}

impl SmoothObjective for MomOperator {
    fn dim(&self) -> usize {
        self.p
    }

    fn value(&self, omega: &SpdMatrix) -> Result<f64> {
        Ok(self.objective(omega.as_matrix()))
    }

    fn gradient(&self, omega: &SpdMatrix) -> Result<SymmetricMatrix> {
        SymmetricMatrix::new(MomOperator::gradient(self, omega.as_matrix()))
    }

    fn difference(&self, omega: &SpdMatrix, cand: &SpdMatrix, _f: f64, _fc: f64) -> f64 {
        let delta = cand.as_matrix() - omega.as_matrix();
        MomOperator::difference(self, omega.as_matrix(), &delta)
    }

    fn curvature_apply(&self, _at: &SpdMatrix, xi: &DMatrix<f64>) -> Result<DMatrix<f64>> {
        let p = self.p as f64;
        Ok(self.hessian_apply(xi) * (2.0 / (p * p)))
    }
}

/// Backtracked RGD on the method-of-moments objective.
pub fn fit_mom_rgd(data: &MetaDataset, opts: &FitOptions) -> Result<FitReport> {
    let op = MomOperator::from_dataset(data)?;
    fit_mom_rgd_with(&op, opts)
}

/// Same as [`fit_mom_rgd`] with a prebuilt operator.
pub fn fit_mom_rgd_with(op: &MomOperator, opts: &FitOptions) -> Result<FitReport> {
    descend(op, opts, None)
}
