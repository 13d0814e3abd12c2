//! Covariance families and task sampling for the random-effects model
//! y = Xβ + ε with Var(β) = Ω/p.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_chacha::ChaCha20Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, Error, Result};
use crate::spd::{spd_sqrt, spectral_map, symmetrize, SpdMatrix, SymmetricMatrix};

/// Hyper-covariance family.
#[derive(Clone, Debug, PartialEq)]
pub enum OmegaSpec {
    Tridiagonal { a: f64, b: f64 },
    Identity,
    PowerLawEigen { exponent: f64, basis_seed: u64 },
    Explicit(SpdMatrix),
}

/// Design covariance family; the scaled and power variants are defined
/// relative to Ω.
#[derive(Clone, Debug, PartialEq)]
pub enum SigmaSpec {
    Identity,
    ScaledInverseOmega { rho: f64 },
    PowerOfOmega { kappa: f64 },
    BlockDiag { c: f64, d: f64 },
    Explicit(SpdMatrix),
}

/// Law of the iid entries of the standardized design Z.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum EntryLaw {
    #[default]
    Gaussian,
    /// ±1 with equal probability (unit variance).
    Rademacher,
}

impl EntryLaw {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            EntryLaw::Gaussian => rng.sample(StandardNormal),
            EntryLaw::Rademacher => {
                if rng.gen::<bool>() {
                    1.0
                } else {
                    -1.0
                }
            }
        }
    }
}

/// One regression task.
#[derive(Clone, Debug, PartialEq)]
pub struct Task {
    pub x: DMatrix<f64>,
    pub y: DVector<f64>,
    pub beta_true: Option<DVector<f64>>,
}

impl Task {
    pub fn new(x: DMatrix<f64>, y: DVector<f64>, beta_true: Option<DVector<f64>>) -> Result<Self> {
        if x.nrows() == 0 || x.ncols() == 0 {
            return Err(Error::InvalidInput("task needs n >= 1 and p >= 1".into()));
        }
        check_dim("response length", x.nrows(), y.len())?;
        if let Some(b) = &beta_true {
            check_dim("coefficient length", x.ncols(), b.len())?;
        }
        Ok(Self { x, y, beta_true })
    }

    pub fn n(&self) -> usize {
        self.x.nrows()
    }

    pub fn p(&self) -> usize {
        self.x.ncols()
    }
}

/// A collection of training tasks sharing Ω and σ².
#[derive(Clone, Debug, PartialEq)]
pub struct MetaDataset {
    pub tasks: Vec<Task>,
    pub omega_true: Option<SpdMatrix>,
    pub sigma2: f64,
}

impl MetaDataset {
    pub fn new(tasks: Vec<Task>, omega_true: Option<SpdMatrix>, sigma2: f64) -> Result<Self> {
        let p = tasks
            .first()
            .map(Task::p)
            .ok_or_else(|| Error::InvalidInput("dataset has no tasks".into()))?;
        for t in &tasks {
            check_dim("task dimension", p, t.p())?;
        }
        if let Some(o) = &omega_true {
            check_dim("omega dimension", p, o.dim())?;
        }
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidInput(format!("noise variance {sigma2} < 0")));
        }
        Ok(Self { tasks, omega_true, sigma2 })
    }

    pub fn p(&self) -> usize {
        self.tasks[0].p()
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }
}

/// Tridiagonal matrix with `a` on the diagonal and `b` beside it.
pub fn build_tridiagonal(p: usize, a: f64, b: f64) -> Result<SpdMatrix> {
    if p == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if a <= 2.0 * b.abs() {
        return Err(Error::NotSpd(format!("tridiagonal needs a > 2|b|, got a={a}, b={b}")));
    }
    let m = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            a
        } else if i.abs_diff(j) == 1 {
            b
        } else {
            0.0
        }
    });
    SpdMatrix::new(m)
}

/// Eigenvalues a + 2b·cos(kπ/(p+1)), k = 1..p, of the tridiagonal matrix.
pub fn tridiagonal_spectrum(p: usize, a: f64, b: f64) -> Vec<f64> {
    (1..=p)
        .map(|k| a + 2.0 * b * (k as f64 * std::f64::consts::PI / (p as f64 + 1.0)).cos())
        .collect()
}

/// Haar-distributed orthogonal matrix from the QR factorization of a
/// Gaussian matrix, with the sign of R's diagonal folded into Q.
pub fn haar_orthogonal<R: Rng + ?Sized>(p: usize, rng: &mut R) -> DMatrix<f64> {
    let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

/// SPD matrix with eigenvalues j^{-exponent} in a seeded random basis.
pub fn build_power_law(p: usize, exponent: f64, basis_seed: u64) -> Result<SpdMatrix> {
    if p == 0 {
        return Err(Error::InvalidInput("dimension must be positive".into()));
    }
    if !(exponent >= 0.0) {
        return Err(Error::InvalidInput(format!("power-law exponent {exponent} < 0")));
    }
    let mut rng = ChaCha20Rng::seed_from_u64(basis_seed);
    let basis = haar_orthogonal(p, &mut rng);
    let mut scaled = basis.clone();
    for j in 0..p {
        let lam = ((j + 1) as f64).powf(-exponent);
        scaled.column_mut(j).scale_mut(lam);
    }
    SpdMatrix::new(symmetrize(&(scaled * basis.transpose())).into_matrix())
}

/// Q·diag(u)·Qᵀ with Haar Q and eigenvalues u uniform on [lo, hi].
pub fn random_spd<R: Rng + ?Sized>(p: usize, lo: f64, hi: f64, rng: &mut R) -> Result<SpdMatrix> {
    if !(lo > 0.0 && hi >= lo) {
        return Err(Error::InvalidInput(format!("eigenvalue range [{lo}, {hi}] is not positive")));
    }
    let q = haar_orthogonal(p, rng);
    let eigs = DVector::from_fn(p, |_, _| rng.gen_range(lo..=hi));
    let scaled = &q * DMatrix::from_diagonal(&eigs);
    SpdMatrix::new(symmetrize(&(scaled * q.transpose())).into_matrix())
}

impl OmegaSpec {
    pub fn build(&self, p: usize) -> Result<SpdMatrix> {
        match self {
            OmegaSpec::Tridiagonal { a, b } => build_tridiagonal(p, *a, *b),
            OmegaSpec::Identity => Ok(SpdMatrix::identity(p)),
            OmegaSpec::PowerLawEigen { exponent, basis_seed } => {
                build_power_law(p, *exponent, *basis_seed)
            }
            OmegaSpec::Explicit(m) => {
                check_dim("explicit omega", p, m.dim())?;
                Ok(m.clone())
            }
        }
    }
}

/// Concrete Σ for a spec, given Ω.
pub fn realize_sigma(spec: &SigmaSpec, omega: &SpdMatrix) -> Result<SpdMatrix> {
    let p = omega.dim();
    match spec {
        SigmaSpec::Identity => Ok(SpdMatrix::identity(p)),
        SigmaSpec::ScaledInverseOmega { rho } => {
            if !(*rho > 0.0) {
                return Err(Error::InvalidInput(format!("rho must be positive, got {rho}")));
            }
            omega.inverse().scaled(*rho)
        }
        SigmaSpec::PowerOfOmega { kappa } => SpdMatrix::new(spectral_map(omega.as_matrix(), |l| l.powf(-kappa))),
        SigmaSpec::BlockDiag { c, d } => {
            if !(*c > 0.0 && *d > 0.0) {
                return Err(Error::InvalidInput("block-diagonal entries must be positive".into()));
            }
            let mut diag = vec![*d; p];
            diag[0] = *c;
            SpdMatrix::from_diagonal(&diag)
        }
        SigmaSpec::Explicit(m) => {
            check_dim("explicit sigma", p, m.dim())?;
            Ok(m.clone())
        }
    }
}

/// Draws tasks for fixed (Ω, Σ, σ²), caching the square-root factors.
#[derive(Clone, Debug)]
pub struct TaskSampler {
    omega_half: DMatrix<f64>,
    sigma_half: Option<DMatrix<f64>>,
    sigma2: f64,
    law: EntryLaw,
}

impl TaskSampler {
    pub fn new(omega: &SpdMatrix, sigma: &SpdMatrix, sigma2: f64) -> Result<Self> {
        Self::with_law(omega, sigma, sigma2, EntryLaw::Gaussian)
    }

    pub fn with_law(omega: &SpdMatrix, sigma: &SpdMatrix, sigma2: f64, law: EntryLaw) -> Result<Self> {
        check_dim("sigma dimension", omega.dim(), sigma.dim())?;
        if !(sigma2 >= 0.0) {
            return Err(Error::InvalidInput(format!("noise variance {sigma2} < 0")));
        }
        let p = sigma.dim();
        let sigma_half = if sigma.as_matrix() == &DMatrix::<f64>::identity(p, p) {
            None
        } else {
            Some(spd_sqrt(sigma)?.into_matrix())
        };
        Ok(Self {
            omega_half: spd_sqrt(omega)?.into_matrix(),
            sigma_half,
            sigma2,
            law,
        })
    }

    pub fn p(&self) -> usize {
        self.omega_half.nrows()
    }

    /// Design X = Z Σ^{1/2} with n rows.
    pub fn sample_design<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> DMatrix<f64> {
        let p = self.p();
        let z = DMatrix::from_fn(n, p, |_, _| self.law.sample(rng));
        match &self.sigma_half {
            Some(h) => z * h,
            None => z,
        }
    }

    /// β ~ N(0, Ω/p).
    pub fn sample_beta<R: Rng + ?Sized>(&self, rng: &mut R) -> DVector<f64> {
        let p = self.p();
        let g = DVector::from_fn(p, |_, _| rng.sample::<f64, _>(StandardNormal));
        &self.omega_half * g / (p as f64).sqrt()
    }

    /// Response for a given design and coefficient.
    pub fn sample_response<R: Rng + ?Sized>(
        &self,
        x: &DMatrix<f64>,
        beta: &DVector<f64>,
        rng: &mut R,
    ) -> DVector<f64> {
        let sd = self.sigma2.sqrt();
        let mut y = x * beta;
        for v in y.iter_mut() {
            *v += sd * rng.sample::<f64, _>(StandardNormal);
        }
        y
    }

    pub fn sample<R: Rng + ?Sized>(&self, n: usize, rng: &mut R) -> Task {
        let x = self.sample_design(n, rng);
        let beta = self.sample_beta(rng);
        let y = self.sample_response(&x, &beta, rng);
        Task { x, y, beta_true: Some(beta) }
    }
}

/// Draws one task from the random-effects model.
pub fn sample_task<R: Rng + ?Sized>(
    omega: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma2: f64,
    n: usize,
    rng: &mut R,
) -> Result<Task> {
    if n == 0 {
        return Err(Error::InvalidInput("task needs n >= 1".into()));
    }
    Ok(TaskSampler::new(omega, sigma, sigma2)?.sample(n, rng))
}

/// Draws `n_schedule.len()` independent tasks sharing Ω and σ².
pub fn sample_meta_dataset<R: Rng + ?Sized>(
    n_schedule: &[usize],
    omega: &SpdMatrix,
    sigma: &SpdMatrix,
    sigma2: f64,
    rng: &mut R,
) -> Result<MetaDataset> {
    if n_schedule.contains(&0) {
        return Err(Error::InvalidInput("every task needs n >= 1".into()));
    }
    let sampler = TaskSampler::new(omega, sigma, sigma2)?;
    let tasks = n_schedule.iter().map(|&n| sampler.sample(n, rng)).collect();
    MetaDataset::new(tasks, Some(omega.clone()), sigma2)
}

/// Expands (value, count) pairs into a per-task sample-size list.
pub fn expand_schedule(pairs: &[(usize, usize)]) -> Vec<usize> {
    pairs
        .iter()
        .flat_map(|&(n, count)| std::iter::repeat_n(n, count))
        .collect()
}

/// XᵀX / n.
pub fn sample_covariance(x: &DMatrix<f64>) -> SymmetricMatrix {
    let n = x.nrows().max(1) as f64;
    symmetrize(&(x.tr_mul(x) / n))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn tridiagonal_small_cases() {
        let one = build_tridiagonal(1, 3.0, 1.0).unwrap();
        assert_eq!(one.as_matrix()[(0, 0)], 3.0);
        let two = build_tridiagonal(2, 16.0, 5.0).unwrap();
        let eig = two.eigenvalues();
        assert_relative_eq!(eig[0], 11.0, epsilon = 1e-12);
        assert_relative_eq!(eig[1], 21.0, epsilon = 1e-12);
        assert!(matches!(build_tridiagonal(4, 2.0, 1.0), Err(Error::NotSpd(_))));
    }

    #[test]
    fn power_law_cases() {
        let i = build_power_law(5, 0.0, 7).unwrap();
        assert_relative_eq!(i.as_matrix(), &DMatrix::identity(5, 5), epsilon = 1e-12);
        let m = build_power_law(4, 1.0, 3).unwrap();
        let eig = m.eigenvalues();
        for (got, want) in eig.iter().zip([0.25, 1.0 / 3.0, 0.5, 1.0]) {
            assert_relative_eq!(*got, want, epsilon = 1e-12);
        }
        assert_eq!(build_power_law(6, 1.5, 11).unwrap(), build_power_law(6, 1.5, 11).unwrap());
    }

    #[test]
    fn sigma_variants() {
        let omega = SpdMatrix::from_diagonal(&[2.0, 2.0]).unwrap();
        let s = realize_sigma(&SigmaSpec::ScaledInverseOmega { rho: 1.0 }, &omega).unwrap();
        assert_relative_eq!(s.as_matrix(), &(DMatrix::identity(2, 2) * 0.5), epsilon = 1e-14);
        let omega = SpdMatrix::from_diagonal(&[2.0, 4.0]).unwrap();
        let s = realize_sigma(&SigmaSpec::PowerOfOmega { kappa: 2.0 }, &omega).unwrap();
        assert_relative_eq!(s.as_matrix()[(0, 0)], 0.25, epsilon = 1e-14);
        assert_relative_eq!(s.as_matrix()[(1, 1)], 0.0625, epsilon = 1e-14);
        let s = realize_sigma(&SigmaSpec::Identity, &omega).unwrap();
        assert_eq!(s, SpdMatrix::identity(2));
        let s = realize_sigma(&SigmaSpec::BlockDiag { c: 3.0, d: 0.5 }, &omega).unwrap();
        assert_eq!(s.as_matrix()[(0, 0)], 3.0);
        assert_eq!(s.as_matrix()[(1, 1)], 0.5);
    }

    #[test]
    fn noiseless_task_is_identifiable() {
        let mut rng = ChaCha20Rng::seed_from_u64(1);
        let omega = build_tridiagonal(5, 4.0, 1.0).unwrap();
        let t = sample_task(&omega, &SpdMatrix::identity(5), 0.0, 12, &mut rng).unwrap();
        let z = t.x.clone().svd(true, true).solve(&t.y, 1e-14).unwrap();
        assert_relative_eq!(z, t.beta_true.clone().unwrap(), epsilon = 1e-10);
    }

    #[test]
    fn sample_covariance_cases() {
        let x = DMatrix::<f64>::identity(3, 3);
        assert_relative_eq!(sample_covariance(&x).as_matrix(), &(DMatrix::identity(3, 3) / 3.0));
        let row = DMatrix::from_row_slice(1, 2, &[2.0, -1.0]);
        let s = sample_covariance(&row);
        assert_eq!(s.as_matrix(), &DMatrix::from_row_slice(2, 2, &[4.0, -2.0, -2.0, 1.0]));
    }

    #[test]
    fn schedule_expansion() {
        let s = expand_schedule(&[(150, 2), (50, 3)]);
        assert_eq!(s, vec![150, 150, 50, 50, 50]);
    }

    #[test]
    fn rademacher_entries_are_signs() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        for _ in 0..100 {
            let v = EntryLaw::Rademacher.sample(&mut rng);
            assert!(v == 1.0 || v == -1.0);
        }
    }
}
