//! Symmetric positive-definite matrices and the manifold operations used by
//! the estimators: matrix functions, the affine-invariant metric, two
//! retractions and the geodesic.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::error::{check_dim, Error, Result};

/// Relative asymmetry accepted before projecting onto the symmetric part.
const INPUT_SYMMETRY_TOL: f64 = 1e-8;
/// Largest condition number accepted by [`SpdMatrix::new`].
pub const MAX_CONDITION: f64 = 1e12;

/// A real symmetric matrix, used for tangent vectors and gradients.
#[derive(Clone, Debug, PartialEq)]
pub struct SymmetricMatrix(DMatrix<f64>);

/// A symmetric positive-definite matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct SpdMatrix(DMatrix<f64>);

fn max_abs(m: &DMatrix<f64>) -> f64 {
    m.iter().fold(0.0_f64, |acc, v| acc.max(v.abs()))
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    let p = m.nrows();
    let mut worst = 0.0_f64;
    for j in 0..p {
        for i in (j + 1)..p {
            worst = worst.max((m[(i, j)] - m[(j, i)]).abs());
        }
    }
    worst
}

fn project_symmetric(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    if !m.is_square() {
        return Err(Error::DimensionMismatch(format!(
            "expected a square matrix, found {}x{}",
            m.nrows(),
            m.ncols()
        )));
    }
    if m.iter().any(|v| !v.is_finite()) {
        return Err(Error::InvalidInput("matrix has non-finite entries".into()));
    }
    let scale = max_abs(&m);
    if asymmetry(&m) > INPUT_SYMMETRY_TOL * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::InvalidInput("matrix is not symmetric".into()));
    }
    Ok(symmetrize(&m).0)
}

/// Returns ½(M + Mᵀ).
pub fn symmetrize(m: &DMatrix<f64>) -> SymmetricMatrix {
    assert!(m.is_square(), "symmetrize needs a square matrix");
    let mut out = m.clone();
    let p = m.nrows();
    for j in 0..p {
        for i in (j + 1)..p {
            let v = 0.5 * (m[(i, j)] + m[(j, i)]);
            out[(i, j)] = v;
            out[(j, i)] = v;
        }
    }
    SymmetricMatrix(out)
}

/// Frobenius inner product ⟨A, B⟩ = tr(AᵀB).
pub fn frobenius_inner(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

/// tr(AB) without forming the product.
pub(crate) fn trace_of_product(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let p = a.nrows();
    let mut acc = 0.0;
    for i in 0..p {
        for k in 0..a.ncols() {
            acc += a[(i, k)] * b[(k, i)];
        }
    }
    acc
}

/// Applies `f` to the spectrum of a symmetric matrix.
pub(crate) fn spectral_map(m: &DMatrix<f64>, f: impl Fn(f64) -> f64) -> DMatrix<f64> {
    let eig = m.clone().symmetric_eigen();
    let mut scaled = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        let fl = f(lam);
        scaled.column_mut(j).scale_mut(fl);
    }
    symmetrize(&(scaled * eig.eigenvectors.transpose())).0
}

impl SymmetricMatrix {
    /// Wraps a square matrix, projecting away round-off asymmetry.
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        Ok(Self(project_symmetric(m)?))
    }

    pub fn zeros(p: usize) -> Self {
        Self(DMatrix::zeros(p, p))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(&self.0 * c)
    }

    pub fn add(&self, other: &SymmetricMatrix) -> Self {
        Self(&self.0 + &other.0)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        sorted(self.0.clone().symmetric_eigenvalues())
    }
}

fn sorted(v: DVector<f64>) -> DVector<f64> {
    let mut xs: Vec<f64> = v.iter().copied().collect();
    xs.sort_by(f64::total_cmp);
    DVector::from_vec(xs)
}

impl SpdMatrix {
    /// Validates symmetry, positive definiteness (Cholesky) and a condition
    /// number no larger than [`MAX_CONDITION`].
    pub fn new(m: DMatrix<f64>) -> Result<Self> {
        let m = project_symmetric(m)?;
        if m.nrows() == 0 {
            return Err(Error::InvalidInput("empty matrix".into()));
        }
        if m.clone().cholesky().is_none() {
            return Err(Error::NotSpd("Cholesky factorization failed".into()));
        }
        let eigs = m.clone().symmetric_eigenvalues();
        let lo = eigs.min();
        let hi = eigs.max();
        if lo <= 0.0 {
            return Err(Error::NotSpd(format!("smallest eigenvalue {lo:e}")));
        }
        if hi / lo > MAX_CONDITION {
            return Err(Error::NotSpd(format!("condition number {:e}", hi / lo)));
        }
        Ok(Self(m))
    }

    pub fn identity(p: usize) -> Self {
        Self(DMatrix::identity(p, p))
    }

    pub fn from_diagonal(diag: &[f64]) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&DVector::from_column_slice(diag)))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &DMatrix<f64> {
        &self.0
    }

    pub fn into_matrix(self) -> DMatrix<f64> {
        self.0
    }

    pub fn to_symmetric(&self) -> SymmetricMatrix {
        SymmetricMatrix(self.0.clone())
    }

    pub fn scaled(&self, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::NotSpd(format!("non-positive scale {c}")));
        }
        Ok(Self(&self.0 * c))
    }

    pub fn cholesky(&self) -> Cholesky<f64, Dyn> {
        self.0
            .clone()
            .cholesky()
            .expect("validated SPD matrix has a Cholesky factor")
    }

    pub fn inverse(&self) -> SpdMatrix {
        SpdMatrix(symmetrize(&self.cholesky().inverse()).0)
    }

    /// Eigenvalues in ascending order.
    pub fn eigenvalues(&self) -> DVector<f64> {
        sorted(self.0.clone().symmetric_eigenvalues())
    }

    pub fn min_eigenvalue(&self) -> f64 {
        self.0.clone().symmetric_eigenvalues().min()
    }

    pub fn log_det(&self) -> f64 {
        2.0 * self.cholesky().l().diagonal().iter().map(|d| d.ln()).sum::<f64>()
    }

    pub fn frobenius_norm(&self) -> f64 {
        self.0.norm()
    }

    /// Q^t through the symmetric eigendecomposition.
    pub fn pow(&self, t: f64) -> Result<SpdMatrix> {
        SpdMatrix::new(spectral_map(&self.0, |l| l.powf(t)))
    }
}

/// Principal square root S with S·S = Q.
pub fn spd_sqrt(q: &SpdMatrix) -> Result<SpdMatrix> {
    SpdMatrix::new(spectral_map(&q.0, f64::sqrt))
}

/// Q^{-1/2}.
pub fn spd_inv_sqrt(q: &SpdMatrix) -> Result<SpdMatrix> {
    SpdMatrix::new(spectral_map(&q.0, |l| 1.0 / l.sqrt()))
}

/// Matrix exponential of a symmetric matrix.
pub fn sym_exp(xi: &SymmetricMatrix) -> Result<SpdMatrix> {
    SpdMatrix::new(spectral_map(&xi.0, f64::exp))
}

/// P_Q(Ξ) = Q + Ξ + ½ Ξ Q⁻¹ Ξ.
pub fn retract_second_order(q: &SpdMatrix, xi: &SymmetricMatrix) -> Result<SpdMatrix> {
    check_dim("retraction direction", q.dim(), xi.dim())?;
    let q_inv_xi = q.cholesky().solve(&xi.0);
    let out = &q.0 + &xi.0 + (&xi.0 * q_inv_xi) * 0.5;
    SpdMatrix::new(symmetrize(&out).0)
}

/// P_Q(Ξ) = Q^{1/2} exp(Q^{-1/2} Ξ Q^{-1/2}) Q^{1/2}.
pub fn retract_exp(q: &SpdMatrix, xi: &SymmetricMatrix) -> Result<SpdMatrix> {
    check_dim("retraction direction", q.dim(), xi.dim())?;
    let half = spd_sqrt(q)?;
    let inv_half = spd_inv_sqrt(q)?;
    let inner = symmetrize(&(&inv_half.0 * &xi.0 * &inv_half.0));
    let e = spectral_map(&inner.0, f64::exp);
    SpdMatrix::new(symmetrize(&(&half.0 * e * &half.0)).0)
}

/// g_Q(A, B) = tr(A Q⁻¹ B Q⁻¹).
pub fn affine_metric(q: &SpdMatrix, a: &SymmetricMatrix, b: &SymmetricMatrix) -> Result<f64> {
    check_dim("metric argument A", q.dim(), a.dim())?;
    check_dim("metric argument B", q.dim(), b.dim())?;
    let chol = q.cholesky();
    let qa = chol.solve(&a.0);
    let qb = chol.solve(&b.0);
    Ok(trace_of_product(&qa, &qb))
}

/// γ(t) = A^{1/2} (A^{-1/2} B A^{-1/2})^t A^{1/2}.
pub fn geodesic(a: &SpdMatrix, b: &SpdMatrix, t: f64) -> Result<SpdMatrix> {
    check_dim("geodesic endpoint", a.dim(), b.dim())?;
    if t == 0.0 {
        return Ok(a.clone());
    }
    if t == 1.0 {
        return Ok(b.clone());
    }
    let half = spd_sqrt(a)?;
    let inv_half = spd_inv_sqrt(a)?;
    let inner = symmetrize(&(&inv_half.0 * &b.0 * &inv_half.0));
    let powered = spectral_map(&inner.0, |l| l.max(0.0).powf(t));
    SpdMatrix::new(symmetrize(&(&half.0 * powered * &half.0)).0)
}
