//! Riemannian (proximal) gradient descent on the SPD cone with the
//! second-order retraction and backtracking.

use nalgebra::DMatrix;
use serde::Serialize;

use crate::error::{check_dim, Error, Result};
use crate::spd::{frobenius_inner, retract_second_order, spectral_map, symmetrize, SpdMatrix, SymmetricMatrix};

/// Number of step halvings before a line search gives up.
pub const MAX_HALVINGS: usize = 50;
const ARMIJO: f64 = 1e-4;
const POWER_ITERATIONS: usize = 60;
const BOUND_MARGIN: f64 = 1.05;
/// Eigenvalue floor relative to the largest eigenvalue, keeping projected
/// iterates inside the condition-number limit of [`SpdMatrix`].
const RELATIVE_FLOOR: f64 = 1e-11;
/// A failed line search whose full-step displacement is below this (relative
/// to 1 + ‖Ω‖_F), or whose predicted decrease is within a few ulps of the
/// objective, is a stall at rounding level rather than a failure.
const STALL: f64 = 1e-9;
const STALL_ULPS: f64 = 64.0;

/// Optimizer settings shared by all fitted estimators.
#[derive(Clone, Debug)]
pub struct FitOptions {
    /// Starting point.
    pub init: SpdMatrix,
    /// Initial trial step; `None` uses 1/`smooth_bound`.
    pub step: Option<f64>,
    pub max_iter: usize,
    /// Stop once the Frobenius norm of the gradient (or gradient mapping)
    /// falls below this.
    pub grad_tol: f64,
    /// Off-diagonal L1 weight.
    pub lambda_tilde: f64,
    /// Upper bound on the smoothness constant; `None` estimates it by power
    /// iteration.
    pub smooth_bound: Option<f64>,
    /// Smallest eigenvalue allowed for projected iterates.
    pub eig_floor: f64,
}

impl FitOptions {
    pub fn new(p: usize) -> Self {
        Self {
            init: SpdMatrix::identity(p),
            step: None,
            max_iter: 2000,
            grad_tol: 1e-6,
            lambda_tilde: 0.0,
            smooth_bound: None,
            eig_floor: 1e-8,
        }
    }

    pub fn with_init(mut self, init: SpdMatrix) -> Self {
        self.init = init;
        self
    }

    pub fn with_lambda_tilde(mut self, lambda_tilde: f64) -> Self {
        self.lambda_tilde = lambda_tilde;
        self
    }

    pub fn with_grad_tol(mut self, grad_tol: f64) -> Self {
        self.grad_tol = grad_tol;
        self
    }

    pub fn with_max_iter(mut self, max_iter: usize) -> Self {
        self.max_iter = max_iter;
        self
    }
}

/// Outcome of a fit.
#[derive(Clone, Debug, Serialize)]
pub struct FitReport {
    #[serde(skip)]
    pub omega_hat: SpdMatrix,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub objective_trace: Vec<f64>,
}

/// A smooth objective on SPD matrices with its Euclidean gradient.
pub(crate) trait SmoothObjective {
    fn dim(&self) -> usize;
    fn value(&self, omega: &SpdMatrix) -> Result<f64>;
    fn gradient(&self, omega: &SpdMatrix) -> Result<SymmetricMatrix>;
    /// f(cand) − f(omega).
    fn difference(&self, _omega: &SpdMatrix, _cand: &SpdMatrix, f_omega: f64, f_cand: f64) -> f64 {
        f_cand - f_omega
    }
    /// Linear map whose largest eigenvalue bounds the Hessian near `at`.
    fn curvature_apply(&self, at: &SpdMatrix, xi: &DMatrix<f64>) -> Result<DMatrix<f64>>;
}

/// Off-diagonal L1 norm counting both (i, j) and (j, i).
pub fn offdiag_l1(m: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            if i != j {
                acc += m[(i, j)].abs();
            }
        }
    }
    acc
}

/// Soft threshold; values exactly at the threshold map to zero.
pub fn soft_threshold(x: f64, t: f64) -> f64 {
    if x.abs() <= t {
        0.0
    } else {
        x - t * x.signum()
    }
}

/// Largest eigenvalue of a self-adjoint positive operator on symmetric
/// matrices, by power iteration.
pub(crate) fn power_iteration(
    p: usize,
    mut apply: impl FnMut(&DMatrix<f64>) -> Result<DMatrix<f64>>,
) -> Result<f64> {
    let mut xi = DMatrix::from_fn(p, p, |i, j| if i == j { 1.0 } else { 0.1 / (1.0 + (i + j) as f64) });
    xi /= xi.norm();
    let mut rho = 0.0;
    for _ in 0..POWER_ITERATIONS {
        let next = apply(&xi)?;
        rho = frobenius_inner(&xi, &next);
        let norm = next.norm();
        if norm == 0.0 || !norm.is_finite() {
            break;
        }
        xi = next / norm;
    }
    Ok(rho)
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct ProxSpec {
    pub lambda_tilde: f64,
    pub unit_diagonal: bool,
    pub eig_floor: f64,
}

fn direction(omega: &DMatrix<f64>, grad: &DMatrix<f64>, alpha: f64, prox: Option<ProxSpec>) -> DMatrix<f64> {
    let p = omega.nrows();
    match prox {
        None => grad * (-alpha),
        Some(spec) => DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                if spec.unit_diagonal {
                    0.0
                } else {
                    -alpha * grad[(i, j)]
                }
            } else {
                let moved = omega[(i, j)] - alpha * grad[(i, j)];
                soft_threshold(moved, alpha * spec.lambda_tilde) - omega[(i, j)]
            }
        }),
    }
}

fn unit_diagonal(m: &DMatrix<f64>) -> DMatrix<f64> {
    let d: Vec<f64> = (0..m.nrows()).map(|i| m[(i, i)].sqrt()).collect();
    DMatrix::from_fn(m.nrows(), m.ncols(), |i, j| {
        if i == j {
            1.0
        } else {
            m[(i, j)] / (d[i] * d[j])
        }
    })
}

/// Clamps eigenvalues at `floor`; with `unit_diag` the result is rescaled
/// back to unit diagonal.
pub(crate) fn project_floor(m: &DMatrix<f64>, floor: f64, unit_diag: bool) -> Result<SpdMatrix> {
    let sym = symmetrize(m).into_matrix();
    let eigs = sym.clone().symmetric_eigenvalues();
    let floor = floor.max(RELATIVE_FLOOR * eigs.max().abs());
    let fixed = if eigs.min() < floor {
        let clamped = spectral_map(&sym, |l| l.max(floor));
        if unit_diag {
            unit_diagonal(&clamped)
        } else {
            clamped
        }
    } else {
        sym
    };
    SpdMatrix::new(fixed)
}

fn retraction_raw(omega: &SpdMatrix, xi: &SymmetricMatrix) -> DMatrix<f64> {
    let q_inv_xi = omega.cholesky().solve(xi.as_matrix());
    let raw = omega.as_matrix() + xi.as_matrix() + (xi.as_matrix() * q_inv_xi) * 0.5;
    symmetrize(&raw).into_matrix()
}

fn candidate(omega: &SpdMatrix, eta: &DMatrix<f64>, prox: Option<ProxSpec>) -> Result<SpdMatrix> {
    let xi = symmetrize(eta);
    match prox {
        None => retract_second_order(omega, &xi),
        Some(spec) if spec.unit_diagonal => {
            let mut raw = retraction_raw(omega, &xi);
            for i in 0..raw.nrows() {
                raw[(i, i)] = 1.0;
            }
            project_floor(&raw, spec.eig_floor, true)
        }
        Some(spec) => match retract_second_order(omega, &xi) {
            Ok(m) if m.min_eigenvalue() >= spec.eig_floor => Ok(m),
            _ => project_floor(&retraction_raw(omega, &xi), spec.eig_floor, false),
        },
    }
}

/// First-order step Ω + η clamped to the eigenvalue floor, used when the
/// retraction cannot make progress near the boundary of the cone; `None`
/// when the step stays above the floor and no clamping happens.
fn projected(omega: &SpdMatrix, eta: &DMatrix<f64>, floor: f64) -> Option<Result<SpdMatrix>> {
    let moved = symmetrize(&(omega.as_matrix() + eta)).into_matrix();
    if moved.clone().symmetric_eigenvalues().min() >= floor {
        return None;
    }
    Some(project_floor(&moved, floor, false))
}

/// Gradient mapping for the smooth case: −α∇f, or the projected
/// displacement when the plain step leaves the floor.
fn smooth_mapping(omega: &SpdMatrix, eta: DMatrix<f64>, floor: f64) -> DMatrix<f64> {
    let moved = symmetrize(&(omega.as_matrix() + &eta)).into_matrix();
    if moved.clone().symmetric_eigenvalues().min() >= floor {
        return eta;
    }
    match project_floor(&moved, floor, false) {
        Ok(m) => m.as_matrix() - omega.as_matrix(),
        Err(_) => eta,
    }
}

fn resolve_step(obj: &dyn SmoothObjective, opts: &FitOptions) -> Result<f64> {
    let step = match opts.step {
        Some(s) => s,
        None => {
            let bound = match opts.smooth_bound {
                Some(b) => b,
                None => {
                    let rho = power_iteration(obj.dim(), |xi| obj.curvature_apply(&opts.init, xi))?;
                    BOUND_MARGIN * rho
                }
            };
            if !(bound > 0.0 && bound.is_finite()) {
                return Err(Error::InvalidInput(format!("smoothness bound must be positive, got {bound}")));
            }
            1.0 / bound
        }
    };
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::InvalidInput(format!("step must be positive, got {step}")));
    }
    Ok(step)
}

/// Runs backtracked (proximal) RGD from `opts.init`.
pub(crate) fn descend(obj: &dyn SmoothObjective, opts: &FitOptions, prox: Option<ProxSpec>) -> Result<FitReport> {
    check_dim("initial point", obj.dim(), opts.init.dim())?;
    if !(opts.grad_tol > 0.0) {
        return Err(Error::InvalidInput("grad_tol must be positive".into()));
    }
    let step0 = resolve_step(obj, opts)?;
    let penalty = |m: &SpdMatrix| prox.map_or(0.0, |s| s.lambda_tilde * offdiag_l1(m.as_matrix()));

    let mut omega = match prox {
        Some(spec) if spec.unit_diagonal => {
            let mut m = opts.init.as_matrix().clone();
            for i in 0..m.nrows() {
                m[(i, i)] = 1.0;
            }
            project_floor(&m, spec.eig_floor, true)?
        }
        _ => opts.init.clone(),
    };
    let mut f = obj.value(&omega)?;
    let mut trace = vec![f + penalty(&omega)];
    let mut iterations = 0;
    let mut grad_norm;

    loop {
        let grad = obj.gradient(&omega)?.into_matrix();
        let eta0 = direction(omega.as_matrix(), &grad, step0, prox);
        let displacement = match prox {
            None => smooth_mapping(&omega, eta0.clone(), opts.eig_floor).norm(),
            Some(_) => eta0.norm(),
        };
        grad_norm = displacement / step0;
        if grad_norm < opts.grad_tol || iterations >= opts.max_iter {
            break;
        }

        let mut alpha = step0;
        let mut eta = eta0.clone();
        let mut accepted = None;
        for _ in 0..=MAX_HALVINGS {
            let fallback = match prox {
                None => projected(&omega, &eta, opts.eig_floor),
                Some(_) => None,
            };
            let tries = [(candidate(&omega, &eta, prox), false)].into_iter().chain(fallback.map(|c| (c, true)));
            for (cand, clipped) in tries {
                let Ok(cand) = cand else { continue };
                let fc = obj.value(&cand)?;
                let dh = obj.difference(&omega, &cand, f, fc) + penalty(&cand) - penalty(&omega);
                let moved = if clipped {
                    (cand.as_matrix() - omega.as_matrix()).norm_squared()
                } else {
                    eta.norm_squared()
                };
                if dh <= -ARMIJO * moved / alpha {
                    accepted = Some((cand, fc, dh));
                    break;
                }
            }
            if accepted.is_some() {
                break;
            }
            alpha *= 0.5;
            eta = direction(omega.as_matrix(), &grad, alpha, prox);
        }
        let Some((cand, fc, dh)) = accepted else {
            let predicted = displacement * displacement / step0;
            if displacement <= STALL * (1.0 + omega.frobenius_norm())
                || predicted <= STALL_ULPS * f64::EPSILON * (1.0 + f.abs())
            {
                break;
            }
            return Err(Error::StepFailure(MAX_HALVINGS));
        };
        omega = cand;
        f = fc;
        let h = f + penalty(&omega);
        trace.push(h);
        iterations += 1;
        if prox.is_some() && -dh <= 1e-15 * (1.0 + h.abs()) {
            let grad = obj.gradient(&omega)?.into_matrix();
            grad_norm = direction(omega.as_matrix(), &grad, step0, prox).norm() / step0;
            break;
        }
    }

    Ok(FitReport {
        omega_hat: omega,
        iterations,
        final_grad_norm: grad_norm,
        objective_trace: trace,
    })
}
