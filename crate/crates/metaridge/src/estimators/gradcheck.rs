//! Finite-difference checks of objective gradients along retraction curves.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

use crate::error::Result;
use crate::estimators::{mle_gradient, mle_negloglik, mom_gradient, mom_objective};
use crate::model::{random_spd, sample_meta_dataset, MetaDataset};
use crate::spd::{frobenius_inner, retract_second_order, SpdMatrix, SymmetricMatrix};

/// Step used for the central differences.
pub const FD_STEP: f64 = 1e-5;

/// Largest relative gap between ⟨G, Ξ⟩ and the central difference
/// (f(P_Ω(tΞ)) − f(P_Ω(−tΞ)))/(2t) over the given directions.
pub fn max_fd_error(
    f: impl Fn(&SpdMatrix) -> Result<f64>,
    grad: &SymmetricMatrix,
    at: &SpdMatrix,
    directions: &[SymmetricMatrix],
    t: f64,
) -> Result<f64> {
    let mut worst: f64 = 0.0;
    for xi in directions {
        let plus = f(&retract_second_order(at, &xi.scaled(t))?)?;
        let minus = f(&retract_second_order(at, &xi.scaled(-t))?)?;
        let fd = (plus - minus) / (2.0 * t);
        let analytic = frobenius_inner(grad.as_matrix(), xi.as_matrix());
        worst = worst.max((fd - analytic).abs() / analytic.abs().max(f64::MIN_POSITIVE));
    }
    Ok(worst)
}

/// Unit-norm random symmetric directions.
pub fn random_directions<R: Rng + ?Sized>(p: usize, count: usize, rng: &mut R) -> Vec<SymmetricMatrix> {
    (0..count)
        .map(|_| {
            let g = DMatrix::from_fn(p, p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let s = (&g + g.transpose()) * 0.5;
            let norm = s.norm();
            SymmetricMatrix::new(s / norm).expect("symmetric by construction")
        })
        .collect()
}

/// A seeded test problem: L tasks with n = p + 2, a random SPD truth,
/// σ² = 1, and a random SPD evaluation point away from the truth.
pub fn gradcheck_problem(p: usize, tasks: usize, seed: u64) -> Result<(MetaDataset, SpdMatrix)> {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let omega = random_spd(p, 0.5, 2.0, &mut rng)?;
    let sigma = SpdMatrix::identity(p);
    let data = sample_meta_dataset(&vec![p + 2; tasks], &omega, &sigma, 1.0, &mut rng)?;
    let at = random_spd(p, 0.5, 2.0, &mut rng)?;
    Ok((data, at))
}

/// Worst relative error of the method-of-moments gradient over `count`
/// random directions.
pub fn mom_gradcheck(p: usize, tasks: usize, seed: u64, count: usize) -> Result<f64> {
    let (data, at) = gradcheck_problem(p, tasks, seed)?;
    let dirs = random_directions(p, count, &mut ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9));
    let grad = mom_gradient(&at, &data)?;
    max_fd_error(|m| mom_objective(m, &data), &grad, &at, &dirs, FD_STEP)
}

/// Worst relative error of the negative log-likelihood gradient.
pub fn mle_gradcheck(p: usize, tasks: usize, seed: u64, count: usize) -> Result<f64> {
    let (data, at) = gradcheck_problem(p, tasks, seed)?;
    let dirs = random_directions(p, count, &mut ChaCha20Rng::seed_from_u64(seed ^ 0x9e37_79b9));
    let grad = mle_gradient(&at, data.sigma2, &data)?;
    max_fd_error(|m| mle_negloglik(m, data.sigma2, &data), &grad, &at, &dirs, FD_STEP)
}
