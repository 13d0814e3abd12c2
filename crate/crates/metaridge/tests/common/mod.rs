#![allow(dead_code)]

use metaridge::{SpdMatrix, SymmetricMatrix};
use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha20Rng {
    ChaCha20Rng::seed_from_u64(seed)
}

pub fn gaussian(rows: usize, cols: usize, rng: &mut ChaCha20Rng) -> DMatrix<f64> {
    DMatrix::from_fn(rows, cols, |_, _| rng.sample(StandardNormal))
}

/// Symmetric matrix with unit Frobenius norm.
pub fn unit_symmetric(p: usize, rng: &mut ChaCha20Rng) -> SymmetricMatrix {
    let g = gaussian(p, p, rng);
    let s = (&g + g.transpose()) * 0.5;
    let norm = s.norm();
    SymmetricMatrix::new(s / norm).unwrap()
}

/// SPD matrix with eigenvalues in [lo, hi].
pub fn spd(p: usize, lo: f64, hi: f64, rng: &mut ChaCha20Rng) -> SpdMatrix {
    metaridge::model::random_spd(p, lo, hi, rng).unwrap()
}

pub fn rel_diff(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    (a - b).norm() / b.norm().max(f64::MIN_POSITIVE)
}
