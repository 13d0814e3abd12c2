//! Stieltjes transforms on the negative real axis: empirical estimates,
//! the companion-transform identities and the fixed-point solver for a
//! limiting spectral law.

use serde::Serialize;

use crate::error::{Error, Result};

/// Limiting spectral law of Λ = Ω^{1/2}ΣΩ^{1/2}.
#[derive(Clone, Debug, PartialEq)]
pub enum SpectralLaw {
    EmpiricalEigs(Vec<f64>),
    PointMass(f64),
    /// Law of center + halfwidth·sin θ with θ uniform on (−π/2, π/2).
    ShiftedArcsine { center: f64, halfwidth: f64 },
    /// Push-forward of the shifted arcsine law by x ↦ x^{1−κ}.
    PowerTransformedArcsine { center: f64, halfwidth: f64, kappa: f64 },
}

/// Transforms at z = −λ with solver diagnostics.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct StieltjesEval {
    pub s: f64,
    pub s_prime: f64,
    pub v: f64,
    pub v_prime: f64,
    pub lambda: f64,
    pub gamma: f64,
    pub iterations: usize,
    pub residual: f64,
}

impl StieltjesEval {
    /// Builds an evaluation from (s, s′), filling in the companion values.
    pub fn from_s(s: f64, s_prime: f64, lambda: f64, gamma: f64) -> Self {
        let (v, v_prime) = silverstein_inverse(s, s_prime, lambda, gamma);
        Self { s, s_prime, v, v_prime, lambda, gamma, iterations: 0, residual: 0.0 }
    }
}

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_2,
    0.140_653_259_715_525_9,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_8,
];
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

fn kronrod(f: &impl Fn(f64) -> f64, a: f64, b: f64) -> (f64, f64) {
    let mid = 0.5 * (a + b);
    let half = 0.5 * (b - a);
    let fc = f(mid);
    let mut k = WGK[7] * fc;
    let mut g = WG[3] * fc;
    for j in 0..7 {
        let dx = half * XGK[j];
        let pair = f(mid - dx) + f(mid + dx);
        k += WGK[j] * pair;
        if j % 2 == 1 {
            g += WG[j / 2] * pair;
        }
    }
    (k * half, ((k - g) * half).abs())
}

fn adaptive(f: &impl Fn(f64) -> f64, a: f64, b: f64, tol: f64, depth: usize) -> f64 {
    let (val, err) = kronrod(f, a, b);
    if err <= tol || depth == 0 {
        return val;
    }
    let mid = 0.5 * (a + b);
    adaptive(f, a, mid, 0.5 * tol, depth - 1) + adaptive(f, mid, b, 0.5 * tol, depth - 1)
}

/// Adaptive Gauss–Kronrod (7/15) quadrature on [a, b].
pub fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    adaptive(&f, a, b, tol, 40)
}

const QUAD_TOL: f64 = 1e-13;

impl SpectralLaw {
    pub fn validate(&self) -> Result<()> {
        let ok = match self {
            SpectralLaw::EmpiricalEigs(e) => !e.is_empty() && e.iter().all(|&x| x > 0.0 && x.is_finite()),
            SpectralLaw::PointMass(v) => *v > 0.0 && v.is_finite(),
            SpectralLaw::ShiftedArcsine { center, halfwidth }
            | SpectralLaw::PowerTransformedArcsine { center, halfwidth, .. } => {
                *halfwidth >= 0.0 && halfwidth < center && center.is_finite()
            }
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidInput(format!("invalid spectral law {self:?}")))
        }
    }

    /// ∫ f dH.
    pub fn expect(&self, f: impl Fn(f64) -> f64) -> f64 {
        use std::f64::consts::{FRAC_PI_2, PI};
        match self {
            SpectralLaw::EmpiricalEigs(e) => e.iter().map(|&x| f(x)).sum::<f64>() / e.len() as f64,
            SpectralLaw::PointMass(v) => f(*v),
            SpectralLaw::ShiftedArcsine { center, halfwidth } => {
                integrate(|t| f(center + halfwidth * t.sin()), -FRAC_PI_2, FRAC_PI_2, QUAD_TOL) / PI
            }
            SpectralLaw::PowerTransformedArcsine { center, halfwidth, kappa } => integrate(
                |t| f((center + halfwidth * t.sin()).powf(1.0 - kappa)),
                -FRAC_PI_2,
                FRAC_PI_2,
                QUAD_TOL,
            ) / PI,
        }
    }
}

/// s = (1/N)Σ 1/(μ + λ) and s′ = (1/N)Σ 1/(μ + λ)², normalized by the
/// number N of eigenvalues supplied.
pub fn stieltjes_from_eigs(eigs: &[f64], lambda: f64) -> Result<(f64, f64)> {
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if eigs.is_empty() {
        return Err(Error::InvalidInput("no eigenvalues".into()));
    }
    let count = eigs.len() as f64;
    let mut s = 0.0;
    let mut s2 = 0.0;
    for &mu in eigs {
        let r = 1.0 / (mu.max(0.0) + lambda);
        s += r;
        s2 += r * r;
    }
    Ok((s / count, s2 / count))
}

/// Companion transform (v, v′) to (s, s′) at z = −λ:
/// γ(s + 1/z) = v + 1/z and γ(s′ − 1/z²) = v′ − 1/z².
pub fn silverstein_convert(v: f64, v_prime: f64, lambda: f64, gamma: f64) -> (f64, f64) {
    let inv_z = -1.0 / lambda;
    let inv_z2 = 1.0 / (lambda * lambda);
    ((v + inv_z) / gamma - inv_z, (v_prime - inv_z2) / gamma + inv_z2)
}

/// Inverse of [`silverstein_convert`].
pub fn silverstein_inverse(s: f64, s_prime: f64, lambda: f64, gamma: f64) -> (f64, f64) {
    let inv_z = -1.0 / lambda;
    let inv_z2 = 1.0 / (lambda * lambda);
    (gamma * (s + inv_z) - inv_z, gamma * (s_prime - inv_z2) + inv_z2)
}

/// Solves v = 1/(λ + γ∫ t/(1 + vt) dH) from v = 0, then
/// v′ = (1/v² − γ∫ t²/(1 + tv)² dH)⁻¹, and converts to (s, s′).
pub fn fixed_point_stieltjes(
    law: &SpectralLaw,
    gamma: f64,
    lambda: f64,
    max_iter: usize,
    tol: f64,
) -> Result<StieltjesEval> {
    law.validate()?;
    if !(lambda > 0.0) {
        return Err(Error::NonPositiveLambda(lambda));
    }
    if !(gamma > 0.0) {
        return Err(Error::InvalidInput(format!("aspect ratio must be positive, got {gamma}")));
    }
    let map = |v: f64| 1.0 / (lambda + gamma * law.expect(|t| t / (1.0 + v * t)));
    let mut v = 0.0;
    let mut residual = f64::INFINITY;
    let mut damping = 1.0;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let next = map(v);
        let step = next - v;
        if step.abs() > residual {
            damping = 0.5;
        }
        residual = step.abs();
        v += damping * step;
        if residual < tol {
            break;
        }
    }
    if !(residual < tol) {
        return Err(Error::NoConvergence { iterations, residual });
    }
    let curvature = law.expect(|t| t * t / ((1.0 + t * v) * (1.0 + t * v)));
    let v_prime = 1.0 / (1.0 / (v * v) - gamma * curvature);
    let (s, s_prime) = silverstein_convert(v, v_prime, lambda, gamma);
    Ok(StieltjesEval { s, s_prime, v, v_prime, lambda, gamma, iterations, residual })
}
