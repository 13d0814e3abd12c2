//! The simulation loop: sample training tasks, estimate the weight, fit a
//! new task with identity and estimated weights, and compare risks with
//! their limit.

use std::hash::{Hash, Hasher};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimators::{
    dicker_sigma2, fit_correlation_fullrank, fit_correlation_split, fit_l1_prox_rgd, fit_mle_rgd, fit_mom_rgd,
    generalized_ridge, FitOptions,
};
use crate::harness::config::{EstimatorKind, ExperimentConfig, InitKind, LimitMode, RiskMode, Sigma2Mode};
use crate::harness::emit::SummaryRow;
use crate::harness::seeds::{stream, Purpose, SHARED_RUN};
use crate::model::{random_spd, realize_sigma, sample_covariance, MetaDataset, OmegaSpec, SigmaSpec, TaskSampler};
use crate::risk::{
    empirical_risk, fixed_point_stieltjes, limiting_risk, mp_law_risk, plugin_risk_exact, stieltjes_from_eigs,
    SpectralLaw, StieltjesEval,
};
use crate::spd::{spd_sqrt, SpdMatrix};

const FIXED_POINT_ITERS: usize = 100_000;
const FIXED_POINT_TOL: f64 = 1e-13;

/// Risks for one (run, n_new, λ).
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Evaluation {
    pub lambda: f64,
    pub risk_identity: f64,
    pub risk_estimated: f64,
}

/// Everything one successful run produced.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub frob_err: f64,
    /// Noise variance handed to the weight estimator.
    pub sigma2_used: f64,
    /// Hash of each new-task design, in `n_new` order.
    pub design_hashes: Vec<u64>,
    /// `evaluations[j][k]` is n_new[j] at the k-th λ.
    pub evaluations: Vec<Vec<Evaluation>>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RunFailure {
    pub run: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ExperimentOutcome {
    pub rows: Vec<SummaryRow>,
    pub failures: Vec<RunFailure>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct CurveRow {
    pub n_new: usize,
    pub lambda: f64,
    /// NaN when the solver failed; see `status`.
    pub risk: f64,
    pub status: String,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SweepRow {
    pub c: f64,
    pub n_new: usize,
    pub lambda: f64,
    pub risk_identity: f64,
    pub risk_estimated: f64,
    pub run_count: usize,
}

/// Fixed per-config state shared by all runs.
struct Setting {
    omega: SpdMatrix,
    sigma_train: SpdMatrix,
    train: TaskSampler,
    test: TaskSampler,
    sigma_test: SpdMatrix,
}

impl Setting {
    fn new(cfg: &ExperimentConfig) -> Result<Self> {
        cfg.validate()?;
        let omega = cfg.omega.build(cfg.p)?;
        let sigma_train = realize_sigma(&cfg.sigma_train, &omega)?;
        let sigma_test = realize_sigma(&cfg.sigma_test, &omega)?;
        Ok(Self {
            train: TaskSampler::new(&omega, &sigma_train, cfg.sigma2)?,
            test: TaskSampler::new(&omega, &sigma_test, cfg.sigma2)?,
            omega,
            sigma_train,
            sigma_test,
        })
    }
}

/// Thread pool honoring `METARIDGE_THREADS`.
pub fn thread_pool() -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Ok(v) = std::env::var("METARIDGE_THREADS") {
        let n: usize = v
            .trim()
            .parse()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| Error::Config(format!("METARIDGE_THREADS must be a positive integer, got '{v}'")))?;
        builder = builder.num_threads(n);
    }
    builder.build().map_err(|e| Error::Config(format!("thread pool: {e}")))
}

fn design_hash(x: &DMatrix<f64>) -> u64 {
    let mut h = std::collections::hash_map::DefaultHasher::new();
    x.nrows().hash(&mut h);
    for v in x.iter() {
        v.to_bits().hash(&mut h);
    }
    h.finish()
}

fn fit_options(cfg: &ExperimentConfig) -> FitOptions {
    FitOptions::new(cfg.p)
        .with_max_iter(cfg.max_iter)
        .with_grad_tol(cfg.grad_tol)
        .with_lambda_tilde(cfg.lambda_tilde)
}

/// Estimated weight for one run's training data.
pub fn estimate_weight(cfg: &ExperimentConfig, data: &MetaDataset, omega: &SpdMatrix, run: usize) -> Result<SpdMatrix> {
    match cfg.estimator {
        EstimatorKind::OracleOmega => return Ok(omega.clone()),
        EstimatorKind::Identity => return Ok(SpdMatrix::identity(cfg.p)),
        EstimatorKind::CorrelationFullRank => {
            let opts = fit_options(cfg);
            return Ok(fit_correlation_fullrank(&data.tasks, cfg.lambda_tilde, opts.eig_floor)?.omega_hat);
        }
        _ => {}
    }
    let opts = fit_options(cfg);
    let init = match cfg.init {
        InitKind::Identity => SpdMatrix::identity(cfg.p),
        InitKind::RandomSpd(seed) => {
            let mut rng = stream(cfg.seed ^ seed, run as u64, Purpose::Init, 0);
            random_spd(cfg.p, 0.5, 2.0, &mut rng)?
        }
        InitKind::MomOutput => fit_mom_rgd(data, &opts)?.omega_hat,
    };
    let opts = opts.with_init(init);
    Ok(match cfg.estimator {
        EstimatorKind::MomRgd => fit_mom_rgd(data, &opts)?.omega_hat,
        EstimatorKind::MomL1 => fit_l1_prox_rgd(data, &opts)?.omega_hat,
        EstimatorKind::Mle => fit_mle_rgd(data, data.sigma2, &opts)?.omega_hat,
        EstimatorKind::CorrelationSplit(l0) => fit_correlation_split(data, l0, cfg.lambda_tilde, &opts)?.omega_hat,
        EstimatorKind::OracleOmega | EstimatorKind::Identity | EstimatorKind::CorrelationFullRank => {
            unreachable!("handled above")
        }
    })
}

fn simulate_run(cfg: &ExperimentConfig, setting: &Setting, run: usize, lambdas: &[Vec<f64>]) -> Result<RunRecord> {
    let r = run as u64;
    let mut rng = stream(cfg.seed, r, Purpose::Training, 0);
    let mut tasks: Vec<_> = cfg.schedule().into_iter().map(|n| setting.train.sample(n, &mut rng)).collect();
    let sigma2_used = match cfg.sigma2_mode {
        Sigma2Mode::Known => cfg.sigma2,
        Sigma2Mode::Dicker => {
            let held = tasks.remove(0);
            dicker_sigma2(&held.x, &held.y, &setting.sigma_train)?.clamped()
        }
    };
    let data = MetaDataset::new(tasks, Some(setting.omega.clone()), sigma2_used)?;
    let weight = estimate_weight(cfg, &data, &setting.omega, run)?;
    let frob_err = (weight.as_matrix() - setting.omega.as_matrix()).norm();
    let identity = SpdMatrix::identity(cfg.p);

    let mut design_hashes = Vec::with_capacity(cfg.n_new.len());
    let mut evaluations = Vec::with_capacity(cfg.n_new.len());
    for (j, (&n, grid)) in cfg.n_new.iter().zip(lambdas).enumerate() {
        let mut rng = stream(cfg.seed, r, Purpose::NewTask, j as u64);
        let task = setting.test.sample(n, &mut rng);
        design_hashes.push(design_hash(&task.x));
        let beta = task.beta_true.as_ref().expect("sampled tasks carry coefficients");
        let sigma_hat = sample_covariance(&task.x);
        let mut per_lambda = Vec::with_capacity(grid.len());
        for &lambda in grid {
            let risk = |w: &SpdMatrix| -> Result<f64> {
                match cfg.risk_mode {
                    RiskMode::Empirical => {
                        let fit = generalized_ridge(&task.x, &task.y, lambda, w)?;
                        let mut mc = stream(cfg.seed, r, Purpose::MonteCarlo, j as u64);
                        empirical_risk(&fit.beta, beta, &setting.sigma_test, cfg.sigma2, cfg.m_test, &mut mc)
                    }
                    RiskMode::Exact => Ok(plugin_risk_exact(
                        &setting.omega,
                        w,
                        &setting.sigma_test,
                        &sigma_hat,
                        cfg.sigma2,
                        lambda,
                        n,
                    )?
                    .total),
                }
            };
            per_lambda.push(Evaluation { lambda, risk_identity: risk(&identity)?, risk_estimated: risk(&weight)? });
        }
        evaluations.push(per_lambda);
    }
    Ok(RunRecord { run, frob_err, sigma2_used, design_hashes, evaluations })
}

/// Runs every configured run in parallel, returning records in run order
/// alongside the failures.
pub fn run_records_with(cfg: &ExperimentConfig, lambdas: &[Vec<f64>]) -> Result<(Vec<RunRecord>, Vec<RunFailure>)> {
    let setting = Setting::new(cfg)?;
    let pool = thread_pool()?;
    let results: Vec<Result<RunRecord>> =
        pool.install(|| (0..cfg.runs).into_par_iter().map(|run| simulate_run(cfg, &setting, run, lambdas)).collect());
    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (run, res) in results.into_iter().enumerate() {
        match res {
            Ok(rec) => records.push(rec),
            Err(e) if e.is_config() && !matches!(e, Error::InvalidInput(_)) => return Err(e),
            Err(e) => failures.push(RunFailure { run, message: e.to_string() }),
        }
    }
    Ok((records, failures))
}

fn rule_lambdas(cfg: &ExperimentConfig) -> Vec<Vec<f64>> {
    cfg.n_new.iter().map(|&n| vec![cfg.lambda_rule.lambda(cfg.p, n, cfg.sigma2)]).collect()
}

/// Per-run records at the configured λ rule.
pub fn run_records(cfg: &ExperimentConfig) -> Result<(Vec<RunRecord>, Vec<RunFailure>)> {
    run_records_with(cfg, &rule_lambdas(cfg))
}

fn all_failed(failures: &[RunFailure]) -> Error {
    Error::RunsFailed {
        failed: failures.len(),
        first: failures.first().map_or_else(String::new, |f| f.message.clone()),
    }
}

/// Algorithm driver: averaged risks per new-task size.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutcome> {
    let lambdas = rule_lambdas(cfg);
    let (records, failures) = run_records_with(cfg, &lambdas)?;
    if records.is_empty() {
        return Err(all_failed(&failures));
    }
    let count = records.len() as f64;
    let frob = records.iter().map(|r| r.frob_err).sum::<f64>() / count;
    let mut rows = Vec::with_capacity(cfg.n_new.len());
    for (j, &n) in cfg.n_new.iter().enumerate() {
        let lambda = lambdas[j][0];
        let mean = |f: fn(&Evaluation) -> f64| records.iter().map(|r| f(&r.evaluations[j][0])).sum::<f64>() / count;
        let limit = LimitEvaluator::new(cfg, n)?.risk(lambda, cfg.sigma2)?;
        rows.push(SummaryRow::new(
            n,
            mean(|e| e.risk_identity),
            mean(|e| e.risk_estimated),
            limit,
            Some(frob),
            records.len(),
            cfg.seed,
        ));
    }
    Ok(ExperimentOutcome { rows, failures })
}

/// Empirical (or exact) plug-in risk averaged over runs for λ = c·pσ²/n_new.
pub fn c_sweep(cfg: &ExperimentConfig, c_grid: &[f64]) -> Result<Vec<SweepRow>> {
    if c_grid.is_empty() || c_grid.iter().any(|&c| !(c > 0.0)) {
        return Err(Error::Config("c grid must be non-empty and positive".into()));
    }
    let lambdas: Vec<Vec<f64>> = cfg
        .n_new
        .iter()
        .map(|&n| c_grid.iter().map(|&c| crate::risk::optimal_lambda_finite(cfg.p, n, cfg.sigma2, c)).collect())
        .collect();
    let (records, failures) = run_records_with(cfg, &lambdas)?;
    if records.is_empty() {
        return Err(all_failed(&failures));
    }
    let count = records.len() as f64;
    let mut rows = Vec::new();
    for (j, &n) in cfg.n_new.iter().enumerate() {
        for (k, &c) in c_grid.iter().enumerate() {
            let mean = |f: fn(&Evaluation) -> f64| records.iter().map(|r| f(&r.evaluations[j][k])).sum::<f64>() / count;
            rows.push(SweepRow {
                c,
                n_new: n,
                lambda: lambdas[j][k],
                risk_identity: mean(|e| e.risk_identity),
                risk_estimated: mean(|e| e.risk_estimated),
                run_count: records.len(),
            });
        }
    }
    Ok(rows)
}

/// Limiting risk over a λ grid for every configured new-task size.
pub fn risk_curve(cfg: &ExperimentConfig, lambda_grid: &[f64]) -> Result<Vec<CurveRow>> {
    if lambda_grid.is_empty() || lambda_grid.iter().any(|&l| !(l > 0.0)) || lambda_grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Config("lambda grid must be positive and ascending".into()));
    }
    cfg.validate()?;
    let mut rows = Vec::new();
    for &n in &cfg.n_new {
        let eval = LimitEvaluator::new(cfg, n)?;
        for &lambda in lambda_grid {
            let (risk, status) = match eval.risk(lambda, cfg.sigma2) {
                Ok(r) => (r, "ok".to_string()),
                Err(e) => (f64::NAN, e.to_string()),
            };
            rows.push(CurveRow { n_new: n, lambda, risk, status });
        }
    }
    Ok(rows)
}

/// How the limiting risk is obtained for a configuration.
#[derive(Clone, Debug, PartialEq)]
pub enum LimitEvaluator {
    /// Σ = ϱΩ⁻¹: closed form.
    ClosedForm { gamma: f64, rho: f64 },
    /// Known limiting law of Ω^{1/2}ΣΩ^{1/2}: fixed point.
    Law { gamma: f64, law: SpectralLaw },
    /// Eigenvalues of a surrogate sample matrix (already p̃ of them).
    Spectrum { gamma: f64, eigs: Vec<f64> },
}

impl LimitEvaluator {
    pub fn new(cfg: &ExperimentConfig, n_new: usize) -> Result<Self> {
        let gamma = cfg.p as f64 / n_new as f64;
        if cfg.limit_mode == LimitMode::Auto {
            if let Some(known) = known_limit(&cfg.omega, &cfg.sigma_test, gamma) {
                return Ok(known);
            }
        }
        let j = cfg.n_new.iter().position(|&n| n == n_new).unwrap_or(0);
        Ok(LimitEvaluator::Spectrum { gamma, eigs: surrogate_spectrum(cfg, n_new, j as u64)? })
    }

    pub fn risk(&self, lambda: f64, sigma2: f64) -> Result<f64> {
        match self {
            LimitEvaluator::ClosedForm { gamma, rho } => {
                if !(lambda > 0.0) {
                    return Err(Error::NonPositiveLambda(lambda));
                }
                Ok(mp_law_risk(lambda, *gamma, sigma2, *rho))
            }
            LimitEvaluator::Law { gamma, law } => {
                let eval = fixed_point_stieltjes(law, *gamma, lambda, FIXED_POINT_ITERS, FIXED_POINT_TOL)?;
                limiting_risk(&eval, sigma2)
            }
            LimitEvaluator::Spectrum { gamma, eigs } => spectrum_limiting_risk(eigs, *gamma, lambda, sigma2),
        }
    }
}

fn known_limit(omega: &OmegaSpec, sigma: &SigmaSpec, gamma: f64) -> Option<LimitEvaluator> {
    let law = match (omega, sigma) {
        (_, SigmaSpec::ScaledInverseOmega { rho }) => return Some(LimitEvaluator::ClosedForm { gamma, rho: *rho }),
        (OmegaSpec::Identity, SigmaSpec::Identity | SigmaSpec::PowerOfOmega { .. }) => {
            return Some(LimitEvaluator::ClosedForm { gamma, rho: 1.0 })
        }
        // a single differing diagonal entry does not move the limiting law
        (OmegaSpec::Identity, SigmaSpec::BlockDiag { d, .. }) => SpectralLaw::PointMass(*d),
        (OmegaSpec::Tridiagonal { a, b }, SigmaSpec::Identity) => {
            SpectralLaw::ShiftedArcsine { center: *a, halfwidth: 2.0 * b.abs() }
        }
        (OmegaSpec::Tridiagonal { a, b }, SigmaSpec::BlockDiag { d, .. }) => {
            SpectralLaw::ShiftedArcsine { center: a * d, halfwidth: 2.0 * b.abs() * d }
        }
        (OmegaSpec::Tridiagonal { a, b }, SigmaSpec::PowerOfOmega { kappa }) => {
            SpectralLaw::PowerTransformedArcsine { center: *a, halfwidth: 2.0 * b.abs(), kappa: *kappa }
        }
        _ => return None,
    };
    Some(LimitEvaluator::Law { gamma, law })
}

/// The min(n, p) nonzero eigenvalues of Ω^{1/2}XᵀXΩ^{1/2}/n, padded with
/// zeros to p entries.
pub fn companion_spectrum(omega: &SpdMatrix, x: &DMatrix<f64>) -> Result<Vec<f64>> {
    let (n, p) = x.shape();
    crate::error::check_dim("design columns", omega.dim(), p)?;
    let scale = 1.0 / n as f64;
    let small = if n <= p {
        let xo = x * omega.as_matrix();
        (&xo * x.transpose()) * scale
    } else {
        let half = spd_sqrt(omega)?.into_matrix();
        let xh = x * half;
        xh.tr_mul(&xh) * scale
    };
    let small = crate::spd::symmetrize(&small).into_matrix();
    let mut eigs: Vec<f64> = small.symmetric_eigenvalues().iter().map(|&v| v.max(0.0)).collect();
    eigs.resize(p, 0.0);
    Ok(eigs)
}

/// Limiting risk with the transforms estimated from a supplied spectrum.
pub fn spectrum_limiting_risk(eigs: &[f64], gamma: f64, lambda: f64, sigma2: f64) -> Result<f64> {
    let (s, s_prime) = stieltjes_from_eigs(eigs, lambda)?;
    limiting_risk(&StieltjesEval::from_s(s, s_prime, lambda, gamma), sigma2)
}

fn surrogate_spectrum(cfg: &ExperimentConfig, n_new: usize, index: u64) -> Result<Vec<f64>> {
    let (ps, ns) = cfg.surrogate.dims(cfg.p, n_new)?;
    if matches!(cfg.omega, OmegaSpec::Explicit(_)) && ps != cfg.p {
        return Err(Error::Config("an explicit omega cannot be resized for the surrogate".into()));
    }
    let omega = cfg.omega.build(ps)?;
    let sigma = realize_sigma(&cfg.sigma_test, &omega)?;
    let sampler = TaskSampler::new(&omega, &sigma, cfg.sigma2)?;
    let mut rng = stream(cfg.seed, SHARED_RUN, Purpose::Surrogate, index);
    let x = sampler.sample_design(ns, &mut rng);
    companion_spectrum(&omega, &x)
}

/// Limiting risk from a surrogate design of size (p̃, ñ) with p̃/ñ = p/n_new.
pub fn surrogate_limiting_risk(cfg: &ExperimentConfig, n_new: usize, lambda: f64) -> Result<f64> {
    cfg.validate()?;
    let eigs = surrogate_spectrum(cfg, n_new, 0)?;
    spectrum_limiting_risk(&eigs, cfg.p as f64 / n_new as f64, lambda, cfg.sigma2)
}
