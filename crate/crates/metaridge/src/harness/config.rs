//! Flat `key = value` experiment configuration.
//!
//! ```text
//! # comments start with '#'
//! p = 32
//! n_schedule = 24x3200
//! n_new = 12, 24, 48
//! omega.kind = tridiagonal
//! omega.a = 16
//! omega.b = 5
//! sigma2 = 1
//! lambda_rule = scaled_optimal
//! lambda_c = 1
//! estimator = mom
//! ```

use std::collections::BTreeMap;
use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{OmegaSpec, SigmaSpec};

/// How the ridge parameter for the new task is chosen.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub enum LambdaRule {
    Fixed(f64),
    /// λ = c·pσ²/n_new.
    ScaledOptimal(f64),
}

impl LambdaRule {
    pub fn lambda(&self, p: usize, n_new: usize, sigma2: f64) -> f64 {
        match *self {
            LambdaRule::Fixed(l) => l,
            LambdaRule::ScaledOptimal(c) => crate::risk::optimal_lambda_finite(p, n_new, sigma2, c),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum EstimatorKind {
    OracleOmega,
    Identity,
    MomRgd,
    MomL1,
    Mle,
    /// Full-rank tasks first, then the rest.
    CorrelationSplit(usize),
    CorrelationFullRank,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum InitKind {
    Identity,
    RandomSpd(u64),
    MomOutput,
}

/// Noise variance used by the weight estimators.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Sigma2Mode {
    Known,
    /// Estimated from the first training task, which is then held out.
    Dicker,
}

/// Which risk is averaged into `risk_identity` / `risk_estimated`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum RiskMode {
    /// Monte Carlo over `m_test` fresh samples of the new task.
    Empirical,
    /// Closed-form expectation over coefficients and noise.
    Exact,
}

/// Source of the limiting-risk column.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum LimitMode {
    /// Closed form or fixed point when the spectral law is known, else surrogate.
    Auto,
    Surrogate,
}

/// Surrogate dimensions for the limiting-risk approximation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum Surrogate {
    /// p̃ = k·p and ñ = k·n_new.
    Scale(usize),
    Explicit { p: usize, n: usize },
}

impl Surrogate {
    /// (p̃, ñ) for a given new-task size.
    pub fn dims(&self, p: usize, n_new: usize) -> Result<(usize, usize)> {
        match *self {
            Surrogate::Scale(k) => Ok((k * p, k * n_new)),
            Surrogate::Explicit { p: ps, n: ns } => {
                if ps as u128 * n_new as u128 != ns as u128 * p as u128 {
                    return Err(Error::Config(format!(
                        "surrogate ratio {ps}/{ns} differs from p/n_new = {p}/{n_new}"
                    )));
                }
                Ok((ps, ns))
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ExperimentConfig {
    pub p: usize,
    /// (sample size, task count) pairs for the training tasks.
    pub n_schedule: Vec<(usize, usize)>,
    pub n_new: Vec<usize>,
    pub runs: usize,
    pub omega: OmegaSpec,
    pub sigma_train: SigmaSpec,
    pub sigma_test: SigmaSpec,
    pub sigma2: f64,
    pub sigma2_mode: Sigma2Mode,
    pub lambda_rule: LambdaRule,
    pub estimator: EstimatorKind,
    pub init: InitKind,
    pub lambda_tilde: f64,
    pub surrogate: Surrogate,
    pub limit_mode: LimitMode,
    pub risk_mode: RiskMode,
    pub m_test: usize,
    pub seed: u64,
    pub c_grid: Vec<f64>,
    pub max_iter: usize,
    pub grad_tol: f64,
}

impl ExperimentConfig {
    /// Number of training tasks L.
    pub fn task_count(&self) -> usize {
        self.n_schedule.iter().map(|&(_, c)| c).sum()
    }

    pub fn schedule(&self) -> Vec<usize> {
        crate::model::expand_schedule(&self.n_schedule)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| Error::Config(format!("{}: {e}", path.as_ref().display())))?;
        text.parse()
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.p == 0 {
            return bad("p must be positive".into());
        }
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.n_schedule.is_empty() || self.n_schedule.iter().any(|&(n, c)| n == 0 || c == 0) {
            return bad("n_schedule needs positive sizes and counts".into());
        }
        if self.n_new.is_empty() || self.n_new.contains(&0) {
            return bad("n_new needs positive sizes".into());
        }
        if !(self.sigma2 > 0.0) {
            return bad(format!("sigma2 must be positive, got {}", self.sigma2));
        }
        match self.lambda_rule {
            LambdaRule::Fixed(l) | LambdaRule::ScaledOptimal(l) if !(l > 0.0) => {
                return bad(format!("lambda rule parameter must be positive, got {l}"));
            }
            _ => {}
        }
        if !(self.lambda_tilde >= 0.0) {
            return bad("lambda_tilde must be >= 0".into());
        }
        if self.m_test == 0 {
            return bad("m_test must be positive".into());
        }
        if self.c_grid.iter().any(|&c| !(c > 0.0)) {
            return bad("c_grid entries must be positive".into());
        }
        if self.sigma2_mode == Sigma2Mode::Dicker && self.task_count() < 2 {
            return bad("sigma2_mode = dicker holds out one task and needs L >= 2".into());
        }
        if let EstimatorKind::CorrelationSplit(l0) = self.estimator {
            if l0 == 0 || l0 >= self.task_count() {
                return bad(format!("corr.l0 = {l0} must lie in 1..L"));
            }
        }
        if let Surrogate::Scale(0) | Surrogate::Explicit { p: 0, .. } | Surrogate::Explicit { n: 0, .. } =
            self.surrogate
        {
            return bad("surrogate dimensions must be positive".into());
        }
        for &n in &self.n_new {
            self.surrogate.dims(self.p, n)?;
        }
        Ok(())
    }
}

struct Entries {
    map: BTreeMap<String, (usize, String)>,
}

impl Entries {
    fn take(&mut self, key: &str) -> Option<(usize, String)> {
        self.map.remove(key)
    }

    fn parse<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<T>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .parse()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse {key} = {v}"))),
        }
    }

    fn require<T: std::str::FromStr>(&mut self, key: &str) -> Result<T> {
        self.parse(key)?.ok_or_else(|| Error::Config(format!("missing key {key}")))
    }

    fn list<T: std::str::FromStr>(&mut self, key: &str) -> Result<Option<Vec<T>>> {
        match self.take(key) {
            None => Ok(None),
            Some((line, v)) => v
                .split(',')
                .map(|s| s.trim().parse())
                .collect::<std::result::Result<Vec<T>, _>>()
                .map(Some)
                .map_err(|_| Error::Config(format!("line {line}: cannot parse list {key} = {v}"))),
        }
    }
}

fn parse_schedule(text: &str) -> Result<Vec<(usize, usize)>> {
    text.split(',')
        .map(|part| {
            let part = part.trim();
            let (n, count) = part.split_once('x').unwrap_or((part, "1"));
            match (n.trim().parse(), count.trim().parse()) {
                (Ok(n), Ok(c)) => Ok((n, c)),
                _ => Err(Error::Config(format!("bad n_schedule entry '{part}'"))),
            }
        })
        .collect()
}

fn parse_omega(e: &mut Entries) -> Result<OmegaSpec> {
    let kind: String = e.parse("omega.kind")?.unwrap_or_else(|| "tridiagonal".into());
    match kind.as_str() {
        "tridiagonal" => Ok(OmegaSpec::Tridiagonal {
            a: e.parse("omega.a")?.unwrap_or(16.0),
            b: e.parse("omega.b")?.unwrap_or(5.0),
        }),
        "identity" => Ok(OmegaSpec::Identity),
        "power_law" => Ok(OmegaSpec::PowerLawEigen {
            exponent: e.require("omega.exponent")?,
            basis_seed: e.parse("omega.basis_seed")?.unwrap_or(0),
        }),
        other => Err(Error::Config(format!("unknown omega.kind '{other}'"))),
    }
}

fn parse_sigma(e: &mut Entries, prefix: &str, fallback: Option<SigmaSpec>) -> Result<SigmaSpec> {
    let kind: Option<String> = e.parse(&format!("{prefix}.kind"))?;
    let Some(kind) = kind else {
        return Ok(fallback.unwrap_or(SigmaSpec::Identity));
    };
    match kind.as_str() {
        "identity" => Ok(SigmaSpec::Identity),
        "scaled_inverse_omega" => Ok(SigmaSpec::ScaledInverseOmega {
            rho: e.parse(&format!("{prefix}.rho"))?.unwrap_or(1.0),
        }),
        "power_of_omega" => Ok(SigmaSpec::PowerOfOmega { kappa: e.require(&format!("{prefix}.kappa"))? }),
        "block_diag" => Ok(SigmaSpec::BlockDiag {
            c: e.require(&format!("{prefix}.c"))?,
            d: e.require(&format!("{prefix}.d"))?,
        }),
        other => Err(Error::Config(format!("unknown {prefix}.kind '{other}'"))),
    }
}

impl std::str::FromStr for ExperimentConfig {
    type Err = Error;

    fn from_str(text: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected key = value", idx + 1)))?;
            let key = k.trim().to_string();
            if map.insert(key.clone(), (idx + 1, v.trim().to_string())).is_some() {
                return Err(Error::Config(format!("line {}: duplicate key {key}", idx + 1)));
            }
        }
        let mut e = Entries { map };

        let p: usize = e.require("p")?;
        let n_schedule = match (e.take("n_schedule"), e.parse::<usize>("n_train")?, e.parse::<usize>("L")?) {
            (Some((_, s)), None, None) => parse_schedule(&s)?,
            (None, Some(n), Some(l)) => vec![(n, l)],
            _ => return Err(Error::Config("give either n_schedule or both n_train and L".into())),
        };
        let n_new = e.list("n_new")?.ok_or_else(|| Error::Config("missing key n_new".into()))?;
        let omega = parse_omega(&mut e)?;
        let shared = parse_sigma(&mut e, "sigma", None)?;
        let sigma_train = parse_sigma(&mut e, "sigma_train", Some(shared.clone()))?;
        let sigma_test = parse_sigma(&mut e, "sigma_test", Some(shared))?;
        let sigma2 = e.require("sigma2")?;
        let mode: String = e.parse("sigma2_mode")?.unwrap_or_else(|| "known".into());
        let sigma2_mode = match mode.as_str() {
            "known" => Sigma2Mode::Known,
            "dicker" => Sigma2Mode::Dicker,
            other => return Err(Error::Config(format!("unknown sigma2_mode '{other}'"))),
        };

        let rule: String = e.require("lambda_rule")?;
        let lambda_rule = match rule.as_str() {
            "fixed" => LambdaRule::Fixed(e.require("lambda")?),
            "scaled_optimal" => LambdaRule::ScaledOptimal(e.parse("lambda_c")?.unwrap_or(1.0)),
            other => return Err(Error::Config(format!("unknown lambda_rule '{other}'"))),
        };

        let est: String = e.parse("estimator")?.unwrap_or_else(|| "mom".into());
        let estimator = match est.as_str() {
            "oracle" => EstimatorKind::OracleOmega,
            "identity" => EstimatorKind::Identity,
            "mom" => EstimatorKind::MomRgd,
            "mom_l1" => EstimatorKind::MomL1,
            "mle" => EstimatorKind::Mle,
            "corr_split" => EstimatorKind::CorrelationSplit(e.require("corr.l0")?),
            "corr_fullrank" => EstimatorKind::CorrelationFullRank,
            other => return Err(Error::Config(format!("unknown estimator '{other}'"))),
        };

        let init_kind: String = e.parse("init")?.unwrap_or_else(|| "identity".into());
        let init = match init_kind.as_str() {
            "identity" => InitKind::Identity,
            "random_spd" => InitKind::RandomSpd(e.parse("init.seed")?.unwrap_or(0)),
            "mom_output" => InitKind::MomOutput,
            other => return Err(Error::Config(format!("unknown init '{other}'"))),
        };

        let surrogate = match (e.parse("surrogate.p")?, e.parse("surrogate.n")?, e.parse("surrogate.scale")?) {
            (Some(ps), Some(ns), None) => Surrogate::Explicit { p: ps, n: ns },
            (None, None, Some(k)) => Surrogate::Scale(k),
            (None, None, None) => Surrogate::Scale(1000usize.div_ceil(p.max(1))),
            _ => return Err(Error::Config("give surrogate.p and surrogate.n, or surrogate.scale".into())),
        };
        let limit: String = e.parse("limit")?.unwrap_or_else(|| "auto".into());
        let limit_mode = match limit.as_str() {
            "auto" => LimitMode::Auto,
            "surrogate" => LimitMode::Surrogate,
            other => return Err(Error::Config(format!("unknown limit '{other}'"))),
        };
        let risk: String = e.parse("risk_mode")?.unwrap_or_else(|| "empirical".into());
        let risk_mode = match risk.as_str() {
            "empirical" => RiskMode::Empirical,
            "exact" => RiskMode::Exact,
            other => return Err(Error::Config(format!("unknown risk_mode '{other}'"))),
        };

        let cfg = ExperimentConfig {
            p,
            n_schedule,
            n_new,
            runs: e.parse("runs")?.unwrap_or(50),
            omega,
            sigma_train,
            sigma_test,
            sigma2,
            sigma2_mode,
            lambda_rule,
            estimator,
            init,
            lambda_tilde: e.parse("lambda_tilde")?.unwrap_or(0.0),
            surrogate,
            limit_mode,
            risk_mode,
            m_test: e.parse("m_test")?.unwrap_or(200),
            seed: e.parse("seed")?.unwrap_or(0),
            c_grid: e
                .list("c_grid")?
                .unwrap_or_else(|| vec![0.8, 0.85, 0.9, 0.95, 1.0, 1.05, 1.1, 1.15, 1.2]),
            max_iter: e.parse("fit.max_iter")?.unwrap_or(2000),
            grad_tol: e.parse("fit.grad_tol")?.unwrap_or(1e-6),
        };
        if let Some((key, (line, _))) = e.map.into_iter().next() {
            return Err(Error::Config(format!("line {line}: unknown key {key}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
