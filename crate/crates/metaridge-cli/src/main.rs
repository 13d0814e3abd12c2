use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use metaridge::estimators::{
    fit_correlation_fullrank, fit_correlation_split, fit_l1_prox_rgd, fit_mle_rgd, fit_mom_rgd, mle_gradcheck,
    mom_gradcheck, FitOptions,
};
use metaridge::harness::emit::{write_table, Cell};
use metaridge::harness::{c_sweep, fmt_f64, read_dataset, render, risk_curve, run_experiment, ExperimentConfig, Format};
use metaridge::{Error, Result, SpdMatrix};

const GRADCHECK_TOL: f64 = 1e-5;
const GRADCHECK_DIRECTIONS: usize = 20;

#[derive(Parser)]
#[command(name = "metaridge", version, about = "Generalized ridge meta-learning experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the simulation and write one summary row per new-task size.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Defaults to standard output.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "csv")]
        format: Format,
    },
    /// Tabulate the limiting risk over an evenly spaced λ grid.
    RiskCurve {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        lambda_min: f64,
        #[arg(long)]
        lambda_max: f64,
        #[arg(long)]
        points: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Average risk for λ = c·pσ²/n over the configured c grid.
    CSweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Estimate the hyper-covariance from a task archive.
    Estimate {
        #[arg(long)]
        tasks: PathBuf,
        #[arg(long, value_enum)]
        method: Method,
        #[arg(long)]
        out: PathBuf,
        /// Noise variance of the tasks.
        #[arg(long, default_value_t = 1.0)]
        sigma2: f64,
        /// Off-diagonal L1 weight for mom-l1 and corr.
        #[arg(long, default_value_t = 0.0)]
        lambda_tilde: f64,
        /// For corr: use the first L0 tasks for the diagonal and the rest
        /// for the correlation. Without it every task must have n >= p.
        #[arg(long)]
        l0: Option<usize>,
        #[arg(long, default_value_t = 2000)]
        max_iter: usize,
        #[arg(long, default_value_t = 1e-6)]
        grad_tol: f64,
    },
    /// Finite-difference check of the MoM and likelihood gradients.
    Gradcheck {
        #[arg(long)]
        p: usize,
        #[arg(long)]
        l: usize,
        #[arg(long)]
        seed: u64,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Method {
    Mom,
    MomL1,
    Mle,
    Corr,
}

/// Outcome of a subcommand that ran to completion.
enum Status {
    Ok,
    NumericalFailure,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(Status::Ok) => ExitCode::SUCCESS,
        Ok(Status::NumericalFailure) => ExitCode::from(3),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_config() { 2 } else { 3 })
        }
    }
}

fn load_config(path: &Path) -> Result<ExperimentConfig> {
    ExperimentConfig::from_file(path)
}

fn write_out(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn run(command: Command) -> Result<Status> {
    match command {
        Command::Simulate { config, out, format } => {
            let cfg = load_config(&config)?;
            let outcome = run_experiment(&cfg)?;
            for f in &outcome.failures {
                eprintln!("run {} failed: {}", f.run, f.message);
            }
            let text = render(&outcome.rows, format);
            match out {
                Some(path) => write_out(&path, &text)?,
                None => std::io::stdout().write_all(text.as_bytes())?,
            }
        }
        Command::RiskCurve { config, lambda_min, lambda_max, points, out } => {
            let ordered = lambda_min > 0.0 && lambda_max > lambda_min;
            if points < 2 || !ordered {
                return Err(Error::Config("need 0 < lambda-min < lambda-max and points >= 2".into()));
            }
            let cfg = load_config(&config)?;
            let step = (lambda_max - lambda_min) / (points - 1) as f64;
            let grid: Vec<f64> = (0..points).map(|k| lambda_min + k as f64 * step).collect();
            let rows: Vec<Vec<Cell>> = risk_curve(&cfg, &grid)?
                .into_iter()
                .map(|r| vec![Cell::Int(r.n_new as u64), Cell::Real(r.lambda), Cell::Real(r.risk), Cell::Text(r.status)])
                .collect();
            writable(&out, write_table(&out, &["n_new", "lambda", "risk", "status"], &rows))?;
        }
        Command::CSweep { config, out } => {
            let cfg = load_config(&config)?;
            let rows: Vec<Vec<Cell>> = c_sweep(&cfg, &cfg.c_grid)?
                .into_iter()
                .map(|r| {
                    vec![
                        Cell::Real(r.c),
                        Cell::Int(r.n_new as u64),
                        Cell::Real(r.lambda),
                        Cell::Real(r.risk_identity),
                        Cell::Real(r.risk_estimated),
                        Cell::Int(r.run_count as u64),
                    ]
                })
                .collect();
            let header = ["c", "n_new", "lambda", "risk_identity", "risk_estimated", "run_count"];
            writable(&out, write_table(&out, &header, &rows))?;
        }
        Command::Estimate { tasks, method, out, sigma2, lambda_tilde, l0, max_iter, grad_tol } => {
            let data = read_dataset(&tasks, sigma2)?;
            let p = data.p();
            let opts = FitOptions::new(p).with_max_iter(max_iter).with_grad_tol(grad_tol);
            let omega = match method {
                Method::Mom => fit_mom_rgd(&data, &opts)?.omega_hat,
                Method::MomL1 => fit_l1_prox_rgd(&data, &opts.with_lambda_tilde(lambda_tilde))?.omega_hat,
                Method::Mle => fit_mle_rgd(&data, sigma2, &opts)?.omega_hat,
                Method::Corr => match l0 {
                    Some(l0) => fit_correlation_split(&data, l0, lambda_tilde, &opts)?.omega_hat,
                    None => fit_correlation_fullrank(&data.tasks, lambda_tilde, opts.eig_floor)?.omega_hat,
                },
            };
            write_out(&out, &dense_text(&omega))?;
        }
        Command::Gradcheck { p, l, seed } => {
            if p == 0 || l == 0 {
                return Err(Error::Config("p and l must be positive".into()));
            }
            let mom = mom_gradcheck(p, l, seed, GRADCHECK_DIRECTIONS)?;
            let mle = mle_gradcheck(p, l, seed, GRADCHECK_DIRECTIONS)?;
            println!("mom {}", fmt_f64(mom));
            println!("mle {}", fmt_f64(mle));
            if !(mom <= GRADCHECK_TOL && mle <= GRADCHECK_TOL) {
                eprintln!("gradient check above {GRADCHECK_TOL:e}");
                return Ok(Status::NumericalFailure);
            }
        }
    }
    Ok(Status::Ok)
}

/// Adds the path to I/O errors.
fn writable(path: &Path, result: Result<()>) -> Result<()> {
    result.map_err(|e| match e {
        Error::Io(io) => Error::Config(format!("{}: {io}", path.display())),
        other => other,
    })
}

fn dense_text(m: &SpdMatrix) -> String {
    let m = m.as_matrix();
    let mut out = String::new();
    for i in 0..m.nrows() {
        let row: Vec<String> = m.row(i).iter().map(|&v| fmt_f64(v)).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}
