use std::path::Path;
use std::process::{Command, Output};

use metaridge::harness::format_tasks;
use metaridge::model::{build_tridiagonal, sample_meta_dataset};
use metaridge::SpdMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use tempfile::TempDir;

const CONFIG: &str = "\
# small run
p = 6
n_schedule = 10x40
n_new = 4, 8
sigma2 = 1
lambda_rule = scaled_optimal
estimator = mom
runs = 4
m_test = 50
seed = 3
c_grid = 0.9, 1, 1.1
";

fn metaridge(args: &[&str], threads: Option<&str>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_metaridge"));
    cmd.args(args).env_remove("METARIDGE_THREADS");
    if let Some(t) = threads {
        cmd.env("METARIDGE_THREADS", t);
    }
    cmd.output().unwrap()
}

fn write(dir: &TempDir, name: &str, text: &str) -> String {
    let path = dir.path().join(name);
    std::fs::write(&path, text).unwrap();
    path.to_str().unwrap().to_string()
}

fn path(dir: &TempDir, name: &str) -> String {
    dir.path().join(name).to_str().unwrap().to_string()
}

fn read(p: &str) -> String {
    std::fs::read_to_string(Path::new(p)).unwrap()
}

#[test]
fn simulate_prints_csv_that_ignores_thread_count() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", CONFIG);
    let one = metaridge(&["simulate", "--config", &cfg], Some("1"));
    let two = metaridge(&["simulate", "--config", &cfg], Some("3"));
    assert_eq!(one.status.code(), Some(0), "{}", String::from_utf8_lossy(&one.stderr));
    assert_eq!(one.stdout, two.stdout);
    let text = String::from_utf8(one.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("n_new,risk_identity,risk_estimated,risk_limit,diff_pct,frob_err,run_count,seed"));
    assert_eq!(lines.count(), 2);
}

#[test]
fn simulate_writes_json_to_file() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", CONFIG);
    let out = path(&dir, "rows.json");
    let res = metaridge(&["simulate", "--config", &cfg, "--out", &out, "--format", "json"], None);
    assert_eq!(res.status.code(), Some(0));
    let rows: Vec<metaridge::harness::SummaryRow> = serde_json::from_str(&read(&out)).unwrap();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.run_count == 4 && r.seed == 3));
}

#[test]
fn config_and_io_problems_exit_with_two() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", CONFIG);
    let missing = path(&dir, "nope.cfg");
    assert_eq!(metaridge(&["simulate", "--config", &missing], None).status.code(), Some(2));
    let typo = write(&dir, "typo.cfg", &CONFIG.replace("runs = 4", "runz = 4"));
    assert_eq!(metaridge(&["simulate", "--config", &typo], None).status.code(), Some(2));
    let no_rule = write(&dir, "rule.cfg", &CONFIG.replace("lambda_rule = scaled_optimal\n", ""));
    assert_eq!(metaridge(&["simulate", "--config", &no_rule], None).status.code(), Some(2));
    assert_eq!(metaridge(&["simulate", "--config", &cfg], Some("zero")).status.code(), Some(2));
    assert_eq!(metaridge(&["simulate", "--config", &cfg], Some("0")).status.code(), Some(2));
    assert_eq!(metaridge(&["simulate", "--config", &cfg, "--format", "xml"], None).status.code(), Some(2));
    let unwritable = path(&dir, "no/such/dir/out.csv");
    assert_eq!(metaridge(&["c-sweep", "--config", &cfg, "--out", &unwritable], None).status.code(), Some(2));
    assert_eq!(metaridge(&["bogus"], None).status.code(), Some(2));
}

#[test]
fn risk_curve_writes_one_row_per_point_and_size() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", CONFIG);
    let out = path(&dir, "curve.csv");
    let args = ["risk-curve", "--config", &cfg, "--lambda-min", "0.5", "--lambda-max", "5", "--points", "10", "--out", &out];
    assert_eq!(metaridge(&args, None).status.code(), Some(0));
    let text = read(&out);
    assert!(text.starts_with("n_new,lambda,risk,status\n"));
    assert_eq!(text.lines().count(), 1 + 2 * 10);
    assert!(text.lines().skip(1).all(|l| l.ends_with(",ok")));
    let bad = ["risk-curve", "--config", &cfg, "--lambda-min", "5", "--lambda-max", "1", "--points", "10", "--out", &out];
    assert_eq!(metaridge(&bad, None).status.code(), Some(2));
}

#[test]
fn c_sweep_covers_the_grid() {
    let dir = TempDir::new().unwrap();
    let cfg = write(&dir, "run.cfg", CONFIG);
    let out = path(&dir, "sweep.csv");
    assert_eq!(metaridge(&["c-sweep", "--config", &cfg, "--out", &out], None).status.code(), Some(0));
    let text = read(&out);
    assert!(text.starts_with("c,n_new,lambda,risk_identity,risk_estimated,run_count\n"));
    assert_eq!(text.lines().count(), 1 + 3 * 2);
}

fn archive(dir: &TempDir, n: usize, tasks: usize) -> String {
    let omega = build_tridiagonal(5, 16.0, 5.0).unwrap();
    let data = sample_meta_dataset(&vec![n; tasks], &omega, &SpdMatrix::identity(5), 1.0, &mut ChaCha20Rng::seed_from_u64(9)).unwrap();
    write(dir, &format!("tasks_{n}.txt"), &format_tasks(&data.tasks).unwrap())
}

fn read_matrix(p: &str) -> Vec<Vec<f64>> {
    read(p).lines().map(|l| l.split_whitespace().map(|v| v.parse().unwrap()).collect()).collect()
}

#[test]
fn estimate_writes_a_symmetric_matrix_for_every_method() {
    let dir = TempDir::new().unwrap();
    let tasks = archive(&dir, 8, 60);
    for (method, extra) in [("mom", vec![]), ("mom-l1", vec!["--lambda-tilde", "0.5"]), ("mle", vec![]), ("corr", vec![])] {
        let out = path(&dir, &format!("{method}.txt"));
        let mut args = vec!["estimate", "--tasks", &tasks, "--method", method, "--out", &out];
        args.extend(extra);
        let res = metaridge(&args, None);
        assert_eq!(res.status.code(), Some(0), "{method}: {}", String::from_utf8_lossy(&res.stderr));
        let m = read_matrix(&out);
        assert_eq!(m.len(), 5);
        for (i, row) in m.iter().enumerate() {
            assert_eq!(row.len(), 5);
            assert!(row[i] > 0.0);
            for (j, &v) in row.iter().enumerate() {
                assert_eq!(v, m[j][i], "{method}");
            }
        }
    }
    let out = path(&dir, "split.txt");
    let args = ["estimate", "--tasks", &tasks, "--method", "corr", "--l0", "30", "--out", &out];
    assert_eq!(metaridge(&args, None).status.code(), Some(0));
}

#[test]
fn estimate_rejects_bad_archives_and_fails_numerically_on_rank_deficient_tasks() {
    let dir = TempDir::new().unwrap();
    let out = path(&dir, "omega.txt");
    let broken = write(&dir, "broken.txt", "5 1\n2\n1 2 3\n");
    assert_eq!(metaridge(&["estimate", "--tasks", &broken, "--method", "mom", "--out", &out], None).status.code(), Some(2));
    let thin = archive(&dir, 3, 20);
    let res = metaridge(&["estimate", "--tasks", &thin, "--method", "corr", "--out", &out], None);
    assert_eq!(res.status.code(), Some(3), "{}", String::from_utf8_lossy(&res.stderr));
}

#[test]
fn gradcheck_reports_both_errors() {
    let res = metaridge(&["gradcheck", "--p", "5", "--l", "4", "--seed", "1"], None);
    assert_eq!(res.status.code(), Some(0));
    let text = String::from_utf8(res.stdout).unwrap();
    let errs: Vec<f64> = text.lines().map(|l| l.split_whitespace().nth(1).unwrap().parse().unwrap()).collect();
    assert_eq!(errs.len(), 2);
    assert!(errs.iter().all(|&e| e < 1e-5), "{errs:?}");
    assert!(text.starts_with("mom "));
    assert_eq!(metaridge(&["gradcheck", "--p", "0", "--l", "4", "--seed", "1"], None).status.code(), Some(2));
}

#[test]
fn shipped_presets_parse_and_curves_run() {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let p = entry.unwrap().path();
        if p.extension().is_some_and(|e| e == "cfg") {
            metaridge::harness::ExperimentConfig::from_file(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()));
            count += 1;
        }
    }
    assert!(count >= 5);

    let tmp = TempDir::new().unwrap();
    let out = path(&tmp, "mp.csv");
    let cfg = dir.join("mp_curves.cfg");
    let args = ["risk-curve", "--config", cfg.to_str().unwrap(), "--lambda-min", "0.1", "--lambda-max", "10", "--points", "100", "--out", &out];
    assert_eq!(metaridge(&args, None).status.code(), Some(0));
    assert_eq!(read(&out).lines().count(), 1 + 5 * 100);
}
