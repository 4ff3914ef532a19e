use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn splk(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_splk"))
        .args(args)
        .env("RUST_LOG", "error")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> String {
    let out = splk(args);
    assert!(
        out.status.success(),
        "splk {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn path(dir: &Path, name: &str) -> String {
    dir.join(name).to_string_lossy().into_owned()
}

fn data_rows(csv: &str) -> Vec<&str> {
    csv.lines().filter(|l| !l.starts_with('#') && !l.trim().is_empty()).skip(1).collect()
}

#[test]
fn generate_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (path(dir.path(), "a.csv"), path(dir.path(), "b.csv"));
    ok(&["generate", "--preset", "syn3d", "--n", "50", "--seed", "4", "--out", &a]);
    ok(&["generate", "--preset", "syn3d", "--n", "50", "--seed", "4", "--out", &b]);
    let text = fs::read_to_string(&a).unwrap();
    assert_eq!(text, fs::read_to_string(&b).unwrap());
    assert!(text.starts_with("x0,x1,x2,y\n"));
    assert_eq!(text.lines().count(), 51);

    let aug = ok(&["generate", "--preset", "gp", "--dim", "1", "--n", "20", "--augment"]);
    assert!(aug.starts_with("x0,x1,y\n"));
}

#[test]
fn train_then_predict_appends_columns() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "train.csv");
    let model = path(dir.path(), "model.json");
    let preds = path(dir.path(), "preds.csv");
    ok(&["generate", "--preset", "syn3d", "--n", "400", "--seed", "1", "--out", &data]);
    let report = ok(&[
        "train", "--data", &data, "--method", "splk", "--subdomains", "2", "--max-iter", "15", "--model-out", &model,
    ]);
    assert!(report.contains("method = splk"));
    assert!(report.contains("n_train = 360"));
    assert!(report.contains("mse = "));

    // Query file still carries the target column; it is skipped as an input.
    ok(&["predict", "--model-in", &model, "--data", &data, "--out", &preds]);
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("x0,x1,x2,y,mean,variance,subdomain"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 400);
    for r in rows {
        let f: Vec<&str> = r.split(',').collect();
        assert_eq!(f.len(), 7);
        assert!(f[4].parse::<f64>().unwrap().is_finite());
        assert!(f[5].parse::<f64>().unwrap() >= 0.0);
        assert!(matches!(f[6], "0" | "1"));
    }
}

#[test]
fn predict_headerless_inputs_only() {
    let dir = tempfile::tempdir().unwrap();
    let data = path(dir.path(), "train.csv");
    let model = path(dir.path(), "model.json");
    let queries = path(dir.path(), "q.csv");
    ok(&["generate", "--preset", "gp", "--dim", "2", "--n", "80", "--seed", "2", "--out", &data]);
    ok(&["train", "--data", &data, "--method", "spgp", "--m", "8", "--max-iter", "10", "--train-frac", "1", "--model-out", &model]);
    fs::write(&queries, "1.0,2.0\n3.5,4.5\n\n").unwrap();
    let out = ok(&["predict", "--model-in", &model, "--data", &queries]);
    let rows: Vec<&str> = out.lines().collect();
    assert_eq!(rows.len(), 2);
    assert!(rows[0].starts_with("1.0,2.0,"));
    assert!(rows[0].ends_with(','), "spgp has no subdomain: {}", rows[0]);
}

#[test]
fn flags_override_config_file() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = path(dir.path(), "run.cfg");
    fs::write(&cfg, "# small run\npreset = gp\nn = 60\ndim = 1\nmethod = full\nmax_iter = 5\n").unwrap();
    let from_file = ok(&["train", "--config", &cfg]);
    assert!(from_file.contains("method = full"));
    assert!(from_file.contains("# max-iter = 5"));
    let overridden = ok(&["train", "--config", &cfg, "--method", "spgp", "--m", "5"]);
    assert!(overridden.contains("method = spgp"));
    assert!(overridden.contains("# method = spgp"));
}

#[test]
fn benchmark_rows_and_reproducible_mse() {
    let args = [
        "benchmark", "--preset", "gp", "--dim", "1", "--n", "120", "--method", "spgp", "--m", "4,8", "--seeds", "1,2",
        "--max-iter", "10",
    ];
    let a = ok(&args);
    let b = ok(&args);
    assert!(a.lines().any(|l| l.starts_with("# method = spgp")));
    assert!(a.lines().any(|l| l.starts_with("# data = generated gp")));
    let (ra, rb) = (data_rows(&a), data_rows(&b));
    assert_eq!(ra.len(), 4);
    let mse = |rows: &[&str]| -> Vec<String> { rows.iter().map(|r| r.split(',').nth(9).unwrap().to_string()).collect() };
    assert_eq!(mse(&ra), mse(&rb));
    assert!(ra.iter().all(|r| r.ends_with(",ok")));
}

#[test]
fn sweep_lambda_reports_control_points() {
    let out = ok(&[
        "sweep-lambda", "--preset", "syn3d", "--n", "600", "--subdomains", "2", "--lambda", "1,2", "--max-iter", "5",
    ]);
    let rows = data_rows(&out);
    assert_eq!(rows.len(), 2);
    let cps: Vec<&str> = rows.iter().map(|r| r.split(',').nth(10).unwrap()).collect();
    // One boundary in 3-D: (λ+1)² points.
    assert_eq!(cps, ["4", "9"]);
}

#[test]
fn failures_exit_nonzero_with_one_line() {
    for args in [
        vec!["predict", "--data", "nowhere.csv"],
        vec!["sweep-ks", "--method", "spgp", "--n", "50"],
        vec!["train", "--data", "/definitely/missing.csv"],
        vec!["train", "--preset", "nonsense"],
    ] {
        let out = splk(&args);
        assert!(!out.status.success(), "{args:?} should fail");
        let err = String::from_utf8(out.stderr).unwrap();
        assert_eq!(err.trim_end().lines().count(), 1, "{args:?}: {err}");
        assert!(err.starts_with("error: "));
    }
}
