use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use edgegae::io::{parse_dataset, read_dataset};
use edgegae_core::oracle::size_allocation;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_edgegae"));
    c.env_remove("EDGEGAE_THREADS");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?} failed: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap()
}

struct Trained {
    _dir: tempfile::TempDir,
    dir: PathBuf,
    data: PathBuf,
    ckpt: PathBuf,
}

const SMALL_MODEL: &[&str] = &["--hidden", "16", "--layers", "2", "--knn", "8", "--batch", "16"];

fn trained() -> Trained {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().to_path_buf();
    let data = path.join("train.txt");
    ok(&["generate", "--n-min", "8", "--n-max", "12", "--total", "100", "--seed", "3", "--out", p(&data)]);
    let ckpt = path.join("model.ckpt");
    let mut args = vec!["train", "--data", p(&data), "--epochs", "20", "--lr", "0.005", "--out", p(&ckpt)];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    Trained { _dir: dir, dir: path, data, ckpt }
}

fn log_losses(path: &Path) -> Vec<f64> {
    read(path).lines().skip(1).map(|l| l.split(',').nth(1).unwrap().parse().unwrap()).collect()
}

#[test]
fn generate_counts_and_reproducibility() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a.txt");
    let b = dir.path().join("b.txt");
    ok(&["generate", "--n-min", "8", "--n-max", "16", "--total", "900", "--seed", "1", "--out", p(&a)]);
    ok(&["--threads", "3", "generate", "--n-min", "8", "--n-max", "16", "--total", "900", "--seed", "1", "--out", p(&b)]);
    let text = read(&a);
    assert_eq!(text.lines().count(), 900);
    assert_eq!(text, read(&b));
    let data = parse_dataset(&text).unwrap();
    for (n, count) in size_allocation(8, 16, 900).unwrap() {
        assert_eq!(data.iter().filter(|i| i.n() == n).count(), count, "n = {n}");
    }
    // counts fall with size
    let c8 = data.iter().filter(|i| i.n() == 8).count();
    let c16 = data.iter().filter(|i| i.n() == 16).count();
    assert!(c8 > c16);

    let echo = dir.path().join("a.txt.config");
    let c = dir.path().join("c.txt");
    let out = run(&["--config", p(&echo), "generate", "--out", p(&c)]);
    assert!(out.status.success());
    assert_eq!(read(&c), text);
}

#[test]
fn generate_rejects_infeasible_allocation() {
    let dir = tempfile::tempdir().unwrap();
    let out = run(&["generate", "--total", "3", "--n-min", "8", "--n-max", "16", "--out", p(&dir.path().join("x"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(!String::from_utf8_lossy(&out.stderr).is_empty());
}

#[test]
fn usage_errors() {
    assert_eq!(run(&["--help"]).status.code(), Some(0));
    assert_eq!(run(&["--version"]).status.code(), Some(0));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--seed", "x", "--out", "/tmp/unused"]).status.code(), Some(1));
    assert_eq!(run(&["generate", "--n-min", "8"]).status.code(), Some(1));
    let out = run(&["train", "--data", "/nonexistent/data.txt", "--out", "/tmp/unused.ckpt"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn training_lowers_loss_and_logs_mode() {
    let t = trained();
    let losses = log_losses(&t.dir.join("model.ckpt.log.csv"));
    assert_eq!(losses.len(), 20);
    assert!(losses[19] < losses[0], "{losses:?}");
    assert!(t.ckpt.exists());
    assert!(read(&t.dir.join("model.ckpt.config")).contains("sampling = shuffle"));

    let active = t.dir.join("active.ckpt");
    let mut args = vec!["train", "--data", p(&t.data), "--epochs", "2", "--sampling", "active", "--out", p(&active)];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    let log = read(&t.dir.join("active.ckpt.log.csv"));
    assert_eq!(log.lines().next().unwrap(), "epoch,mean_loss,steps,sampling");
    assert!(log.lines().skip(1).all(|l| l.ends_with(",active")));
}

#[test]
fn resume_is_bitwise() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    ok(&["generate", "--n-min", "6", "--n-max", "9", "--total", "40", "--seed", "8", "--out", p(&data)]);
    let full = dir.path().join("full.ckpt");
    let mut args = vec!["train", "--data", p(&data), "--epochs", "6", "--checkpoint-every", "3", "--sampling", "active", "--out", p(&full)];
    args.extend_from_slice(SMALL_MODEL);
    ok(&args);
    let mid = dir.path().join("full.ckpt.epoch3");
    assert!(mid.exists());

    let resumed = dir.path().join("resumed.ckpt");
    let log = dir.path().join("resumed.log.csv");
    ok(&["train", "--data", p(&data), "--epochs", "6", "--resume", p(&mid), "--log", p(&log), "--out", p(&resumed)]);
    assert_eq!(std::fs::read(&full).unwrap(), std::fs::read(&resumed).unwrap());
    let full_log: Vec<String> = read(&dir.path().join("full.ckpt.log.csv")).lines().map(String::from).collect();
    let tail: Vec<String> = read(&log).lines().skip(1).map(String::from).collect();
    assert_eq!(&full_log[4..], &tail[..]);
}

#[test]
fn non_finite_loss_exits_with_numeric_status() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    ok(&["generate", "--n-min", "6", "--n-max", "8", "--total", "20", "--out", p(&data)]);
    let m = dir.path().join("m");
    let mut args = vec!["train", "--data", p(&data), "--epochs", "5", "--pos-weight", "1e308", "--out", p(&m)];
    args.extend_from_slice(SMALL_MODEL);
    let out = run(&args);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_report_and_search_monotonicity() {
    let t = trained();
    let test = t.dir.join("test.txt");
    ok(&["generate", "--n-min", "8", "--n-max", "12", "--total", "20", "--seed", "99", "--out", p(&test)]);
    let report = |name: &str, extra: &[&str]| {
        let out = t.dir.join(name);
        let mut args = vec!["eval", "--ckpt", p(&t.ckpt), "--data", p(&test), "--out", p(&out)];
        args.extend_from_slice(extra);
        ok(&args);
        read(&out)
    };
    let mean_gap = |csv: &str| -> f64 {
        let all = csv.lines().find(|l| l.starts_with("# aggregate,all,")).unwrap();
        all.split(',').nth(8).unwrap().parse().unwrap()
    };

    let base = report("r200.csv", &["--samples", "200", "--threads", "1"]);
    assert!(base.starts_with("id,n,f1,auc,predicted_length,oracle_length,gap_percent,tp,fp,fn\n"));
    assert_eq!(base.lines().filter(|l| l.starts_with("# aggregate,")).count(), 7);
    assert_eq!(base.lines().filter(|l| !l.starts_with('#')).count(), 21);

    assert_eq!(report("par.csv", &["--samples", "200", "--threads", "4"]), base);
    let more = report("r1000.csv", &["--samples", "1000"]);
    assert!(mean_gap(&more) <= mean_gap(&base));
    let no2opt = report("off.csv", &["--samples", "200", "--two-opt", "off"]);
    assert!(mean_gap(&no2opt) >= mean_gap(&base));
    let beam = report("beam.csv", &["--strategy", "beam", "--beam-width", "3"]);
    assert!(mean_gap(&beam) >= 0.0);

    let out = run(&["eval", "--ckpt", p(&t.ckpt), "--data", p(&test), "--knn", "9", "--out", p(&t.dir.join("x.csv"))]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn solve_outputs() {
    let t = trained();
    let square = t.dir.join("square.txt");
    std::fs::write(&square, "0 0\n0 1\n1 1\n1 0\n").unwrap();
    let sol = t.dir.join("square.sol");
    let heat = t.dir.join("square.heat");
    ok(&["solve", "--ckpt", p(&t.ckpt), "--input", p(&square), "--oracle", "--out", p(&sol), "--heatmap-out", p(&heat)]);
    let line = read(&sol);
    let fields: Vec<&str> = line.split_whitespace().collect();
    assert_eq!(fields[1], "4");
    assert_eq!(fields[2], "0");
    assert_eq!(fields.len(), 7);
    assert!(read(&heat).starts_with("n 4 edges 12\n"));

    let big = t.dir.join("big.txt");
    let inst = edgegae_core::tsp::generate_instance(20, 4).unwrap();
    let coords: String = inst.coords.iter().map(|c| format!("{} {}\n", c.x, c.y)).collect();
    std::fs::write(&big, coords).unwrap();
    let a = t.dir.join("a.sol");
    let b = t.dir.join("b.sol");
    ok(&["--threads", "1", "solve", "--ckpt", p(&t.ckpt), "--input", p(&big), "--seed", "5", "--oracle", "--out", p(&a)]);
    ok(&["--threads", "3", "solve", "--ckpt", p(&t.ckpt), "--input", p(&big), "--seed", "5", "--oracle", "--out", p(&b)]);
    assert_eq!(read(&a), read(&b));
    assert!(read(&a).split_whitespace().nth(2).unwrap().starts_with('~'));

    let stdout = ok(&["solve", "--ckpt", p(&t.ckpt), "--input", p(&big), "--seed", "5", "--oracle", "--samples", "200"]).stdout;
    assert_eq!(String::from_utf8(stdout).unwrap(), read(&a));

    let out = run(&["solve", "--ckpt", p(&t.dir.join("missing.ckpt")), "--input", p(&square)]);
    assert_ne!(out.status.code(), Some(0));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.ckpt"));
    let out = run(&["solve", "--input", p(&square)]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn generated_dataset_round_trips() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("d.txt");
    ok(&["generate", "--n-min", "5", "--n-max", "24", "--total", "100", "--seed", "6", "--out", p(&data)]);
    let instances = read_dataset(&data).unwrap();
    assert_eq!(instances.len(), 100);
    let copy = dir.path().join("copy.txt");
    edgegae::io::write_dataset(&copy, &instances).unwrap();
    assert_eq!(read(&copy), read(&data));
}
