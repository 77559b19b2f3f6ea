use std::path::Path;
use std::process::{Command, Output};

use eirehn_core::train::{parse_csv, Metric, Split};

fn eirehn(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_eirehn"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EIREHN_HAR_ROOT")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

const TINY: &[&str] = &[
    "train", "--cell", "rnn", "--d-h", "4", "--n", "30", "--t", "6", "--split", "20,5,5",
    "--epochs", "3", "--batch-size", "5",
];

#[test]
fn synth_gen_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a.txt", "b.txt"] {
        let o = eirehn(&["synth-gen", "--n", "12", "--t", "5", "--seed", "4", "--out", name], dir.path());
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    }
    let a = std::fs::read(dir.path().join("a.txt")).unwrap();
    let b = std::fs::read(dir.path().join("b.txt")).unwrap();
    assert_eq!(a, b);
    let data = eirehn_core::synth::SynthDataset::load(&dir.path().join("a.txt")).unwrap();
    assert_eq!(data.samples.len(), 12);
    assert_eq!(data.config.seed, 4);
}

#[test]
fn synth_gen_rejects_single_step_sequences() {
    let dir = tempfile::tempdir().unwrap();
    let o = eirehn(&["synth-gen", "--t", "1", "--out", "x.txt"], dir.path());
    assert_eq!(code(&o), 1);
    assert!(!dir.path().join("x.txt").exists());
}

#[test]
fn zero_learning_rate_keeps_metrics_flat() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = TINY.to_vec();
    args.extend(["--lr", "0", "--out", "runs"]);
    let o = eirehn(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("runs/synthetic-rnn-h4-seed0.csv")).unwrap();
    let val: Vec<f64> = parse_csv(&csv)
        .unwrap()
        .into_iter()
        .filter(|r| r.split == Split::Val && r.metric == Metric::Mse)
        .map(|r| r.value)
        .collect();
    assert_eq!(val.len(), 3);
    assert!(val.iter().all(|v| *v == val[0]), "{val:?}");
}

#[test]
fn train_then_eval_reproduces_test_metric() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = TINY.to_vec();
    args.extend(["--cell", "srehn", "--seeds", "2", "--jobs", "2", "--json", "--out", "runs"]);
    let o = eirehn(&args, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("over 2 runs"));
    let runs = dir.path().join("runs");
    assert!(runs.join("synthetic-srehn-h4-rmax10.summary.csv").is_file());
    assert!(runs.join("synthetic-srehn-h4-rmax10-seed1.jsonl").is_file());

    let csv = std::fs::read_to_string(runs.join("synthetic-srehn-h4-rmax10-seed0.csv")).unwrap();
    let test_mse = parse_csv(&csv)
        .unwrap()
        .into_iter()
        .find(|r| r.split == Split::Test && r.metric == Metric::Mse)
        .unwrap()
        .value;

    let mut eval = vec!["eval"];
    eval.extend(&TINY[1..]);
    eval.extend([
        "--cell", "srehn", "--checkpoint", "runs/synthetic-srehn-h4-rmax10-seed0.params",
        "--depth-histogram", "hist.csv",
    ]);
    let o = eirehn(&eval, dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains(&format!("mse,{test_mse:?}")), "{}", stdout(&o));
    let hist = std::fs::read_to_string(dir.path().join("hist.csv")).unwrap();
    assert!(hist.starts_with("depth,count\n"));

    let o = eirehn(&["report", "--metrics", "runs", "--out", "plots"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary = std::fs::read_to_string(dir.path().join("plots/summary.csv")).unwrap();
    assert!(summary.contains("synthetic-srehn-h4-rmax10,mse,"), "{summary}");
    assert!(dir.path().join("plots/depth-histogram-synthetic-srehn-h4-rmax10.csv").is_file());
}

#[test]
fn missing_checkpoint_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = eirehn(&["eval", "--checkpoint", "nope.params"], dir.path());
    assert_eq!(code(&o), 2);
}

#[test]
fn har_without_dataset_exits_with_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = eirehn(&["train", "--task", "har", "--har-root", "absent", "--epochs", "1"], dir.path());
    assert_eq!(code(&o), 2);
    let err = String::from_utf8_lossy(&o.stderr);
    assert!(err.contains("hint:"), "{err}");
}

#[test]
fn unknown_cell_and_suite_are_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&eirehn(&["train", "--cell", "gru"], dir.path())), 1);
    assert_eq!(code(&eirehn(&["verify", "--suite", "bogus"], dir.path())), 1);
    assert_eq!(code(&eirehn(&["train", "--split", "1,2"], dir.path())), 1);
    assert_eq!(code(&eirehn(&["frobnicate"], dir.path())), 1);
}

#[test]
fn verify_prints_one_line_per_suite() {
    let dir = tempfile::tempdir().unwrap();
    let o = eirehn(
        &["verify", "--suite", "gradcheck", "--suite", "depth-bound", "--draws", "50", "--grad-seeds", "2"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = stdout(&o);
    let lines: Vec<&str> = out.lines().collect();
    assert_eq!(lines.len(), 2, "{out}");
    assert!(lines[0].starts_with("PASS gradcheck"));
    assert!(lines[1].starts_with("PASS depth-bound"));
}

#[test]
fn report_on_empty_directory_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::create_dir(dir.path().join("empty")).unwrap();
    assert_eq!(code(&eirehn(&["report", "--metrics", "empty"], dir.path())), 2);
    assert_eq!(code(&eirehn(&["report", "--metrics", "absent"], dir.path())), 2);
}

#[test]
fn report_writes_gate_curves() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = TINY.to_vec();
    args.extend(["--epochs", "1", "--out", "runs"]);
    assert_eq!(code(&eirehn(&args, dir.path())), 0);
    let o = eirehn(
        &["report", "--metrics", "runs", "--alpha", "0.6931471805599453", "--beta", "0.5", "--curve-depth", "3"],
        dir.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let curve = std::fs::read_to_string(dir.path().join("runs/gate-curve-a0.6931471805599453-b0.5.csv")).unwrap();
    // β + e^α − e^{αr} with e^α = 2: 0.5 + 2 − 2^r.
    assert_eq!(curve, "r,d\n1,0.5\n2,0.0\n3,0.0\n");
}

#[test]
fn config_file_supplies_defaults_and_flags_override() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("run.conf"),
        "# small run\nn = 9\nt = 4\nseed = 2\n",
    )
    .unwrap();
    let o = eirehn(&["--config", "run.conf", "synth-gen", "--out", "a.txt"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let o = eirehn(&["--config", "run.conf", "synth-gen", "--n", "5", "--out", "b.txt"], dir.path());
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let a = eirehn_core::synth::SynthDataset::load(&dir.path().join("a.txt")).unwrap();
    let b = eirehn_core::synth::SynthDataset::load(&dir.path().join("b.txt")).unwrap();
    assert_eq!((a.samples.len(), a.config.t, a.config.seed), (9, 4, 2));
    assert_eq!((b.samples.len(), b.config.t), (5, 4));
    assert_eq!(b.samples[..], a.samples[..5]);
}
