use std::path::Path;
use std::process::{Command, Output};

const QUICK: &str = r#"
[predictors.mlp]
hidden = [8]
epochs = 5
batch_size = 16

[predictors.forest]
n_trees = 8
max_depth = 4
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_ensemble-alpha"))
}

fn run(args: &[&str], config: Option<&Path>, out: &Path) -> Output {
    let mut cmd = bin();
    if let Some(c) = config {
        cmd.arg("--config").arg(c);
    }
    cmd.args(args).arg("--out").arg(out).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> std::path::PathBuf {
    let path = dir.join("run.toml");
    std::fs::write(&path, body).unwrap();
    path
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn default_synth_writes_full_panel() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("synth");
    let o = run(&["synth"], None, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    let panel = std::fs::read_to_string(out.join("panel.csv")).unwrap();
    assert_eq!(panel.lines().count(), 1 + 100 * 48);
    assert!(out.join("manifest.json").exists());
}

#[test]
fn same_seed_same_digests() {
    let tmp = tempfile::tempdir().unwrap();
    let a = run(&["synth", "--seed", "3"], None, &tmp.path().join("a"));
    let b = run(&["synth", "--seed", "3"], None, &tmp.path().join("b"));
    let c = run(&["synth", "--seed", "4"], None, &tmp.path().join("c"));
    assert!(a.status.success() && b.status.success() && c.status.success());
    let read = |d: &str| std::fs::read(tmp.path().join(d).join("manifest.json")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}

#[test]
fn zero_stocks_is_invalid_input() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[synth]\nn_stocks = 0\n");
    let o = run(&["synth"], Some(&cfg), &tmp.path().join("out"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: invalid-input"), "{}", stderr(&o));
}

#[test]
fn missing_panel_file_fails() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[data]\npanel = \"nowhere.csv\"\n");
    let o = run(&["screen"], Some(&cfg), &tmp.path().join("out"));
    assert!(!o.status.success());
    assert!(stderr(&o).starts_with("error: "), "{}", stderr(&o));
}

#[test]
fn unknown_config_key_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[backtest]\ntop_k = 5\n");
    let o = run(&["backtest"], Some(&cfg), &tmp.path().join("out"));
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: config"), "{}", stderr(&o));
}

#[test]
fn pure_noise_screen_succeeds() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "[synth]\nn_factors = 10\ncoefficients = []\n");
    let o = run(&["screen"], Some(&cfg), &tmp.path().join("out"));
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(tmp.path().join("out/screen.json").exists());
}

#[test]
fn planted_factors_survive_screening() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "[synth]\nn_factors = 20\ncoefficients = [0.02, 0.02, 0.02]\n",
    );
    let mut exact = 0;
    for seed in 0..10 {
        let seed = seed.to_string();
        let o = run(
            &["screen", "--seed", &seed],
            Some(&cfg),
            &tmp.path().join(format!("s{seed}")),
        );
        assert!(o.status.success(), "{}", stderr(&o));
        let kept = stdout(&o).lines().find(|l| l.starts_with("kept")).unwrap().to_string();
        exact += usize::from(kept.ends_with(": f01 f02 f03"));
    }
    assert!(exact >= 9, "{exact}/10");
}

#[test]
fn backtest_then_report_detects_tampering() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("[synth]\nn_stocks = 40\nn_months = 20\n{QUICK}"));
    let out = tmp.path().join("bt");
    let o = run(&["backtest"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));

    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("report.json")).unwrap()).unwrap();
    let text = report.to_string();
    for name in ["Ridge", "MLP", "Forest", "IC_Mean", "IC_Ratio", "Benchmark"] {
        assert!(text.contains(name), "{name} missing from report");
    }
    let table = std::fs::read_to_string(out.join("performance.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 11);

    let o = run(&["report"], Some(&cfg), &out);
    assert!(o.status.success(), "{}", stderr(&o));

    std::fs::write(out.join("ic.csv"), "tampered\n").unwrap();
    let o = run(&["report"], Some(&cfg), &out);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("error: integrity"), "{}", stderr(&o));
}

#[test]
fn scheme_subset_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), &format!("[synth]\nn_stocks = 40\nn_months = 20\n{QUICK}"));
    let out = tmp.path().join("bt");
    let o = run(
        &[
            "backtest",
            "--schemes",
            "ridge,ic_mean",
            "--top-n",
            "5",
            "--cost-rate",
            "0",
        ],
        Some(&cfg),
        &out,
    );
    assert!(o.status.success(), "{}", stderr(&o));
    let table = std::fs::read_to_string(out.join("performance.csv")).unwrap();
    assert_eq!(table.lines().count(), 1 + 3, "{table}");

    let o = run(
        &["backtest", "--schemes", "nonsense"],
        Some(&cfg),
        &tmp.path().join("bad"),
    );
    assert!(!o.status.success());
}

#[test]
fn refuses_to_overwrite_foreign_directory() {
    let tmp = tempfile::tempdir().unwrap();
    let out = tmp.path().join("mine");
    std::fs::create_dir(&out).unwrap();
    std::fs::write(out.join("notes.txt"), "keep me").unwrap();
    let o = run(&["synth"], None, &out);
    assert!(!o.status.success());
    assert_eq!(std::fs::read_to_string(out.join("notes.txt")).unwrap(), "keep me");
}
