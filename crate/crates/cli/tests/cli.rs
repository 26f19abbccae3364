//! End-to-end checks of the command-line interface via the built binary.

use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_collapse-lab");

const TINY_CONFIG: &str = "\
[run]
seeds = [0, 1]
generations = 5
train_size = 60
pool_size = 60
real_pool_size = 120
validation_size = 20

[recovery]
checkpoint_gens = [2, 4]
";

fn run(args: &[&str], dir: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .current_dir(dir)
        .env_remove("COLLAPSE_LAB_OUT")
        .output()
        .expect("binary runs")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn setup() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("tiny.toml"), TINY_CONFIG).unwrap();
    dir
}

#[test]
fn missing_config_argument_prints_synopsis() {
    let dir = setup();
    let out = run(&["run"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("Usage"), "no synopsis in: {}", stderr(&out));
}

#[test]
fn nonexistent_config_names_the_file() {
    let dir = setup();
    let out = run(&["run", "nope.toml"], dir.path());
    assert!(!out.status.success());
    let err = stderr(&out);
    assert!(err.contains("nope.toml"), "diagnostic does not name input: {err}");
    assert_eq!(err.lines().count(), 1, "diagnostic is not one line: {err}");
}

#[test]
fn run_writes_layout_and_detect_reproduces_onsets() {
    let dir = setup();
    let out = run(&["run", "tiny.toml", "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    for p in [
        "o/records.csv",
        "o/open_loop_s0/records.csv",
        "o/open_loop_s0/onsets.json",
        "o/open_loop_s0/checkpoints/gen_0.json",
    ] {
        assert!(dir.path().join(p).exists(), "missing {p}");
    }
    let run_lines: Vec<String> = stdout(&out)
        .lines()
        .filter(|l| l.contains("onset"))
        .map(str::to_string)
        .collect();
    assert_eq!(run_lines.len(), 2);

    let detect = run(&["detect", "o/records.csv"], dir.path());
    assert!(detect.status.success(), "{}", stderr(&detect));
    let detect_lines: Vec<String> = stdout(&detect).lines().map(str::to_string).collect();
    assert_eq!(detect_lines, run_lines, "detect disagrees with the run's own onsets");
    assert!(detect_lines[0].contains("hidden onset") && detect_lines[0].contains("lead time"));
}

#[test]
fn sweep_then_controls_table() {
    let dir = setup();
    let out = run(&["sweep", "tiny.toml", "--out", "s"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("s/controls.json").exists());

    let report = run(&["report", "s/records.csv", "--table", "controls"], dir.path());
    assert!(report.status.success(), "{}", stderr(&report));
    let text = stdout(&report);
    assert!(text.contains("Baseline") && text.contains("Collapse frac."));
    for mode in ["open_loop", "mtr", "fixed_alpha", "random_tau"] {
        assert!(text.contains(mode), "missing {mode} row in:\n{text}");
    }
}

#[test]
fn report_chart_emits_svg() {
    let dir = setup();
    assert!(run(&["run", "tiny.toml", "--out", "o"], dir.path()).status.success());
    let out = run(
        &["report", "o/records.csv", "--chart", "H,ppl", "--out", "o"],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let svg = std::fs::read_to_string(dir.path().join("o/chart_H_ppl.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn report_without_table_or_chart_fails() {
    let dir = setup();
    assert!(run(&["run", "tiny.toml", "--out", "o"], dir.path()).status.success());
    let out = run(&["report", "o/records.csv"], dir.path());
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--table"));
}

#[test]
fn recover_writes_grid() {
    let dir = setup();
    let out = run(&["recover", "tiny.toml", "--out", "r"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("r/open_loop_s0/recovery.csv").exists());
    let text = stdout(&out);
    assert!(text.contains("Checkpoint") && text.contains("g2") && text.contains("g4"));

    let table = run(
        &["report", "r/open_loop_s0/recovery.csv", "--table", "recovery"],
        dir.path(),
    );
    assert!(table.status.success(), "{}", stderr(&table));
    assert!(stdout(&table).contains("0.5% real, 400 steps"));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = setup();
    assert!(run(&["run", "tiny.toml", "--out", "a"], dir.path()).status.success());
    assert!(run(&["run", "tiny.toml", "--out", "b"], dir.path()).status.success());
    let a = std::fs::read(dir.path().join("a/records.csv")).unwrap();
    let b = std::fs::read(dir.path().join("b/records.csv")).unwrap();
    assert_eq!(a, b);
}

#[test]
fn env_var_sets_default_output_dir() {
    let dir = setup();
    let out = Command::new(BIN)
        .args(["run", "tiny.toml"])
        .current_dir(dir.path())
        .env("COLLAPSE_LAB_OUT", "from_env")
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(dir.path().join("from_env/records.csv").exists());
}
