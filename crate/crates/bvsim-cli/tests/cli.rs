//! End-to-end checks of the `bvsim` binary: each subcommand against a real
//! (small) sweep, plus the config plumbing around them.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

const CONFIG: &str = r#"
seed = 11

[scene]
pattern = "checker_grid"
width = 64
height = 64
lux = [1000.0]

[[sensors]]
id = "evs"
kind = "evs"

[[sensors]]
id = "aop"
kind = "aop"
fps = 200.0

[sweep]
rpm = [60.0, 240.0]
revolutions = 1.5

[tasks]
flow = false

[output]
events = "bin"
"#;

fn bvsim() -> Command {
    Command::new(env!("CARGO_BIN_EXE_bvsim"))
}

fn run(cmd: &mut Command) -> Output {
    cmd.output().expect("spawn bvsim")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn write_config(dir: &Path) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, CONFIG).unwrap();
    path
}

fn svg_bytes(plots_dir: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    for entry in fs::read_dir(plots_dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "svg") {
            out.insert(
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            );
        }
    }
    out
}

/// One sweep shared by the tests that only inspect its artifacts.
struct Fixture {
    dir: TempDir,
    report: Vec<u8>,
}

fn fixture() -> &'static Fixture {
    static FIXTURE: OnceLock<Fixture> = OnceLock::new();
    FIXTURE.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let config = write_config(dir.path());
        let out = run(bvsim()
            .args(["sweep", "--config"])
            .arg(&config)
            .arg("--out")
            .arg(dir.path().join("out"))
            .args(["--jobs", "2"]));
        assert!(out.status.success(), "sweep failed: {}", stderr(&out));
        let report = fs::read(dir.path().join("out/report.csv")).unwrap();
        Fixture { dir, report }
    })
}

#[test]
fn sweep_writes_report_plots_and_config_copy() {
    let fx = fixture();
    let out_dir = fx.dir.path().join("out");
    assert!(out_dir.join("config.toml").exists());
    assert!(out_dir.join("cells").is_dir());

    let text = String::from_utf8_lossy(&fx.report).into_owned();
    let rows: Vec<&str> = text.lines().filter(|l| !l.is_empty()).collect();
    // header plus 2 sensors x 2 rpm x 1 lux
    assert_eq!(rows.len(), 5, "report:\n{text}");
    assert!(rows[0].starts_with("sensor,kind,rpm,lux,"), "header: {}", rows[0]);

    let svgs = svg_bytes(&out_dir.join("plots"));
    assert!(!svgs.is_empty(), "sweep produced no plots");
}

#[test]
fn evaluate_from_persisted_cells_matches_sweep_report() {
    let fx = fixture();
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path());
    let out_path = dir.path().join("out");

    let sim = run(bvsim()
        .args(["simulate", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(&out_path)
        .args(["--jobs", "1"]));
    assert!(sim.status.success(), "simulate failed: {}", stderr(&sim));
    assert!(stdout(&sim).contains("wrote 4 cells"), "stdout: {}", stdout(&sim));

    // No --config: must fall back to the copy simulate saved in the out dir.
    let eval = run(bvsim().arg("evaluate").arg("--out").arg(&out_path).args(["--jobs", "1"]));
    assert!(eval.status.success(), "evaluate failed: {}", stderr(&eval));

    let report = fs::read(out_path.join("report.csv")).unwrap();
    assert_eq!(
        report, fx.report,
        "evaluate over persisted streams diverged from the in-memory sweep"
    );
}

#[test]
fn plot_redraws_identical_svgs() {
    let fx = fixture();
    let plots_dir = fx.dir.path().join("out/plots");
    let before = svg_bytes(&plots_dir);
    fs::remove_dir_all(&plots_dir).unwrap();

    let out = run(bvsim().arg("plot").arg("--out").arg(fx.dir.path().join("out")));
    assert!(out.status.success(), "plot failed: {}", stderr(&out));

    let after = svg_bytes(&plots_dir);
    assert_eq!(before, after, "replotting the same report changed the SVGs");
}

#[test]
fn env_override_reshapes_the_sweep() {
    let dir = TempDir::new().unwrap();
    let config = write_config(dir.path());
    let out = run(bvsim()
        .env("BVSIM_SWEEP__RPM", "[60.0]")
        .args(["sweep", "--config"])
        .arg(&config)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--jobs", "2"]));
    assert!(out.status.success(), "sweep failed: {}", stderr(&out));
    assert!(stdout(&out).contains("(2 rows, 0 failed)"), "stdout: {}", stdout(&out));
}

fn config_with_typo(dir: &Path) -> PathBuf {
    let path = dir.join("typo.toml");
    let mangled = CONFIG.replace("revolutions = 1.5", "revolutions = 1.5\nwindow_dge = 10.0");
    fs::write(&path, mangled).unwrap();
    path
}

#[test]
fn unknown_config_key_is_fatal_unless_lenient() {
    let dir = TempDir::new().unwrap();
    let path = config_with_typo(dir.path());

    let strict = run(bvsim()
        .args(["sweep", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out")));
    assert!(!strict.status.success());
    assert!(stderr(&strict).contains("window_dge"), "stderr: {}", stderr(&strict));

    let lenient = run(bvsim()
        .env("BVSIM_SWEEP__RPM", "[60.0]")
        .args(["sweep", "--lenient", "--config"])
        .arg(&path)
        .arg("--out")
        .arg(dir.path().join("out"))
        .args(["--jobs", "2"]));
    assert!(lenient.status.success(), "lenient sweep failed: {}", stderr(&lenient));
    assert!(stderr(&lenient).contains("window_dge"), "stderr: {}", stderr(&lenient));
}

#[test]
fn evaluate_without_any_config_errors() {
    let dir = TempDir::new().unwrap();
    let out = run(bvsim().arg("evaluate").arg("--out").arg(dir.path().join("out")));
    assert!(!out.status.success());
    assert!(stderr(&out).contains("--config"), "stderr: {}", stderr(&out));
}
