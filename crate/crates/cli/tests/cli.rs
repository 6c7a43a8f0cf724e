//! End-to-end tests of the command-line interface, driving the compiled
//! binary the way a user would.

use std::path::Path;
use std::process::{Command, Output};

fn masslab(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_masslab"))
        .args(args)
        .current_dir(cwd)
        .output()
        .expect("binary runs")
}

fn write(path: &Path, contents: &str) {
    std::fs::write(path, contents).unwrap();
}

const SMALL_CONFIG: &str = r#"
[dataset]
kind = "decoupled"
sigma1 = 1.0
sigma2 = 0.25
n = 400
seed = 3

[run]
method = "mass"
params = "optimal"
m = 1
max_iters = 5000
eval_every = 50
target_loss = 1e-8

[compare]
m = 1
target_loss = 1e-5
max_iters = 20000
repeats = 3
eta_min = 0.02
eta_max = 0.5
eta_points = 3
gammas = [0.0, 0.9]

[regimes]
m_list = [1, 4]
repeats = 3
max_iters = 50000

[phase]
u_values = [0.2, 0.6]
eta_points = 5

[verify]
lyapunov_seeds = 32
lyapunov_t_max = 40
avr_samples = 5000
"#;

#[test]
fn golden_config_reruns_are_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), SMALL_CONFIG);
    for cmd in ["generate", "run", "compare", "regimes", "nesterov-phase"] {
        let out1 = masslab(&[cmd, "--config", "cfg.toml", "--out", "a"], dir.path());
        assert!(
            out1.status.success(),
            "{cmd} failed: {}",
            String::from_utf8_lossy(&out1.stderr)
        );
        let out2 = masslab(&[cmd, "--config", "cfg.toml", "--out", "b"], dir.path());
        assert!(out2.status.success());
        let mut compared = 0;
        for entry in std::fs::read_dir(dir.path().join("a")).unwrap() {
            let name = entry.unwrap().file_name();
            let a = std::fs::read(dir.path().join("a").join(&name)).unwrap();
            let b = std::fs::read(dir.path().join("b").join(&name)).unwrap();
            assert_eq!(a, b, "{cmd}: {name:?} differs between reruns");
            compared += 1;
        }
        assert!(compared > 0);
        std::fs::remove_dir_all(dir.path().join("a")).unwrap();
        std::fs::remove_dir_all(dir.path().join("b")).unwrap();
    }
}

#[test]
fn seed_flag_changes_stochastic_outputs() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), SMALL_CONFIG);
    let a = masslab(
        &["run", "--config", "cfg.toml", "--out", "s1", "--seed", "1"],
        dir.path(),
    );
    assert!(a.status.success());
    let b = masslab(
        &["run", "--config", "cfg.toml", "--out", "s2", "--seed", "2"],
        dir.path(),
    );
    assert!(b.status.success());
    let ta = std::fs::read(dir.path().join("s1/trajectory.csv")).unwrap();
    let tb = std::fs::read(dir.path().join("s2/trajectory.csv")).unwrap();
    assert_ne!(ta, tb);
}

#[test]
fn verify_passes_on_default_dataset() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), SMALL_CONFIG);
    let out = masslab(
        &[
            "verify", "--config", "cfg.toml", "--out", "v", "--jobs", "1",
        ],
        dir.path(),
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(
        out.status.success(),
        "verify failed:\n{stdout}\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(stdout.contains("PASS"));
    assert!(!stdout.contains("FAIL"));
    assert!(dir.path().join("v/verify_report.txt").exists());
}

#[test]
fn empty_config_is_a_usage_error() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("empty.toml"), "");
    let out = masslab(&["run", "--config", "empty.toml"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("[dataset]"), "stderr: {stderr}");
}

#[test]
fn unknown_subcommand_exits_nonzero_with_help() {
    let dir = tempfile::tempdir().unwrap();
    let out = masslab(&["frobnicate"], dir.path());
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("Usage"), "stderr: {stderr}");
}

#[test]
fn missing_config_flag_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = masslab(&["compare"], dir.path());
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--config"));
}

#[test]
fn plot_renders_svg_from_trajectory_and_regimes() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), SMALL_CONFIG);
    assert!(
        masslab(&["run", "--config", "cfg.toml", "--out", "r"], dir.path())
            .status
            .success()
    );
    assert!(masslab(
        &["regimes", "--config", "cfg.toml", "--out", "r"],
        dir.path()
    )
    .status
    .success());
    let out = masslab(&["plot", "--out", "p", "r/trajectory.csv"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let svg = std::fs::read_to_string(dir.path().join("p/plot_loss.svg")).unwrap();
    assert!(svg.starts_with("<svg") && svg.contains("polyline") && svg.ends_with("</svg>\n"));
    let out = masslab(&["plot", "--out", "p", "r/regimes.csv"], dir.path());
    assert!(out.status.success());
    assert!(dir.path().join("p/plot_regimes.svg").exists());

    // Unknown kind and missing csv are clean errors.
    assert!(!masslab(&["plot", "--out", "p"], dir.path())
        .status
        .success());
    assert!(!masslab(
        &[
            "plot",
            "--kind",
            "sonogram",
            "--out",
            "p",
            "r/trajectory.csv"
        ],
        dir.path()
    )
    .status
    .success());
}

#[test]
fn csv_dataset_round_trips_through_generate_and_load() {
    let dir = tempfile::tempdir().unwrap();
    write(&dir.path().join("cfg.toml"), SMALL_CONFIG);
    assert!(masslab(
        &["generate", "--config", "cfg.toml", "--out", "g"],
        dir.path()
    )
    .status
    .success());
    // Re-run on the exported CSV via a csv-kind dataset.
    let csv_cfg = "[dataset]\nkind = \"csv\"\npath = \"g/dataset.csv\"\nhas_header = true\n\n\
         [run]\nmethod = \"sgd\"\nparams = \"optimal\"\nm = 1\nmax_iters = 2000\n\
         eval_every = 100\ntarget_loss = 1e-4\n"
        .to_string();
    write(&dir.path().join("csv.toml"), &csv_cfg);
    let out = masslab(&["run", "--config", "csv.toml", "--out", "rc"], dir.path());
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let manifest = std::fs::read_to_string(dir.path().join("rc/run_manifest.txt")).unwrap();
    assert!(manifest.contains("method = sgd"));
}
