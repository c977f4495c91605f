use std::path::{Path, PathBuf};
use std::process::Command;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_fspde"))
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, body).unwrap();
    p
}

const SCALAR_DEGENERATE: &str = r#"
[model]
kind = "degenerate"
r0 = 0.5
delta_reg = 0.5
delta_drift = 0.0
a1 = [[-1.0]]
a0 = [[0.0]]
b = [[B]]
sigma_inv = [1.0]

[model.spectrum]
eigenvalues = [1.0]
noise = [1.0]

[model.drift]
k1 = 0.0
k2 = 0.0
form = { kind = "joint_sup", direction = [1.0] }

[run]
t_end = 1.0
m = 10
paths = 20
seed = 5
"#;

#[test]
fn checks_only_config_emits_reports_and_no_simulation() {
    let out = tempfile::tempdir().unwrap();
    let st = bin()
        .args(["check", "--config"])
        .arg(configs().join("checks_only.toml"))
        .arg("--out")
        .arg(out.path())
        .status()
        .unwrap();
    assert_eq!(st.code(), Some(0));
    let mut names: Vec<String> = std::fs::read_dir(out.path())
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    assert_eq!(names, ["check.csv", "check.txt", "check_report.txt", "manifest.toml"]);
    let report = std::fs::read_to_string(out.path().join("check_report.txt")).unwrap();
    assert!(report.contains("rate_lambda = 2.28171817154095"));
}

#[test]
fn missing_seed_is_an_input_error_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("checks_only.toml")).unwrap();
    let cfg = write(dir.path(), "c.toml", &text.replace("seed = 1\n", ""));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.seed"));
}

#[test]
fn failed_condition_exits_with_one() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("checks_only.toml")).unwrap();
    // a drift this strong leaves no positive contraction rate
    let text = text.replace("gain = 1.0", "gain = 20.0").replace("lipschitz = 1.0", "lipschitz = 20.0");
    let cfg = write(dir.path(), "c.toml", &text);
    let st = bin().args(["check", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(1));
}

#[test]
fn singular_gramian_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SCALAR_DEGENERATE.replace("[[B]]", "[[0.0]]"));
    let out = bin().args(["harnack", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(String::from_utf8_lossy(&out.stderr).contains("singular"));
}

#[test]
fn harnack_runs_on_scalar_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", &SCALAR_DEGENERATE.replace("[[B]]", "[[1.0]]"));
    let st = bin().args(["harnack", "--config"]).arg(&cfg).arg("--out").arg(dir.path()).status().unwrap();
    assert_eq!(st.code(), Some(0));
    let kv = std::fs::read_to_string(dir.path().join("harnack.txt")).unwrap();
    assert!(kv.contains("holds=true"));
}

#[test]
fn seed_override_is_deterministic_and_changes_output() {
    let run = |seed: &str| {
        let dir = tempfile::tempdir().unwrap();
        let st = bin()
            .args(["simulate", "--config"])
            .arg(configs().join("degenerate_scalar.toml"))
            .args(["--seed", seed, "--workers", "2", "--out"])
            .arg(dir.path())
            .status()
            .unwrap();
        assert_eq!(st.code(), Some(0));
        let csv = std::fs::read(dir.path().join("simulate.csv")).unwrap();
        let manifest = std::fs::read_to_string(dir.path().join("manifest.toml")).unwrap();
        (csv, manifest)
    };
    let (a, ma) = run("11");
    let (b, mb) = run("11");
    let (c, mc) = run("12");
    assert_eq!(a, b);
    assert_eq!(ma, mb);
    assert_ne!(a, c);
    assert_ne!(ma, mc);
}

#[test]
fn understated_lipschitz_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("checks_only.toml")).unwrap();
    let cfg = write(dir.path(), "c.toml", &text.replace("lipschitz = 1.0", "lipschitz = 0.5"));
    let st = bin().args(["check", "--config"]).arg(&cfg).status().unwrap();
    assert_eq!(st.code(), Some(2));
}

#[test]
fn unknown_key_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("checks_only.toml")).unwrap();
    let cfg = write(dir.path(), "c.toml", &text.replace("paths = 1", "paths = 1\ncolour = \"red\""));
    let out = bin().args(["check", "--config"]).arg(&cfg).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("run.colour"));
}
