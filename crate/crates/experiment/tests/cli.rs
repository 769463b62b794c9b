use std::process::Command;

use sgl_experiment::manifest::{RunManifest, MANIFEST_FILE};
use sgl_experiment::records::FailureCounts;
use sgl_experiment::{cli, EXIT_DIVERGED, EXIT_OK, EXIT_RUNTIME, EXIT_USAGE};

fn sgl() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sgl"))
}

const SUBSET: &str = "
[grid]
omega_values = [1.5]
y_values = [0.3]
amplitude_deg_values = [90.0]
lambda_deg_values = [60.0, 90.0]
";

#[test]
fn usage_errors_exit_with_one() {
    let out = sgl().args(["grid", "--bogus"]).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));
    let out = sgl().output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));

    let dir = tempfile::tempdir().unwrap();
    let out = sgl().args(["ppo-eval", "--out"]).arg(dir.path().join("e")).env_remove("SGL_OUT").output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));
    assert!(String::from_utf8_lossy(&out.stderr).contains("checkpoint"));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "kind = \"bayes\"\n").unwrap();
    let out = sgl().args(["grid", "--config"]).arg(&cfg).arg("--out").arg(dir.path().join("g")).output().unwrap();
    assert_eq!(out.status.code(), Some(EXIT_USAGE as i32));
}

#[test]
fn help_exits_cleanly() {
    let out = sgl().arg("--help").output().unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["grid", "bayes", "ppo-train", "ppo-eval", "compare"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn environment_overrides_out_flag() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(&cfg, SUBSET).unwrap();
    let flag_dir = dir.path().join("flag");
    let env_dir = dir.path().join("env");
    let out = sgl()
        .args(["grid", "--workers", "1", "--config"])
        .arg(&cfg)
        .arg("--out")
        .arg(&flag_dir)
        .env("SGL_OUT", &env_dir)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(!flag_dir.exists());
    RunManifest::load(&env_dir).unwrap().verify(&env_dir).unwrap();

    // a second run into the same place is refused and leaves it intact
    let again = sgl().args(["grid", "--config"]).arg(&cfg).env("SGL_OUT", &env_dir).output().unwrap();
    assert_eq!(again.status.code(), Some(EXIT_USAGE as i32));
    assert!(env_dir.join(MANIFEST_FILE).exists());
    let resumed = sgl().args(["grid", "--resume", "--config"]).arg(&cfg).env("SGL_OUT", &env_dir).output().unwrap();
    assert_eq!(resumed.status.code(), Some(0));
}

#[test]
fn exit_code_reflects_failures() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("grid.toml");
    std::fs::write(&cfg, SUBSET).unwrap();
    let code = cli::main_with(["sgl", "grid", "--config", cfg.to_str().unwrap()], Some(dir.path().join("o").display().to_string()));
    assert_eq!(code, EXIT_OK);
    let mut m = RunManifest::load(&dir.path().join("o")).unwrap();
    m.failures = FailureCounts { diverged: 2, other: 0 };
    assert_eq!(cli::exit_code(&m), EXIT_DIVERGED);
    m.failures.other = 1;
    assert_eq!(cli::exit_code(&m), EXIT_RUNTIME);
}
