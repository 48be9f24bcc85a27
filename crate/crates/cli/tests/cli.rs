use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_chroma-rsa"));
    c.env("RUST_LOG", "warn").env_remove("CHROMA_RSA_WORKERS");
    c
}

/// Two instruments, one octave, two front-ends: enough to exercise every stage quickly.
fn small_config(dir: &Path) -> std::path::PathBuf {
    let cfg = r#"{
  "bank": {"families": ["flute", "guitar"], "instruments_per_family": 1, "octaves": [5], "duration_s": 0.5},
  "frontends": [
    {"kind": "mel", "n_channels": 64, "fmin_hz": 0.0, "fmax_hz": 8000.0, "window_s": 0.025, "hop_s": 0.01},
    {"kind": "cochleagram", "n_channels": 32, "fmin_hz": 50.0, "fmax_hz": 8000.0, "window_s": 0.025, "hop_s": 0.01}
  ]
}"#;
    let p = dir.join("study.json");
    fs::write(&p, cfg).unwrap();
    p
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

#[test]
fn all_requires_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["all", "--config", cfg.to_str().unwrap(), "--out", dir.path().join("out").to_str().unwrap()]);
    assert_eq!(code(&o), 2, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--seed"));
}

#[test]
fn rsa_without_rdm_is_a_missing_stage() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");
    let o = run(&["rsa", "--config", cfg.to_str().unwrap(), "--seed", "1", "--out", out.to_str().unwrap()]);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("rdm"));
}

#[test]
fn invalid_config_values_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "1", "--alpha", "1.5"]);
    assert_eq!(code(&o), 2);
    let bad = dir.path().join("bad.json");
    fs::write(&bad, r#"{"seed": 1, "unknown": true}"#).unwrap();
    assert_eq!(code(&run(&["synth", "--config", bad.to_str().unwrap()])), 2);
    let o = run(&["synth", "--config", cfg.to_str().unwrap(), "--seed", "1", "--workers", "0"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_config_file_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["synth", "--config", dir.path().join("nope.json").to_str().unwrap(), "--seed", "1"]);
    assert_eq!(code(&o), 4);
}

#[test]
fn stages_run_one_by_one_and_match_all() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let cfg = cfg.to_str().unwrap();
    let staged = dir.path().join("staged");
    for stage in ["synth", "frontend", "rdm", "rsa", "report"] {
        let o = run(&[stage, "--config", cfg, "--seed", "5", "--out", staged.to_str().unwrap(), "--workers", "1"]);
        assert_eq!(code(&o), 0, "{stage}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let whole = dir.path().join("whole");
    let o = bin()
        .args(["all", "--config", cfg, "--seed", "5", "--out", whole.to_str().unwrap()])
        .env("CHROMA_RSA_WORKERS", "2")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let printed = String::from_utf8_lossy(&o.stdout);
    assert_eq!(printed.lines().count(), 5);

    let mut names: Vec<String> = fs::read_dir(&staged).unwrap().map(|e| e.unwrap().file_name().to_string_lossy().into_owned()).collect();
    names.sort();
    for n in &names {
        let rsa_a = staged.join(n);
        let rsa_b = whole.join(n);
        assert!(rsa_b.is_dir(), "{n} missing from the `all` run");
        if n.starts_with("rsa-") {
            assert_eq!(fs::read(rsa_a.join("rsa_results.json")).unwrap(), fs::read(rsa_b.join("rsa_results.json")).unwrap());
        }
    }
}
