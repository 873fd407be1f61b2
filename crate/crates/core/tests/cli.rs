use std::path::Path;
use std::process::Command;

fn tcsde(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_tcsde"))
        .args(args)
        .env("TCSDE_THREADS", "2")
        .output()
        .expect("binary runs")
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

#[test]
fn verify_lyapunov_passes_and_writes_certificate() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[criteria]\nx_points = 21\nscatter = 0\n");
    let out_dir = dir.path().join("out");
    let out = tcsde(&["verify-lyapunov", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = std::fs::read_to_string(out_dir.join("certificate.txt")).unwrap();
    assert_eq!(cert.lines().next(), Some("YES"));
    let man = std::fs::read_to_string(out_dir.join("manifest.txt")).unwrap();
    assert!(man.contains("experiment=verify-lyapunov") && man.contains("exit_code=0"));
}

#[test]
fn unstable_drift_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "c.toml",
        "[sde]\nsystem = \"custom\"\nf.state = 2.0\ng.clock = 1.0\nh.xy2 = 1.0\nh.x = -1.0\n[criteria]\nx_points = 11\nscatter = 0\n",
    );
    let out_dir = dir.path().join("out");
    let out = tcsde(&["verify-lyapunov", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2), "{}", String::from_utf8_lossy(&out.stderr));
    let cert = std::fs::read_to_string(out_dir.join("certificate.txt")).unwrap();
    assert_eq!(cert.lines().next(), Some("NO"));
}

#[test]
fn bad_config_exits_one_with_line_numbers() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[mc]\npaths = -3\nbogus = 1\n");
    let out_dir = dir.path().join("out");
    let out = tcsde(&["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("line 2") && err.contains("line 3"), "{err}");
    let rec = std::fs::read_to_string(out_dir.join("error.txt")).unwrap();
    assert!(rec.contains("kind=configuration"));
}

#[test]
fn missing_arguments_exit_one() {
    assert_eq!(tcsde(&["simulate"]).status.code(), Some(1));
    assert_eq!(tcsde(&["no-such-command"]).status.code(), Some(1));
}

#[test]
fn every_experiment_kind_is_a_subcommand() {
    for kind in tcsde::config::ExperimentKind::ALL {
        assert_eq!(
            tcsde(&[kind.name(), "--help"]).status.code(),
            Some(0),
            "{}",
            kind.name()
        );
    }
}

#[test]
fn overrides_and_manifest_rerun_reproduce_bytes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "[integrator]\ndt = 0.01\n");
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let out = tcsde(&[
        "simulate",
        "--config",
        &cfg,
        "--seed",
        "77",
        "--paths",
        "4",
        "--svg",
        "--out",
        a.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(a.join("paths.svg").exists());
    let man = std::fs::read_to_string(a.join("manifest.txt")).unwrap();
    assert!(man.contains("seed=77") && man.contains("paths=4"));
    let man_path = a.join("manifest.txt");
    let out = tcsde(&[
        "simulate",
        "--config",
        man_path.to_str().unwrap(),
        "--out",
        b.to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
    assert_eq!(
        std::fs::read(a.join("paths.csv")).unwrap(),
        std::fs::read(b.join("paths.csv")).unwrap()
    );
}

#[test]
fn invalid_thread_count_is_execution_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "c.toml", "");
    let out_dir = dir.path().join("out");
    let out = Command::new(env!("CARGO_BIN_EXE_tcsde"))
        .args(["simulate", "--config", &cfg, "--out", out_dir.to_str().unwrap()])
        .env("TCSDE_THREADS", "many")
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
}
