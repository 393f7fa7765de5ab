use std::path::Path;
use std::process::{Command, Output};

fn dkf_net(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dkf-net")).args(args).output().unwrap()
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("cfg.json");
    std::fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const TINY: &str = r#"{"preset": "smoke", "trials": 4, "horizon": 40, "gamma": [2], "p_beta": [1.0, 0.7], "pd_trials": 2000, "sweep_trials": 4, "sweep_iterations": 2}"#;

#[test]
fn mse_writes_csv_and_honors_seed() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("a");
    let run = dkf_net(&["mse", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    let csv = std::fs::read_to_string(out.join("mse.csv")).unwrap();
    assert_eq!(csv, String::from_utf8(run.stdout).unwrap());
    assert!(csv.starts_with("# schema_version=1\n"));
    assert_eq!(csv.lines().filter(|l| !l.starts_with('#')).count(), 3);

    let again = dkf_net(&["mse", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(String::from_utf8(again.stdout).unwrap(), csv);
    let seeded = dkf_net(&["mse", "--config", &cfg, "--out", out.to_str().unwrap(), "--seed", "99"]);
    assert!(seeded.status.success());
    assert_ne!(String::from_utf8(seeded.stdout).unwrap(), csv);
}

#[test]
fn bounds_sweep_and_pushsum_subcommands() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), TINY);
    let out = dir.path().join("o");
    let out = out.to_str().unwrap();

    let bounds = dkf_net(&["bounds", "--config", &cfg, "--out", out]);
    assert!(bounds.status.success());
    let text = String::from_utf8(bounds.stdout).unwrap();
    assert!(text.contains("gamma_min_mean = ") && text.contains("p_beta = 0.7"));
    assert!(Path::new(out).join("bounds.csv").exists() && Path::new(out).join("bounds.txt").exists());

    let sweep = dkf_net(&["sweep", "--config", &cfg, "--out", out, "--tol", "0.5"]);
    assert!(sweep.status.success(), "{}", String::from_utf8_lossy(&sweep.stderr));
    assert!(String::from_utf8(sweep.stdout).unwrap().contains("gamma,min_p_beta,excess"));

    let ps = dkf_net(&["pushsum", "--config", &cfg, "--out", out]);
    assert!(ps.status.success());
    assert!(Path::new(out).join("pushsum.csv").exists());
}

#[test]
fn graph_override_and_delta_warning() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("ring.txt"), "4 4\n0 1\n1 2\n2 3\n3 0\n").unwrap();
    let body = r#"{"preset": "smoke", "trials": 2, "horizon": 20, "gamma": [1], "p_beta": [1.0],
        "plant": {"kind": "matrices", "a": [[0.9]], "q": [[1.0]],
                  "outputs": [{"c": [[1.0]], "r": [[1.0]]}, null, null, null],
                  "x0_mean": [0.0], "x0_cov": [[1.0]]},
        "delta": 3.0, "allow_small_delta": true}"#;
    let cfg = write_config(dir.path(), body);
    let ring = dir.path().join("ring.txt");
    let out = dir.path().join("o");
    let run = dkf_net(&["--graph", ring.to_str().unwrap(), "mse", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert!(run.status.success(), "{}", String::from_utf8_lossy(&run.stderr));
    assert!(String::from_utf8_lossy(&run.stderr).contains("warning"));

    // The default topology has ten nodes; the plant has four.
    let mismatch = dkf_net(&["mse", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(mismatch.status.code(), Some(2));
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let bad = write_config(dir.path(), "{\n  \"trials\": 0\n}");
    let run = dkf_net(&["mse", "--config", &bad]);
    assert_eq!(run.status.code(), Some(2));
    let err = String::from_utf8_lossy(&run.stderr);
    assert!(err.contains("trials") && err.contains("line 2"), "{err}");

    let missing = dkf_net(&["mse", "--config", dir.path().join("none.json").to_str().unwrap()]);
    assert_eq!(missing.status.code(), Some(3));

    let cfg = write_config(dir.path(), TINY);
    let neg = dkf_net(&["sweep", "--config", &cfg, "--tol", "-1"]);
    assert_eq!(neg.status.code(), Some(2));

    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    let unwritable = dkf_net(&["pushsum", "--config", &cfg, "--out", blocker.join("sub").to_str().unwrap()]);
    assert_eq!(unwritable.status.code(), Some(3));
}
