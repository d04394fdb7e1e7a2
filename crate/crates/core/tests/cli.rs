use std::path::Path;
use std::process::{Command, Output};

fn cascata(root: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_cascata"))
        .arg("--out")
        .arg(root)
        .args(args)
        .env_remove("CASCATA_OUT")
        .output()
        .unwrap()
}

fn entries(root: &Path) -> usize {
    std::fs::read_dir(root).map(|d| d.count()).unwrap_or(0)
}

#[test]
fn invalid_configs_exit_2_without_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let cases = [
        vec!["sweep-duration", "--set", "qd.tau_xx=-35"],
        vec!["spectra", "--set", "spectra.xx.window.hi=1.5"],
        vec!["tomography", "--set", "tomography.g2={\"g2_x\":1.0,\"g2_xx\":0.2}"],
        vec!["sweep-power", "--set", "qd.no_such_field=3"],
        vec!["validate-config", "--set", "stark.tau_cal=0"],
    ];
    for args in cases {
        let out = cascata(tmp.path(), &args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        let err = String::from_utf8_lossy(&out.stderr);
        assert!(err.contains("config error"), "{args:?}: {err}");
    }
    assert_eq!(entries(tmp.path()), 0);

    let out = cascata(tmp.path(), &["sweep-duration", "--set", "qd.tau_x=0"]);
    assert!(String::from_utf8_lossy(&out.stderr).contains("`qd.tau_x`"));
}

#[test]
fn config_file_is_read_and_validated() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.json");
    std::fs::write(&cfg, r#"{"qd": {"tau_xx": 81, "tau_x": 122, "fss": 0.7, "e_x_line": 1.5886, "e_xx_line": 1.5843, "purcell": 1.6}}"#).unwrap();
    let out = cascata(tmp.path(), &["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(0));

    std::fs::write(&cfg, "{ not json").unwrap();
    let out = cascata(tmp.path(), &["validate-config", "--config", cfg.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn runtime_failure_removes_partial_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    // the grid is valid as configuration but cannot hold the sideband
    let out = cascata(tmp.path(), &["spectra", "--set", "spectra.xx.grid_below_uev=-30", "--set", "spectra.n_events=2000"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("too narrow"));
    assert_eq!(entries(tmp.path()), 0);
}

#[test]
fn runs_never_overwrite_and_honor_env_root() {
    let tmp = tempfile::tempdir().unwrap();
    let env_root = tmp.path().join("from-env");
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_cascata"))
            .args(["tomography", "--source", "phi_plus"])
            .env("CASCATA_OUT", &env_root)
            .output()
            .unwrap()
    };
    let a = run();
    let b = run();
    assert_eq!(a.status.code(), Some(0));
    assert_eq!(b.status.code(), Some(0));
    assert_ne!(a.stdout, b.stdout);
    assert_eq!(entries(&env_root), 2);
    let dir = String::from_utf8(a.stdout).unwrap();
    let manifest: serde_json::Value =
        serde_json::from_slice(&std::fs::read(Path::new(dir.trim()).join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "tomography");
    assert_eq!(manifest["files"].as_array().unwrap().len(), 3);
    assert_eq!(manifest["config_sha256"].as_str().unwrap().len(), 64);
}

#[test]
fn command_outputs_have_the_documented_columns() {
    let tmp = tempfile::tempdir().unwrap();
    let out = cascata(tmp.path(), &["sweep-power", "--set", "sweeps.areas_over_pi=[0.0,1.0,2.0]", "--set", "spectra.n_events=50000"]);
    assert_eq!(out.status.code(), Some(0));
    let dir = String::from_utf8(out.stdout).unwrap();
    let text = std::fs::read_to_string(Path::new(dir.trim()).join("fig4_analog.csv")).unwrap();
    let mut rd = csv::Reader::from_reader(text.as_bytes());
    let header: Vec<String> = rd.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(&header[..3], ["area_over_pi", "C_model", "splitting_xx_ueV"]);
    assert_eq!(header.last().unwrap(), "sideband_fraction_xx");
    let rows: Vec<Vec<f64>> = rd
        .records()
        .map(|r| r.unwrap().iter().map(|v| v.parse().unwrap()).collect())
        .collect();
    assert!(rows[2][1] < rows[1][1]);
    // area 0: only the static FSS is left; centroid windowing biases it by a few percent
    let (split, std) = (rows[0][2], rows[0][3]);
    assert!((split - 0.8).abs() <= 3.0 * std + 0.05 * 0.8, "{split} ± {std}");
    assert!(rows[1][2] > rows[0][2] && rows[2][2] > rows[1][2]);
}

#[test]
fn bad_flags_exit_2() {
    let tmp = tempfile::tempdir().unwrap();
    assert_eq!(cascata(tmp.path(), &["sweep-duration", "--jobs", "0"]).status.code(), Some(2));
    assert_eq!(cascata(tmp.path(), &["no-such-command"]).status.code(), Some(2));
    assert_eq!(cascata(tmp.path(), &["tomography", "--source", "ghz"]).status.code(), Some(2));
}
