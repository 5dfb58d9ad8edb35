use std::path::Path;
use std::process::{Command, Output};

fn lamai(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lamai"))
        .args(args)
        .env("LAMAI_OUTPUT_DIR", dir)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) {
    let out = lamai(dir, args);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
}

const SMALL: [&str; 10] = [
    "--mr", "32", "--mt", "4", "--snr-db", "0:8:4", "--trials", "60", "--tmax", "6",
];

#[test]
fn ser_csv_goes_to_env_output_dir() {
    let dir = tempfile::tempdir().unwrap();
    let mut args = vec!["ser"];
    args.extend(SMALL);
    ok(dir.path(), &args);
    let text = std::fs::read_to_string(dir.path().join("ser.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "detector,snr_db,evm_db,trials,errors,ser,stderr");
    assert_eq!(lines.len(), 1 + 3 * 3);
}

#[test]
fn json_output_doubles_as_config() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("a.json");
    let mut args = vec![
        "ser",
        "--format",
        "json",
        "--detector",
        "lama-i,lama",
        "-o",
        first.to_str().unwrap(),
    ];
    args.extend(SMALL);
    ok(dir.path(), &args);

    let second = dir.path().join("b.json");
    ok(
        dir.path(),
        &[
            "ser",
            "--format",
            "json",
            "--config",
            first.to_str().unwrap(),
            "-o",
            second.to_str().unwrap(),
        ],
    );
    let a: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&first).unwrap()).unwrap();
    let b: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&second).unwrap()).unwrap();
    assert_eq!(a, b);
    assert_eq!(a["records"].as_array().unwrap().len(), 2 * 3);
}

#[test]
fn flat_config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("cfg.json");
    std::fs::write(
        &cfg,
        r#"{"mr": 16, "mt": 2, "snr_db": [2, 4], "evm_db": "-inf", "trials": 30, "detector": "all", "seed": 5}"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "ser",
            "--config",
            cfg.to_str().unwrap(),
            "--detector",
            "lama-whitened",
        ],
    );
    let text = std::fs::read_to_string(dir.path().join("ser.csv")).unwrap();
    let rows: Vec<&str> = text.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows
        .iter()
        .all(|r| r.starts_with("lama-whitened,") && r.contains(",-inf,30,")));
}

#[test]
fn analysis_subcommands_write_their_files() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    let fast = ["--psi-samples", "2000", "--grid-points", "40"];

    let mut se = vec!["se", "--mr", "64", "--mt", "8", "--snr-db", "8"];
    se.extend(fast);
    ok(d, &se);
    let text = std::fs::read_to_string(d.join("se.csv")).unwrap();
    assert!(text.starts_with("kind,index,sigma2\niterate,1,"));
    assert!(text.contains("\nfixed-point,0,"));

    let mut th = vec![
        "thresholds",
        "--beta",
        "0.5",
        "--n0",
        "0.01",
        "--nt-scan",
        "3",
    ];
    th.extend(fast);
    ok(d, &th);
    let report: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(d.join("thresholds.json")).unwrap()).unwrap();
    assert!(report["beta_max"].as_f64().unwrap() >= report["beta_min"].as_f64().unwrap());
    assert!(report["regime"].is_string());
    assert_eq!(report["beta_min_scan"]["n_t"].as_array().unwrap().len(), 3);

    let mut ph = vec!["phase", "--beta-grid", "0.2:1.2:3", "--n0-grid", "1e-3:1:2"];
    ph.extend(fast);
    ok(d, &ph);
    let text = std::fs::read_to_string(d.join("phase.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 6);
    assert!(text.starts_with("beta,n0,regime,fixed_points\n"));

    ok(
        d,
        &["predict-ser", "--snr-db", "0:10:5", "--psi-samples", "2000"],
    );
    let text = std::fs::read_to_string(d.join("predict_ser.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 3);

    ok(
        d,
        &[
            "trace",
            "--mr",
            "32",
            "--mt",
            "4",
            "--snr-db",
            "6",
            "--trials",
            "20",
            "--tmax",
            "4",
            "--se",
            "--psi-samples",
            "2000",
        ],
    );
    let text = std::fs::read_to_string(d.join("trace.csv")).unwrap();
    assert_eq!(text.lines().count(), 1 + 4);
}

#[test]
fn custom_constellation_file() {
    let dir = tempfile::tempdir().unwrap();
    let c = dir.path().join("bpsk.json");
    std::fs::write(
        &c,
        r#"[{"re": 1, "im": 0, "prior": 0.7}, {"re": -1, "im": 0, "prior": 0.3}]"#,
    )
    .unwrap();
    ok(
        dir.path(),
        &[
            "ser",
            "--constellation",
            c.to_str().unwrap(),
            "--mr",
            "16",
            "--mt",
            "2",
            "--snr-db",
            "4",
            "--trials",
            "10",
        ],
    );
    assert!(dir.path().join("ser.csv").exists());
}

#[test]
fn invalid_input_fails_cleanly() {
    let dir = tempfile::tempdir().unwrap();
    let out = lamai(dir.path(), &["ser", "--snr-db", "5:0:1"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("SNR range"));

    let out = lamai(dir.path(), &["ser", "--constellation", "no-such-thing"]);
    assert!(!out.status.success());

    let out = lamai(dir.path(), &["trace", "--snr-db", "0:4:2", "--trials", "2"]);
    assert!(!out.status.success());
}
