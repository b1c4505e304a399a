use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use siqrng::io::{read_bitstream, write_bitstream};
use siqrng::BitBuffer;
use tempfile::TempDir;

fn siqrng(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_siqrng"))
        .args(args)
        .current_dir(cwd)
        .env_remove("SIQRNG_THREADS")
        .output()
        .expect("binary runs")
}

fn json(out: &Output) -> Value {
    serde_json::from_slice(&out.stdout).unwrap_or_else(|e| {
        panic!(
            "{e}: {}\n{}",
            String::from_utf8_lossy(&out.stdout),
            String::from_utf8_lossy(&out.stderr)
        )
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn configs() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

#[test]
fn model_eval_reports_counts_and_config() {
    let dir = TempDir::new().unwrap();
    let reference = configs().join("reference.json");
    let out = siqrng(
        &[
            "model-eval",
            "--config",
            reference.to_str().unwrap(),
            "--out",
            "r/report.json",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&out);
    let n_z_s = report["estimation_input"]["n_z_single"].as_u64().unwrap();
    assert!((n_z_s as f64 / 1.85e9 - 1.0).abs() < 0.01);
    assert_eq!(report["config"]["mu"], 36.58);
    let written: Value =
        serde_json::from_str(&fs::read_to_string(dir.path().join("r/report.json")).unwrap())
            .unwrap();
    assert_eq!(written, report);
}

#[test]
fn dark_config_has_zero_rate() {
    let dir = TempDir::new().unwrap();
    let out = siqrng(&["model-eval", "--mu", "0"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    assert_eq!(json(&out)["rate"]["rate_bps"], 0.0);
}

#[test]
fn validation_errors_exit_1() {
    let dir = TempDir::new().unwrap();
    let out = siqrng(&["model-eval", "--eta_0", "1.5"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("eta_0"));

    fs::write(
        dir.path().join("typo.json"),
        "{\n  \"mu\": 3,\n  \"muu\": 4\n}",
    )
    .unwrap();
    let out = siqrng(&["model-eval", "--config", "typo.json"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("line 3"), "{}", stderr(&out));

    let out = siqrng(&["sweep", "--mu-min", "5", "--mu-max", "5"], dir.path());
    assert_eq!(out.status.code(), Some(1));

    let out = siqrng(&["no-such-command"], dir.path());
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn io_errors_exit_2() {
    let dir = TempDir::new().unwrap();
    let out = siqrng(&["model-eval", "--config", "missing.json"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("missing.json"));
    let out = siqrng(&["test", "--input", "missing.siqb"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn sweep_table() {
    let dir = TempDir::new().unwrap();
    let out = siqrng(&["sweep", "--points", "2"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines, ["mu\trate_bps", lines[1], lines[2]]);
    assert!(lines[1].starts_with("1\t") && lines[2].starts_with("200\t"));
}

#[test]
fn stage_by_stage_matches_pipeline() {
    let dir = TempDir::new().unwrap();
    let common = ["--n_pulses", "3000000", "--seed", "9", "--block_n", "65536"];
    let run = |cmd: &[&str]| {
        let args: Vec<&str> = cmd.iter().chain(common.iter()).copied().collect();
        let out = siqrng(&args, dir.path());
        assert!(out.status.success(), "{cmd:?}: {}", stderr(&out));
        out
    };
    run(&[
        "simulate",
        "--tally",
        "s/tally.json",
        "--bits",
        "s/raw.siqb",
    ]);
    run(&[
        "estimate",
        "--tally",
        "s/tally.json",
        "--out",
        "s/estimate.json",
    ]);
    let extract = json(&run(&[
        "extract",
        "--input",
        "s/raw.siqb",
        "--report",
        "s/estimate.json",
        "--out",
        "s/final.siqb",
    ]));
    assert_eq!(extract["config"]["seed"], 9);

    let staged = read_bitstream(&dir.path().join("s/final.siqb")).unwrap();
    assert_eq!(extract["final_bits"].as_u64().unwrap(), staged.len() as u64);

    let out = siqrng(
        &[
            "pipeline",
            "--n_pulses",
            "3000000",
            "--seed",
            "9",
            "--block_n",
            "65536",
            "--sample_bits",
            "20000",
            "--output_dir",
            "p",
        ],
        dir.path(),
    );
    assert!(out.status.success(), "{}", stderr(&out));
    let summary = json(&out);
    assert_eq!(summary["passed"], true);
    assert_eq!(summary["config"]["seed"], 9);
    for name in [
        "tally.json",
        "raw.siqb",
        "final.siqb",
        "estimate.json",
        "battery.json",
        "summary.json",
    ] {
        assert!(dir.path().join("p").join(name).exists(), "{name}");
    }
    assert_eq!(
        read_bitstream(&dir.path().join("p/final.siqb")).unwrap(),
        staged
    );
    assert_eq!(
        fs::read(dir.path().join("s/raw.siqb")).unwrap(),
        fs::read(dir.path().join("p/raw.siqb")).unwrap()
    );
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = TempDir::new().unwrap();
    let mut finals = Vec::new();
    for threads in ["1", "3"] {
        let out_dir = format!("t{threads}");
        let out = Command::new(env!("CARGO_BIN_EXE_siqrng"))
            .args([
                "pipeline",
                "--n_pulses",
                "2000000",
                "--sample_bits",
                "10000",
            ])
            .args(["--block_n", "32768", "--output_dir", &out_dir])
            .env("SIQRNG_THREADS", threads)
            .current_dir(dir.path())
            .output()
            .unwrap();
        assert!(out.status.success(), "{}", stderr(&out));
        finals.push(fs::read(dir.path().join(out_dir).join("final.siqb")).unwrap());
    }
    assert_eq!(finals[0], finals[1]);
}

#[test]
fn estimate_accepts_external_tally() {
    let dir = TempDir::new().unwrap();
    fs::write(
        dir.path().join("published.json"),
        r#"{"n_pulses": 10000000000, "n_h_s": 929000000, "n_v_s": 923000000,
            "n_d_s": 1920000000, "n_a_s": 2020000, "n_z_d": 161000000, "n_x_d": 728000}"#,
    )
    .unwrap();
    let out = siqrng(&["estimate", "--tally", "published.json"], dir.path());
    assert!(out.status.success(), "{}", stderr(&out));
    let report = json(&out);
    let e = report["estimation_input"]["e_bx"].as_f64().unwrap();
    assert!((e - 0.00124).abs() < 5e-6);
    let rate = report["rate"]["rate_bps"].as_f64().unwrap();
    assert!((rate / 8.6e6 - 1.0).abs() < 0.1, "{rate}");
}

#[test]
fn failing_battery_exits_1() {
    let dir = TempDir::new().unwrap();
    write_bitstream(&dir.path().join("zeros.siqb"), &BitBuffer::zeros(200_000)).unwrap();
    let out = siqrng(
        &["test", "--input", "zeros.siqb", "--sample_bits", "10000"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(1));
    let report = json(&out);
    assert_eq!(report["passed"], false);
    assert_eq!(report["tests"][0]["name"], "frequency");
    assert_eq!(report["tests"][0]["proportion"], 0.0);
}

#[test]
fn corrupt_bitstream_is_a_validation_error() {
    let dir = TempDir::new().unwrap();
    fs::write(dir.path().join("bad.siqb"), b"NOPE0000000000000000").unwrap();
    let out = siqrng(&["test", "--input", "bad.siqb"], dir.path());
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr(&out).contains("magic"));
}
