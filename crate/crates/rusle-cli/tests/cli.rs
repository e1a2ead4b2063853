//! Black-box tests of the binary: exit codes, config resolution, and the
//! standalone subcommands.

use std::path::Path;
use std::process::Command;

fn rusle() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_rusle"));
    // Tests control configuration explicitly; the ambient environment
    // must not leak in.
    cmd.env_remove("RUSLE_CONFIG");
    cmd
}

fn write_small_raster(path: &Path) {
    let text = "ncols 2\nnrows 2\nxllcorner 0\nyllcorner 0\ncellsize 10\nNODATA_value -9999\n\
                1 2\n3 -9999\n";
    std::fs::write(path, text).unwrap();
}

#[test]
fn help_and_version_exit_zero() {
    assert!(rusle().arg("--help").output().unwrap().status.success());
    assert!(rusle().arg("--version").output().unwrap().status.success());
}

#[test]
fn invalid_config_is_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.json");
    std::fs::write(&cfg, "{\"no_such_section\": 1}").unwrap();
    let out = rusle()
        .args(["indicators", "--precip-dir", "x", "--out-dir", "y", "--config"])
        .arg(&cfg)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("error:"), "stderr: {stderr}");
    assert!(stderr.contains("bad.json"), "stderr should name the file: {stderr}");
}

#[test]
fn missing_input_directory_is_exit_code_3() {
    let dir = tempfile::tempdir().unwrap();
    let out = rusle()
        .args(["indicators", "--precip-dir"])
        .arg(dir.path().join("nowhere"))
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(3));
}

#[test]
fn badly_named_precip_file_is_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let precip = dir.path().join("precip");
    std::fs::create_dir(&precip).unwrap();
    write_small_raster(&precip.join("notadate.asc"));
    let out = rusle()
        .args(["indicators", "--precip-dir"])
        .arg(&precip)
        .arg("--out-dir")
        .arg(dir.path().join("out"))
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn env_var_config_is_honored_and_flag_wins() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "not json").unwrap();
    let input = dir.path().join("r.asc");
    write_small_raster(&input);

    // Env var alone: the broken config aborts the run.
    let out = rusle()
        .args(["render", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("a.png"))
        .env("RUSLE_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));

    // An explicit --config wins over the broken env var.
    let good = dir.path().join("good.json");
    std::fs::write(&good, rusle::io::config::DEFAULT_CONFIG_JSON).unwrap();
    let out = rusle()
        .args(["render", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("b.png"))
        .arg("--config")
        .arg(&good)
        .env("RUSLE_CONFIG", &bad)
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    assert!(dir.path().join("b.png").is_file());
    assert!(dir.path().join("b.legend.txt").is_file());
}

#[test]
fn render_flags_reach_the_output() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("r.asc");
    write_small_raster(&input);
    let out = rusle()
        .args(["render", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("x.png"))
        .args(["--ramp", "heat", "--log-scale", "--min", "0", "--max", "10"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let legend = std::fs::read_to_string(dir.path().join("x.legend.txt")).unwrap();
    assert!(legend.contains("ramp: heat"));
    assert!(legend.contains("scale: log1p"));
    assert!(legend.contains("max: 10"));
}

#[test]
fn unknown_ramp_is_exit_code_2() {
    let dir = tempfile::tempdir().unwrap();
    let input = dir.path().join("r.asc");
    write_small_raster(&input);
    let out = rusle()
        .args(["render", "--input"])
        .arg(&input)
        .arg("--out")
        .arg(dir.path().join("x.png"))
        .args(["--ramp", "rainbow"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn erosivity_exact_reports_each_gauge() {
    let dir = tempfile::tempdir().unwrap();
    let gauge = dir.path().join("g.csv");
    // One heavy half-hour inside an otherwise dry complete year.
    let mut text = String::from("timestamp,depth_mm\n");
    let start = chrono::NaiveDate::from_ymd_opt(2023, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let end = chrono::NaiveDate::from_ymd_opt(2024, 1, 1)
        .unwrap()
        .and_hms_opt(0, 0, 0)
        .unwrap();
    let storm = chrono::NaiveDate::from_ymd_opt(2023, 6, 10)
        .unwrap()
        .and_hms_opt(12, 0, 0)
        .unwrap();
    let mut t = start;
    while t < end {
        let depth = if t == storm || t == storm + chrono::Duration::minutes(15) {
            10.0
        } else {
            0.0
        };
        text.push_str(&format!("{},{depth}\n", t.format("%Y-%m-%dT%H:%M:%S")));
        t += chrono::Duration::minutes(15);
    }
    std::fs::write(&gauge, text).unwrap();

    let report = dir.path().join("r.json");
    let out = rusle()
        .args(["erosivity-exact", "--gauge"])
        .arg(&gauge)
        .arg("--out")
        .arg(&report)
        .output()
        .unwrap();
    assert_eq!(
        out.status.code(),
        Some(0),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let parsed: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["energy_formula"], "brown_foster");
    assert_eq!(parsed["gauges"][0]["step_minutes"], 15);
    let r = parsed["gauges"][0]["result"]["r"].as_f64().unwrap();
    assert!(r > 0.0, "one qualifying storm gives positive R, got {r}");
    assert_eq!(parsed["gauges"][0]["result"]["event_count"], 1);
}

#[test]
fn demo_seeds_differ_but_one_seed_reproduces() {
    let dir = tempfile::tempdir().unwrap();
    for (name, seed) in [("a", "7"), ("b", "7"), ("c", "8")] {
        let out = rusle()
            .args(["demo", "--out-dir"])
            .arg(dir.path().join(name))
            .args(["--seed", seed])
            .output()
            .unwrap();
        assert_eq!(out.status.code(), Some(0));
    }
    let read = |n: &str| std::fs::read(dir.path().join(n).join("dem.asc")).unwrap();
    assert_eq!(read("a"), read("b"));
    assert_ne!(read("a"), read("c"));
}
