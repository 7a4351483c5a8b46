use std::path::Path;
use std::process::{Command, Output};

fn lipdp(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lipdp")).args(args).current_dir(dir).output().expect("binary runs")
}

fn write_config(dir: &Path, text: &str) -> String {
    let path = dir.join("run.cfg");
    std::fs::write(&path, text).unwrap();
    path.to_string_lossy().into_owned()
}

fn report_value(report: &str, key: &str) -> String {
    report
        .lines()
        .find_map(|l| l.strip_prefix(&format!("{key} = ")))
        .unwrap_or_else(|| panic!("missing {key}"))
        .to_string()
}

#[test]
fn solve_writes_one_table_per_stage() {
    let dir = tempfile::tempdir().unwrap();
    let out = lipdp(&["solve", "--out", "o", "--hx", "0.14"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for k in 0..=3 {
        let csv = std::fs::read_to_string(dir.path().join(format!("o/stage_{k}.csv"))).unwrap();
        let mut lines = csv.lines();
        let header = lines.next().unwrap();
        assert_eq!(header, if k < 3 { "S,B,J,u,v" } else { "S,B,J" });
        let mut rows = 0;
        for line in lines {
            rows += 1;
            assert!(line.split(',').all(|f| f.parse::<f64>().unwrap().is_finite()));
        }
        assert!(rows > 0);
        assert!(!csv.contains('\r'));
    }
}

#[test]
fn zero_utility_gives_zero_values() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nutility = zero\n[mesh]\nh_x = 0.2\n");
    let out = lipdp(&["solve", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success());
    for k in 0..=3 {
        let csv = std::fs::read_to_string(dir.path().join(format!("o/stage_{k}.csv"))).unwrap();
        for line in csv.lines().skip(1) {
            assert_eq!(line.split(',').nth(2).unwrap().parse::<f64>().unwrap(), 0.0);
        }
    }
}

#[test]
fn invalid_alpha_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[market]\nalpha = 1.5\n");
    let out = lipdp(&["solve", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("market.alpha") && err.contains("line 2"), "{err}");
}

#[test]
fn empty_admissible_set_is_a_numerical_failure() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = custom\n[custom]\nbound = -1\n[mesh]\nh_x = 0.2\n");
    let out = lipdp(&["solve", "--config", &cfg], dir.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage 2"));
}

#[test]
fn default_certificate_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = lipdp(&["certify", "--out", "o", "--hx", "0.14", "--strict"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = std::fs::read_to_string(dir.path().join("o/certificate.txt")).unwrap();
    assert_eq!(String::from_utf8_lossy(&out.stdout), report);
    for k in 0..=3 {
        assert_eq!(report_value(&report, &format!("stage.{k}.pass")), "true");
    }
    assert_eq!(report_value(&report, "verdict"), "PASS");
    assert_eq!(report.lines().filter(|l| l.starts_with("probe.0.row.")).count(), 200);
}

#[test]
fn state_free_constraint_collapses_the_chain() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[problem]\nkind = custom\n[custom]\nbound = 0.3\n[mesh]\nh_x = 0.2\n");
    let out = lipdp(&["certify", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let report = String::from_utf8(out.stdout).unwrap();
    let mut expected = 2f64.sqrt();
    assert_eq!(report_value(&report, "stage.3.bound").parse::<f64>().unwrap(), expected);
    for k in (0..3).rev() {
        assert_eq!(report_value(&report, &format!("stage.{k}.tau")), "0");
        expected *= report_value(&report, &format!("stage.{k}.expected_v")).parse::<f64>().unwrap();
        let bound: f64 = report_value(&report, &format!("stage.{k}.bound")).parse().unwrap();
        assert!((bound - expected).abs() <= 1e-12 * expected);
    }
}

#[test]
fn strict_mode_reports_certificate_failure() {
    // Without slack the terminal stage fails on the last bit of √2.
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[certificate]\nslack_factor = 0\nprobe_pairs = 5\n[mesh]\nh_x = 0.2\n");
    let relaxed = lipdp(&["certify", "--config", &cfg, "--out", "o"], dir.path());
    assert!(relaxed.status.success());
    let report = String::from_utf8(relaxed.stdout).unwrap();
    assert_eq!(report_value(&report, "stage.3.pass"), "false");
    assert_eq!(report_value(&report, "verdict"), "FAIL");
    let strict = lipdp(&["certify", "--config", &cfg, "--out", "o", "--strict"], dir.path());
    assert_eq!(strict.status.code(), Some(4));
}

#[test]
fn certify_is_byte_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[mesh]\nh_x = 0.2\n[run]\nseed = 11\n");
    for out in ["a", "b"] {
        assert!(lipdp(&["certify", "--config", &cfg, "--out", out], dir.path()).status.success());
    }
    let a = std::fs::read(dir.path().join("a/certificate.txt")).unwrap();
    let b = std::fs::read(dir.path().join("b/certificate.txt")).unwrap();
    assert_eq!(a, b);
    let other = lipdp(&["certify", "--config", &cfg, "--out", "c", "--seed", "12"], dir.path());
    assert!(other.status.success());
    assert_ne!(std::fs::read(dir.path().join("c/certificate.txt")).unwrap(), a);
}

#[test]
fn ift_linear_toy() {
    let dir = tempfile::tempdir().unwrap();
    let out = lipdp(&["ift", "--out", "o"], dir.path());
    assert!(out.status.success());
    let summary = String::from_utf8(out.stdout).unwrap();
    let margin: f64 = report_value(&summary, "residual_margin").parse().unwrap();
    assert!((margin - 0.1).abs() < 1e-12);
    assert_eq!(report_value(&summary, "contraction_margin"), "0.5");
    let csv = std::fs::read_to_string(dir.path().join("o/ift.csv")).unwrap();
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!(f[2] <= 1e-12);
        assert!((f[1] - f[0]).abs() <= 1e-12);
    }
}

#[test]
fn ift_square_root_table() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[ift]\nmap = square\nv0 = 1\ny0 = 1\nr1 = 0.1\nr2 = 0.05\n");
    let out = lipdp(&["ift", "--config", &cfg, "--out", "o"], dir.path());
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let csv = std::fs::read_to_string(dir.path().join("o/ift.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    for line in csv.lines().skip(1) {
        let f: Vec<f64> = line.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((f[1] - f[0].sqrt()).abs() <= 1e-10);
        assert!((f[3] - 0.5 / f[0].sqrt()).abs() <= 1e-9);
    }
}

#[test]
fn ift_failing_radii_exit_nonzero_with_margins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "[ift]\nr2 = 0.6\n");
    let out = lipdp(&["ift", "--config", &cfg, "--out", "o"], dir.path());
    assert_ne!(out.status.code(), Some(0));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(report_value(&summary, "residual_margin").parse::<f64>().unwrap() < 0.0);
    assert_eq!(report_value(&summary, "verdict"), "FAIL");
}
