use std::path::Path;
use std::process::Command;

use transverse_nls::cli::{cmd_compare, read_compare_csv, read_scan_csv, ConfigFile, OutputFormat, RunConfig};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_transverse-nls"))
}

fn run(args: &[&str], dir: &Path) -> (i32, String, String) {
    let out = bin().args(args).arg("--out").arg(dir).output().unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

#[test]
fn validate_passes_on_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, _) = run(&["validate"], dir.path());
    assert_eq!(code, 0, "{stdout}");
    for name in ["l0_eigenvalues", "l_minus_zero_mode", "l_plus_zero_mode", "gamma_identities", "gaussian_sommerfeld"] {
        assert!(stdout.lines().any(|l| l.starts_with("PASS") && l.contains(name)), "{name}: {stdout}");
    }
}

#[test]
fn validate_fails_on_a_coarse_grid() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = run(&["validate", "--grid-n", "32"], dir.path());
    assert_eq!(code, 1);
    assert!(stdout.lines().any(|l| l.starts_with("FAIL l0_eigenvalues")));
    assert!(stderr.contains("l0_eigenvalues"));
}

#[test]
fn bad_configuration_is_rejected_before_computing() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let (code, _, stderr) = run(&["scan", "--grid-n", "33"], &out);
    assert_eq!(code, 2);
    assert!(stderr.contains("grid_n"));
    assert!(!out.exists());

    let (code, _, stderr) = run(&["scan", "--rho-start", "1.0", "--rho-end", "1.0"], &out);
    assert_eq!(code, 2);
    assert!(stderr.contains("rho_end"));
    assert!(!out.exists());

    let (code, _, _) = run(&["compare", "--epsilons", ""], &out);
    assert_eq!(code, 2);
    let (code, _, stderr) = run(&["compare", "--epsilons", "0.5,0.9"], &out);
    assert_eq!(code, 2);
    assert!(stderr.contains("epsilons"));

    let config = dir.path().join("run.toml");
    std::fs::write(&config, "grid_n = 64\nrho_stpe = 0.1\n").unwrap();
    let (code, _, stderr) = run(&["validate", "--config", config.to_str().unwrap()], &out);
    assert_eq!(code, 2);
    assert!(stderr.contains("rho_stpe"));

    let (code, _, _) = run(&["frobnicate"], &out);
    assert_eq!(code, 2);
    assert!(!out.exists());
}

#[test]
fn scan_writes_round_trippable_and_deterministic_output() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["scan", "--rho-start", "2.9", "--rho-end", "3.0", "--rho-step", "0.1", "--grid-n", "256"];
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    assert_eq!(run(&args, &a).0, 0);
    assert_eq!(run(&args, &b).0, 0);
    let text = std::fs::read(a.join("scan.csv")).unwrap();
    assert_eq!(text, std::fs::read(b.join("scan.csv")).unwrap());
    assert_eq!(std::fs::read(a.join("events.json")).unwrap(), std::fs::read(b.join("events.json")).unwrap());

    let text = String::from_utf8(text).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("rho,eig_index,re_lambda,im_lambda,residual,localization,label"));
    let rows = read_scan_csv(&a.join("scan.csv")).unwrap();
    assert_eq!(rows.len(), text.lines().count() - 1);
    for (line, row) in lines.zip(&rows) {
        let fields: Vec<&str> = line.split(',').collect();
        assert_eq!(fields[2].parse::<f64>().unwrap(), row.re_lambda);
        assert!(fields[2].contains('e'));
        let mantissa = fields[3].trim_start_matches('-').split('e').next().unwrap();
        assert_eq!(mantissa.len(), 18, "{mantissa}");
    }
    for rho in [2.9, 3.0] {
        let count = rows
            .iter()
            .filter(|r| (r.rho - rho).abs() < 1e-12 && r.label == "localized" && r.re_lambda > 1e-6)
            .count();
        assert_eq!(count, 4, "rho = {rho}");
    }
    let events: serde_json::Value = serde_json::from_slice(&std::fs::read(a.join("events.json")).unwrap()).unwrap();
    assert!(events.as_array().unwrap().is_empty());
}

#[test]
fn json_format_writes_the_same_records() {
    let dir = tempfile::tempdir().unwrap();
    let args = ["scan", "--rho-start", "0.2", "--rho-end", "0.21", "--rho-step", "0.01", "--grid-n", "64", "--format", "json"];
    assert_eq!(run(&args, dir.path()).0, 0);
    let rows: Vec<serde_json::Value> = serde_json::from_slice(&std::fs::read(dir.path().join("scan.json")).unwrap()).unwrap();
    assert_eq!(rows.len(), 2 * 128);
    assert_eq!(rows[0]["eig_index"], 0);
    assert!(!dir.path().join("scan.csv").exists());
}

#[test]
fn compare_rows_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let file = ConfigFile {
        epsilons: Some(vec![0.1]),
        grid_n: Some(64),
        out: Some(dir.path().to_path_buf()),
        ..ConfigFile::default()
    };
    let config = RunConfig::from_file(file).unwrap();
    assert_eq!(config.format, OutputFormat::Csv);
    let rows = cmd_compare(&config).unwrap();
    assert_eq!(rows.len(), 8);
    let back = read_compare_csv(&dir.path().join("compare.csv")).unwrap();
    assert_eq!(back.len(), rows.len());
    for (a, b) in rows.iter().zip(&back) {
        assert_eq!((a.epsilon, a.rho, &a.mode, &a.route, &a.status), (b.epsilon, b.rho, &b.mode, &b.route, &b.status));
        for (x, y) in [(a.growth_rate, b.growth_rate), (a.im_omega, b.im_omega)] {
            assert!(x == y || (x.is_nan() && y.is_nan()));
        }
    }
    assert!(back.iter().filter(|r| r.route == "dense").all(|r| r.status == "unresolvable"));
}

#[test]
fn semiclassical_command_writes_a_row_per_epsilon_and_mode() {
    let dir = tempfile::tempdir().unwrap();
    let (code, stdout, stderr) = run(&["semiclassical", "--epsilons", "0.5,0.3"], dir.path());
    assert_eq!(code, 0, "{stdout}{stderr}");
    let text = std::fs::read_to_string(dir.path().join("semiclassical.csv")).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines.len(), 5);
    assert!(lines[0].starts_with("epsilon,rho,mode,"));
    assert!(lines[1..].iter().all(|l| l.ends_with(",ok")));
}
