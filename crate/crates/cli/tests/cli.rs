use std::path::Path;
use std::process::Command;

use sha2::{Digest, Sha256};
use swapsim_cli::config::Format;
use swapsim_cli::io::{read_classical, read_trials, TRIAL_HEADER};

fn swapsim(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_swapsim"))
        .args(args)
        .output()
        .expect("binary runs");
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

fn sha(path: &Path) -> Vec<u8> {
    Sha256::digest(std::fs::read(path).unwrap()).to_vec()
}

#[test]
fn verify_algebra_exits_zero() {
    let (code, stdout, _) = swapsim(&["verify-algebra"]);
    assert_eq!(code, 0);
    assert!(stdout.contains("diag(0.5000, 0.5000)"));
    assert_eq!(stdout.matches("[PASS]").count(), 15);
}

#[test]
fn zero_trials_writes_header_only() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("empty.csv");
    let (code, _, err) = swapsim(&["simulate-quantum", "--trials", "0", "--output", path.to_str().unwrap()]);
    assert_eq!(code, 0, "{err}");
    assert_eq!(std::fs::read_to_string(&path).unwrap(), TRIAL_HEADER.join(",") + "\n");
}

#[test]
fn bell_log_has_uniform_eve_outcomes() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bell.csv");
    let (code, _, err) = swapsim(&[
        "simulate-quantum",
        "--trials",
        "100000",
        "--seed",
        "11",
        "--eve-policy",
        "fixed:BELL",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let records = read_trials(std::fs::File::open(&path).unwrap(), Format::Csv).unwrap();
    let mut counts = [0u64; 4];
    for r in &records {
        counts[r.eve_outcome.index()] += 1;
    }
    // 5σ of a Binomial(10⁵, 1/4) count is about 685
    for c in counts {
        assert!((c as i64 - 25_000).abs() < 700, "{counts:?}");
    }
}

#[test]
fn same_seed_same_bytes() {
    let dir = tempfile::tempdir().unwrap();
    for (cmd, extra) in [
        ("simulate-quantum", vec!["--eve-policy", "bernoulli:0.5", "--alice-angles", "0,pi/2", "--bob-angles", "pi/4,-pi/4"]),
        ("simulate-classical", vec!["--views", "3"]),
    ] {
        for ext in ["csv", "json"] {
            let a = dir.path().join(format!("{cmd}-a.{ext}"));
            let b = dir.path().join(format!("{cmd}-b.{ext}"));
            for p in [&a, &b] {
                let mut args = vec![cmd, "--trials", "500", "--seed", "99", "--output", p.to_str().unwrap()];
                args.extend(&extra);
                assert_eq!(swapsim(&args).0, 0);
            }
            assert_eq!(sha(&a), sha(&b), "{cmd} {ext}");
        }
    }
}

#[test]
fn config_file_is_overridden_by_flags() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("run.cfg");
    let out = dir.path().join("log.json");
    std::fs::write(
        &cfg,
        format!("trials = 7\nseed = 3\neve_policy = fixed:PRODUCT\noutput = {}\n", out.display()),
    )
    .unwrap();
    let (code, _, err) = swapsim(&["--config", cfg.to_str().unwrap(), "simulate-quantum", "--trials", "4"]);
    assert_eq!(code, 0, "{err}");
    let records = read_trials(std::fs::File::open(&out).unwrap(), Format::Json).unwrap();
    assert_eq!(records.len(), 4);
    assert!(records.iter().all(|r| r.eve_context.as_str() == "PRODUCT"));
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(swapsim(&["simulate-quantum", "--eve-policy", "bernoulli:2"]).0, 2);
    assert_eq!(swapsim(&["simulate-quantum", "--format", "xml"]).0, 2);
    assert_eq!(swapsim(&["no-such-command"]).0, 2);
    assert_eq!(swapsim(&["chsh"]).0, 2);
    assert_eq!(swapsim(&["chsh", "--input", "x.csv", "--settings", "0,1"]).0, 2);
}

#[test]
fn unwritable_output_fails() {
    let (code, _, err) = swapsim(&["simulate-quantum", "--trials", "1", "--output", "/nonexistent-dir/x.csv"]);
    assert_eq!(code, 1);
    assert!(err.contains("cannot write"));
}

#[test]
fn classical_fixture_round_trips_through_render() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("t1.csv");
    assert_eq!(
        swapsim(&["simulate-classical", "--fixture", "--output", path.to_str().unwrap()]).0,
        0
    );
    let text = std::fs::read_to_string(&path).unwrap();
    assert_eq!(text, swapsim_core::classical::table1_fixture_csv());

    let (code, table, _) = swapsim(&["render-table", "--input", path.to_str().unwrap()]);
    assert_eq!(code, 0);
    let lines: Vec<&str> = table.lines().collect();
    assert_eq!(lines.len(), 31);
    assert_eq!(lines[0].matches("c/p").count(), 3);
    let row4: Vec<&str> = lines[4].split(" | ").collect();
    assert!(row4[1].ends_with("c e2") && row4[2].ends_with("p p4"));

    let (code, one, _) = swapsim(&["render-table", "--input", path.to_str().unwrap(), "--views", "3"]);
    assert_eq!(code, 0);
    assert!(one.lines().nth(1).unwrap().ends_with("c o2"));
    assert_eq!(swapsim(&["render-table", "--input", path.to_str().unwrap(), "--views", "4"]).0, 2);
}

#[test]
fn generated_classical_rows_obey_constraints() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("rows.json");
    let (code, _, err) = swapsim(&[
        "simulate-classical",
        "--trials",
        "2000",
        "--coincidence-q",
        "0.3",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0, "{err}");
    let (records, views) = read_classical(std::fs::File::open(&path).unwrap(), Format::Json).unwrap();
    assert_eq!(views, 3);
    assert_eq!(records.len(), 2000);
    for r in &records {
        assert_eq!(r.row.e2(), 1 - r.row.a1());
        assert_eq!(r.row.b4(), 1 - r.row.e3());
    }
}

#[test]
fn chsh_verdicts() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("mixed.csv");
    let (code, _, _) = swapsim(&[
        "simulate-quantum",
        "--trials",
        "20000",
        "--seed",
        "5",
        "--eve-policy",
        "alternating",
        "--ordering",
        "EVE_FIRST",
        "--alice-angles",
        "0,pi/2",
        "--bob-angles",
        "pi/4,-pi/4",
        "--output",
        path.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    let p = path.to_str().unwrap();
    let (code, report, _) = swapsim(&["chsh", "--input", p, "--key", "psi-"]);
    assert_eq!(code, 0);
    assert!(report.contains("verdict: violated"));
    let (_, report, _) = swapsim(&["chsh", "--input", p, "--key", "PRODUCT:01"]);
    assert!(report.contains("verdict: not violated"));
    let (_, report, _) = swapsim(&["chsh", "--input", p, "--key", "none"]);
    assert!(report.contains("verdict: not violated"));
    let (code, _, _) = swapsim(&["chsh", "--input", p, "--settings", "0,1,2,3"]);
    assert_eq!(code, 1);
}
