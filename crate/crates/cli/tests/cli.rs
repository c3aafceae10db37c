//! End-to-end checks of the `streetspread` binary: exit codes, the
//! machine-readable error line, byte-identical reruns, and the sweep
//! resume protocol.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_streetspread"))
}

fn small_args() -> Vec<String> {
    [
        "lambda=30", "theta=3", "v_kmh=8", "h_km=2", "u_km=0.6", "k_max=600", "seed=11",
        "reps=2",
    ]
    .iter()
    .flat_map(|kv| ["--set".to_string(), kv.to_string()])
    .collect()
}

fn stdout_of(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout is utf-8")
}

fn stderr_of(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr is utf-8")
}

fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("reading {}: {e}", path.display()))
}

#[test]
fn run_is_deterministic_and_reports_tau() {
    let dir = tempfile::tempdir().unwrap();
    let mut outputs = Vec::new();
    for pass in 0..2 {
        let metrics = dir.path().join(format!("m{pass}.csv"));
        let events = dir.path().join(format!("e{pass}.csv"));
        let out = bin()
            .arg("run")
            .args(small_args())
            .arg("--out-metrics")
            .arg(&metrics)
            .arg("--out-events")
            .arg(&events)
            .output()
            .unwrap();
        assert!(out.status.success(), "stderr: {}", stderr_of(&out));
        assert!(
            stdout_of(&out).starts_with("tau_s="),
            "summary line missing: {}",
            stdout_of(&out)
        );
        outputs.push((read(&metrics), read(&events)));
    }
    assert_eq!(outputs[0], outputs[1], "reruns must be byte-identical");

    let header = String::from_utf8(outputs[0].0.clone()).unwrap();
    assert!(header.starts_with("lambda,theta,v,rho,r,u,H,seed_count,V_u_kmh,R_u,not_reached_count\n"));
}

#[test]
fn config_file_and_set_overrides_agree() {
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("run.conf");
    std::fs::write(
        &config,
        "# small instance\nlambda = 30\ntheta = 3\nv_kmh = 8\nh_km = 2\nu_km = 0.6\nk_max = 600\nseed = 11\nreps = 2\n",
    )
    .unwrap();

    let m_conf = dir.path().join("mc.csv");
    let m_sets = dir.path().join("ms.csv");
    let out = bin()
        .arg("run")
        .arg("--config")
        .arg(&config)
        .arg("--out-metrics")
        .arg(&m_conf)
        .arg("--out-events")
        .arg(dir.path().join("ec.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let mut args = small_args();
    args.insert(0, "run".into());
    let out = bin()
        .args(args)
        .arg("--out-metrics")
        .arg(&m_sets)
        .arg("--out-events")
        .arg(dir.path().join("es.csv"))
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    assert_eq!(read(&m_conf), read(&m_sets), "config file vs --set must agree");
}

#[test]
fn errors_exit_nonzero_with_machine_readable_line() {
    // dt >= rho violates the discretization contract.
    let out = bin()
        .args(["run", "--set", "dt_s=30", "--set", "rho_s=20"])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(
        err.lines().any(|l| l.starts_with("error: ")),
        "missing error line: {err}"
    );

    // Unknown config key.
    let out = bin().args(["run", "--set", "lambada=3"]).output().unwrap();
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("error: "));
}

#[test]
fn sweep_budget_exits_3_and_resume_joins_losslessly() {
    let dir = tempfile::tempdir().unwrap();
    let sweep_args = |out_csv: &Path, extra: &[&str]| {
        let mut c = bin();
        c.arg("sweep")
            .args(small_args())
            .args(["--axis", "theta=2,3", "--axis", "v=8"])
            .arg("--out")
            .arg(out_csv)
            .args(extra);
        c
    };

    let full = dir.path().join("full.csv");
    let out = sweep_args(&full, &[]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    assert_eq!(stdout_of(&out), "cells=2 rows_written=2\n");

    let part1 = dir.path().join("part1.csv");
    let out = sweep_args(&part1, &["--max-cells", "1"]).output().unwrap();
    assert_eq!(out.status.code(), Some(3), "budget exhaustion must exit 3");
    assert!(stdout_of(&out).contains("resume=cell=1"));
    assert!(stderr_of(&out).contains("error: cell budget exhausted"));

    let part2 = dir.path().join("part2.csv");
    let out = sweep_args(&part2, &["--start-cell", "cell=1"]).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let full_text = String::from_utf8(read(&full)).unwrap();
    let mut joined: Vec<&str> = Vec::new();
    let p1 = String::from_utf8(read(&part1)).unwrap();
    let p2 = String::from_utf8(read(&part2)).unwrap();
    joined.extend(p1.lines());
    joined.extend(p2.lines().skip(1));
    let full_lines: Vec<&str> = full_text.lines().collect();
    assert_eq!(joined, full_lines, "resumed rows must equal the uninterrupted sweep");
}

#[test]
fn map_generate_stats_roundtrip() {
    let dir = tempfile::tempdir().unwrap();
    let map = dir.path().join("city.map");
    let out = bin()
        .args(["map", "generate", "--lambda", "50", "--window", "3", "--seed", "5", "--out"])
        .arg(&map)
        .output()
        .unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));

    let out = bin().args(["map", "stats"]).arg(&map).output().unwrap();
    assert!(out.status.success(), "stderr: {}", stderr_of(&out));
    let text = stdout_of(&out);
    assert!(text.contains("interior_edges"), "stats output: {text}");

    let missing = bin()
        .args(["map", "stats"])
        .arg(dir.path().join("absent.map"))
        .output()
        .unwrap();
    assert_eq!(missing.status.code(), Some(1));
    assert!(stderr_of(&missing).contains("error: "));
}
