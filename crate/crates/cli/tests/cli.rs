use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ndgd_core::engine::{escape_iteration, read_trace_csv};
use serde_json::Value;

const BIN: &str = env!("CARGO_BIN_EXE_ndgd");

fn workdir(name: &str) -> PathBuf {
    let d = Path::new(env!("CARGO_TARGET_TMPDIR")).join("cli").join(name);
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn ndgd(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).current_dir(dir).args(args).output().expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn shipped_config(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name)
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let p = dir.join("exp.toml");
    std::fs::write(&p, body).unwrap();
    p
}

const SMALL_QUARTIC: &str = r#"
[experiment]
kind = "quartic"
m = 20
degree = 4

[run]
step = "manual"
alpha = 1.0
sigma = 0.01
max_iters = 300
noise_seed = 3

[output]
dir = "out"
"#;

#[test]
fn run_is_deterministic() {
    let mut traces = Vec::new();
    for name in ["a", "b"] {
        let dir = workdir(&format!("det_{name}"));
        let cfg = write_config(&dir, SMALL_QUARTIC);
        let o = ndgd(&dir, &["run", cfg.to_str().unwrap()]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
        let out = dir.join("out");
        traces.push((
            std::fs::read(out.join("trace_dgd.csv")).unwrap(),
            std::fs::read(out.join("trace_ndgd.csv")).unwrap(),
            std::fs::read(out.join("mixing.csv")).unwrap(),
            std::fs::read(out.join("graph.edges")).unwrap(),
        ));
    }
    assert_eq!(traces[0], traces[1]);
}

#[test]
fn escape_table_matches_trace() {
    let dir = workdir("escape");
    let o = ndgd(&dir, &["run", shipped_config("quartic_escape.toml").to_str().unwrap()]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let out = dir.join("out/quartic_escape");
    let meta: Value = serde_json::from_str(&std::fs::read_to_string(out.join("metadata.json")).unwrap()).unwrap();
    for row in meta["escape"].as_array().unwrap() {
        let alg = row["algorithm"].as_str().unwrap();
        let text = std::fs::read_to_string(out.join(format!("trace_{alg}.csv"))).unwrap();
        let rows = read_trace_csv(&text).unwrap();
        assert_eq!(rows.len(), 2001);
        assert_eq!(rows[0].dist.len(), 20);
        for (key, frac) in [("escape_half", 0.5), ("escape_tenth", 0.1)] {
            let expect = escape_iteration(&rows, frac).map(|k| k as u64);
            assert_eq!(row[key].as_u64(), expect, "{alg} {key}");
        }
    }
    let half = |alg: &str| {
        meta["escape"].as_array().unwrap().iter().find(|r| r["algorithm"] == alg).unwrap()["escape_half"]
            .as_u64()
            .unwrap()
    };
    assert!(half("ndgd") < half("dgd"));
    assert_eq!(meta["seed"].as_u64(), Some(7));
    assert!(meta["wall_time_s"].as_f64().unwrap() >= 0.0);
}

#[test]
fn output_files_have_fixed_layout() {
    let dir = workdir("layout");
    let cfg = write_config(&dir, SMALL_QUARTIC);
    assert_eq!(code(&ndgd(&dir, &["run", cfg.to_str().unwrap()])), 0);
    let out = dir.join("out");
    let trace = std::fs::read_to_string(out.join("trace_ndgd.csv")).unwrap();
    let header = trace.lines().next().unwrap();
    assert!(header.starts_with("k,consensus_error,grad_q_norm,q_value,grad_sum_norm,lmin_hess_sum,dist_agent_0,"));
    assert!(header.ends_with(",dist_agent_19"));
    // every float carries 17 significant digits
    let first = trace.lines().nth(1).unwrap();
    for f in first.split(',').skip(1) {
        let mantissa = f.split('e').next().unwrap().replace(['-', '.'], "");
        assert_eq!(mantissa.len(), 17, "{f}");
    }
    let edges = std::fs::read_to_string(out.join("graph.edges")).unwrap();
    let mut lines = edges.lines();
    assert_eq!(lines.next(), Some("m 20"));
    assert_eq!(lines.count(), 40);
    let mixing = std::fs::read_to_string(out.join("mixing.csv")).unwrap();
    let w: Vec<Vec<f64>> = mixing.lines().map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(w.len(), 20);
    for row in &w {
        assert_eq!(row.len(), 20);
        assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
    }
}

#[test]
fn config_error_exits_1() {
    let dir = workdir("bad_config");
    let cfg = write_config(&dir, "[experiment]\nkind = \"quartic\"\nunknown = 1\n");
    assert_eq!(code(&ndgd(&dir, &["run", cfg.to_str().unwrap()])), 1);
    assert_eq!(code(&ndgd(&dir, &["run", "does_not_exist.toml"])), 1);
}

#[test]
fn infeasible_schedule_exits_2() {
    let dir = workdir("infeasible");
    let cfg = write_config(&dir, "[experiment]\nkind = \"quartic\"\nm = 20\ndegree = 4\n[run]\nrho = 6.0\n");
    let o = ndgd(&dir, &["run", cfg.to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("infeasible"));
    assert_eq!(code(&ndgd(&dir, &["schedule", "--rho", "4"])), 2);
}

#[test]
fn divergence_exits_3_and_keeps_partial_trace() {
    let dir = workdir("diverge");
    let cfg = write_config(
        &dir,
        "[experiment]\nkind = \"quartic\"\n[run]\nstep = \"manual\"\nalpha = 50.0\nsigma = 0.0\nmax_iters = 200\n[output]\ndir = \"out\"\n",
    );
    assert_eq!(code(&ndgd(&dir, &["run", cfg.to_str().unwrap()])), 3);
    let rows = read_trace_csv(&std::fs::read_to_string(dir.join("out/trace_dgd.csv")).unwrap()).unwrap();
    assert!(!rows.is_empty() && rows.len() < 200);
}

#[test]
fn schedule_reports_step_size() {
    let dir = workdir("schedule");
    let cfg = write_config(&dir, "[experiment]\nkind = \"quartic\"\nm = 20\ndegree = 8\n");
    let o = ndgd(&dir, &["schedule", "--rho", "4", "--config", cfg.to_str().unwrap(), "--json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let c = &v["constants"];
    let s = &v["schedules"][0];
    let lmin = v["lambda_min"].as_f64().unwrap();
    let l_g = c["l_g"].as_f64().unwrap();
    let alpha = s["alpha"].as_f64().unwrap();
    assert!((alpha - lmin / (l_g * 2.0)).abs() <= 1e-15 * alpha);
}

#[test]
fn verify_sandwich_passes_and_is_reproducible() {
    let mut outputs = Vec::new();
    for name in ["a", "b"] {
        let dir = workdir(&format!("verify_{name}"));
        let o = ndgd(&dir, &["verify", "lemma1", "--trials", "1000", "--out", "v.json"]);
        assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
        outputs.push(std::fs::read(dir.join("v.json")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1]);
    let v: Value = serde_json::from_slice(&outputs[0]).unwrap();
    for e in v.as_array().unwrap() {
        for key in
            ["check_name", "paper_ref", "trials", "empirical_rate", "bound", "wilson_low", "wilson_high", "verdict"]
        {
            assert!(e.get(key).is_some(), "missing {key}");
        }
        assert_eq!(e["verdict"], "pass");
        assert_eq!(e["trials"], 1000);
    }
}

#[test]
fn verify_infeasible_rho_is_vacuous() {
    let dir = workdir("verify_vacuous");
    let o = ndgd(&dir, &["verify", "consensus", "--rho", "1", "--trials", "10", "--out", "v.json"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: Value = serde_json::from_slice(&std::fs::read(dir.join("v.json")).unwrap()).unwrap();
    assert_eq!(v[0]["verdict"], "vacuous");
}
