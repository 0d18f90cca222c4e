use std::fs;
use std::path::Path;
use std::time::Instant;

use ndgd_core::analysis::{
    chi_square_tail_check, consensus_bound_trial, decompose, descent_bound_trial, eig_sandwich_check, evolve_coupling,
    relaxed_azuma_trial, report_json, ReportEntry, SyntheticProcess, TrialInit, TrialStats, Verdict,
};
use ndgd_core::engine::{
    build_schedule, consensus_bound, escape_iteration, run, write_trace_csv, Algorithm, RunConfig, RunTrace, Schedule,
    StepParams,
};
use ndgd_core::objectives::{
    av, generate_logistic_data, make_logistic, make_quartic, random_quartic_coeffs, LiftedPoint,
};
use ndgd_core::topology::{build_regular_graph, lazy_metropolis_mixing, validate_mixing, Graph};
use ndgd_core::NdgdError;
use serde::Serialize;

use crate::config::{ExperimentConfig, StepSource};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_INFEASIBLE: i32 = 2;
pub const EXIT_DIVERGED: i32 = 3;
pub const EXIT_CHECK_FAILED: i32 = 1;

#[derive(Serialize)]
struct EscapeRow {
    algorithm: Algorithm,
    stream: u64,
    iterations: usize,
    escape_half: Option<usize>,
    escape_tenth: Option<usize>,
    final_average: Vec<f64>,
    final_consensus_error: f64,
    digest: String,
}

#[derive(Serialize)]
struct Metadata<'a> {
    config: &'a ExperimentConfig,
    alpha: f64,
    sigma: f64,
    schedule: Option<&'a Schedule>,
    zeta: Option<f64>,
    constants: &'a ndgd_core::objectives::RegularityConstants,
    lambda_min: f64,
    lambda_2: f64,
    seed: u64,
    escape: Vec<EscapeRow>,
    wall_time_s: f64,
}

fn escape_row(alg: Algorithm, stream: u64, t: &RunTrace) -> EscapeRow {
    EscapeRow {
        algorithm: alg,
        stream,
        iterations: t.iterations,
        escape_half: escape_iteration(&t.rows, 0.5),
        escape_tenth: escape_iteration(&t.rows, 0.1),
        final_average: av(&t.final_point).iter().copied().collect(),
        final_consensus_error: t.last().map_or(f64::NAN, |r| r.consensus_error),
        digest: t.digest(),
    }
}

fn write_trace(dir: &Path, alg: Algorithm, t: &RunTrace) -> std::io::Result<()> {
    let mut f = std::io::BufWriter::new(fs::File::create(dir.join(format!("trace_{}.csv", alg_name(alg))))?);
    write_trace_csv(t, &mut f).map_err(std::io::Error::other)?;
    Ok(())
}

fn alg_name(a: Algorithm) -> &'static str {
    match a {
        Algorithm::Dgd => "dgd",
        Algorithm::Ndgd => "ndgd",
        Algorithm::Gdq => "gdq",
    }
}

fn fmt_opt(v: Option<usize>) -> String {
    v.map_or_else(|| "never".to_string(), |k| k.to_string())
}

pub fn cmd_run(path: &Path) -> i32 {
    let started = Instant::now();
    let cfg = match ExperimentConfig::load(path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let inst = match cfg.build() {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let obj = &inst.objective;
    let (m, n) = (obj.m(), obj.n());
    let consts = obj.constants();

    let schedule = match cfg.run.step {
        StepSource::Schedule => {
            match build_schedule(cfg.run.rho, consts, inst.mixing.spectral(), m, n, obj.f_value(&inst.x0)) {
                Ok(s) => Some(s),
                Err(e @ NdgdError::ScheduleInfeasible { .. }) => {
                    eprintln!("{e}");
                    return EXIT_INFEASIBLE;
                }
                Err(e) => {
                    eprintln!("config error: {e}");
                    return EXIT_CONFIG;
                }
            }
        }
        StepSource::Manual => None,
    };
    let params = match &schedule {
        Some(s) => StepParams::Schedule(s.clone()),
        None => {
            StepParams::Manual { alpha: cfg.run.alpha.expect("validated"), sigma: cfg.run.sigma.expect("validated") }
        }
    };
    let zeta = consensus_bound(
        params.alpha(),
        params.sigma(),
        cfg.run.rho,
        consts.d,
        consts.l_g,
        inst.mixing.spectral(),
        m,
        n,
    )
    .ok();
    let thresholds = match (&schedule, cfg.run.stop_on_stationarity) {
        (Some(s), true) => Some(s.stationarity_thresholds()),
        (None, true) => {
            eprintln!("config error: stop_on_stationarity needs step = \"schedule\"");
            return EXIT_CONFIG;
        }
        _ => None,
    };

    let dir = &cfg.output.dir;
    if let Err(e) = fs::create_dir_all(dir) {
        eprintln!("cannot create {}: {e}", dir.display());
        return EXIT_CONFIG;
    }

    // one thread per algorithm, each with its own noise stream
    let results: Vec<(Algorithm, u64, ndgd_core::Result<RunTrace>)> = std::thread::scope(|s| {
        let handles: Vec<_> = cfg
            .run
            .algorithms
            .iter()
            .enumerate()
            .map(|(i, &alg)| {
                let rc = RunConfig {
                    algorithm: alg,
                    x0: inst.x0.clone(),
                    max_iters: cfg.run.max_iters,
                    seed: cfg.run.noise_seed,
                    stream: i as u64,
                    record_every: cfg.run.record_every,
                    stop_on_stationarity: thresholds,
                };
                let (obj, w, params) = (obj, &inst.mixing, &params);
                s.spawn(move || (alg, i as u64, run(&rc, obj, w, params)))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("run thread panicked")).collect()
    });

    let mut code = EXIT_OK;
    let mut rows = Vec::new();
    for (alg, stream, res) in results {
        let trace = match res {
            Ok(t) => t,
            Err(NdgdError::Diverged { k, trace }) => {
                eprintln!("{} diverged at iteration {k}", alg_name(alg));
                code = EXIT_DIVERGED;
                *trace
            }
            Err(e) => {
                eprintln!("{} failed: {e}", alg_name(alg));
                return EXIT_CONFIG;
            }
        };
        if let Err(e) = write_trace(dir, alg, &trace) {
            eprintln!("cannot write trace: {e}");
            return EXIT_CONFIG;
        }
        rows.push(escape_row(alg, stream, &trace));
    }

    let write_all = || -> std::io::Result<()> {
        fs::write(dir.join("graph.edges"), inst.graph.to_edge_list())?;
        fs::write(dir.join("mixing.csv"), inst.mixing.to_csv())?;
        Ok(())
    };
    if let Err(e) = write_all() {
        eprintln!("cannot write outputs: {e}");
        return EXIT_CONFIG;
    }

    println!(
        "{:<6} {:>10} {:>12} {:>12} {:>14}  final average",
        "alg", "iters", "escape 50%", "escape 10%", "consensus err"
    );
    for r in &rows {
        println!(
            "{:<6} {:>10} {:>12} {:>12} {:>14.6e}  {:?}",
            alg_name(r.algorithm),
            r.iterations,
            fmt_opt(r.escape_half),
            fmt_opt(r.escape_tenth),
            r.final_consensus_error,
            r.final_average
        );
    }

    let meta = Metadata {
        config: &cfg,
        alpha: params.alpha(),
        sigma: params.sigma(),
        schedule: schedule.as_ref(),
        zeta,
        constants: consts,
        lambda_min: inst.mixing.lambda_min(),
        lambda_2: inst.mixing.lambda_2(),
        seed: cfg.run.noise_seed,
        escape: rows,
        wall_time_s: started.elapsed().as_secs_f64(),
    };
    let json = serde_json::to_string_pretty(&meta).expect("metadata serializes");
    if let Err(e) = fs::write(dir.join("metadata.json"), json + "\n") {
        eprintln!("cannot write metadata: {e}");
        return EXIT_CONFIG;
    }
    code
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Suite {
    All,
    #[value(alias = "lemma1")]
    Sandwich,
    #[value(alias = "lemma3")]
    Consensus,
    #[value(alias = "lemma7")]
    Descent,
    #[value(alias = "lemma10")]
    Coupling,
    Chisq,
    Azuma,
}

impl Suite {
    fn includes(self, other: Suite) -> bool {
        self == Suite::All || self == other
    }
}

fn infeasible_entry(name: &str, statement: &str) -> ReportEntry {
    let mut e = ReportEntry::new(name, statement, &TrialStats::probabilistic(0, 0, 0.0));
    e.verdict = Verdict::Vacuous;
    e
}

pub fn verify_entries(suite: Suite, rho: f64, trials: Option<u64>, seed: u64) -> Result<Vec<ReportEntry>, NdgdError> {
    let mut out = Vec::new();
    let quartic = make_quartic(&random_quartic_coeffs(20, 0))?;
    let sparse = lazy_metropolis_mixing(&build_regular_graph(20, 4, 0)?)?;
    let dense = lazy_metropolis_mixing(&build_regular_graph(20, 8, 0)?)?;

    if suite.includes(Suite::Sandwich) {
        let t = trials.unwrap_or(1000);
        let logistic = make_logistic(&generate_logistic_data(5, 1, 0), 0.1, 1)?;
        let ring = lazy_metropolis_mixing(&Graph::cycle(5)?)?;
        let statement = "lambda_min(hess F) <= lambda_min(hess Q_alpha) <= lambda_min(sum_i hess f_i) / m";
        out.push(ReportEntry::new("sandwich_quartic", statement, &eig_sandwich_check(&quartic, &sparse, t, seed)?));
        out.push(ReportEntry::new("sandwich_logistic", statement, &eig_sandwich_check(&logistic, &ring, t, seed)?));
    }
    let q0 = quartic.f_value(&LiftedPoint::zeros(20, 2));
    // None when rho is below the feasibility threshold of this network
    let schedule = match build_schedule(rho, quartic.constants(), dense.spectral(), 20, 2, q0) {
        Ok(s) => Some(s),
        Err(NdgdError::ScheduleInfeasible { .. }) => None,
        Err(e) => return Err(e),
    };
    if suite.includes(Suite::Consensus) {
        let statement = "P[consensus error <= (lambda_2 + alpha L_g)^k e_0 + zeta for all k <= 50] >= 1 - 50 exp(-rho)";
        match &schedule {
            Some(s) => {
                let st = consensus_bound_trial(
                    &quartic,
                    &dense,
                    s,
                    50,
                    trials.unwrap_or(2000),
                    seed,
                    &TrialInit::RandomBox,
                )?;
                out.push(ReportEntry::new("consensus_bound", statement, &st));
            }
            None => out.push(infeasible_entry("consensus_bound", statement)),
        }
    }
    if suite.includes(Suite::Descent) {
        let statement = "P[Q(x_t) - Q(x_0) <= -(alpha/2) sum |grad Q|^2 + mn alpha sigma^2 (t + sqrt(t rho) + rho)] >= 1 - 2 exp(-rho)";
        match &schedule {
            Some(s) => {
                let st = descent_bound_trial(&quartic, &dense, s, 100, trials.unwrap_or(2000), seed)?;
                out.push(ReportEntry::new("descent_bound", statement, &st));
            }
            None => out.push(infeasible_entry("descent_bound", statement)),
        }
    }
    if suite.includes(Suite::Coupling) {
        let statement = "coupled difference splits exactly into Hessian-path and noise terms (residual < 1e-9)";
        let pair = evolve_coupling(&quartic, &sparse, 1.0, 0.01, &LiftedPoint::consensual(20, &[0.01, 0.0]), 50, seed)?;
        let d = decompose(&pair, &quartic, &sparse, 3)?;
        let ok = d.max_residual() < 1e-9 && pair.mirror_violation() < 1e-12;
        out.push(ReportEntry::new("coupling_decomposition", statement, &TrialStats::exact(1, u64::from(ok))));
    }
    if suite.includes(Suite::Chisq) {
        let t = trials.unwrap_or(1_000_000);
        for (i, (dof, x)) in [(1u32, 3.0), (1, 5.0), (40, 3.0), (40, 5.0)].into_iter().enumerate() {
            let (up, down) = chi_square_tail_check(dof, x, t, seed.wrapping_add(i as u64))?;
            out.push(ReportEntry::new(
                format!("chisq_upper_D{dof}_x{x}"),
                "P[U - D >= 2 sqrt(D x) + 2x] <= exp(-x)",
                &up,
            ));
            out.push(ReportEntry::new(format!("chisq_lower_D{dof}_x{x}"), "P[D - U >= 2 sqrt(D x)] <= exp(-x)", &down));
        }
    }
    if suite.includes(Suite::Azuma) {
        let t = trials.unwrap_or(1_000_000);
        let statement =
            "P[X_t >= X_0 + lambda] <= exp(-lambda^2 / (2 (sum(sigma_k^2 + a_k^2) + M lambda / 3))) + sum p_k";
        for (name, p) in [
            ("azuma_zero", SyntheticProcess::Zero { steps: 100 }),
            ("azuma_bounded", SyntheticProcess::BoundedWalk { steps: 100 }),
            ("azuma_jump", SyntheticProcess::JumpWalk { steps: 100, jump: 10.0, jump_prob: 1e-4 }),
        ] {
            out.push(ReportEntry::new(name, statement, &relaxed_azuma_trial(&p, 30.0, t, seed)?));
        }
    }
    Ok(out)
}

pub fn cmd_verify(suite: Suite, rho: f64, trials: Option<u64>, seed: u64, out: &Path) -> i32 {
    if !(rho >= 1.0) || trials == Some(0) {
        eprintln!("need rho >= 1 and trials >= 1");
        return EXIT_CONFIG;
    }
    let entries = match verify_entries(suite, rho, trials, seed) {
        Ok(e) => e,
        Err(e) => {
            eprintln!("verification error: {e}");
            return EXIT_CHECK_FAILED;
        }
    };
    println!(
        "{:<26} {:>9} {:>10} {:>10} {:>10} {:>10}  verdict",
        "check", "trials", "rate", "bound", "wilson_lo", "wilson_hi"
    );
    for e in &entries {
        println!(
            "{:<26} {:>9} {:>10.6} {:>10.6} {:>10.6} {:>10.6}  {}",
            e.check_name,
            e.trials,
            e.empirical_rate,
            e.bound,
            e.wilson_low,
            e.wilson_high,
            serde_json::to_value(e.verdict).expect("verdict").as_str().expect("string")
        );
    }
    if let Some(parent) = out.parent().filter(|p| !p.as_os_str().is_empty()) {
        if let Err(e) = fs::create_dir_all(parent) {
            eprintln!("cannot create {}: {e}", parent.display());
            return EXIT_CONFIG;
        }
    }
    if let Err(e) = fs::write(out, report_json(&entries) + "\n") {
        eprintln!("cannot write {}: {e}", out.display());
        return EXIT_CONFIG;
    }
    if entries.iter().any(|e| e.verdict == Verdict::Fail) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_OK
    }
}

pub fn cmd_schedule(rhos: &[f64], config: Option<&Path>, json: bool) -> i32 {
    let cfg = match config {
        Some(p) => match ExperimentConfig::load(p) {
            Ok(c) => c,
            Err(e) => {
                eprintln!("config error: {e}");
                return EXIT_CONFIG;
            }
        },
        None => ExperimentConfig::default_quartic(),
    };
    let inst = match cfg.build() {
        Ok(i) => i,
        Err(e) => {
            eprintln!("config error: {e}");
            return EXIT_CONFIG;
        }
    };
    let obj = &inst.objective;
    let report = validate_mixing(&inst.mixing, &inst.graph);
    if !report.as_ref().is_ok_and(|r| r.all_passed()) {
        eprintln!("mixing matrix fails validation: {report:?}");
        return EXIT_CONFIG;
    }
    let spectral = inst.mixing.spectral();
    let c = obj.constants();
    if !json {
        println!(
            "L_g = {:.6e}  L_H = {:.6e}  D = {:.6e}  lambda_min(W) = {:.6}  lambda_2(W) = {:.6}",
            c.l_g, c.l_h, c.d, spectral.lambda_min, spectral.lambda_2
        );
        println!(
            "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>14} {:>12} {:>10}  feasible",
            "rho", "alpha", "sigma", "zeta", "eps_g", "eps_H", "r", "d", "log10 K"
        );
    }
    let mut code = EXIT_OK;
    let mut rows = Vec::new();
    for &rho in rhos {
        match build_schedule(rho, c, spectral, obj.m(), obj.n(), obj.f_value(&inst.x0)) {
            Ok(s) => {
                if !json {
                    println!(
                        "{:>8} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.4e} {:>14} {:>12.4e} {:>10.3}  yes",
                        rho, s.alpha, s.sigma, s.zeta, s.eps_g, s.eps_h, s.r, s.d, s.log10_k
                    );
                }
                rows.push(serde_json::to_value(&s).expect("schedule serializes"));
            }
            Err(NdgdError::ScheduleInfeasible { contraction, required_rho, .. }) => {
                if !json {
                    println!(
                        "{rho:>8} lambda_2 + alpha L_g = {contraction:.6} >= 1  no (need rho > {required_rho:.4})"
                    );
                }
                rows.push(serde_json::json!({ "rho": rho, "feasible": false, "required_rho": required_rho }));
                code = EXIT_INFEASIBLE;
            }
            Err(e) => {
                eprintln!("{e}");
                return EXIT_CONFIG;
            }
        }
    }
    if json {
        let doc = serde_json::json!({
            "constants": c,
            "lambda_min": spectral.lambda_min,
            "lambda_2": spectral.lambda_2,
            "schedules": rows,
        });
        println!("{}", serde_json::to_string_pretty(&doc).expect("schedule table serializes"));
    }
    code
}
