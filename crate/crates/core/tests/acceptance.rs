//! Acceptance suite: one line per criterion, non-zero exit if any fails.

use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector};
use ndgd_core::analysis::*;
use ndgd_core::engine::*;
use ndgd_core::objectives::*;
use ndgd_core::rng::stream_rng;
use ndgd_core::topology::*;

struct Outcome {
    passed: bool,
    detail: String,
}

fn outcome(passed: bool, detail: impl Into<String>) -> Outcome {
    Outcome { passed, detail: detail.into() }
}

fn quartic_network(degree: usize) -> (ObjectiveSet, MixingMatrix) {
    let g = build_regular_graph(20, degree, 0).unwrap();
    (make_quartic(&random_quartic_coeffs(20, 0)).unwrap(), lazy_metropolis_mixing(&g).unwrap())
}

fn logistic_network() -> (ObjectiveSet, MixingMatrix) {
    let obj = make_logistic(&generate_logistic_data(5, 1, 0), 0.1, 1).unwrap();
    (obj, lazy_metropolis_mixing(&Graph::cycle(5).unwrap()).unwrap())
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn schedule_for(obj: &ObjectiveSet, w: &MixingMatrix, rho: f64) -> Schedule {
    let q0 = obj.f_value(&LiftedPoint::zeros(obj.m(), obj.n()));
    build_schedule(rho, obj.constants(), w.spectral(), obj.m(), obj.n(), q0).unwrap()
}

fn c1_dgd_is_gd_on_q() -> Outcome {
    let (obj, w) = quartic_network(4);
    let alpha = 0.05;
    let bx = DomainBox::cube(40, 2.0).unwrap();
    let mut worst: f64 = 0.0;
    for i in 0..20 {
        let mut a = LiftedPoint::new(20, 2, bx.sample(&mut stream_rng(1, i))).unwrap();
        let mut b = a.clone();
        let mut acc = 0.0;
        for _ in 0..100 {
            a = dgd_step(&obj, &w, alpha, &a).unwrap();
            b = gdq_step(&obj, &w, alpha, &b).unwrap();
            acc += a.as_slice().iter().zip(b.as_slice()).map(|(u, v)| (u - v).powi(2)).sum::<f64>().sqrt();
        }
        worst = worst.max(acc);
    }
    outcome(worst <= 1e-10, format!("max accumulated deviation {worst:.3e} (tol 1e-10)"))
}

fn c2_sandwich() -> Outcome {
    let (q, wq) = quartic_network(4);
    let (l, wl) = logistic_network();
    let sq = eig_sandwich_check(&q, &wq, 1000, 2).unwrap();
    let sl = eig_sandwich_check(&l, &wl, 1000, 2).unwrap();
    outcome(
        sq.failures() == 0 && sl.failures() == 0,
        format!("quartic {}/1000, logistic {}/1000", sq.successes, sl.successes),
    )
}

fn c3_decomposition() -> Outcome {
    let (obj, w) = quartic_network(4);
    let x0 = LiftedPoint::consensual(20, &[0.01, 0.0]);
    let pair = evolve_coupling(&obj, &w, 1.0, 0.01, &x0, 50, 3).unwrap();
    let quartic = decompose(&pair, &obj, &w, 3).unwrap();

    let mut rng = stream_rng(5, 0);
    let terms = (0..20)
        .map(|_| {
            let r = DMatrix::from_fn(2, 2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0));
            (&r + r.transpose(), DVector::from_fn(2, |_, _| rand::Rng::random_range(&mut rng, -1.0..1.0)))
        })
        .collect();
    let quad = make_quadratic(terms).unwrap();
    let pair_q = evolve_coupling(&quad, &w, 0.1, 0.1, &LiftedPoint::zeros(20, 2), 50, 3).unwrap();
    let flat = decompose(&pair_q, &quad, &w, 1).unwrap();

    let ok = pair.mirror_violation() < 1e-12
        && quartic.max_residual() < 1e-9
        && flat.max_hessian_term() == 0.0
        && flat.max_residual() < 1e-11;
    outcome(
        ok,
        format!(
            "quartic residual {:.3e} (max |Δ| {:.3e}); constant Hessian: |Δ₁| {:.1e}, residual {:.3e}",
            quartic.max_residual(),
            pair.deltas().iter().map(|d| d.norm()).fold(0.0, f64::max),
            flat.max_hessian_term(),
            flat.max_residual()
        ),
    )
}

fn c4_chi_square() -> Outcome {
    let mut ok = true;
    let mut parts = Vec::new();
    for (i, (dof, x)) in [(1, 3.0), (1, 5.0), (40, 3.0), (40, 5.0)].into_iter().enumerate() {
        let (up, down) = chi_square_tail_check(dof, x, 1_000_000, 10 + i as u64).unwrap();
        ok &= up.verdict == Verdict::Pass && down.verdict == Verdict::Pass;
        parts.push(format!(
            "D={dof} x={x}: tails {:.4}/{:.4} vs {:.4}",
            1.0 - up.empirical_rate,
            1.0 - down.empirical_rate,
            (-x).exp()
        ));
    }
    outcome(ok, parts.join("; "))
}

fn c5_azuma() -> Outcome {
    let walk = SyntheticProcess::BoundedWalk { steps: 100 };
    let jumps = SyntheticProcess::JumpWalk { steps: 100, jump: 10.0, jump_prob: 1e-4 };
    let a = relaxed_azuma_trial(&walk, 30.0, 1_000_000, 20).unwrap();
    let b = relaxed_azuma_trial(&jumps, 30.0, 1_000_000, 21).unwrap();
    outcome(
        a.verdict == Verdict::Pass && b.verdict == Verdict::Pass,
        format!(
            "bounded tail {:.5} vs {:.4}; jump tail {:.5} vs {:.4}",
            1.0 - a.empirical_rate,
            walk.tail_bound(30.0),
            1.0 - b.empirical_rate,
            jumps.tail_bound(30.0)
        ),
    )
}

fn c6_consensus() -> Outcome {
    let (obj, w) = quartic_network(8);
    let s = schedule_for(&obj, &w, 6.0);
    let stats = consensus_bound_trial(&obj, &w, &s, 50, 2000, 6, &TrialInit::RandomBox).unwrap();

    let same = make_quartic(&[(1.0, 1.0, 1.0, -1.0); 20]).unwrap();
    let s0 = schedule_for(&same, &w, 6.0).with_sigma(0.0).unwrap();
    let flat = consensus_bound_trial(&same, &w, &s0, 50, 2000, 6, &TrialInit::RandomConsensual).unwrap();
    let bound = (1.0 - 50.0 * (-6.0f64).exp()).max(0.0);
    outcome(
        stats.empirical_rate >= bound && flat.failures() == 0,
        format!(
            "rate {:.4} vs {:.4} (zeta {:.3e}); noiseless identical {}/{}",
            stats.empirical_rate, bound, s.zeta, flat.successes, flat.trials
        ),
    )
}

fn c7_descent() -> Outcome {
    let (obj, w) = quartic_network(8);
    let s = schedule_for(&obj, &w, 6.0);
    let stats = descent_bound_trial(&obj, &w, &s, 100, 2000, 7).unwrap();
    let flat = descent_bound_trial(&obj, &w, &s.with_sigma(0.0).unwrap(), 100, 2000, 7).unwrap();
    let bound = 1.0 - 2.0 * (-6.0f64).exp();
    outcome(
        stats.empirical_rate >= bound && flat.failures() == 0,
        format!("rate {:.4} vs {:.4}; noiseless {}/{}", stats.empirical_rate, bound, flat.successes, flat.trials),
    )
}

/// Escape iteration per noise seed (infinite when it never happens).
fn ndgd_escapes(
    obj: &ObjectiveSet,
    w: &MixingMatrix,
    x0: &LiftedPoint,
    params: &StepParams,
    iters: usize,
) -> Vec<(f64, RunTrace)> {
    (0..20)
        .map(|s| {
            let cfg = RunConfig { stream: s, ..RunConfig::new(Algorithm::Ndgd, x0.clone(), iters, 8) };
            let t = run(&cfg, obj, w, params).unwrap();
            (escape_iteration(&t.rows, 0.5).map_or(f64::INFINITY, |k| k as f64), t)
        })
        .collect()
}

fn c8_escape_quartic() -> Outcome {
    let (obj, w) = quartic_network(4);
    let params = StepParams::Manual { alpha: 1.0, sigma: 0.01 };
    let near = LiftedPoint::consensual(20, &[1.0 - 1e-5, 1e-5]);
    let dgd = run(&RunConfig::new(Algorithm::Dgd, near.clone(), 10_000, 0), &obj, &w, &params).unwrap();
    let dgd_k = escape_iteration(&dgd.rows, 0.5).map_or(f64::INFINITY, |k| k as f64);
    let noisy: Vec<f64> = ndgd_escapes(&obj, &w, &near, &params, 10_000).into_iter().map(|e| e.0).collect();
    let med = median(noisy);

    let on = LiftedPoint::consensual(20, &[1.0, 0.0]);
    let dgd_on = run(&RunConfig::new(Algorithm::Dgd, on.clone(), 10_000, 0), &obj, &w, &params).unwrap();
    let stuck = escape_iteration(&dgd_on.rows, 0.5).is_none();
    let all_escape = ndgd_escapes(&obj, &w, &on, &params, 10_000).iter().all(|e| e.0.is_finite());
    outcome(
        med < dgd_k && stuck && all_escape,
        format!(
            "NDGD median {med} vs DGD {dgd_k}; DGD on manifold escapes: {}; NDGD from manifold escapes in all seeds: {all_escape}",
            !stuck
        ),
    )
}

fn c9_escape_logistic() -> Outcome {
    let (obj, w) = logistic_network();
    let (alpha, sigma) = (0.1, 0.05);
    let params = StepParams::Manual { alpha, sigma };
    let near = LiftedPoint::consensual(5, &[1.0 - 1e-5, -1.0 - 1e-5]);
    let dgd = run(&RunConfig::new(Algorithm::Dgd, near.clone(), 10_000, 0), &obj, &w, &params).unwrap();
    let dgd_k = escape_iteration(&dgd.rows, 0.5).map_or(f64::INFINITY, |k| k as f64);
    let runs = ndgd_escapes(&obj, &w, &near, &params, 10_000);
    let med = median(runs.iter().map(|e| e.0).collect());

    let c = obj.constants();
    let zeta = consensus_bound(alpha, sigma, 6.0, c.d, c.l_g, w.spectral(), 5, 2).unwrap();
    let mins = obj.minimizers().unwrap();
    let mut worst_dev: f64 = 0.0;
    let mut worst_min: f64 = 0.0;
    for (_, t) in &runs {
        let x = &t.final_point;
        worst_dev = agent_deviations(x).into_iter().fold(worst_dev, f64::max);
        // distance of every agent to the single minimizer nearest the average
        let centre = av(x);
        let target = mins.iter().min_by(|a, b| (*a - &centre).norm().total_cmp(&(*b - &centre).norm())).unwrap();
        for b in x.blocks() {
            worst_min = worst_min.max(distance_to_set(b, std::slice::from_ref(target)).unwrap());
        }
    }
    outcome(
        med < dgd_k && worst_dev <= zeta && worst_min <= 0.15,
        format!(
            "NDGD median {med} vs DGD {dgd_k}; max agent deviation {worst_dev:.3e} (zeta {zeta:.3}); max distance to common minimizer {worst_min:.3e}"
        ),
    )
}

fn c10_monotone_schedule() -> Outcome {
    let (obj, _) = quartic_network(4);
    let m = 20;
    let beta = 0.3;
    let dense = DMatrix::from_fn(m, m, |i, j| (1.0 - beta) / m as f64 + if i == j { beta } else { 0.0 });
    let w = MixingMatrix::from_dense(dense).unwrap();
    let report = validate_mixing(&w, &Graph::complete(m).unwrap()).unwrap();
    let q0 = obj.f_value(&LiftedPoint::consensual(m, &[1.0, 0.0]));
    let rows: Vec<Schedule> = [1.0, 4.0, 16.0, 64.0, 256.0]
        .iter()
        .map(|&rho| build_schedule(rho, obj.constants(), w.spectral(), m, 2, q0).unwrap())
        .collect();
    let ok = report.all_passed()
        && rows.windows(2).all(|p| {
            p[1].alpha < p[0].alpha && p[1].sigma < p[0].sigma && p[1].zeta < p[0].zeta && p[1].log10_k > p[0].log10_k
        });
    let line: Vec<String> = rows
        .iter()
        .map(|s| format!("rho {}: alpha {:.3e} zeta {:.3e} log10K {:.2}", s.rho, s.alpha, s.zeta, s.log10_k))
        .collect();
    outcome(ok, line.join("; "))
}

fn c11_derivatives() -> Outcome {
    let (q, _) = quartic_network(4);
    let (l, _) = logistic_network();
    let wide = make_logistic(&generate_logistic_data(4, 3, 1), 0.1, 2).unwrap();
    let mut worst = (0.0f64, 0.0f64);
    for obj in [&q, &l, &wide] {
        let bx = &obj.constants().domain_box;
        let mut rng = stream_rng(11, 0);
        for _ in 0..100 {
            let x = bx.sample(&mut rng);
            for c in obj.components() {
                let (eg, eh) = finite_difference_errors(c.as_ref(), &x);
                worst = (worst.0.max(eg), worst.1.max(eh));
            }
        }
    }
    outcome(worst.0 < 1e-5 && worst.1 < 1e-4, format!("max rel err gradient {:.2e}, Hessian {:.2e}", worst.0, worst.1))
}

fn main() {
    let criteria: [(&str, Duration, fn() -> Outcome); 11] = [
        ("DGD equals gradient descent on Q", Duration::from_secs(1), c1_dgd_is_gd_on_q),
        ("eigenvalue sandwich", Duration::from_secs(30), c2_sandwich),
        ("coupling decomposition", Duration::from_secs(5), c3_decomposition),
        ("chi-square tails", Duration::from_secs(30), c4_chi_square),
        ("relaxed Azuma", Duration::from_secs(60), c5_azuma),
        ("consensus bound", Duration::from_secs(120), c6_consensus),
        ("descent bound", Duration::from_secs(120), c7_descent),
        ("saddle escape, quartic", Duration::from_secs(120), c8_escape_quartic),
        ("saddle escape, logistic", Duration::from_secs(120), c9_escape_logistic),
        ("schedule monotonicity", Duration::from_secs(1), c10_monotone_schedule),
        ("derivative correctness", Duration::from_secs(10), c11_derivatives),
    ];
    let mut failed = 0;
    for (i, (name, limit, check)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let out = check();
        let elapsed = start.elapsed();
        let passed = out.passed && elapsed <= *limit;
        failed += usize::from(!passed);
        println!(
            "criterion {:>2} {}: {} [{:.2}s / {}s] {}",
            i + 1,
            name,
            if passed { "PASS" } else { "FAIL" },
            elapsed.as_secs_f64(),
            limit.as_secs(),
            out.detail
        );
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
