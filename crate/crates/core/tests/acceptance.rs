//! End-to-end acceptance checks. Runs as a plain binary so every criterion
//! prints its PASS/FAIL line; exits nonzero if any criterion fails.

use std::time::Instant;

use betanmf_core::verify::{run_suite, Suite, VerifyOptions, DEFAULT_BETAS};
use betanmf_core::{
    fit, fit_from, init_factors, low_rank_data, match_columns, predicted_savings, Algorithm, FitResult, SolverConfig,
    SyntheticSpec, Termination,
};

const DATA_SEED: u64 = 2024;

struct Outcome {
    passed: bool,
    summary: String,
}

fn outcome(passed: bool, summary: String) -> Outcome {
    Outcome { passed, summary }
}

fn fixed_budget(beta: f64, rank: usize, algorithm: Algorithm, iters: usize) -> SolverConfig {
    let mut config = SolverConfig::new(beta, rank, algorithm);
    config.max_outer_iters = iters;
    config.tol = f64::MIN_POSITIVE;
    config.trace_kkt = false;
    config
}

fn worst_increase(result: &FitResult) -> f64 {
    result
        .trace
        .windows(2)
        .map(|p| (p[1].objective - p[0].objective) / p[0].objective)
        .fold(f64::NEG_INFINITY, f64::max)
}

fn descent() -> Outcome {
    let (data, _) = low_rank_data(SyntheticSpec { rows: 60, cols: 50, rank: 5, noise: 0.1 }, DATA_SEED);
    let mut worst = f64::NEG_INFINITY;
    let mut failures = Vec::new();
    for beta in DEFAULT_BETAS {
        for algorithm in [Algorithm::Bmm, Algorithm::Jmm] {
            for seed in 0..5 {
                let mut config = fixed_budget(beta, 5, algorithm, 300);
                config.seed = seed;
                let r = fit(&data, &config).expect("fit");
                let w = worst_increase(&r);
                worst = worst.max(w);
                if r.iterations != 300 || w > 1e-10 {
                    failures.push(format!("{algorithm} beta={beta} seed={seed}"));
                }
            }
        }
    }
    outcome(
        failures.is_empty(),
        format!("70 runs x 300 iterations, largest relative step increase {worst:.2e}, failures {failures:?}"),
    )
}

fn suite_over(suite: Suite, betas: &[f64], trials: usize) -> (bool, f64, usize) {
    let options = VerifyOptions { betas: betas.to_vec(), trials, seed: 7, ..VerifyOptions::default() };
    let mut worst: f64 = 0.0;
    let mut failures = 0;
    for (i, &beta) in betas.iter().enumerate() {
        let o = run_suite(suite, beta, i, &options).expect("suite");
        worst = worst.max(o.worst);
        failures += o.failures;
        if let Some(cx) = o.first_failure {
            println!("    counterexample: {}", serde_json::to_string(&cx).expect("json"));
        }
    }
    (failures == 0, worst, failures)
}

fn tightness() -> Outcome {
    let (ok_major, worst_major, _) = suite_over(Suite::Majorization, &DEFAULT_BETAS, 200);
    let (ok_tight, worst_tight, _) = suite_over(Suite::Tightness, &DEFAULT_BETAS, 200);
    outcome(
        ok_major && ok_tight,
        format!("200 tuples per beta; worst majorization violation {worst_major:.2e} of slack, worst anchor gap {:.2e} (bound 1e-9)", worst_tight * 1e-9),
    )
}

fn fast_path() -> Outcome {
    let (ok, worst, failures) = suite_over(Suite::FastPath, &[0.0, 1.0, 2.0], 100);
    outcome(
        ok,
        format!(
            "100 instances per beta, BMM and JMM, W and H; worst relative difference {:.2e}, failures {failures}",
            worst * 1e-12
        ),
    )
}

fn w_coincidence() -> Outcome {
    let (ok, worst, failures) = suite_over(Suite::WCoincidence, &DEFAULT_BETAS, 100);
    outcome(ok, format!("100 instances per beta; worst relative difference {:.2e}, failures {failures}", worst * 1e-14))
}

fn gradient_cancellation() -> Outcome {
    let (ok, worst, failures) = suite_over(Suite::GradientCancellation, &[1.0, 1.5, 2.0], 100);
    outcome(ok, format!("100 instances per beta; worst |grad G|_inf / scale {:.2e}, failures {failures}", worst * 1e-4))
}

struct PairedRun {
    beta: f64,
    seed: u64,
    bmm: FitResult,
    jmm: FitResult,
}

fn converged_runs() -> Vec<PairedRun> {
    let (data, _) = low_rank_data(SyntheticSpec { rows: 100, cols: 80, rank: 5, noise: NOISE_100X80 }, DATA_SEED);
    let mut runs = Vec::new();
    for beta in [0.0, 1.0, 2.0] {
        for seed in 0..5 {
            let init = init_factors(100, 80, 5, seed).expect("init");
            let run = |algorithm| {
                let mut config = SolverConfig::new(beta, 5, algorithm);
                config.seed = seed;
                config.trace_kkt = false;
                config.max_outer_iters = 20_000;
                fit_from(&data, &config, init.clone()).expect("fit")
            };
            runs.push(PairedRun { beta, seed, bmm: run(Algorithm::Bmm), jmm: run(Algorithm::Jmm) });
        }
    }
    runs
}

const NOISE_100X80: f64 = 0.05;

fn kkt_convergence(runs: &[PairedRun]) -> Outcome {
    let mut worst: f64 = 0.0;
    let mut worst_fn: f64 = 0.0;
    let mut failures = Vec::new();
    for r in runs {
        for (name, fit) in [("bmm", &r.bmm), ("jmm", &r.jmm)] {
            let k = fit.final_kkt;
            worst = worst.max(k.res_w).max(k.res_h);
            // Same sums rescaled to a single F*N denominator.
            worst_fn = worst_fn.max(k.res_w * 5.0 / 80.0).max(k.res_h * 5.0 / 100.0);
            if fit.termination != Termination::Converged || k.res_w > 0.1 || k.res_h > 0.1 {
                failures
                    .push(format!("{name} beta={} seed={}: {k:?} after {} iterations", r.beta, r.seed, fit.iterations));
            }
        }
    }
    outcome(failures.is_empty(), format!("30 fits to tol 1e-5; largest residual {worst:.2e} per factor entry, {worst_fn:.2e} per data entry (bound 1e-1), failures {failures:?}"))
}

fn agreement(runs: &[PairedRun]) -> Outcome {
    let mut lines = Vec::new();
    let mut ok = true;
    for beta in [0.0, 1.0, 2.0] {
        let mismatches: Vec<f64> = runs
            .iter()
            .filter(|r| r.beta == beta)
            .map(|r| match_columns(r.bmm.factors.w(), r.jmm.factors.w()).expect("match").mismatch)
            .collect();
        let gap = runs
            .iter()
            .filter(|r| r.beta == beta)
            .map(|r| (r.bmm.final_objective - r.jmm.final_objective).abs() / r.bmm.final_objective)
            .fold(0.0, f64::max);
        let agreeing = mismatches.iter().filter(|&&m| m <= 1e-2).count();
        ok &= agreeing >= 4;
        let shown: Vec<String> = mismatches.iter().map(|m| format!("{m:.1e}")).collect();
        lines.push(format!(
            "beta={beta}: {agreeing}/5 seeds within 1e-2 [{}], largest objective gap {gap:.1e}",
            shown.join(", ")
        ));
    }
    outcome(ok, lines.join("; "))
}

fn cost_model() -> Outcome {
    let example = predicted_savings(2, 3, 4, 1, 1.0);
    let mut ok = (example.mult_diff, example.div_diff, example.add_diff) == (24, 6, 24);
    let mut checked = 0;
    for beta in [0.0, 1.0, 2.0] {
        for f in [1, 2, 3, 7, 50, 1000, 16301] {
            for n in [1, 2, 5, 40, 400, 12118] {
                for k in [2, 3, 5, 10, 50] {
                    let s = predicted_savings(f, n, k, 1, beta);
                    ok &= s.mult_diff > 0 && s.add_diff > 0;
                    checked += 1;
                }
            }
        }
    }
    outcome(ok, format!("(2,3,4,1,beta=1) -> {example:?}; {checked} shapes with K >= 2 show positive mult/add savings"))
}

fn directional_speed() -> Outcome {
    let (data, _) = low_rank_data(SyntheticSpec { rows: 1000, cols: 800, rank: 20, noise: 0.1 }, DATA_SEED);
    let mut ok = true;
    let mut lines = Vec::new();
    // Warm caches and the allocator before timing.
    fit(&data, &fixed_budget(1.0, 20, Algorithm::Jmm, 5)).expect("warm-up");
    for beta in [0.0, 1.0, 2.0, 1.5] {
        let mut per_iter = [0.0f64; 2];
        for seed in 0..3 {
            let init = init_factors(1000, 800, 20, seed).expect("init");
            for (slot, algorithm) in [Algorithm::Bmm, Algorithm::Jmm].into_iter().enumerate() {
                let config = fixed_budget(beta, 20, algorithm, 50);
                let r = fit_from(&data, &config, init.clone()).expect("fit");
                per_iter[slot] += r.seconds / r.iterations as f64 / 3.0;
            }
        }
        let [bmm, jmm] = per_iter;
        let accel = 100.0 * (bmm - jmm) / bmm;
        if beta == 1.5 {
            lines.push(format!(
                "beta=1.5 (not asserted): bmm {:.2} ms, jmm {:.2} ms, {accel:+.1}%",
                bmm * 1e3,
                jmm * 1e3
            ));
        } else {
            ok &= jmm < bmm;
            lines.push(format!("beta={beta}: bmm {:.2} ms, jmm {:.2} ms, {accel:+.1}%", bmm * 1e3, jmm * 1e3));
        }
    }
    outcome(ok, lines.join("; "))
}

fn sub_iteration_insensitivity() -> Outcome {
    let (data, _) = low_rank_data(SyntheticSpec { rows: 200, cols: 150, rank: 10, noise: 0.1 }, DATA_SEED);
    let budget = 300;
    let run = |l: usize| {
        let mut config = fixed_budget(1.0, 10, Algorithm::Jmm, budget).with_sub_iters(l);
        config.seed = 1;
        fit(&data, &config).expect("fit").final_objective
    };
    let (one, ten) = (run(1), run(10));
    let gap = (one - ten).abs() / one.min(ten);
    outcome(
        gap <= 1e-3,
        format!("{budget} outer iterations: L=1 {one:.6e}, L=10 {ten:.6e}, relative gap {gap:.2e} (bound 1e-3)"),
    )
}

fn main() {
    let mut all_ok = true;
    let mut report = |id: usize, name: &str, run: &dyn Fn() -> Outcome| {
        let start = Instant::now();
        let o = run();
        all_ok &= o.passed;
        let status = if o.passed { "PASS" } else { "FAIL" };
        println!("[{status}] criterion {id:>2} {name} ({:.1}s): {}", start.elapsed().as_secs_f64(), o.summary);
    };
    report(1, "descent", &descent);
    report(2, "majorization tightness", &tightness);
    report(3, "fast-path equivalence", &fast_path);
    report(4, "W-update coincidence", &w_coincidence);
    report(5, "gradient cancellation", &gradient_cancellation);
    let start = Instant::now();
    let runs = converged_runs();
    println!("         (criteria 6-7 share 30 converged fits, {:.1}s)", start.elapsed().as_secs_f64());
    report(6, "KKT convergence", &|| kkt_convergence(&runs));
    report(7, "solution agreement", &|| agreement(&runs));
    report(8, "cost model", &cost_model);
    report(9, "directional speed", &directional_speed);
    report(10, "sub-iteration insensitivity", &sub_iteration_insensitivity);
    if !all_ok {
        eprintln!("acceptance: at least one criterion failed");
        std::process::exit(1);
    }
}
