//! Acceptance suite. Prints one `PASS`/`FAIL` line per criterion and exits
//! non-zero if any criterion fails.

use std::fs;
use std::process::ExitCode;
use std::time::Instant;

use hhlo::harness::report::write_batch;
use hhlo::harness::{
    run_batch, run_batch_with_threads, BatchReport, ExperimentConfig, MechanismSpec, SigmaSchedule, TauSpec,
};
use hhlo::operators::improvement_probability_ratio;
use hhlo::theory::{expected_opt_runtime, region_runtime};
use hhlo::Portfolio;
use num_rational::Ratio;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Outcome {
    Outcome { pass, detail }
}

fn binomial(n: u128, k: u128) -> u128 {
    if k > n {
        return 0;
    }
    (0..k.min(n - k)).fold(1, |acc, j| acc * (n - j) / (j + 1))
}

fn improvement_probability_exact() -> Outcome {
    let start = Instant::now();
    let mut mismatches = 0;
    let mut checked = 0;
    for n in 1..=30usize {
        for m in 1..=6.min(n) {
            for i in 0..n {
                let want = Ratio::new(
                    binomial((n - i - 1) as u128, (m - 1) as u128),
                    binomial(n as u128, m as u128),
                );
                checked += 1;
                if improvement_probability_ratio(m, i, n).ok().flatten() != Some(want) {
                    mismatches += 1;
                }
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        mismatches == 0 && secs < 1.0,
        format!("{checked} cases, {mismatches} mismatches, {secs:.3}s"),
    )
}

fn best_possible_constants() -> Outcome {
    let start = Instant::now();
    let n = 1_000_000usize;
    let mut worst = 0f64;
    let mut parts = Vec::new();
    for (k, reference) in [(1, 0.5), (2, 0.4233), (3, 0.405), (5, 0.394)] {
        let got = expected_opt_runtime(n, k).unwrap() / (n as f64 * n as f64);
        worst = worst.max((got - reference).abs());
        parts.push(format!("k={k}: {got:.5}"));
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(
        worst <= 1e-3 && secs < 5.0,
        format!("{}, max deviation {worst:.2e}, {secs:.2}s", parts.join(" ")),
    )
}

fn worked_region() -> Outcome {
    let n = 1_000_000usize;
    let levels = (n - 2).div_ceil(3)..(n - 1) / 2;
    let n2 = (n * n) as f64;
    let cases = [
        (vec![2], 0.07192),
        (vec![1], 0.08333),
        (vec![3], 0.08333),
        (vec![1, 3], 0.07735),
    ];
    let mut pass = true;
    let mut parts = Vec::new();
    for (sizes, want) in cases {
        let got = region_runtime(n, levels.clone(), &Portfolio::new(&sizes).unwrap()).unwrap() / n2;
        pass &= (got - want).abs() < 5e-5;
        parts.push(format!("{sizes:?}: {got:.5}"));
    }
    outcome(pass, parts.join(" "))
}

fn batch(n: usize, k: usize, mechanism: MechanismSpec, trials: usize) -> BatchReport {
    let mut c = ExperimentConfig::new(n, Portfolio::initial_segment(k).unwrap(), mechanism);
    c.trials = trials;
    run_batch(&c).unwrap()
}

fn baselines() -> (Outcome, f64) {
    let rls1 = batch(10_000, 1, MechanismSpec::SimpleRandom, 200).summary;
    let sr = batch(10_000, 2, MechanismSpec::SimpleRandom, 200).summary;
    let ok1 = (rls1.mean_over_n2 - 0.5).abs() <= 0.02 * 0.5 && rls1.reached == 200;
    let ok2 = (sr.mean_over_n2 - 0.549).abs() <= 0.03 * 0.549 && sr.reached == 200;
    let detail = format!(
        "RLS_1 only {:.4} (0.500 +- 2%), simple random {{1,2}} {:.4} (0.549 +- 3%)",
        rls1.mean_over_n2, sr.mean_over_n2
    );
    (outcome(ok1 && ok2, detail), sr.mean_over_n2)
}

fn arg_k2(n: usize, trials: usize, usage: bool) -> BatchReport {
    let mut c = ExperimentConfig::new(
        n,
        Portfolio::initial_segment(2).unwrap(),
        MechanismSpec::arg(SigmaSchedule::SqrtNOverLnN),
    );
    c.trials = trials;
    c.usage_trace = usage;
    c.tau_trace = usage;
    run_batch(&c).unwrap()
}

fn arg_trend(simple_random: f64) -> Outcome {
    let small = arg_k2(20_000, 100, false).summary;
    let large = arg_k2(100_000, 100, false).summary;
    let (a, b) = (small.mean_over_n2, large.mean_over_n2);
    let pass = (0.41..=0.47).contains(&a)
        && (0.41..=0.45).contains(&b)
        && a.max(b) < 0.5
        && a.max(b) < simple_random
        && small.reached == 100
        && large.reached == 100;
    outcome(
        pass,
        format!("n=2e4: {a:.4} in [0.41, 0.47], n=1e5: {b:.4} in [0.41, 0.45]"),
    )
}

fn operator_usage(report: &BatchReport) -> Outcome {
    let buckets = report.config.buckets;
    let optimal = |b: usize| usize::from(b * 100 < 50 * buckets);
    let qualifying: Vec<usize> = (0..buckets)
        .filter(|&b| (b + 1) * 100 <= 40 * buckets || b * 100 >= 60 * buckets)
        .collect();
    let (mut hits, mut total) = (0u64, 0u64);
    for t in &report.trials {
        let u = t.usage.as_ref().unwrap();
        for &b in &qualifying {
            hits += u.get(b, optimal(b));
            total += u.bucket_total(b);
        }
    }
    let share = hits as f64 / total as f64;
    let usage = report.summary.usage_pct.as_ref().unwrap();
    let (worst_bucket, worst) = qualifying
        .iter()
        .map(|&b| (b, usage[b][optimal(b)]))
        .min_by(|x, y| x.1.total_cmp(&y.1))
        .unwrap();
    outcome(
        share >= 0.9,
        format!(
            "optimal operator on {:.2}% of iterations in qualifying buckets (lowest single bucket: {worst_bucket} at {worst:.1}%)",
            100.0 * share
        ),
    )
}

fn tau_envelope(report: &BatchReport) -> Outcome {
    let excess = report.summary.tau_excess_fraction.unwrap();
    outcome(
        excess < 0.01,
        format!(
            "tau above tau_max on {:.2}% of iterations (sigma = {:.2})",
            100.0 * excess,
            report.resolved.sigma.unwrap().sigma
        ),
    )
}

fn grg_vs_arg() -> Outcome {
    let arg = batch(100_000, 4, MechanismSpec::arg(SigmaSchedule::CstarLn4N), 50).summary;
    let grg = batch(
        100_000,
        4,
        MechanismSpec::Grg {
            tau: TauSpec::NLnN(0.6),
        },
        50,
    )
    .summary;
    let n2 = 1e10;
    let pooled = (arg.std_error().powi(2) + grg.std_error().powi(2)).sqrt() / n2;
    outcome(
        arg.mean_over_n2 <= grg.mean_over_n2 + pooled,
        format!(
            "ARG {:.4} vs GRG {:.4} (+ pooled SE {pooled:.4})",
            arg.mean_over_n2, grg.mean_over_n2
        ),
    )
}

fn determinism() -> Outcome {
    let mut identical = true;
    let mut files = 0;
    let root = tempfile::tempdir().unwrap();
    let mechanisms = [
        MechanismSpec::arg(SigmaSchedule::SqrtNOverLnN),
        MechanismSpec::Grg {
            tau: TauSpec::NLnN(0.6),
        },
        MechanismSpec::Permutation,
        MechanismSpec::Greedy,
    ];
    for (idx, mechanism) in mechanisms.into_iter().enumerate() {
        let mut c = ExperimentConfig::new(2_000, Portfolio::initial_segment(3).unwrap(), mechanism);
        c.trials = 16;
        c.tau_trace = true;
        c.usage_trace = true;
        let mut outputs = Vec::new();
        for threads in [1, 2, 5] {
            let dir = root.path().join(format!("{idx}-{threads}"));
            let report = run_batch_with_threads(&c, threads).unwrap();
            let paths = write_batch(&dir, &report, mechanism.name(), "acceptance").unwrap();
            let bytes: Vec<Vec<u8>> = paths.iter().map(|p| fs::read(p).unwrap()).collect();
            outputs.push(bytes);
        }
        files += outputs[0].len();
        identical &= outputs.windows(2).all(|w| w[0] == w[1]);
    }
    outcome(identical, format!("{files} files compared across 1, 2 and 5 threads"))
}

fn main() -> ExitCode {
    let mut results: Vec<(&str, Outcome)> = vec![
        (
            "exact oracle equivalence of the improvement probability",
            improvement_probability_exact(),
        ),
        ("best-possible runtime constants", best_possible_constants()),
        ("worked region example", worked_region()),
    ];
    let (base, simple_random) = baselines();
    results.push(("baseline runtimes", base));
    results.push(("ARG optimality trend", arg_trend(simple_random)));
    let traced = arg_k2(100_000, 20, true);
    results.push(("operator usage", operator_usage(&traced)));
    results.push(("tau envelope", tau_envelope(&traced)));
    results.push(("GRG/ARG comparison", grg_vs_arg()));
    results.push(("determinism", determinism()));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += usize::from(!o.pass);
    }
    println!("{} of {} criteria passed", results.len() - failed, results.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
