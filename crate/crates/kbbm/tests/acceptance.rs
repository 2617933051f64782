//! Acceptance suite. One test per criterion; each prints a single
//! `PASS`/`FAIL` line (straight to stderr so it shows even when the harness
//! captures output) and then asserts.

use std::io::Write;
use std::process::Command;
use std::time::{Duration, Instant};

use kbbm::parallel::{map_indexed, pool};
use kbbm_core::martingale::{martingale_value, start_value};
use kbbm_core::quad::{integrate_to_infinity, QuadOptions};
use kbbm_core::series::{cdf_shift_expansion, cdf_shift_target, ExpansionOrder, Regime, WindowKind};
use kbbm_core::sim::{simulate, Sequential};
use kbbm_core::special::{bessel3_density, expected_count, gauss_cdf, killed_transition_prob, sqrt_2_over_pi};
use kbbm_core::spine::{bessel3_sample_check, many_to_one_estimate, SpineEndpoint};
use kbbm_core::stats::MeanAccumulator;
use kbbm_core::validation::{
    collect_report, expectation_level_check, kesten_rate_check, pathwise_replicate, PathwiseOptions,
};
use kbbm_core::{DriftParams, Interval, OffspringLaw, SimConfig};

fn verdict(id: u32, name: &str, pass: bool, detail: &str) {
    let tag = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(std::io::stderr(), "[{tag}] criterion {id:>2} {name}: {detail}");
    assert!(pass, "criterion {id} ({name}) failed: {detail}");
}

fn sci(values: &[f64]) -> String {
    let parts: Vec<String> = values.iter().map(|v| format!("{v:.3e}")).collect();
    format!("[{}]", parts.join(", "))
}

fn within(elapsed: Duration, limit_secs: u64) -> bool {
    elapsed <= Duration::from_secs(limit_secs)
}

/// 2 Phi(1) - 1 (mpmath, 30 digits: 0.682689492137085897170465091264).
const REFLECTION_1_1: f64 = 0.682_689_492_137_085_9;

#[test]
fn criterion_01_closed_form_oracle() {
    let start = Instant::now();
    let half = Interval::positive_half_line();
    let p = killed_transition_prob(1.0, 1.0, 0.0, &half).unwrap();
    let exact_err = (p - REFLECTION_1_1).abs();
    let also = (2.0 * gauss_cdf(1.0) - 1.0 - REFLECTION_1_1).abs();

    let workers = pool(0).unwrap();
    let n = 100_000;
    let hits = map_indexed(&workers, n, |i| {
        let c = SimConfig::new(0.0, 1.0, OffspringLaw::degenerate(1), 1.0, vec![1.0], i as u64);
        simulate(c).unwrap()[0].count_in(&half) as f64
    });
    let acc: MeanAccumulator = hits.into_iter().collect();
    let z = (acc.mean() - p) / acc.std_error();
    let elapsed = start.elapsed();
    let pass = exact_err <= 1e-10 && also <= 1e-15 && z.abs() <= 4.0 && within(elapsed, 10);
    verdict(
        1,
        "closed-form oracle",
        pass,
        &format!(
            "P = {p:.12} (|err| {exact_err:.1e}); MC {:.5} +- {:.5} at 1e5 paths, z = {z:.2}; {:.2?}",
            acc.mean(),
            acc.std_error(),
            elapsed
        ),
    );
}

#[test]
fn criterion_02_many_to_one() {
    let start = Instant::now();
    let half = Interval::positive_half_line();
    let workers = pool(0).unwrap();
    let direct_reps = 40_000;
    let spine_reps = 400_000;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    let mut seed = 1000u64;
    for &x in &[0.5, 1.0, 2.0] {
        for &t in &[1.0, 2.0] {
            for &theta in &[0.0, 0.5, 1.0] {
                seed += 1;
                let params = DriftParams::standard(theta).unwrap();
                let exact = expected_count(x, t, &params, &half).unwrap();
                let counts = map_indexed(&workers, direct_reps, |i| {
                    let c = SimConfig::new(theta, 1.0, OffspringLaw::binary(), x, vec![t], seed * 1_000_003 + i as u64);
                    simulate(c).unwrap()[0].count_in(&half) as f64
                });
                let direct: MeanAccumulator = counts.into_iter().collect();
                let f = |e: SpineEndpoint| f64::from(u8::from(e.survived && half.contains(e.position)));
                let spine = many_to_one_estimate(f, x, t, &params, spine_reps, seed).unwrap();
                let zs = [
                    (direct.mean() - exact) / direct.std_error(),
                    (spine.estimate - exact) / spine.std_error,
                    (direct.mean() - spine.estimate) / direct.std_error().hypot(spine.std_error),
                ];
                let z = zs.iter().fold(0.0f64, |a, b| a.max(b.abs()));
                worst = worst.max(z);
                if z > 4.0 {
                    failures.push(format!("(x={x}, t={t}, theta={theta}) z={z:.2}"));
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = failures.is_empty() && within(elapsed, 120);
    verdict(
        2,
        "many-to-one",
        pass,
        &format!("18 cases, worst pairwise |z| = {worst:.2} {failures:?}; {elapsed:.2?}"),
    );
}

#[test]
fn criterion_03_martingale_conservation() {
    let workers = pool(0).unwrap();
    let reps = 20_000;
    let times = [1.0, 2.0, 4.0];
    let x = 1.0;
    let mut worst: f64 = 0.0;
    let mut failures = Vec::new();
    for (ti, &theta) in [0.0, 0.5, 1.0].iter().enumerate() {
        let params = DriftParams::standard(theta).unwrap();
        // values[rep][time][k]
        let values = map_indexed(&workers, reps, |i| {
            let c = SimConfig::new(theta, 1.0, OffspringLaw::binary(), x, times.to_vec(), (ti * reps + i) as u64);
            simulate(c)
                .unwrap()
                .iter()
                .map(|s| (0..3).map(|k| martingale_value(s, k, &params).unwrap()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        });
        for (j, t) in times.iter().enumerate() {
            for k in 0..3 {
                let acc: MeanAccumulator = values.iter().map(|v| v[j][k]).collect();
                let z = (acc.mean() - start_value(x, k, theta)) / acc.std_error();
                worst = worst.max(z.abs());
                if z.abs() > 4.0 {
                    failures.push(format!("(k={k}, theta={theta}, t={t}) z={z:.2}"));
                }
            }
        }
    }
    verdict(
        3,
        "martingale conservation",
        failures.is_empty(),
        &format!("27 cases at {reps} replicates, worst |z| = {worst:.2} {failures:?}"),
    );
}

#[test]
fn criterion_04_series_truncation() {
    let mut shift_err: f64 = 0.0;
    for &b in &[-1.2, 0.0, 1.5] {
        for &(x, rho) in &[(-1.0, 0.2), (0.7, 0.35), (2.0, 0.5)] {
            let e = cdf_shift_expansion(b, x, rho, 40).unwrap();
            shift_err = shift_err.max((e - cdf_shift_target(b, x, rho)).abs());
        }
    }
    let ns = [16u64, 81, 256, 625];
    let mut decreasing = true;
    let mut detail = format!("shift max err {shift_err:.1e}");
    for kind in [WindowKind::Cdf, WindowKind::Pdf] {
        let order = ExpansionOrder::new(kind, 1, 4.0, 0.5).unwrap();
        let errs: Vec<f64> = ns.iter().map(|n| order.scaled_sup_error(*n, 481, 121).unwrap()).collect();
        decreasing &= errs.windows(2).all(|w| w[1] < w[0]);
        detail.push_str(&format!("; {kind:?} J={} scaled sup errors {errs:.4?}", order.truncation));
    }
    verdict(4, "series truncation", shift_err <= 1e-10 && decreasing, &detail);
}

#[test]
fn criterion_05_bessel3() {
    let opts = QuadOptions {
        rel_tol: 1e-12,
        ..QuadOptions::default()
    };
    let mut worst: f64 = 0.0;
    for &t in &[0.5f64, 1.0, 4.0] {
        for &x in &[0.5, 1.0, 2.0] {
            let mass = integrate_to_infinity(|y| bessel3_density(t, x, y).unwrap(), 0.0, t.sqrt(), &opts)
                .unwrap()
                .value;
            worst = worst.max((mass - 1.0).abs());
        }
    }
    let fit = bessel3_sample_check(1.0, 1.0, 0.0, 100_000, 77).unwrap();
    let drifted = bessel3_sample_check(1.0, 1.0, 0.5, 100_000, 78).unwrap();
    let pass = worst <= 1e-6 && fit.passed && drifted.passed;
    verdict(
        5,
        "Bessel-3 density",
        pass,
        &format!(
            "max |mass - 1| = {worst:.1e}; KS {:.4} <= {:.4} (theta 0), {:.4} <= {:.4} (theta 0.5)",
            fit.statistic, fit.threshold, drifted.statistic, drifted.threshold
        ),
    );
}

#[test]
fn criterion_06_kesten_rate() {
    let grid = [10.0, 20.0, 40.0, 80.0];
    let half = Interval::positive_half_line();
    let x = 1.0;
    let drifted = kesten_rate_check(&DriftParams::standard(1.0).unwrap(), x, &half, &grid).unwrap();
    let driftless = kesten_rate_check(&DriftParams::standard(0.0).unwrap(), x, &half, &grid).unwrap();
    let theta: f64 = 1.0;
    let target = sqrt_2_over_pi() * x * (theta * x).exp() / (theta * theta);
    let rel = (drifted.fitted_constant - target).abs() / target;
    let pass = drifted.differences_shrinking && driftless.differences_shrinking && rel <= 0.01;
    let diffs = |t: &kbbm_core::validation::KestenTable| t.rows.iter().filter_map(|r| r.difference).collect::<Vec<_>>();
    verdict(
        6,
        "Kesten rate",
        pass,
        &format!(
            "differences theta=1 {}, theta=0 {}; fitted C {:.5} vs {target:.5} ({:.2}%)",
            sci(&diffs(&drifted)),
            sci(&diffs(&driftless)),
            drifted.fitted_constant,
            100.0 * rel
        ),
    );
}

fn residual_decay(params: &DriftParams, interval: &Interval, orders: &[usize], regime: Regime) -> (bool, Vec<Vec<f64>>) {
    let grid = [10.0, 20.0, 40.0];
    let mut ok = true;
    let mut scaled = Vec::new();
    for &m in orders {
        let r = expectation_level_check(m, params, 1.0, interval, &grid, regime).unwrap();
        let s: Vec<f64> = r.rows.iter().map(|row| row.residual_scaled.abs()).collect();
        ok &= s.windows(2).all(|w| w[1] < w[0]);
        scaled.push(s);
    }
    (ok, scaled)
}

#[test]
fn criterion_07_expansion_drifted() {
    let start = Instant::now();
    let a = Interval::above(1.0).unwrap();
    let (decay, scaled) = residual_decay(&DriftParams::standard(1.0).unwrap(), &a, &[0, 1, 2], Regime::Drifted);
    let r0 = scaled[0][2];
    let r2 = scaled[2][2] / 40.0f64.powi(2);
    let elapsed = start.elapsed();
    let pass = decay && r2 * 10.0 <= r0 && within(elapsed, 60);
    verdict(
        7,
        "expansion, theta > 0",
        pass,
        &format!(
            "|residual| t^m for m=0,1,2: {}; m=2 residual {r2:.2e} vs m=0 {r0:.2e}; {elapsed:.2?}",
            scaled.iter().map(|s| sci(s)).collect::<Vec<_>>().join(" ")
        ),
    );
}

#[test]
fn criterion_08_expansion_driftless_unbounded() {
    let a = Interval::above(1.0).unwrap();
    let (decay, scaled) = residual_decay(&DriftParams::standard(0.0).unwrap(), &a, &[0, 1], Regime::DriftlessUnbounded);
    verdict(
        8,
        "expansion, theta = 0, unbounded",
        decay,
        &format!(
            "|residual| t^m for m=0,1: {}",
            scaled.iter().map(|s| sci(s)).collect::<Vec<_>>().join(" ")
        ),
    );
}

#[test]
fn criterion_09_pathwise() {
    let start = Instant::now();
    let mut base = SimConfig::new(1.0, 1.0, OffspringLaw::binary(), 1.0, Vec::new(), 2024);
    base.max_population = 10_000_000;
    let interval = Interval::positive_half_line();
    let opts = PathwiseOptions {
        m: 0,
        horizon: 18.0,
        replicates: 1000,
        ..PathwiseOptions::default()
    };
    let workers = pool(0).unwrap();
    let results = map_indexed(&workers, opts.replicates, |i| {
        pathwise_replicate(&base, &interval, &opts, i, &Sequential)
    });
    let report = collect_report(results, &interval, &base, &opts).unwrap();
    let summary = report.pathwise.clone().unwrap();
    let elapsed = start.elapsed();
    let ratio = summary.median_ratio;
    let pass = (0.85..=1.15).contains(&ratio) && within(elapsed, 1800);
    verdict(
        9,
        "pathwise sanity",
        pass,
        &format!(
            "median observed/predicted {ratio:.3} +- {:.3} (IQR {:.3}..{:.3}) over {} survivors; survival fraction {:.3}; {elapsed:.2?}",
            summary.ratio_std_error,
            summary.ratio_quartiles.0,
            summary.ratio_quartiles.1,
            summary.survivors,
            summary.survival_fraction
        ),
    );
}

fn run_cli(args: &[&str], dir: &std::path::Path) -> i32 {
    Command::new(env!("CARGO_BIN_EXE_kbbm"))
        .args(args)
        .arg("--output-dir")
        .arg(dir)
        .output()
        .expect("kbbm binary runs")
        .status
        .code()
        .unwrap_or(-1)
}

#[test]
fn criterion_10_determinism() {
    let root = tempfile::tempdir().unwrap();
    let sim = [
        "simulate", "--seed", "42", "--theta", "0.2", "--x", "1.5", "--t-grid", "1,3,6,8", "--chunk-size", "64",
    ];
    let path = |name: &str| root.path().join(name);
    let read = |dir: &str, file: &str| std::fs::read(path(dir).join(file)).unwrap();

    let mut codes = Vec::new();
    codes.push(run_cli(&[&sim[..], &["--threads", "1"]].concat(), &path("a")));
    codes.push(run_cli(&[&sim[..], &["--threads", "1"]].concat(), &path("b")));
    codes.push(run_cli(&[&sim[..], &["--threads", "8"]].concat(), &path("c")));
    let same_seed = read("a", "positions.csv") == read("b", "positions.csv");
    let threads = read("a", "positions.csv") == read("c", "positions.csv") && read("a", "summary.csv") == read("c", "summary.csv");
    let rows = read("a", "positions.csv").iter().filter(|b| **b == b'\n').count();

    let pw = [
        "validate-expansion", "--mode", "pathwise", "--theta", "1", "--horizon", "6", "--replicates", "64", "--seed", "5",
    ];
    codes.push(run_cli(&[&pw[..], &["--threads", "1"]].concat(), &path("p1")));
    codes.push(run_cli(&[&pw[..], &["--threads", "8"]].concat(), &path("p8")));
    let pathwise = read("p1", "report.csv") == read("p8", "report.csv") && read("p1", "replicates.csv") == read("p8", "replicates.csv");

    let sp = ["spine-estimate", "--theta", "0.5", "--t", "2", "--replicates", "50000", "--seed", "9"];
    codes.push(run_cli(&[&sp[..], &["--threads", "1"]].concat(), &path("s1")));
    codes.push(run_cli(&[&sp[..], &["--threads", "8"]].concat(), &path("s8")));
    let spine = read("s1", "spine.json") == read("s8", "spine.json");

    let exits_ok = codes.iter().all(|c| *c == 0 || *c == 2);
    let pass = same_seed && threads && pathwise && spine && exits_ok && rows > 1000;
    verdict(
        10,
        "determinism",
        pass,
        &format!(
            "same seed {same_seed}, threads 1 vs 8: positions {threads}, pathwise {pathwise}, spine {spine}; {rows} position rows; exit codes {codes:?}"
        ),
    );
}
