//! One function per subcommand. Each writes its files through [`Outputs`],
//! prints a short summary on stdout and reports its verdict.

use anyhow::{bail, Result};
use kbbm_core::martingale::{checkpoint_grid, limit_estimate, martingale_value_at, start_value};
use kbbm_core::rng::{replicate_seed, StreamKey};
use kbbm_core::sim::{Sequential, Simulation};
use kbbm_core::special::{expected_count, killed_transition_prob};
use kbbm_core::spine::{bessel3_sample_check, spine_endpoint, McEstimate, SpineEndpoint};
use kbbm_core::stats::MeanAccumulator;
use kbbm_core::validation::{self, collect_report, expectation_level_check, kesten_rate_check, PathwiseOptions};
use kbbm_core::{Error, SimConfig};
use rayon::ThreadPool;
use serde::Serialize;

use crate::config::Settings;
use crate::output::{Outputs, PositionRow, SeriesRow};
use crate::parallel::{map_indexed, ChunkedRunner};

/// What a command reports back to the dispatcher.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Outcome {
    pub verdict: Option<bool>,
    /// A population cap stopped part of the work; outputs are incomplete.
    pub partial: bool,
}

/// Spine replicates per accumulation block; fixed so sums do not depend on threads.
const SPINE_BLOCK: usize = 4096;
const Z_LIMIT: f64 = 4.0;

fn sim_config(s: &Settings, schedule: Vec<f64>) -> Result<SimConfig> {
    let mut c = SimConfig::new(s.theta()?, s.beta()?, s.law()?, s.x()?, schedule, s.seed()?);
    c.max_population = s.max_population()?;
    c.validate()?;
    Ok(c)
}

#[derive(Serialize)]
struct SummaryRow {
    time: f64,
    population: usize,
    count_in_interval: usize,
    total_ever_branched: u64,
    absorbed_count: u64,
}

pub fn simulate(s: &Settings, out: &mut Outputs, pool: &ThreadPool) -> Result<Outcome> {
    let config = sim_config(s, s.t_grid()?)?;
    let interval = s.interval()?;
    let runner = ChunkedRunner {
        chunk_size: s.chunk_size()?,
    };
    let result = pool.install(|| Simulation::new(config)?.run(&runner));
    let (snapshots, partial) = match result {
        Ok(v) => (v, false),
        Err(Error::PopulationCapExceeded { partial, time, cap }) => {
            eprintln!("population cap {cap} exceeded before t = {time}; writing completed snapshots");
            (partial, true)
        }
        Err(e) => return Err(e.into()),
    };
    out.csv(
        "positions.csv",
        snapshots.iter().flat_map(|snap| {
            snap.positions.iter().enumerate().map(|(i, x)| PositionRow {
                time: snap.time,
                particle_index: i,
                position: *x,
            })
        }),
    )?;
    let summary: Vec<SummaryRow> = snapshots
        .iter()
        .map(|snap| SummaryRow {
            time: snap.time,
            population: snap.population(),
            count_in_interval: snap.count_in(&interval),
            total_ever_branched: snap.total_ever_branched,
            absorbed_count: snap.absorbed_count,
        })
        .collect();
    println!("{:>10} {:>12} {:>12}", "time", "population", "in interval");
    for r in &summary {
        println!("{:>10} {:>12} {:>12}", r.time, r.population, r.count_in_interval);
    }
    out.csv("summary.csv", summary)?;
    Ok(Outcome { verdict: None, partial })
}

pub fn closed_form(s: &Settings, out: &mut Outputs) -> Result<Outcome> {
    #[derive(Serialize)]
    struct ClosedForm {
        x: f64,
        t: f64,
        theta: f64,
        beta: f64,
        mu: f64,
        interval: (f64, f64),
        killed_transition_prob: f64,
        expected_count: f64,
    }
    let params = s.params()?;
    let interval = s.interval()?;
    let (x, t) = (s.x()?, s.t()?);
    let p = killed_transition_prob(x, t, params.theta, &interval)?;
    let e = expected_count(x, t, &params, &interval)?;
    println!("{p:.10}");
    eprintln!("expected count {e:.10}");
    out.json(
        "closed_form.json",
        &ClosedForm {
            x,
            t,
            theta: params.theta,
            beta: params.beta,
            mu: params.mu,
            interval: (interval.lower(), interval.upper()),
            killed_transition_prob: p,
            expected_count: e,
        },
    )?;
    Ok(Outcome::default())
}

#[derive(Serialize)]
struct ConservationRow {
    k: usize,
    t: f64,
    mean: f64,
    std_error: f64,
    start_value: f64,
    z: f64,
}

#[derive(Serialize)]
struct LimitRow {
    replicate: usize,
    k: usize,
    limit_estimate: f64,
    dispersion: f64,
}

pub fn check_martingale(s: &Settings, out: &mut Outputs, pool: &ThreadPool) -> Result<Outcome> {
    let base = sim_config(s, Vec::new())?;
    let params = base.params();
    let k_max = s.k_max()?;
    let grid = checkpoint_grid(s.kappa()?, s.horizon()?, s.max_checkpoints()?)?;
    let tail_fraction = s.tail_fraction()?;
    let replicates = s.replicates()?;
    if replicates < 2 {
        bail!(Error::TooFewReplicates(replicates));
    }

    // values[k][checkpoint] for one replicate, or None on cap exceedance
    let runs: Vec<Result<Option<Vec<Vec<f64>>>>> = map_indexed(pool, replicates, |i| {
        let config = SimConfig {
            schedule: grid.clone(),
            seed: replicate_seed(base.seed, i as u64),
            ..base.clone()
        };
        let mut sim = Simulation::new(config)?;
        let mut values = vec![Vec::with_capacity(grid.len()); k_max + 1];
        for &t in &grid {
            let Ok(snap) = sim.advance_to(t, &Sequential) else {
                return Ok(None);
            };
            for (k, v) in values.iter_mut().enumerate() {
                v.push(martingale_value_at(&snap.positions, t, k, &params)?);
            }
        }
        Ok(Some(values))
    });
    let mut complete = Vec::with_capacity(replicates);
    for r in runs {
        if let Some(v) = r? {
            complete.push(v);
        }
    }
    let failed = replicates - complete.len();
    if complete.len() < 2 {
        bail!(Error::TooFewReplicates(complete.len()));
    }

    let mut series = Vec::new();
    let mut conservation = Vec::new();
    let mut limits = Vec::new();
    let mut verdict = true;
    let x = s.x()?;
    for k in 0..=k_max {
        let target = start_value(x, k, params.theta);
        for (j, &t) in grid.iter().enumerate() {
            let acc: MeanAccumulator = complete.iter().map(|v| v[k][j]).collect();
            series.push(SeriesRow {
                k,
                theta: params.theta,
                r_n: t,
                value: acc.mean(),
            });
            let z = (acc.mean() - target) / acc.std_error();
            conservation.push(ConservationRow {
                k,
                t,
                mean: acc.mean(),
                std_error: acc.std_error(),
                start_value: target,
                z,
            });
            if j + 1 == grid.len() {
                println!("k={k}  M at t={t:.4}: {:.6} +- {:.6}  start {target:.6}  z={z:.2}", acc.mean(), acc.std_error());
                verdict &= z.abs() <= Z_LIMIT;
            }
        }
        for (i, v) in complete.iter().enumerate() {
            if let Ok(l) = limit_estimate(&v[k], tail_fraction) {
                limits.push(LimitRow {
                    replicate: i,
                    k,
                    limit_estimate: l.value,
                    dispersion: l.dispersion,
                });
            }
        }
    }
    out.csv("series.csv", series)?;
    out.csv("conservation.csv", conservation)?;
    out.csv("limits.csv", limits)?;
    if failed > 0 {
        eprintln!("{failed} replicate(s) exceeded the population cap");
    }
    Ok(Outcome {
        verdict: Some(verdict),
        partial: failed > 0,
    })
}

fn print_report(report: &validation::ExpansionReport) {
    println!("{:>10} {:>14} {:>14} {:>14} {:>14}", "t", "observed", "predicted", "residual", "residual*t^m");
    for r in &report.rows {
        println!(
            "{:>10.4} {:>14.6e} {:>14.6e} {:>14.6e} {:>14.6e}",
            r.t, r.observed, r.predicted, r.residual, r.residual_scaled
        );
    }
    if let Some(p) = &report.pathwise {
        println!(
            "survival {:.3} ({}/{}), median observed/predicted {:.4} +- {:.4}",
            p.survival_fraction, p.survivors, p.replicates, p.median_ratio, p.ratio_std_error
        );
    }
    println!("verdict: {}", if report.verdict { "pass" } else { "fail" });
}

pub fn validate_expansion(s: &Settings, out: &mut Outputs, pool: &ThreadPool) -> Result<Outcome> {
    let interval = s.interval()?;
    let m = s.m()?;
    let regime = s.regime()?;
    let (report, partial) = match s.mode()?.as_str() {
        "expectation" => {
            let r = expectation_level_check(m, &s.params()?, s.x()?, &interval, &s.t_grid()?, regime)?;
            (r, false)
        }
        "pathwise" => {
            let base = sim_config(s, Vec::new())?;
            regime.ensure_matches(base.theta, &interval)?;
            let opts = PathwiseOptions {
                m,
                kappa: s.kappa()?,
                horizon: s.horizon()?,
                replicates: s.replicates()?,
                tail_fraction: s.tail_fraction()?,
                max_checkpoints: s.max_checkpoints()?,
                tolerance_multiple: s.tolerance_multiple()?,
            };
            opts.validate()?;
            let results = map_indexed(pool, opts.replicates, |i| {
                validation::pathwise_replicate(&base, &interval, &opts, i, &Sequential)
            });
            let outcomes: Vec<_> = results.iter().filter_map(|r| r.as_ref().ok()).cloned().collect();
            #[derive(Serialize)]
            struct ReplicateRow {
                replicate: usize,
                seed: u64,
                survived: bool,
                observed_last: f64,
                predicted_last: f64,
                limit_0: f64,
            }
            out.csv(
                "replicates.csv",
                outcomes.iter().map(|o| ReplicateRow {
                    replicate: o.index,
                    seed: o.seed,
                    survived: o.survived,
                    observed_last: *o.observed.last().unwrap_or(&0.0),
                    predicted_last: *o.predicted.last().unwrap_or(&0.0),
                    limit_0: o.limits[0],
                }),
            )?;
            match collect_report(results, &interval, &base, &opts) {
                Ok(r) => (r, false),
                Err(Error::PartialReport { failed, report }) => {
                    eprintln!("{failed} replicate(s) exceeded the population cap");
                    (*report, true)
                }
                Err(e) => return Err(e.into()),
            }
        }
        other => bail!("unknown mode `{other}` (expected `expectation` or `pathwise`)"),
    };
    print_report(&report);
    out.csv("report.csv", &report.rows)?;
    out.json("report.json", &report)?;
    Ok(Outcome {
        verdict: Some(report.verdict),
        partial,
    })
}

pub fn kesten_rate(s: &Settings, out: &mut Outputs) -> Result<Outcome> {
    let table = kesten_rate_check(&s.params()?, s.x()?, &s.interval()?, &s.t_grid()?)?;
    println!("{:>10} {:>18} {:>14}", "t", "compensated log", "difference");
    for r in &table.rows {
        let d = r.difference.map(|d| format!("{d:.3e}")).unwrap_or_default();
        println!("{:>10} {:>18.10} {:>14}", r.t, r.compensated_log, d);
    }
    println!("fitted constant {:.8} (exponent {})", table.fitted_constant, table.exponent);
    out.csv("kesten.csv", &table.rows)?;
    out.json("kesten.json", &table)?;
    Ok(Outcome {
        verdict: Some(table.differences_shrinking),
        partial: false,
    })
}

type Functional = Box<dyn Fn(SpineEndpoint) -> f64 + Sync>;

/// Spine functional selected by name, with its exact mean when known.
fn spine_functional(name: &str, s: &Settings) -> Result<(Functional, f64)> {
    let params = s.params()?;
    let (x, t) = (s.x()?, s.t()?);
    let interval = s.interval()?;
    let theta = params.theta;
    Ok(match name {
        "count" => (
            Box::new(move |e| f64::from(u8::from(e.survived && interval.contains(e.position)))),
            expected_count(x, t, &params, &interval)?,
        ),
        "mass" => (
            Box::new(move |e| if e.survived { e.position * (theta * e.position).exp() } else { 0.0 }),
            (params.killed_growth() * t).exp() * x * (theta * x).exp(),
        ),
        "one" => (Box::new(|_| 1.0), (params.branching_growth() * t).exp()),
        other => bail!("unknown functional `{other}` (expected count, mass, one or bessel3)"),
    })
}

pub fn spine_estimate(s: &Settings, out: &mut Outputs, pool: &ThreadPool) -> Result<Outcome> {
    let name = s.functional()?;
    let (x, t, seed) = (s.x()?, s.t()?, s.seed()?);
    let replicates = s.replicates()?;
    let params = s.params()?;
    if name == "bessel3" {
        let g = bessel3_sample_check(x, t, params.theta, replicates as u64, seed)?;
        println!(
            "weighted KS {:.5} vs threshold {:.5} (effective size {:.0}): {}",
            g.statistic,
            g.threshold,
            g.effective_size,
            if g.passed { "pass" } else { "fail" }
        );
        out.json("bessel3.json", &g)?;
        return Ok(Outcome {
            verdict: Some(g.passed),
            partial: false,
        });
    }
    if replicates < 2 {
        bail!(Error::TooFewReplicates(replicates));
    }
    let (f, exact) = spine_functional(&name, s)?;
    let key = StreamKey::from_seed(seed);
    let scale = (params.branching_growth() * t).exp();
    let blocks = replicates.div_ceil(SPINE_BLOCK);
    let parts = map_indexed(pool, blocks, |b| {
        let lo = b * SPINE_BLOCK;
        let hi = (lo + SPINE_BLOCK).min(replicates);
        (lo..hi)
            .map(|i| scale * f(spine_endpoint(&key, i as u64, x, t, params.theta)))
            .collect::<MeanAccumulator>()
    });
    let mut acc = MeanAccumulator::default();
    for p in &parts {
        acc.merge(p);
    }
    let est = McEstimate::from_accumulator(&acc);
    let z = if est.std_error > 0.0 {
        (est.estimate - exact) / est.std_error
    } else if est.estimate == exact {
        0.0
    } else {
        f64::INFINITY
    };
    #[derive(Serialize)]
    struct SpineReport {
        functional: String,
        estimate: McEstimate,
        exact: f64,
        z: f64,
    }
    println!("{name}: {:.8} +- {:.8} (exact {exact:.8}, z = {z:.2})", est.estimate, est.std_error);
    out.json(
        "spine.json",
        &SpineReport {
            functional: name,
            estimate: est,
            exact,
            z,
        },
    )?;
    Ok(Outcome {
        verdict: Some(z.abs() <= Z_LIMIT),
        partial: false,
    })
}
