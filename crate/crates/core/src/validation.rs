//! Checks of the order-`m` expansions: exactly at expectation level, and
//! distributionally over simulated populations.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::positive;
use crate::martingale::{checkpoint_grid, limit_estimate, martingale_value_at, start_value};
use crate::rng::replicate_seed;
use crate::series::{predict_expansion, Regime};
use crate::sim::{SimConfig, Simulation, WindowRunner};
use crate::special::{log_expected_count, DriftParams, Interval};
use crate::stats::{least_squares, median, quantile};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckMode {
    Expectation,
    Pathwise,
}

/// One time point of a report. In pathwise reports every column is the
/// median across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub t: f64,
    pub observed: f64,
    pub predicted: f64,
    pub residual: f64,
    /// `residual * t^m`.
    pub residual_scaled: f64,
}

impl ReportRow {
    fn new(t: f64, observed: f64, predicted: f64, m: usize) -> Self {
        let residual = observed - predicted;
        Self {
            t,
            observed,
            predicted,
            residual,
            residual_scaled: residual * libm::pow(t, m as f64),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionReport {
    pub mode: CheckMode,
    pub regime: Regime,
    pub m: usize,
    pub rows: Vec<ReportRow>,
    pub verdict: bool,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub pathwise: Option<PathwiseSummary>,
}

fn check_grid(t_grid: &[f64]) -> Result<()> {
    let ok = !t_grid.is_empty()
        && t_grid.iter().all(|t| *t > 0.0 && t.is_finite())
        && t_grid.windows(2).all(|w| w[0] < w[1]);
    if ok {
        Ok(())
    } else {
        Err(Error::InvalidGrid)
    }
}

/// `|residual * t^m|` does not increase over the upper half of the rows.
fn nonincreasing_upper_half(rows: &[ReportRow]) -> bool {
    rows[rows.len() / 2..]
        .windows(2)
        .all(|w| libm::fabs(w[1].residual_scaled) <= libm::fabs(w[0].residual_scaled))
}

/// Compares the exact normalized mean count with the expansion evaluated at
/// the mean martingale limits `exp(theta x) x^{2k+1}`.
pub fn expectation_level_check(
    m: usize,
    params: &DriftParams,
    x: f64,
    interval: &Interval,
    t_grid: &[f64],
    regime: Regime,
) -> Result<ExpansionReport> {
    positive("x", x)?;
    check_grid(t_grid)?;
    regime.ensure_matches(params.theta, interval)?;
    let weights: Vec<f64> = (0..=m).map(|k| start_value(x, k, params.theta)).collect();
    let mut rows = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let pred = predict_expansion(m, params, interval, &weights, t, regime)?;
        let log_count = log_expected_count(x, t, params, interval)?;
        let observed =
            libm::exp(log_count + pred.normalization_exponent * libm::log(t) - pred.growth_rate * t);
        rows.push(ReportRow::new(t, observed, pred.total, m));
    }
    let verdict = nonincreasing_upper_half(&rows);
    Ok(ExpansionReport {
        mode: CheckMode::Expectation,
        regime,
        m,
        rows,
        verdict,
        pathwise: None,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KestenRow {
    pub t: f64,
    /// `ln E Z_t - growth * t + b ln t`.
    pub compensated_log: f64,
    /// Change from the previous row.
    pub difference: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KestenTable {
    pub exponent: f64,
    pub growth_rate: f64,
    pub rows: Vec<KestenRow>,
    /// `exp` of the `t -> inf` intercept of a fit of the compensated log in
    /// powers of `1/t` (quadratic with 3 or more points, linear with 2).
    pub fitted_constant: f64,
    pub differences_shrinking: bool,
}

/// Tracks `E_x Z_t(A) t^b exp(-growth t)` along `t_grid`.
pub fn kesten_rate_check(params: &DriftParams, x: f64, interval: &Interval, t_grid: &[f64]) -> Result<KestenTable> {
    positive("x", x)?;
    check_grid(t_grid)?;
    let regime = Regime::classify(params.theta, interval);
    let exponent = regime.normalization_exponent();
    let growth_rate = match regime {
        Regime::Drifted => params.killed_growth(),
        _ => params.branching_growth(),
    };
    let mut rows: Vec<KestenRow> = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        let value = log_expected_count(x, t, params, interval)? - growth_rate * t + exponent * libm::log(t);
        let difference = rows.last().map(|r| value - r.compensated_log);
        rows.push(KestenRow {
            t,
            compensated_log: value,
            difference,
        });
    }
    let diffs: Vec<f64> = rows.iter().filter_map(|r| r.difference).map(libm::fabs).collect();
    let differences_shrinking = diffs.windows(2).all(|w| w[1] < w[0]);

    let degree = (rows.len() - 1).min(2);
    let basis: Vec<Vec<f64>> = rows
        .iter()
        .map(|r| (0..=degree).map(|p| libm::pow(1.0 / r.t, p as f64)).collect())
        .collect();
    let y: Vec<f64> = rows.iter().map(|r| r.compensated_log).collect();
    let coeffs = least_squares(&basis, &y).ok_or(Error::InvalidGrid)?;
    Ok(KestenTable {
        exponent,
        growth_rate,
        rows,
        fitted_constant: libm::exp(coeffs[0]),
        differences_shrinking,
    })
}

/// Settings for [`pathwise_check`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathwiseOptions {
    pub m: usize,
    pub kappa: f64,
    /// Last checkpoint is `floor(horizon^kappa)^{1/kappa}`.
    pub horizon: f64,
    pub replicates: usize,
    pub tail_fraction: f64,
    pub max_checkpoints: usize,
    /// Pass when the median `|residual t^m|` at the last checkpoint is at
    /// most this multiple of its value at the half-grid checkpoint.
    pub tolerance_multiple: f64,
}

impl Default for PathwiseOptions {
    fn default() -> Self {
        Self {
            m: 0,
            kappa: crate::martingale::DEFAULT_KAPPA,
            horizon: 18.0,
            replicates: 200,
            tail_fraction: crate::martingale::DEFAULT_TAIL_FRACTION,
            max_checkpoints: crate::martingale::DEFAULT_MAX_CHECKPOINTS,
            tolerance_multiple: 1.0,
        }
    }
}

impl PathwiseOptions {
    pub fn validate(&self) -> Result<()> {
        if !(self.kappa > 2.0 * self.m as f64 + 2.0) {
            return Err(Error::InvalidOrder("pathwise checks need kappa > 2m + 2"));
        }
        if !(self.tolerance_multiple > 0.0) {
            return Err(Error::InvalidParams("tolerance multiple must be positive"));
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<Vec<f64>> {
        checkpoint_grid(self.kappa, self.horizon, self.max_checkpoints)
    }
}

/// Per-checkpoint results of one simulated population.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateOutcome {
    pub index: usize,
    pub seed: u64,
    pub times: Vec<f64>,
    /// Normalized counts `Z_t(A) t^b exp(-growth t)`.
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    /// Estimated `M_inf^{(2k+1)}` for `k = 0..=m`.
    pub limits: Vec<f64>,
    pub survived: bool,
}

/// Simulates replicate `index` of `base` along the options' checkpoint grid.
pub fn pathwise_replicate<R: WindowRunner + ?Sized>(
    base: &SimConfig,
    interval: &Interval,
    opts: &PathwiseOptions,
    index: usize,
    runner: &R,
) -> Result<ReplicateOutcome> {
    let params = base.params();
    let regime = Regime::classify(params.theta, interval);
    let times = opts.grid()?;
    let seed = replicate_seed(base.seed, index as u64);
    let config = SimConfig {
        schedule: times.clone(),
        seed,
        ..base.clone()
    };
    let mut sim = Simulation::new(config)?;
    let b = regime.normalization_exponent();
    let growth = match regime {
        Regime::Drifted => params.killed_growth(),
        _ => params.branching_growth(),
    };
    let mut observed = Vec::with_capacity(times.len());
    let mut series: Vec<Vec<f64>> = alloc::vec![Vec::with_capacity(times.len()); opts.m + 1];
    for &t in &times {
        let snap = sim.advance_to(t, runner).map_err(|_| Error::PopulationCapExceeded {
            cap: base.max_population,
            time: t,
            partial: Vec::new(),
        })?;
        let count = snap.count_in(interval) as f64;
        observed.push(count * libm::exp(b * libm::log(t) - growth * t));
        for (k, s) in series.iter_mut().enumerate() {
            s.push(martingale_value_at(&snap.positions, t, k, &params)?);
        }
    }
    let limits = series
        .iter()
        .map(|s| Ok(limit_estimate(s, opts.tail_fraction)?.value))
        .collect::<Result<Vec<_>>>()?;
    let predicted = times
        .iter()
        .map(|t| Ok(predict_expansion(opts.m, &params, interval, &limits, *t, regime)?.total))
        .collect::<Result<Vec<_>>>()?;
    Ok(ReplicateOutcome {
        index,
        seed,
        survived: sim.population() > 0,
        times,
        observed,
        predicted,
        limits,
    })
}

/// Distributional summary of a pathwise run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathwiseSummary {
    pub replicates: usize,
    pub survivors: usize,
    pub survival_fraction: f64,
    /// Median of observed/predicted at the last checkpoint over survivors.
    pub median_ratio: f64,
    /// Normal-theory standard error of that median.
    pub ratio_std_error: f64,
    pub ratio_quartiles: (f64, f64),
    /// Median `|residual t^m|` at the half-grid and last checkpoints.
    pub median_scaled_half: f64,
    pub median_scaled_last: f64,
    pub tolerance_multiple: f64,
    pub failed_replicates: usize,
}

/// Reduces replicate outcomes (all sharing one grid) to a report over the
/// upper half of the grid. Medians are taken over survivors, since extinct
/// paths contribute an exact zero residual; with no survivors, over all.
pub fn summarize(outcomes: &[ReplicateOutcome], opts: &PathwiseOptions, regime: Regime, failed: usize) -> Result<ExpansionReport> {
    let first = outcomes.first().ok_or(Error::TooFewReplicates(0))?;
    let alive: Vec<&ReplicateOutcome> = outcomes.iter().filter(|o| o.survived).collect();
    let pool: Vec<&ReplicateOutcome> = if alive.is_empty() { outcomes.iter().collect() } else { alive };
    let n_times = first.times.len();
    let half = n_times / 2;
    let scaled = |o: &ReplicateOutcome, i: usize| {
        libm::fabs((o.observed[i] - o.predicted[i]) * libm::pow(o.times[i], opts.m as f64))
    };
    let column = |f: &dyn Fn(&ReplicateOutcome) -> f64| median(&pool.iter().map(|o| f(o)).collect::<Vec<_>>());

    let rows: Vec<ReportRow> = (half..n_times)
        .map(|i| {
            let t = first.times[i];
            let observed = column(&|o| o.observed[i]);
            let predicted = column(&|o| o.predicted[i]);
            let residual = column(&|o| o.observed[i] - o.predicted[i]);
            ReportRow {
                t,
                observed,
                predicted,
                residual,
                residual_scaled: residual * libm::pow(t, opts.m as f64),
            }
        })
        .collect();

    let last = n_times - 1;
    let median_scaled_half = column(&|o| scaled(o, half));
    let median_scaled_last = column(&|o| scaled(o, last));

    let ratios: Vec<f64> = outcomes
        .iter()
        .filter(|o| o.survived && o.predicted[last] != 0.0)
        .map(|o| o.observed[last] / o.predicted[last])
        .collect();
    let (q1, q3) = (quantile(&ratios, 0.25), quantile(&ratios, 0.75));
    let ratio_std_error = if ratios.len() >= 2 {
        // median SE for a normal law, sigma from the IQR
        1.2533 * (q3 - q1) / 1.349 / libm::sqrt(ratios.len() as f64)
    } else {
        f64::NAN
    };
    let survivors = outcomes.iter().filter(|o| o.survived).count();
    let verdict = median_scaled_last <= opts.tolerance_multiple * median_scaled_half;
    Ok(ExpansionReport {
        mode: CheckMode::Pathwise,
        regime,
        m: opts.m,
        rows,
        verdict,
        pathwise: Some(PathwiseSummary {
            replicates: outcomes.len(),
            survivors,
            survival_fraction: survivors as f64 / outcomes.len() as f64,
            median_ratio: median(&ratios),
            ratio_std_error,
            ratio_quartiles: (q1, q3),
            median_scaled_half,
            median_scaled_last,
            tolerance_multiple: opts.tolerance_multiple,
            failed_replicates: failed,
        }),
    })
}

/// Runs every replicate with `runner`, collecting successes. Cap exceedance
/// in any replicate yields [`Error::PartialReport`] over the rest.
pub fn pathwise_check_with<R: WindowRunner + ?Sized>(
    base: &SimConfig,
    interval: &Interval,
    opts: &PathwiseOptions,
    runner: &R,
) -> Result<ExpansionReport> {
    opts.validate()?;
    base.validate()?;
    let results: Vec<Result<ReplicateOutcome>> = (0..opts.replicates)
        .map(|i| pathwise_replicate(base, interval, opts, i, runner))
        .collect();
    collect_report(results, interval, base, opts)
}

/// Turns per-replicate results into a report, separating cap failures.
pub fn collect_report(
    results: Vec<Result<ReplicateOutcome>>,
    interval: &Interval,
    base: &SimConfig,
    opts: &PathwiseOptions,
) -> Result<ExpansionReport> {
    let regime = Regime::classify(base.theta, interval);
    let mut outcomes = Vec::with_capacity(results.len());
    let mut failed = 0;
    for r in results {
        match r {
            Ok(o) => outcomes.push(o),
            Err(Error::PopulationCapExceeded { .. }) => failed += 1,
            Err(e) => return Err(e),
        }
    }
    let report = summarize(&outcomes, opts, regime, failed)?;
    if failed > 0 {
        return Err(Error::PartialReport {
            failed,
            report: alloc::boxed::Box::new(report),
        });
    }
    Ok(report)
}

/// Sequential pathwise check of the order-`m` expansion.
pub fn pathwise_check(
    m: usize,
    config: &SimConfig,
    interval: &Interval,
    kappa: f64,
    replicates: usize,
) -> Result<ExpansionReport> {
    let opts = PathwiseOptions {
        m,
        kappa,
        replicates,
        ..PathwiseOptions::default()
    };
    pathwise_check_with(config, interval, &opts, &crate::sim::Sequential)
}
