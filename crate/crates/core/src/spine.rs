//! Size-biased spine sampling and many-to-one estimators.
//!
//! Under the tilted measure the spine moves as a single Brownian motion with
//! drift `-theta`, splits at rate `beta * mu` and leaves a size-biased number
//! of children at each split. Expectations of additive functionals of the
//! population reduce to `exp(beta (mu - 1) t)` times a single-path
//! expectation, which is what [`many_to_one_estimate`] computes.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::positive;
use crate::law::OffspringLaw;
use crate::rng::StreamKey;
use crate::special::{bessel3_cdf, DriftParams};
use crate::stats::MeanAccumulator;
use crate::{Error, Result};

/// Draws `k` with probability `k p_k / mu`.
pub fn sample_size_biased<R: Rng + ?Sized>(law: &OffspringLaw, rng: &mut R) -> Result<usize> {
    Ok(law.size_biased()?.sample(rng))
}

/// One spine trajectory observed at a list of times.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpinePath {
    pub times: Vec<f64>,
    pub positions: Vec<f64>,
    /// `alive[i]`: the path stayed positive on `[0, times[i]]`.
    pub alive: Vec<bool>,
    pub split_times: Vec<f64>,
    pub offspring: Vec<usize>,
}

/// What a v1 functional may look at: the spine's position at `t` and whether
/// its path stayed positive on `[0, t]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpineEndpoint {
    pub position: f64,
    pub survived: bool,
}

/// Gaussian move plus exact bridge check. Survival stays false once lost.
fn spine_step<R: Rng + ?Sized>(rng: &mut R, x: f64, dt: f64, theta: f64, alive: bool) -> (f64, bool) {
    let z: f64 = StandardNormal.sample(rng);
    let y = x - theta * dt + libm::sqrt(dt) * z;
    let u: f64 = rng.random();
    let survives = alive && x > 0.0 && y > 0.0 && u >= libm::exp(-2.0 * x * y / dt);
    (y, survives)
}

/// Samples a spine from `x` on the observation `times` (positive, increasing).
pub fn sample_spine<R: Rng + ?Sized>(
    x: f64,
    theta: f64,
    beta: f64,
    law: &OffspringLaw,
    times: &[f64],
    rng: &mut R,
) -> Result<SpinePath> {
    positive("x", x)?;
    positive("beta", beta)?;
    if !times.windows(2).all(|w| w[0] < w[1]) || times.iter().any(|t| !(*t > 0.0 && t.is_finite())) {
        return Err(Error::InvalidSchedule);
    }
    let biased = law.size_biased()?;
    let rate = beta * law.mean();
    let horizon = times.last().copied().unwrap_or(0.0);
    let mut split_times = Vec::new();
    let mut offspring = Vec::new();
    let mut clock = 0.0;
    loop {
        let e: f64 = Exp1.sample(rng);
        clock += e / rate;
        if clock > horizon {
            break;
        }
        split_times.push(clock);
        offspring.push(biased.sample(rng));
    }

    let mut positions = Vec::with_capacity(times.len());
    let mut alive = Vec::with_capacity(times.len());
    let (mut pos, mut ok, mut last) = (x, true, 0.0);
    for &t in times {
        (pos, ok) = spine_step(rng, pos, t - last, theta, ok);
        last = t;
        positions.push(pos);
        alive.push(ok);
    }
    Ok(SpinePath {
        times: times.to_vec(),
        positions,
        alive,
        split_times,
        offspring,
    })
}

/// Monte Carlo mean and its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub estimate: f64,
    pub std_error: f64,
    pub replicates: u64,
}

impl McEstimate {
    pub fn from_accumulator(acc: &MeanAccumulator) -> Self {
        Self {
            estimate: acc.mean(),
            std_error: acc.std_error(),
            replicates: acc.count(),
        }
    }
}

/// Spine endpoint for replicate `index` under `key`.
pub fn spine_endpoint(key: &StreamKey, index: u64, x: f64, t: f64, theta: f64) -> SpineEndpoint {
    let mut rng = key.open(index, 0);
    let (position, survived) = spine_step(&mut rng, x, t, theta, true);
    SpineEndpoint { position, survived }
}

/// Estimates `E_x sum_{u alive at t} F(u)` as the mean of
/// `exp(beta (mu - 1) t) F(spine)` over `replicates` spines.
pub fn many_to_one_estimate<F: Fn(SpineEndpoint) -> f64>(
    functional: F,
    x: f64,
    t: f64,
    params: &DriftParams,
    replicates: u64,
    seed: u64,
) -> Result<McEstimate> {
    positive("x", x)?;
    positive("t", t)?;
    if replicates < 2 {
        return Err(Error::TooFewReplicates(replicates as usize));
    }
    let key = StreamKey::from_seed(seed);
    let scale = libm::exp(params.branching_growth() * t);
    let acc: MeanAccumulator = (0..replicates)
        .map(|i| scale * functional(spine_endpoint(&key, i, x, t, params.theta)))
        .collect();
    Ok(McEstimate::from_accumulator(&acc))
}

/// Weighted Kolmogorov-Smirnov comparison of reweighted killed endpoints
/// with the Bessel-3 law.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoodnessOfFit {
    /// `sup_y |F_weighted(y) - F_bessel(y)|`.
    pub statistic: f64,
    /// Kish effective sample size of the weights.
    pub effective_size: f64,
    pub threshold: f64,
    pub passed: bool,
}

/// Critical value of the one-sample KS statistic at level 0.001, in units of
/// `1 / sqrt(n)`.
pub const KS_CRITICAL_0_001: f64 = 1.949;

/// Draws killed endpoints of Brownian motion with drift `-theta` from `x`,
/// weights each by `B_t exp(theta (B_t - x) + theta^2 t / 2) / x`, and
/// compares the self-normalized weighted distribution with the Bessel-3
/// transition law at time `t`. The threshold is
/// `KS_CRITICAL_0_001 / sqrt(effective_size)`.
pub fn bessel3_sample_check(x: f64, t: f64, theta: f64, replicates: u64, seed: u64) -> Result<GoodnessOfFit> {
    positive("x", x)?;
    positive("t", t)?;
    if replicates < 2 {
        return Err(Error::TooFewReplicates(replicates as usize));
    }
    let key = StreamKey::from_seed(seed);
    let mut sample: Vec<(f64, f64)> = (0..replicates)
        .filter_map(|i| {
            let e = spine_endpoint(&key, i, x, t, theta);
            e.survived.then(|| {
                let log_w = libm::log(e.position / x) + theta * (e.position - x) + 0.5 * theta * theta * t;
                (e.position, libm::exp(log_w))
            })
        })
        .collect();
    let total: f64 = sample.iter().map(|(_, w)| w).sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let sum_sq: f64 = sample.iter().map(|(_, w)| w * w).sum();
    let effective_size = total * total / sum_sq;
    sample.sort_by(|a, b| a.0.total_cmp(&b.0));

    let mut statistic: f64 = 0.0;
    let mut below = 0.0;
    for (y, w) in &sample {
        let f = bessel3_cdf(t, x, *y)?;
        statistic = statistic.max(libm::fabs(f - below / total));
        below += w;
        statistic = statistic.max(libm::fabs(f - below / total));
    }
    let threshold = KS_CRITICAL_0_001 / libm::sqrt(effective_size);
    Ok(GoodnessOfFit {
        statistic,
        effective_size,
        threshold,
        passed: statistic <= threshold,
    })
}
