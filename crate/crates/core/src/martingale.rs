//! Hermite martingales `M_t^{(2k+1, theta)}` and their limit estimates.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive};
use crate::sim::Snapshot;
use crate::special::{hermite_space_time, DriftParams};
use crate::{Error, Result};

pub const DEFAULT_KAPPA: f64 = 4.0;
pub const DEFAULT_TAIL_FRACTION: f64 = 0.5;
/// Upper bound on checkpoints kept from the `r_n` grid.
pub const DEFAULT_MAX_CHECKPOINTS: usize = 64;

/// `exp(-(beta(mu-1) - theta^2/2) t) sum_u exp(theta X_u) t^{(2k+1)/2} H_{2k+1}(X_u / sqrt(t))`.
pub fn martingale_value(snapshot: &Snapshot, k: usize, params: &DriftParams) -> Result<f64> {
    martingale_value_at(&snapshot.positions, snapshot.time, k, params)
}

/// [`martingale_value`] for bare positions at time `t`.
pub fn martingale_value_at(positions: &[f64], t: f64, k: usize, params: &DriftParams) -> Result<f64> {
    non_negative("t", t)?;
    let growth = params.killed_growth() * t;
    Ok(positions
        .iter()
        .map(|x| libm::exp(params.theta * x - growth) * hermite_space_time(2 * k + 1, *x, t))
        .sum())
}

/// `exp(theta x) x^{2k+1}`: the value at time 0 and hence the mean at all times.
pub fn start_value(x: f64, k: usize, theta: f64) -> f64 {
    libm::exp(theta * x) * libm::pow(x, (2 * k + 1) as f64)
}

/// Checkpoints `r_n = n^{1/kappa}` for `n = 1..=floor(horizon^kappa)`. When
/// that is more than `max_points` indices, `max_points` of them are taken
/// evenly spaced in `n`, always keeping the first and last.
pub fn checkpoint_grid(kappa: f64, horizon: f64, max_points: usize) -> Result<Vec<f64>> {
    if !(kappa > 1.0 && kappa.is_finite()) {
        return Err(Error::InvalidOrder("kappa must exceed 1"));
    }
    positive("horizon", horizon)?;
    let n_max = libm::floor(libm::pow(horizon, kappa));
    if n_max < 2.0 || max_points < 2 {
        return Err(Error::InvalidGrid);
    }
    let n_max = n_max as u64;
    let indices: Vec<u64> = if n_max as usize <= max_points {
        (1..=n_max).collect()
    } else {
        let mut v: Vec<u64> = (0..max_points)
            .map(|i| 1 + libm::round((n_max - 1) as f64 * i as f64 / (max_points - 1) as f64) as u64)
            .collect();
        v.dedup();
        v
    };
    Ok(indices.into_iter().map(|n| libm::pow(n as f64, 1.0 / kappa)).collect())
}

/// Tail average and tail standard deviation of a checkpoint series.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LimitEstimate {
    pub value: f64,
    pub dispersion: f64,
    pub tail_len: usize,
}

/// Averages the last `ceil(tail_fraction * len)` values.
pub fn limit_estimate(values: &[f64], tail_fraction: f64) -> Result<LimitEstimate> {
    if !(tail_fraction > 0.0 && tail_fraction <= 1.0) {
        return Err(Error::InvalidParams("tail fraction must lie in (0, 1]"));
    }
    let len = libm::ceil(tail_fraction * values.len() as f64) as usize;
    if len < 2 {
        return Err(Error::TailTooShort(len));
    }
    let tail = &values[values.len() - len..];
    let acc: crate::stats::MeanAccumulator = tail.iter().copied().collect();
    Ok(LimitEstimate {
        value: acc.mean(),
        dispersion: acc.std_dev(),
        tail_len: len,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MartingaleSeries {
    pub k: usize,
    pub theta: f64,
    pub kappa: f64,
    /// `(r_n, M_{r_n})`.
    pub checkpoints: Vec<(f64, f64)>,
    pub limit: LimitEstimate,
}

impl MartingaleSeries {
    /// Evaluates `M^{(2k+1, theta)}` on snapshots taken along a checkpoint grid.
    pub fn from_snapshots(
        snapshots: &[Snapshot],
        k: usize,
        params: &DriftParams,
        kappa: f64,
        tail_fraction: f64,
    ) -> Result<Self> {
        let checkpoints = snapshots
            .iter()
            .map(|s| Ok((s.time, martingale_value(s, k, params)?)))
            .collect::<Result<Vec<_>>>()?;
        Self::from_values(checkpoints, k, params.theta, kappa, tail_fraction)
    }

    pub fn from_values(
        checkpoints: Vec<(f64, f64)>,
        k: usize,
        theta: f64,
        kappa: f64,
        tail_fraction: f64,
    ) -> Result<Self> {
        let values: Vec<f64> = checkpoints.iter().map(|c| c.1).collect();
        let limit = limit_estimate(&values, tail_fraction)?;
        Ok(Self {
            k,
            theta,
            kappa,
            checkpoints,
            limit,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::law::OffspringLaw;
    use crate::sim::{simulate, SimConfig};
    use crate::stats::MeanAccumulator;

    fn params(theta: f64) -> DriftParams {
        DriftParams::standard(theta).unwrap()
    }

    #[test]
    fn value_examples() {
        assert_eq!(martingale_value(&Snapshot::empty(2.0), 1, &params(0.5)).unwrap(), 0.0);
        let s = Snapshot {
            time: 3.0,
            positions: alloc::vec![1.7],
            total_ever_branched: 0,
            absorbed_count: 0,
        };
        let p = params(0.5);
        let expect = libm::exp(-p.killed_growth() * 3.0) * libm::exp(0.5 * 1.7) * 1.7;
        assert!((martingale_value(&s, 0, &p).unwrap() - expect).abs() < 1e-14);
        // k = 1: t^{3/2} H_3(x / sqrt t) = x^3 - 3 t x
        let expect = libm::exp(-p.killed_growth() * 3.0) * libm::exp(0.5 * 1.7) * (1.7f64.powi(3) - 9.0 * 1.7);
        assert!((martingale_value(&s, 1, &p).unwrap() - expect).abs() < 1e-13);
        assert!(martingale_value(&Snapshot::empty(-1.0), 0, &p).is_err());
    }

    #[test]
    fn start_values() {
        assert_eq!(start_value(1.0, 0, 0.0), 1.0);
        assert_eq!(start_value(2.0, 1, 0.0), 8.0);
        assert!((start_value(1.0, 0, 0.5) - libm::exp(0.5)).abs() < 1e-15);
    }

    #[test]
    fn grid_shapes() {
        let g = checkpoint_grid(4.0, 3.0, 1000).unwrap();
        assert_eq!(g.len(), 81);
        assert!((g[15] - 2.0).abs() < 1e-15);
        let thin = checkpoint_grid(4.0, 18.0, 64).unwrap();
        assert_eq!(thin.len(), 64);
        assert_eq!(thin[0], 1.0);
        assert!((thin[63] - libm::pow(104_976.0, 0.25)).abs() < 1e-12);
        assert!(thin.windows(2).all(|w| w[0] < w[1]));
        assert!(checkpoint_grid(1.0, 3.0, 10).is_err());
        assert!(checkpoint_grid(4.0, 1.0, 10).is_err());
    }

    #[test]
    fn limit_examples() {
        let c = limit_estimate(&[3.0; 6], 0.5).unwrap();
        assert_eq!((c.value, c.dispersion, c.tail_len), (3.0, 0.0, 3));
        assert_eq!(limit_estimate(&[0.0; 4], 0.5).unwrap().value, 0.0);
        assert_eq!(limit_estimate(&[1.0, 2.0], 0.5), Err(Error::TailTooShort(1)));
        assert!(limit_estimate(&[1.0, 2.0], 0.0).is_err());
    }

    #[test]
    fn conservation_small() {
        for &(theta, k) in &[(0.0, 0usize), (0.5, 1), (1.0, 2)] {
            let p = params(theta);
            let mut acc = MeanAccumulator::default();
            for r in 0..4000u64 {
                let c = SimConfig::new(theta, 1.0, OffspringLaw::binary(), 1.0, alloc::vec![1.0], r);
                acc.push(martingale_value(&simulate(c).unwrap()[0], k, &p).unwrap());
            }
            let target = start_value(1.0, k, theta);
            assert!((acc.mean() - target).abs() <= 4.0 * acc.std_error(), "theta={theta} k={k}");
        }
    }

    #[test]
    fn tail_dispersion_shrinks_with_horizon() {
        let p = params(0.5);
        let mut short = MeanAccumulator::default();
        let mut long = MeanAccumulator::default();
        for r in 0..40u64 {
            for (h, acc) in [(4.0, &mut short), (8.0, &mut long)] {
                let grid = checkpoint_grid(4.0, h, 32).unwrap();
                let c = SimConfig::new(0.5, 1.0, OffspringLaw::binary(), 1.0, grid, r);
                let s = MartingaleSeries::from_snapshots(&simulate(c).unwrap(), 0, &p, 4.0, 0.5).unwrap();
                acc.push(s.limit.dispersion);
            }
        }
        assert!(long.mean() < short.mean(), "{} vs {}", long.mean(), short.mean());
    }

    #[test]
    fn k_zero_is_nonnegative() {
        let p = params(1.0);
        let c = SimConfig::new(1.0, 1.0, OffspringLaw::binary(), 1.0, alloc::vec![0.5, 1.0, 3.0], 4);
        for s in simulate(c).unwrap() {
            assert!(martingale_value(&s, 0, &p).unwrap() >= 0.0);
        }
    }
}
