//! Hermite-series machinery: expansions of shifted Gaussian distribution
//! functions and densities, their truncations on the checkpoint windows, and
//! the order-`m` predictions for normalized population counts.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::special::{
    gauss_cdf, gauss_pdf, hermite_all, hermite_at_zero, poly_exp_integral, sqrt_2_over_pi, DriftParams, Interval,
};
use crate::{Error, Result};

/// `n!` as a float; exact for `n <= 22`.
pub fn factorial(n: usize) -> f64 {
    (1..=n).fold(1.0, |acc, i| acc * i as f64)
}

/// `Phi(b) - phi(b) sum_{k=1}^{J} rho^k / k! H_{k-1}(b) H_k(x)`, which tends
/// to `Phi((b - rho x) / sqrt(1 - rho^2))` as `J` grows.
pub fn cdf_shift_expansion(b: f64, x: f64, rho: f64, truncation: usize) -> Result<f64> {
    if !(rho > 0.0 && rho < 1.0) {
        return Err(Error::RhoOutOfRange(rho));
    }
    let hb = hermite_all(truncation, b);
    let hx = hermite_all(truncation, x);
    let mut coeff = 1.0;
    let mut sum = 0.0;
    for k in 1..=truncation {
        coeff *= rho / k as f64;
        sum += coeff * hb[k - 1] * hx[k];
    }
    Ok(gauss_cdf(b) - gauss_pdf(b) * sum)
}

/// `Phi((b - rho x) / sqrt(1 - rho^2))`.
pub fn cdf_shift_target(b: f64, x: f64, rho: f64) -> f64 {
    gauss_cdf((b - rho * x) / libm::sqrt(1.0 - rho * rho))
}

fn check_window(r: f64) -> Result<()> {
    if r > 1.0 && r.is_finite() {
        Ok(())
    } else {
        Err(Error::WindowTooSmall(r))
    }
}

/// Shared odd-order window sum; `even_first` picks `H_{2k}` (distribution
/// function) or `H_{2k+1}` (density) for the `z` factor.
fn window_sum(z: f64, y: f64, r: f64, truncation: usize, even_first: bool) -> f64 {
    let zs = z / libm::sqrt(r);
    let ys = y / libm::pow(r, 0.25);
    let hz = hermite_all(2 * truncation + 1, zs);
    let hy = hermite_all(2 * truncation + 1, ys);
    let inv_sqrt_r = 1.0 / libm::sqrt(r);
    // r^{-(2k+1)/4} / (2k+1)!, built up multiplicatively so nothing overflows
    let mut coeff = libm::pow(r, -0.25);
    let mut sum = 0.0;
    for k in 0..=truncation {
        if k > 0 {
            coeff *= inv_sqrt_r / ((2 * k) as f64 * (2 * k + 1) as f64);
        }
        let zfac = if even_first { hz[2 * k] } else { hz[2 * k + 1] };
        sum += coeff * zfac * hy[2 * k + 1];
    }
    2.0 * gauss_pdf(zs) * sum
}

/// Truncated expansion of `Phi((z+y)/s) - Phi((z-y)/s)`, `s = sqrt(r - sqrt(r))`.
pub fn cdf_window_expansion(z: f64, y: f64, r: f64, truncation: usize) -> Result<f64> {
    check_window(r)?;
    Ok(window_sum(z, y, r, truncation, true))
}

/// Direct evaluation of the quantity [`cdf_window_expansion`] approximates.
pub fn cdf_window_target(z: f64, y: f64, r: f64) -> Result<f64> {
    check_window(r)?;
    let s = libm::sqrt(r - libm::sqrt(r));
    Ok(gauss_cdf((z + y) / s) - gauss_cdf((z - y) / s))
}

/// Truncated expansion of `sqrt(r)/s [phi((z-y)/s) - phi((z+y)/s)]`.
pub fn pdf_window_expansion(z: f64, y: f64, r: f64, truncation: usize) -> Result<f64> {
    check_window(r)?;
    Ok(window_sum(z, y, r, truncation, false))
}

/// Direct evaluation of the quantity [`pdf_window_expansion`] approximates.
pub fn pdf_window_target(z: f64, y: f64, r: f64) -> Result<f64> {
    check_window(r)?;
    let s = libm::sqrt(r - libm::sqrt(r));
    Ok(libm::sqrt(r) / s * (gauss_pdf((z - y) / s) - gauss_pdf((z + y) / s)))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WindowKind {
    Cdf,
    Pdf,
}

/// Order, truncation index and grid constants for a window expansion.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpansionOrder {
    pub kind: WindowKind,
    pub m: usize,
    pub truncation: usize,
    /// Checkpoint exponent: `r_n = n^(1/kappa)`.
    pub kappa: f64,
    /// Window constant `K`: `|y| <= sqrt(K sqrt(r_n) ln n)`.
    pub window: f64,
}

impl ExpansionOrder {
    /// Lower bound that the truncation index must strictly exceed.
    pub fn truncation_bound(kind: WindowKind, m: usize, kappa: f64, window: f64) -> f64 {
        let shift = match kind {
            WindowKind::Cdf => -1.0,
            WindowKind::Pdf => 1.0,
        };
        2.0 * m as f64 + (window * kappa + shift) / 2.0
    }

    /// Uses the smallest admissible truncation index plus 2.
    pub fn new(kind: WindowKind, m: usize, kappa: f64, window: f64) -> Result<Self> {
        if !(kappa > 1.0 && kappa.is_finite()) {
            return Err(Error::InvalidOrder("kappa must exceed 1"));
        }
        if !(window > 0.0 && window.is_finite()) {
            return Err(Error::InvalidOrder("window constant must be positive"));
        }
        let bound = Self::truncation_bound(kind, m, kappa, window);
        let smallest = libm::floor(bound) as usize + 1;
        Ok(Self {
            kind,
            m,
            truncation: smallest + 2,
            kappa,
            window,
        })
    }

    pub fn with_truncation(self, truncation: usize) -> Result<Self> {
        if truncation as f64 <= Self::truncation_bound(self.kind, self.m, self.kappa, self.window) {
            return Err(Error::InvalidOrder("truncation index below the admissible bound"));
        }
        Ok(Self { truncation, ..self })
    }

    /// `r_n = n^(1/kappa)`.
    pub fn checkpoint(&self, n: u64) -> f64 {
        libm::pow(n as f64, 1.0 / self.kappa)
    }

    /// Half-width `sqrt(K sqrt(r_n) ln n)` of the `y` window.
    pub fn window_radius(&self, n: u64) -> f64 {
        let r = self.checkpoint(n);
        libm::sqrt(self.window * libm::sqrt(r) * libm::log(n as f64))
    }

    /// Power of `r` that multiplies the sup error before checking its decay.
    pub fn error_scale(&self, r: f64) -> f64 {
        match self.kind {
            WindowKind::Cdf => libm::pow(r, (2 * self.m + 1) as f64 / 2.0),
            WindowKind::Pdf => libm::pow(r, (self.m + 1) as f64),
        }
    }

    /// `r_n^p * sup |target - truncated|` over `z` in `[-12 sqrt(r), 12 sqrt(r)]`
    /// and `y` in `[0, radius]` on a `nz x ny` grid (both functions are odd in
    /// `y`, so the positive half suffices).
    pub fn scaled_sup_error(&self, n: u64, nz: usize, ny: usize) -> Result<f64> {
        let r = self.checkpoint(n);
        check_window(r)?;
        let radius = self.window_radius(n);
        let zmax = 12.0 * libm::sqrt(r);
        let mut worst: f64 = 0.0;
        for i in 0..nz {
            let z = -zmax + 2.0 * zmax * i as f64 / (nz - 1) as f64;
            for j in 0..ny {
                let y = radius * j as f64 / (ny - 1) as f64;
                let err = match self.kind {
                    WindowKind::Cdf => cdf_window_target(z, y, r)? - cdf_window_expansion(z, y, r, self.truncation)?,
                    WindowKind::Pdf => pdf_window_target(z, y, r)? - pdf_window_expansion(z, y, r, self.truncation)?,
                };
                worst = worst.max(libm::fabs(err));
            }
        }
        Ok(worst * self.error_scale(r))
    }
}

/// Which normalization and series apply to a `(theta, A)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    /// `theta > 0`, any interval; normalization `t^(-3/2) e^{(beta(mu-1) - theta^2/2) t}`.
    Drifted,
    /// `theta = 0`, bounded interval; normalization `t^(-3/2) e^{beta(mu-1) t}`.
    DriftlessBounded,
    /// `theta = 0`, unbounded interval; normalization `t^(-1/2) e^{beta(mu-1) t}`.
    DriftlessUnbounded,
}

impl Regime {
    pub fn classify(theta: f64, interval: &Interval) -> Self {
        if theta > 0.0 {
            Regime::Drifted
        } else if interval.is_bounded() {
            Regime::DriftlessBounded
        } else {
            Regime::DriftlessUnbounded
        }
    }

    pub fn ensure_matches(&self, theta: f64, interval: &Interval) -> Result<()> {
        if Self::classify(theta, interval) == *self {
            Ok(())
        } else {
            Err(Error::RegimeMismatch(match self {
                Regime::DriftlessUnbounded => "the t^(-1/2) normalization needs theta = 0 and an unbounded interval",
                _ => "theta = 0 with an unbounded interval needs the t^(-1/2) normalization",
            }))
        }
    }

    /// Exponent `b` of the polynomial factor `t^(-b)`.
    pub fn normalization_exponent(&self) -> f64 {
        match self {
            Regime::DriftlessUnbounded => 0.5,
            _ => 1.5,
        }
    }
}

/// Per-order terms of the predicted normalized count at one time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExpansionPrediction {
    pub m: usize,
    pub t: f64,
    pub regime: Regime,
    pub normalization_exponent: f64,
    pub growth_rate: f64,
    /// `terms[l]` already includes its `t^(-l)` factor.
    pub terms: Vec<f64>,
    pub total: f64,
}

impl ExpansionPrediction {
    /// `count * t^b * exp(-growth_rate * t)`.
    pub fn normalize(&self, count: f64) -> f64 {
        normalize_count(count, self.t, self.normalization_exponent, self.growth_rate)
    }
}

pub fn normalize_count(count: f64, t: f64, exponent: f64, growth_rate: f64) -> f64 {
    count * libm::pow(t, exponent) * libm::exp(-growth_rate * t)
}

/// Evaluates the order-`m` expansion of the normalized count of `interval`
/// at time `t`, with martingale weights `weights[k]` for `k = 0..=m`.
pub fn predict_expansion(
    m: usize,
    params: &DriftParams,
    interval: &Interval,
    weights: &[f64],
    t: f64,
    regime: Regime,
) -> Result<ExpansionPrediction> {
    crate::error::positive("t", t)?;
    regime.ensure_matches(params.theta, interval)?;
    if weights.len() < m + 1 {
        return Err(Error::MissingWeights {
            needed: m + 1,
            got: weights.len(),
        });
    }
    let c = sqrt_2_over_pi();
    let mut terms = Vec::with_capacity(m + 1);
    for l in 0..=m {
        let inner = match regime {
            Regime::DriftlessUnbounded => {
                let a = interval.lower();
                let mut s = 0.0;
                for (k, w) in weights.iter().take(l + 1).enumerate() {
                    let p = 2 * l - 2 * k;
                    s += w / (factorial(2 * k + 1) * factorial(p)) * libm::pow(a, p as f64);
                }
                c * hermite_at_zero(2 * l) * s
            }
            _ => {
                let mut s = 0.0;
                for (k, w) in weights.iter().take(l + 1).enumerate() {
                    let p = 2 * l - 2 * k + 1;
                    s += w / (factorial(2 * k + 1) * factorial(p)) * poly_exp_integral(p, interval, params.theta)?;
                }
                -c * hermite_at_zero(2 * l + 2) * s
            }
        };
        terms.push(inner * libm::pow(t, -(l as f64)));
    }
    let growth_rate = match regime {
        Regime::Drifted => params.killed_growth(),
        _ => params.branching_growth(),
    };
    Ok(ExpansionPrediction {
        m,
        t,
        regime,
        normalization_exponent: regime.normalization_exponent(),
        growth_rate,
        total: terms.iter().sum(),
        terms,
    })
}
