//! Exact scalar formulas: Hermite polynomials, Gaussian kernels, killed
//! Brownian transition probabilities, the Bessel-3 density and closed-form
//! polynomial-exponential integrals.

use alloc::vec::Vec;
use core::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{non_negative, positive};
use crate::quad::{self, QuadOptions};
use crate::{Error, Result};

const FRAC_1_SQRT_2PI: f64 = 0.398_942_280_401_432_677_939_946_059_934_381_87;

/// An interval `(lower, upper]` in `[0, inf)`; `upper` may be `+inf`.
///
/// Every law used here is continuous, so the endpoint convention only matters
/// for counting simulated particles.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Interval {
    lower: f64,
    upper: f64,
}

impl Interval {
    pub fn new(lower: f64, upper: f64) -> Result<Self> {
        let ok = lower >= 0.0 && lower.is_finite() && !upper.is_nan() && upper > lower;
        if ok {
            Ok(Self { lower, upper })
        } else {
            Err(Error::InvalidInterval { lower, upper })
        }
    }

    /// `(lower, inf)`.
    pub fn above(lower: f64) -> Result<Self> {
        Self::new(lower, f64::INFINITY)
    }

    pub fn positive_half_line() -> Self {
        Self {
            lower: 0.0,
            upper: f64::INFINITY,
        }
    }

    pub fn lower(&self) -> f64 {
        self.lower
    }

    pub fn upper(&self) -> f64 {
        self.upper
    }

    pub fn is_bounded(&self) -> bool {
        self.upper.is_finite()
    }

    pub fn contains(&self, x: f64) -> bool {
        x > self.lower && x <= self.upper
    }
}

/// Drift magnitude `theta` (particles drift at `-theta`), branching rate
/// `beta` and offspring mean `mu`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftParams {
    pub theta: f64,
    pub beta: f64,
    pub mu: f64,
}

impl DriftParams {
    pub fn new(theta: f64, beta: f64, mu: f64) -> Result<Self> {
        non_negative("theta", theta)?;
        positive("beta", beta)?;
        non_negative("mu", mu)?;
        Ok(Self { theta, beta, mu })
    }

    /// Unit branching rate with binary-mean offspring.
    pub fn standard(theta: f64) -> Result<Self> {
        Self::new(theta, 1.0, 2.0)
    }

    /// Growth rate `beta (mu - 1)` of the unkilled population mean.
    pub fn branching_growth(&self) -> f64 {
        self.beta * (self.mu - 1.0)
    }

    /// Exponential rate `beta (mu - 1) - theta^2 / 2` of the killed population.
    pub fn killed_growth(&self) -> f64 {
        self.branching_growth() - 0.5 * self.theta * self.theta
    }

    /// Requires `mu > 1` and `theta < sqrt(2 beta (mu - 1))`.
    pub fn ensure_supercritical(&self) -> Result<()> {
        if self.mu <= 1.0 {
            return Err(Error::InvalidParams("offspring mean must exceed 1"));
        }
        if self.theta * self.theta >= 2.0 * self.branching_growth() {
            return Err(Error::InvalidParams(
                "theta must be below sqrt(2 beta (mu - 1))",
            ));
        }
        Ok(())
    }
}

/// Probabilists' Hermite polynomial `H_k(x)` by the three-term recurrence.
pub fn hermite(k: usize, x: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for j in 1..k {
        let next = x * cur - (j as f64) * prev;
        prev = cur;
        cur = next;
    }
    cur
}

/// `H_0(x), ..., H_kmax(x)`.
pub fn hermite_all(kmax: usize, x: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(kmax + 1);
    out.push(1.0);
    if kmax >= 1 {
        out.push(x);
    }
    for j in 1..kmax {
        let next = x * out[j] - (j as f64) * out[j - 1];
        out.push(next);
    }
    out
}

/// `H_k(0)`: zero for odd `k`, `(-1)^(k/2) (k-1)!!` for even `k`.
///
/// Bit-identical to `hermite(k, 0.0)`.
pub fn hermite_at_zero(k: usize) -> f64 {
    if k % 2 == 1 {
        return 0.0;
    }
    let mut h = 1.0;
    let mut j = 1;
    while j < k {
        h *= -(j as f64);
        j += 2;
    }
    h
}

/// Space-time Hermite polynomial `t^(k/2) H_k(x / sqrt(t))`, evaluated by
/// `h_{j+1} = x h_j - j t h_{j-1}` so that no division by `sqrt(t)` occurs.
pub fn hermite_space_time(k: usize, x: f64, t: f64) -> f64 {
    let mut prev = 1.0;
    if k == 0 {
        return prev;
    }
    let mut cur = x;
    for j in 1..k {
        let next = x * cur - (j as f64) * t * prev;
        prev = cur;
        cur = next;
    }
    cur
}

pub fn gauss_pdf(x: f64) -> f64 {
    FRAC_1_SQRT_2PI * libm::exp(-0.5 * x * x)
}

pub fn gauss_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / core::f64::consts::SQRT_2)
}

/// Probability that a Brownian bridge from `x0` to `x1` over time `dt`
/// stays strictly positive: `1 - exp(-2 x0 x1 / dt)`.
pub fn bridge_survival_prob(x0: f64, x1: f64, dt: f64) -> Result<f64> {
    positive("x0", x0)?;
    positive("x1", x1)?;
    positive("dt", dt)?;
    Ok(-libm::expm1(-2.0 * x0 * x1 / dt))
}

/// Density in `y` of the endpoint of a Brownian motion with drift `-theta`,
/// started at `x`, that has stayed positive up to time `t`.
fn killed_density(x: f64, t: f64, theta: f64, y: f64) -> f64 {
    if y <= 0.0 {
        return 0.0;
    }
    let sd = libm::sqrt(t);
    gauss_pdf((y - x + theta * t) / sd) / sd * -libm::expm1(-2.0 * x * y / t)
}

/// `P_x(min_{s<=t} B_s > 0, B_t in A)` for Brownian motion with drift
/// `-theta`, by adaptive quadrature of the killed density.
pub fn killed_transition_prob(x: f64, t: f64, theta: f64, interval: &Interval) -> Result<f64> {
    killed_transition_prob_with(x, t, theta, interval, &QuadOptions::default())
}

pub fn killed_transition_prob_with(
    x: f64,
    t: f64,
    theta: f64,
    interval: &Interval,
    opts: &QuadOptions,
) -> Result<f64> {
    positive("x", x)?;
    positive("t", t)?;
    non_negative("theta", theta)?;
    let f = |y: f64| killed_density(x, t, theta, y);
    let a = interval.lower();
    let est = if interval.is_bounded() {
        quad::integrate(f, a, interval.upper(), opts)?
    } else {
        let sd = libm::sqrt(t);
        let scale = if theta > 0.0 {
            libm::fmin(sd, 1.0 / theta)
        } else {
            sd
        };
        let scale = libm::fmax(scale, libm::fmin(x, sd));
        quad::integrate_to_infinity(f, a, scale, opts)?
    };
    Ok(est.value.clamp(0.0, 1.0))
}

/// Transition density of the 3-dimensional Bessel process from `x` to `y`
/// over time `t`.
pub fn bessel3_density(t: f64, x: f64, y: f64) -> Result<f64> {
    positive("t", t)?;
    positive("x", x)?;
    if y <= 0.0 {
        return Ok(0.0);
    }
    let sd = libm::sqrt(t);
    Ok(y / (x * sd) * gauss_pdf((y - x) / sd) * -libm::expm1(-2.0 * x * y / t))
}

/// Distribution function of [`bessel3_density`] in `y`, in closed form.
pub fn bessel3_cdf(t: f64, x: f64, y: f64) -> Result<f64> {
    positive("t", t)?;
    positive("x", x)?;
    if y <= 0.0 {
        return Ok(0.0);
    }
    let s = libm::sqrt(t);
    // int_0^y u phi((u - c)/s) / s du
    let partial = |c: f64| {
        c * (gauss_cdf((y - c) / s) - gauss_cdf(-c / s)) + s * (gauss_pdf(c / s) - gauss_pdf((y - c) / s))
    };
    Ok(((partial(x) - partial(-x)) / x).clamp(0.0, 1.0))
}

/// `E_x Z_t(A) = exp(beta (mu - 1) t) * killed_transition_prob(x, t, theta, A)`.
pub fn expected_count(x: f64, t: f64, params: &DriftParams, interval: &Interval) -> Result<f64> {
    let p = killed_transition_prob(x, t, params.theta, interval)?;
    Ok(libm::exp(params.branching_growth() * t) * p)
}

/// `ln E_x Z_t(A)`, kept in log space so long horizons do not overflow.
pub fn log_expected_count(x: f64, t: f64, params: &DriftParams, interval: &Interval) -> Result<f64> {
    let p = killed_transition_prob(x, t, params.theta, interval)?;
    Ok(params.branching_growth() * t + libm::log(p))
}

/// `int_A z^j e^(-theta z) dz` in closed form.
pub fn poly_exp_integral(j: usize, interval: &Interval, theta: f64) -> Result<f64> {
    non_negative("theta", theta)?;
    let a = interval.lower();
    let b = interval.upper();
    if theta == 0.0 {
        if !interval.is_bounded() {
            return Err(Error::DivergentIntegral);
        }
        let p = (j + 1) as i32;
        return Ok((libm::pow(b, p as f64) - libm::pow(a, p as f64)) / p as f64);
    }

    let ea = libm::exp(-theta * a);
    let (eb, mut value) = if interval.is_bounded() {
        let eb = libm::exp(-theta * b);
        (eb, ea * -libm::expm1(-theta * (b - a)) / theta)
    } else {
        (0.0, ea / theta)
    };
    let mut apow = 1.0;
    let mut bpow = 1.0;
    for i in 1..=j {
        apow *= a;
        bpow *= b;
        let bterm = if interval.is_bounded() { bpow * eb } else { 0.0 };
        value = (apow * ea - bterm + i as f64 * value) / theta;
    }
    Ok(value)
}

/// `sqrt(2 / pi)`.
pub fn sqrt_2_over_pi() -> f64 {
    libm::sqrt(2.0 / PI)
}
