//! Run settings: one flat key-value table shared by the config file and the
//! command line. Flags override file values, which override defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::Args;
use kbbm_core::series::Regime;
use kbbm_core::{DriftParams, Interval, OffspringLaw};
use serde::{Deserialize, Serialize};

pub const OUTPUT_DIR_ENV: &str = "KBBM_OUTPUT_DIR";
const DEFAULT_OUTPUT_DIR: &str = "kbbm-out";

/// Every key is optional here; [`Settings::resolve`] fills the gaps.
#[derive(Debug, Clone, Default, PartialEq, Args, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Drift magnitude; particles move with drift -theta.
    #[arg(long)]
    pub theta: Option<f64>,
    /// Branching rate.
    #[arg(long)]
    pub beta: Option<f64>,
    /// `binary` or comma-separated p_0,p_1,...
    #[arg(long)]
    pub law: Option<String>,
    /// Starting position.
    #[arg(long)]
    pub x: Option<f64>,
    /// Single evaluation time.
    #[arg(long)]
    pub t: Option<f64>,
    /// Comma-separated time grid (also the simulation schedule).
    #[arg(long, value_delimiter = ',', num_args = 1..)]
    pub t_grid: Option<Vec<f64>>,
    /// `a,b` or `a,inf`.
    #[arg(long)]
    pub interval: Option<String>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub max_population: Option<usize>,
    #[arg(long)]
    pub replicates: Option<usize>,
    /// Worker threads for replicate and particle fan-out.
    #[arg(long)]
    pub threads: Option<usize>,
    /// Particles per parallel work unit.
    #[arg(long)]
    pub chunk_size: Option<usize>,
    /// Expansion order.
    #[arg(long)]
    pub m: Option<usize>,
    /// Largest martingale index k.
    #[arg(long)]
    pub k_max: Option<usize>,
    /// Checkpoint exponent: r_n = n^(1/kappa).
    #[arg(long)]
    pub kappa: Option<f64>,
    /// Last checkpoint time.
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub max_checkpoints: Option<usize>,
    #[arg(long)]
    pub tail_fraction: Option<f64>,
    #[arg(long)]
    pub tolerance_multiple: Option<f64>,
    /// `expectation` or `pathwise`.
    #[arg(long)]
    pub mode: Option<String>,
    /// `drifted`, `driftless_bounded` or `driftless_unbounded`; inferred when absent.
    #[arg(long)]
    pub regime: Option<String>,
    /// `count`, `mass`, `one` or `bessel3`.
    #[arg(long)]
    pub functional: Option<String>,
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
}

impl Settings {
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Keys set in `self` win over keys set in `lower`.
    pub fn over(self, lower: Settings) -> Result<Settings> {
        let mut base = serde_json::to_value(lower)?;
        let top = serde_json::to_value(self)?;
        if let (Some(base), Some(top)) = (base.as_object_mut(), top.as_object()) {
            for (key, value) in top {
                if !value.is_null() {
                    base.insert(key.clone(), value.clone());
                }
            }
        }
        Ok(serde_json::from_value(base)?)
    }

    /// Fills every key that is still unset with its default.
    pub fn resolve(self) -> Result<Settings> {
        let env_dir = std::env::var_os(OUTPUT_DIR_ENV).map(PathBuf::from);
        let defaults = Settings {
            theta: Some(0.0),
            beta: Some(1.0),
            law: Some("binary".into()),
            x: Some(1.0),
            t: Some(1.0),
            t_grid: Some(vec![5.0, 10.0, 20.0, 40.0]),
            interval: Some("0,inf".into()),
            seed: Some(0),
            max_population: Some(kbbm_core::sim::DEFAULT_MAX_POPULATION),
            replicates: Some(1000),
            threads: Some(0),
            chunk_size: Some(crate::parallel::DEFAULT_CHUNK_SIZE),
            m: Some(0),
            k_max: Some(2),
            kappa: Some(kbbm_core::martingale::DEFAULT_KAPPA),
            horizon: Some(4.0),
            max_checkpoints: Some(kbbm_core::martingale::DEFAULT_MAX_CHECKPOINTS),
            tail_fraction: Some(kbbm_core::martingale::DEFAULT_TAIL_FRACTION),
            tolerance_multiple: Some(1.0),
            mode: Some("expectation".into()),
            regime: None,
            functional: Some("count".into()),
            output_dir: Some(env_dir.unwrap_or_else(|| DEFAULT_OUTPUT_DIR.into())),
        };
        self.over(defaults)
    }
}

/// Typed views over resolved settings. Each accessor fails only if the key
/// was never resolved or does not parse.
impl Settings {
    fn get<T: Clone>(v: &Option<T>, key: &str) -> Result<T> {
        v.clone().with_context(|| format!("missing setting `{key}`"))
    }

    pub fn theta(&self) -> Result<f64> {
        Self::get(&self.theta, "theta")
    }
    pub fn beta(&self) -> Result<f64> {
        Self::get(&self.beta, "beta")
    }
    pub fn x(&self) -> Result<f64> {
        Self::get(&self.x, "x")
    }
    pub fn t(&self) -> Result<f64> {
        Self::get(&self.t, "t")
    }
    pub fn t_grid(&self) -> Result<Vec<f64>> {
        Self::get(&self.t_grid, "t_grid")
    }
    pub fn seed(&self) -> Result<u64> {
        Self::get(&self.seed, "seed")
    }
    pub fn replicates(&self) -> Result<usize> {
        Self::get(&self.replicates, "replicates")
    }
    pub fn m(&self) -> Result<usize> {
        Self::get(&self.m, "m")
    }
    pub fn k_max(&self) -> Result<usize> {
        Self::get(&self.k_max, "k_max")
    }
    pub fn kappa(&self) -> Result<f64> {
        Self::get(&self.kappa, "kappa")
    }
    pub fn horizon(&self) -> Result<f64> {
        Self::get(&self.horizon, "horizon")
    }
    pub fn max_checkpoints(&self) -> Result<usize> {
        Self::get(&self.max_checkpoints, "max_checkpoints")
    }
    pub fn tail_fraction(&self) -> Result<f64> {
        Self::get(&self.tail_fraction, "tail_fraction")
    }
    pub fn tolerance_multiple(&self) -> Result<f64> {
        Self::get(&self.tolerance_multiple, "tolerance_multiple")
    }
    pub fn max_population(&self) -> Result<usize> {
        Self::get(&self.max_population, "max_population")
    }
    pub fn threads(&self) -> Result<usize> {
        Self::get(&self.threads, "threads")
    }
    pub fn chunk_size(&self) -> Result<usize> {
        let c = Self::get(&self.chunk_size, "chunk_size")?;
        if c == 0 {
            bail!("chunk_size must be at least 1");
        }
        Ok(c)
    }
    pub fn mode(&self) -> Result<String> {
        Self::get(&self.mode, "mode")
    }
    pub fn functional(&self) -> Result<String> {
        Self::get(&self.functional, "functional")
    }
    pub fn output_dir(&self) -> Result<PathBuf> {
        Self::get(&self.output_dir, "output_dir")
    }

    pub fn law(&self) -> Result<OffspringLaw> {
        parse_law(&Self::get(&self.law, "law")?)
    }

    pub fn interval(&self) -> Result<Interval> {
        parse_interval(&Self::get(&self.interval, "interval")?)
    }

    pub fn params(&self) -> Result<DriftParams> {
        Ok(DriftParams::new(self.theta()?, self.beta()?, self.law()?.mean())?)
    }

    /// The requested regime, or the one implied by `theta` and the interval.
    pub fn regime(&self) -> Result<Regime> {
        match self.regime.as_deref() {
            None => Ok(Regime::classify(self.theta()?, &self.interval()?)),
            Some("drifted") => Ok(Regime::Drifted),
            Some("driftless_bounded") => Ok(Regime::DriftlessBounded),
            Some("driftless_unbounded") => Ok(Regime::DriftlessUnbounded),
            Some(other) => bail!("unknown regime `{other}`"),
        }
    }
}

pub fn parse_law(text: &str) -> Result<OffspringLaw> {
    if text.trim() == "binary" {
        return Ok(OffspringLaw::binary());
    }
    let probs = text
        .split(',')
        .map(|p| p.trim().parse::<f64>().with_context(|| format!("bad probability `{p}`")))
        .collect::<Result<Vec<_>>>()?;
    Ok(OffspringLaw::new(probs)?)
}

pub fn parse_interval(text: &str) -> Result<Interval> {
    let (a, b) = text
        .split_once(',')
        .with_context(|| format!("interval `{text}` must look like `a,b` or `a,inf`"))?;
    let lower: f64 = a.trim().parse().with_context(|| format!("bad lower end `{a}`"))?;
    let upper = match b.trim() {
        "inf" | "+inf" => f64::INFINITY,
        s => s.parse().with_context(|| format!("bad upper end `{s}`"))?,
    };
    Ok(Interval::new(lower, upper)?)
}
