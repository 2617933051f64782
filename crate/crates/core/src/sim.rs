//! Event-driven simulation of branching Brownian motion with drift `-theta`,
//! killed at the origin.
//!
//! Each particle carries an exponential lifetime drawn at birth. Between
//! events (deaths and observation times) its displacement is sampled exactly
//! as a Gaussian, and absorption during the segment is decided with the
//! Brownian-bridge crossing probability `exp(-2 x0 x1 / dt)`, so there is no
//! time-discretization bias. Observation times are global barriers; between
//! two barriers every particle evolves independently on its own random
//! stream, which is what makes chunked parallel execution reproduce the
//! sequential result bit for bit.

use alloc::vec::Vec;

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::positive;
use crate::law::OffspringLaw;
use crate::rng::{child_id, offset_of, StreamKey};
use crate::special::{DriftParams, Interval};
use crate::{Error, Result};

pub const DEFAULT_MAX_POPULATION: usize = 10_000_000;

const ROOT_ID: u64 = 0;
const RESUME_ID: u64 = 0x005e_ed0f_1e55;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Absorption {
    /// Remove a particle (and its future descendants) when its path touches 0.
    #[default]
    AtZero,
    /// No barrier. Diagnostic only: checks the branching mechanism in isolation.
    Disabled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimConfig {
    pub theta: f64,
    pub beta: f64,
    pub law: OffspringLaw,
    pub start_x: f64,
    pub schedule: Vec<f64>,
    pub max_population: usize,
    pub seed: u64,
    #[serde(default)]
    pub absorption: Absorption,
}

impl SimConfig {
    pub fn new(theta: f64, beta: f64, law: OffspringLaw, start_x: f64, schedule: Vec<f64>, seed: u64) -> Self {
        Self {
            theta,
            beta,
            law,
            start_x,
            schedule,
            max_population: DEFAULT_MAX_POPULATION,
            seed,
            absorption: Absorption::AtZero,
        }
    }

    pub fn params(&self) -> DriftParams {
        DriftParams {
            theta: self.theta,
            beta: self.beta,
            mu: self.law.mean(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        DriftParams::new(self.theta, self.beta, self.law.mean())?;
        positive("start_x", self.start_x)?;
        if self.max_population == 0 {
            return Err(Error::InvalidCap);
        }
        let increasing = self.schedule.windows(2).all(|w| w[0] < w[1]);
        let positive_times = self.schedule.iter().all(|t| *t > 0.0 && t.is_finite());
        if !increasing || !positive_times {
            return Err(Error::InvalidSchedule);
        }
        Ok(())
    }
}

/// Positions of the particles alive at `time` whose paths never touched 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    pub positions: Vec<f64>,
    /// Branching events so far.
    pub total_ever_branched: u64,
    /// Particles removed at the barrier so far.
    pub absorbed_count: u64,
}

impl Snapshot {
    pub fn empty(time: f64) -> Self {
        Self {
            time,
            positions: Vec::new(),
            total_ever_branched: 0,
            absorbed_count: 0,
        }
    }

    pub fn population(&self) -> usize {
        self.positions.len()
    }

    pub fn count_in(&self, interval: &Interval) -> usize {
        count_in(self, interval)
    }
}

/// `Z_t(A)`: number of positions in `(a, b]`.
pub fn count_in(snapshot: &Snapshot, interval: &Interval) -> usize {
    snapshot.positions.iter().filter(|x| interval.contains(**x)).count()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub position: f64,
    pub death_time: f64,
    pub id: u64,
    /// Word offset into this particle's stream.
    pub offset: u64,
}

/// The alive count passed the cap while a window was being processed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CapHit;

#[derive(Debug, Clone, Default, PartialEq)]
pub struct WindowOutcome {
    pub survivors: Vec<Particle>,
    pub branched: u64,
    pub absorbed: u64,
}

impl WindowOutcome {
    /// Appends `other`, keeping `self`'s particles first.
    pub fn merge(&mut self, mut other: WindowOutcome) {
        self.survivors.append(&mut other.survivors);
        self.branched += other.branched;
        self.absorbed += other.absorbed;
    }
}

/// Motion and branching rules shared by all particles of a run.
#[derive(Debug, Clone)]
pub struct Dynamics<'a> {
    theta: f64,
    beta: f64,
    law: &'a OffspringLaw,
    key: StreamKey,
    absorption: Absorption,
    cap: usize,
}

impl<'a> Dynamics<'a> {
    pub fn new(config: &'a SimConfig) -> Self {
        Self {
            theta: config.theta,
            beta: config.beta,
            law: &config.law,
            key: StreamKey::from_seed(config.seed),
            absorption: config.absorption,
            cap: config.max_population,
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    /// A particle born at `position` at time `birth` on stream `id`.
    pub fn spawn(&self, id: u64, position: f64, birth: f64) -> Particle {
        let mut rng = self.key.open(id, 0);
        let life: f64 = Exp1.sample(&mut rng);
        Particle {
            position,
            death_time: birth + life / self.beta,
            id,
            offset: offset_of(&rng),
        }
    }

    /// Moves from `x` over `dt`; `None` when the path touches the barrier.
    fn step(&self, rng: &mut ChaCha8Rng, x: f64, dt: f64) -> Option<f64> {
        let z: f64 = StandardNormal.sample(rng);
        let y = x - self.theta * dt + libm::sqrt(dt) * z;
        if self.absorption == Absorption::Disabled {
            return Some(y);
        }
        if y <= 0.0 {
            return None;
        }
        let cross = libm::exp(-2.0 * x * y / dt);
        let u: f64 = rng.random();
        if u < cross {
            None
        } else {
            Some(y)
        }
    }

    /// Evolves `particles` from `from` to `to`. Survivors are emitted in
    /// depth-first order of each input particle's family, input order first.
    pub fn evolve_chunk(&self, particles: &[Particle], from: f64, to: f64) -> core::result::Result<WindowOutcome, CapHit> {
        let mut out = WindowOutcome::default();
        let mut stack: Vec<(Particle, f64)> = Vec::new();
        for p in particles {
            stack.push((*p, from));
            while let Some((particle, start)) = stack.pop() {
                let mut rng = self.key.open(particle.id, particle.offset);
                if particle.death_time <= to {
                    let dt = particle.death_time - start;
                    let Some(y) = self.step(&mut rng, particle.position, dt) else {
                        out.absorbed += 1;
                        continue;
                    };
                    out.branched += 1;
                    let k = self.law.sample(&mut rng);
                    for ordinal in (0..k).rev() {
                        let child = self.spawn(child_id(particle.id, ordinal as u64), y, particle.death_time);
                        stack.push((child, particle.death_time));
                    }
                } else {
                    let Some(y) = self.step(&mut rng, particle.position, to - start) else {
                        out.absorbed += 1;
                        continue;
                    };
                    out.survivors.push(Particle {
                        position: y,
                        offset: offset_of(&rng),
                        ..particle
                    });
                }
                if out.survivors.len() + stack.len() > self.cap {
                    return Err(CapHit);
                }
            }
        }
        Ok(out)
    }
}

/// Strategy for advancing all particles across one observation window.
pub trait WindowRunner {
    fn run_window(
        &self,
        dynamics: &Dynamics<'_>,
        particles: &[Particle],
        from: f64,
        to: f64,
    ) -> core::result::Result<WindowOutcome, CapHit>;
}

/// Processes every particle on the calling thread.
#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl WindowRunner for Sequential {
    fn run_window(
        &self,
        dynamics: &Dynamics<'_>,
        particles: &[Particle],
        from: f64,
        to: f64,
    ) -> core::result::Result<WindowOutcome, CapHit> {
        dynamics.evolve_chunk(particles, from, to)
    }
}

/// One trajectory of the particle system, advanced barrier to barrier.
#[derive(Debug, Clone)]
pub struct Simulation {
    config: SimConfig,
    particles: Vec<Particle>,
    time: f64,
    branched: u64,
    absorbed: u64,
}

impl Simulation {
    pub fn new(config: SimConfig) -> Result<Self> {
        config.validate()?;
        let root = Dynamics::new(&config).spawn(ROOT_ID, config.start_x, 0.0);
        Ok(Self {
            config,
            particles: alloc::vec![root],
            time: 0.0,
            branched: 0,
            absorbed: 0,
        })
    }

    /// Starts from an existing population at `time`. Lifetimes are drawn
    /// afresh, which is exact because they are memoryless.
    pub fn from_positions(config: SimConfig, time: f64, positions: &[f64]) -> Result<Self> {
        config.validate()?;
        if config.absorption == Absorption::AtZero {
            if let Some(&bad) = positions.iter().find(|x| !(x.is_finite() && **x > 0.0)) {
                return Err(Error::NonPositive { name: "position", value: bad });
            }
        }
        let particles = {
            let dynamics = Dynamics::new(&config);
            positions
                .iter()
                .enumerate()
                .map(|(i, x)| dynamics.spawn(child_id(RESUME_ID, i as u64), *x, time))
                .collect()
        };
        Ok(Self {
            config,
            particles,
            time,
            branched: 0,
            absorbed: 0,
        })
    }

    pub fn config(&self) -> &SimConfig {
        &self.config
    }

    pub fn time(&self) -> f64 {
        self.time
    }

    pub fn population(&self) -> usize {
        self.particles.len()
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot {
            time: self.time,
            positions: self.particles.iter().map(|p| p.position).collect(),
            total_ever_branched: self.branched,
            absorbed_count: self.absorbed,
        }
    }

    pub fn advance_to<R: WindowRunner + ?Sized>(&mut self, to: f64, runner: &R) -> core::result::Result<Snapshot, CapHit> {
        if to <= self.time {
            return Ok(self.snapshot());
        }
        let dynamics = Dynamics::new(&self.config);
        let outcome = runner.run_window(&dynamics, &self.particles, self.time, to)?;
        if outcome.survivors.len() > self.config.max_population {
            return Err(CapHit);
        }
        self.particles = outcome.survivors;
        self.branched += outcome.branched;
        self.absorbed += outcome.absorbed;
        self.time = to;
        Ok(self.snapshot())
    }

    /// Advances through every time in the schedule. On cap exceedance the
    /// snapshots completed so far come back inside the error.
    pub fn run<R: WindowRunner + ?Sized>(mut self, runner: &R) -> Result<Vec<Snapshot>> {
        let schedule = self.config.schedule.clone();
        let mut snapshots = Vec::with_capacity(schedule.len());
        for t in schedule {
            match self.advance_to(t, runner) {
                Ok(s) => snapshots.push(s),
                Err(CapHit) => {
                    return Err(Error::PopulationCapExceeded {
                        cap: self.config.max_population,
                        time: t,
                        partial: snapshots,
                    })
                }
            }
        }
        Ok(snapshots)
    }
}

/// Runs `config` sequentially and returns one snapshot per schedule time.
pub fn simulate(config: SimConfig) -> Result<Vec<Snapshot>> {
    Simulation::new(config)?.run(&Sequential)
}
