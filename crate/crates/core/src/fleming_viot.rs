//! Fleming–Viot particle system: N copies of the killed diffusion, where a
//! killed particle is immediately reborn at the position of a uniformly
//! chosen survivor. The empirical law of the cloud approximates the
//! conditioned law of the diffusion.
//!
//! Moves are parallel, keyed by `(seed, particle, step, attempt)`; rebirths
//! are processed serially in ascending particle index from a per-step
//! stream. Runs are reproducible independently of the worker count.

use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::killed_path::{InitialLaw, KillKind, SimParams, SoftClock, StepOutcome, Stepper};
use crate::measures::{boundary_mass, EmpiricalMeasure};
use crate::model::TimePeriodicModel;
use crate::rng::{self, StreamKind};
use crate::scalar::Real;

/// Halvings allowed when every particle dies in the same step.
pub const MAX_ALL_KILLED_RETRIES: u32 = 30;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct RebirthEvent<T> {
    pub time: T,
    pub killed_index: usize,
    pub donor_index: usize,
    pub kind: KillKind,
}

/// How the cloud is populated at the start time.
#[derive(Clone, Debug, PartialEq)]
pub enum FvInit<T: Real> {
    /// `n` i.i.d. draws from a law.
    Law { law: InitialLaw<T>, n: usize },
    /// Explicit positions, one particle per point.
    Points(EmpiricalMeasure<T>),
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StepReport<T> {
    pub dt_taken: T,
    pub retries: u32,
    pub kills: usize,
}

#[derive(Clone, Debug)]
pub struct ParticleSystem<T: Real> {
    model: TimePeriodicModel<T>,
    domain: Domain<T>,
    params: SimParams<T>,
    dim: usize,
    positions: Vec<T>,
    clocks: Vec<SoftClock<T>>,
    start: T,
    time: T,
    steps: u64,
    log: Vec<RebirthEvent<T>>,
}

/// Builds the initial cloud at time `s`.
pub fn fv_init<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &FvInit<T>,
    s: T,
    params: &SimParams<T>,
) -> Result<ParticleSystem<T>> {
    params.validate()?;
    if model.dim() != domain.dim() {
        return Err(Error::DimensionMismatch { expected: domain.dim(), got: model.dim() });
    }
    if !s.is_finite() {
        return Err(Error::InvalidParameter("start time must be finite".into()));
    }
    let d = domain.dim();
    let n = match init {
        FvInit::Law { n, .. } => *n,
        FvInit::Points(m) => m.count(),
    };
    if n < 2 {
        return Err(Error::InvalidParameter(format!("need at least 2 particles, got {n}")));
    }
    let mut positions = Vec::with_capacity(n * d);
    let mut clocks = Vec::with_capacity(n);
    match init {
        FvInit::Law { law, .. } => {
            law.validate(domain)?;
            for i in 0..n {
                let mut r = rng::substream(params.seed, StreamKind::ParticleInit, &[i as u64]);
                positions.extend(law.sample(domain, &mut r));
                clocks.push(SoftClock::draw(&mut r));
            }
        }
        FvInit::Points(m) => {
            if m.dim() != d {
                return Err(Error::DimensionMismatch { expected: d, got: m.dim() });
            }
            if let Some(index) = m.iter().position(|p| !domain.contains_point(p)) {
                return Err(Error::PointOutsideDomain { index });
            }
            positions.extend_from_slice(m.as_flat());
            for i in 0..n {
                let mut r = rng::substream(params.seed, StreamKind::ParticleInit, &[i as u64]);
                clocks.push(SoftClock::draw(&mut r));
            }
        }
    }
    Ok(ParticleSystem {
        model: model.clone(),
        domain: domain.clone(),
        params: *params,
        dim: d,
        positions,
        clocks,
        start: s,
        time: s,
        steps: 0,
        log: Vec::new(),
    })
}

impl<T: Real> ParticleSystem<T> {
    pub fn len(&self) -> usize {
        self.clocks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.clocks.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn time(&self) -> T {
        self.time
    }

    pub fn start_time(&self) -> T {
        self.start
    }

    pub fn steps_taken(&self) -> u64 {
        self.steps
    }

    pub fn params(&self) -> &SimParams<T> {
        &self.params
    }

    pub fn model(&self) -> &TimePeriodicModel<T> {
        &self.model
    }

    pub fn domain(&self) -> &Domain<T> {
        &self.domain
    }

    pub fn position(&self, i: usize) -> &[T] {
        &self.positions[i * self.dim..(i + 1) * self.dim]
    }

    pub fn positions_flat(&self) -> &[T] {
        &self.positions
    }

    /// All rebirths so far, ordered by time.
    pub fn rebirth_log(&self) -> &[RebirthEvent<T>] {
        &self.log
    }

    /// Empirical measure of the current cloud.
    pub fn measure(&self) -> EmpiricalMeasure<T> {
        EmpiricalMeasure::new(self.dim, self.positions.clone()).expect("cloud has at least two particles")
    }

    /// Fraction of particles within `alpha` of the boundary.
    pub fn boundary_mass(&self, alpha: T) -> T {
        boundary_mass(&self.measure(), &self.domain, alpha)
    }

    /// Advances the cloud by `dt`; see [`fv_step`].
    pub fn step(&mut self, dt: T) -> Result<StepReport<T>> {
        self.step_inner(dt, None)
    }

    fn step_inner(&mut self, dt: T, land_on: Option<T>) -> Result<StepReport<T>> {
        if !(dt > T::zero()) || !dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        let n = self.len();
        let d = self.dim;
        let t = self.time;
        let seed = self.params.seed;
        let step = self.steps;
        let bridge = self.params.bridge_correction;
        let model = &self.model;
        let domain = &self.domain;

        let mut h = dt;
        for attempt in 0..=MAX_ALL_KILLED_RETRIES {
            // A kill leaves the particle untouched, so an all-killed attempt
            // leaves the whole state as it was.
            let outcomes: Vec<StepOutcome<T>> = self
                .positions
                .par_chunks_mut(d)
                .zip(self.clocks.par_iter_mut())
                .enumerate()
                .with_min_len(64)
                .map_init(
                    || Stepper::new(model, domain, bridge).expect("dimensions checked at init"),
                    |stepper, (i, (x, clock))| {
                        let mut r = rng::substream(seed, StreamKind::ParticleStep, &[i as u64, step, attempt as u64]);
                        stepper.step(t, x, h, clock, &mut r)
                    },
                )
                .collect::<Result<_>>()?;

            let killed: Vec<(usize, KillKind, T)> = outcomes
                .iter()
                .enumerate()
                .filter_map(|(i, o)| match *o {
                    StepOutcome::Killed { kind, time } => Some((i, kind, time)),
                    StepOutcome::Moved => None,
                })
                .collect();

            if killed.len() == n {
                h = h / T::lit(2.0);
                continue;
            }

            let survivors: Vec<usize> = outcomes
                .iter()
                .enumerate()
                .filter(|(_, o)| matches!(o, StepOutcome::Moved))
                .map(|(i, _)| i)
                .collect();
            let mut r = rng::substream(seed, StreamKind::Rebirth, &[step, attempt as u64]);
            let mut events = Vec::with_capacity(killed.len());
            for &(k, kind, time) in &killed {
                let donor = survivors[r.random_range(0..survivors.len())];
                self.positions.copy_within(donor * d..(donor + 1) * d, k * d);
                self.clocks[k] = SoftClock::draw(&mut r);
                events.push(RebirthEvent { time, killed_index: k, donor_index: donor, kind });
            }
            events.sort_by(|a, b| a.time.partial_cmp(&b.time).expect("finite times").then(a.killed_index.cmp(&b.killed_index)));
            self.log.extend(events);

            self.time = match land_on {
                Some(end) if attempt == 0 => end,
                _ => t + h,
            };
            self.steps += 1;
            return Ok(StepReport { dt_taken: h, retries: attempt, kills: killed.len() });
        }
        Err(Error::StepUnderflow { time: t.as_f64(), dt: h.as_f64(), retries: MAX_ALL_KILLED_RETRIES })
    }
}

/// One step of length `dt` (shortened by halving if every particle dies).
pub fn fv_step<T: Real>(system: &mut ParticleSystem<T>, dt: T) -> Result<StepReport<T>> {
    system.step(dt)
}

#[derive(Clone, Debug, PartialEq)]
pub struct FvSnapshot<T> {
    pub time: T,
    pub cloud: EmpiricalMeasure<T>,
    /// Rebirths since the start of the system.
    pub rebirths: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct FvRun<T> {
    pub snapshots: Vec<FvSnapshot<T>>,
    pub steps: u64,
    pub retries: u64,
}

/// Runs until `t_end`, recording the cloud at each checkpoint (and at
/// `t_end`). Step ends land exactly on checkpoints.
pub fn fv_run<T: Real>(system: &mut ParticleSystem<T>, t_end: T, checkpoints: &[T]) -> Result<FvRun<T>> {
    if t_end < system.time() {
        return Err(Error::InvalidParameter("t_end precedes the current time".into()));
    }
    let mut marks: Vec<T> = checkpoints.to_vec();
    if marks.iter().any(|&c| c < system.time() || c > t_end || !c.is_finite()) {
        return Err(Error::InvalidParameter("checkpoints must lie in [current time, t_end]".into()));
    }
    marks.push(t_end);
    marks.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    marks.dedup();

    let dt = system.params.dt;
    let slack = dt * T::lit(1e-9);
    let mut snapshots = Vec::with_capacity(marks.len());
    let (steps0, mut retries) = (system.steps, 0u64);
    for &mark in &marks {
        while system.time < mark {
            let remaining = mark - system.time;
            let report = if remaining <= dt + slack {
                system.step_inner(remaining, Some(mark))?
            } else {
                system.step_inner(dt, None)?
            };
            retries += report.retries as u64;
        }
        snapshots.push(FvSnapshot { time: mark, cloud: system.measure(), rebirths: system.log.len() });
    }
    Ok(FvRun { snapshots, steps: system.steps - steps0, retries })
}

/// Summary of the rebirth times of a run.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct JumpDiagnostic {
    pub count: usize,
    /// Smallest gap between consecutive rebirth times; `None` with fewer
    /// than two events.
    pub min_gap: Option<f64>,
    /// Rebirths per particle per unit time on `[s + k, s + k + 1)`.
    pub rate_per_unit_time: Vec<f64>,
}

pub fn fv_jump_time_diagnostic<T: Real>(system: &ParticleSystem<T>) -> JumpDiagnostic {
    let times: Vec<f64> = system.log.iter().map(|e| e.time.as_f64()).collect();
    let min_gap = times.windows(2).map(|w| w[1] - w[0]).reduce(f64::min);
    let s = system.start.as_f64();
    let span = (system.time.as_f64() - s).max(0.0);
    let units = span.ceil() as usize;
    let mut counts = vec![0usize; units];
    for &t in &times {
        let k = ((t - s).floor() as usize).min(units.saturating_sub(1));
        if units > 0 {
            counts[k] += 1;
        }
    }
    let n = system.len() as f64;
    let rate_per_unit_time = counts
        .iter()
        .enumerate()
        .map(|(k, &c)| {
            let width = (span - k as f64).min(1.0);
            c as f64 / (n * width)
        })
        .collect();
    JumpDiagnostic { count: times.len(), min_gap, rate_per_unit_time }
}
