//! Single trajectories of the killed diffusion and Monte-Carlo estimators
//! built on them: survival probabilities `μQ_{s,t}1_D` and samples of the
//! conditioned law `μQ_{s,t} / μQ_{s,t}1_D`.
//!
//! Every replica draws from its own substream keyed by `(seed, replica)`, so
//! estimates do not depend on the number of worker threads.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::{bridge_survival_probability, Domain};
use crate::measures::EmpiricalMeasure;
use crate::model::TimePeriodicModel;
use crate::rng::{self, StreamKind, SubstreamRng};
use crate::scalar::Real;

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SimParams<T> {
    pub dt: T,
    /// Kill with the Brownian-bridge crossing probability when both ends of
    /// a step are inside D. Off means endpoint-only testing.
    pub bridge_correction: bool,
    pub seed: u64,
}

impl<T: Real> SimParams<T> {
    pub fn new(dt: T, seed: u64) -> Self {
        Self { dt, bridge_correction: true, seed }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > T::zero()) || !self.dt.is_finite() {
            return Err(Error::InvalidParameter("dt must be positive".into()));
        }
        Ok(())
    }

    /// Steps longer than a tenth of the period under-resolve the time
    /// dependence; returned as a warning string rather than an error.
    pub fn period_warning(&self, period: T) -> Option<String> {
        (self.dt > period / T::lit(10.0))
            .then(|| format!("dt = {} exceeds period/10 = {}", self.dt, period / T::lit(10.0)))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum KillKind {
    Hard,
    Soft,
}

impl KillKind {
    pub fn as_str(self) -> &'static str {
        match self {
            KillKind::Hard => "hard",
            KillKind::Soft => "soft",
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum PathStatus<T> {
    Alive { position: Vec<T> },
    HardKilled { time: T },
    SoftKilled { time: T },
}

#[derive(Clone, Debug, PartialEq)]
pub struct PathOutcome<T> {
    pub status: PathStatus<T>,
    pub steps_taken: usize,
}

impl<T> PathOutcome<T> {
    pub fn is_alive(&self) -> bool {
        matches!(self.status, PathStatus::Alive { .. })
    }
}

/// Exponential clock for soft killing: the path dies when `∫κ dt` reaches
/// an Exp(1) threshold.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SoftClock<T> {
    pub integral: T,
    pub threshold: T,
}

impl<T: Real> SoftClock<T> {
    pub fn new(threshold: T) -> Self {
        Self { integral: T::zero(), threshold }
    }

    pub fn draw<R: rand::Rng + ?Sized>(rng: &mut R) -> Self {
        Self::new(rng::exp1(rng))
    }
}

/// Result of one step.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum StepOutcome<T> {
    Moved,
    Killed { kind: KillKind, time: T },
}

/// Euler–Maruyama stepping with hard and soft killing. Holds scratch
/// buffers, so keep one per worker.
#[derive(Clone, Debug)]
pub struct Stepper<'a, T: Real> {
    model: &'a TimePeriodicModel<T>,
    domain: &'a Domain<T>,
    bridge_correction: bool,
    drift: Vec<T>,
    sigma: Vec<T>,
    noise: Vec<T>,
    proposal: Vec<T>,
}

impl<'a, T: Real> Stepper<'a, T> {
    pub fn new(model: &'a TimePeriodicModel<T>, domain: &'a Domain<T>, bridge_correction: bool) -> Result<Self> {
        if model.dim() != domain.dim() {
            return Err(Error::DimensionMismatch { expected: domain.dim(), got: model.dim() });
        }
        let d = domain.dim();
        Ok(Self {
            model,
            domain,
            bridge_correction,
            drift: vec![T::zero(); d],
            sigma: vec![T::zero(); d * d],
            noise: vec![T::zero(); d],
            proposal: vec![T::zero(); d],
        })
    }

    pub fn model(&self) -> &'a TimePeriodicModel<T> {
        self.model
    }

    pub fn domain(&self) -> &'a Domain<T> {
        self.domain
    }

    /// Advances `x` (in D) from `t` to `t + dt`. On survival `x` holds the
    /// new position and the clock has advanced by `κ(t, x) dt`; on a kill `x`
    /// is left unchanged. Same-step hard and soft events are ordered by their
    /// interpolated times.
    pub fn step<R: rand::Rng + ?Sized>(
        &mut self,
        t: T,
        x: &mut [T],
        dt: T,
        clock: &mut SoftClock<T>,
        rng: &mut R,
    ) -> Result<StepOutcome<T>> {
        let d = x.len();
        self.model.drift_into(t, x, &mut self.drift);
        self.model.diffusion_into(t, x, &mut self.sigma);
        for z in self.noise.iter_mut() {
            *z = rng::standard_normal(rng);
        }
        let sqdt = dt.sqrt();
        for i in 0..d {
            let row = &self.sigma[i * d..(i + 1) * d];
            let diff: T = row.iter().zip(&self.noise).map(|(&a, &b)| a * b).sum();
            self.proposal[i] = x[i] + self.drift[i] * dt + diff * sqdt;
        }
        self.resolve(t, x, dt, clock, rng)
    }

    /// As [`Self::step`] with the martingale increment supplied by the caller
    /// (e.g. one half of a correlated pair): the proposal is
    /// `x + b(t, x) dt + increment`.
    pub fn step_with_increment<R: rand::Rng + ?Sized>(
        &mut self,
        t: T,
        x: &mut [T],
        dt: T,
        increment: &[T],
        clock: &mut SoftClock<T>,
        rng: &mut R,
    ) -> Result<StepOutcome<T>> {
        self.model.drift_into(t, x, &mut self.drift);
        self.model.diffusion_into(t, x, &mut self.sigma);
        for i in 0..x.len() {
            self.proposal[i] = x[i] + self.drift[i] * dt + increment[i];
        }
        self.resolve(t, x, dt, clock, rng)
    }

    fn resolve<R: rand::Rng + ?Sized>(
        &mut self,
        t: T,
        x: &mut [T],
        dt: T,
        clock: &mut SoftClock<T>,
        rng: &mut R,
    ) -> Result<StepOutcome<T>> {
        if self.proposal.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "proposal", t: t.as_f64() });
        }

        let hard = self.hard_kill_fraction(x, dt, rng);

        let rate = self.model.kill_rate(t, x);
        let increment = rate * dt;
        let soft = if clock.integral + increment >= clock.threshold && increment > T::zero() {
            Some(((clock.threshold - clock.integral) / increment).max(T::zero()).min(T::one()))
        } else {
            None
        };

        let event = match (hard, soft) {
            (Some(h), Some(s)) if s < h => Some((KillKind::Soft, s)),
            (Some(h), _) => Some((KillKind::Hard, h)),
            (None, Some(s)) => Some((KillKind::Soft, s)),
            (None, None) => None,
        };
        match event {
            Some((kind, frac)) => Ok(StepOutcome::Killed { kind, time: t + frac * dt }),
            None => {
                x.copy_from_slice(&self.proposal);
                clock.integral = clock.integral + increment;
                Ok(StepOutcome::Moved)
            }
        }
    }

    /// Fraction of the step at which the hard kill happens, if it does.
    /// Expects `self.proposal` and `self.sigma` to hold the current step.
    fn hard_kill_fraction<R: rand::Rng + ?Sized>(&self, x: &[T], dt: T, rng: &mut R) -> Option<T> {
        let phi0 = self.domain.phi(x);
        if !self.domain.contains_point(&self.proposal) {
            let sd1 = self.domain.signed_distance(&self.proposal).min(T::zero());
            let den = phi0 - sd1;
            return Some(if den > T::zero() { phi0 / den } else { T::zero() });
        }
        if !self.bridge_correction {
            return None;
        }
        let phi1 = self.domain.phi(&self.proposal);
        let s2 = self.domain.normal_diffusivity_or_conservative(&self.sigma, x);
        let survive = bridge_survival_probability(phi0, phi1, dt, s2);
        if survive >= T::one() {
            return None;
        }
        let u: T = rng::uniform(rng);
        // Crossing point of the straight line to the reflected endpoint.
        (u >= survive).then(|| phi0 / (phi0 + phi1))
    }

    /// Bridge kill decision for a prescribed proposal, exposed for tests.
    #[doc(hidden)]
    pub fn hard_kill_for_proposal<R: rand::Rng + ?Sized>(
        &mut self,
        t: T,
        x: &[T],
        proposal: &[T],
        dt: T,
        rng: &mut R,
    ) -> Option<T> {
        self.model.diffusion_into(t, x, &mut self.sigma);
        self.proposal.copy_from_slice(proposal);
        self.hard_kill_fraction(x, dt, rng)
    }

    /// Runs from `s` to `t` on the grid `s, s + dt, …` with a final partial
    /// step landing exactly on `t`. Returns the kill event, if any, and the
    /// number of steps taken.
    pub fn advance<R: rand::Rng + ?Sized>(
        &mut self,
        x: &mut [T],
        s: T,
        t: T,
        dt: T,
        clock: &mut SoftClock<T>,
        rng: &mut R,
    ) -> Result<(Option<(KillKind, T)>, usize)> {
        let n = step_count(s, t, dt);
        for k in 0..n {
            let t0 = s + T::from_count(k) * dt;
            let t1 = if k + 1 == n { t } else { s + T::from_count(k + 1) * dt };
            if let StepOutcome::Killed { kind, time } = self.step(t0, x, t1 - t0, clock, rng)? {
                return Ok((Some((kind, time)), k + 1));
            }
        }
        Ok((None, n))
    }
}

/// Number of grid steps covering `[s, t]`; a trailing sliver below
/// `1e-9 dt` is absorbed into the last step.
pub fn step_count<T: Real>(s: T, t: T, dt: T) -> usize {
    if t <= s {
        return 0;
    }
    let r = ((t - s) / dt).as_f64();
    ((r - 1e-9).ceil() as usize).max(1)
}

fn check_start<T: Real>(domain: &Domain<T>, x: &[T], s: T, t: T) -> Result<()> {
    domain.check_dim(x)?;
    if !domain.contains_point(x) {
        return Err(Error::PointOutsideDomain { index: 0 });
    }
    if t < s {
        return Err(Error::InvalidParameter("end time precedes start time".into()));
    }
    Ok(())
}

/// One killed trajectory from `x` at time `s` to time `t`.
pub fn simulate<T: Real, R: rand::Rng + ?Sized>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    x: &[T],
    s: T,
    t: T,
    params: &SimParams<T>,
    rng: &mut R,
) -> Result<PathOutcome<T>> {
    params.validate()?;
    check_start(domain, x, s, t)?;
    let mut stepper = Stepper::new(model, domain, params.bridge_correction)?;
    simulate_with(&mut stepper, x, s, t, params.dt, rng)
}

fn simulate_with<T: Real, R: rand::Rng + ?Sized>(
    stepper: &mut Stepper<'_, T>,
    x: &[T],
    s: T,
    t: T,
    dt: T,
    rng: &mut R,
) -> Result<PathOutcome<T>> {
    let mut clock = SoftClock::draw(rng);
    let mut pos = x.to_vec();
    let (event, steps_taken) = stepper.advance(&mut pos, s, t, dt, &mut clock, rng)?;
    let status = match event {
        None => PathStatus::Alive { position: pos },
        Some((KillKind::Hard, time)) => PathStatus::HardKilled { time },
        Some((KillKind::Soft, time)) => PathStatus::SoftKilled { time },
    };
    Ok(PathOutcome { status, steps_taken })
}

/// Initial distribution of a path or particle.
#[derive(Clone, Debug, PartialEq)]
pub enum InitialLaw<T: Real> {
    PointMass(Vec<T>),
    /// Uniform on the domain.
    Uniform,
    /// Uniform choice among the points of a cloud.
    Empirical(EmpiricalMeasure<T>),
}

impl<T: Real> InitialLaw<T> {
    pub fn validate(&self, domain: &Domain<T>) -> Result<()> {
        match self {
            InitialLaw::PointMass(x) => {
                domain.check_dim(x)?;
                if !domain.contains_point(x) {
                    return Err(Error::PointOutsideDomain { index: 0 });
                }
            }
            InitialLaw::Uniform => {}
            InitialLaw::Empirical(m) => {
                if m.dim() != domain.dim() {
                    return Err(Error::DimensionMismatch { expected: domain.dim(), got: m.dim() });
                }
                if let Some(index) = m.iter().position(|p| !domain.contains_point(p)) {
                    return Err(Error::PointOutsideDomain { index });
                }
            }
        }
        Ok(())
    }

    pub fn sample<R: rand::Rng + ?Sized>(&self, domain: &Domain<T>, rng: &mut R) -> Vec<T> {
        match self {
            InitialLaw::PointMass(x) => x.clone(),
            InitialLaw::Uniform => domain.sample_uniform(rng),
            InitialLaw::Empirical(m) => m.point(rng.random_range(0..m.count())).to_vec(),
        }
    }
}

fn replica_rng(seed: u64, replica: usize) -> SubstreamRng {
    rng::substream(seed, StreamKind::Replica, &[replica as u64])
}

/// Monte-Carlo estimate of `μQ_{s,t}1_D`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SurvivalEstimate {
    pub p_hat: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub dt: f64,
    pub seed: u64,
}

pub fn estimate_survival<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &InitialLaw<T>,
    s: T,
    t: T,
    replicas: usize,
    params: &SimParams<T>,
) -> Result<SurvivalEstimate> {
    params.validate()?;
    init.validate(domain)?;
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    if t < s {
        return Err(Error::InvalidParameter("end time precedes start time".into()));
    }
    Stepper::new(model, domain, params.bridge_correction)?;
    let alive = (0..replicas)
        .into_par_iter()
        .map_init(
            || Stepper::new(model, domain, params.bridge_correction).expect("checked above"),
            |stepper, i| -> Result<usize> {
                let mut rng = replica_rng(params.seed, i);
                let x0 = init.sample(domain, &mut rng);
                let out = simulate_with(stepper, &x0, s, t, params.dt, &mut rng)?;
                Ok(out.is_alive() as usize)
            },
        )
        .try_reduce(|| 0, |a, b| Ok(a + b))?;
    let n = replicas as f64;
    let p_hat = alive as f64 / n;
    Ok(SurvivalEstimate {
        p_hat,
        stderr: (p_hat * (1.0 - p_hat) / n).sqrt(),
        replicas,
        dt: params.dt.as_f64(),
        seed: params.seed,
    })
}

/// Survivor cloud from rejection sampling.
#[derive(Clone, Debug, PartialEq)]
pub struct ConditionedSample<T> {
    pub dim: usize,
    /// Flat survivor positions in replica order.
    pub survivors: Vec<T>,
    pub target: usize,
    /// Replicas consumed to reach the survivors (up to and including the
    /// last kept one, or all of them when the target was missed).
    pub replicas: usize,
    pub acceptance_rate: f64,
}

impl<T: Real> ConditionedSample<T> {
    pub fn count(&self) -> usize {
        self.survivors.len() / self.dim
    }

    pub fn is_complete(&self) -> bool {
        self.count() >= self.target
    }

    pub fn measure(&self) -> Result<EmpiricalMeasure<T>> {
        EmpiricalMeasure::new(self.dim, self.survivors.clone())
    }
}

/// Where a path is observed and how long it must survive.
#[derive(Clone, Copy, Debug)]
struct Observation<T> {
    at: T,
    survive_until: T,
}

fn observe_path<T: Real>(
    stepper: &mut Stepper<'_, T>,
    init: &InitialLaw<T>,
    s: T,
    obs: Observation<T>,
    dt: T,
    seed: u64,
    replica: usize,
) -> Result<Option<Vec<T>>> {
    let mut rng = replica_rng(seed, replica);
    let mut x = init.sample(stepper.domain(), &mut rng);
    let mut clock = SoftClock::draw(&mut rng);
    if stepper.advance(&mut x, s, obs.at, dt, &mut clock, &mut rng)?.0.is_some() {
        return Ok(None);
    }
    let seen = x.clone();
    if obs.survive_until > obs.at && stepper.advance(&mut x, obs.at, obs.survive_until, dt, &mut clock, &mut rng)?.0.is_some() {
        return Ok(None);
    }
    Ok(Some(seen))
}

#[allow(clippy::too_many_arguments)]
fn collect_survivors<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &InitialLaw<T>,
    s: T,
    obs: Observation<T>,
    target: usize,
    max_replicas: usize,
    params: &SimParams<T>,
) -> Result<ConditionedSample<T>> {
    params.validate()?;
    init.validate(domain)?;
    if target == 0 {
        return Err(Error::InvalidParameter("target_survivors must be positive".into()));
    }
    if obs.at < s || obs.survive_until < obs.at {
        return Err(Error::InvalidParameter("need s <= t <= horizon".into()));
    }
    Stepper::new(model, domain, params.bridge_correction)?;
    let d = domain.dim();
    let mut survivors: Vec<T> = Vec::with_capacity(target * d);
    let mut found = 0usize;
    let mut next = 0usize;
    let mut consumed = 0usize;
    while found < target && next < max_replicas {
        // Batch size depends only on results so far, never on the pool.
        let want = target - found;
        let batch = if found == 0 {
            if next == 0 { want.max(256) } else { next.saturating_mul(4) }
        } else {
            let rate = found as f64 / next as f64;
            ((want as f64 / rate) * 1.1) as usize + 256
        }
        .min(max_replicas - next);
        let results: Vec<Option<Vec<T>>> = (next..next + batch)
            .into_par_iter()
            .map_init(
                || Stepper::new(model, domain, params.bridge_correction).expect("checked above"),
                |stepper, i| observe_path(stepper, init, s, obs, params.dt, params.seed, i),
            )
            .collect::<Result<_>>()?;
        for (offset, r) in results.into_iter().enumerate() {
            consumed = next + offset + 1;
            if let Some(p) = r {
                survivors.extend_from_slice(&p);
                found += 1;
                if found == target {
                    break;
                }
            }
        }
        next += batch;
    }
    Ok(ConditionedSample {
        dim: d,
        survivors,
        target,
        replicas: consumed,
        acceptance_rate: if consumed > 0 { found as f64 / consumed as f64 } else { 0.0 },
    })
}

/// Rejection sample of the conditioned law at `t`, stopping at
/// `target_survivors` or `max_replicas`, whichever comes first. Never fails
/// for lack of survivors; check [`ConditionedSample::is_complete`].
#[allow(clippy::too_many_arguments)]
pub fn sample_survivors<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &InitialLaw<T>,
    s: T,
    t: T,
    target_survivors: usize,
    max_replicas: usize,
    params: &SimParams<T>,
) -> Result<ConditionedSample<T>> {
    let obs = Observation { at: t, survive_until: t };
    collect_survivors(model, domain, init, s, obs, target_survivors, max_replicas, params)
}

/// As [`sample_survivors`], failing with
/// [`Error::InsufficientSurvivors`] when the target is missed.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_sample<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &InitialLaw<T>,
    s: T,
    t: T,
    target_survivors: usize,
    max_replicas: usize,
    params: &SimParams<T>,
) -> Result<ConditionedSample<T>> {
    let sample = sample_survivors(model, domain, init, s, t, target_survivors, max_replicas, params)?;
    require_complete(sample)
}

fn require_complete<T: Real>(sample: ConditionedSample<T>) -> Result<ConditionedSample<T>> {
    if sample.is_complete() {
        Ok(sample)
    } else {
        Err(Error::InsufficientSurvivors {
            achieved: sample.count(),
            target: sample.target,
            replicas: sample.replicas,
        })
    }
}

/// Law at `t` of paths conditioned to survive until `horizon ≥ t`: the
/// Monte-Carlo face of the horizon-conditioned evolution `R^T_{s,t}`.
#[allow(clippy::too_many_arguments)]
pub fn horizon_conditioned_sample<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    init: &InitialLaw<T>,
    s: T,
    t: T,
    horizon: T,
    target_survivors: usize,
    max_replicas: usize,
    params: &SimParams<T>,
) -> Result<ConditionedSample<T>> {
    let obs = Observation { at: t, survive_until: horizon };
    require_complete(collect_survivors(model, domain, init, s, obs, target_survivors, max_replicas, params)?)
}
