//! Coupled pairs of killed diffusions. Each coordinate of the pair is a copy
//! of the model; their martingale parts are correlated through a
//! reflection-type cross-covariance
//!
//! ```text
//! C(x, y) = λ₀ (I − 2 u uᵀ) + σ₀(x) σ₀(y),   σ₀ = √(σσᵀ − λ₀ I),
//! u(x, y) = k(|x − y|) / (k(|x − y|) + 1) · (x − y)/|x − y|,
//! k(r)    = max((k₀ + 1)² r² / 2, r)^{1/4},
//! ```
//!
//! which drives the two coordinates together. Once they come within
//! `epsilon_couple` they are merged and move as one path.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::killed_path::{KillKind, SimParams, SoftClock, StepOutcome, Stepper, SurvivalEstimate};
use crate::linalg::{psd_sqrt, SquareMatrix, SymmetricEigen};
use crate::model::TimePeriodicModel;
use crate::rng::{self, StreamKind};
use crate::scalar::{distance, Real};

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CouplingParams<T> {
    pub lambda0: T,
    pub epsilon_couple: T,
    pub k0: T,
}

/// Sample points `(t, x)` with `t` uniform over one period and `x` uniform
/// in the domain.
fn sample_tx<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> Vec<(T, Vec<T>)> {
    let mut r = rng::substream(seed, StreamKind::Validator, &[0xC0]);
    (0..samples)
        .map(|_| {
            let t = model.period() * rng::uniform::<T, _>(&mut r);
            (t, domain.sample_uniform(&mut r))
        })
        .collect()
}

fn tolerance<T: Real>(scale: T) -> T {
    let base = T::lit(1e-12).max(T::epsilon() * T::lit(64.0));
    base * scale.max(T::one())
}

/// Half the smallest sampled eigenvalue of `σσᵀ`.
pub fn default_lambda0<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> T {
    let min = sample_tx(model, domain, samples.max(1), seed)
        .iter()
        .map(|(t, x)| SymmetricEigen::new(&model.diffusivity(*t, x)).min_value())
        .fold(T::infinity(), T::min);
    min * T::lit(0.5)
}

/// Threshold below which the pair is declared coupled: `√(λ₀ dt) / 4`.
pub fn default_epsilon<T: Real>(lambda0: T, dt: T) -> T {
    (lambda0 * dt).sqrt() / T::lit(4.0)
}

impl<T: Real> CouplingParams<T> {
    /// Fills unspecified values with the defaults; `k0` comes from the
    /// model's declared Lipschitz constant.
    pub fn resolve(
        model: &TimePeriodicModel<T>,
        domain: &Domain<T>,
        dt: T,
        lambda0: Option<T>,
        epsilon_couple: Option<T>,
        seed: u64,
    ) -> Result<Self> {
        let lambda0 = lambda0.unwrap_or_else(|| default_lambda0(model, domain, 10_000, seed));
        let params = Self {
            lambda0,
            epsilon_couple: epsilon_couple.unwrap_or_else(|| default_epsilon(lambda0, dt)),
            k0: model.declared().k0,
        };
        params.validate(model, domain, 10_000, seed)?;
        Ok(params)
    }

    /// Checks positivity and that `σσᵀ − λ₀ I` has no negative eigenvalue on
    /// `samples` random `(t, x)`. A zero eigenvalue is allowed so that the
    /// pure reflection limit (`σ = I`, `λ₀ = 1`) stays expressible.
    pub fn validate(&self, model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> Result<()> {
        if !(self.lambda0 > T::zero()) || !self.lambda0.is_finite() {
            return Err(Error::InvalidParameter("lambda0 must be positive".into()));
        }
        if !(self.epsilon_couple > T::zero()) {
            return Err(Error::InvalidParameter("epsilon_couple must be positive".into()));
        }
        if !(self.k0 >= T::zero()) {
            return Err(Error::InvalidParameter("k0 must be non-negative".into()));
        }
        let worst = sample_tx(model, domain, samples, seed)
            .iter()
            .map(|(t, x)| SymmetricEigen::new(&model.diffusivity(*t, x)).min_value() - self.lambda0)
            .fold(T::infinity(), T::min);
        if worst < -tolerance(self.lambda0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: worst.as_f64() });
        }
        Ok(())
    }
}

/// `√(σσᵀ(t, x) − λ₀ I)`, the symmetric PSD root.
pub fn sigma0<T: Real>(model: &TimePeriodicModel<T>, t: T, x: &[T], lambda0: T) -> Result<SquareMatrix<T>> {
    let a = model.diffusivity(t, x);
    let shifted = a.sub(&SquareMatrix::scaled_identity(a.dim(), lambda0));
    psd_sqrt(&shifted, tolerance(a.frobenius_norm()))
        .map_err(|m| Error::NotPositiveDefinite { min_eigenvalue: m.as_f64() })
}

pub fn k_func<T: Real>(r: T, k0: T) -> T {
    let a = (k0 + T::one()) * (k0 + T::one()) * r * r / T::lit(2.0);
    a.max(r).sqrt().sqrt()
}

/// The vector `u(x, y)`; its norm `k/(k+1)` is below 1.
pub fn u_vector<T: Real>(x: &[T], y: &[T], k0: T) -> Result<Vec<T>> {
    let r = distance(x, y);
    if !(r > T::zero()) {
        return Err(Error::CoincidentPoints);
    }
    let k = k_func(r, k0);
    let scale = k / ((k + T::one()) * r);
    Ok(x.iter().zip(y).map(|(&a, &b)| (a - b) * scale).collect())
}

fn cross_from_roots<T: Real>(s0x: &SquareMatrix<T>, s0y: &SquareMatrix<T>, u: &[T], lambda0: T) -> SquareMatrix<T> {
    let d = u.len();
    let mut c = s0x.matmul(s0y);
    let two = T::lit(2.0);
    for i in 0..d {
        for j in 0..d {
            let refl = if i == j { T::one() } else { T::zero() } - two * u[i] * u[j];
            c[(i, j)] = c[(i, j)] + lambda0 * refl;
        }
    }
    c
}

/// Cross-covariance `C_t(x, y)`.
pub fn coupling_matrix<T: Real>(
    model: &TimePeriodicModel<T>,
    t: T,
    x: &[T],
    y: &[T],
    params: &CouplingParams<T>,
) -> Result<SquareMatrix<T>> {
    let u = u_vector(x, y, params.k0)?;
    let s0x = sigma0(model, t, x, params.lambda0)?;
    let s0y = sigma0(model, t, y, params.lambda0)?;
    Ok(cross_from_roots(&s0x, &s0y, &u, params.lambda0))
}

/// The `2d × 2d` diffusion matrix `[[a(x), C], [Cᵀ, a(y)]]` of the pair.
pub fn joint_covariance<T: Real>(
    model: &TimePeriodicModel<T>,
    t: T,
    x: &[T],
    y: &[T],
    params: &CouplingParams<T>,
) -> Result<SquareMatrix<T>> {
    let c = coupling_matrix(model, t, x, y, params)?;
    Ok(SquareMatrix::from_blocks(&model.diffusivity(t, x), &c, &c.transpose(), &model.diffusivity(t, y)))
}

/// Smallest eigenvalue of the joint matrix over `samples` random
/// `(t, x, y)`, relative to its Frobenius norm. Non-negative up to rounding
/// when the coupling is well defined.
pub fn min_joint_eigenvalue<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    params: &CouplingParams<T>,
    samples: usize,
    seed: u64,
) -> Result<T> {
    let mut r = rng::substream(seed, StreamKind::Validator, &[0xC1]);
    let mut worst = T::infinity();
    for _ in 0..samples {
        let t = model.period() * rng::uniform::<T, _>(&mut r);
        let x = domain.sample_uniform(&mut r);
        let y = domain.sample_uniform(&mut r);
        let j = joint_covariance(model, t, &x, &y, params)?;
        let rel = SymmetricEigen::new(&j).min_value() / j.frobenius_norm().max(T::min_positive_value());
        worst = worst.min(rel);
    }
    Ok(worst)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum MarginalStatus<T> {
    Alive,
    HardKilled { time: T },
    SoftKilled { time: T },
}

impl<T> MarginalStatus<T> {
    pub fn is_alive(&self) -> bool {
        matches!(self, MarginalStatus::Alive)
    }

    fn killed(kind: KillKind, time: T) -> Self {
        match kind {
            KillKind::Hard => MarginalStatus::HardKilled { time },
            KillKind::Soft => MarginalStatus::SoftKilled { time },
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct CoupledPair<T> {
    pub y1: Vec<T>,
    pub y2: Vec<T>,
    pub status: [MarginalStatus<T>; 2],
    pub coupled: bool,
    pub coupling_time: Option<T>,
    clocks: [SoftClock<T>; 2],
}

impl<T: Real> CoupledPair<T> {
    /// Starts a pair at time `s`; points closer than `epsilon_couple` are
    /// coupled immediately.
    pub fn new<R: rand::Rng + ?Sized>(y1: Vec<T>, y2: Vec<T>, s: T, epsilon_couple: T, rng: &mut R) -> Self {
        let clocks = [SoftClock::draw(rng), SoftClock::draw(rng)];
        let mut pair = Self {
            y1,
            y2,
            status: [MarginalStatus::Alive, MarginalStatus::Alive],
            coupled: false,
            coupling_time: None,
            clocks,
        };
        if distance(&pair.y1, &pair.y2) < epsilon_couple {
            pair.merge(s);
        }
        pair
    }

    fn merge(&mut self, t: T) {
        self.coupled = true;
        self.coupling_time = Some(t);
        self.y2.clone_from(&self.y1);
        self.clocks[1] = self.clocks[0];
    }

    pub fn any_alive(&self) -> bool {
        self.status.iter().any(MarginalStatus::is_alive)
    }
}

/// Per-worker state for stepping pairs.
struct PairStepper<'a, T: Real> {
    model: &'a TimePeriodicModel<T>,
    stepper: Stepper<'a, T>,
    params: CouplingParams<T>,
    noise: Vec<T>,
    increment: Vec<T>,
}

impl<'a, T: Real> PairStepper<'a, T> {
    fn new(model: &'a TimePeriodicModel<T>, domain: &'a Domain<T>, params: CouplingParams<T>, bridge: bool) -> Result<Self> {
        let d = domain.dim();
        Ok(Self {
            model,
            stepper: Stepper::new(model, domain, bridge)?,
            params,
            noise: vec![T::zero(); 2 * d],
            increment: vec![T::zero(); 2 * d],
        })
    }

    fn step<R: rand::Rng + ?Sized>(&mut self, pair: &mut CoupledPair<T>, t: T, dt: T, rng: &mut R) -> Result<()> {
        let alive = [pair.status[0].is_alive(), pair.status[1].is_alive()];
        if pair.coupled {
            if alive[0] {
                if let StepOutcome::Killed { kind, time } = self.stepper.step(t, &mut pair.y1, dt, &mut pair.clocks[0], rng)? {
                    pair.status = [MarginalStatus::killed(kind, time); 2];
                }
                pair.y2.clone_from(&pair.y1);
                pair.clocks[1] = pair.clocks[0];
            }
            return Ok(());
        }
        match alive {
            [false, false] => Ok(()),
            [true, false] => {
                if let StepOutcome::Killed { kind, time } = self.stepper.step(t, &mut pair.y1, dt, &mut pair.clocks[0], rng)? {
                    pair.status[0] = MarginalStatus::killed(kind, time);
                }
                Ok(())
            }
            [false, true] => {
                if let StepOutcome::Killed { kind, time } = self.stepper.step(t, &mut pair.y2, dt, &mut pair.clocks[1], rng)? {
                    pair.status[1] = MarginalStatus::killed(kind, time);
                }
                Ok(())
            }
            [true, true] => self.joint_step(pair, t, dt, rng),
        }
    }

    fn joint_step<R: rand::Rng + ?Sized>(&mut self, pair: &mut CoupledPair<T>, t: T, dt: T, rng: &mut R) -> Result<()> {
        let d = pair.y1.len();
        let joint = joint_covariance(self.model, t, &pair.y1, &pair.y2, &self.params)?;
        let root = psd_sqrt(&joint, tolerance(joint.frobenius_norm()))
            .map_err(|m| Error::NotPositiveDefinite { min_eigenvalue: m.as_f64() })?;
        for z in self.noise.iter_mut() {
            *z = rng::standard_normal(rng);
        }
        root.matvec_into(&self.noise, &mut self.increment);
        let sqdt = dt.sqrt();
        self.increment.iter_mut().for_each(|v| *v = *v * sqdt);

        let (inc1, inc2) = self.increment.split_at(d);
        if let StepOutcome::Killed { kind, time } =
            self.stepper.step_with_increment(t, &mut pair.y1, dt, inc1, &mut pair.clocks[0], rng)?
        {
            pair.status[0] = MarginalStatus::killed(kind, time);
        }
        if let StepOutcome::Killed { kind, time } =
            self.stepper.step_with_increment(t, &mut pair.y2, dt, inc2, &mut pair.clocks[1], rng)?
        {
            pair.status[1] = MarginalStatus::killed(kind, time);
        }
        if pair.status[0].is_alive() && pair.status[1].is_alive() && distance(&pair.y1, &pair.y2) < self.params.epsilon_couple {
            pair.merge(t + dt);
        }
        Ok(())
    }

    /// Runs on the grid `s, s + dt, …, t`. With `stop_early`, returns as soon
    /// as the pair is coupled or both coordinates are dead.
    fn run<R: rand::Rng + ?Sized>(&mut self, pair: &mut CoupledPair<T>, s: T, t: T, dt: T, stop_early: bool, rng: &mut R) -> Result<()> {
        let n = crate::killed_path::step_count(s, t, dt);
        for k in 0..n {
            if !pair.any_alive() || (stop_early && pair.coupled) {
                break;
            }
            let t0 = s + T::from_count(k) * dt;
            let t1 = if k + 1 == n { t } else { s + T::from_count(k + 1) * dt };
            self.step(pair, t0, t1 - t0, rng)?;
        }
        Ok(())
    }
}

/// One step of the pair from `t` to `t + dt`. Handles every state: a coupled
/// pair moves as a single path, a lone survivor moves alone.
#[allow(clippy::too_many_arguments)]
pub fn coupled_step<T: Real, R: rand::Rng + ?Sized>(
    pair: &mut CoupledPair<T>,
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    t: T,
    dt: T,
    params: &CouplingParams<T>,
    bridge_correction: bool,
    rng: &mut R,
) -> Result<()> {
    PairStepper::new(model, domain, *params, bridge_correction)?.step(pair, t, dt, rng)
}

fn check_pair_start<T: Real>(domain: &Domain<T>, y1: &[T], y2: &[T], s: T, t: T) -> Result<()> {
    domain.check_dim(y1)?;
    domain.check_dim(y2)?;
    for (index, y) in [y1, y2].into_iter().enumerate() {
        if !domain.contains_point(y) {
            return Err(Error::PointOutsideDomain { index });
        }
    }
    if t < s {
        return Err(Error::InvalidParameter("end time precedes start time".into()));
    }
    Ok(())
}

/// Final states of `replicas` independent pairs started at `(y1, y2)` at
/// time `s`, in replica order. With `stop_early`, each pair stops once
/// coupled or fully dead (statuses then reflect the stopping time).
#[allow(clippy::too_many_arguments)]
pub fn simulate_pairs<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    y1: &[T],
    y2: &[T],
    s: T,
    t: T,
    replicas: usize,
    params: &CouplingParams<T>,
    sim: &SimParams<T>,
    stop_early: bool,
) -> Result<Vec<CoupledPair<T>>> {
    sim.validate()?;
    check_pair_start(domain, y1, y2, s, t)?;
    PairStepper::new(model, domain, *params, sim.bridge_correction)?;
    (0..replicas)
        .into_par_iter()
        .map_init(
            || PairStepper::new(model, domain, *params, sim.bridge_correction).expect("checked above"),
            |ps, i| {
                let mut r = rng::substream(sim.seed, StreamKind::Coupling, &[i as u64]);
                let mut pair = CoupledPair::new(y1.to_vec(), y2.to_vec(), s, params.epsilon_couple, &mut r);
                ps.run(&mut pair, s, t, sim.dt, stop_early, &mut r)?;
                Ok(pair)
            },
        )
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FailureEstimate {
    pub p_fail: f64,
    pub stderr: f64,
    pub replicas: usize,
    pub separation: f64,
}

/// Probability that some coordinate is alive at `t` while the pair has not
/// coupled before `t` or before both coordinates died.
#[allow(clippy::too_many_arguments)]
pub fn estimate_coupling_failure<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    y1: &[T],
    y2: &[T],
    s: T,
    t: T,
    replicas: usize,
    params: &CouplingParams<T>,
    sim: &SimParams<T>,
) -> Result<FailureEstimate> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    let pairs = simulate_pairs(model, domain, y1, y2, s, t, replicas, params, sim, true)?;
    let failures = pairs.iter().filter(|p| !p.coupled && p.any_alive()).count();
    let n = replicas as f64;
    let p = failures as f64 / n;
    Ok(FailureEstimate {
        p_fail: p,
        stderr: (p * (1.0 - p) / n).sqrt(),
        replicas,
        separation: distance(y1, y2).as_f64(),
    })
}

/// Survival probability at `t` of each coordinate of the pair.
#[allow(clippy::too_many_arguments)]
pub fn estimate_marginal_survival<T: Real>(
    model: &TimePeriodicModel<T>,
    domain: &Domain<T>,
    y1: &[T],
    y2: &[T],
    s: T,
    t: T,
    replicas: usize,
    params: &CouplingParams<T>,
    sim: &SimParams<T>,
) -> Result<[SurvivalEstimate; 2]> {
    if replicas == 0 {
        return Err(Error::InvalidParameter("replicas must be positive".into()));
    }
    let pairs = simulate_pairs(model, domain, y1, y2, s, t, replicas, params, sim, false)?;
    let n = replicas as f64;
    let est = |k: usize| {
        let p = pairs.iter().filter(|q| q.status[k].is_alive()).count() as f64 / n;
        SurvivalEstimate { p_hat: p, stderr: (p * (1.0 - p) / n).sqrt(), replicas, dt: sim.dt.as_f64(), seed: sim.seed }
    };
    Ok([est(0), est(1)])
}
