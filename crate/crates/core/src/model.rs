//! Time-periodic coefficient sets `(b, σ, κ)` for
//! `dZ = σ(t, Z) dB + b(t, Z) dt`, killed at rate κ and on ∂D.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::linalg::{min_singular_value, SquareMatrix};
use crate::rng::{self, StreamKind};
use crate::scalar::{distance, Real};

/// Coefficient functions. `diffusion_into` writes σ(t, x) row-major.
pub trait Coefficients<T: Real>: Send + Sync + fmt::Debug {
    fn drift_into(&self, t: T, x: &[T], out: &mut [T]);
    fn diffusion_into(&self, t: T, x: &[T], out: &mut [T]);
    fn kill_rate(&self, _t: T, _x: &[T]) -> T {
        T::zero()
    }
}

/// Constants the model claims to satisfy; the validators audit them.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DeclaredConstants<T> {
    /// Lipschitz constant of (σ, b) in space.
    pub k0: T,
    /// Ellipticity: `c0 |y| ≤ |σ(t, x) y|`.
    pub c0: T,
    pub kappa_max: T,
}

#[derive(Clone, Debug)]
pub struct TimePeriodicModel<T: Real> {
    name: String,
    description: String,
    dim: usize,
    period: T,
    declared: DeclaredConstants<T>,
    coefficients: Arc<dyn Coefficients<T>>,
}

/// One evaluation of the coefficients.
#[derive(Clone, Debug, PartialEq)]
pub struct Eval<T> {
    pub drift: Vec<T>,
    pub diffusion: SquareMatrix<T>,
    pub rate: T,
}

impl<T: Real> TimePeriodicModel<T> {
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        period: T,
        declared: DeclaredConstants<T>,
        coefficients: Arc<dyn Coefficients<T>>,
    ) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidModel("dimension must be positive".into()));
        }
        if !(period > T::zero()) || !period.is_finite() {
            return Err(Error::InvalidModel("period must be positive".into()));
        }
        if !(declared.c0 > T::zero()) {
            return Err(Error::InvalidModel("declared c0 must be positive".into()));
        }
        if declared.kappa_max < T::zero() || declared.k0 < T::zero() {
            return Err(Error::InvalidModel("declared k0 and kappa_max must be non-negative".into()));
        }
        Ok(Self {
            name: name.into(),
            description: String::new(),
            dim,
            period,
            declared,
            coefficients,
        })
    }

    pub fn with_description(mut self, text: impl Into<String>) -> Self {
        self.description = text.into();
        self
    }

    /// Replaces the declared constants, keeping the usual positivity checks.
    pub fn with_declared(self, declared: DeclaredConstants<T>) -> Result<Self> {
        let Self { name, description, dim, period, coefficients, .. } = self;
        Ok(Self::new(name, dim, period, declared, coefficients)?.with_description(description))
    }

    /// Adds a constant soft-kill rate `c` on top of the existing κ.
    pub fn with_constant_kill(&self, c: T) -> Result<Self> {
        if c < T::zero() {
            return Err(Error::InvalidParameter("kill rate must be non-negative".into()));
        }
        let coefficients = Arc::new(SoftKill {
            inner: self.coefficients.clone(),
            rate: c,
            profile: KillProfile::Constant,
        });
        let declared = DeclaredConstants { kappa_max: self.declared.kappa_max + c, ..self.declared };
        Ok(Self::new(format!("{}+kill({c})", self.name), self.dim, self.period, declared, coefficients)?
            .with_description(self.description.clone()))
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn description(&self) -> &str {
        &self.description
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn period(&self) -> T {
        self.period
    }

    pub fn declared(&self) -> DeclaredConstants<T> {
        self.declared
    }

    #[inline]
    pub fn drift_into(&self, t: T, x: &[T], out: &mut [T]) {
        self.coefficients.drift_into(t, x, out)
    }

    #[inline]
    pub fn diffusion_into(&self, t: T, x: &[T], out: &mut [T]) {
        self.coefficients.diffusion_into(t, x, out)
    }

    #[inline]
    pub fn kill_rate(&self, t: T, x: &[T]) -> T {
        self.coefficients.kill_rate(t, x)
    }

    pub fn eval(&self, t: T, x: &[T]) -> Result<Eval<T>> {
        if x.len() != self.dim {
            return Err(Error::DimensionMismatch { expected: self.dim, got: x.len() });
        }
        let d = self.dim;
        let mut drift = vec![T::zero(); d];
        let mut sigma = vec![T::zero(); d * d];
        self.drift_into(t, x, &mut drift);
        self.diffusion_into(t, x, &mut sigma);
        let rate = self.kill_rate(t, x);
        let t64 = t.as_f64();
        if drift.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "drift", t: t64 });
        }
        if sigma.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite { what: "diffusion", t: t64 });
        }
        if !rate.is_finite() || rate < T::zero() {
            return Err(Error::NonFinite { what: "kill rate", t: t64 });
        }
        Ok(Eval { drift, diffusion: SquareMatrix::from_row_major(d, sigma), rate })
    }

    /// `σσᵀ(t, x)`
    pub fn diffusivity(&self, t: T, x: &[T]) -> SquareMatrix<T> {
        let d = self.dim;
        let mut sigma = vec![T::zero(); d * d];
        self.diffusion_into(t, x, &mut sigma);
        SquareMatrix::from_row_major(d, sigma).gram()
    }
}

// ---------------------------------------------------------------------------
// Library coefficient sets

fn fill_scaled_identity<T: Real>(out: &mut [T], d: usize, s: T) {
    out.iter_mut().for_each(|v| *v = T::zero());
    for i in 0..d {
        out[i * d + i] = s;
    }
}

/// Standard Brownian motion.
#[derive(Debug, Clone)]
pub struct Brownian {
    pub dim: usize,
}

impl<T: Real> Coefficients<T> for Brownian {
    fn drift_into(&self, _t: T, _x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }

    fn diffusion_into(&self, _t: T, _x: &[T], out: &mut [T]) {
        fill_scaled_identity(out, self.dim, T::one());
    }
}

/// Shape of a soft-kill rate in time.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum KillProfile<T> {
    Constant,
    /// `c (1 + cos(2πt/Π)) / 2`
    Periodic { period: T },
}

/// Adds a space-constant kill rate to another coefficient set.
#[derive(Debug, Clone)]
pub struct SoftKill<T: Real> {
    pub inner: Arc<dyn Coefficients<T>>,
    pub rate: T,
    pub profile: KillProfile<T>,
}

impl<T: Real> Coefficients<T> for SoftKill<T> {
    fn drift_into(&self, t: T, x: &[T], out: &mut [T]) {
        self.inner.drift_into(t, x, out)
    }

    fn diffusion_into(&self, t: T, x: &[T], out: &mut [T]) {
        self.inner.diffusion_into(t, x, out)
    }

    fn kill_rate(&self, t: T, x: &[T]) -> T {
        let extra = match self.profile {
            KillProfile::Constant => self.rate,
            KillProfile::Periodic { period } => {
                self.rate * (T::one() + (T::TAU() * t / period).cos()) * T::lit(0.5)
            }
        };
        self.inner.kill_rate(t, x) + extra
    }
}

/// `σ(x) = (1 + h(x) φ_D(x)) I`, `b = 0`. With `h ≡ 1` the diffusion grows
/// towards the center; the bounded-`h` variant is only Lipschitz in space.
#[derive(Debug, Clone)]
pub struct PhiScaledDiffusion<T: Real> {
    pub domain: Arc<Domain<T>>,
    pub h: PhiWeight,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum PhiWeight {
    One,
    /// `h(x) = (1 + sin x₁) / 4 ∈ [0, 1/2]`
    HalfSine,
}

impl PhiWeight {
    fn eval<T: Real>(self, x: &[T]) -> T {
        match self {
            PhiWeight::One => T::one(),
            PhiWeight::HalfSine => (T::one() + x[0].sin()) * T::lit(0.25),
        }
    }
}

impl<T: Real> Coefficients<T> for PhiScaledDiffusion<T> {
    fn drift_into(&self, _t: T, _x: &[T], out: &mut [T]) {
        out.iter_mut().for_each(|v| *v = T::zero());
    }

    fn diffusion_into(&self, _t: T, x: &[T], out: &mut [T]) {
        // φ_D vanishes outside D, giving σ = I there.
        let s = T::one() + self.h.eval(x) * self.domain.phi(x);
        fill_scaled_identity(out, x.len(), s);
    }
}

/// `b(x) = φ_D(x) (x − c)`, `σ = I`, with `c` the domain center.
#[derive(Debug, Clone)]
pub struct PhiRadialDrift<T: Real> {
    pub domain: Arc<Domain<T>>,
    pub center: Vec<T>,
}

impl<T: Real> Coefficients<T> for PhiRadialDrift<T> {
    fn drift_into(&self, _t: T, x: &[T], out: &mut [T]) {
        let phi = self.domain.phi(x);
        for ((o, &xi), &ci) in out.iter_mut().zip(x).zip(&self.center) {
            *o = phi * (xi - ci);
        }
    }

    fn diffusion_into(&self, _t: T, x: &[T], out: &mut [T]) {
        fill_scaled_identity(out, x.len(), T::one());
    }
}

/// Space-constant drift `b(t) = r (cos 2πt/Π, sin 2πt/Π, 0, …)`, `σ = I`.
#[derive(Debug, Clone)]
pub struct RotatingDrift<T> {
    pub amplitude: T,
    pub period: T,
}

impl<T: Real> Coefficients<T> for RotatingDrift<T> {
    fn drift_into(&self, t: T, _x: &[T], out: &mut [T]) {
        let phase = T::TAU() * t / self.period;
        out.iter_mut().for_each(|v| *v = T::zero());
        out[0] = self.amplitude * phase.cos();
        if out.len() > 1 {
            out[1] = self.amplitude * phase.sin();
        }
    }

    fn diffusion_into(&self, _t: T, x: &[T], out: &mut [T]) {
        fill_scaled_identity(out, x.len(), T::one());
    }
}

// ---------------------------------------------------------------------------
// Registry

/// Builder parameter value.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParamValue {
    Number(f64),
    Text(String),
    List(Vec<f64>),
}

pub type ModelParams = BTreeMap<String, ParamValue>;

fn number_param<T: Real>(params: &ModelParams, key: &str, default: f64) -> Result<T> {
    match params.get(key) {
        None => Ok(T::lit(default)),
        Some(ParamValue::Number(v)) if v.is_finite() => Ok(T::lit(*v)),
        Some(other) => Err(Error::InvalidParameter(format!("`{key}` must be a finite number, got {other:?}"))),
    }
}

fn text_param<'a>(params: &'a ModelParams, key: &str, default: &'a str) -> Result<&'a str> {
    match params.get(key) {
        None => Ok(default),
        Some(ParamValue::Text(s)) => Ok(s),
        Some(other) => Err(Error::InvalidParameter(format!("`{key}` must be a string, got {other:?}"))),
    }
}

pub type Builder<T> = fn(&ModelParams, &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>>;

/// A named model constructor.
#[derive(Clone)]
pub struct ModelLibraryEntry<T: Real> {
    pub name: &'static str,
    /// Where the model comes from and which constants it declares.
    pub description: &'static str,
    /// The domain the entry is stated for, or `None` for any domain.
    pub pairs_with: Option<&'static str>,
    pub builder: Builder<T>,
}

impl<T: Real> fmt::Debug for ModelLibraryEntry<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("ModelLibraryEntry").field("name", &self.name).finish()
    }
}

#[derive(Clone, Debug)]
pub struct ModelRegistry<T: Real> {
    entries: Vec<ModelLibraryEntry<T>>,
}

impl<T: Real> Default for ModelRegistry<T> {
    fn default() -> Self {
        Self::with_library()
    }
}

const PERIOD_DEFAULT: f64 = 1.0;

fn build_brownian<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period = number_param(params, "period", PERIOD_DEFAULT)?;
    let d = domain.dim();
    // σ = I: c0 = 1, k0 = 0.
    TimePeriodicModel::new(
        "brownian",
        d,
        period,
        DeclaredConstants { k0: T::zero(), c0: T::one(), kappa_max: T::zero() },
        Arc::new(Brownian { dim: d }),
    )
}

fn build_brownian_softkill<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period: T = number_param(params, "period", PERIOD_DEFAULT)?;
    let rate: T = number_param(params, "rate", 1.0)?;
    if rate < T::zero() {
        return Err(Error::InvalidParameter("rate must be non-negative".into()));
    }
    let profile = match text_param(params, "variant", "constant")? {
        "constant" => KillProfile::Constant,
        "periodic" => KillProfile::Periodic { period },
        other => return Err(Error::InvalidParameter(format!("unknown soft-kill variant `{other}`"))),
    };
    let d = domain.dim();
    // κ ≤ rate for both profiles.
    TimePeriodicModel::new(
        "brownian_softkill",
        d,
        period,
        DeclaredConstants { k0: T::zero(), c0: T::one(), kappa_max: rate },
        Arc::new(SoftKill { inner: Arc::new(Brownian { dim: d }), rate, profile }),
    )
}

fn build_remark1_1<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period = number_param(params, "period", PERIOD_DEFAULT)?;
    let d = domain.dim();
    // σ(x) − σ(y) = (φ(x) − φ(y)) I, Frobenius norm ≤ √d |x − y|; σ ≥ I.
    TimePeriodicModel::new(
        "remark1_1",
        d,
        period,
        DeclaredConstants { k0: T::from_count(d).sqrt(), c0: T::one(), kappa_max: T::zero() },
        Arc::new(PhiScaledDiffusion { domain: domain.clone(), h: PhiWeight::One }),
    )
}

fn build_remark1_2<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period = number_param(params, "period", PERIOD_DEFAULT)?;
    let d = domain.dim();
    // Jacobian of φ(x)(x − c) is φ I + (x − c)∇φᵀ: norm ≤ φ + |x − c|
    // ≤ inradius + diameter / 2.
    let k0 = domain.inradius() + domain.diameter() * T::lit(0.5);
    TimePeriodicModel::new(
        "remark1_2",
        d,
        period,
        DeclaredConstants { k0, c0: T::one(), kappa_max: T::zero() },
        Arc::new(PhiRadialDrift { domain: domain.clone(), center: domain.center() }),
    )
}

fn build_remark1_3<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period: T = number_param(params, "period", PERIOD_DEFAULT)?;
    let amplitude: T = number_param(params, "amplitude", 0.5)?;
    let d = domain.dim();
    // Drift constant in space: k0 = 0.
    TimePeriodicModel::new(
        "remark1_3",
        d,
        period,
        DeclaredConstants { k0: T::zero(), c0: T::one(), kappa_max: T::zero() },
        Arc::new(RotatingDrift { amplitude, period }),
    )
}

fn build_remark1_4<T: Real>(params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
    let period = number_param(params, "period", PERIOD_DEFAULT)?;
    let d = domain.dim();
    // |∇(hφ)| ≤ |∇h| φ + h |∇φ| ≤ inradius/4 + 1/2; Frobenius adds √d.
    let k0 = T::from_count(d).sqrt() * (domain.inradius() * T::lit(0.25) + T::lit(0.5));
    TimePeriodicModel::new(
        "remark1_4",
        d,
        period,
        DeclaredConstants { k0, c0: T::one(), kappa_max: T::zero() },
        Arc::new(PhiScaledDiffusion { domain: domain.clone(), h: PhiWeight::HalfSine }),
    )
}

impl<T: Real> ModelRegistry<T> {
    pub fn empty() -> Self {
        Self { entries: Vec::new() }
    }

    pub fn with_library() -> Self {
        let mut r = Self::empty();
        r.register(ModelLibraryEntry {
            name: "brownian",
            description: "standard Brownian motion: b = 0, sigma = I, kappa = 0. Declared k0 = 0, c0 = 1, kappa_max = 0.",
            pairs_with: None,
            builder: build_brownian,
        });
        r.register(ModelLibraryEntry {
            name: "brownian_softkill",
            description: "Brownian motion with a space-constant soft-kill rate; params rate (default 1), \
                          variant = \"constant\" (kappa = rate) or \"periodic\" (kappa = rate (1 + cos 2 pi t / period) / 2). \
                          Declared k0 = 0, c0 = 1, kappa_max = rate.",
            pairs_with: None,
            builder: build_brownian_softkill,
        });
        r.register(ModelLibraryEntry {
            name: "remark1_1",
            description: "example 1 of the model class: unit ball, b = 0, sigma(x) = (1 + phi_D(x)) I, \
                          larger variance towards the center, not C1 in the whole domain. Declared k0 = sqrt(d), c0 = 1.",
            pairs_with: Some("unit ball"),
            builder: build_remark1_1,
        });
        r.register(ModelLibraryEntry {
            name: "remark1_2",
            description: "example 2 of the model class: unit disc of R^2, sigma = I, b(x) = phi_D(x) (x - center), \
                          a drift that is not C1 in the domain. Declared k0 = inradius + diameter / 2 (2 on the unit disc), c0 = 1.",
            pairs_with: Some("unit disc"),
            builder: build_remark1_2,
        });
        r.register(ModelLibraryEntry {
            name: "remark1_3",
            description: "example 3 of the model class: unit disc, sigma = I, time-periodic drift \
                          b(t) = amplitude (cos 2 pi t / period, sin 2 pi t / period). Declared k0 = 0, c0 = 1.",
            pairs_with: Some("unit disc"),
            builder: build_remark1_3,
        });
        r.register(ModelLibraryEntry {
            name: "remark1_4",
            description: "example 4 of the model class: unit ball, b = 0, sigma(x) = (1 + h(x) phi_D(x)) I with \
                          h(x) = (1 + sin x_1) / 4 in [0, 1/2], a diffusion that is only Lipschitz. \
                          Declared k0 = sqrt(d) (inradius / 4 + 1/2), c0 = 1.",
            pairs_with: Some("unit ball"),
            builder: build_remark1_4,
        });
        r
    }

    /// Adds or replaces an entry.
    pub fn register(&mut self, entry: ModelLibraryEntry<T>) {
        self.entries.retain(|e| e.name != entry.name);
        self.entries.push(entry);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.entries.iter().map(|e| e.name)
    }

    pub fn entries(&self) -> &[ModelLibraryEntry<T>] {
        &self.entries
    }

    pub fn get(&self, name: &str) -> Result<&ModelLibraryEntry<T>> {
        self.entries
            .iter()
            .find(|e| e.name == name)
            .ok_or_else(|| Error::UnknownModel(name.to_string()))
    }

    pub fn describe(&self, name: &str) -> Result<String> {
        let e = self.get(name)?;
        let pairing = e.pairs_with.unwrap_or("any bounded domain");
        Ok(format!("{}: {} [domain: {}]", e.name, e.description, pairing))
    }

    pub fn build(&self, name: &str, params: &ModelParams, domain: &Arc<Domain<T>>) -> Result<TimePeriodicModel<T>> {
        let e = self.get(name)?;
        Ok((e.builder)(params, domain)?.with_description(e.description))
    }
}

// ---------------------------------------------------------------------------
// Validators

/// Samples a time in `[0, Π)` and a point of D from one substream.
fn sample_time_point<T: Real, R: rand::Rng>(model: &TimePeriodicModel<T>, domain: &Domain<T>, rng: &mut R) -> (T, Vec<T>) {
    let t = model.period() * rng::uniform::<T, _>(rng);
    (t, domain.sample_uniform(rng))
}

fn coefficient_gap<T: Real>(model: &TimePeriodicModel<T>, t1: T, x1: &[T], t2: T, x2: &[T], scratch: &mut [Vec<T>; 4]) -> (T, T, T) {
    let [b1, b2, s1, s2] = scratch;
    model.drift_into(t1, x1, b1);
    model.drift_into(t2, x2, b2);
    model.diffusion_into(t1, x1, s1);
    model.diffusion_into(t2, x2, s2);
    let sigma_gap = s1.iter().zip(s2.iter()).map(|(&a, &b)| (a - b) * (a - b)).sum::<T>().sqrt();
    let drift_gap = distance(b1, b2);
    let rate_gap = (model.kill_rate(t1, x1) - model.kill_rate(t2, x2)).abs();
    (sigma_gap, drift_gap, rate_gap)
}

fn scratch<T: Real>(d: usize) -> [Vec<T>; 4] {
    [vec![T::zero(); d], vec![T::zero(); d], vec![T::zero(); d * d], vec![T::zero(); d * d]]
}

/// Max over sampled (t, x) of `‖σ(t+Π,x) − σ(t,x)‖_F + |b(t+Π,x) − b(t,x)| + |κ(t+Π,x) − κ(t,x)|`.
pub fn check_periodicity<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, n_time: usize, n_space: usize, seed: u64) -> T {
    let mut rng = rng::substream(seed, StreamKind::Validator, &[1]);
    let mut buf = scratch(model.dim());
    let xs: Vec<Vec<T>> = (0..n_space.max(1)).map(|_| domain.sample_uniform(&mut rng)).collect();
    let mut worst = T::zero();
    for _ in 0..n_time.max(1) {
        let t = model.period() * T::lit(4.0) * rng::uniform::<T, _>(&mut rng);
        for x in &xs {
            let (s, b, k) = coefficient_gap(model, t + model.period(), x, t, x, &mut buf);
            worst = worst.max(s + b + k);
        }
    }
    worst
}

/// Min over sampled (t, x) of the smallest singular value of σ(t, x).
pub fn check_ellipticity<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> T {
    let mut rng = rng::substream(seed, StreamKind::Validator, &[2]);
    let d = model.dim();
    let mut sigma = vec![T::zero(); d * d];
    let mut worst = T::infinity();
    for _ in 0..samples.max(1) {
        let (t, x) = sample_time_point(model, domain, &mut rng);
        model.diffusion_into(t, &x, &mut sigma);
        worst = worst.min(min_singular_value(&SquareMatrix::from_row_major(d, sigma.clone())));
    }
    worst
}

/// Sampled lower bound on the spatial Lipschitz constant of (σ, b). Half the
/// pairs are uniform, half are local (separation ≤ 1% of the diameter).
pub fn estimate_lipschitz<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> T {
    let mut rng = rng::substream(seed, StreamKind::Validator, &[3]);
    let mut buf = scratch(model.dim());
    let local = domain.diameter() * T::lit(0.01);
    let mut worst = T::zero();
    for k in 0..samples.max(1) {
        let (t, x) = sample_time_point(model, domain, &mut rng);
        let y = if k % 2 == 0 {
            domain.sample_uniform(&mut rng)
        } else {
            loop {
                let y: Vec<T> = x
                    .iter()
                    .map(|&xi| xi + local * (T::lit(2.0) * rng::uniform::<T, _>(&mut rng) - T::one()))
                    .collect();
                if domain.contains_point(&y) {
                    break y;
                }
            }
        };
        let r = distance(&x, &y);
        if r <= T::zero() {
            continue;
        }
        let (s, b, _) = coefficient_gap(model, t, &x, t, &y, &mut buf);
        worst = worst.max((s + b) / r);
    }
    worst
}

/// `(min, max)` of κ over sampled (t, x).
pub fn kill_rate_range<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> (T, T) {
    let mut rng = rng::substream(seed, StreamKind::Validator, &[4]);
    let mut lo = T::infinity();
    let mut hi = T::neg_infinity();
    for _ in 0..samples.max(1) {
        let (t, x) = sample_time_point(model, domain, &mut rng);
        let k = model.kill_rate(t, &x);
        lo = lo.min(k);
        hi = hi.max(k);
    }
    (lo, hi)
}

pub const PERIODICITY_TOLERANCE: f64 = 1e-12;
pub const ELLIPTICITY_SLACK: f64 = 1e-9;

#[derive(Clone, Debug, Serialize)]
pub struct ValidationReport {
    pub model: String,
    pub samples: usize,
    pub periodicity_deviation: f64,
    pub min_singular_value: f64,
    pub lipschitz_estimate: f64,
    pub kill_rate_min: f64,
    pub kill_rate_max: f64,
    pub declared_k0: f64,
    pub declared_c0: f64,
    pub declared_kappa_max: f64,
    pub smooth_boundary: bool,
    /// Hard failures: periodicity, ellipticity or κ bounds violated.
    pub failures: Vec<String>,
    /// Soft findings, e.g. a sampled Lipschitz ratio above the declared k0.
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn passed(&self) -> bool {
        self.failures.is_empty()
    }
}

/// Runs every validator with `samples` draws each.
pub fn validate<T: Real>(model: &TimePeriodicModel<T>, domain: &Domain<T>, samples: usize, seed: u64) -> ValidationReport {
    let n_time = (samples as f64).sqrt().ceil() as usize;
    let n_space = samples.div_ceil(n_time.max(1));
    let per = check_periodicity(model, domain, n_time, n_space, seed).as_f64();
    let ell = check_ellipticity(model, domain, samples, seed).as_f64();
    let lip = estimate_lipschitz(model, domain, samples, seed).as_f64();
    let (kmin, kmax) = kill_rate_range(model, domain, samples, seed);
    let (kmin, kmax) = (kmin.as_f64(), kmax.as_f64());
    let decl = model.declared();
    let (k0, c0, kappa_max) = (decl.k0.as_f64(), decl.c0.as_f64(), decl.kappa_max.as_f64());

    let mut failures = Vec::new();
    let mut warnings = Vec::new();
    // f32 models cannot reach the f64 tolerance; scale by the type's epsilon.
    let per_tol = PERIODICITY_TOLERANCE.max(T::epsilon().as_f64() * 64.0);
    if per > per_tol {
        failures.push(format!("periodicity deviation {per:e} exceeds {per_tol:e}"));
    }
    if ell < c0 - ELLIPTICITY_SLACK.max(T::epsilon().as_f64() * 16.0) {
        failures.push(format!("min singular value {ell} below declared c0 = {c0}"));
    }
    if kmin < 0.0 || kmax > kappa_max + 1e-12 {
        failures.push(format!("kill rate range [{kmin}, {kmax}] outside [0, {kappa_max}]"));
    }
    if lip > k0 * (1.0 + 1e-9) + 1e-12 {
        warnings.push(format!("sampled Lipschitz ratio {lip} exceeds declared k0 = {k0}"));
    }
    if !domain.has_smooth_boundary() {
        warnings.push("domain boundary is not C2; results fall outside the stated assumptions".into());
    }
    ValidationReport {
        model: model.name().to_string(),
        samples,
        periodicity_deviation: per,
        min_singular_value: ell,
        lipschitz_estimate: lip,
        kill_rate_min: kmin,
        kill_rate_max: kmax,
        declared_k0: k0,
        declared_c0: c0,
        declared_kappa_max: kappa_max,
        smooth_boundary: domain.has_smooth_boundary(),
        failures,
        warnings,
    }
}
