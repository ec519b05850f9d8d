//! Bounded domains, the distance-to-boundary function and the
//! Brownian-bridge crossing correction used for hard killing between grid
//! times.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::gram_quadratic_form;
use crate::model::TimePeriodicModel;
use crate::rng;
use crate::scalar::{distance, norm, Real};

/// Shape descriptor, as it appears in scenario files:
/// `{ type = "ball", center = [0.0, 0.0], radius = 1.0 }`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Shape<T> {
    Interval { lower: T, upper: T },
    Ball { center: Vec<T>, radius: T },
    Ellipsoid { center: Vec<T>, semi_axes: Vec<T> },
    #[serde(alias = "box")]
    AxisBox { lower: Vec<T>, upper: Vec<T> },
}

/// A bounded open set `D ⊂ ℝᵈ`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Shape<T>", into = "Shape<T>")]
#[serde(bound(
    serialize = "T: Real + Serialize",
    deserialize = "T: Real + Deserialize<'de>"
))]
pub struct Domain<T: Real> {
    shape: Shape<T>,
}

impl<T: Real> TryFrom<Shape<T>> for Domain<T> {
    type Error = Error;

    fn try_from(shape: Shape<T>) -> Result<Self> {
        Domain::new(shape)
    }
}

impl<T: Real> From<Domain<T>> for Shape<T> {
    fn from(d: Domain<T>) -> Self {
        d.shape
    }
}

fn check_finite<T: Real>(vals: &[T]) -> Result<()> {
    if vals.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(Error::InvalidDomain("non-finite coordinate".into()))
    }
}

impl<T: Real> Domain<T> {
    pub fn new(shape: Shape<T>) -> Result<Self> {
        match &shape {
            Shape::Interval { lower, upper } => {
                check_finite(&[*lower, *upper])?;
                if !(lower < upper) {
                    return Err(Error::InvalidDomain("interval needs lower < upper".into()));
                }
            }
            Shape::Ball { center, radius } => {
                check_finite(center)?;
                check_finite(&[*radius])?;
                if center.is_empty() {
                    return Err(Error::InvalidDomain("ball center is empty".into()));
                }
                if *radius <= T::zero() {
                    return Err(Error::InvalidDomain("ball radius must be positive".into()));
                }
            }
            Shape::Ellipsoid { center, semi_axes } => {
                check_finite(center)?;
                check_finite(semi_axes)?;
                if center.is_empty() || center.len() != semi_axes.len() {
                    return Err(Error::InvalidDomain("ellipsoid center and semi_axes must share a positive length".into()));
                }
                if semi_axes.iter().any(|&a| a <= T::zero()) {
                    return Err(Error::InvalidDomain("ellipsoid semi-axes must be positive".into()));
                }
            }
            Shape::AxisBox { lower, upper } => {
                check_finite(lower)?;
                check_finite(upper)?;
                if lower.is_empty() || lower.len() != upper.len() {
                    return Err(Error::InvalidDomain("box bounds must share a positive length".into()));
                }
                if lower.iter().zip(upper).any(|(l, u)| !(l < u)) {
                    return Err(Error::InvalidDomain("box needs lower < upper on every axis".into()));
                }
            }
        }
        Ok(Self { shape })
    }

    pub fn interval(lower: T, upper: T) -> Result<Self> {
        Self::new(Shape::Interval { lower, upper })
    }

    pub fn ball(center: Vec<T>, radius: T) -> Result<Self> {
        Self::new(Shape::Ball { center, radius })
    }

    pub fn unit_ball(dim: usize) -> Self {
        Self::ball(vec![T::zero(); dim], T::one()).expect("unit ball is valid")
    }

    pub fn ellipsoid(center: Vec<T>, semi_axes: Vec<T>) -> Result<Self> {
        Self::new(Shape::Ellipsoid { center, semi_axes })
    }

    pub fn axis_box(lower: Vec<T>, upper: Vec<T>) -> Result<Self> {
        Self::new(Shape::AxisBox { lower, upper })
    }

    pub fn shape(&self) -> &Shape<T> {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        match &self.shape {
            Shape::Interval { .. } => 1,
            Shape::Ball { center, .. } => center.len(),
            Shape::Ellipsoid { center, .. } => center.len(),
            Shape::AxisBox { lower, .. } => lower.len(),
        }
    }

    /// False for boxes: their boundary is not C², so runs on them sit
    /// outside the assumptions the convergence results are stated under.
    pub fn has_smooth_boundary(&self) -> bool {
        !matches!(self.shape, Shape::AxisBox { .. })
    }

    pub fn check_dim(&self, x: &[T]) -> Result<()> {
        if x.len() == self.dim() {
            Ok(())
        } else {
            Err(Error::DimensionMismatch { expected: self.dim(), got: x.len() })
        }
    }

    pub fn contains(&self, x: &[T]) -> Result<bool> {
        self.check_dim(x)?;
        Ok(self.contains_point(x))
    }

    /// Membership without the dimension check.
    pub fn contains_point(&self, x: &[T]) -> bool {
        match &self.shape {
            Shape::Interval { lower, upper } => *lower < x[0] && x[0] < *upper,
            Shape::Ball { center, radius } => {
                // Decided through the distance so that membership and
                // `phi > 0` agree bit for bit.
                distance(x, center) < *radius
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let q: T = x
                    .iter()
                    .zip(center)
                    .zip(semi_axes)
                    .map(|((&xi, &ci), &ai)| {
                        let r = (xi - ci) / ai;
                        r * r
                    })
                    .sum();
                q < T::one() && self.phi(x) > T::zero()
            }
            Shape::AxisBox { lower, upper } => x
                .iter()
                .zip(lower.iter().zip(upper))
                .all(|(&xi, (&l, &u))| l < xi && xi < u),
        }
    }

    /// Euclidean distance to the boundary for interior points, 0 outside.
    pub fn phi(&self, x: &[T]) -> T {
        self.signed_distance(x).max(T::zero())
    }

    /// Positive inside, negative outside, magnitude = distance to ∂D.
    pub fn signed_distance(&self, x: &[T]) -> T {
        debug_assert_eq!(x.len(), self.dim());
        match &self.shape {
            Shape::Interval { lower, upper } => (x[0] - *lower).min(*upper - x[0]),
            Shape::Ball { center, radius } => *radius - distance(x, center),
            Shape::Ellipsoid { center, semi_axes } => {
                let rel: Vec<T> = x.iter().zip(center).map(|(&a, &c)| a - c).collect();
                let proj = project_onto_ellipsoid(&rel, semi_axes);
                if proj.inside {
                    proj.distance
                } else {
                    -proj.distance
                }
            }
            Shape::AxisBox { lower, upper } => {
                let inside = x
                    .iter()
                    .zip(lower.iter().zip(upper))
                    .all(|(&xi, (&l, &u))| l < xi && xi < u);
                if inside {
                    x.iter()
                        .zip(lower.iter().zip(upper))
                        .map(|(&xi, (&l, &u))| (xi - l).min(u - xi))
                        .fold(T::infinity(), T::min)
                } else {
                    -x.iter()
                        .zip(lower.iter().zip(upper))
                        .map(|(&xi, (&l, &u))| {
                            let e = (l - xi).max(xi - u).max(T::zero());
                            e * e
                        })
                        .sum::<T>()
                        .sqrt()
                }
            }
        }
    }

    /// Unit gradient of φ_D (the inward normal of the nearest boundary
    /// point). On the medial set of smooth shapes one of the valid
    /// directions is returned; for boxes, ties between faces are reported as
    /// [`Error::NonSmoothBoundary`].
    pub fn inward_normal(&self, x: &[T]) -> Result<Vec<T>> {
        self.check_dim(x)?;
        let d = self.dim();
        match &self.shape {
            Shape::Interval { lower, upper } => {
                let g = if x[0] - *lower <= *upper - x[0] { T::one() } else { -T::one() };
                Ok(vec![g])
            }
            Shape::Ball { center, .. } => {
                let mut g: Vec<T> = center.iter().zip(x).map(|(&c, &xi)| c - xi).collect();
                let r = norm(&g);
                if r > T::zero() {
                    g.iter_mut().for_each(|v| *v = *v / r);
                } else {
                    g = unit(d, 0);
                }
                Ok(g)
            }
            Shape::Ellipsoid { center, semi_axes } => {
                let rel: Vec<T> = x.iter().zip(center).map(|(&a, &c)| a - c).collect();
                let proj = project_onto_ellipsoid(&rel, semi_axes);
                // Normal to the level set at p is diag(1/a²) p, pointing out.
                let mut g: Vec<T> = proj
                    .point
                    .iter()
                    .zip(semi_axes)
                    .map(|(&p, &a)| -p / (a * a))
                    .collect();
                let r = norm(&g);
                g.iter_mut().for_each(|v| *v = *v / r);
                Ok(g)
            }
            Shape::AxisBox { lower, upper } => {
                let mut best = T::infinity();
                let mut second = T::infinity();
                let mut best_face = (0usize, T::one());
                for (k, (&xi, (&l, &u))) in x.iter().zip(lower.iter().zip(upper)).enumerate() {
                    for (dist, sign) in [(xi - l, T::one()), (u - xi, -T::one())] {
                        if dist < best {
                            second = best;
                            best = dist;
                            best_face = (k, sign);
                        } else if dist < second {
                            second = dist;
                        }
                    }
                }
                let scale = upper
                    .iter()
                    .zip(lower)
                    .map(|(&u, &l)| u - l)
                    .fold(T::zero(), T::max);
                if second - best <= T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) * scale {
                    return Err(Error::NonSmoothBoundary);
                }
                let mut g = vec![T::zero(); d];
                g[best_face.0] = best_face.1;
                Ok(g)
            }
        }
    }

    /// Inward normals of every box face within `tol` of the nearest one.
    fn tied_box_normals(&self, x: &[T], tol: T) -> Vec<Vec<T>> {
        let Shape::AxisBox { lower, upper } = &self.shape else {
            return Vec::new();
        };
        let d = self.dim();
        let phi = self.phi(x);
        let mut out = Vec::new();
        for (k, (&xi, (&l, &u))) in x.iter().zip(lower.iter().zip(upper)).enumerate() {
            for (dist, sign) in [(xi - l, T::one()), (u - xi, -T::one())] {
                if dist - phi <= tol {
                    let mut g = vec![T::zero(); d];
                    g[k] = sign;
                    out.push(g);
                }
            }
        }
        out
    }

    /// `∇φᵀ σσᵀ ∇φ` at (t, x): the diffusivity along the inward normal.
    pub fn normal_diffusivity(&self, model: &TimePeriodicModel<T>, t: T, x: &[T]) -> Result<T> {
        let d = self.dim();
        let mut sigma = vec![T::zero(); d * d];
        model.diffusion_into(t, x, &mut sigma);
        let g = self.inward_normal(x)?;
        Ok(gram_quadratic_form(d, &sigma, &g))
    }

    /// As [`Self::normal_diffusivity`] with `σ(t, x)` already evaluated, and
    /// with the conservative fallback at box edges: the largest diffusivity
    /// over the tied faces, which maximizes the crossing probability.
    pub(crate) fn normal_diffusivity_or_conservative(&self, sigma: &[T], x: &[T]) -> T {
        let d = self.dim();
        match self.inward_normal(x) {
            Ok(g) => gram_quadratic_form(d, sigma, &g),
            Err(_) => {
                let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0));
                self.tied_box_normals(x, tol)
                    .iter()
                    .map(|g| gram_quadratic_form(d, sigma, g))
                    .fold(T::zero(), T::max)
            }
        }
    }

    pub fn bounding_box(&self) -> (Vec<T>, Vec<T>) {
        match &self.shape {
            Shape::Interval { lower, upper } => (vec![*lower], vec![*upper]),
            Shape::Ball { center, radius } => (
                center.iter().map(|&c| c - *radius).collect(),
                center.iter().map(|&c| c + *radius).collect(),
            ),
            Shape::Ellipsoid { center, semi_axes } => (
                center.iter().zip(semi_axes).map(|(&c, &a)| c - a).collect(),
                center.iter().zip(semi_axes).map(|(&c, &a)| c + a).collect(),
            ),
            Shape::AxisBox { lower, upper } => (lower.clone(), upper.clone()),
        }
    }

    /// Largest value of φ_D.
    pub fn inradius(&self) -> T {
        let half = T::lit(0.5);
        match &self.shape {
            Shape::Interval { lower, upper } => (*upper - *lower) * half,
            Shape::Ball { radius, .. } => *radius,
            Shape::Ellipsoid { semi_axes, .. } => semi_axes.iter().copied().fold(T::infinity(), T::min),
            Shape::AxisBox { lower, upper } => lower
                .iter()
                .zip(upper)
                .map(|(&l, &u)| (u - l) * half)
                .fold(T::infinity(), T::min),
        }
    }

    pub fn diameter(&self) -> T {
        match &self.shape {
            Shape::Interval { lower, upper } => *upper - *lower,
            Shape::Ball { radius, .. } => *radius * T::lit(2.0),
            Shape::Ellipsoid { semi_axes, .. } => {
                semi_axes.iter().copied().fold(T::zero(), T::max) * T::lit(2.0)
            }
            Shape::AxisBox { lower, upper } => distance(lower, upper),
        }
    }

    /// A point where φ_D attains its maximum.
    pub fn center(&self) -> Vec<T> {
        let (lo, hi) = self.bounding_box();
        lo.iter().zip(&hi).map(|(&l, &h)| (l + h) * T::lit(0.5)).collect()
    }

    /// Default width of the boundary collar `{φ_D < a}` used by diagnostics.
    pub fn default_collar_width(&self) -> T {
        T::lit(0.1) * self.inradius()
    }

    /// Uniform draw on D by rejection from the bounding box.
    pub fn sample_uniform<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> Vec<T> {
        let (lo, hi) = self.bounding_box();
        loop {
            let x: Vec<T> = lo
                .iter()
                .zip(&hi)
                .map(|(&l, &h)| l + (h - l) * rng::uniform::<T, _>(rng))
                .collect();
            if self.contains_point(&x) {
                return x;
            }
        }
    }
}

fn unit<T: Real>(d: usize, k: usize) -> Vec<T> {
    let mut v = vec![T::zero(); d];
    v[k] = T::one();
    v
}

struct Projection<T> {
    /// Nearest boundary point, relative to the center.
    point: Vec<T>,
    distance: T,
    inside: bool,
}

const ELLIPSOID_MAX_ITER: usize = 100;

/// Closest point of the ellipsoid surface `Σ (pᵢ/aᵢ)² = 1` to `x` (relative
/// coordinates). The minimizer is `pᵢ = aᵢ² xᵢ / (aᵢ² + λ)` where λ is the
/// root of the secular function
/// `F(λ) = Σ (aᵢ xᵢ / (aᵢ² + λ))² − 1`, convex and decreasing on
/// `(−a_min², ∞)`. The root is found by Newton iteration safeguarded by
/// bisection; components with `xᵢ = 0` along the shortest axis are handled by
/// the degenerate branch where λ = −a_min².
fn project_onto_ellipsoid<T: Real>(x: &[T], axes: &[T]) -> Projection<T> {
    let d = x.len();
    let q: T = x.iter().zip(axes).map(|(&xi, &a)| (xi / a) * (xi / a)).sum();
    let inside = q < T::one();
    let a_min = axes.iter().copied().fold(T::infinity(), T::min);
    let a_max = axes.iter().copied().fold(T::zero(), T::max);
    let tol = T::lit(1e-12).max(T::epsilon() * T::lit(8.0)) * a_max * a_max;

    let secular = |lam: T| -> (T, T) {
        let mut f = -T::one();
        let mut df = T::zero();
        for (&xi, &a) in x.iter().zip(axes) {
            if xi == T::zero() {
                continue;
            }
            let den = a * a + lam;
            let r = a * xi / den;
            f = f + r * r;
            df = df - T::lit(2.0) * r * r / den;
        }
        (f, df)
    };

    let finish = |lam: T| -> Projection<T> {
        let point: Vec<T> = x.iter().zip(axes).map(|(&xi, &a)| a * a * xi / (a * a + lam)).collect();
        let distance = distance(&point, x);
        Projection { point, distance, inside }
    };

    if q == T::one() {
        return Projection { point: x.to_vec(), distance: T::zero(), inside: false };
    }

    let (mut lo, mut hi);
    if inside {
        let pole_active = x.iter().zip(axes).any(|(&xi, &a)| a == a_min && xi != T::zero());
        if !pole_active {
            // Degenerate branch: try λ = −a_min² with the free shortest-axis
            // coordinate closing the constraint.
            let mut used = T::zero();
            let mut point = vec![T::zero(); d];
            for i in 0..d {
                if x[i] != T::zero() {
                    let a2 = axes[i] * axes[i];
                    point[i] = a2 * x[i] / (a2 - a_min * a_min);
                    used = used + (point[i] / axes[i]) * (point[i] / axes[i]);
                }
            }
            if used <= T::one() {
                let m = axes.iter().position(|&a| a == a_min).expect("non-empty axes");
                point[m] = a_min * (T::one() - used).sqrt();
                let distance = distance(&point, x);
                return Projection { point, distance, inside };
            }
        }
        lo = -a_min * a_min;
        hi = T::zero();
    } else {
        lo = T::zero();
        hi = x.iter().zip(axes).map(|(&xi, &a)| (a * xi) * (a * xi)).sum::<T>().sqrt();
    }

    let mut lam = if inside { hi } else { lo };
    for _ in 0..ELLIPSOID_MAX_ITER {
        let (f, df) = secular(lam);
        if f > T::zero() {
            lo = lam;
        } else {
            hi = lam;
        }
        let mut next = if df != T::zero() { lam - f / df } else { lo };
        if !(next > lo && next < hi) {
            next = (lo + hi) * T::lit(0.5);
        }
        let done = (next - lam).abs() <= tol || (hi - lo) <= tol;
        lam = next;
        if done {
            break;
        }
    }
    finish(lam)
}

/// Probability that a Brownian bridge from distance `phi0` to `phi1` over
/// `dt`, with variance rate `s2` along the normal, stays off a flat boundary:
/// `1 − exp(−2 φ₀ φ₁ / (s² dt))`.
pub fn bridge_survival_probability<T: Real>(phi0: T, phi1: T, dt: T, s2: T) -> T {
    if phi0 <= T::zero() || phi1 <= T::zero() {
        return T::zero();
    }
    let a = T::lit(2.0) * phi0 * phi1 / (s2 * dt);
    -(-a).exp_m1()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;

    fn shapes() -> Vec<Domain<f64>> {
        vec![
            Domain::interval(0.0, 1.0).unwrap(),
            Domain::unit_ball(2),
            Domain::ball(vec![0.5, -1.0, 2.0], 0.7).unwrap(),
            Domain::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap(),
            Domain::ellipsoid(vec![1.0, 0.0, -1.0], vec![0.5, 1.5, 1.0]).unwrap(),
            Domain::axis_box(vec![0.0, -1.0], vec![2.0, 1.0]).unwrap(),
        ]
    }

    #[test]
    fn contains_examples() {
        let ball = Domain::<f64>::unit_ball(3);
        assert!(ball.contains(&[0.0, 0.0, 0.0]).unwrap());
        assert!(!ball.contains(&[1.0, 0.0, 0.0]).unwrap());
        let iv = Domain::interval(0.0, 1.0).unwrap();
        assert!(iv.contains(&[0.5]).unwrap());
        assert!(!iv.contains(&[0.0]).unwrap());
        assert_eq!(
            ball.contains(&[0.0, 0.0]),
            Err(Error::DimensionMismatch { expected: 3, got: 2 })
        );
    }

    #[test]
    fn phi_examples() {
        assert_eq!(Domain::<f64>::unit_ball(2).phi(&[0.0, 0.0]), 1.0);
        assert_eq!(Domain::interval(0.0, 1.0).unwrap().phi(&[0.25]), 0.25);
        assert_eq!(Domain::interval(0.0, 1.0).unwrap().phi(&[1.5]), 0.0);
        let e = Domain::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_relative_eq!(e.phi(&[0.0, 0.0]), 1.0, epsilon = 1e-12);
    }

    /// Brute-force oracle: minimize |x − y| over a dense parameterization of
    /// the ellipse boundary, refined by golden-section search.
    fn brute_force_ellipse_distance(x: [f64; 2], a: f64, b: f64) -> f64 {
        let dist = |th: f64| ((a * th.cos() - x[0]).powi(2) + (b * th.sin() - x[1]).powi(2)).sqrt();
        let n = 20_000;
        let step = std::f64::consts::TAU / n as f64;
        let (mut best, mut best_th) = (f64::INFINITY, 0.0);
        for k in 0..n {
            let th = k as f64 * step;
            let v = dist(th);
            if v < best {
                best = v;
                best_th = th;
            }
        }
        let (mut lo, mut hi) = (best_th - step, best_th + step);
        let g = (5f64.sqrt() - 1.0) / 2.0;
        for _ in 0..200 {
            let m1 = hi - g * (hi - lo);
            let m2 = lo + g * (hi - lo);
            if dist(m1) < dist(m2) {
                hi = m2;
            } else {
                lo = m1;
            }
        }
        dist(0.5 * (lo + hi))
    }

    #[test]
    fn ellipse_distance_matches_brute_force() {
        let e = Domain::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let pts = [
            [0.0, 0.0],
            [0.3, 0.0],
            [1.5, 0.0],
            [0.0, 0.5],
            [1.2, 0.4],
            [-1.9, 0.05],
            [0.1, -0.95],
            [1.0, 0.0],
        ];
        for p in pts {
            let want = brute_force_ellipse_distance(p, 2.0, 1.0);
            assert_relative_eq!(e.phi(&p), want, epsilon = 1e-9);
        }
        // Exterior points through the signed distance.
        for p in [[2.5, 0.0], [0.0, 1.7], [2.0, 1.0]] {
            let want = brute_force_ellipse_distance(p, 2.0, 1.0);
            assert_relative_eq!(-e.signed_distance(&p), want, epsilon = 1e-9);
        }
    }

    #[test]
    fn inward_normals() {
        let b = Domain::<f64>::unit_ball(2);
        let g = b.inward_normal(&[0.9, 0.0]).unwrap();
        assert_relative_eq!(g[0], -1.0);
        let iv = Domain::interval(0.0, 1.0).unwrap();
        assert_eq!(iv.inward_normal(&[0.9]).unwrap(), vec![-1.0]);
        let bx = Domain::axis_box(vec![0.0, 0.0], vec![1.0, 1.0]).unwrap();
        assert_eq!(bx.inward_normal(&[0.05, 0.5]).unwrap(), vec![1.0, 0.0]);
        assert_eq!(bx.inward_normal(&[0.05, 0.05]), Err(Error::NonSmoothBoundary));
        let e = Domain::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let g = e.inward_normal(&[0.0, 0.8]).unwrap();
        assert_relative_eq!(g[1], -1.0, epsilon = 1e-12);
    }

    #[test]
    fn bridge_examples() {
        assert_eq!(bridge_survival_probability(0.0, 0.3, 0.01, 1.0), 0.0);
        assert_eq!(bridge_survival_probability(0.3, 0.0, 0.01, 1.0), 0.0);
        assert_relative_eq!(
            bridge_survival_probability(0.1, 0.1, 0.01, 1.0),
            1.0 - (-2.0f64).exp(),
            epsilon = 1e-15
        );
        let mut prev = 0.0;
        for k in 1..40 {
            let p = bridge_survival_probability(0.1 * k as f64, 0.1 * k as f64, 0.01, 1.0);
            assert!(p >= prev && p <= 1.0);
            prev = p;
        }
        assert!(prev > 1.0 - 1e-12);
    }

    /// Discretized bridges at fine sub-steps, pinned at both ends, checking
    /// the closed-form survival 1 − e⁻² for φ₀ = φ₁ = 0.1, dt = 0.01, s² = 1.
    /// The fine grid misses crossings between its nodes, so the simulated
    /// value sits slightly above the exact one.
    #[test]
    fn bridge_formula_against_simulated_bridges() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let (phi, dt, m, reps) = (0.1f64, 0.01f64, 400usize, 40_000usize);
        let h = dt / m as f64;
        let mut alive = 0usize;
        let mut w = vec![0.0; m + 1];
        for _ in 0..reps {
            for k in 1..=m {
                w[k] = w[k - 1] + h.sqrt() * rng::standard_normal::<f64, _>(&mut rng);
            }
            let wm = w[m];
            let ok = (0..=m).all(|k| {
                let s = k as f64 / m as f64;
                phi + w[k] - s * wm > 0.0
            });
            if ok {
                alive += 1;
            }
        }
        let p = alive as f64 / reps as f64;
        let exact = 1.0 - (-2.0f64).exp();
        let se = (exact * (1.0 - exact) / reps as f64).sqrt();
        assert!(p > exact - 3.0 * se && p < exact + 0.02, "simulated {p} vs {exact}");
    }

    #[test]
    fn bounding_and_inradius() {
        let e = Domain::ellipsoid(vec![1.0, 0.0], vec![2.0, 1.0]).unwrap();
        assert_eq!(e.bounding_box(), (vec![-1.0, -1.0], vec![3.0, 1.0]));
        assert_eq!(e.inradius(), 1.0);
        assert_eq!(e.center(), vec![1.0, 0.0]);
        assert!(!Domain::axis_box(vec![0.0], vec![1.0]).unwrap().has_smooth_boundary());
    }

    #[test]
    fn descriptor_parses() {
        let d: Domain<f64> = serde_json::from_str(r#"{"type":"ball","center":[0,0],"radius":1}"#).unwrap();
        assert_eq!(d.dim(), 2);
        let bad = serde_json::from_str::<Domain<f64>>(r#"{"type":"ball","center":[0,0],"radius":-1}"#);
        assert!(bad.is_err());
        let bx: Domain<f64> = serde_json::from_str(r#"{"type":"box","lower":[0],"upper":[1]}"#).unwrap();
        assert!(!bx.has_smooth_boundary());
    }

    #[test]
    fn single_precision_domain() {
        let b = Domain::<f32>::unit_ball(2);
        assert!(b.contains(&[0.5, 0.5]).unwrap());
        assert!((b.phi(&[0.6, 0.0]) - 0.4).abs() < 1e-6);
        let e32 = Domain::<f32>::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        let e64 = Domain::<f64>::ellipsoid(vec![0.0, 0.0], vec![2.0, 1.0]).unwrap();
        for p in [[0.5, 0.0], [1.2, 0.4], [0.0, 0.3]] {
            let want = e64.phi(&p);
            let got = e32.phi(&[p[0] as f32, p[1] as f32]) as f64;
            assert!((got - want).abs() < 1e-5, "{got} vs {want}");
        }
    }

    #[test]
    fn near_boundary_consistency() {
        for dom in shapes() {
            let c = dom.center();
            let g = dom.inward_normal(&c).ok();
            let dir: Vec<f64> = match g {
                Some(g) => g.iter().map(|v| -v).collect(),
                None => unit(dom.dim(), 0),
            };
            // March from the center towards the boundary.
            let r = dom.inradius();
            for eps in [1e-3, 1e-6, 1e-9, 1e-12] {
                for t in [r - eps, r, r + eps] {
                    let x: Vec<f64> = c.iter().zip(&dir).map(|(&ci, &di)| ci + t * di).collect();
                    assert_eq!(dom.contains_point(&x), dom.phi(&x) > 0.0, "{dom:?} at {x:?}");
                }
            }
        }
    }

    proptest! {
        #[test]
        fn phi_is_one_lipschitz(idx in 0usize..6, seed in any::<u64>()) {
            let dom = &shapes()[idx];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            let (lo, hi) = dom.bounding_box();
            let pad = 0.2;
            let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                lo.iter().zip(&hi).map(|(&l, &h)| l - pad + (h - l + 2.0 * pad) * rng::uniform::<f64, _>(rng)).collect()
            };
            for _ in 0..200 {
                let x = draw(&mut rng);
                let y = draw(&mut rng);
                let lhs = (dom.phi(&x) - dom.phi(&y)).abs();
                prop_assert!(lhs <= distance(&x, &y) + 1e-9);
                prop_assert_eq!(dom.contains_point(&x), dom.phi(&x) > 0.0);
            }
        }

        #[test]
        fn bridge_monotone(p0 in 0.0f64..1.0, p1 in 0.0f64..1.0, dt in 1e-4f64..1.0, s2 in 0.1f64..4.0, bump in 0.0f64..0.5) {
            let base = bridge_survival_probability(p0, p1, dt, s2);
            prop_assert!((0.0..1.0).contains(&base) || base == 1.0);
            prop_assert!(bridge_survival_probability(p0 + bump, p1, dt, s2) >= base);
            prop_assert!(bridge_survival_probability(p0, p1 + bump, dt, s2) >= base);
            prop_assert!(bridge_survival_probability(p0, p1, dt + bump, s2) <= base);
            prop_assert!(bridge_survival_probability(p0, p1, dt, s2 + bump) <= base);
        }
    }
}
