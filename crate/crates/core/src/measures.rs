//! Empirical measures, fixed binnings and the distances between them.
//!
//! Total variation follows the `sup_{‖f‖∞ ≤ 1} |μ₁(f) − μ₂(f)|` convention,
//! so two mutually singular probability measures are at distance 2.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::geometry::Domain;
use crate::scalar::Real;

/// Equal-weight point cloud in ℝᵈ, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct EmpiricalMeasure<T> {
    dim: usize,
    points: Vec<T>,
}

impl<T: Real> EmpiricalMeasure<T> {
    pub fn new(dim: usize, points: Vec<T>) -> Result<Self> {
        if dim == 0 || !points.len().is_multiple_of(dim) {
            return Err(Error::DimensionMismatch { expected: dim, got: points.len() });
        }
        if points.is_empty() {
            return Err(Error::EmptyMeasure);
        }
        Ok(Self { dim, points })
    }

    pub fn from_points<P: AsRef<[T]>>(points: &[P]) -> Result<Self> {
        let dim = points.first().map(|p| p.as_ref().len()).ok_or(Error::EmptyMeasure)?;
        let mut flat = Vec::with_capacity(dim * points.len());
        for p in points {
            let p = p.as_ref();
            if p.len() != dim {
                return Err(Error::DimensionMismatch { expected: dim, got: p.len() });
            }
            flat.extend_from_slice(p);
        }
        Self::new(dim, flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn count(&self) -> usize {
        self.points.len() / self.dim
    }

    pub fn point(&self, i: usize) -> &[T] {
        &self.points[i * self.dim..(i + 1) * self.dim]
    }

    pub fn iter(&self) -> impl ExactSizeIterator<Item = &[T]> + '_ {
        self.points.chunks_exact(self.dim)
    }

    pub fn as_flat(&self) -> &[T] {
        &self.points
    }

    /// `μ(f)`
    pub fn integrate(&self, f: impl Fn(&[T]) -> T) -> T {
        self.iter().map(f).sum::<T>() / T::from_count(self.count())
    }

    pub fn mean(&self) -> Vec<T> {
        let mut m = vec![T::zero(); self.dim];
        for p in self.iter() {
            for (a, &b) in m.iter_mut().zip(p) {
                *a = *a + b;
            }
        }
        let n = T::from_count(self.count());
        m.iter_mut().for_each(|v| *v = *v / n);
        m
    }
}

/// Axis-aligned grid of right-closed bins `(e_k, e_{k+1}]`; the first bin
/// also takes its lower edge. Bins are flattened row-major, axis 0 slowest.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Binning<T> {
    lower: Vec<T>,
    upper: Vec<T>,
    bins: Vec<usize>,
}

impl<T: Real> Binning<T> {
    pub fn uniform(lower: Vec<T>, upper: Vec<T>, bins: Vec<usize>) -> Result<Self> {
        if lower.is_empty() || lower.len() != upper.len() || lower.len() != bins.len() {
            return Err(Error::InvalidParameter("binning bounds and counts must share a positive length".into()));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l < u)) || bins.contains(&0) {
            return Err(Error::InvalidParameter("binning needs lower < upper and at least one bin per axis".into()));
        }
        Ok(Self { lower, upper, bins })
    }

    /// `bins_per_axis` bins on every axis of the domain's bounding box.
    pub fn for_domain(domain: &Domain<T>, bins_per_axis: usize) -> Result<Self> {
        let (lo, hi) = domain.bounding_box();
        Self::uniform(lo, hi, vec![bins_per_axis; domain.dim()])
    }

    /// `⌈M^{1/(d+2)}⌉` clamped to `[10, 100]`.
    pub fn default_bins_per_axis(min_cloud_size: usize, dim: usize) -> usize {
        let b = (min_cloud_size as f64).powf(1.0 / (dim as f64 + 2.0)).ceil() as usize;
        b.clamp(10, 100)
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn bins_per_axis(&self) -> &[usize] {
        &self.bins
    }

    pub fn n_bins(&self) -> usize {
        self.bins.iter().product()
    }

    /// `k`-th edge along `axis`, `0 ≤ k ≤ bins[axis]`.
    pub fn edge(&self, axis: usize, k: usize) -> T {
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        lo + (hi - lo) * (T::from_count(k) / T::from_count(self.bins[axis]))
    }

    fn locate_axis(&self, axis: usize, x: T) -> Option<usize> {
        let n = self.bins[axis];
        let (lo, hi) = (self.lower[axis], self.upper[axis]);
        if !(x >= lo && x <= hi) {
            return None;
        }
        if x == lo {
            return Some(0);
        }
        let f = ((x - lo) / (hi - lo) * T::from_count(n)).ceil().to_usize().unwrap_or(1);
        let mut k = f.clamp(1, n) - 1;
        // Correct the arithmetic guess against the stored edges.
        while k > 0 && x <= self.edge(axis, k) {
            k -= 1;
        }
        while k + 1 < n && x > self.edge(axis, k + 1) {
            k += 1;
        }
        Some(k)
    }

    /// Flat bin index, or `None` for points outside the grid.
    pub fn locate(&self, x: &[T]) -> Option<usize> {
        debug_assert_eq!(x.len(), self.dim());
        let mut idx = 0;
        for (axis, &xi) in x.iter().enumerate() {
            idx = idx * self.bins[axis] + self.locate_axis(axis, xi)?;
        }
        Some(idx)
    }

    /// Per-axis bin index tuple of a flat index.
    pub fn unflatten(&self, mut idx: usize) -> Vec<usize> {
        let mut out = vec![0; self.dim()];
        for axis in (0..self.dim()).rev() {
            out[axis] = idx % self.bins[axis];
            idx /= self.bins[axis];
        }
        out
    }

    pub fn bin_center(&self, idx: usize) -> Vec<T> {
        self.unflatten(idx)
            .iter()
            .enumerate()
            .map(|(axis, &k)| (self.edge(axis, k) + self.edge(axis, k + 1)) * T::lit(0.5))
            .collect()
    }
}

/// Normalized bin probabilities plus the mass that fell outside the grid.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Histogram<T> {
    binning: Binning<T>,
    probabilities: Vec<T>,
    overflow: T,
}

impl<T: Real> Histogram<T> {
    /// Wraps externally computed probabilities, e.g. a binned density.
    pub fn from_probabilities(binning: Binning<T>, probabilities: Vec<T>, overflow: T) -> Result<Self> {
        if probabilities.len() != binning.n_bins() {
            return Err(Error::DimensionMismatch { expected: binning.n_bins(), got: probabilities.len() });
        }
        if probabilities.iter().any(|&p| p < T::zero() || !p.is_finite()) || overflow < T::zero() {
            return Err(Error::InvalidParameter("bin probabilities must be finite and non-negative".into()));
        }
        let total = probabilities.iter().copied().sum::<T>() + overflow;
        let tol = T::lit(1e-9).max(T::epsilon() * T::from_count(probabilities.len() + 1) * T::lit(4.0));
        if (total - T::one()).abs() > tol {
            return Err(Error::InvalidParameter(format!("bin probabilities sum to {total}, not 1")));
        }
        Ok(Self { binning, probabilities, overflow })
    }

    pub fn binning(&self) -> &Binning<T> {
        &self.binning
    }

    pub fn probabilities(&self) -> &[T] {
        &self.probabilities
    }

    /// Mass outside the grid; zero for clouds inside the domain.
    pub fn overflow(&self) -> T {
        self.overflow
    }
}

pub fn histogram<T: Real>(measure: &EmpiricalMeasure<T>, binning: &Binning<T>) -> Result<Histogram<T>> {
    if measure.dim() != binning.dim() {
        return Err(Error::DimensionMismatch { expected: binning.dim(), got: measure.dim() });
    }
    let mut counts = vec![0usize; binning.n_bins()];
    let mut outside = 0usize;
    for p in measure.iter() {
        match binning.locate(p) {
            Some(k) => counts[k] += 1,
            None => outside += 1,
        }
    }
    let n = T::from_count(measure.count());
    Ok(Histogram {
        binning: binning.clone(),
        probabilities: counts.iter().map(|&c| T::from_count(c) / n).collect(),
        overflow: T::from_count(outside) / n,
    })
}

/// `Σ |pᵢ − qᵢ|` over bins and the overflow bucket, in `[0, 2]`.
pub fn tv_distance<T: Real>(h1: &Histogram<T>, h2: &Histogram<T>) -> Result<T> {
    if h1.binning != h2.binning {
        return Err(Error::BinningMismatch);
    }
    let bins: T = h1
        .probabilities
        .iter()
        .zip(&h2.probabilities)
        .map(|(&p, &q)| (p - q).abs())
        .sum();
    Ok(bins + (h1.overflow - h2.overflow).abs())
}

/// Fraction of the cloud in the collar `{φ_D < alpha}`.
pub fn boundary_mass<T: Real>(measure: &EmpiricalMeasure<T>, domain: &Domain<T>, alpha: T) -> T {
    let hits = measure.iter().filter(|p| domain.phi(p) < alpha).count();
    T::from_count(hits) / T::from_count(measure.count())
}

/// Binomial-noise scale `3 √(2B / M_min)` below which TV estimates are
/// statistical plateau rather than signal.
pub fn default_noise_floor(n_bins: usize, min_cloud_size: usize) -> f64 {
    3.0 * (2.0 * n_bins as f64 / min_cloud_size as f64).sqrt()
}

/// `tv(t) ≈ C e^{−γ t}` fitted on the log scale.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit<T> {
    pub c: T,
    pub gamma: T,
    pub r_squared: T,
    pub t_lo: T,
    pub t_hi: T,
    pub noise_floor: T,
    pub points_used: usize,
}

pub fn fit_exponential<T: Real>(times: &[T], tv_values: &[T], noise_floor: T) -> Result<RateFit<T>> {
    if times.len() != tv_values.len() {
        return Err(Error::DimensionMismatch { expected: times.len(), got: tv_values.len() });
    }
    let pts: Vec<(T, T)> = times
        .iter()
        .zip(tv_values)
        .filter(|(t, v)| t.is_finite() && v.is_finite() && **v > noise_floor && **v > T::zero())
        .map(|(&t, &v)| (t, v.ln()))
        .collect();
    if pts.len() < 3 {
        return Err(Error::InsufficientPointsAboveFloor { above: pts.len() });
    }
    let n = T::from_count(pts.len());
    let mt = pts.iter().map(|p| p.0).sum::<T>() / n;
    let my = pts.iter().map(|p| p.1).sum::<T>() / n;
    let sxx: T = pts.iter().map(|p| (p.0 - mt) * (p.0 - mt)).sum();
    let sxy: T = pts.iter().map(|p| (p.0 - mt) * (p.1 - my)).sum();
    let syy: T = pts.iter().map(|p| (p.1 - my) * (p.1 - my)).sum();
    if sxx == T::zero() {
        return Err(Error::InvalidParameter("fit needs distinct times".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mt;
    let ss_res: T = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + slope * p.0);
            r * r
        })
        .sum();
    let r_squared = if syy > T::zero() { T::one() - ss_res / syy } else { T::one() };
    let gamma = -slope;
    if !(gamma > T::zero()) {
        return Err(Error::NonDecayingFit { gamma: gamma.as_f64() });
    }
    Ok(RateFit {
        c: intercept.exp(),
        gamma,
        r_squared,
        t_lo: pts.iter().map(|p| p.0).fold(T::infinity(), T::min),
        t_hi: pts.iter().map(|p| p.0).fold(T::neg_infinity(), T::max),
        noise_floor,
        points_used: pts.len(),
    })
}
