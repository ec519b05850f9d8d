//! Reference values for Brownian motion killed at the ends of (0, 1),
//! computed from the Dirichlet eigenfunction expansion.

#![allow(dead_code)]

use std::f64::consts::PI;
use std::sync::Arc;

use qsd_core::model::{Coefficients, DeclaredConstants, ModelParams, ModelRegistry, TimePeriodicModel};
use qsd_core::Domain;

/// `P(τ > t)` from `x`: `Σ_{k odd} 4/(kπ) sin(kπx) e^{−k²π²t/2}`.
pub fn survival_series(x: f64, t: f64) -> f64 {
    (0..2000)
        .map(|j| {
            let k = (2 * j + 1) as f64;
            4.0 / (k * PI) * (k * PI * x).sin() * (-k * k * PI * PI * t / 2.0).exp()
        })
        .sum()
}

/// Bin masses of the law at `t` of the path started at `x0` and
/// conditioned to survive, on `bins` equal bins of (0, 1).
pub fn conditioned_bin_masses(x0: f64, t: f64, bins: usize) -> Vec<f64> {
    let mut masses = vec![0.0; bins];
    for k in 1..400 {
        let kf = k as f64;
        let weight = (kf * PI * x0).sin() * (-kf * kf * PI * PI * t / 2.0).exp();
        if weight.abs() < 1e-300 {
            continue;
        }
        for (i, m) in masses.iter_mut().enumerate() {
            let (a, b) = (i as f64 / bins as f64, (i + 1) as f64 / bins as f64);
            *m += weight * ((kf * PI * a).cos() - (kf * PI * b).cos()) / (kf * PI);
        }
    }
    let total: f64 = masses.iter().sum();
    masses.iter().map(|m| m / total).collect()
}

/// Bin masses of the density `(π/2) sin(πx)`.
pub fn ground_state_bin_masses(bins: usize) -> Vec<f64> {
    (0..bins)
        .map(|i| {
            let (a, b) = (i as f64 / bins as f64, (i + 1) as f64 / bins as f64);
            0.5 * ((PI * a).cos() - (PI * b).cos())
        })
        .collect()
}

pub fn unit_interval() -> Domain {
    Domain::interval(0.0, 1.0).unwrap()
}

pub fn library_model(name: &str, domain: &Domain, params: ModelParams) -> TimePeriodicModel<f64> {
    ModelRegistry::with_library().build(name, &params, &Arc::new(domain.clone())).unwrap()
}

/// `b = 0`, `σ = 0`, constant `κ`.
#[derive(Debug)]
pub struct Frozen {
    pub rate: f64,
}

impl Coefficients<f64> for Frozen {
    fn drift_into(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_into(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn kill_rate(&self, _t: f64, _x: &[f64]) -> f64 {
        self.rate
    }
}

pub fn frozen(rate: f64, dim: usize) -> TimePeriodicModel<f64> {
    TimePeriodicModel::new("frozen", dim, 1.0, DeclaredConstants { k0: 0.0, c0: 1.0, kappa_max: rate }, Arc::new(Frozen { rate }))
        .unwrap()
}
