mod common;

use std::sync::Arc;

use common::*;
use nalgebra::DMatrix;
use proptest::prelude::*;
use qsd_core::coupling_lab::{
    estimate_coupling_failure, estimate_marginal_survival, min_joint_eigenvalue, sigma0, simulate_pairs, u_vector,
    CouplingParams,
};
use qsd_core::geometry::Domain;
use qsd_core::killed_path::{estimate_survival, InitialLaw, SimParams};
use qsd_core::model::{Coefficients, DeclaredConstants, ModelParams, ModelRegistry, TimePeriodicModel};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `b = 0`, constant `σ`.
#[derive(Debug)]
struct ConstantSigma {
    sigma: Vec<f64>,
}

impl Coefficients<f64> for ConstantSigma {
    fn drift_into(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.fill(0.0);
    }
    fn diffusion_into(&self, _t: f64, _x: &[f64], out: &mut [f64]) {
        out.copy_from_slice(&self.sigma);
    }
}

fn constant_sigma(d: usize, sigma: Vec<f64>) -> TimePeriodicModel<f64> {
    let declared = DeclaredConstants { k0: 0.0, c0: 1e-3, kappa_max: 0.0 };
    TimePeriodicModel::new("constant", d, 1.0, declared, Arc::new(ConstantSigma { sigma })).unwrap()
}

proptest! {
    #[test]
    fn u_has_norm_below_one(
        x in prop::collection::vec(-1.0f64..1.0, 3),
        y in prop::collection::vec(-1.0f64..1.0, 3),
        k0 in 0.0f64..10.0,
    ) {
        prop_assume!(x != y);
        let u = u_vector(&x, &y, k0).unwrap();
        let n = u.iter().map(|v| v * v).sum::<f64>().sqrt();
        prop_assert!(n < 1.0 && n > 0.0);
    }
}

#[test]
fn sigma0_squares_back_to_the_shifted_diffusivity() {
    let mut rng = ChaCha8Rng::seed_from_u64(41);
    for trial in 0..1000 {
        let d = 2 + trial % 3;
        let sigma: Vec<f64> = (0..d * d)
            .map(|k| rng.random_range(-1.0..1.0) + if k % (d + 1) == 0 { 2.0 } else { 0.0 })
            .collect();
        let s = DMatrix::from_row_slice(d, d, &sigma);
        let a = &s * s.transpose();
        let lambda0 = 0.5 * a.clone().symmetric_eigen().eigenvalues.min();
        let m = constant_sigma(d, sigma);
        let r = sigma0(&m, 0.0, &vec![0.0; d], lambda0).unwrap();
        let r = DMatrix::from_row_slice(d, d, r.as_slice());
        let back = &r * &r + DMatrix::identity(d, d) * lambda0;
        let err = (back - &a).abs().max();
        assert!(err < 1e-10 * a.norm().max(1.0), "trial {trial}: {err}");
        assert!((&r - r.transpose()).abs().max() < 1e-12);
    }
}

#[test]
fn sigma0_of_a_diagonal_diffusivity() {
    let m = constant_sigma(2, vec![1.0, 0.0, 0.0, 2.0]);
    let r = sigma0(&m, 0.0, &[0.0, 0.0], 0.5).unwrap();
    let expect = [0.5f64.sqrt(), 0.0, 0.0, 3.5f64.sqrt()];
    for (a, b) in r.as_slice().iter().zip(expect) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn joint_covariance_is_psd_for_every_library_model() {
    let registry = ModelRegistry::with_library();
    let domain = Arc::new(Domain::unit_ball(2));
    for name in registry.names() {
        let m = registry.build(name, &ModelParams::new(), &domain).unwrap();
        let p = CouplingParams::resolve(&m, &domain, 1e-3, None, None, 1).unwrap();
        let worst = min_joint_eigenvalue(&m, &domain, &p, 10_000, 2).unwrap();
        assert!(worst >= -1e-12, "{name}: {worst}");
    }
}

#[test]
fn each_coordinate_of_the_pair_is_a_killed_brownian_motion() {
    let domain = Domain::unit_ball(2);
    let m = library_model("brownian", &domain, ModelParams::new());
    let sim = SimParams::new(1e-3, 43);
    let p = CouplingParams::resolve(&m, &domain, sim.dt, None, None, 1).unwrap();
    let (y1, y2) = ([-0.15, 0.0], [0.15, 0.0]);
    let [a, b] = estimate_marginal_survival(&m, &domain, &y1, &y2, 0.0, 0.5, 10_000, &p, &sim).unwrap();
    for (y, est) in [(y1, a), (y2, b)] {
        let single = estimate_survival(&m, &domain, &InitialLaw::PointMass(y.to_vec()), 0.0, 0.5, 10_000, &SimParams::new(1e-3, 47)).unwrap();
        let z = (est.p_hat - single.p_hat) / (est.stderr.powi(2) + single.stderr.powi(2)).sqrt();
        assert!(z.abs() < 4.0, "z = {z}");
    }
}

#[test]
fn mirror_coupling_succeeds_more_often_with_time() {
    let domain = Domain::unit_ball(2);
    let m = library_model("brownian", &domain, ModelParams::new());
    let sim = SimParams::new(1e-3, 53);
    // λ₀ = 1 removes the independent part: pure reflection.
    let p = CouplingParams::resolve(&m, &domain, sim.dt, Some(1.0), None, 1).unwrap();
    let coupled_fraction = |t: f64| {
        let pairs = simulate_pairs(&m, &domain, &[-0.2, 0.0], &[0.2, 0.0], 0.0, t, 4000, &p, &sim, true).unwrap();
        pairs.iter().filter(|q| q.coupled).count() as f64 / pairs.len() as f64
    };
    let (early, late) = (coupled_fraction(0.05), coupled_fraction(0.5));
    assert!(late > early + 0.1, "{early} -> {late}");
}

#[test]
fn failure_grows_with_the_separation() {
    let domain = Domain::unit_ball(2);
    let m = library_model("brownian", &domain, ModelParams::new());
    let sim = SimParams::new(1e-3, 59);
    let p = CouplingParams::resolve(&m, &domain, sim.dt, None, None, 1).unwrap();
    let fail = |h: f64| {
        estimate_coupling_failure(&m, &domain, &[-h, 0.0], &[h, 0.0], 0.0, 0.25, 5000, &p, &sim).unwrap().p_fail
    };
    let (near, far) = (fail(0.02), fail(0.1));
    assert!(far > near, "{near} vs {far}");
}
