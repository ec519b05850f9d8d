mod common;

use common::*;
use qsd_core::fleming_viot::{fv_init, fv_jump_time_diagnostic, fv_run, FvInit};
use qsd_core::killed_path::{InitialLaw, SimParams};
use qsd_core::measures::EmpiricalMeasure;
use qsd_core::model::ModelParams;
use std::f64::consts::PI;

fn brownian_system(n: usize, seed: u64, dt: f64) -> qsd_core::ParticleSystem {
    let d = unit_interval();
    let m = library_model("brownian", &d, ModelParams::new());
    fv_init(&m, &d, &FvInit::Law { law: InitialLaw::Uniform, n }, 0.0, &SimParams::new(dt, seed)).unwrap()
}

#[test]
fn single_kill_donors_are_uniform_among_the_others() {
    let d = unit_interval();
    let m = frozen(20.0, 1);
    let pts = EmpiricalMeasure::new(1, vec![0.1, 0.3, 0.5, 0.7, 0.9]).unwrap();
    let mut sys = fv_init(&m, &d, &FvInit::Points(pts), 0.0, &SimParams::new(1e-3, 29)).unwrap();
    let mut counts = [0usize; 4];
    let mut total = 0;
    while total < 10_000 {
        let before = sys.rebirth_log().len();
        let report = sys.step(1e-3).unwrap();
        if report.kills == 1 {
            let e = sys.rebirth_log()[before];
            assert_ne!(e.donor_index, e.killed_index);
            counts[(e.donor_index + 5 - e.killed_index - 1) % 5] += 1;
            total += 1;
        }
    }
    let expected = total as f64 / 4.0;
    let chi2: f64 = counts.iter().map(|&c| (c as f64 - expected).powi(2) / expected).sum();
    // 3 degrees of freedom: P(chi2 > 16.27) = 0.001.
    assert!(chi2 < 16.27, "counts {counts:?}, chi2 {chi2}");
}

#[test]
fn no_killing_means_no_rebirths() {
    let d = unit_interval();
    let m = frozen(0.0, 1);
    let mut sys = fv_init(&m, &d, &FvInit::Law { law: InitialLaw::Uniform, n: 50 }, 0.0, &SimParams::new(1e-2, 1)).unwrap();
    let start = sys.positions_flat().to_vec();
    fv_run(&mut sys, 5.0, &[]).unwrap();
    assert!(sys.rebirth_log().is_empty());
    assert_eq!(sys.positions_flat(), &start[..]);
}

#[test]
fn unit_rate_soft_kill_gives_n_t_rebirths() {
    let d = unit_interval();
    let m = frozen(1.0, 1);
    let (n, t) = (200, 10.0);
    let mut sys = fv_init(&m, &d, &FvInit::Law { law: InitialLaw::Uniform, n }, 0.0, &SimParams::new(1e-2, 2)).unwrap();
    fv_run(&mut sys, t, &[]).unwrap();
    let count = sys.rebirth_log().len() as f64;
    let mean = n as f64 * t;
    assert!((count - mean).abs() < 4.0 * mean.sqrt(), "{count}");
}

#[test]
fn explicit_identical_points_give_a_point_mass() {
    let d = unit_interval();
    let m = library_model("brownian", &d, ModelParams::new());
    let pts = EmpiricalMeasure::new(1, vec![0.25; 10]).unwrap();
    let sys = fv_init(&m, &d, &FvInit::Points(pts), 0.0, &SimParams::new(1e-3, 1)).unwrap();
    assert!(sys.measure().iter().all(|p| p == [0.25]));
}

#[test]
fn uniform_init_has_the_right_mean() {
    let n = 5000;
    let sys = brownian_system(n, 4, 1e-3);
    let mean = sys.measure().mean()[0];
    assert!((mean - 0.5).abs() < 3.0 / (12.0 * n as f64).sqrt(), "{mean}");
}

#[test]
fn run_to_the_start_time_returns_the_initial_cloud() {
    let mut sys = brownian_system(20, 5, 1e-3);
    let initial = sys.measure();
    let run = fv_run(&mut sys, 0.0, &[]).unwrap();
    assert_eq!(run.snapshots.len(), 1);
    assert_eq!(run.snapshots[0].time, 0.0);
    assert_eq!(run.snapshots[0].cloud, initial);
    assert_eq!(run.steps, 0);
}

#[test]
fn population_stays_inside_the_domain() {
    let mut sys = brownian_system(500, 6, 1e-2);
    let d = unit_interval();
    for _ in 0..100 {
        sys.step(1e-2).unwrap();
        assert_eq!(sys.len(), 500);
        assert!(sys.measure().iter().all(|p| d.contains_point(p)));
    }
}

#[test]
fn results_do_not_depend_on_the_worker_count() {
    let run_with = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| {
            let mut sys = brownian_system(700, 8, 1e-3);
            fv_run(&mut sys, 0.3, &[0.1]).unwrap();
            (sys.positions_flat().to_vec(), sys.rebirth_log().to_vec())
        })
    };
    let (p1, l1) = run_with(1);
    let (p4, l4) = run_with(4);
    assert!(!l1.is_empty());
    assert_eq!(p1.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), p4.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
    assert_eq!(l1, l4);
}

#[test]
fn rebirth_rate_settles_at_the_principal_eigenvalue() {
    let n = 1000;
    let mut sys = brownian_system(n, 9, 1e-3);
    let run = fv_run(&mut sys, 4.0, &[2.0, 3.0, 4.0]).unwrap();
    let diag = fv_jump_time_diagnostic(&sys);
    let late = &diag.rate_per_unit_time[1..];
    let (lo, hi) = late.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &r| (a.min(r), b.max(r)));
    assert!(hi / lo < 2.0, "{late:?}");
    let lambda = PI * PI / 2.0;
    for r in late {
        assert!((r / lambda - 1.0).abs() < 0.1, "rate {r} vs {lambda}");
    }
    assert!(diag.min_gap.unwrap() >= 0.0);

    // Collar mass of the ground state over {φ < 0.05} is 1 − cos(0.05π).
    let collar = 1.0 - (0.05 * PI).cos();
    let mean: f64 = run.snapshots.iter().map(|s| qsd_core::measures::boundary_mass(&s.cloud, &unit_interval(), 0.05)).sum::<f64>()
        / run.snapshots.len() as f64;
    assert!((mean - collar).abs() < 0.006, "{mean} vs {collar}");
    assert!(sys.boundary_mass(0.05) < 0.05);
}

#[test]
fn permuting_the_initial_points_leaves_the_law_unchanged() {
    let d = unit_interval();
    let m = library_model("brownian", &d, ModelParams::new());
    let base: Vec<f64> = (0..20).map(|i| 0.03 + 0.9 * (i as f64 / 19.0).powi(2)).collect();
    let mut perm = base.clone();
    perm.reverse();
    perm.rotate_left(7);
    let stat = |pts: &[f64], seed: u64| {
        let init = FvInit::Points(EmpiricalMeasure::new(1, pts.to_vec()).unwrap());
        let mut sys = fv_init(&m, &d, &init, 0.0, &SimParams::new(2e-3, seed)).unwrap();
        fv_run(&mut sys, 0.2, &[]).unwrap();
        sys.measure().mean()[0]
    };
    let runs = 300;
    let a: Vec<f64> = (0..runs).map(|s| stat(&base, s)).collect();
    let b: Vec<f64> = (0..runs).map(|s| stat(&perm, 10_000 + s)).collect();
    let mv = |v: &[f64]| {
        let m = v.iter().sum::<f64>() / v.len() as f64;
        (m, v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64)
    };
    let ((ma, va), (mb, vb)) = (mv(&a), mv(&b));
    let z = (ma - mb) / ((va + vb) / runs as f64).sqrt();
    assert!(z.abs() < 4.0, "z = {z}");
}
