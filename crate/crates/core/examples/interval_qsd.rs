//! Brownian motion killed at the ends of (0, 1): survival probability from
//! the midpoint, then a Fleming-Viot estimate of the quasi-stationary law.

use std::sync::Arc;

use qsd_core::fleming_viot::{fv_init, fv_run, FvInit};
use qsd_core::killed_path::estimate_survival;
use qsd_core::measures::{histogram, Binning};
use qsd_core::model::ModelParams;
use qsd_core::{Domain, InitialLaw, Registry, SimParams};

fn main() -> qsd_core::Result<()> {
    let domain = Domain::interval(0.0, 1.0)?;
    let model = Registry::with_library().build("brownian", &ModelParams::new(), &Arc::new(domain.clone()))?;
    let params = SimParams::new(1e-3, 42);

    let est = estimate_survival(&model, &domain, &InitialLaw::PointMass(vec![0.5]), 0.0, 0.5, 100_000, &params)?;
    println!("P(alive at t = 0.5) = {:.4} ± {:.4}", est.p_hat, est.stderr);

    let mut system = fv_init(&model, &domain, &FvInit::Law { law: InitialLaw::Uniform, n: 2000 }, 0.0, &params)?;
    let run = fv_run(&mut system, 3.0, &[1.0, 2.0])?;
    let binning = Binning::uniform(vec![0.0], vec![1.0], vec![10])?;
    for snap in &run.snapshots {
        let h = histogram(&snap.cloud, &binning)?;
        let bars: Vec<String> = h.probabilities().iter().map(|p| format!("{p:.3}")).collect();
        println!("t = {}: rebirths {:6}, bins [{}]", snap.time, snap.rebirths, bars.join(" "));
    }
    Ok(())
}
