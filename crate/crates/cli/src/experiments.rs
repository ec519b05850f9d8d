//! The six experiment kinds. Each returns a serializable report and writes
//! its CSV/JSON artifacts through [`Artifacts`].

use anyhow::{Context, Result};
use qsd_core::coupling_lab::{self, FailureEstimate};
use qsd_core::fleming_viot::{fv_init, fv_jump_time_diagnostic, fv_run, FvInit, JumpDiagnostic};
use qsd_core::killed_path::{conditioned_sample, estimate_survival, horizon_conditioned_sample, ConditionedSample};
use qsd_core::measures::{boundary_mass, default_noise_floor, fit_exponential, histogram, tv_distance, RateFit};
use qsd_core::model::{validate, ValidationReport};
use qsd_core::rng::{derive_key, StreamKind};
use qsd_core::{Binning, CouplingParams, Domain, EmpiricalMeasure, Histogram, InitialLaw, Model, SimParams};
use serde::Serialize;

use crate::output::Artifacts;
use crate::scenario::{ExperimentKind, InitSpec, OneOrMany, Oracle, Scenario};

const DEFAULT_MAX_REPLICAS: usize = 50_000_000;
const DEFAULT_VALIDATION_SAMPLES: usize = 10_000;
/// Relative tolerance on the smallest eigenvalue of the joint covariance.
pub const JOINT_PSD_TOLERANCE: f64 = 1e-12;

#[derive(Clone, Debug, Serialize)]
#[serde(tag = "experiment", rename_all = "kebab-case")]
pub enum Outcome {
    FvRun(FvRunReport),
    ConditionedMc(McReport),
    MixingCurve(MixingReport),
    FvVsMc(FvVsMcReport),
    CouplingSweep(CouplingReport),
    CheckModel(CheckReport),
}

impl Outcome {
    /// False only for a check-model run with failures.
    pub fn passed(&self) -> bool {
        match self {
            Outcome::CheckModel(r) => r.passed,
            _ => true,
        }
    }
}

/// Independent seed for a sub-run of an experiment.
pub fn sub_seed(seed: u64, tag: &[u64]) -> u64 {
    derive_key(seed, StreamKind::Replica, tag)
}

fn say(echo: bool, line: String) {
    if echo {
        println!("{line}");
    }
}

/// Runs the scenario's experiment, writing `scenario.resolved.json`,
/// the experiment's artifacts and `summary.json`.
pub fn run_scenario(scenario: &Scenario, artifacts: &mut Artifacts, echo: bool) -> Result<Outcome> {
    scenario.validate()?;
    artifacts.write_json("scenario.resolved.json", scenario)?;
    let model = scenario.build_model()?;
    let domain = &scenario.domain;
    let outcome = match scenario.experiment {
        ExperimentKind::FvRun => Outcome::FvRun(fv_run_experiment(scenario, &model, domain, artifacts, echo)?),
        ExperimentKind::ConditionedMc => Outcome::ConditionedMc(conditioned_mc(scenario, &model, domain, artifacts, echo)?),
        ExperimentKind::MixingCurve => Outcome::MixingCurve(mixing_curve(scenario, &model, domain, artifacts, echo)?),
        ExperimentKind::FvVsMc => Outcome::FvVsMc(fv_vs_mc(scenario, &model, domain, artifacts, echo)?),
        ExperimentKind::CouplingSweep => Outcome::CouplingSweep(coupling_sweep(scenario, &model, domain, artifacts, echo)?),
        ExperimentKind::CheckModel => Outcome::CheckModel(check_model(scenario, &model, domain, artifacts, echo)?),
    };
    artifacts.write_json("summary.json", &outcome)?;
    Ok(outcome)
}

fn init_law(spec: &Option<InitSpec>) -> InitialLaw {
    spec.as_ref().map(InitSpec::law).unwrap_or(InitialLaw::Uniform)
}

fn bins_for(scenario: &Scenario, min_cloud: usize) -> usize {
    scenario
        .params
        .bins
        .unwrap_or_else(|| Binning::default_bins_per_axis(min_cloud, scenario.domain.dim()))
}

/// Bin probabilities of the interval ground-state density.
fn oracle_histogram(oracle: Oracle, domain: &Domain, binning: &Binning) -> Result<Histogram> {
    match oracle {
        Oracle::IntervalGroundState => {
            let (lo, hi) = domain.bounding_box();
            let (a, len) = (lo[0], hi[0] - lo[0]);
            let pi = std::f64::consts::PI;
            let cdf = |x: f64| 0.5 * (1.0 - (pi * (x - a) / len).cos());
            let probs = (0..binning.n_bins())
                .map(|k| cdf(binning.edge(0, k + 1)) - cdf(binning.edge(0, k)))
                .collect();
            Ok(Histogram::from_probabilities(binning.clone(), probs, 0.0)?)
        }
    }
}

fn tv_between(a: &EmpiricalMeasure, b: &EmpiricalMeasure, binning: &Binning) -> Result<f64> {
    Ok(tv_distance(&histogram(a, binning)?, &histogram(b, binning)?)?)
}

// ---------------------------------------------------------------------------
// fv-run

#[derive(Clone, Debug, Serialize)]
pub struct FvCheckpointRow {
    pub n: usize,
    pub run: usize,
    pub t: f64,
    pub rebirths: usize,
    pub boundary_mass: f64,
    pub tv_oracle: Option<f64>,
    pub observable: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct FvNSummary {
    pub n: usize,
    pub runs: usize,
    /// Mean over runs of `|μᴺ(f) − oracle|` at the last checkpoint.
    pub mean_abs_error: Option<f64>,
    /// Mean over runs of the TV to the oracle at the last checkpoint.
    pub mean_final_tv_oracle: Option<f64>,
    /// Rebirth-time diagnostic of the first run.
    pub jumps: JumpDiagnostic,
}

#[derive(Clone, Debug, Serialize)]
pub struct FvRunReport {
    pub collar_width: f64,
    pub initial_boundary_mass: Vec<f64>,
    pub bins: Option<usize>,
    pub checkpoints: Vec<FvCheckpointRow>,
    pub per_n: Vec<FvNSummary>,
}

#[derive(Serialize)]
struct RebirthRow {
    time: f64,
    killed: usize,
    donor: usize,
    kind: &'static str,
}

fn fv_run_experiment(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<FvRunReport> {
    let p = &scenario.params;
    let ns = p.n.as_ref().map(OneOrMany::values).unwrap_or_default();
    let runs = p.runs.unwrap_or(1);
    let dt = scenario.single_dt()?;
    let bridge = single_bridge(scenario)?;
    let s = p.t_start.unwrap_or(0.0);
    let t_end = p.t_end.expect("validated");
    let checkpoints = p.checkpoints.clone().unwrap_or_default();
    let alpha = p.alpha.unwrap_or_else(|| domain.default_collar_width());
    let law = init_law(&p.init);
    let write_clouds = p.write_clouds.unwrap_or(runs == 1);

    let oracle = match p.oracle {
        Some(o) => {
            let bins = bins_for(scenario, *ns.iter().min().expect("validated"));
            let binning = Binning::for_domain(domain, bins)?;
            Some((oracle_histogram(o, domain, &binning)?, binning))
        }
        None => None,
    };

    let mut rows = Vec::new();
    let mut per_n = Vec::new();
    let mut initial_boundary_mass = Vec::new();
    for &n in &ns {
        let mut final_errors = Vec::new();
        let mut final_tvs = Vec::new();
        let mut jumps = None;
        for run in 0..runs {
            let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[n as u64, run as u64]) };
            let mut sys = fv_init(model, domain, &FvInit::Law { law: law.clone(), n }, s, &sim)?;
            if run == 0 {
                initial_boundary_mass.push(sys.boundary_mass(alpha));
            }
            let result = fv_run(&mut sys, t_end, &checkpoints)?;
            for (k, snap) in result.snapshots.iter().enumerate() {
                let tv_oracle = match &oracle {
                    Some((h, b)) => Some(tv_distance(&histogram(&snap.cloud, b)?, h)?),
                    None => None,
                };
                let observable = p.observable.as_ref().map(|f| snap.cloud.integrate(|x| f.eval(x)));
                let row = FvCheckpointRow {
                    n,
                    run,
                    t: snap.time,
                    rebirths: snap.rebirths,
                    boundary_mass: boundary_mass(&snap.cloud, domain, alpha),
                    tv_oracle,
                    observable,
                };
                say(
                    echo,
                    format!(
                        "fv-run n={n} run={run} t={} rebirths={} collar_mass={:.5}{}{}",
                        row.t,
                        row.rebirths,
                        row.boundary_mass,
                        row.tv_oracle.map(|v| format!(" tv_oracle={v:.5}")).unwrap_or_default(),
                        row.observable.map(|v| format!(" f={v:.5}")).unwrap_or_default(),
                    ),
                );
                if run == 0 && write_clouds {
                    artifacts.write_cloud(&format!("cloud_n{n}_t{k}.csv"), domain.dim(), snap.cloud.as_flat())?;
                }
                if k + 1 == result.snapshots.len() {
                    if let (Some(v), Some(o)) = (observable, p.observable_oracle) {
                        final_errors.push((v - o).abs());
                    }
                    if let Some(v) = tv_oracle {
                        final_tvs.push(v);
                    }
                }
                rows.push(row);
            }
            if run == 0 {
                jumps = Some(fv_jump_time_diagnostic(&sys));
                if write_clouds {
                    let log: Vec<RebirthRow> = sys
                        .rebirth_log()
                        .iter()
                        .map(|e| RebirthRow { time: e.time, killed: e.killed_index, donor: e.donor_index, kind: e.kind.as_str() })
                        .collect();
                    artifacts.write_csv(&format!("rebirths_n{n}.csv"), &log)?;
                }
            }
        }
        let mean = |v: &[f64]| (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64);
        let summary = FvNSummary {
            n,
            runs,
            mean_abs_error: mean(&final_errors),
            mean_final_tv_oracle: mean(&final_tvs),
            jumps: jumps.expect("at least one run"),
        };
        if let Some(e) = summary.mean_abs_error {
            say(echo, format!("fv-run n={n} runs={runs} mean_abs_error={e:.6}"));
        }
        per_n.push(summary);
    }
    artifacts.write_csv("checkpoints.csv", &rows)?;
    Ok(FvRunReport {
        collar_width: alpha,
        initial_boundary_mass,
        bins: oracle.as_ref().map(|(_, b)| b.n_bins()),
        checkpoints: rows,
        per_n,
    })
}

fn single_bridge(scenario: &Scenario) -> Result<bool> {
    let v = scenario.params.bridge.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![true]);
    match v.as_slice() {
        [b] => Ok(*b),
        _ => anyhow::bail!("experiment `{}` takes a single bridge flag", scenario.experiment.as_str()),
    }
}

// ---------------------------------------------------------------------------
// conditioned-mc

#[derive(Clone, Debug, Serialize)]
pub struct SurvivalRow {
    pub dt: f64,
    pub bridge: bool,
    pub t: f64,
    pub p_hat: f64,
    pub stderr: f64,
    pub replicas: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct SampleRow {
    pub dt: f64,
    pub bridge: bool,
    pub t: f64,
    pub survivors: usize,
    pub replicas: usize,
    pub acceptance_rate: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KillInvarianceRow {
    pub dt: f64,
    pub bridge: bool,
    pub t: f64,
    pub extra_kill: f64,
    pub tv: f64,
    pub bins: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct McReport {
    pub survival: Vec<SurvivalRow>,
    pub samples: Vec<SampleRow>,
    pub kill_invariance: Vec<KillInvarianceRow>,
}

#[allow(clippy::too_many_arguments)]
fn sample_at(
    model: &Model,
    domain: &Domain,
    law: &InitialLaw,
    s: f64,
    t: f64,
    horizon: Option<f64>,
    target: usize,
    max_replicas: usize,
    sim: &SimParams,
) -> Result<ConditionedSample<f64>> {
    let sample = match horizon {
        Some(h) => horizon_conditioned_sample(model, domain, law, s, t, h.max(t), target, max_replicas, sim)?,
        None => conditioned_sample(model, domain, law, s, t, target, max_replicas, sim)?,
    };
    Ok(sample)
}

fn conditioned_mc(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<McReport> {
    let p = &scenario.params;
    let law = init_law(&p.init);
    let s = p.t_start.unwrap_or(0.0);
    let times = p.checkpoints.clone().expect("validated");
    let dts = p.dt.as_ref().map(OneOrMany::values).expect("validated");
    let bridges = p.bridge.as_ref().map(OneOrMany::values).unwrap_or_else(|| vec![true]);
    let max_replicas = p.max_replicas.unwrap_or(DEFAULT_MAX_REPLICAS);

    let mut report = McReport { survival: Vec::new(), samples: Vec::new(), kill_invariance: Vec::new() };
    for (i, &dt) in dts.iter().enumerate() {
        for (j, &bridge) in bridges.iter().enumerate() {
            let sim = SimParams { dt, bridge_correction: bridge, seed: scenario.seed };
            if let Some(replicas) = p.replicas {
                for &t in &times {
                    let est = estimate_survival(model, domain, &law, s, t, replicas, &sim)?;
                    say(echo, format!("conditioned-mc dt={dt} bridge={bridge} t={t} p_hat={:.6} stderr={:.6}", est.p_hat, est.stderr));
                    report.survival.push(SurvivalRow { dt, bridge, t, p_hat: est.p_hat, stderr: est.stderr, replicas });
                }
            }
            let Some(target) = p.target_survivors else { continue };
            let other = match p.extra_kill {
                Some(c) => Some((c, model.with_constant_kill(c)?)),
                None => None,
            };
            for (k, &t) in times.iter().enumerate() {
                let sample = sample_at(model, domain, &law, s, t, p.horizon, target, max_replicas, &sim)?;
                let row = SampleRow {
                    dt,
                    bridge,
                    t,
                    survivors: sample.count(),
                    replicas: sample.replicas,
                    acceptance_rate: sample.acceptance_rate,
                };
                artifacts.write_cloud(&format!("survivors_dt{i}_b{j}_t{k}.csv"), domain.dim(), &sample.survivors)?;
                let mut line = format!("conditioned-mc dt={dt} bridge={bridge} t={t} survivors={} acceptance={:.5}", row.survivors, row.acceptance_rate);
                if let Some((c, killed_model)) = &other {
                    // Independent stream: shared randomness would make the two
                    // clouds share paths and understate their distance.
                    let sim_c = SimParams { seed: sub_seed(scenario.seed, &[1, i as u64, j as u64, k as u64]), ..sim };
                    let sample_c = sample_at(killed_model, domain, &law, s, t, p.horizon, target, max_replicas, &sim_c)?;
                    let m = sample.count().min(sample_c.count());
                    let bins = bins_for(scenario, m);
                    let binning = Binning::for_domain(domain, bins)?;
                    let tv = tv_between(&sample.measure()?, &sample_c.measure()?, &binning)?;
                    line.push_str(&format!(" tv_extra_kill={tv:.5}"));
                    report.kill_invariance.push(KillInvarianceRow { dt, bridge, t, extra_kill: *c, tv, bins: binning.n_bins() });
                }
                say(echo, line);
                report.samples.push(row);
            }
        }
    }
    artifacts.write_csv("survival.csv", &report.survival)?;
    artifacts.write_csv("samples.csv", &report.samples)?;
    if !report.kill_invariance.is_empty() {
        artifacts.write_csv("kill_invariance.csv", &report.kill_invariance)?;
    }
    Ok(report)
}

// ---------------------------------------------------------------------------
// mixing-curve

#[derive(Clone, Debug, Serialize)]
pub struct TvRow {
    pub t: f64,
    pub tv: f64,
    pub stderr_proxy: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MixingReport {
    pub curve: Vec<TvRow>,
    pub bins: usize,
    pub min_survivors: usize,
    pub noise_floor: f64,
    pub fit: RateFit<f64>,
}

fn mixing_curve(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<MixingReport> {
    let p = &scenario.params;
    let dt = scenario.single_dt()?;
    let bridge = single_bridge(scenario)?;
    let s = p.t_start.unwrap_or(0.0);
    let times = p.checkpoints.clone().expect("validated");
    let target = p.target_survivors.expect("validated");
    let max_replicas = p.max_replicas.unwrap_or(DEFAULT_MAX_REPLICAS);
    let laws = [init_law(&p.init), init_law(&p.init_b)];

    let mut clouds = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let mut pair = Vec::with_capacity(2);
        for (w, law) in laws.iter().enumerate() {
            let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[w as u64, k as u64]) };
            pair.push(sample_at(model, domain, law, s, t, p.horizon, target, max_replicas, &sim)?.measure()?);
        }
        clouds.push(pair);
    }
    let m = clouds.iter().flatten().map(EmpiricalMeasure::count).min().expect("non-empty");
    let bins = bins_for(scenario, m);
    let binning = Binning::for_domain(domain, bins)?;
    let b = binning.n_bins();
    let floor = p.noise_floor.unwrap_or_else(|| default_noise_floor(b, m));
    let proxy = (2.0 * b as f64 / m as f64).sqrt();
    let mut curve = Vec::with_capacity(times.len());
    for (t, pair) in times.iter().zip(&clouds) {
        let tv = tv_between(&pair[0], &pair[1], &binning)?;
        say(echo, format!("mixing-curve t={t} tv={tv:.5} floor={floor:.5}"));
        curve.push(TvRow { t: *t, tv, stderr_proxy: proxy });
    }
    artifacts.write_csv("tv_curve.csv", &curve)?;
    let tvs: Vec<f64> = curve.iter().map(|r| r.tv).collect();
    let fit = fit_exponential(&times, &tvs, floor).context("fitting the TV decay")?;
    say(echo, format!("mixing-curve gamma={:.4} c={:.4} r2={:.4} points={}", fit.gamma, fit.c, fit.r_squared, fit.points_used));
    artifacts.write_json("rate_fit.json", &fit)?;
    Ok(MixingReport { curve, bins: b, min_survivors: m, noise_floor: floor, fit })
}

// ---------------------------------------------------------------------------
// fv-vs-mc

#[derive(Clone, Debug, Serialize)]
pub struct FvVsMcRow {
    pub n: usize,
    pub t: f64,
    pub tv: f64,
    pub reference_start: f64,
    pub reference_survivors: usize,
    pub bins: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct FvVsMcReport {
    pub rows: Vec<FvVsMcRow>,
    /// `max tv / min tv` over checkpoints, per particle count.
    pub max_min_ratio: Vec<(usize, f64)>,
}

fn fv_vs_mc(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<FvVsMcReport> {
    let p = &scenario.params;
    let dt = scenario.single_dt()?;
    let bridge = single_bridge(scenario)?;
    let s = p.t_start.unwrap_or(0.0);
    let times = p.checkpoints.clone().expect("validated");
    let t_end = *times.last().expect("validated");
    let target = p.target_survivors.expect("validated");
    let max_replicas = p.max_replicas.unwrap_or(DEFAULT_MAX_REPLICAS);
    let law = init_law(&p.init);

    // References are shared by every particle count.
    let mut references = Vec::with_capacity(times.len());
    for (k, &t) in times.iter().enumerate() {
        let start = p.reference_window.map_or(s, |w| (t - w).max(s));
        let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[2, k as u64]) };
        let sample = conditioned_sample(model, domain, &law, start, t, target, max_replicas, &sim)?;
        artifacts.write_cloud(&format!("reference_t{k}.csv"), domain.dim(), &sample.survivors)?;
        references.push((start, sample.measure()?));
    }

    let mut rows = Vec::new();
    let mut ratios = Vec::new();
    for n in p.n.as_ref().map(OneOrMany::values).expect("validated") {
        let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[3, n as u64]) };
        let mut sys = fv_init(model, domain, &FvInit::Law { law: law.clone(), n }, s, &sim)?;
        let run = fv_run(&mut sys, t_end, &times)?;
        let mut tvs = Vec::new();
        for (k, (snap, (start, reference))) in run.snapshots.iter().zip(&references).enumerate() {
            let bins = bins_for(scenario, n.min(reference.count()));
            let binning = Binning::for_domain(domain, bins)?;
            let tv = tv_between(&snap.cloud, reference, &binning)?;
            artifacts.write_cloud(&format!("fv_n{n}_t{k}.csv"), domain.dim(), snap.cloud.as_flat())?;
            say(echo, format!("fv-vs-mc n={n} t={} tv={tv:.5} reference_start={start}", snap.time));
            tvs.push(tv);
            rows.push(FvVsMcRow {
                n,
                t: snap.time,
                tv,
                reference_start: *start,
                reference_survivors: reference.count(),
                bins: binning.n_bins(),
            });
        }
        let max = tvs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let min = tvs.iter().copied().fold(f64::INFINITY, f64::min);
        ratios.push((n, max / min));
    }
    artifacts.write_csv("fv_vs_mc.csv", &rows)?;
    Ok(FvVsMcReport { rows, max_min_ratio: ratios })
}

// ---------------------------------------------------------------------------
// coupling-sweep

#[derive(Clone, Debug, Serialize)]
pub struct FailureRow {
    pub separation: f64,
    pub t: f64,
    pub epsilon: f64,
    pub p_fail: f64,
    pub stderr: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct MarginalRow {
    pub separation: f64,
    pub t: f64,
    pub p_pair: f64,
    pub stderr_pair: f64,
    pub p_single: f64,
    pub stderr_single: f64,
    /// `|p_pair − p_single|` in combined standard errors.
    pub z: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct CouplingReport {
    pub params: CouplingParams,
    pub midpoint: Vec<f64>,
    pub failures: Vec<FailureRow>,
    pub marginals: Vec<MarginalRow>,
}

fn coupling_sweep(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<CouplingReport> {
    let p = &scenario.params;
    let dt = scenario.single_dt()?;
    let bridge = single_bridge(scenario)?;
    let s = p.t_start.unwrap_or(0.0);
    let times = p.checkpoints.clone().expect("validated");
    let seps = p.separations.clone().expect("validated");
    let replicas = p.replicas.expect("validated");
    let factors = p.epsilon_factors.clone().unwrap_or_else(|| vec![1.0]);
    let params = CouplingParams::resolve(model, domain, dt, p.lambda0, p.epsilon_couple, scenario.seed)?;
    let mid = p.midpoint.clone().unwrap_or_else(|| domain.center());
    let ends = |sep: f64| {
        let (mut a, mut b) = (mid.clone(), mid.clone());
        a[0] -= sep / 2.0;
        b[0] += sep / 2.0;
        (a, b)
    };
    say(
        echo,
        format!("coupling-sweep lambda0={} epsilon={} k0={}", params.lambda0, params.epsilon_couple, params.k0),
    );

    let mut failures = Vec::new();
    for (fi, &f) in factors.iter().enumerate() {
        let cp = CouplingParams { epsilon_couple: params.epsilon_couple * f, ..params };
        for (si, &sep) in seps.iter().enumerate() {
            let (y1, y2) = ends(sep);
            for (ti, &t) in times.iter().enumerate() {
                // A fresh stream per cell: reusing paths across t would make
                // the monotonicity in t hold by construction.
                let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[fi as u64, si as u64, ti as u64]) };
                let FailureEstimate { p_fail, stderr, .. } =
                    coupling_lab::estimate_coupling_failure(model, domain, &y1, &y2, s, t, replicas, &cp, &sim)?;
                say(echo, format!("coupling-sweep sep={sep} t={t} epsilon={:.6} p_fail={p_fail:.6} stderr={stderr:.6}", cp.epsilon_couple));
                failures.push(FailureRow { separation: sep, t, epsilon: cp.epsilon_couple, p_fail, stderr });
            }
        }
    }
    artifacts.write_csv("coupling_failure.csv", &failures)?;

    let mut marginals = Vec::new();
    if p.marginal_check.unwrap_or(false) {
        for (si, &sep) in seps.iter().enumerate() {
            let (y1, y2) = ends(sep);
            for (ti, &t) in times.iter().enumerate() {
                let sim = SimParams { dt, bridge_correction: bridge, seed: sub_seed(scenario.seed, &[10, si as u64, ti as u64]) };
                let [pair, _] = coupling_lab::estimate_marginal_survival(model, domain, &y1, &y2, s, t, replicas, &params, &sim)?;
                let sim_single = SimParams { seed: sub_seed(scenario.seed, &[11, si as u64, ti as u64]), ..sim };
                let single = estimate_survival(model, domain, &InitialLaw::PointMass(y1.clone()), s, t, replicas, &sim_single)?;
                let se = (pair.stderr.powi(2) + single.stderr.powi(2)).sqrt();
                let z = if se > 0.0 { (pair.p_hat - single.p_hat).abs() / se } else { 0.0 };
                say(echo, format!("coupling-marginal sep={sep} t={t} p_pair={:.5} p_single={:.5} z={z:.3}", pair.p_hat, single.p_hat));
                marginals.push(MarginalRow {
                    separation: sep,
                    t,
                    p_pair: pair.p_hat,
                    stderr_pair: pair.stderr,
                    p_single: single.p_hat,
                    stderr_single: single.stderr,
                    z,
                });
            }
        }
        artifacts.write_csv("marginal_survival.csv", &marginals)?;
    }
    Ok(CouplingReport { params, midpoint: mid, failures, marginals })
}

// ---------------------------------------------------------------------------
// check-model

#[derive(Clone, Debug, Serialize)]
pub struct CheckReport {
    pub validation: ValidationReport,
    pub lambda0: f64,
    /// Smallest eigenvalue of the pair's joint covariance over sampled
    /// `(t, x, y)`, relative to its Frobenius norm.
    pub joint_min_eigenvalue: f64,
    pub passed: bool,
}

/// Validators plus the coupling PSD check for an already-built model.
pub fn check_model_report(model: &Model, domain: &Domain, samples: usize, lambda0: Option<f64>, seed: u64) -> Result<CheckReport> {
    let mut validation = validate(model, domain, samples, seed);
    let params = CouplingParams::resolve(model, domain, 1e-3, lambda0, None, seed)?;
    let joint = coupling_lab::min_joint_eigenvalue(model, domain, &params, samples, seed)?;
    if joint < -JOINT_PSD_TOLERANCE {
        validation.failures.push(format!("joint covariance not PSD: relative min eigenvalue {joint:e}"));
    }
    let passed = validation.passed();
    Ok(CheckReport { validation, lambda0: params.lambda0, joint_min_eigenvalue: joint, passed })
}

fn check_model(scenario: &Scenario, model: &Model, domain: &Domain, artifacts: &mut Artifacts, echo: bool) -> Result<CheckReport> {
    let samples = scenario.params.samples.unwrap_or(DEFAULT_VALIDATION_SAMPLES);
    let report = check_model_report(model, domain, samples, scenario.params.lambda0, scenario.seed)?;
    say(echo, check_line(&report));
    artifacts.write_json("validation.json", &report)?;
    Ok(report)
}

pub fn check_line(r: &CheckReport) -> String {
    let v = &r.validation;
    format!(
        "check-model {} {} periodicity={:e} min_singular={:.6} lipschitz={:.4} (k0={}) joint_min_eig={:e}{}",
        v.model,
        if r.passed { "PASS" } else { "FAIL" },
        v.periodicity_deviation,
        v.min_singular_value,
        v.lipschitz_estimate,
        v.declared_k0,
        r.joint_min_eigenvalue,
        v.failures.iter().chain(&v.warnings).map(|m| format!("; {m}")).collect::<String>(),
    )
}
