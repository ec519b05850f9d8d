//! Acceptance suite: runs the bundled scenarios and prints one PASS/FAIL
//! line per criterion. Exits non-zero if any criterion fails.

use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use qsd_cli::experiments::{CheckReport, CouplingReport, FvRunReport, FvVsMcReport, McReport, MixingReport};
use qsd_cli::{run_scenario, Artifacts, Outcome, Scenario};
use qsd_core::Registry;

const SURVIVAL_ORACLE: f64 = 0.1079770444;

fn scenario_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios").join(format!("{name}.toml"))
}

fn run(name: &str) -> anyhow::Result<Outcome> {
    let scenario = Scenario::load(&scenario_path(name))?;
    run_scenario(&scenario, &mut Artifacts::discard(), false)
}

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> anyhow::Result<Verdict> {
    Ok(Verdict { pass, detail })
}

macro_rules! expect_outcome {
    ($outcome:expr, $variant:ident) => {
        match $outcome {
            Outcome::$variant(r) => r,
            other => anyhow::bail!("unexpected outcome {other:?}"),
        }
    };
}

fn qsd_recovery() -> anyhow::Result<Verdict> {
    let r: FvRunReport = expect_outcome!(run("fv_qsd_interval")?, FvRun);
    let last = r.checkpoints.iter().rfind(|c| c.t == 4.0).ok_or_else(|| anyhow::anyhow!("no t=4 row"))?;
    let tv = last.tv_oracle.ok_or_else(|| anyhow::anyhow!("no oracle TV"))?;
    verdict(tv <= 0.12, format!("FV N=2000 TV to sine density at t=4: {tv:.4} (<= 0.12)"))
}

fn mixing_rate() -> anyhow::Result<Verdict> {
    let r: MixingReport = expect_outcome!(run("mixing_interval")?, MixingCurve);
    let f = &r.fit;
    let pass = (9.0..=21.0).contains(&f.gamma) && f.r_squared >= 0.9 && f.points_used >= 3 && r.min_survivors >= 3000;
    verdict(
        pass,
        format!(
            "gamma = {:.3} in [9, 21] (gap 14.80), r2 = {:.4} >= 0.9, {} points above floor {:.4}, {} survivors",
            f.gamma, f.r_squared, f.points_used, r.noise_floor, r.min_survivors
        ),
    )
}

fn soft_kill_invariance() -> anyhow::Result<Verdict> {
    let r: McReport = expect_outcome!(run("softkill_invariance")?, ConditionedMc);
    let row = r.kill_invariance.first().ok_or_else(|| anyhow::anyhow!("no invariance row"))?;
    let enough = r.samples.iter().all(|s| s.survivors >= 3000);
    verdict(
        row.tv <= 0.08 && enough && row.extra_kill == 2.0,
        format!("TV(kappa=0, kappa=2) at t={} on {} bins: {:.4} (<= 0.08)", row.t, row.bins, row.tv),
    )
}

fn sqrt_n_scaling() -> anyhow::Result<Verdict> {
    let r: FvRunReport = expect_outcome!(run("fv_sqrt_n")?, FvRun);
    let err = |n: usize| r.per_n.iter().find(|s| s.n == n).and_then(|s| s.mean_abs_error);
    let (Some(e100), Some(e900)) = (err(100), err(900)) else { anyhow::bail!("missing particle counts") };
    let ratio = e100 / e900;
    verdict(
        (1.8..=4.5).contains(&ratio),
        format!("err(100) = {e100:.5}, err(900) = {e900:.5}, ratio {ratio:.3} in [1.8, 4.5]"),
    )
}

fn bridge_fidelity() -> anyhow::Result<Verdict> {
    let r: McReport = expect_outcome!(run("bridge_survival")?, ConditionedMc);
    let get = |dt: f64, bridge: bool| {
        r.survival.iter().find(|s| s.dt == dt && s.bridge == bridge).map(|s| s.p_hat).ok_or_else(|| anyhow::anyhow!("missing cell"))
    };
    let fine = get(1e-3, true)?;
    let (bridge, naive) = (get(1e-2, true)?, get(1e-2, false)?);
    let pass = (fine - SURVIVAL_ORACLE).abs() <= 0.005
        && (bridge - SURVIVAL_ORACLE).abs() < (naive - SURVIVAL_ORACLE).abs()
        && naive >= 1.02 * SURVIVAL_ORACLE;
    verdict(
        pass,
        format!(
            "dt=1e-3 bridge {fine:.5} vs {SURVIVAL_ORACLE:.5} (+-0.005); dt=1e-2 bridge {bridge:.5}, naive {naive:.5} (bias {:+.1}%)",
            100.0 * (naive / SURVIVAL_ORACLE - 1.0)
        ),
    )
}

fn coupling_scaling() -> anyhow::Result<Verdict> {
    let r: CouplingReport = expect_outcome!(run("coupling_failure")?, CouplingSweep);
    let ratios: Vec<f64> = r.failures.iter().filter(|f| f.t == 1.0).map(|f| f.p_fail / f.separation).collect();
    let (lo, hi) = ratios.iter().fold((f64::INFINITY, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    let spread_ok = ratios.len() == 3 && lo > 0.0 && hi / lo <= 3.0;
    let mut seps: Vec<f64> = r.failures.iter().map(|f| f.separation).collect();
    seps.dedup();
    let monotone = seps.iter().all(|&sep| {
        let mut by_t: Vec<(f64, f64)> = r.failures.iter().filter(|f| f.separation == sep).map(|f| (f.t, f.p_fail)).collect();
        by_t.sort_by(|a, b| a.0.total_cmp(&b.0));
        by_t.windows(2).all(|w| w[1].1 <= w[0].1)
    });
    verdict(
        spread_ok && monotone,
        format!(
            "p_fail/sep at t=1: {:?} (spread {:.2} <= 3); nonincreasing in t: {monotone}",
            ratios.iter().map(|x| (x * 1e3).round() / 1e3).collect::<Vec<_>>(),
            hi / lo
        ),
    )
}

fn fv_uniform_in_time() -> anyhow::Result<Verdict> {
    let r: FvVsMcReport = expect_outcome!(run("fv_vs_mc_rotating")?, FvVsMc);
    let (_, ratio) = *r.max_min_ratio.first().ok_or_else(|| anyhow::anyhow!("no ratio"))?;
    let tvs: Vec<String> = r.rows.iter().map(|x| format!("{:.3}", x.tv)).collect();
    let enough = r.rows.iter().all(|x| x.reference_survivors >= 3000);
    verdict(ratio <= 1.55 && enough, format!("TV at t=2,4,6,8: [{}], max/min {ratio:.3} (<= 1.55)", tvs.join(", ")))
}

fn coupling_marginal() -> anyhow::Result<Verdict> {
    let r: CouplingReport = expect_outcome!(run("coupling_marginal")?, CouplingSweep);
    let m = r.marginals.first().ok_or_else(|| anyhow::anyhow!("no marginal row"))?;
    verdict(
        m.z <= 3.0,
        format!("pair marginal {:.4} vs single path {:.4}, z = {:.2} (<= 3)", m.p_pair, m.p_single, m.z),
    )
}

fn validators() -> anyhow::Result<Verdict> {
    let template = Scenario::load(&scenario_path("check_model"))?;
    let mut lines = Vec::new();
    let mut pass = true;
    for name in Registry::with_library().names() {
        let mut s = template.clone();
        s.model.name = name.to_string();
        let r: CheckReport = expect_outcome!(run_scenario(&s, &mut Artifacts::discard(), false)?, CheckModel);
        let v = &r.validation;
        let ok = v.periodicity_deviation <= 1e-12
            && v.min_singular_value >= v.declared_c0 - 1e-9
            && r.joint_min_eigenvalue >= -1e-12
            && r.passed;
        pass &= ok;
        lines.push(format!("{name}:{}", if ok { "ok" } else { "FAIL" }));
    }
    verdict(pass, format!("periodicity, ellipticity and joint PSD on 1e4 samples: {}", lines.join(" ")))
}

type Criterion = (u32, &'static str, fn() -> anyhow::Result<Verdict>);

fn main() -> ExitCode {
    let criteria: [Criterion; 9] = [
        (1, "QSD recovery by Fleming-Viot", qsd_recovery),
        (2, "exponential mixing rate", mixing_rate),
        (3, "constant soft-kill invariance", soft_kill_invariance),
        (4, "1/sqrt(N) error scaling", sqrt_n_scaling),
        (5, "hard-kill discretization fidelity", bridge_fidelity),
        (6, "coupling-failure scaling", coupling_scaling),
        (7, "uniform-in-time FV accuracy", fv_uniform_in_time),
        (8, "coupling marginal fidelity", coupling_marginal),
        (9, "validator suite", validators),
    ];
    let mut failed = 0;
    for (k, title, check) in criteria {
        let start = Instant::now();
        let (pass, detail) = match check() {
            Ok(v) => (v.pass, v.detail),
            Err(e) => (false, format!("error: {e:#}")),
        };
        failed += usize::from(!pass);
        println!(
            "{} [{k}] {title}: {detail} ({:.1}s)",
            if pass { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    println!("acceptance: {} of 9 criteria passed", 9 - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
