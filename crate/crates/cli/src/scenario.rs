//! Scenario files: one TOML file describes one experiment.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, ensure, Context, Result};
use qsd_core::model::{DeclaredConstants, ModelParams};
use qsd_core::{Domain, InitialLaw, Model, Registry};
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    FvRun,
    ConditionedMc,
    MixingCurve,
    FvVsMc,
    CouplingSweep,
    CheckModel,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ExperimentKind::FvRun => "fv-run",
            ExperimentKind::ConditionedMc => "conditioned-mc",
            ExperimentKind::MixingCurve => "mixing-curve",
            ExperimentKind::FvVsMc => "fv-vs-mc",
            ExperimentKind::CouplingSweep => "coupling-sweep",
            ExperimentKind::CheckModel => "check-model",
        }
    }
}

/// A scalar or a list of values to sweep over.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum OneOrMany<T> {
    One(T),
    Many(Vec<T>),
}

impl<T: Clone> OneOrMany<T> {
    pub fn values(&self) -> Vec<T> {
        match self {
            OneOrMany::One(v) => vec![v.clone()],
            OneOrMany::Many(v) => v.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelSpec {
    pub name: String,
    #[serde(default)]
    pub params: ModelParams,
}

/// Overrides for the constants a model declares. `period`, if given, must
/// match the model's own period.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DeclaredSpec {
    pub k0: Option<f64>,
    pub c0: Option<f64>,
    pub kappa_max: Option<f64>,
    pub period: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitSpec {
    Uniform,
    Point(Vec<f64>),
}

impl InitSpec {
    pub fn law(&self) -> InitialLaw {
        match self {
            InitSpec::Uniform => InitialLaw::Uniform,
            InitSpec::Point(x) => InitialLaw::PointMass(x.clone()),
        }
    }
}

/// Reference densities with a closed form.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Oracle {
    /// `(π / 2L) sin(π (x − a) / L)` on an interval `(a, a + L)`: the
    /// quasi-stationary law of Brownian motion killed at the endpoints.
    IntervalGroundState,
}

/// Indicator of a closed axis-aligned box, `1{lower ≤ x ≤ upper}`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoxIndicator {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl BoxIndicator {
    pub fn eval(&self, x: &[f64]) -> f64 {
        let inside = x
            .iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(&v, (&l, &u))| l <= v && v <= u);
        if inside {
            1.0
        } else {
            0.0
        }
    }
}

/// Numeric parameters. Each experiment reads the subset it needs; see
/// `docs/scenarios.md` for which.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Params {
    pub n: Option<OneOrMany<usize>>,
    pub dt: Option<OneOrMany<f64>>,
    pub bridge: Option<OneOrMany<bool>>,
    pub t_start: Option<f64>,
    pub t_end: Option<f64>,
    pub checkpoints: Option<Vec<f64>>,
    pub runs: Option<usize>,
    pub replicas: Option<usize>,
    pub target_survivors: Option<usize>,
    pub max_replicas: Option<usize>,
    pub bins: Option<usize>,
    pub alpha: Option<f64>,
    pub init: Option<InitSpec>,
    pub init_b: Option<InitSpec>,
    pub horizon: Option<f64>,
    pub extra_kill: Option<f64>,
    pub reference_window: Option<f64>,
    pub oracle: Option<Oracle>,
    pub observable: Option<BoxIndicator>,
    pub observable_oracle: Option<f64>,
    pub noise_floor: Option<f64>,
    pub separations: Option<Vec<f64>>,
    pub midpoint: Option<Vec<f64>>,
    pub lambda0: Option<f64>,
    pub epsilon_couple: Option<f64>,
    pub epsilon_factors: Option<Vec<f64>>,
    pub marginal_check: Option<bool>,
    pub samples: Option<usize>,
    pub write_clouds: Option<bool>,
}

fn default_seed() -> u64 {
    1
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub experiment: ExperimentKind,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default)]
    pub out: Option<PathBuf>,
    pub domain: Domain,
    pub model: ModelSpec,
    #[serde(default)]
    pub declared: DeclaredSpec,
    #[serde(default)]
    pub params: Params,
}

impl Scenario {
    pub fn from_toml(text: &str) -> Result<Self> {
        let s: Scenario = toml::from_str(text).context("scenario does not match the schema")?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        Self::from_toml(&text).with_context(|| format!("in {}", path.display()))
    }

    /// Display name: the `name` field or the experiment kind.
    pub fn label(&self) -> String {
        self.name.clone().unwrap_or_else(|| self.experiment.as_str().to_string())
    }

    /// Builds the model with declared-constant overrides applied.
    pub fn build_model(&self) -> Result<Model> {
        let registry = Registry::with_library();
        let domain = Arc::new(self.domain.clone());
        let model = registry.build(&self.model.name, &self.model.params, &domain)?;
        let base = model.declared();
        let d = &self.declared;
        if let Some(p) = d.period {
            ensure!(
                (p - model.period()).abs() <= 1e-12 * p.abs().max(1.0),
                "declared period {p} differs from the model period {}; set it through model.params.period",
                model.period()
            );
        }
        let declared = DeclaredConstants {
            k0: d.k0.unwrap_or(base.k0),
            c0: d.c0.unwrap_or(base.c0),
            kappa_max: d.kappa_max.unwrap_or(base.kappa_max),
        };
        Ok(model.with_declared(declared)?)
    }

    /// Schema-level checks: names resolve, numbers are positive, lists are
    /// sorted, and the parameters the experiment needs are present.
    pub fn validate(&self) -> Result<()> {
        let model = self.build_model()?;
        ensure!(model.dim() == self.domain.dim(), "model and domain dimensions differ");
        let p = &self.params;

        let positive = |name: &str, v: Option<f64>| -> Result<()> {
            if let Some(v) = v {
                ensure!(v > 0.0 && v.is_finite(), "`{name}` must be positive, got {v}");
            }
            Ok(())
        };
        for dt in p.dt.as_ref().map(OneOrMany::values).unwrap_or_default() {
            positive("dt", Some(dt))?;
        }
        positive("t_end", p.t_end)?;
        positive("horizon", p.horizon)?;
        positive("reference_window", p.reference_window)?;
        positive("lambda0", p.lambda0)?;
        positive("epsilon_couple", p.epsilon_couple)?;
        positive("noise_floor", p.noise_floor)?;
        positive("alpha", p.alpha)?;
        if let Some(c) = p.extra_kill {
            ensure!(c >= 0.0 && c.is_finite(), "`extra_kill` must be non-negative");
        }
        for (name, v) in [
            ("runs", p.runs),
            ("replicas", p.replicas),
            ("target_survivors", p.target_survivors),
            ("max_replicas", p.max_replicas),
            ("bins", p.bins),
            ("samples", p.samples),
        ] {
            if let Some(v) = v {
                ensure!(v > 0, "`{name}` must be positive");
            }
        }
        for n in p.n.as_ref().map(OneOrMany::values).unwrap_or_default() {
            ensure!(n >= 2, "`n` must be at least 2, got {n}");
        }
        for (name, list) in [("checkpoints", &p.checkpoints), ("separations", &p.separations), ("epsilon_factors", &p.epsilon_factors)] {
            if let Some(list) = list {
                ensure!(!list.is_empty(), "`{name}` is empty");
                ensure!(list.iter().all(|v| v.is_finite() && *v >= 0.0), "`{name}` must be non-negative");
                ensure!(list.windows(2).all(|w| w[0] < w[1]), "`{name}` must be strictly increasing");
            }
        }
        if let Some(sep) = &p.separations {
            ensure!(sep.iter().all(|&s| s > 0.0), "separations must be positive");
        }
        let s = p.t_start.unwrap_or(0.0);
        if let Some(cp) = &p.checkpoints {
            ensure!(cp[0] >= s, "checkpoints precede t_start");
        }
        for init in [&p.init, &p.init_b].into_iter().flatten() {
            init.law().validate(&self.domain)?;
        }
        if let Some(obs) = &p.observable {
            ensure!(
                obs.lower.len() == self.domain.dim() && obs.upper.len() == self.domain.dim(),
                "observable box dimension differs from the domain"
            );
        }
        if p.oracle == Some(Oracle::IntervalGroundState) {
            ensure!(
                matches!(self.domain.shape(), qsd_core::Shape::Interval { .. }),
                "interval_ground_state oracle needs an interval domain"
            );
        }

        let need = |name: &str, present: bool| -> Result<()> {
            if !present {
                bail!("experiment `{}` needs `params.{name}`", self.experiment.as_str());
            }
            Ok(())
        };
        match self.experiment {
            ExperimentKind::FvRun => {
                need("n", p.n.is_some())?;
                need("dt", p.dt.is_some())?;
                need("t_end", p.t_end.is_some())?;
            }
            ExperimentKind::ConditionedMc => {
                need("dt", p.dt.is_some())?;
                need("checkpoints", p.checkpoints.is_some())?;
                need("replicas or target_survivors", p.replicas.is_some() || p.target_survivors.is_some())?;
            }
            ExperimentKind::MixingCurve => {
                need("dt", p.dt.is_some())?;
                need("checkpoints", p.checkpoints.is_some())?;
                need("init", p.init.is_some())?;
                need("init_b", p.init_b.is_some())?;
                need("target_survivors", p.target_survivors.is_some())?;
            }
            ExperimentKind::FvVsMc => {
                need("n", p.n.is_some())?;
                need("dt", p.dt.is_some())?;
                need("checkpoints", p.checkpoints.is_some())?;
                need("target_survivors", p.target_survivors.is_some())?;
            }
            ExperimentKind::CouplingSweep => {
                need("dt", p.dt.is_some())?;
                need("separations", p.separations.is_some())?;
                need("checkpoints", p.checkpoints.is_some())?;
                need("replicas", p.replicas.is_some())?;
            }
            ExperimentKind::CheckModel => {}
        }
        if let Some(t_end) = p.t_end {
            ensure!(t_end > s, "t_end must exceed t_start");
            if let Some(cp) = &p.checkpoints {
                ensure!(*cp.last().expect("non-empty") <= t_end, "checkpoints exceed t_end");
            }
        }
        if let Some(mid) = &p.midpoint {
            ensure!(mid.len() == self.domain.dim(), "midpoint dimension differs from the domain");
        }
        Ok(())
    }

    /// The single `dt` of experiments that do not sweep over it.
    pub fn single_dt(&self) -> Result<f64> {
        let v = self.params.dt.as_ref().map(OneOrMany::values).unwrap_or_default();
        match v.as_slice() {
            [dt] => Ok(*dt),
            _ => bail!("experiment `{}` takes a single dt", self.experiment.as_str()),
        }
    }
}
