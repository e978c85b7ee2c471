//! TOML experiment configurations and the bundled catalog.

use serde::{Deserialize, Serialize};

use crate::adapt::{EstimatorKind, LoopConfig};
use crate::assembly::{GoalSpec, Problem, ProblemKind, Source};
use crate::error::{Error, Result};
use crate::mesh::{build_grid, Boundary, DomainSpec, Mesh};
use crate::multigoal::{WeightingKind, WeightingSpec};
use crate::timeconsistency::OdeModel;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExperimentKind {
    SingleGoal,
    Multigoal,
    Ode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProblemConfig {
    pub kind: ProblemKind,
    /// Constant right-hand side `f`.
    pub source: f64,
    /// Boundary parts carrying `u = 0`; all of them by default.
    #[serde(default = "all_boundaries")]
    pub dirichlet: Vec<Boundary>,
}

fn all_boundaries() -> Vec<Boundary> {
    Boundary::ALL.to_vec()
}

impl ProblemConfig {
    pub fn build(&self) -> Problem {
        Problem { kind: self.kind, source: Source::Constant(self.source), dirichlet: self.dirichlet.clone() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WeightingConfig {
    #[serde(flatten)]
    pub kind: WeightingKind,
    /// Per-goal user weights; all one when omitted.
    #[serde(default)]
    pub omega: Option<Vec<f64>>,
}

/// Reference goal values with a note on where they come from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceConfig {
    pub values: Vec<f64>,
    pub provenance: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OdeConfig {
    pub model: OdeModel,
    pub u0: f64,
    pub t_end: f64,
    /// Step counts of the study.
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputConfig {
    /// Write one VTK file per refinement step.
    pub vtk: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        OutputConfig { vtk: true }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub kind: ExperimentKind,
    pub problem: Option<ProblemConfig>,
    pub domain: Option<DomainSpec>,
    #[serde(default)]
    pub goals: Vec<GoalSpec>,
    pub weighting: Option<WeightingConfig>,
    #[serde(default, rename = "loop")]
    pub loop_config: LoopConfig,
    pub reference: Option<ReferenceConfig>,
    pub ode: Option<OdeConfig>,
    #[serde(default)]
    pub output: OutputConfig,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Checks everything that can be checked before any solve.
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.name.is_empty() || !self.name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return bad(format!("name {:?} must be nonempty and use [A-Za-z0-9_-]", self.name));
        }
        if self.kind == ExperimentKind::Ode {
            let Some(o) = &self.ode else { return bad("ode experiment needs an [ode] section".into()) };
            if o.steps.is_empty() || o.steps.contains(&0) {
                return bad("ode.steps must be nonempty positive step counts".into());
            }
            if !(o.t_end > 0.0) {
                return bad(format!("ode.t_end {} must be positive", o.t_end));
            }
            return Ok(());
        }
        if self.problem.is_none() {
            return bad("missing [problem] section".into());
        }
        self.mesh()?;
        self.loop_config.validate()?;
        match self.kind {
            ExperimentKind::SingleGoal if self.goals.len() != 1 => {
                return bad(format!("single_goal needs exactly one goal, got {}", self.goals.len()));
            }
            ExperimentKind::Multigoal => {
                if self.goals.is_empty() {
                    return bad("multigoal needs at least one goal".into());
                }
                if self.loop_config.estimator != EstimatorKind::Enriched {
                    return bad("multigoal needs the enriched estimator".into());
                }
                let w = self.weighting.as_ref().ok_or_else(|| Error::Config("multigoal needs [weighting]".into()))?;
                if let Some(o) = &w.omega {
                    if o.len() != self.goals.len() {
                        return bad(format!("{} omega entries for {} goals", o.len(), self.goals.len()));
                    }
                }
            }
            _ => {}
        }
        if let Some(r) = &self.reference {
            if r.values.len() != self.goals.len() {
                return bad(format!("{} reference values for {} goals", r.values.len(), self.goals.len()));
            }
        }
        let probe = crate::fespace::FeSpace::new(std::sync::Arc::new(self.mesh()?), 1, &[])?;
        for g in &self.goals {
            g.validate(&probe)?;
        }
        Ok(())
    }

    pub fn mesh(&self) -> Result<Mesh> {
        let d = self.domain.as_ref().ok_or_else(|| Error::Config("missing [domain] section".into()))?;
        build_grid(d).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn problem(&self) -> Result<Problem> {
        self.problem.as_ref().map(ProblemConfig::build).ok_or_else(|| Error::Config("missing [problem] section".into()))
    }

    pub fn weighting_spec(&self) -> Option<WeightingSpec> {
        self.weighting.as_ref().map(|w| {
            let mut s = WeightingSpec::new(w.kind, vec![1.0; self.goals.len()]);
            if let Some(o) = &w.omega {
                s.omega = o.clone();
            }
            s
        })
    }

    pub fn reference_values(&self) -> Option<&[f64]> {
        self.reference.as_ref().map(|r| r.values.as_slice())
    }

    pub fn goal_labels(&self) -> Vec<String> {
        self.goals.iter().map(GoalSpec::label).collect()
    }

    pub fn title(&self) -> &str {
        if self.description.is_empty() {
            &self.name
        } else {
            &self.description
        }
    }
}

macro_rules! bundled {
    ($($name:literal),* $(,)?) => {
        &[$(($name, include_str!(concat!("../configs/", $name, ".toml")))),*]
    };
}

/// `(name, toml source)` of every bundled experiment.
pub const BUNDLED: &[(&str, &str)] = bundled![
    "example1_comp1",
    "example1_comp2",
    "example1_comp3",
    "example1_comp4",
    "example1_comp5",
    "example1_comp6",
    "example1_comp7",
    "example1_comp8",
    "example1_comp9",
    "example1_comp10",
    "example1_interpolation",
    "example1_uniform_q2",
    "example2_multigoal",
    "example2_l2_adaptive",
    "example2_l2_uniform",
    "ode_consistency",
    "ode_consistency_time_dependent",
];

pub fn bundled(name: &str) -> Option<Result<ExperimentConfig>> {
    BUNDLED.iter().find(|(n, _)| *n == name).map(|(_, src)| ExperimentConfig::from_toml(src))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_configs_parse_and_match_names() {
        for (name, src) in BUNDLED {
            let cfg = ExperimentConfig::from_toml(src).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(&cfg.name, name);
            assert!(!cfg.description.is_empty(), "{name}");
        }
    }

    #[test]
    fn bundled_names_are_unique() {
        let mut names: Vec<&str> = BUNDLED.iter().map(|(n, _)| *n).collect();
        names.sort_unstable();
        names.dedup();
        assert_eq!(names.len(), BUNDLED.len());
        assert!(names.len() >= 12);
    }

    #[test]
    fn configs_round_trip() {
        for (name, src) in BUNDLED {
            let cfg = ExperimentConfig::from_toml(src).unwrap();
            let again = ExperimentConfig::from_toml(&cfg.to_toml()).unwrap_or_else(|e| panic!("{name}: {e}"));
            assert_eq!(cfg, again);
        }
    }

    #[test]
    fn rejects_bad_input() {
        assert!(ExperimentConfig::from_toml("name = ").unwrap_err().is_config());
        let base = bundled("example1_comp2").unwrap().unwrap();
        let mut c = base.clone();
        c.loop_config.enriched_degree = 1;
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.goals.clear();
        assert!(c.validate().is_err());
        let mut c = base.clone();
        c.goals = vec![GoalSpec::PointValue { point: [2.0, 0.5] }];
        assert!(c.validate().unwrap_err().is_config());
        let src = bundled_src("example1_comp2").replace("[loop]", "[loop]\nbogus = 1");
        assert!(ExperimentConfig::from_toml(&src).is_err());
    }

    fn bundled_src(name: &str) -> &'static str {
        BUNDLED.iter().find(|(n, _)| *n == name).unwrap().1
    }
}
