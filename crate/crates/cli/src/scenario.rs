//! Scenario documents: which instance, which controllers, which sweep.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use stochnet_core::dual::DualSolverConfig;
use stochnet_core::model::{load_instance, two_queue_example, ModelError};
use stochnet_core::queueing::Discipline;
use stochnet_core::{ControllerConfig, ControllerKind, NetworkInstance};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ScenarioError {
    #[error("reading {path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("scenario line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid scenario: {0}")]
    Invalid(String),
    #[error("instance: {0}")]
    Instance(#[from] ModelError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InstanceSource {
    Builtin { builtin: BuiltinInstance, channel_dist: [f64; 4] },
    File { file: PathBuf },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuiltinInstance {
    TwoQueue,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZetaPolicy {
    /// `D_p` computed per `V` from the sampled polyhedral rate.
    #[default]
    AutoDp,
    Absolute {
        value: f64,
    },
}

/// A controller without its `V`, which comes from the sweep.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ControllerSpec {
    pub kind: ControllerKind,
    #[serde(default)]
    pub theta: Option<Vec<f64>>,
    #[serde(default)]
    pub theta_log_base: Option<f64>,
    #[serde(default)]
    pub c: Option<f64>,
    #[serde(default)]
    pub relearn_period: Option<u64>,
    #[serde(default)]
    pub solver: Option<DualSolverConfig>,
    #[serde(default)]
    pub discipline: Option<Discipline>,
}

impl ControllerSpec {
    pub fn at(&self, v: f64) -> ControllerConfig {
        let mut cfg = ControllerConfig::new(self.kind, v);
        cfg.theta = self.theta.clone();
        cfg.theta_log_base = self.theta_log_base;
        if let Some(c) = self.c {
            cfg.c = c;
        }
        if let Some(p) = self.relearn_period {
            cfg.relearn_period = p;
        }
        if let Some(s) = &self.solver {
            cfg.solver = s.clone();
        }
        cfg.discipline = self.discipline;
        cfg
    }
}

fn default_perturbations() -> usize {
    100
}

fn default_epsilon_s() -> f64 {
    0.05
}

fn default_sample_period() -> u64 {
    100
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    #[serde(default)]
    pub name: Option<String>,
    pub instance: InstanceSource,
    pub controllers: Vec<ControllerSpec>,
    #[serde(rename = "V_values")]
    pub v_values: Vec<f64>,
    pub seeds: Vec<u64>,
    pub horizon: u64,
    #[serde(default)]
    pub zeta: ZetaPolicy,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub trace: bool,
    #[serde(default = "default_sample_period")]
    pub trace_sample_period: u64,
    #[serde(default)]
    pub assumption_check: bool,
    #[serde(default = "default_perturbations")]
    pub perturbation_count: usize,
    #[serde(default = "default_epsilon_s")]
    pub epsilon_s: f64,
    /// Backlog at slot 0 for every run.
    #[serde(default)]
    pub initial_backlog: Option<Vec<f64>>,
    /// Directory used to resolve a relative instance file.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl Scenario {
    pub fn parse(text: &str) -> Result<Self, ScenarioError> {
        let sc: Scenario = toml::from_str(text).map_err(|e| {
            let (line, column) = match e.span() {
                Some(span) => {
                    let before = &text[..span.start.min(text.len())];
                    let line = before.matches('\n').count() + 1;
                    let column = before.len() - before.rfind('\n').map_or(0, |i| i + 1) + 1;
                    (line, column)
                }
                None => (0, 0),
            };
            ScenarioError::Parse { line, column, message: e.message().to_string() }
        })?;
        sc.validate()?;
        Ok(sc)
    }

    pub fn load(path: &Path) -> Result<Self, ScenarioError> {
        let text =
            std::fs::read_to_string(path).map_err(|source| ScenarioError::Io { path: path.to_path_buf(), source })?;
        let mut sc = Self::parse(&text)?;
        sc.base_dir = path.parent().map(Path::to_path_buf);
        Ok(sc)
    }

    pub fn validate(&self) -> Result<(), ScenarioError> {
        let bad = |m: &str| Err(ScenarioError::Invalid(m.to_string()));
        if self.controllers.is_empty() {
            return bad("controllers must not be empty");
        }
        if self.v_values.is_empty() {
            return bad("V_values must not be empty");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.horizon == 0 {
            return bad("horizon must be at least 1");
        }
        if self.trace_sample_period == 0 {
            return bad("trace_sample_period must be at least 1");
        }
        if let ZetaPolicy::Absolute { value } = self.zeta {
            if !(value.is_finite() && value > 0.0) {
                return bad("zeta value must be positive");
            }
        }
        if !(self.epsilon_s.is_finite() && self.epsilon_s > 0.0) {
            return bad("epsilon_s must be positive");
        }
        Ok(())
    }

    pub fn load_instance(&self) -> Result<NetworkInstance, ScenarioError> {
        match &self.instance {
            InstanceSource::Builtin { builtin: BuiltinInstance::TwoQueue, channel_dist } => {
                Ok(two_queue_example(*channel_dist)?)
            }
            InstanceSource::File { file } => {
                let path = match (&self.base_dir, file.is_relative()) {
                    (Some(base), true) => base.join(file),
                    _ => file.clone(),
                };
                let text = std::fs::read_to_string(&path)
                    .map_err(|source| ScenarioError::Io { path: path.clone(), source })?;
                Ok(load_instance(&text)?)
            }
        }
    }

    pub fn run_count(&self) -> usize {
        self.controllers.len() * self.v_values.len() * self.seeds.len()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
horizon = 10
V_values = [10.0]
seeds = [1, 2]
instance = { builtin = "two_queue", channel_dist = [0.25, 0.25, 0.25, 0.25] }
[[controllers]]
kind = "OLAC2"
c = 0.5
"#;

    #[test]
    fn minimal_scenario() {
        let sc = Scenario::parse(MINIMAL).unwrap();
        assert_eq!(sc.zeta, ZetaPolicy::AutoDp);
        assert_eq!(sc.run_count(), 2);
        let cfg = sc.controllers[0].at(10.0);
        assert_eq!(cfg.c, 0.5);
        assert_eq!(cfg.relearn_period, 1);
        assert_eq!(sc.load_instance().unwrap().num_states(), 64);
    }

    #[test]
    fn empty_lists_rejected() {
        let text = MINIMAL.replace("seeds = [1, 2]", "seeds = []");
        assert!(matches!(Scenario::parse(&text), Err(ScenarioError::Invalid(_))));
    }

    #[test]
    fn unknown_key_reports_position() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        match Scenario::parse(&text) {
            Err(ScenarioError::Parse { line, .. }) => assert!(line > 0),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn absolute_zeta() {
        let text = format!("{MINIMAL}\n[zeta]\npolicy = \"absolute\"\nvalue = 5.0\n");
        assert_eq!(Scenario::parse(&text).unwrap().zeta, ZetaPolicy::Absolute { value: 5.0 });
    }
}
