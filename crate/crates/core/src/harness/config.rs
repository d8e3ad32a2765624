use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::TimeGrid;
use crate::problem::{InlineProblem, ProblemSetup};

/// Smallest accepted number of grid intervals.
pub const MIN_INTERVALS: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Suite {
    Geometry,
    Criticals,
    Flows,
    Operators,
    Newton,
    Scaling,
    Uniqueness,
}

impl Suite {
    /// Dependency order.
    pub const ALL: [Suite; 7] = [
        Suite::Geometry,
        Suite::Criticals,
        Suite::Flows,
        Suite::Operators,
        Suite::Newton,
        Suite::Scaling,
        Suite::Uniqueness,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Geometry => "geometry",
            Suite::Criticals => "criticals",
            Suite::Flows => "flows",
            Suite::Operators => "operators",
            Suite::Newton => "newton",
            Suite::Scaling => "scaling",
            Suite::Uniqueness => "uniqueness",
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ProblemSpec {
    Builtin(String),
    Inline(InlineProblem),
}

impl ProblemSpec {
    pub fn setup(&self) -> Result<ProblemSetup> {
        match self {
            ProblemSpec::Builtin(name) => ProblemSetup::builtin(name),
            ProblemSpec::Inline(p) => ProblemSetup::from_inline(p),
        }
    }
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct GridSpec {
    #[serde(rename = "T")]
    pub t: f64,
    #[serde(rename = "N")]
    pub n: usize,
}

fn default_exponent() -> f64 {
    2.0
}
fn default_suites() -> Vec<Suite> {
    Suite::ALL.to_vec()
}
fn default_sign() -> f64 {
    1.0
}
fn default_probe_fields() -> usize {
    20
}
fn default_perturbations() -> usize {
    20
}
fn default_delta0() -> f64 {
    0.05
}
fn default_uniqueness_eps() -> f64 {
    0.1
}
fn default_output() -> PathBuf {
    PathBuf::from("adiaflow-out")
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub problem: ProblemSpec,
    pub grid: GridSpec,
    pub eps_list: Vec<f64>,
    #[serde(default = "default_exponent")]
    pub alpha: f64,
    #[serde(default = "default_exponent")]
    pub beta: f64,
    /// Allows β ≠ 2.
    #[serde(default)]
    pub experimental: bool,
    #[serde(default = "default_suites")]
    pub suites: Vec<Suite>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Orientation of the unstable direction the base orbit leaves x⁻ along.
    #[serde(default = "default_sign")]
    pub orbit_sign: f64,
    /// Random fields per ε in the estimate probes.
    #[serde(default = "default_probe_fields")]
    pub probe_fields: usize,
    #[serde(default = "default_perturbations")]
    pub perturbations: usize,
    #[serde(default = "default_delta0")]
    pub delta0: f64,
    /// The uniqueness probe runs at the listed ε closest to this value.
    #[serde(default = "default_uniqueness_eps")]
    pub uniqueness_eps: f64,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.eps_list.is_empty() {
            return bad("eps_list is empty".into());
        }
        if let Some(e) = self.eps_list.iter().find(|e| !(**e > 0.0 && **e <= 1.0)) {
            return bad(format!("eps = {e} outside (0, 1]"));
        }
        if self.eps_list.windows(2).any(|w| w[1] >= w[0]) {
            return bad("eps_list must be strictly descending".into());
        }
        if self.grid.n < MIN_INTERVALS {
            return bad(format!("N = {} is below the minimum {MIN_INTERVALS}", self.grid.n));
        }
        TimeGrid::new(self.grid.t, self.grid.n)?;
        if self.beta != 2.0 && !self.experimental {
            return bad(format!("beta = {} requires \"experimental\": true", self.beta));
        }
        if !(self.alpha > 0.0 && self.beta > 0.0) {
            return bad("alpha and beta must be positive".into());
        }
        if self.orbit_sign.abs() != 1.0 {
            return bad("orbit_sign must be 1 or -1".into());
        }
        if !(self.delta0 >= 0.0) {
            return bad("delta0 must be nonnegative".into());
        }
        if self.suites.is_empty() {
            return bad("no suites requested".into());
        }
        self.problem.setup()?;
        Ok(())
    }

    pub fn time_grid(&self) -> TimeGrid {
        TimeGrid::new(self.grid.t, self.grid.n).expect("validated grid")
    }

    /// Requested suites in dependency order, without repetitions.
    pub fn ordered_suites(&self) -> Vec<Suite> {
        Suite::ALL.into_iter().filter(|s| self.suites.contains(s)).collect()
    }
}
