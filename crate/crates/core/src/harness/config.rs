//! Run configuration: a single JSON document, optionally overridden field by
//! field from the command line.
//!
//! ```json
//! {
//!   "problem": {"kind": "quadratic", "dim": 20},
//!   "algorithm": "ncgs1",
//!   "horizon": 100,
//!   "seed": 7,
//!   "out": "trace.jsonl"
//! }
//! ```

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::baselines::StepRule;
use crate::geometry::FeasibleSet;
use crate::problems::{CompletionParams, Scaling};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Algorithm {
    #[serde(rename = "ncgs1")]
    Ncgs1,
    #[serde(rename = "ncgs2")]
    Ncgs2,
    #[serde(rename = "sncgs")]
    Sncgs,
    #[serde(rename = "ncgs-vr")]
    NcgsVr,
    #[serde(rename = "fw")]
    Fw,
    #[serde(rename = "svfw")]
    Svfw,
}

impl Algorithm {
    pub const ALL: [Algorithm; 6] = [
        Algorithm::Ncgs1,
        Algorithm::Ncgs2,
        Algorithm::Sncgs,
        Algorithm::NcgsVr,
        Algorithm::Fw,
        Algorithm::Svfw,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Algorithm::Ncgs1 => "ncgs1",
            Algorithm::Ncgs2 => "ncgs2",
            Algorithm::Sncgs => "sncgs",
            Algorithm::NcgsVr => "ncgs-vr",
            Algorithm::Fw => "fw",
            Algorithm::Svfw => "svfw",
        }
    }

    /// Whether the algorithm needs a finite-sum problem.
    pub fn needs_finite_sum(self) -> bool {
        matches!(self, Algorithm::NcgsVr | Algorithm::Svfw)
    }
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Algorithm {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Algorithm::ALL
            .into_iter()
            .find(|a| a.name() == s)
            .ok_or_else(|| {
                let names: Vec<_> = Algorithm::ALL.iter().map(|a| a.name()).collect();
                format!(
                    "unknown algorithm `{s}`, expected one of {}",
                    names.join(", ")
                )
            })
    }
}

fn default_dim() -> usize {
    20
}

fn default_half_width() -> f64 {
    1.0
}

fn default_curvature() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ProblemSpec {
    /// `½‖θ − c‖²`. Without an explicit `center`, `c` is uniform on
    /// `[−center_half_width, center_half_width]^dim`. `noise` is the gradient
    /// noise variance seen by `sncgs`.
    Quadratic {
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default)]
        center: Option<Vec<f64>>,
        #[serde(default = "default_half_width")]
        center_half_width: f64,
        /// Defaults to `[−1, 1]^dim`.
        #[serde(default)]
        set: Option<FeasibleSet>,
        #[serde(default)]
        noise: f64,
    },
    /// Random separable quadratic finite sum.
    FiniteSumQuadratic {
        components: usize,
        #[serde(default = "default_dim")]
        dim: usize,
        #[serde(default = "default_curvature")]
        max_curvature: f64,
        #[serde(default)]
        set: Option<FeasibleSet>,
    },
    /// Smoothed-ℓ0 matrix completion over a nuclear-norm ball.
    Completion(CompletionSpec),
}

/// Either an instance file or generator parameters; unset parameters take the
/// reference values.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompletionSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub instance: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rows: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cols: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rank: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub observe_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub noise_range: Option<(f64, f64)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub corrupt_prob: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sigma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub radius: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scaling: Option<Scaling>,
}

impl CompletionSpec {
    pub fn params(&self) -> CompletionParams {
        let r = CompletionParams::reference();
        CompletionParams {
            rows: self.rows.unwrap_or(r.rows),
            cols: self.cols.unwrap_or(r.cols),
            rank: self.rank.unwrap_or(r.rank),
            observe_prob: self.observe_prob.unwrap_or(r.observe_prob),
            noise_range: self.noise_range.unwrap_or(r.noise_range),
            corrupt_prob: self.corrupt_prob.unwrap_or(r.corrupt_prob),
            sigma: self.sigma.unwrap_or(r.sigma),
            radius: self.radius.unwrap_or(r.radius),
            scaling: self.scaling.unwrap_or(r.scaling),
        }
    }
}

fn default_cadence() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub problem: ProblemSpec,
    pub algorithm: Algorithm,
    /// `N` for the batch, stochastic and FW methods; `T` (inner iterations)
    /// for `ncgs-vr` and `svfw`.
    pub horizon: usize,
    /// Overrides the problem's smoothness constant.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub smoothness: Option<f64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    /// Record every `cadence`-th iteration (the last one always).
    #[serde(default = "default_cadence")]
    pub cadence: usize,
    /// Fill `wall_seconds`; off by default so traces are reproducible.
    #[serde(default)]
    pub timing: bool,
    /// Step rule for `fw` and `svfw`; harmonic by default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub step_rule: Option<StepRule>,
}

/// Command-line values that replace the corresponding file values.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunOverrides {
    pub algorithm: Option<Algorithm>,
    pub horizon: Option<usize>,
    pub smoothness: Option<f64>,
    pub seed: Option<u64>,
    pub out: Option<PathBuf>,
    pub cadence: Option<usize>,
    pub timing: Option<bool>,
}

impl RunConfig {
    pub fn new(problem: ProblemSpec, algorithm: Algorithm, horizon: usize) -> Self {
        Self {
            problem,
            algorithm,
            horizon,
            smoothness: None,
            seed: 0,
            out: None,
            cadence: 1,
            timing: false,
            step_rule: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let cfg: RunConfig =
            serde_json::from_str(text).map_err(|e| HarnessError::Schema(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Unreadable {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn apply(&mut self, o: &RunOverrides) -> Result<(), HarnessError> {
        if let Some(a) = o.algorithm {
            self.algorithm = a;
        }
        if let Some(h) = o.horizon {
            self.horizon = h;
        }
        if o.smoothness.is_some() {
            self.smoothness = o.smoothness;
        }
        if let Some(s) = o.seed {
            self.seed = s;
        }
        if o.out.is_some() {
            self.out.clone_from(&o.out);
        }
        if let Some(c) = o.cadence {
            self.cadence = c;
        }
        if let Some(t) = o.timing {
            self.timing = t;
        }
        self.validate()
    }

    /// Structural checks. Parameter values that no algorithm can run with
    /// are rejected later, when the problem is built.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let schema = |m: &str| Err(HarnessError::Schema(m.to_string()));
        if self.horizon == 0 {
            return schema("horizon must be at least 1");
        }
        if self.cadence == 0 {
            return schema("cadence must be at least 1");
        }
        if let Some(l) = self.smoothness {
            if !(l > 0.0 && l.is_finite()) {
                return schema("smoothness must be positive and finite");
            }
        }
        if let ProblemSpec::Completion(c) = &self.problem {
            if let Some(path) = &c.instance {
                if !path.is_file() {
                    return Err(HarnessError::Unreadable {
                        path: path.display().to_string(),
                        source: std::io::Error::new(
                            std::io::ErrorKind::NotFound,
                            "instance file does not exist",
                        ),
                    });
                }
            }
        }
        Ok(())
    }
}
