//! Robust matrix completion with the smoothed ℓ0 loss over a nuclear-norm
//! ball:
//!
//! ```text
//! min_{‖θ‖_* ≤ R}  Σ_{(i,j)∈Ω}  1 − exp(−(θ_ij − Y_ij)²/σ)
//! ```
//!
//! Matrices are stored row-major. Each observed entry is one component of the
//! finite sum. By default the sum is normalized by `|Ω|` ([`Scaling::Mean`]);
//! [`Scaling::Sum`] keeps the unnormalized reading.
//!
//! Instances serialize to JSON with the layout
//!
//! ```json
//! {"schema":"ncgs-completion/1","shape":[d1,d2],"rank":r,"seed":s,
//!  "params":{...},"observed":[[i,j,y],...]}
//! ```

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{check_positive, invalid, Error, Result};
use crate::exec::Exec;
use crate::geometry::FeasibleSet;
use crate::oracle::{finite_sum_gradient, FiniteSumObjective, Objective, Smoothness};
use crate::rng::{stream, SeedTree};

pub const INSTANCE_SCHEMA: &str = "ncgs-completion/1";

/// `1 − exp(−u²/σ)`
pub fn smoothed_l0(u: f64, sigma: f64) -> f64 {
    -(-u * u / sigma).exp_m1()
}

/// `(2u/σ) exp(−u²/σ)`
pub fn smoothed_l0_derivative(u: f64, sigma: f64) -> f64 {
    2.0 * u / sigma * (-u * u / sigma).exp()
}

/// Largest `|f''|` of the scalar loss, attained at `u = 0`: `2/σ`.
pub fn completion_smoothness(sigma: f64) -> Result<f64> {
    check_positive("sigma", sigma)?;
    Ok(2.0 / sigma)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scaling {
    /// `F = (1/|Ω|) Σ f_ij`
    #[default]
    Mean,
    /// `F = Σ f_ij`
    Sum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CompletionParams {
    pub rows: usize,
    pub cols: usize,
    pub rank: usize,
    pub observe_prob: f64,
    pub noise_range: (f64, f64),
    pub corrupt_prob: f64,
    pub sigma: f64,
    pub radius: f64,
    #[serde(default)]
    pub scaling: Scaling,
}

impl CompletionParams {
    /// 200×200, rank 5, 10% observed, 5% of observations corrupted by
    /// uniform noise on [−3, 3], σ = 1, R = 5.
    pub fn reference() -> Self {
        Self {
            rows: 200,
            cols: 200,
            rank: 5,
            observe_prob: 0.1,
            noise_range: (-3.0, 3.0),
            corrupt_prob: 0.05,
            sigma: 1.0,
            radius: 5.0,
            scaling: Scaling::Mean,
        }
    }

    /// Reference settings at another size and rank.
    pub fn sized(rows: usize, cols: usize, rank: usize) -> Self {
        Self {
            rows,
            cols,
            rank,
            ..Self::reference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.rows == 0 || self.cols == 0 {
            return Err(invalid("shape", "dimensions must be positive"));
        }
        if self.rank == 0 || self.rank > self.rows.min(self.cols) {
            return Err(invalid(
                "rank",
                format!("need 1 <= r <= {}", self.rows.min(self.cols)),
            ));
        }
        for (name, p) in [
            ("observe_prob", self.observe_prob),
            ("corrupt_prob", self.corrupt_prob),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(invalid(name, format!("{p} is not a probability")));
            }
        }
        let (lo, hi) = self.noise_range;
        if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
            return Err(invalid("noise_range", "need finite lo <= hi"));
        }
        check_positive("sigma", self.sigma)?;
        check_positive("radius", self.radius)
    }
}

/// Observed data plus (for generated instances) the clean ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct CompletionInstance {
    pub params: CompletionParams,
    pub seed: u64,
    /// `(i, j, Y_ij)` in row-major order.
    pub observed: Vec<(usize, usize, f64)>,
    pub truth: Option<Vec<f64>>,
}

#[derive(Serialize, Deserialize)]
struct InstanceFile {
    schema: String,
    shape: (usize, usize),
    rank: usize,
    seed: u64,
    params: FileParams,
    observed: Vec<(usize, usize, f64)>,
}

#[derive(Serialize, Deserialize)]
struct FileParams {
    observe_prob: f64,
    noise_range: (f64, f64),
    corrupt_prob: f64,
    sigma: f64,
    radius: f64,
    #[serde(default)]
    scaling: Scaling,
}

impl CompletionInstance {
    pub fn feasible_set(&self) -> FeasibleSet {
        FeasibleSet::NuclearBall {
            rows: self.params.rows,
            cols: self.params.cols,
            radius: self.params.radius,
        }
    }

    pub fn objective(&self) -> CompletionObjective {
        CompletionObjective::new(self)
    }

    pub fn to_json(&self) -> String {
        let p = &self.params;
        let file = InstanceFile {
            schema: INSTANCE_SCHEMA.to_string(),
            shape: (p.rows, p.cols),
            rank: p.rank,
            seed: self.seed,
            params: FileParams {
                observe_prob: p.observe_prob,
                noise_range: p.noise_range,
                corrupt_prob: p.corrupt_prob,
                sigma: p.sigma,
                radius: p.radius,
                scaling: p.scaling,
            },
            observed: self.observed.clone(),
        };
        serde_json::to_string(&file).expect("instance serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: InstanceFile =
            serde_json::from_str(text).map_err(|e| invalid("instance", e.to_string()))?;
        if file.schema != INSTANCE_SCHEMA {
            return Err(invalid(
                "schema",
                format!("expected {INSTANCE_SCHEMA}, got {}", file.schema),
            ));
        }
        let params = CompletionParams {
            rows: file.shape.0,
            cols: file.shape.1,
            rank: file.rank,
            observe_prob: file.params.observe_prob,
            noise_range: file.params.noise_range,
            corrupt_prob: file.params.corrupt_prob,
            sigma: file.params.sigma,
            radius: file.params.radius,
            scaling: file.params.scaling,
        };
        params.validate()?;
        if file.observed.is_empty() {
            return Err(Error::EmptyObservations);
        }
        let n = params.rows * params.cols;
        for &(i, j, y) in &file.observed {
            if i >= params.rows || j >= params.cols {
                return Err(Error::IndexOutOfRange {
                    index: i * params.cols + j,
                    n,
                });
            }
            if !y.is_finite() {
                return Err(invalid("observed", "values must be finite"));
            }
        }
        Ok(Self {
            params,
            seed: file.seed,
            observed: file.observed,
            truth: None,
        })
    }

    pub fn load(path: &Path) -> std::result::Result<Self, LoadError> {
        let text = std::fs::read_to_string(path)?;
        Ok(Self::from_json(&text)?)
    }
}

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Invalid(#[from] Error),
}

/// Draws an instance from the `PROBLEM` stream of `seed`:
///
/// 1. `U (d1×r)`, `V (d2×r)` i.i.d. standard normal; truth `UVᵀ` scaled so its
///    largest entry in magnitude is 1;
/// 2. each entry observed independently with `observe_prob`;
/// 3. each observed value corrupted with `corrupt_prob` by adding uniform
///    noise from `noise_range`.
pub fn generate_completion(
    params: &CompletionParams,
    seed: u64,
) -> Result<(CompletionInstance, CompletionObjective, FeasibleSet)> {
    params.validate()?;
    let mut rng = SeedTree::new(seed).stream(stream::PROBLEM);
    let (d1, d2, r) = (params.rows, params.cols, params.rank);
    let mut factor =
        |len: usize| -> Vec<f64> { (0..len).map(|_| StandardNormal.sample(&mut rng)).collect() };
    let u = factor(d1 * r);
    let v = factor(d2 * r);
    let mut truth = vec![0.0; d1 * d2];
    for i in 0..d1 {
        for j in 0..d2 {
            truth[i * d2 + j] = (0..r).map(|k| u[i * r + k] * v[j * r + k]).sum();
        }
    }
    let peak = truth.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    if peak > 0.0 {
        truth.iter_mut().for_each(|x| *x /= peak);
    }

    let (lo, hi) = params.noise_range;
    let mut observed = Vec::new();
    for i in 0..d1 {
        for j in 0..d2 {
            if rng.random_bool(params.observe_prob) {
                let mut y = truth[i * d2 + j];
                if rng.random_bool(params.corrupt_prob) {
                    y += if hi > lo {
                        rng.random_range(lo..=hi)
                    } else {
                        lo
                    };
                }
                observed.push((i, j, y));
            }
        }
    }
    if observed.is_empty() {
        return Err(Error::EmptyObservations);
    }
    let instance = CompletionInstance {
        params: *params,
        seed,
        observed,
        truth: Some(truth),
    };
    let objective = instance.objective();
    let set = instance.feasible_set();
    Ok((instance, objective, set))
}

/// The completion loss as a finite sum over observed entries.
#[derive(Debug, Clone)]
pub struct CompletionObjective {
    rows: usize,
    cols: usize,
    /// `(flat index, Y)`
    entries: Vec<(usize, f64)>,
    sigma: f64,
    scaling: Scaling,
    exec: Exec,
}

impl CompletionObjective {
    pub fn new(instance: &CompletionInstance) -> Self {
        let p = &instance.params;
        Self {
            rows: p.rows,
            cols: p.cols,
            entries: instance
                .observed
                .iter()
                .map(|&(i, j, y)| (i * p.cols + j, y))
                .collect(),
            sigma: p.sigma,
            scaling: p.scaling,
            exec: Exec::default(),
        }
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn with_scaling(mut self, scaling: Scaling) -> Self {
        self.scaling = scaling;
        self
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn scaling(&self) -> Scaling {
        self.scaling
    }

    /// Factor turning a per-entry loss into a component of the mean.
    fn component_weight(&self) -> f64 {
        match self.scaling {
            Scaling::Mean => 1.0,
            Scaling::Sum => self.entries.len() as f64,
        }
    }
}

impl Objective for CompletionObjective {
    fn dim(&self) -> usize {
        self.rows * self.cols
    }

    /// `2/σ` for either scaling. Components touch disjoint entries, so the
    /// Hessian is diagonal with entries `f''(u)/|Ω|` (mean) or `f''(u)` (sum).
    fn smoothness(&self) -> Smoothness {
        Smoothness::new(2.0 / self.sigma)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        let total: f64 = self
            .entries
            .iter()
            .map(|&(k, y)| smoothed_l0(theta[k] - y, self.sigma))
            .sum();
        match self.scaling {
            Scaling::Mean => total / self.entries.len() as f64,
            Scaling::Sum => total,
        }
    }

    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        finite_sum_gradient(self, theta, self.exec, out)
    }
}

impl FiniteSumObjective for CompletionObjective {
    fn num_components(&self) -> usize {
        self.entries.len()
    }

    fn component_value(&self, i: usize, theta: &[f64]) -> f64 {
        let (k, y) = self.entries[i];
        self.component_weight() * smoothed_l0(theta[k] - y, self.sigma)
    }

    fn visit_component_gradient(&self, i: usize, theta: &[f64], visit: &mut dyn FnMut(usize, f64)) {
        let (k, y) = self.entries[i];
        visit(
            k,
            self.component_weight() * smoothed_l0_derivative(theta[k] - y, self.sigma),
        );
    }

    fn component_smoothness(&self) -> Smoothness {
        Smoothness::new(self.component_weight() * 2.0 / self.sigma)
    }
}
