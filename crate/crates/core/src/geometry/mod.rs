//! Compact convex feasible sets: linear-minimization oracles, exact Euclidean
//! projections, the prox-mapping `ψ(x, ω, γ)` and the gradient mapping used as
//! the stationarity measure.
//!
//! Linear oracles are the only set access the optimizers use. Projections
//! exist to evaluate the gradient mapping, which is a reporting metric and
//! never charged to any counter.

pub mod spectral;

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, check_positive, invalid, Error, Result};
use crate::exec::Exec;
use crate::linalg::{norm, norm_l1};
use crate::oracle::OracleCounters;
use crate::rng::{stream, Rng, SeedTree};

pub use spectral::{
    lanczos_top_pair, nuclear_norm, power_iteration, top_singular_pair, SingularPair,
};

/// Membership slack used by [`FeasibleSet::contains_default`].
pub const MEMBERSHIP_TOL: f64 = 1e-9;

/// Relative size of the random perturbation added to nuclear-oracle warm
/// starts.
const WARM_NOISE: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum FeasibleSet {
    /// `[lower, upper]^dim`
    Box {
        dim: usize,
        lower: f64,
        upper: f64,
    },
    /// `{x ≥ 0, Σx = radius}`
    Simplex {
        dim: usize,
        radius: f64,
    },
    L1Ball {
        dim: usize,
        radius: f64,
    },
    L2Ball {
        dim: usize,
        radius: f64,
    },
    /// Matrices (row-major) with nuclear norm at most `radius`.
    NuclearBall {
        rows: usize,
        cols: usize,
        radius: f64,
    },
}

impl FeasibleSet {
    pub fn unit_box(dim: usize) -> Self {
        FeasibleSet::Box {
            dim,
            lower: -1.0,
            upper: 1.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            FeasibleSet::Box { dim, lower, upper } => {
                if dim == 0 {
                    return Err(invalid("dim", "must be positive"));
                }
                if !(lower <= upper) || !lower.is_finite() || !upper.is_finite() {
                    return Err(invalid(
                        "bounds",
                        format!("need finite lower <= upper, got [{lower}, {upper}]"),
                    ));
                }
                Ok(())
            }
            FeasibleSet::Simplex { dim, radius }
            | FeasibleSet::L1Ball { dim, radius }
            | FeasibleSet::L2Ball { dim, radius } => {
                if dim == 0 {
                    return Err(invalid("dim", "must be positive"));
                }
                check_positive("radius", radius)
            }
            FeasibleSet::NuclearBall { rows, cols, radius } => {
                if rows == 0 || cols == 0 {
                    return Err(invalid("shape", "must be positive"));
                }
                check_positive("radius", radius)
            }
        }
    }

    pub fn dim(&self) -> usize {
        match *self {
            FeasibleSet::Box { dim, .. }
            | FeasibleSet::Simplex { dim, .. }
            | FeasibleSet::L1Ball { dim, .. }
            | FeasibleSet::L2Ball { dim, .. } => dim,
            FeasibleSet::NuclearBall { rows, cols, .. } => rows * cols,
        }
    }

    pub fn kind_name(&self) -> &'static str {
        match self {
            FeasibleSet::Box { .. } => "box",
            FeasibleSet::Simplex { .. } => "simplex",
            FeasibleSet::L1Ball { .. } => "l1_ball",
            FeasibleSet::L2Ball { .. } => "l2_ball",
            FeasibleSet::NuclearBall { .. } => "nuclear_ball",
        }
    }

    /// Euclidean diameter.
    pub fn diameter(&self) -> f64 {
        match *self {
            FeasibleSet::Box { dim, lower, upper } => (upper - lower) * (dim as f64).sqrt(),
            FeasibleSet::Simplex { dim, radius } => {
                if dim == 1 {
                    0.0
                } else {
                    radius * 2f64.sqrt()
                }
            }
            FeasibleSet::L1Ball { radius, .. }
            | FeasibleSet::L2Ball { radius, .. }
            | FeasibleSet::NuclearBall { radius, .. } => 2.0 * radius,
        }
    }

    /// `max_{θ∈Ω} ‖θ‖`, a valid `M` for `‖ψ(x, ω, γ)‖ ≤ M`.
    pub fn norm_bound(&self) -> f64 {
        match *self {
            FeasibleSet::Box { dim, lower, upper } => {
                lower.abs().max(upper.abs()) * (dim as f64).sqrt()
            }
            FeasibleSet::Simplex { radius, .. }
            | FeasibleSet::L1Ball { radius, .. }
            | FeasibleSet::L2Ball { radius, .. }
            | FeasibleSet::NuclearBall { radius, .. } => radius,
        }
    }

    /// How far `x` is from satisfying the set's defining inequalities
    /// (0 when feasible).
    pub fn violation(&self, x: &[f64]) -> f64 {
        match *self {
            FeasibleSet::Box { lower, upper, .. } => x
                .iter()
                .map(|&v| (lower - v).max(v - upper).max(0.0))
                .fold(0.0, f64::max),
            FeasibleSet::Simplex { radius, .. } => {
                let neg = x.iter().map(|&v| (-v).max(0.0)).fold(0.0, f64::max);
                let sum: f64 = x.iter().sum();
                neg.max((sum - radius).abs())
            }
            FeasibleSet::L1Ball { radius, .. } => (norm_l1(x) - radius).max(0.0),
            FeasibleSet::L2Ball { radius, .. } => (norm(x) - radius).max(0.0),
            FeasibleSet::NuclearBall { rows, cols, radius } => {
                (nuclear_norm(x, rows, cols) - radius).max(0.0)
            }
        }
    }

    /// Membership with slack `tol · max(1, scale)` where `scale` is the set's
    /// norm bound.
    pub fn contains(&self, x: &[f64], tol: f64) -> bool {
        x.len() == self.dim() && self.violation(x) <= tol * self.norm_bound().max(1.0)
    }

    pub fn contains_default(&self, x: &[f64]) -> bool {
        self.contains(x, MEMBERSHIP_TOL)
    }

    /// Minimizer of `⟨θ, 0⟩`: the canonical (lowest-index, positive) vertex.
    pub fn canonical_vertex(&self) -> Vec<f64> {
        let mut v = vec![0.0; self.dim()];
        match *self {
            FeasibleSet::Box { upper, .. } => v.fill(upper),
            FeasibleSet::Simplex { radius, .. }
            | FeasibleSet::L1Ball { radius, .. }
            | FeasibleSet::L2Ball { radius, .. }
            | FeasibleSet::NuclearBall { radius, .. } => v[0] = radius,
        }
        v
    }

    /// Exact Euclidean projection.
    pub fn project(&self, x: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.dim(), x.len())?;
        check_finite(x)?;
        Ok(match *self {
            FeasibleSet::Box { lower, upper, .. } => {
                x.iter().map(|v| v.clamp(lower, upper)).collect()
            }
            FeasibleSet::Simplex { radius, .. } => project_simplex(x, radius),
            FeasibleSet::L1Ball { radius, .. } => project_l1_ball(x, radius),
            FeasibleSet::L2Ball { radius, .. } => {
                let n = norm(x);
                if n <= radius {
                    x.to_vec()
                } else {
                    x.iter().map(|v| v * radius / n).collect()
                }
            }
            FeasibleSet::NuclearBall { rows, cols, radius } => {
                spectral::project_nuclear(x, rows, cols, radius)
            }
        })
    }
}

/// Projection onto `{x ≥ 0, Σx = radius}` by sorting.
pub fn project_simplex(x: &[f64], radius: f64) -> Vec<f64> {
    let mut sorted = x.to_vec();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut tau = 0.0;
    for (j, &s) in sorted.iter().enumerate() {
        cumsum += s;
        let t = (cumsum - radius) / (j + 1) as f64;
        if s - t > 0.0 {
            tau = t;
        }
    }
    x.iter().map(|v| (v - tau).max(0.0)).collect()
}

/// Projection onto `{‖x‖₁ ≤ radius}`.
pub fn project_l1_ball(x: &[f64], radius: f64) -> Vec<f64> {
    if norm_l1(x) <= radius {
        return x.to_vec();
    }
    let abs: Vec<f64> = x.iter().map(|v| v.abs()).collect();
    project_simplex(&abs, radius)
        .into_iter()
        .zip(x)
        .map(|(p, v)| if *v < 0.0 { -p } else { p })
        .collect()
}

/// Top-singular-pair solver settings for the nuclear-ball oracle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PowerSettings {
    pub tol: f64,
    /// `None` means `10 · max(rows, cols)`.
    pub max_iter: Option<usize>,
}

impl Default for PowerSettings {
    fn default() -> Self {
        Self {
            tol: 1e-8,
            max_iter: None,
        }
    }
}

/// Per-run linear-minimization oracle.
///
/// Holds the warm start for the nuclear-ball singular-pair solver and counts the
/// calls whose solver did not certify its residual.
pub struct LinearOracle<'s> {
    set: &'s FeasibleSet,
    power: PowerSettings,
    exec: Exec,
    rng: Rng,
    warm: Option<Vec<f64>>,
    unconverged: u64,
    last_converged: bool,
}

impl<'s> LinearOracle<'s> {
    pub fn new(set: &'s FeasibleSet, seeds: &SeedTree) -> Self {
        Self {
            set,
            power: PowerSettings::default(),
            exec: Exec::default(),
            rng: seeds.stream(stream::LINEAR_ORACLE),
            warm: None,
            unconverged: 0,
            last_converged: true,
        }
    }

    pub fn with_power(mut self, power: PowerSettings) -> Self {
        self.power = power;
        self
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }

    pub fn set(&self) -> &'s FeasibleSet {
        self.set
    }

    /// Number of nuclear-ball calls whose power iteration hit its budget.
    /// Those calls fall back to a dense SVD, so their output is still exact.
    pub fn unconverged_calls(&self) -> u64 {
        self.unconverged
    }

    pub fn last_converged(&self) -> bool {
        self.last_converged
    }

    /// `argmin_{θ∈Ω} ⟨θ, g⟩`; charges one LO call. Ties go to the lowest index
    /// (and to the upper bound / positive sign for a zero coordinate).
    pub fn minimize(&mut self, g: &[f64], counters: &mut OracleCounters) -> Result<Vec<f64>> {
        check_dim(self.set.dim(), g.len())?;
        check_finite(g)?;
        counters.lo += 1;
        self.last_converged = true;
        let mut v = vec![0.0; g.len()];
        match *self.set {
            FeasibleSet::Box { lower, upper, .. } => {
                for (vi, gi) in v.iter_mut().zip(g) {
                    *vi = if *gi > 0.0 { lower } else { upper };
                }
            }
            FeasibleSet::Simplex { radius, .. } => {
                let i = argmin_first(g.iter().copied());
                v[i] = radius;
            }
            FeasibleSet::L1Ball { radius, .. } => {
                let i = argmin_first(g.iter().map(|x| -x.abs()));
                v[i] = if g[i] > 0.0 { -radius } else { radius };
            }
            FeasibleSet::L2Ball { radius, .. } => {
                let n = norm(g);
                if n == 0.0 {
                    v[0] = radius;
                } else {
                    for (vi, gi) in v.iter_mut().zip(g) {
                        *vi = -radius * gi / n;
                    }
                }
            }
            FeasibleSet::NuclearBall { rows, cols, radius } => {
                let max_iter = self.power.max_iter.unwrap_or(10 * rows.max(cols));
                // A residual test cannot tell the top pair from another
                // singular pair, so the warm start gets a random component:
                // it keeps a non-negligible projection on the top vector
                // even when singular values cross between calls.
                use rand_distr::{Distribution, StandardNormal};
                let noise: Vec<f64> = (0..cols)
                    .map(|_| StandardNormal.sample(&mut self.rng))
                    .collect();
                let start: Vec<f64> = match &self.warm {
                    Some(w) => {
                        let scale = WARM_NOISE / (cols as f64).sqrt();
                        w.iter().zip(&noise).map(|(wi, z)| wi + scale * z).collect()
                    }
                    None => noise,
                };
                let mut pair =
                    lanczos_top_pair(g, rows, cols, &start, self.power.tol, max_iter, self.exec);
                if !pair.converged {
                    // near-degenerate top of the spectrum: fall back to a
                    // dense SVD so the returned vertex stays exact
                    self.unconverged += 1;
                    self.last_converged = false;
                    pair = spectral::dense_top_pair(g, rows, cols);
                }
                if pair.s == 0.0 {
                    v[0] = radius;
                } else {
                    for i in 0..rows {
                        let ui = -radius * pair.u[i];
                        for (vij, vj) in v[i * cols..(i + 1) * cols].iter_mut().zip(&pair.v) {
                            *vij = ui * vj;
                        }
                    }
                    self.warm = Some(pair.v);
                }
            }
        }
        Ok(v)
    }
}

fn argmin_first(values: impl Iterator<Item = f64>) -> usize {
    let mut best = f64::INFINITY;
    let mut idx = 0;
    for (i, x) in values.enumerate() {
        if x < best {
            best = x;
            idx = i;
        }
    }
    idx
}

/// One-shot oracle call without warm-start state.
pub fn linear_oracle(
    set: &FeasibleSet,
    g: &[f64],
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    LinearOracle::new(set, &SeedTree::new(0)).minimize(g, counters)
}

/// `ψ(x, ω, γ) = argmin_{θ∈Ω} ⟨ω,θ⟩ + ‖θ − x‖²/(2γ) = P_Ω(x − γω)`.
pub fn prox_map(set: &FeasibleSet, x: &[f64], omega: &[f64], gamma: f64) -> Result<Vec<f64>> {
    check_positive("gamma", gamma)?;
    check_dim(set.dim(), x.len())?;
    check_dim(set.dim(), omega.len())?;
    let shifted: Vec<f64> = x.iter().zip(omega).map(|(a, w)| a - gamma * w).collect();
    set.project(&shifted)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientMapping {
    pub gamma: f64,
    pub value: Vec<f64>,
}

impl GradientMapping {
    pub fn norm_sq(&self) -> f64 {
        crate::linalg::norm_sq(&self.value)
    }
}

/// `g(θ, ∇, γ) = (θ − ψ(θ, ∇, γ))/γ` via exact projection. Unmetered.
pub fn gradient_mapping(
    set: &FeasibleSet,
    theta: &[f64],
    grad: &[f64],
    gamma: f64,
) -> Result<GradientMapping> {
    let p = prox_map(set, theta, grad, gamma)?;
    let value = theta.iter().zip(&p).map(|(t, q)| (t - q) / gamma).collect();
    Ok(GradientMapping { gamma, value })
}

pub(crate) fn ensure_member(set: &FeasibleSet, x: &[f64]) -> Result<()> {
    check_dim(set.dim(), x.len())?;
    let violation = set.violation(x);
    if violation <= MEMBERSHIP_TOL * set.norm_bound().max(1.0) {
        Ok(())
    } else {
        Err(Error::Infeasible { violation })
    }
}
