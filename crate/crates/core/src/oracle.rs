//! Objective abstractions for the batched, stochastic and finite-sum settings,
//! plus the oracle-call ledger.
//!
//! Objectives expose raw, unmetered evaluation methods. Optimizers never call
//! those directly: they go through [`eval_grad`], [`eval_stoch_grad`] and
//! [`eval_component_grad`], which validate input and charge the matching
//! counter. Value queries are free.

use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_finite, invalid, Error, Result};
use crate::exec::Exec;
use crate::rng::Rng;

/// Upper and lower smoothness constants of an objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Smoothness {
    /// Lipschitz constant of the gradient.
    pub upper: f64,
    /// Lower smoothness (non-convexity) constant; never larger than `upper`.
    pub lower: f64,
}

impl Smoothness {
    /// `lower` defaults to `upper`.
    pub fn new(upper: f64) -> Self {
        Self {
            upper,
            lower: upper,
        }
    }

    pub fn with_lower(upper: f64, lower: f64) -> Result<Self> {
        if !(upper > 0.0) || !(lower > 0.0) || lower > upper {
            return Err(invalid(
                "smoothness",
                format!("need 0 < lower <= upper, got lower={lower}, upper={upper}"),
            ));
        }
        Ok(Self { upper, lower })
    }
}

/// A differentiable, possibly non-convex function on `R^dim`.
pub trait Objective: Sync {
    fn dim(&self) -> usize;
    fn smoothness(&self) -> Smoothness;
    fn value(&self, theta: &[f64]) -> f64;
    /// Writes the gradient into `out` (overwriting it).
    fn gradient(&self, theta: &[f64], out: &mut [f64]);
}

/// `F(θ) = E_ξ f(θ, ξ)` accessed through single-sample stochastic gradients.
pub trait StochasticObjective: Sync {
    fn dim(&self) -> usize;
    fn smoothness(&self) -> Smoothness;
    /// Bound on `E‖G(θ,ξ) − ∇F(θ)‖²`, when known.
    fn variance_bound(&self) -> Option<f64>;
    /// One draw `G(θ, ξ)` with `ξ` taken from `rng`.
    fn sample_gradient(&self, theta: &[f64], rng: &mut Rng, out: &mut [f64]);
    /// Expected value, when it can be computed.
    fn value(&self, theta: &[f64]) -> Option<f64>;
    /// Exact gradient for diagnostics. Returns `false` when unavailable.
    fn exact_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool;
}

/// `F(θ) = (1/n) Σ_i f_i(θ)`.
///
/// Implementors describe component gradients through a visitor so that sparse
/// components (one matrix entry each, for completion) stay cheap.
pub trait FiniteSumObjective: Objective {
    fn num_components(&self) -> usize;
    fn component_value(&self, i: usize, theta: &[f64]) -> f64;
    /// Calls `visit(j, ∂f_i/∂θ_j)` for every (possibly) nonzero coordinate.
    fn visit_component_gradient(&self, i: usize, theta: &[f64], visit: &mut dyn FnMut(usize, f64));

    /// Smoothness constant shared by every component.
    fn component_smoothness(&self) -> Smoothness {
        self.smoothness()
    }
}

/// Mean of the component values; a ready-made `Objective::value` for finite sums.
pub fn finite_sum_value<F: FiniteSumObjective + ?Sized>(obj: &F, theta: &[f64]) -> f64 {
    let n = obj.num_components();
    let total: f64 = (0..n).map(|i| obj.component_value(i, theta)).sum();
    total / n as f64
}

/// Mean of the component gradients; a ready-made `Objective::gradient` for
/// finite sums. Summation order is fixed (see [`Exec::chunked_sum`]).
pub fn finite_sum_gradient<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    theta: &[f64],
    exec: Exec,
    out: &mut [f64],
) {
    let n = obj.num_components();
    let total = exec.chunked_sum(n, obj.dim(), |i, acc| {
        obj.visit_component_gradient(i, theta, &mut |j, g| acc[j] += g);
    });
    for (o, t) in out.iter_mut().zip(total) {
        *o = t / n as f64;
    }
}

/// Monotone tallies of oracle calls within one run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleCounters {
    pub fo: u64,
    pub sfo: u64,
    pub ifo: u64,
    pub lo: u64,
}

impl OracleCounters {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn snapshot(&self) -> OracleCounters {
        *self
    }

    pub fn reset(&mut self) {
        *self = Self::default();
    }

    /// Componentwise `self - earlier`.
    pub fn since(&self, earlier: &OracleCounters) -> OracleCounters {
        OracleCounters {
            fo: self.fo - earlier.fo,
            sfo: self.sfo - earlier.sfo,
            ifo: self.ifo - earlier.ifo,
            lo: self.lo - earlier.lo,
        }
    }
}

fn check_point(dim: usize, theta: &[f64]) -> Result<()> {
    check_dim(dim, theta.len())?;
    check_finite(theta)
}

pub fn eval_value<O: Objective + ?Sized>(obj: &O, theta: &[f64]) -> Result<f64> {
    check_point(obj.dim(), theta)?;
    Ok(obj.value(theta))
}

/// Full gradient; charges one FO call.
pub fn eval_grad<O: Objective + ?Sized>(
    obj: &O,
    theta: &[f64],
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    check_point(obj.dim(), theta)?;
    let mut g = vec![0.0; obj.dim()];
    obj.gradient(theta, &mut g);
    counters.fo += 1;
    Ok(g)
}

/// Mini-batch average of `batch` i.i.d. stochastic gradients; charges `batch`
/// SFO calls.
///
/// The average is accumulated as a running mean, so a zero-variance sampler
/// returns its gradient bit for bit.
pub fn eval_stoch_grad<O: StochasticObjective + ?Sized>(
    obj: &O,
    theta: &[f64],
    batch: usize,
    rng: &mut Rng,
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    if batch == 0 {
        return Err(invalid("batch", "must be at least 1"));
    }
    check_point(obj.dim(), theta)?;
    let d = obj.dim();
    let mut mean = vec![0.0; d];
    let mut draw = vec![0.0; d];
    for k in 0..batch {
        obj.sample_gradient(theta, rng, &mut draw);
        let w = 1.0 / (k + 1) as f64;
        for (m, x) in mean.iter_mut().zip(&draw) {
            *m += (x - *m) * w;
        }
    }
    counters.sfo += batch as u64;
    Ok(mean)
}

/// Average of the selected component gradients (a multiset, repeats allowed);
/// charges `indices.len()` IFO calls.
pub fn eval_component_grad<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    indices: &[usize],
    theta: &[f64],
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    let n = obj.num_components();
    if indices.is_empty() {
        return Err(invalid("indices", "must select at least one component"));
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, n });
    }
    check_point(obj.dim(), theta)?;
    let mut acc = vec![0.0; obj.dim()];
    for &i in indices {
        obj.visit_component_gradient(i, theta, &mut |j, g| acc[j] += g);
    }
    for a in acc.iter_mut() {
        *a /= indices.len() as f64;
    }
    counters.ifo += indices.len() as u64;
    Ok(acc)
}

/// Treats a finite sum as a stochastic objective: each draw picks one
/// component uniformly at random.
pub struct UniformComponentSampler<'a, F: ?Sized> {
    inner: &'a F,
}

impl<'a, F: FiniteSumObjective + ?Sized> UniformComponentSampler<'a, F> {
    pub fn new(inner: &'a F) -> Self {
        Self { inner }
    }
}

impl<F: FiniteSumObjective + ?Sized> StochasticObjective for UniformComponentSampler<'_, F> {
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    fn smoothness(&self) -> Smoothness {
        self.inner.smoothness()
    }

    fn variance_bound(&self) -> Option<f64> {
        None
    }

    fn sample_gradient(&self, theta: &[f64], rng: &mut Rng, out: &mut [f64]) {
        use rand::Rng as _;
        let i = rng.random_range(0..self.inner.num_components());
        out.fill(0.0);
        self.inner
            .visit_component_gradient(i, theta, &mut |j, g| out[j] += g);
    }

    fn value(&self, theta: &[f64]) -> Option<f64> {
        Some(self.inner.value(theta))
    }

    fn exact_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.inner.gradient(theta, out);
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedTree;

    struct HalfNormSq;

    impl Objective for HalfNormSq {
        fn dim(&self) -> usize {
            2
        }
        fn smoothness(&self) -> Smoothness {
            Smoothness::new(1.0)
        }
        fn value(&self, theta: &[f64]) -> f64 {
            0.5 * crate::linalg::norm_sq(theta)
        }
        fn gradient(&self, theta: &[f64], out: &mut [f64]) {
            out.copy_from_slice(theta);
        }
    }

    /// Components `½(θ − c_i)²` in one dimension, centers 0, 1, 2.
    struct Centers(Vec<f64>);

    impl Objective for Centers {
        fn dim(&self) -> usize {
            1
        }
        fn smoothness(&self) -> Smoothness {
            Smoothness::new(1.0)
        }
        fn value(&self, theta: &[f64]) -> f64 {
            finite_sum_value(self, theta)
        }
        fn gradient(&self, theta: &[f64], out: &mut [f64]) {
            finite_sum_gradient(self, theta, Exec::Sequential, out)
        }
    }

    impl FiniteSumObjective for Centers {
        fn num_components(&self) -> usize {
            self.0.len()
        }
        fn component_value(&self, i: usize, theta: &[f64]) -> f64 {
            0.5 * (theta[0] - self.0[i]).powi(2)
        }
        fn visit_component_gradient(
            &self,
            i: usize,
            theta: &[f64],
            visit: &mut dyn FnMut(usize, f64),
        ) {
            visit(0, theta[0] - self.0[i]);
        }
    }

    /// Gradient distribution with two atoms (1,0) and (0,1).
    struct TwoAtoms;

    impl StochasticObjective for TwoAtoms {
        fn dim(&self) -> usize {
            2
        }
        fn smoothness(&self) -> Smoothness {
            Smoothness::new(1.0)
        }
        fn variance_bound(&self) -> Option<f64> {
            Some(0.5)
        }
        fn sample_gradient(&self, _theta: &[f64], rng: &mut Rng, out: &mut [f64]) {
            use rand::Rng as _;
            if rng.random_bool(0.5) {
                out.copy_from_slice(&[1.0, 0.0]);
            } else {
                out.copy_from_slice(&[0.0, 1.0]);
            }
        }
        fn value(&self, _theta: &[f64]) -> Option<f64> {
            None
        }
        fn exact_gradient(&self, _theta: &[f64], out: &mut [f64]) -> bool {
            out.copy_from_slice(&[0.5, 0.5]);
            true
        }
    }

    #[test]
    fn value_and_gradient_of_half_norm() {
        let mut c = OracleCounters::new();
        assert_eq!(eval_value(&HalfNormSq, &[0.0, 0.0]).unwrap(), 0.0);
        assert_eq!(
            eval_grad(&HalfNormSq, &[1.0, 2.0], &mut c).unwrap(),
            vec![1.0, 2.0]
        );
        assert_eq!(c.fo, 1);
        // value queries are free
        eval_value(&HalfNormSq, &[1.0, 2.0]).unwrap();
        assert_eq!(
            c,
            OracleCounters {
                fo: 1,
                ..Default::default()
            }
        );
    }

    #[test]
    fn input_validation() {
        let mut c = OracleCounters::new();
        assert!(matches!(
            eval_grad(&HalfNormSq, &[1.0], &mut c),
            Err(Error::DimensionMismatch {
                expected: 2,
                got: 1
            })
        ));
        assert!(matches!(
            eval_value(&HalfNormSq, &[1.0, f64::NAN]),
            Err(Error::NonFinite { index: 1 })
        ));
        assert_eq!(c.fo, 0);
    }

    #[test]
    fn component_gradients_against_closed_form() {
        let obj = Centers(vec![0.0, 1.0, 2.0]);
        let mut c = OracleCounters::new();
        // components at θ=0: 0, −1, −2; average of {0, 2} → (0 + −2)/2
        let g = eval_component_grad(&obj, &[0, 2], &[0.0], &mut c).unwrap();
        assert_eq!(g, vec![-1.0]);
        assert_eq!(c.ifo, 2);

        let all = eval_component_grad(&obj, &[0, 1, 2], &[0.5], &mut c).unwrap();
        let full = eval_grad(&obj, &[0.5], &mut c).unwrap();
        assert_eq!(all, full);

        assert!(matches!(
            eval_component_grad(&obj, &[3], &[0.0], &mut c),
            Err(Error::IndexOutOfRange { index: 3, n: 3 })
        ));
    }

    #[test]
    fn identical_components_single_index() {
        let obj = Centers(vec![0.7; 4]);
        let mut c = OracleCounters::new();
        let one = eval_component_grad(&obj, &[2], &[1.3], &mut c).unwrap();
        let full = eval_grad(&obj, &[1.3], &mut c).unwrap();
        assert_eq!(one, full);
    }

    #[test]
    fn stochastic_batch_metering_and_mean() {
        let mut rng = SeedTree::new(3).stream(1);
        let mut c = OracleCounters::new();
        assert!(eval_stoch_grad(&TwoAtoms, &[0.0, 0.0], 0, &mut rng, &mut c).is_err());
        eval_stoch_grad(&TwoAtoms, &[0.0, 0.0], 7, &mut rng, &mut c).unwrap();
        assert_eq!(c.sfo, 7);

        // Monte-Carlo: batch 4 averages; per-coordinate sd of a single draw is
        // 0.5, of a batch mean 0.25, of the mean over `trials` 0.25/√trials.
        let trials = 20_000;
        let mut sum = [0.0; 2];
        for _ in 0..trials {
            let g = eval_stoch_grad(&TwoAtoms, &[0.0, 0.0], 4, &mut rng, &mut c).unwrap();
            sum[0] += g[0];
            sum[1] += g[1];
        }
        let tol = 3.0 * 0.25 / (trials as f64).sqrt();
        for s in sum {
            assert!((s / trials as f64 - 0.5).abs() < tol);
        }
    }

    #[test]
    fn counters_snapshot_and_reset() {
        let mut c = OracleCounters::new();
        assert_eq!(
            c.snapshot(),
            OracleCounters {
                fo: 0,
                sfo: 0,
                ifo: 0,
                lo: 0
            }
        );
        c.fo = 3;
        let s = c.snapshot();
        c.reset();
        assert_eq!(s.fo, 3);
        assert_eq!(c, OracleCounters::default());
    }
}
