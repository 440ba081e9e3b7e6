//! Known-optimum quadratics used to check rates and bounds.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{check_finite, check_positive, invalid, Result};
use crate::exec::Exec;
use crate::geometry::FeasibleSet;
use crate::linalg::dist_sq;
use crate::oracle::{
    finite_sum_gradient, finite_sum_value, FiniteSumObjective, Objective, Smoothness,
    StochasticObjective,
};
use crate::rng::{stream, Rng, SeedTree};

/// `F(θ) = ½‖θ − c‖²`, `L = 1`.
#[derive(Debug, Clone, PartialEq)]
pub struct Quadratic {
    pub center: Vec<f64>,
}

impl Objective for Quadratic {
    fn dim(&self) -> usize {
        self.center.len()
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::new(1.0)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        0.5 * dist_sq(theta, &self.center)
    }

    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        for ((o, t), c) in out.iter_mut().zip(theta).zip(&self.center) {
            *o = t - c;
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticInstance {
    pub objective: Quadratic,
    pub set: FeasibleSet,
    /// `θ* = Π(c)`
    pub minimizer: Vec<f64>,
    pub optimal_value: f64,
}

pub fn make_quadratic(center: Vec<f64>, set: FeasibleSet) -> Result<QuadraticInstance> {
    set.validate()?;
    crate::error::check_dim(set.dim(), center.len())?;
    check_finite(&center)?;
    let minimizer = set.project(&center)?;
    let optimal_value = 0.5 * dist_sq(&minimizer, &center);
    Ok(QuadraticInstance {
        objective: Quadratic { center },
        set,
        minimizer,
        optimal_value,
    })
}

/// Center with entries uniform on `[−half_width, half_width]`, drawn from the
/// problem stream.
pub fn random_center(dim: usize, half_width: f64, seeds: &SeedTree) -> Result<Vec<f64>> {
    check_positive("half_width", half_width)?;
    let mut rng = seeds.stream(stream::PROBLEM);
    Ok((0..dim)
        .map(|_| rng.random_range(-half_width..half_width))
        .collect())
}

/// `½‖θ − c‖²` observed through `G(θ, ξ) = θ − c + ξ` with
/// `ξ ~ N(0, (σ²/d) I)`, so `E‖ξ‖² = σ²`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoisyQuadratic {
    pub base: Quadratic,
    pub sigma2: f64,
}

impl NoisyQuadratic {
    pub fn new(center: Vec<f64>, sigma2: f64) -> Result<Self> {
        if center.is_empty() {
            return Err(invalid("center", "must be nonempty"));
        }
        if !(sigma2 >= 0.0) || !sigma2.is_finite() {
            return Err(invalid("sigma2", "must be finite and nonnegative"));
        }
        check_finite(&center)?;
        Ok(Self {
            base: Quadratic { center },
            sigma2,
        })
    }
}

impl StochasticObjective for NoisyQuadratic {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn smoothness(&self) -> Smoothness {
        Smoothness::new(1.0)
    }

    fn variance_bound(&self) -> Option<f64> {
        Some(self.sigma2)
    }

    fn sample_gradient(&self, theta: &[f64], rng: &mut Rng, out: &mut [f64]) {
        self.base.gradient(theta, out);
        if self.sigma2 > 0.0 {
            let sd = (self.sigma2 / self.dim() as f64).sqrt();
            for o in out.iter_mut() {
                let z: f64 = StandardNormal.sample(rng);
                *o += sd * z;
            }
        }
    }

    fn value(&self, theta: &[f64]) -> Option<f64> {
        Some(self.base.value(theta))
    }

    fn exact_gradient(&self, theta: &[f64], out: &mut [f64]) -> bool {
        self.base.gradient(theta, out);
        true
    }
}

/// `F(θ) = (1/n) Σ_i f_i(θ)` with separable components
/// `f_i(θ) = ½ Σ_j a_ij (θ_j − c_ij)²`. Curvatures differ across components, so
/// the estimator variance is genuinely nonzero.
#[derive(Debug, Clone, PartialEq)]
pub struct FiniteSumQuadratic {
    dim: usize,
    /// Row-major `n × d`.
    curvature: Vec<f64>,
    centers: Vec<f64>,
    exec: Exec,
}

impl FiniteSumQuadratic {
    pub fn new(dim: usize, curvature: Vec<f64>, centers: Vec<f64>) -> Result<Self> {
        if dim == 0 || curvature.is_empty() || !curvature.len().is_multiple_of(dim) {
            return Err(invalid("curvature", "must be a nonempty n × d array"));
        }
        crate::error::check_dim(curvature.len(), centers.len())?;
        check_finite(&curvature)?;
        check_finite(&centers)?;
        if curvature.iter().any(|&a| a <= 0.0) {
            return Err(invalid("curvature", "entries must be positive"));
        }
        Ok(Self {
            dim,
            curvature,
            centers,
            exec: Exec::default(),
        })
    }

    /// Curvatures uniform in `[0.1, 1]·max_curvature`, centers `N(0, 0.25)`.
    pub fn random(
        components: usize,
        dim: usize,
        max_curvature: f64,
        seeds: &SeedTree,
    ) -> Result<Self> {
        check_positive("max_curvature", max_curvature)?;
        if components == 0 {
            return Err(invalid("n", "need at least one component"));
        }
        let mut rng = seeds.stream(stream::PROBLEM);
        let normal = Normal::new(0.0, 0.5).expect("valid normal");
        let size = components * dim;
        let curvature = (0..size)
            .map(|_| max_curvature * rng.random_range(0.1..=1.0))
            .collect();
        let centers = (0..size).map(|_| normal.sample(&mut rng)).collect();
        Self::new(dim, curvature, centers)
    }

    pub fn with_exec(mut self, exec: Exec) -> Self {
        self.exec = exec;
        self
    }
}

impl Objective for FiniteSumQuadratic {
    fn dim(&self) -> usize {
        self.dim
    }

    /// `max_j mean_i a_ij`
    fn smoothness(&self) -> Smoothness {
        let n = self.num_components() as f64;
        let upper = (0..self.dim)
            .map(|j| self.curvature.iter().skip(j).step_by(self.dim).sum::<f64>() / n)
            .fold(0.0, f64::max);
        Smoothness::new(upper)
    }

    fn value(&self, theta: &[f64]) -> f64 {
        finite_sum_value(self, theta)
    }

    fn gradient(&self, theta: &[f64], out: &mut [f64]) {
        finite_sum_gradient(self, theta, self.exec, out)
    }
}

impl FiniteSumObjective for FiniteSumQuadratic {
    fn num_components(&self) -> usize {
        self.curvature.len() / self.dim
    }

    fn component_value(&self, i: usize, theta: &[f64]) -> f64 {
        let row = i * self.dim..(i + 1) * self.dim;
        let (a, c) = (&self.curvature[row.clone()], &self.centers[row]);
        (0..self.dim)
            .map(|j| 0.5 * a[j] * (theta[j] - c[j]).powi(2))
            .sum()
    }

    fn visit_component_gradient(&self, i: usize, theta: &[f64], visit: &mut dyn FnMut(usize, f64)) {
        let row = i * self.dim..(i + 1) * self.dim;
        let (a, c) = (&self.curvature[row.clone()], &self.centers[row]);
        for (j, ((aj, cj), t)) in a.iter().zip(c).zip(theta).enumerate() {
            visit(j, aj * (t - cj));
        }
    }

    /// `max_ij a_ij`
    fn component_smoothness(&self) -> Smoothness {
        Smoothness::new(self.curvature.iter().copied().fold(0.0, f64::max))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::gradient_mapping;
    use crate::oracle::{eval_stoch_grad, OracleCounters};

    #[test]
    fn feasible_and_infeasible_centers() {
        let q = make_quadratic(vec![0.2, -0.5], FeasibleSet::unit_box(2)).unwrap();
        assert_eq!(q.minimizer, vec![0.2, -0.5]);
        assert_eq!(q.optimal_value, 0.0);

        let q = make_quadratic(vec![2.0, -0.5, -3.0], FeasibleSet::unit_box(3)).unwrap();
        assert_eq!(q.minimizer, vec![1.0, -0.5, -1.0]);
        assert_eq!(q.optimal_value, 0.5 * (1.0 + 4.0));

        let mut g = vec![0.0; 3];
        q.objective.gradient(&q.minimizer, &mut g);
        let gm = gradient_mapping(&q.set, &q.minimizer, &g, 0.5).unwrap();
        assert!(gm.norm_sq() < 1e-24);
        assert!(make_quadratic(vec![0.0], FeasibleSet::unit_box(2)).is_err());
    }

    #[test]
    fn noisy_quadratic_unbiased_with_bounded_variance() {
        let nq = NoisyQuadratic::new(vec![0.5, -0.5, 0.0, 1.0], 1.0).unwrap();
        let theta = [0.1, 0.2, 0.3, 0.4];
        let mut exact = vec![0.0; 4];
        nq.exact_gradient(&theta, &mut exact);
        let mut rng = SeedTree::new(4).stream(0);
        let draws = 10_000;
        let mut mean = [0.0; 4];
        let mut var = 0.0;
        let mut g = vec![0.0; 4];
        for _ in 0..draws {
            nq.sample_gradient(&theta, &mut rng, &mut g);
            var += dist_sq(&g, &exact) / draws as f64;
            for (m, x) in mean.iter_mut().zip(&g) {
                *m += x / draws as f64;
            }
        }
        assert!(var <= 1.05);
        let sd = (1.0f64 / 4.0).sqrt() / (draws as f64).sqrt();
        for (m, e) in mean.iter().zip(&exact) {
            assert!((m - e).abs() <= 3.0 * sd);
        }

        // batch average has variance σ²/m
        let mut c = OracleCounters::new();
        let trials = 10_000;
        let mut bvar = 0.0;
        for _ in 0..trials {
            let gb = eval_stoch_grad(&nq, &theta, 8, &mut rng, &mut c).unwrap();
            bvar += dist_sq(&gb, &exact) / trials as f64;
        }
        assert!(bvar <= 1.0 / 8.0 * 1.05);
        assert!(NoisyQuadratic::new(vec![1.0], -1.0).is_err());
    }

    #[test]
    fn finite_sum_consistency() {
        let f = FiniteSumQuadratic::random(7, 3, 2.0, &SeedTree::new(1)).unwrap();
        let theta = [0.3, -0.2, 0.9];
        let mean: f64 = (0..7).map(|i| f.component_value(i, &theta)).sum::<f64>() / 7.0;
        assert_eq!(f.value(&theta), mean);
        // finite differences of the full objective
        let mut g = vec![0.0; 3];
        f.gradient(&theta, &mut g);
        for j in 0..3 {
            let mut p = theta;
            let mut m = theta;
            p[j] += 1e-6;
            m[j] -= 1e-6;
            let fd = (f.value(&p) - f.value(&m)) / 2e-6;
            assert!((fd - g[j]).abs() < 1e-6);
        }
        let ls = f.smoothness().upper;
        let lc = f.component_smoothness().upper;
        assert!(ls <= lc && lc <= 2.0);
    }
}
