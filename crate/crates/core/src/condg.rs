//! Inner conditional-gradient procedure.
//!
//! `condg(l, u, λ, η)` approximately minimizes the prox subproblem
//! `φ(x) = ⟨l, x⟩ + ‖x − u‖²/(2λ)` over the feasible set using only the linear
//! oracle. Each outer step spends exactly one oracle call: the oracle output
//! for the direction `∇φ(u_t) = l + (u_t − u)/λ` is both the Frank–Wolfe vertex
//! and the maximizer in the gap `V(u_t) = ⟨∇φ(u_t), u_t − v_t⟩`. The step size
//! is the exact line search on `φ`, clipped to `[0, 1]`.

use crate::error::{check_dim, check_positive, invalid, Result};
use crate::geometry::{ensure_member, LinearOracle};
use crate::linalg::{dot, norm_sq};
use crate::oracle::OracleCounters;

#[derive(Debug, Clone, PartialEq)]
pub struct CondgResult {
    /// `u⁺`
    pub point: Vec<f64>,
    pub lo_calls: u64,
    /// Last evaluated gap `V(u_t)`.
    pub final_gap: f64,
    /// `final_gap ≤ η` was certified for `point`.
    pub converged: bool,
}

/// `ceil(1/(λη)) + 16`
pub fn default_max_iter(lambda: f64, eta: f64) -> usize {
    let budget = (1.0 / (lambda * eta)).ceil();
    if budget.is_finite() && budget < 1e9 {
        budget as usize + 16
    } else {
        1_000_000_000
    }
}

/// Runs the procedure from `u`, which must lie in the oracle's set.
///
/// `max_iter` caps the number of oracle calls (`None` uses
/// [`default_max_iter`]). Running out of budget is reported via
/// `converged = false` with the latest iterate, which has the lowest
/// subproblem value seen so far.
pub fn condg(
    oracle: &mut LinearOracle<'_>,
    l: &[f64],
    u: &[f64],
    lambda: f64,
    eta: f64,
    max_iter: Option<usize>,
    counters: &mut OracleCounters,
) -> Result<CondgResult> {
    ensure_member(oracle.set(), u)?;
    condg_from_feasible(oracle, l, u, lambda, eta, max_iter, counters)
}

/// As [`condg`] but trusts that `u` is feasible. The optimizers use this for
/// iterates that are convex combinations of oracle outputs.
pub(crate) fn condg_from_feasible(
    oracle: &mut LinearOracle<'_>,
    l: &[f64],
    u: &[f64],
    lambda: f64,
    eta: f64,
    max_iter: Option<usize>,
    counters: &mut OracleCounters,
) -> Result<CondgResult> {
    check_positive("lambda", lambda)?;
    check_positive("eta", eta)?;
    check_dim(u.len(), l.len())?;
    let max_iter = max_iter.unwrap_or_else(|| default_max_iter(lambda, eta));
    if max_iter == 0 {
        return Err(invalid("max_iter", "must be at least 1"));
    }

    let d = u.len();
    let mut ut = u.to_vec();
    let mut dir = vec![0.0; d];
    let mut step = vec![0.0; d];
    let mut gap = f64::INFINITY;
    let mut calls = 0u64;
    while (calls as usize) < max_iter {
        for i in 0..d {
            dir[i] = l[i] + (ut[i] - u[i]) / lambda;
        }
        let v = oracle.minimize(&dir, counters)?;
        calls += 1;
        for i in 0..d {
            step[i] = v[i] - ut[i];
        }
        gap = -dot(&dir, &step);
        if gap <= eta {
            return Ok(CondgResult {
                point: ut,
                lo_calls: calls,
                final_gap: gap,
                converged: true,
            });
        }
        let denom = norm_sq(&step) / lambda;
        if denom == 0.0 {
            // v_t = u_t: the gap is exactly zero
            return Ok(CondgResult {
                point: ut,
                lo_calls: calls,
                final_gap: 0.0,
                converged: true,
            });
        }
        let xi = (gap / denom).min(1.0);
        for i in 0..d {
            ut[i] += xi * step[i];
        }
    }
    Ok(CondgResult {
        point: ut,
        lo_calls: calls,
        final_gap: gap,
        converged: false,
    })
}

/// `g̃ = (u − u⁺)/λ`
pub fn approx_gradient_mapping(u: &[f64], u_plus: &[f64], lambda: f64) -> Result<Vec<f64>> {
    check_positive("lambda", lambda)?;
    check_dim(u.len(), u_plus.len())?;
    Ok(u.iter()
        .zip(u_plus)
        .map(|(a, b)| (a - b) / lambda)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{gradient_mapping, prox_map, FeasibleSet};
    use crate::linalg::dist_sq;
    use crate::rng::SeedTree;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn run(set: &FeasibleSet, l: &[f64], u: &[f64], lambda: f64, eta: f64) -> CondgResult {
        let mut oracle = LinearOracle::new(set, &SeedTree::new(0));
        condg(
            &mut oracle,
            l,
            u,
            lambda,
            eta,
            None,
            &mut OracleCounters::new(),
        )
        .unwrap()
    }

    #[test]
    fn zero_direction_returns_start() {
        let set = FeasibleSet::unit_box(3);
        let u = [0.1, -0.2, 0.3];
        let r = run(&set, &[0.0; 3], &u, 0.7, 1e-3);
        assert_eq!(r.point, u.to_vec());
        assert_eq!(r.lo_calls, 1);
        assert_eq!(r.final_gap, 0.0);
        assert!(r.converged);
    }

    #[test]
    fn hand_traced_interval() {
        // φ(x) = 2x + (x − 1)², V(1) = 4, ξ₁ = 4/8 = 0.5 → u₂ = 0, V(0) = 0
        let set = FeasibleSet::unit_box(1);
        let r = run(&set, &[2.0], &[1.0], 0.5, 0.01);
        assert_eq!(r.point, vec![0.0]);
        assert_eq!(r.lo_calls, 2);
        assert!(r.converged);
        assert_eq!(prox_map(&set, &[1.0], &[2.0], 0.5).unwrap(), vec![0.0]);
        assert_eq!(
            approx_gradient_mapping(&[1.0], &r.point, 0.5).unwrap(),
            vec![2.0]
        );
    }

    #[test]
    fn rejects_bad_input() {
        let set = FeasibleSet::unit_box(1);
        let mut oracle = LinearOracle::new(&set, &SeedTree::new(0));
        let mut c = OracleCounters::new();
        assert!(condg(&mut oracle, &[1.0], &[2.0], 0.5, 0.1, None, &mut c).is_err());
        assert!(condg(&mut oracle, &[1.0], &[0.0], 0.0, 0.1, None, &mut c).is_err());
        assert!(condg(&mut oracle, &[1.0], &[0.0], 0.5, -1.0, None, &mut c).is_err());
        assert!(approx_gradient_mapping(&[1.0], &[1.0], 0.0).is_err());
        assert_eq!(
            approx_gradient_mapping(&[1.0], &[1.0], 2.0).unwrap(),
            vec![0.0]
        );
    }

    #[test]
    fn budget_exhaustion_is_flagged() {
        let set = FeasibleSet::Simplex {
            dim: 50,
            radius: 1.0,
        };
        let l: Vec<f64> = (0..50).map(|i| (i as f64 * 0.37).sin()).collect();
        let mut oracle = LinearOracle::new(&set, &SeedTree::new(0));
        let r = condg(
            &mut oracle,
            &l,
            &set.canonical_vertex(),
            0.1,
            1e-9,
            Some(3),
            &mut OracleCounters::new(),
        )
        .unwrap();
        assert!(!r.converged);
        assert_eq!(r.lo_calls, 3);
        assert!(set.contains_default(&r.point));
    }

    fn random_instance(
        rng: &mut crate::rng::Rng,
        set: &FeasibleSet,
    ) -> (Vec<f64>, Vec<f64>, f64, f64) {
        let d = set.dim();
        let l: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let raw: Vec<f64> = (0..d).map(|_| StandardNormal.sample(rng)).collect();
        let u = set.project(&raw).unwrap();
        let lambda = rng.random_range(0.05..2.0);
        let eta = 10f64.powf(rng.random_range(-4.0..-2.0));
        (l, u, lambda, eta)
    }

    #[test]
    fn certificate_monotonicity_and_lemma() {
        let sets = [
            FeasibleSet::unit_box(6),
            FeasibleSet::Simplex {
                dim: 6,
                radius: 1.0,
            },
            FeasibleSet::L1Ball {
                dim: 6,
                radius: 1.5,
            },
            FeasibleSet::L2Ball {
                dim: 6,
                radius: 1.0,
            },
            FeasibleSet::NuclearBall {
                rows: 3,
                cols: 3,
                radius: 2.0,
            },
        ];
        let mut rng = SeedTree::new(9).stream(0);
        for set in &sets {
            for _ in 0..20 {
                let (l, u, lambda, eta) = random_instance(&mut rng, set);
                let mut oracle = LinearOracle::new(set, &SeedTree::new(1));
                let mut c = OracleCounters::new();
                let r = condg(&mut oracle, &l, &u, lambda, eta, Some(1_000_000), &mut c).unwrap();
                assert!(
                    r.converged,
                    "{} calls {} gap {} eta {eta} lambda {lambda}",
                    set.kind_name(),
                    r.lo_calls,
                    r.final_gap
                );
                assert_eq!(r.lo_calls, c.lo);
                assert!(set.contains_default(&r.point));

                // fresh oracle call re-certifies the gap
                let dir: Vec<f64> = l
                    .iter()
                    .zip(r.point.iter().zip(&u))
                    .map(|(li, (p, ui))| li + (p - ui) / lambda)
                    .collect();
                let v = oracle.minimize(&dir, &mut c).unwrap();
                let gap: f64 = dir
                    .iter()
                    .zip(r.point.iter().zip(&v))
                    .map(|(g, (p, vi))| g * (p - vi))
                    .sum();
                assert!(
                    gap <= eta + 1e-10,
                    "{} gap {gap} eta {eta}",
                    set.kind_name()
                );

                // ‖u⁺ − ψ‖² ≤ ηλ and ‖g̃ − g‖² ≤ η/λ
                let exact = prox_map(set, &u, &l, lambda).unwrap();
                assert!(
                    dist_sq(&r.point, &exact) <= eta * lambda,
                    "{}",
                    set.kind_name()
                );
                let approx = approx_gradient_mapping(&u, &r.point, lambda).unwrap();
                let g = gradient_mapping(set, &u, &l, lambda).unwrap();
                assert!(dist_sq(&approx, &g.value) <= eta / lambda);
            }
        }
    }

    #[test]
    fn subproblem_objective_is_nonincreasing() {
        let set = FeasibleSet::L1Ball {
            dim: 8,
            radius: 1.0,
        };
        let mut rng = SeedTree::new(3).stream(0);
        for _ in 0..20 {
            let (l, u, lambda, eta) = random_instance(&mut rng, &set);
            let phi = |x: &[f64]| dot(&l, x) + dist_sq(x, &u) / (2.0 * lambda);
            let mut prev = phi(&u);
            // replay the procedure one oracle call at a time
            for budget in 1..40 {
                let mut oracle = LinearOracle::new(&set, &SeedTree::new(0));
                let r = condg(
                    &mut oracle,
                    &l,
                    &u,
                    lambda,
                    eta,
                    Some(budget),
                    &mut OracleCounters::new(),
                )
                .unwrap();
                let now = phi(&r.point);
                assert!(now <= prev + 1e-12);
                prev = now;
                if r.converged {
                    break;
                }
            }
        }
    }

    #[test]
    fn oracle_budget_on_simplex() {
        // lo_calls ≤ 2·(ceil(1/(2λη)) + 1) on the unit simplex
        let set = FeasibleSet::Simplex {
            dim: 10,
            radius: 1.0,
        };
        let mut rng = SeedTree::new(21).stream(0);
        for _ in 0..100 {
            let (l, u, lambda, eta) = random_instance(&mut rng, &set);
            let r = run(&set, &l, &u, lambda, eta);
            let bound = (1.0 / (2.0 * lambda * eta)).ceil() + 1.0;
            assert!(
                (r.lo_calls as f64) <= 2.0 * bound,
                "calls {} bound {bound}",
                r.lo_calls
            );
        }
    }
}
