//! Stochastic NCGS with growing mini-batches and a randomized stopping index.
//!
//! The stopping index `R` is drawn before iterating, with
//! `P(R = k) ∝ Γ_k⁻¹ = k(k+1)/2`, and the loop runs `k = 1..=R`. Iteration `k`
//! draws a batch of `m_k = k` stochastic gradients at `θ_k^md`; both condg
//! calls consume the same average `Ḡ_k`.

use rand::Rng as _;

use super::{flags, Recorder, Row, RunOptions, RunOutput};
use crate::condg::condg_from_feasible;
use crate::error::{check_dim, check_positive, invalid, Result};
use crate::geometry::{ensure_member, gradient_mapping, FeasibleSet, LinearOracle};
use crate::oracle::{eval_stoch_grad, OracleCounters, StochasticObjective};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticStep {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    pub chi: f64,
    pub batch: usize,
    pub gamma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StochasticSchedule {
    pub smoothness: f64,
    pub horizon: usize,
}

impl StochasticSchedule {
    pub fn new(smoothness: f64, horizon: usize) -> Result<Self> {
        check_positive("L", smoothness)?;
        if horizon == 0 {
            return Err(invalid("N", "horizon must be at least 1"));
        }
        Ok(Self {
            smoothness,
            horizon,
        })
    }

    pub fn step(&self, k: usize) -> Result<StochasticStep> {
        if k == 0 || k > self.horizon {
            return Err(invalid(
                "k",
                format!("iteration {k} outside 1..={}", self.horizon),
            ));
        }
        let kf = k as f64;
        let beta = 1.0 / (2.0 * self.smoothness);
        let tol = 1.0 / self.horizon as f64;
        Ok(StochasticStep {
            alpha: 2.0 / (kf + 1.0),
            beta,
            lambda: kf * beta / 2.0,
            eta: tol,
            chi: tol,
            batch: k,
            gamma: 2.0 / (kf * (kf + 1.0)),
        })
    }
}

/// `p_k = Γ_k⁻¹ / Σ_{j≤N} Γ_j⁻¹` for `k = 1..=N` (index `k−1`).
pub fn stop_probabilities(horizon: usize) -> Vec<f64> {
    let weights: Vec<f64> = (1..=horizon).map(|k| (k * (k + 1)) as f64 / 2.0).collect();
    let total: f64 = weights.iter().sum();
    weights.into_iter().map(|w| w / total).collect()
}

/// Draws `R ∈ 1..=N` with probabilities [`stop_probabilities`] by inverting the
/// cumulative weights.
pub fn sample_stop_index(horizon: usize, rng: &mut Rng) -> Result<usize> {
    if horizon == 0 {
        return Err(invalid("N", "horizon must be at least 1"));
    }
    let n = horizon as u128;
    // Σ k(k+1)/2 = N(N+1)(N+2)/6, in integer weights
    let total = n * (n + 1) * (n + 2) / 6;
    let target = rng.random_range(0..total);
    let mut acc = 0u128;
    for k in 1..=n {
        acc += k * (k + 1) / 2;
        if target < acc {
            return Ok(k as usize);
        }
    }
    Ok(horizon)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StopRule {
    /// Draw `R` from the stopping distribution.
    Sampled,
    /// Run exactly this many iterations (must be in `1..=N`).
    At(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct StochasticRun {
    pub run: RunOutput,
    pub stop_index: usize,
}

/// The recorded metric is `‖g(θ_k^md, Ḡ_k, β_k)‖²`. When the objective has an
/// exact gradient, `true_sq_grad_mapping` carries `‖g(θ_k^md, ∇F(θ_k^md), β_k)‖²`
/// from an unmetered evaluation, and the row is flagged as diagnostic.
#[allow(clippy::too_many_arguments)]
pub fn run_sncgs<O: StochasticObjective + ?Sized>(
    obj: &O,
    set: &FeasibleSet,
    smoothness: f64,
    horizon: usize,
    theta0: Option<&[f64]>,
    stop: StopRule,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<StochasticRun> {
    let schedule = StochasticSchedule::new(smoothness, horizon)?;
    let stop_index = match stop {
        StopRule::Sampled => {
            sample_stop_index(horizon, &mut opts.seeds.stream(stream::STOP_INDEX))?
        }
        StopRule::At(r) if (1..=horizon).contains(&r) => r,
        StopRule::At(r) => {
            return Err(invalid(
                "R",
                format!("stop index {r} outside 1..={horizon}"),
            ))
        }
    };
    let mut theta = match theta0 {
        Some(t) => t.to_vec(),
        None => set.canonical_vertex(),
    };
    ensure_member(set, &theta)?;
    check_dim(obj.dim(), theta.len())?;

    let mut sampler = opts.seeds.stream(stream::SAMPLER);
    let mut oracle = LinearOracle::new(set, &opts.seeds)
        .with_power(opts.power)
        .with_exec(opts.exec);
    let mut rec = Recorder::new(opts);
    let mut theta_ag = theta.clone();
    let mut iterates = Vec::new();
    let mut condg_failures = 0;
    let mut output_metric = f64::NAN;
    let mut exact = vec![0.0; obj.dim()];

    for k in 1..=stop_index {
        let step = schedule.step(k)?;
        let lo_failures_before = oracle.unconverged_calls();
        let theta_md: Vec<f64> = theta_ag
            .iter()
            .zip(&theta)
            .map(|(ag, t)| (1.0 - step.alpha) * ag + step.alpha * t)
            .collect();
        let g_bar = eval_stoch_grad(obj, &theta_md, step.batch, &mut sampler, counters)?;
        let inner = condg_from_feasible(
            &mut oracle,
            &g_bar,
            &theta,
            step.lambda,
            step.eta,
            opts.condg_max_iter,
            counters,
        )?;
        let ag = condg_from_feasible(
            &mut oracle,
            &g_bar,
            &theta_md,
            step.beta,
            step.chi,
            opts.condg_max_iter,
            counters,
        )?;
        let failed = !inner.converged || !ag.converged;
        condg_failures += failed as u64;

        let last = k == stop_index;
        if rec.wants(k as u64, last) {
            rec.pause();
            let metric = gradient_mapping(set, &theta_md, &g_bar, step.beta)?.norm_sq();
            let true_metric = if obj.exact_gradient(&theta_md, &mut exact) {
                Some(gradient_mapping(set, &theta_md, &exact, step.beta)?.norm_sq())
            } else {
                None
            };
            let lo_failed = oracle.unconverged_calls() > lo_failures_before;
            rec.push(
                Row {
                    iter: k as u64,
                    epoch: None,
                    sq_grad_mapping: metric,
                    objective_value: obj.value(&inner.point),
                    flags: flags(failed, lo_failed, true_metric.is_some()),
                    true_sq_grad_mapping: true_metric,
                    fw_gap: None,
                },
                counters,
            );
            if last {
                output_metric = metric;
            }
            rec.resume();
        }

        theta = inner.point;
        theta_ag = ag.point;
        if opts.keep_iterates {
            iterates.push(theta.clone());
        }
    }

    Ok(StochasticRun {
        run: RunOutput {
            records: rec.records,
            counters: *counters,
            output_iter: stop_index as u64,
            output_sq_grad_mapping: output_metric,
            ifo_uncached: None,
            condg_nonconverged: condg_failures,
            lo_nonconverged: oracle.unconverged_calls(),
            final_point: theta,
            iterates,
        },
        stop_index,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ncgs::batch::{run_ncgs, BatchOption};
    use crate::problems::quadratic::{make_quadratic, NoisyQuadratic};
    use crate::rng::SeedTree;

    #[test]
    fn probabilities() {
        let p = stop_probabilities(3);
        assert_eq!(p, vec![0.1, 0.3, 0.6]);
        for n in [1, 7, 100, 1000] {
            let p = stop_probabilities(n);
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(p.windows(2).all(|w| w[0] < w[1]));
        }
        let s = StochasticSchedule::new(1.0, 10).unwrap().step(4).unwrap();
        assert_eq!(s.batch, 4);
        assert_eq!(s.gamma, 2.0 / 20.0);
        assert_eq!(s.lambda, 4.0 * 0.5 / 2.0);
    }

    #[test]
    fn stop_index_single_and_frequencies() {
        let mut rng = SeedTree::new(1).stream(stream::STOP_INDEX);
        assert!((0..100).all(|_| sample_stop_index(1, &mut rng).unwrap() == 1));
        assert!(sample_stop_index(0, &mut rng).is_err());

        let draws = 100_000;
        let mut counts = [0usize; 3];
        for _ in 0..draws {
            counts[sample_stop_index(3, &mut rng).unwrap() - 1] += 1;
        }
        for (c, p) in counts.iter().zip([0.1, 0.3, 0.6]) {
            let sd = (draws as f64 * p * (1.0 - p)).sqrt();
            assert!((*c as f64 - draws as f64 * p).abs() <= 3.0 * sd);
        }
    }

    #[test]
    fn sfo_ledger_and_zero_noise_matches_option2() {
        let set = FeasibleSet::unit_box(6);
        let center = vec![0.3, -0.2, 0.5, 0.1, -0.4, 0.0];
        let noisy = NoisyQuadratic::new(center.clone(), 0.0).unwrap();
        let q = make_quadratic(center, set.clone()).unwrap();
        let n = 25;
        let opts = RunOptions {
            keep_iterates: true,
            ..RunOptions::with_seed(9)
        };

        let mut c = OracleCounters::new();
        let s = run_sncgs(&noisy, &set, 1.0, n, None, StopRule::At(n), &opts, &mut c).unwrap();
        assert_eq!(c.sfo, (n * (n + 1) / 2) as u64);
        assert_eq!(s.stop_index, n);

        let mut c2 = OracleCounters::new();
        let b = run_ncgs(
            &q.objective,
            &set,
            BatchOption::II,
            1.0,
            n,
            None,
            &opts,
            &mut c2,
        )
        .unwrap();
        assert_eq!(s.run.iterates, b.iterates);
        assert_eq!(c.lo, c2.lo);

        // sampled stop: loop runs exactly to R
        let mut c3 = OracleCounters::new();
        let r = run_sncgs(
            &noisy,
            &set,
            1.0,
            n,
            None,
            StopRule::Sampled,
            &opts,
            &mut c3,
        )
        .unwrap();
        let rr = r.stop_index as u64;
        assert_eq!(c3.sfo, rr * (rr + 1) / 2);
        assert_eq!(r.run.records.last().unwrap().iter, rr);
        assert!(run_sncgs(
            &noisy,
            &set,
            1.0,
            n,
            None,
            StopRule::At(n + 1),
            &opts,
            &mut c3
        )
        .is_err());
    }
}
