//! Frank–Wolfe baselines: deterministic FW for smooth non-convex objectives
//! and stochastic variance-reduced FW (SVFW) for finite sums.

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, check_positive, invalid, Error, Result};
use crate::geometry::{ensure_member, gradient_mapping, FeasibleSet, LinearOracle};
use crate::linalg::dot;
use crate::ncgs::vr::{svrg_gradient, EpochState, VrSchedule};
use crate::ncgs::{flags, Recorder, Row, RunOptions, RunOutput};
use crate::oracle::{eval_grad, FiniteSumObjective, Objective, OracleCounters};
use crate::rng::stream;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "rule", content = "gamma", rename_all = "snake_case")]
pub enum StepRule {
    /// `2/(k+2)`
    Harmonic,
    /// `1/√(k+1)`
    InverseSqrt,
    Fixed(f64),
}

impl StepRule {
    /// Step for zero-based iteration `k`.
    pub fn step(self, k: usize) -> f64 {
        match self {
            StepRule::Harmonic => 2.0 / (k as f64 + 2.0),
            StepRule::InverseSqrt => 1.0 / (k as f64 + 1.0).sqrt(),
            StepRule::Fixed(g) => g,
        }
    }

    fn validate(self) -> Result<()> {
        match self {
            StepRule::Fixed(g) if !(g > 0.0 && g <= 1.0) => {
                Err(invalid("gamma", "fixed step must lie in (0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

fn fw_update(theta: &mut [f64], v: &[f64], gamma: f64) {
    for (t, vi) in theta.iter_mut().zip(v) {
        *t += gamma * (vi - *t);
    }
}

fn fw_gap(grad: &[f64], theta: &[f64], v: &[f64]) -> f64 {
    dot(grad, theta) - dot(grad, v)
}

/// `θ_{k+1} = θ_k + γ_k (LO(∇F(θ_k)) − θ_k)` for `k = 0..N`. Row `k+1`
/// measures `‖g(θ_k, ∇F(θ_k), 1/(2L))‖²` and the FW gap at `θ_k`; the output
/// is the row with the smallest metric. One gradient and one oracle call per
/// iteration.
#[allow(clippy::too_many_arguments)]
pub fn run_fw_nonconvex<O: Objective + ?Sized>(
    obj: &O,
    set: &FeasibleSet,
    smoothness: f64,
    horizon: usize,
    rule: StepRule,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<RunOutput> {
    check_positive("L", smoothness)?;
    rule.validate()?;
    if horizon == 0 {
        return Err(invalid("N", "horizon must be at least 1"));
    }
    let mut theta = match theta0 {
        Some(t) => t.to_vec(),
        None => set.canonical_vertex(),
    };
    ensure_member(set, &theta)?;
    check_dim(obj.dim(), theta.len())?;
    let gamma_metric = 1.0 / (2.0 * smoothness);

    let mut oracle = LinearOracle::new(set, &opts.seeds)
        .with_power(opts.power)
        .with_exec(opts.exec);
    let mut rec = Recorder::new(opts);
    let mut iterates = Vec::new();
    for k in 0..horizon {
        let lo_failures_before = oracle.unconverged_calls();
        let grad = eval_grad(obj, &theta, counters)?;
        let v = oracle.minimize(&grad, counters)?;
        if rec.wants(k as u64 + 1, k + 1 == horizon) {
            rec.pause();
            let metric = gradient_mapping(set, &theta, &grad, gamma_metric)?.norm_sq();
            let lo_failed = oracle.unconverged_calls() > lo_failures_before;
            rec.push(
                Row {
                    iter: k as u64 + 1,
                    epoch: None,
                    sq_grad_mapping: metric,
                    objective_value: Some(obj.value(&theta)),
                    flags: flags(false, lo_failed, false),
                    true_sq_grad_mapping: None,
                    fw_gap: Some(fw_gap(&grad, &theta, &v)),
                },
                counters,
            );
            rec.resume();
        }
        fw_update(&mut theta, &v, rule.step(k));
        if opts.keep_iterates {
            iterates.push(theta.clone());
        }
    }

    let (output_iter, output_metric) = rec.argmin();
    Ok(RunOutput {
        records: rec.records,
        counters: *counters,
        output_iter,
        output_sq_grad_mapping: output_metric,
        ifo_uncached: None,
        condg_nonconverged: 0,
        lo_nonconverged: oracle.unconverged_calls(),
        final_point: theta,
        iterates,
    })
}

/// SVFW with the same epoch structure, estimator, and IFO metering as the
/// variance-reduced NCGS method: the inner step is a single FW step
/// `θ_{t+1} = θ_t + γ_k (LO(v_t) − θ_t)` with the rule applied to the global
/// inner index `k`. Rows measure `‖g(θ_t, ∇F(θ_t), λ)‖²` with `λ` from the
/// schedule; the output is a uniformly drawn inner iterate.
pub fn run_svfw<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    set: &FeasibleSet,
    schedule: &VrSchedule,
    rule: StepRule,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<RunOutput> {
    rule.validate()?;
    if schedule.components != obj.num_components() {
        return Err(Error::DimensionMismatch {
            expected: obj.num_components(),
            got: schedule.components,
        });
    }
    let mut theta = match theta0 {
        Some(t) => t.to_vec(),
        None => set.canonical_vertex(),
    };
    ensure_member(set, &theta)?;
    check_dim(obj.dim(), theta.len())?;

    let output_index = opts
        .seeds
        .stream(stream::OUTPUT_INDEX)
        .random_range(0..schedule.total);
    let mut sampler = opts.seeds.stream(stream::MINIBATCH);
    let mut oracle = LinearOracle::new(set, &opts.seeds)
        .with_power(opts.power)
        .with_exec(opts.exec);
    let mut rec = Recorder::new(opts);
    let mut iterates = Vec::new();
    let mut output_metric = f64::NAN;
    let mut uncached = 0u64;
    let mut full = vec![0.0; obj.dim()];

    for s in 0..schedule.epochs {
        let state =
            EpochState::compute(obj, &theta, opts.exec, opts.snapshot_cache_limit, counters)?;
        uncached += schedule.components as u64;
        for t in 0..schedule.epoch_len {
            let global = s * schedule.epoch_len + t;
            let lo_failures_before = oracle.unconverged_calls();
            let v = svrg_gradient(obj, &theta, &state, schedule.batch, &mut sampler, counters)?;
            uncached += 2 * schedule.batch as u64;
            let vertex = oracle.minimize(&v, counters)?;

            let is_output = global == output_index;
            let wanted = rec.wants(global as u64 + 1, global + 1 == schedule.total);
            if wanted || is_output {
                rec.pause();
                obj.gradient(&theta, &mut full);
                let metric = gradient_mapping(set, &theta, &full, schedule.lambda)?.norm_sq();
                if is_output {
                    output_metric = metric;
                }
                if wanted {
                    let lo_failed = oracle.unconverged_calls() > lo_failures_before;
                    rec.push(
                        Row {
                            iter: global as u64 + 1,
                            epoch: Some(s as u64),
                            sq_grad_mapping: metric,
                            objective_value: Some(obj.value(&theta)),
                            flags: flags(false, lo_failed, true),
                            true_sq_grad_mapping: None,
                            fw_gap: None,
                        },
                        counters,
                    );
                }
                rec.resume();
            }
            if opts.keep_iterates {
                iterates.push(theta.clone());
            }
            fw_update(&mut theta, &vertex, rule.step(global));
        }
    }

    Ok(RunOutput {
        records: rec.records,
        counters: *counters,
        output_iter: output_index as u64 + 1,
        output_sq_grad_mapping: output_metric,
        ifo_uncached: Some(uncached),
        condg_nonconverged: 0,
        lo_nonconverged: oracle.unconverged_calls(),
        final_point: theta,
        iterates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problems::quadratic::{make_quadratic, FiniteSumQuadratic};
    use crate::rng::SeedTree;

    #[test]
    fn step_rules() {
        assert_eq!(StepRule::Harmonic.step(0), 1.0);
        assert_eq!(StepRule::Harmonic.step(2), 0.5);
        assert_eq!(StepRule::InverseSqrt.step(3), 0.5);
        assert_eq!(StepRule::Fixed(0.3).step(100), 0.3);
        assert!(StepRule::Fixed(0.0).validate().is_err());
        assert!(StepRule::Fixed(1.5).validate().is_err());
    }

    #[test]
    fn fw_counts_and_feasibility() {
        let set = FeasibleSet::Simplex {
            dim: 4,
            radius: 1.0,
        };
        let q = make_quadratic(vec![0.1, 0.5, 0.2, 0.2], set.clone()).unwrap();
        let mut c = OracleCounters::new();
        let opts = RunOptions {
            keep_iterates: true,
            ..RunOptions::default()
        };
        let out = run_fw_nonconvex(
            &q.objective,
            &set,
            1.0,
            50,
            StepRule::Harmonic,
            None,
            &opts,
            &mut c,
        )
        .unwrap();
        assert_eq!((c.fo, c.lo), (50, 50));
        assert!(out.iterates.iter().all(|x| set.contains_default(x)));
        assert!(out.records.iter().all(|r| r.fw_gap.unwrap() >= -1e-12));
        // FW on a strongly convex quadratic over the simplex drives the gap down
        assert!(out.records.last().unwrap().fw_gap.unwrap() < 0.1);
    }

    #[test]
    fn svfw_ifo_matches_vr_metering() {
        let f = FiniteSumQuadratic::random(8, 3, 1.0, &SeedTree::new(6)).unwrap();
        let set = FeasibleSet::unit_box(3);
        let sched = VrSchedule::new(8, f.component_smoothness().upper, 12).unwrap();
        let mut c = OracleCounters::new();
        let opts = RunOptions {
            keep_iterates: true,
            ..RunOptions::default()
        };
        let out = run_svfw(&f, &set, &sched, StepRule::Harmonic, None, &opts, &mut c).unwrap();
        assert_eq!(c.ifo, sched.ifo_cached());
        assert_eq!(c.lo, sched.total as u64);
        assert_eq!(out.ifo_uncached, Some(sched.ifo_uncached()));
        assert!(out.iterates.iter().all(|x| set.contains_default(x)));
    }
}
