//! Batched NCGS.
//!
//! Per iteration `k`:
//!
//! ```text
//! θ_k^md = (1 − α_k) θ_{k−1}^ag + α_k θ_{k−1}
//! θ_k    = condg(∇F(θ_k^md), θ_{k−1}, λ_k, η_k)
//! I:  θ_k^ag = θ_k^md − β_k (θ_{k−1} − θ_k)/λ_k
//! II: θ_k^ag = condg(∇F(θ_k^md), θ_k^md, β_k, χ_k)
//! ```
//!
//! with `α_k = 2/(k+1)`, `β_k = 1/(2L)`, `η_k = χ_k = 1/N`, and `λ_k = β_k`
//! (I) or `λ_k = kβ_k/2` (II). One full gradient per iteration in both options.

use serde::{Deserialize, Serialize};

use super::{flags, Recorder, Row, RunOptions, RunOutput};
use crate::condg::condg_from_feasible;
use crate::error::{check_positive, invalid, Result};
use crate::geometry::{ensure_member, gradient_mapping, FeasibleSet, LinearOracle};
use crate::oracle::{eval_grad, Objective, OracleCounters};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BatchOption {
    I,
    II,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchStep {
    pub alpha: f64,
    pub beta: f64,
    pub lambda: f64,
    pub eta: f64,
    /// Tolerance of the second condg call (option II only).
    pub chi: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BatchSchedule {
    pub option: BatchOption,
    pub smoothness: f64,
    pub horizon: usize,
}

impl BatchSchedule {
    pub fn new(option: BatchOption, smoothness: f64, horizon: usize) -> Result<Self> {
        check_positive("L", smoothness)?;
        if horizon == 0 {
            return Err(invalid("N", "horizon must be at least 1"));
        }
        Ok(Self {
            option,
            smoothness,
            horizon,
        })
    }

    pub fn step(&self, k: usize) -> Result<BatchStep> {
        if k == 0 || k > self.horizon {
            return Err(invalid(
                "k",
                format!("iteration {k} outside 1..={}", self.horizon),
            ));
        }
        let n = self.horizon as f64;
        let alpha = 2.0 / (k as f64 + 1.0);
        let beta = 1.0 / (2.0 * self.smoothness);
        Ok(match self.option {
            BatchOption::I => BatchStep {
                alpha,
                beta,
                lambda: beta,
                eta: 1.0 / n,
                chi: None,
            },
            BatchOption::II => BatchStep {
                alpha,
                beta,
                lambda: k as f64 * beta / 2.0,
                eta: 1.0 / n,
                chi: Some(1.0 / n),
            },
        })
    }
}

pub fn batch_schedule(
    option: BatchOption,
    smoothness: f64,
    horizon: usize,
    k: usize,
) -> Result<BatchStep> {
    BatchSchedule::new(option, smoothness, horizon)?.step(k)
}

pub fn run_ncgs_option1<O: Objective + ?Sized>(
    obj: &O,
    set: &FeasibleSet,
    smoothness: f64,
    horizon: usize,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<RunOutput> {
    run_ncgs(
        obj,
        set,
        BatchOption::I,
        smoothness,
        horizon,
        theta0,
        opts,
        counters,
    )
}

pub fn run_ncgs_option2<O: Objective + ?Sized>(
    obj: &O,
    set: &FeasibleSet,
    smoothness: f64,
    horizon: usize,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<RunOutput> {
    run_ncgs(
        obj,
        set,
        BatchOption::II,
        smoothness,
        horizon,
        theta0,
        opts,
        counters,
    )
}

/// Runs `horizon` iterations. The recorded metric is the exact
/// `‖g(θ_{k−1}, ∇F(θ_k^md), γ)‖²` with `γ = λ_k` (I) or `β_k` (II); the output
/// row is the one with the smallest metric. `theta0` defaults to the set's
/// canonical vertex.
#[allow(clippy::too_many_arguments)]
pub fn run_ncgs<O: Objective + ?Sized>(
    obj: &O,
    set: &FeasibleSet,
    option: BatchOption,
    smoothness: f64,
    horizon: usize,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<RunOutput> {
    let schedule = BatchSchedule::new(option, smoothness, horizon)?;
    let mut theta = match theta0 {
        Some(t) => t.to_vec(),
        None => set.canonical_vertex(),
    };
    ensure_member(set, &theta)?;
    crate::error::check_dim(obj.dim(), theta.len())?;

    let mut oracle = LinearOracle::new(set, &opts.seeds)
        .with_power(opts.power)
        .with_exec(opts.exec);
    let mut rec = Recorder::new(opts);
    let mut theta_ag = theta.clone();
    let mut iterates = Vec::new();
    let mut condg_failures = 0;

    for k in 1..=horizon {
        let step = schedule.step(k)?;
        let lo_failures_before = oracle.unconverged_calls();
        let theta_md: Vec<f64> = theta_ag
            .iter()
            .zip(&theta)
            .map(|(ag, t)| (1.0 - step.alpha) * ag + step.alpha * t)
            .collect();
        let grad = eval_grad(obj, &theta_md, counters)?;

        let inner = condg_from_feasible(
            &mut oracle,
            &grad,
            &theta,
            step.lambda,
            step.eta,
            opts.condg_max_iter,
            counters,
        )?;
        let mut failed = !inner.converged;
        let next_ag = match option {
            BatchOption::I => theta_md
                .iter()
                .zip(theta.iter().zip(&inner.point))
                .map(|(md, (prev, next))| md - step.beta * (prev - next) / step.lambda)
                .collect(),
            BatchOption::II => {
                let chi = step.chi.expect("option II carries chi");
                let ag = condg_from_feasible(
                    &mut oracle,
                    &grad,
                    &theta_md,
                    step.beta,
                    chi,
                    opts.condg_max_iter,
                    counters,
                )?;
                failed |= !ag.converged;
                ag.point
            }
        };
        condg_failures += failed as u64;

        if rec.wants(k as u64, k == horizon) {
            rec.pause();
            let gamma = match option {
                BatchOption::I => step.lambda,
                BatchOption::II => step.beta,
            };
            let metric = gradient_mapping(set, &theta, &grad, gamma)?.norm_sq();
            let value = obj.value(&inner.point);
            let lo_failed = oracle.unconverged_calls() > lo_failures_before;
            rec.push(
                Row {
                    iter: k as u64,
                    epoch: None,
                    sq_grad_mapping: metric,
                    objective_value: Some(value),
                    flags: flags(failed, lo_failed, false),
                    true_sq_grad_mapping: None,
                    fw_gap: None,
                },
                counters,
            );
            rec.resume();
        }

        theta = inner.point;
        theta_ag = next_ag;
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
        condg_nonconverged: condg_failures,
        lo_nonconverged: oracle.unconverged_calls(),
        final_point: theta,
        iterates,
    })
}
