//! Variance-reduced NCGS for finite sums.
//!
//! Each epoch takes a full snapshot gradient `g = ∇F(θ̃)`, then runs `m` inner
//! steps with the estimator
//!
//! ```text
//! v_t = g + (1/b) Σ_{i∈I_t} (∇f_i(θ_t) − ∇f_i(θ̃))
//! θ_{t+1} = condg(v_t, θ_t, λ, η)
//! ```
//!
//! where `I_t` holds `b` indices drawn uniformly with replacement. Defaults:
//! `b = round(n^{2/3})`, `m = round(n^{1/3})`, `λ = 1/(3L)`, `η = 1/T`. The
//! output is one of the `T` inner iterates chosen uniformly at random.

use rand::Rng as _;

use super::{flags, Recorder, Row, RunOptions, RunOutput};
use crate::condg::condg_from_feasible;
use crate::error::{check_dim, check_positive, invalid, Error, Result};
use crate::exec::Exec;
use crate::geometry::{ensure_member, gradient_mapping, FeasibleSet, LinearOracle};
use crate::oracle::{FiniteSumObjective, OracleCounters};
use crate::rng::{stream, Rng};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VrSchedule {
    pub components: usize,
    pub smoothness: f64,
    pub batch: usize,
    pub epoch_len: usize,
    /// Total inner iterations, a multiple of `epoch_len`.
    pub total: usize,
    pub epochs: usize,
    pub lambda: f64,
    pub eta: f64,
}

impl VrSchedule {
    /// Default sizes for `n` components. `total` is rounded up to a multiple
    /// of the epoch length, and the batch is enlarged until
    /// [`feasibility_margin`](Self::feasibility_margin) is non-positive.
    pub fn new(components: usize, smoothness: f64, total: usize) -> Result<Self> {
        if components == 0 {
            return Err(invalid("n", "need at least one component"));
        }
        let n = components as f64;
        let batch = (n.powf(2.0 / 3.0).round() as usize).max(1);
        let epoch_len = (n.cbrt().round() as usize).max(1);
        let mut s = Self::build(components, smoothness, total, batch, epoch_len)?;
        while s.feasibility_margin() > 0.0 {
            s.batch += 1;
        }
        Ok(s)
    }

    /// Explicit batch and epoch sizes; rejects combinations that fail the
    /// step-size condition.
    pub fn with_sizes(
        components: usize,
        smoothness: f64,
        total: usize,
        batch: usize,
        epoch_len: usize,
    ) -> Result<Self> {
        if components == 0 {
            return Err(invalid("n", "need at least one component"));
        }
        let s = Self::build(components, smoothness, total, batch, epoch_len)?;
        let margin = s.feasibility_margin();
        if margin > 0.0 {
            return Err(Error::Infeasible { violation: margin });
        }
        Ok(s)
    }

    fn build(
        components: usize,
        smoothness: f64,
        total: usize,
        batch: usize,
        epoch_len: usize,
    ) -> Result<Self> {
        check_positive("L", smoothness)?;
        if total == 0 {
            return Err(invalid("T", "need at least one inner iteration"));
        }
        if batch == 0 || epoch_len == 0 {
            return Err(invalid("b", "batch and epoch length must be positive"));
        }
        let epochs = total.div_ceil(epoch_len);
        let total = epochs * epoch_len;
        Ok(Self {
            components,
            smoothness,
            batch,
            epoch_len,
            total,
            epochs,
            lambda: 1.0 / (3.0 * smoothness),
            eta: 1.0 / total as f64,
        })
    }

    /// `4λ²L²m²/b + Lλ − 1`; must be `≤ 0`.
    pub fn feasibility_margin(&self) -> f64 {
        let ll = self.lambda * self.smoothness;
        let m = self.epoch_len as f64;
        4.0 * ll * ll * m * m / self.batch as f64 + ll - 1.0
    }

    /// IFO calls over the whole run when snapshot component gradients are
    /// cached: `S(n + bm)`.
    pub fn ifo_cached(&self) -> u64 {
        (self.epochs * (self.components + self.batch * self.epoch_len)) as u64
    }

    /// IFO calls when both terms of each correction are recomputed:
    /// `S(n + 2bm)`.
    pub fn ifo_uncached(&self) -> u64 {
        (self.epochs * (self.components + 2 * self.batch * self.epoch_len)) as u64
    }
}

/// Snapshot point, its full gradient, and (optionally) every component
/// gradient at the snapshot as sparse `(index, value)` lists.
#[derive(Debug, Clone)]
pub struct EpochState {
    pub snapshot: Vec<f64>,
    pub gradient: Vec<f64>,
    cache: Option<Vec<Vec<(usize, f64)>>>,
}

impl EpochState {
    /// Charges `n` IFO calls. Component gradients are cached when their
    /// estimated total size stays within `cache_limit` entries.
    pub fn compute<F: FiniteSumObjective + ?Sized>(
        obj: &F,
        snapshot: &[f64],
        exec: Exec,
        cache_limit: usize,
        counters: &mut OracleCounters,
    ) -> Result<Self> {
        check_dim(obj.dim(), snapshot.len())?;
        let n = obj.num_components();
        let d = obj.dim();
        let mut first = 0usize;
        obj.visit_component_gradient(0, snapshot, &mut |_, _| first += 1);
        let cache = (n.saturating_mul(first.max(1)) <= cache_limit).then(|| {
            exec.map(n, |i| {
                let mut entries = Vec::new();
                obj.visit_component_gradient(i, snapshot, &mut |j, g| entries.push((j, g)));
                entries
            })
        });
        let total = match &cache {
            Some(c) => exec.chunked_sum(n, d, |i, acc| {
                for &(j, g) in &c[i] {
                    acc[j] += g;
                }
            }),
            None => exec.chunked_sum(n, d, |i, acc| {
                obj.visit_component_gradient(i, snapshot, &mut |j, g| acc[j] += g);
            }),
        };
        counters.ifo += n as u64;
        Ok(Self {
            snapshot: snapshot.to_vec(),
            gradient: total.into_iter().map(|t| t / n as f64).collect(),
            cache,
        })
    }

    pub fn is_cached(&self) -> bool {
        self.cache.is_some()
    }

    fn add_snapshot_component<F: FiniteSumObjective + ?Sized>(
        &self,
        obj: &F,
        i: usize,
        acc: &mut [f64],
    ) {
        match &self.cache {
            Some(c) => {
                for &(j, g) in &c[i] {
                    acc[j] += g;
                }
            }
            None => obj.visit_component_gradient(i, &self.snapshot, &mut |j, g| acc[j] += g),
        }
    }
}

/// Draws `b` indices uniformly with replacement and returns the estimator.
pub fn svrg_gradient<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    theta: &[f64],
    state: &EpochState,
    batch: usize,
    rng: &mut Rng,
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    let n = obj.num_components();
    let indices: Vec<usize> = (0..batch).map(|_| rng.random_range(0..n)).collect();
    svrg_gradient_with_indices(obj, theta, state, &indices, counters)
}

/// The estimator for a given index multiset. The two sums are accumulated
/// separately so that `θ = θ̃` reproduces the snapshot gradient exactly.
/// Charges `|I|` IFO calls with a cached snapshot and `2|I|` without.
pub fn svrg_gradient_with_indices<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    theta: &[f64],
    state: &EpochState,
    indices: &[usize],
    counters: &mut OracleCounters,
) -> Result<Vec<f64>> {
    let n = obj.num_components();
    if indices.is_empty() {
        return Err(invalid("b", "must select at least one component"));
    }
    if let Some(&index) = indices.iter().find(|&&i| i >= n) {
        return Err(Error::IndexOutOfRange { index, n });
    }
    check_dim(obj.dim(), theta.len())?;
    let d = obj.dim();
    let mut current = vec![0.0; d];
    let mut snap = vec![0.0; d];
    for &i in indices {
        obj.visit_component_gradient(i, theta, &mut |j, g| current[j] += g);
        state.add_snapshot_component(obj, i, &mut snap);
    }
    let b = indices.len() as f64;
    counters.ifo += if state.is_cached() {
        indices.len()
    } else {
        2 * indices.len()
    } as u64;
    Ok(state
        .gradient
        .iter()
        .zip(current.iter().zip(&snap))
        .map(|(g, (c, s))| g + (c - s) / b)
        .collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct VrRun {
    pub run: RunOutput,
    pub schedule: VrSchedule,
    /// Zero-based index of the output among the `T` inner iterates.
    pub output_index: usize,
    pub output_point: Vec<f64>,
}

/// Runs `S` epochs of `m` inner steps. Row `s·m + t + 1` measures
/// `‖g(θ_t, ∇F(θ_t), λ)‖²` with an unmetered full gradient (flagged as
/// diagnostic). The output index is drawn up front from its own stream, which
/// is equivalent to drawing it after the run and needs no iterate storage.
pub fn run_ncgs_vr<F: FiniteSumObjective + ?Sized>(
    obj: &F,
    set: &FeasibleSet,
    schedule: &VrSchedule,
    theta0: Option<&[f64]>,
    opts: &RunOptions,
    counters: &mut OracleCounters,
) -> Result<VrRun> {
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
    let mut output_point = Vec::new();
    let mut output_metric = f64::NAN;
    let mut condg_failures = 0;
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
            let next = condg_from_feasible(
                &mut oracle,
                &v,
                &theta,
                schedule.lambda,
                schedule.eta,
                opts.condg_max_iter,
                counters,
            )?;
            condg_failures += !next.converged as u64;

            let is_output = global == output_index;
            let wanted = rec.wants(global as u64 + 1, global + 1 == schedule.total);
            if wanted || is_output {
                rec.pause();
                obj.gradient(&theta, &mut full);
                let metric = gradient_mapping(set, &theta, &full, schedule.lambda)?.norm_sq();
                if is_output {
                    output_metric = metric;
                    output_point = theta.clone();
                }
                if wanted {
                    let lo_failed = oracle.unconverged_calls() > lo_failures_before;
                    rec.push(
                        Row {
                            iter: global as u64 + 1,
                            epoch: Some(s as u64),
                            sq_grad_mapping: metric,
                            objective_value: Some(obj.value(&theta)),
                            flags: flags(!next.converged, lo_failed, true),
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
            theta = next.point;
        }
    }

    Ok(VrRun {
        run: RunOutput {
            records: rec.records,
            counters: *counters,
            output_iter: output_index as u64 + 1,
            output_sq_grad_mapping: output_metric,
            ifo_uncached: Some(uncached),
            condg_nonconverged: condg_failures,
            lo_nonconverged: oracle.unconverged_calls(),
            final_point: theta,
            iterates,
        },
        schedule: *schedule,
        output_index,
        output_point,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::dist_sq;
    use crate::oracle::{eval_component_grad, Objective};
    use crate::problems::quadratic::FiniteSumQuadratic;
    use crate::rng::SeedTree;

    #[test]
    fn default_sizes() {
        let s = VrSchedule::new(1000, 2.0, 95).unwrap();
        assert_eq!((s.batch, s.epoch_len), (100, 10));
        assert_eq!((s.total, s.epochs), (100, 10));
        assert_eq!(s.lambda, 1.0 / 6.0);
        assert_eq!(s.eta, 0.01);
        assert!(s.feasibility_margin() <= 0.0);
        assert_eq!(s.ifo_cached(), 10 * (1000 + 1000));
        assert_eq!(s.ifo_uncached(), 10 * (1000 + 2000));
        for n in 1..300 {
            assert!(
                VrSchedule::new(n, 1.0, 10).unwrap().feasibility_margin() <= 0.0,
                "n = {n}"
            );
        }
        assert!(VrSchedule::with_sizes(100, 1.0, 10, 1, 10).is_err());
        assert!(VrSchedule::new(0, 1.0, 10).is_err());
    }

    #[test]
    fn estimator_identities() {
        let f = FiniteSumQuadratic::random(12, 4, 1.0, &SeedTree::new(2)).unwrap();
        let theta_snap = vec![0.1, -0.3, 0.2, 0.0];
        for limit in [0, usize::MAX] {
            let mut c = OracleCounters::new();
            let st = EpochState::compute(&f, &theta_snap, Exec::Sequential, limit, &mut c).unwrap();
            assert_eq!(c.ifo, 12);
            assert_eq!(st.is_cached(), limit > 0);
            let mut exact = vec![0.0; 4];
            f.gradient(&theta_snap, &mut exact);
            assert_eq!(st.gradient, exact);

            // θ = θ̃ gives the snapshot gradient bitwise
            let v = svrg_gradient_with_indices(&f, &theta_snap, &st, &[3, 3, 7], &mut c).unwrap();
            assert_eq!(v, st.gradient);
            assert_eq!(c.ifo, 12 + if limit > 0 { 3 } else { 6 });

            // full index set without repeats gives the exact gradient
            let theta = vec![0.4, 0.1, -0.2, 0.3];
            let all: Vec<usize> = (0..12).collect();
            let v = svrg_gradient_with_indices(&f, &theta, &st, &all, &mut c).unwrap();
            f.gradient(&theta, &mut exact);
            assert!(dist_sq(&v, &exact) < 1e-24);
            assert!(svrg_gradient_with_indices(&f, &theta, &st, &[], &mut c).is_err());
            assert!(svrg_gradient_with_indices(&f, &theta, &st, &[12], &mut c).is_err());
        }
    }

    #[test]
    fn variance_bound_monte_carlo() {
        let f = FiniteSumQuadratic::random(30, 5, 1.0, &SeedTree::new(8)).unwrap();
        let l = f.component_smoothness().upper;
        let snap = vec![0.2; 5];
        let theta = vec![-0.1, 0.3, 0.0, 0.5, -0.4];
        let mut c = OracleCounters::new();
        let st = EpochState::compute(&f, &snap, Exec::Sequential, usize::MAX, &mut c).unwrap();
        let mut exact = vec![0.0; 5];
        f.gradient(&theta, &mut exact);
        let mut rng = SeedTree::new(3).stream(0);
        for b in [1usize, 4, 16] {
            let trials = 20_000;
            let mut mean_sq = 0.0;
            for _ in 0..trials {
                let v = svrg_gradient(&f, &theta, &st, b, &mut rng, &mut c).unwrap();
                mean_sq += dist_sq(&v, &exact) / trials as f64;
            }
            let bound = l * l / b as f64 * dist_sq(&theta, &snap);
            assert!(mean_sq <= bound * 1.05, "b {b}: {mean_sq} > {bound}");
        }
        // sanity: metered component gradient agrees with one-sample estimator
        let one = eval_component_grad(&f, &[0], &snap, &mut c).unwrap();
        let v = svrg_gradient_with_indices(&f, &snap, &st, &[0], &mut c).unwrap();
        assert_eq!(v, st.gradient);
        assert_eq!(one.len(), 5);
    }

    #[test]
    fn run_ifo_ledger_and_feasibility() {
        let f = FiniteSumQuadratic::random(27, 6, 1.0, &SeedTree::new(5)).unwrap();
        let set = FeasibleSet::L1Ball {
            dim: 6,
            radius: 1.0,
        };
        let sched = VrSchedule::new(27, f.component_smoothness().upper, 20).unwrap();
        let mut c = OracleCounters::new();
        let opts = RunOptions {
            keep_iterates: true,
            ..RunOptions::with_seed(1)
        };
        let out = run_ncgs_vr(&f, &set, &sched, None, &opts, &mut c).unwrap();
        assert_eq!(c.ifo, sched.ifo_cached());
        assert_eq!(out.run.ifo_uncached, Some(sched.ifo_uncached()));
        assert_eq!(out.run.records.len(), sched.total);
        assert_eq!(out.output_point, out.run.iterates[out.output_index]);
        for it in &out.run.iterates {
            assert!(set.contains_default(it));
        }

        let opts = RunOptions {
            snapshot_cache_limit: 0,
            ..RunOptions::with_seed(1)
        };
        let mut c2 = OracleCounters::new();
        run_ncgs_vr(&f, &set, &sched, None, &opts, &mut c2).unwrap();
        assert_eq!(c2.ifo, sched.ifo_uncached());
    }
}
