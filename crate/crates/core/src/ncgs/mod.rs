//! Non-convex conditional gradient sliding: batched (options I and II),
//! stochastic, and variance-reduced finite-sum variants.

pub mod batch;
pub mod stochastic;
pub mod vr;

use crate::exec::Exec;
use crate::geometry::PowerSettings;
use crate::oracle::OracleCounters;
use crate::rng::SeedTree;
use crate::trace::{Flag, Stopwatch, TraceFooter, TraceRecord};

pub use batch::{
    batch_schedule, run_ncgs, run_ncgs_option1, run_ncgs_option2, BatchOption, BatchSchedule,
    BatchStep,
};
pub use stochastic::{
    run_sncgs, sample_stop_index, stop_probabilities, StochasticRun, StochasticSchedule,
    StochasticStep, StopRule,
};
pub use vr::{
    run_ncgs_vr, svrg_gradient, svrg_gradient_with_indices, EpochState, VrRun, VrSchedule,
};

/// Settings shared by every optimizer run.
#[derive(Debug, Clone)]
pub struct RunOptions {
    pub seeds: SeedTree,
    /// Record every `cadence`-th iteration. The last iteration is always
    /// recorded. Metrics are only computed for recorded rows.
    pub cadence: usize,
    /// Fill `wall_seconds`. Off by default so traces are reproducible byte for
    /// byte.
    pub timing: bool,
    pub exec: Exec,
    pub power: PowerSettings,
    /// Keep every outer iterate `θ_k` in [`RunOutput::iterates`].
    pub keep_iterates: bool,
    /// Oracle budget per condg call; `None` uses the default rule.
    pub condg_max_iter: Option<usize>,
    /// Entry budget for caching snapshot component gradients in the
    /// variance-reduced methods.
    pub snapshot_cache_limit: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self {
            seeds: SeedTree::new(0),
            cadence: 1,
            timing: false,
            exec: Exec::default(),
            power: PowerSettings::default(),
            keep_iterates: false,
            condg_max_iter: None,
            snapshot_cache_limit: 1 << 26,
        }
    }
}

impl RunOptions {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seeds: SeedTree::new(seed),
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunOutput {
    pub records: Vec<TraceRecord>,
    pub counters: OracleCounters,
    pub output_iter: u64,
    pub output_sq_grad_mapping: f64,
    pub ifo_uncached: Option<u64>,
    pub condg_nonconverged: u64,
    pub lo_nonconverged: u64,
    pub final_point: Vec<f64>,
    pub iterates: Vec<Vec<f64>>,
}

impl RunOutput {
    pub fn min_sq_grad_mapping(&self) -> f64 {
        self.records
            .iter()
            .map(|r| r.sq_grad_mapping)
            .fold(f64::INFINITY, f64::min)
    }

    pub fn mean_sq_grad_mapping(&self) -> f64 {
        if self.records.is_empty() {
            return f64::NAN;
        }
        self.records.iter().map(|r| r.sq_grad_mapping).sum::<f64>() / self.records.len() as f64
    }

    /// First recorded row whose metric is at or below `threshold`.
    pub fn first_below(&self, threshold: f64) -> Option<&TraceRecord> {
        self.records.iter().find(|r| r.sq_grad_mapping <= threshold)
    }

    pub fn footer(&self, algorithm: &str) -> TraceFooter {
        TraceFooter {
            algorithm: algorithm.to_string(),
            fo: self.counters.fo,
            sfo: self.counters.sfo,
            ifo: self.counters.ifo,
            lo: self.counters.lo,
            ifo_uncached: self.ifo_uncached,
            output_iter: self.output_iter,
            output_sq_grad_mapping: self.output_sq_grad_mapping,
            min_sq_grad_mapping: self.min_sq_grad_mapping(),
            mean_sq_grad_mapping: self.mean_sq_grad_mapping(),
            condg_nonconverged: self.condg_nonconverged,
            lo_nonconverged: self.lo_nonconverged,
        }
    }
}

/// Row builder shared by the optimizers.
pub(crate) struct Recorder {
    cadence: usize,
    timing: bool,
    watch: Stopwatch,
    pub records: Vec<TraceRecord>,
}

pub(crate) struct Row {
    pub iter: u64,
    pub epoch: Option<u64>,
    pub sq_grad_mapping: f64,
    pub objective_value: Option<f64>,
    pub flags: Vec<Flag>,
    pub true_sq_grad_mapping: Option<f64>,
    pub fw_gap: Option<f64>,
}

impl Recorder {
    pub fn new(opts: &RunOptions) -> Self {
        Self {
            cadence: opts.cadence.max(1),
            timing: opts.timing,
            watch: Stopwatch::started(),
            records: Vec::new(),
        }
    }

    pub fn wants(&self, iter: u64, last: bool) -> bool {
        last || iter.is_multiple_of(self.cadence as u64)
    }

    /// Stops the algorithm clock while metrics are evaluated.
    pub fn pause(&mut self) {
        self.watch.pause();
    }

    pub fn resume(&mut self) {
        self.watch.resume();
    }

    pub fn push(&mut self, row: Row, counters: &OracleCounters) {
        self.records.push(TraceRecord {
            iter: row.iter,
            epoch: row.epoch,
            wall_seconds: self.timing.then(|| self.watch.seconds()),
            fo: counters.fo,
            sfo: counters.sfo,
            ifo: counters.ifo,
            lo: counters.lo,
            sq_grad_mapping: row.sq_grad_mapping,
            objective_value: row.objective_value,
            flags: row.flags,
            true_sq_grad_mapping: row.true_sq_grad_mapping,
            fw_gap: row.fw_gap,
        });
    }

    /// Record with the smallest metric (first on ties).
    pub fn argmin(&self) -> (u64, f64) {
        self.records.iter().fold((0, f64::INFINITY), |best, r| {
            if r.sq_grad_mapping < best.1 {
                (r.iter, r.sq_grad_mapping)
            } else {
                best
            }
        })
    }
}

pub(crate) fn flags(condg_failed: bool, lo_failed: bool, diagnostic: bool) -> Vec<Flag> {
    let mut f = Vec::new();
    if condg_failed {
        f.push(Flag::CondgNonconverged);
    }
    if lo_failed {
        f.push(Flag::LoNonconverged);
    }
    if diagnostic {
        f.push(Flag::DiagnosticGradient);
    }
    f
}
