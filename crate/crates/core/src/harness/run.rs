//! Builds the configured problem, runs one algorithm on it and writes the
//! JSONL trace.

use std::fs::File;
use std::io::BufWriter;

use super::config::{Algorithm, ProblemSpec, RunConfig};
use super::HarnessError;
use crate::baselines::{run_fw_nonconvex, run_svfw, StepRule};
use crate::geometry::FeasibleSet;
use crate::ncgs::{
    run_ncgs_option1, run_ncgs_option2, run_ncgs_vr, run_sncgs, RunOptions, RunOutput, StopRule,
    VrSchedule,
};
use crate::oracle::{
    FiniteSumObjective, Objective, OracleCounters, StochasticObjective, UniformComponentSampler,
};
use crate::problems::{
    generate_completion, make_quadratic, random_center, CompletionInstance, CompletionObjective,
    FiniteSumQuadratic, NoisyQuadratic, Quadratic,
};
use crate::rng::SeedTree;
use crate::trace::{write_jsonl, TraceFooter, TraceHeader, TraceRecord, TRACE_SCHEMA};

pub enum Problem {
    Quadratic {
        objective: Quadratic,
        noisy: NoisyQuadratic,
        set: FeasibleSet,
    },
    FiniteSumQuadratic {
        objective: FiniteSumQuadratic,
        set: FeasibleSet,
    },
    Completion {
        instance: Box<CompletionInstance>,
        objective: CompletionObjective,
        set: FeasibleSet,
    },
}

impl Problem {
    pub fn set(&self) -> &FeasibleSet {
        match self {
            Problem::Quadratic { set, .. }
            | Problem::FiniteSumQuadratic { set, .. }
            | Problem::Completion { set, .. } => set,
        }
    }
}

fn default_box(dim: usize) -> FeasibleSet {
    FeasibleSet::Box {
        dim,
        lower: -1.0,
        upper: 1.0,
    }
}

/// Instantiates the problem; random instances are drawn from `seed`.
pub fn build_problem(spec: &ProblemSpec, seed: u64) -> Result<Problem, HarnessError> {
    let seeds = SeedTree::new(seed);
    Ok(match spec {
        ProblemSpec::Quadratic {
            dim,
            center,
            center_half_width,
            set,
            noise,
        } => {
            let center = match center {
                Some(c) => c.clone(),
                None => random_center(*dim, *center_half_width, &seeds)?,
            };
            let set = set.clone().unwrap_or_else(|| default_box(center.len()));
            let q = make_quadratic(center.clone(), set)?;
            Problem::Quadratic {
                objective: q.objective,
                noisy: NoisyQuadratic::new(center, *noise)?,
                set: q.set,
            }
        }
        ProblemSpec::FiniteSumQuadratic {
            components,
            dim,
            max_curvature,
            set,
        } => {
            let objective = FiniteSumQuadratic::random(*components, *dim, *max_curvature, &seeds)?;
            let set = set.clone().unwrap_or_else(|| default_box(*dim));
            set.validate()?;
            crate::error::check_dim(*dim, set.dim())?;
            Problem::FiniteSumQuadratic { objective, set }
        }
        ProblemSpec::Completion(c) => {
            let params = c.params();
            let (instance, objective, set) = match &c.instance {
                Some(path) => {
                    let mut inst = CompletionInstance::load(path).map_err(|e| match e {
                        crate::problems::completion::LoadError::Io(source) => {
                            HarnessError::Unreadable {
                                path: path.display().to_string(),
                                source,
                            }
                        }
                        other => HarnessError::Schema(other.to_string()),
                    })?;
                    if let Some(s) = c.scaling {
                        inst.params.scaling = s;
                    }
                    let objective = inst.objective();
                    let set = inst.feasible_set();
                    (inst, objective, set)
                }
                None => generate_completion(&params, seed)?,
            };
            Problem::Completion {
                instance: Box::new(instance),
                objective,
                set,
            }
        }
    })
}

/// The complete trace of one run.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSummary {
    pub header: TraceHeader,
    pub records: Vec<TraceRecord>,
    pub footer: TraceFooter,
}

struct Ctx<'a> {
    cfg: &'a RunConfig,
    opts: RunOptions,
    rule: StepRule,
}

impl Ctx<'_> {
    fn smoothness(&self, default: f64) -> f64 {
        self.cfg.smoothness.unwrap_or(default)
    }

    fn finish(&self, out: RunOutput, l: f64) -> RunSummary {
        RunSummary {
            header: TraceHeader {
                schema: TRACE_SCHEMA.into(),
                algorithm: self.cfg.algorithm.name().into(),
                problem: serde_json::to_value(&self.cfg.problem).unwrap_or_default(),
                seed: self.cfg.seed,
                horizon: self.cfg.horizon as u64,
                smoothness: l,
            },
            footer: out.footer(self.cfg.algorithm.name()),
            records: out.records,
        }
    }

    fn deterministic<O: Objective + ?Sized>(
        &self,
        obj: &O,
        set: &FeasibleSet,
    ) -> Result<RunSummary, HarnessError> {
        let l = self.smoothness(obj.smoothness().upper);
        let n = self.cfg.horizon;
        let mut c = OracleCounters::new();
        let out = match self.cfg.algorithm {
            Algorithm::Ncgs1 => run_ncgs_option1(obj, set, l, n, None, &self.opts, &mut c)?,
            Algorithm::Ncgs2 => run_ncgs_option2(obj, set, l, n, None, &self.opts, &mut c)?,
            Algorithm::Fw => run_fw_nonconvex(obj, set, l, n, self.rule, None, &self.opts, &mut c)?,
            other => unreachable!("{other} is not a full-gradient method"),
        };
        Ok(self.finish(out, l))
    }

    fn stochastic<S: StochasticObjective + ?Sized>(
        &self,
        obj: &S,
        set: &FeasibleSet,
    ) -> Result<RunSummary, HarnessError> {
        let l = self.smoothness(obj.smoothness().upper);
        let mut c = OracleCounters::new();
        let out = run_sncgs(
            obj,
            set,
            l,
            self.cfg.horizon,
            None,
            StopRule::Sampled,
            &self.opts,
            &mut c,
        )?;
        Ok(self.finish(out.run, l))
    }

    fn finite_sum<F: FiniteSumObjective + ?Sized>(
        &self,
        obj: &F,
        set: &FeasibleSet,
    ) -> Result<RunSummary, HarnessError> {
        let l = self.smoothness(obj.component_smoothness().upper);
        let schedule = VrSchedule::new(obj.num_components(), l, self.cfg.horizon)?;
        let mut c = OracleCounters::new();
        let out = match self.cfg.algorithm {
            Algorithm::NcgsVr => run_ncgs_vr(obj, set, &schedule, None, &self.opts, &mut c)?.run,
            Algorithm::Svfw => run_svfw(obj, set, &schedule, self.rule, None, &self.opts, &mut c)?,
            other => unreachable!("{other} is not a finite-sum method"),
        };
        Ok(self.finish(out, l))
    }

    fn any<F: FiniteSumObjective>(
        &self,
        obj: &F,
        set: &FeasibleSet,
    ) -> Result<RunSummary, HarnessError> {
        match self.cfg.algorithm {
            Algorithm::Sncgs => self.stochastic(&UniformComponentSampler::new(obj), set),
            a if a.needs_finite_sum() => self.finite_sum(obj, set),
            _ => self.deterministic(obj, set),
        }
    }
}

/// Runs the configuration in memory.
pub fn execute(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    cfg.validate()?;
    let problem = build_problem(&cfg.problem, cfg.seed)?;
    let ctx = Ctx {
        cfg,
        opts: RunOptions {
            cadence: cfg.cadence,
            timing: cfg.timing,
            ..RunOptions::with_seed(cfg.seed)
        },
        rule: cfg.step_rule.unwrap_or(StepRule::Harmonic),
    };
    match &problem {
        Problem::Quadratic {
            objective,
            noisy,
            set,
        } => match cfg.algorithm {
            Algorithm::Sncgs => ctx.stochastic(noisy, set),
            a if a.needs_finite_sum() => Err(HarnessError::Infeasible(format!(
                "{a} needs a finite-sum problem (finite_sum_quadratic or completion)"
            ))),
            _ => ctx.deterministic(objective, set),
        },
        Problem::FiniteSumQuadratic { objective, set } => ctx.any(objective, set),
        Problem::Completion { objective, set, .. } => ctx.any(objective, set),
    }
}

/// Runs the configuration and writes the trace to `cfg.out`.
pub fn run(cfg: &RunConfig) -> Result<RunSummary, HarnessError> {
    let Some(path) = cfg.out.clone() else {
        return Err(HarnessError::Schema("missing output path `out`".into()));
    };
    let summary = execute(cfg)?;
    let output = |source| HarnessError::Output {
        path: path.display().to_string(),
        source,
    };
    let file = File::create(&path).map_err(output)?;
    write_jsonl(
        BufWriter::new(file),
        &summary.header,
        &summary.records,
        &summary.footer,
    )
    .map_err(output)?;
    Ok(summary)
}
