//! Acceptance batteries. Each criterion runs a fixed, seeded experiment and
//! reports the measured quantity next to its target; tolerances are the
//! constants below.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};

use super::config::{Algorithm, CompletionSpec, ProblemSpec, RunConfig};
use super::run::execute;
use crate::baselines::{run_fw_nonconvex, run_svfw, StepRule};
use crate::condg::condg;
use crate::geometry::{prox_map, FeasibleSet, LinearOracle};
use crate::linalg::dist_sq;
use crate::ncgs::{
    run_ncgs_option1, run_ncgs_option2, run_ncgs_vr, run_sncgs, sample_stop_index,
    stop_probabilities, svrg_gradient, EpochState, RunOptions, StopRule, VrSchedule,
};
use crate::oracle::{FiniteSumObjective, Objective, OracleCounters};
use crate::problems::{
    generate_completion, make_quadratic, random_center, CompletionParams, FiniteSumQuadratic,
    NoisyQuadratic, QuadraticInstance, Scaling,
};
use crate::rng::SeedTree;
use crate::trace::write_jsonl;

/// Random prox instances for the condg lemma.
pub const LEMMA_INSTANCES: usize = 200;
/// Oracle budget per lemma instance, as a multiple of the default rule.
pub const LEMMA_BUDGET_FACTOR: usize = 20;
pub const BOUND_HORIZONS: [usize; 3] = [10, 100, 1000];
pub const RATE_HORIZONS: [usize; 5] = [10, 30, 100, 300, 1000];
pub const RATE_SLOPE: (f64, f64) = (-1.3, -0.7);
pub const LO_GROWTH_HORIZON: usize = 100;
pub const LO_GROWTH_RATIO: (f64, f64) = (3.0, 5.0);
pub const VARIANCE_PAIRS: usize = 20;
pub const VARIANCE_DRAWS: usize = 10_000;
pub const VARIANCE_BATCH: usize = 4;
pub const VARIANCE_SLACK: f64 = 1.05;
pub const VR_EPOCHS: [usize; 2] = [10, 30];
pub const HEAD_HORIZON: usize = 100;
pub const HEAD_FO_TARGET: f64 = 1e-2;
/// Inner steps for NCGS-VR; each costs up to `3L·T` oracle calls.
pub const HEAD_VR_STEPS: usize = 200;
/// Inner steps for SVFW, whose steps cost one oracle call each.
pub const HEAD_SVFW_STEPS: usize = 20_000;
pub const HEAD_TIME_TARGET: f64 = 1e-3;
pub const STOP_DRAWS: usize = 100_000;
pub const STOP_HORIZON: usize = 10;
pub const STOP_SIGMAS: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Lemmas,
    Rates,
    Bounds,
    HeadToHead,
}

impl Suite {
    pub const ALL: [Suite; 4] = [
        Suite::Lemmas,
        Suite::Rates,
        Suite::Bounds,
        Suite::HeadToHead,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Suite::Lemmas => "lemmas",
            Suite::Rates => "rates",
            Suite::Bounds => "bounds",
            Suite::HeadToHead => "headtohead",
        }
    }
}

impl FromStr for Suite {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Suite::ALL
            .into_iter()
            .find(|x| x.name() == s)
            .ok_or_else(|| {
                format!("unknown suite `{s}`, expected lemmas, rates, bounds or headtohead")
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u32,
    pub name: &'static str,
    pub measured: String,
    pub target: String,
    pub pass: bool,
    pub seconds: f64,
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{} [{:>2}] {:<28} measured: {}  target: {}  ({:.1}s)",
            if self.pass { "PASS" } else { "FAIL" },
            self.id,
            self.name,
            self.measured,
            self.target,
            self.seconds
        )
    }
}

fn timed(id: u32, name: &'static str, body: impl FnOnce() -> (String, String, bool)) -> Criterion {
    let t = Instant::now();
    let (measured, target, pass) = body();
    Criterion {
        id,
        name,
        measured,
        target,
        pass,
        seconds: t.elapsed().as_secs_f64(),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub suite: Suite,
    pub criteria: Vec<Criterion>,
}

impl Report {
    pub fn all_pass(&self) -> bool {
        self.criteria.iter().all(|c| c.pass)
    }
}

impl fmt::Display for Report {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "suite {}", self.suite.name())?;
        for c in &self.criteria {
            writeln!(f, "{c}")?;
        }
        let passed = self.criteria.iter().filter(|c| c.pass).count();
        write!(f, "{passed}/{} passed", self.criteria.len())
    }
}

pub fn verify(suite: Suite) -> Report {
    let criteria = match suite {
        Suite::Lemmas => vec![
            condg_prox_lemma(),
            oracle_ledger(),
            svrg_variance(),
            stop_index_distribution(),
            determinism(),
        ],
        Suite::Rates => vec![batch_rate(), lo_growth()],
        Suite::Bounds => vec![batch_bound(), vr_bound()],
        Suite::HeadToHead => vec![head_to_head()],
    };
    Report { suite, criteria }
}

/// `½‖θ − c‖²` over `[−1, 1]^20` with `c` uniform in the interior, `L = 1`.
pub fn box_quadratic() -> QuadraticInstance {
    let center = random_center(20, 1.0, &SeedTree::new(0)).expect("valid width");
    make_quadratic(
        center,
        FeasibleSet::Box {
            dim: 20,
            lower: -1.0,
            upper: 1.0,
        },
    )
    .expect("valid instance")
}

fn lemma_sets() -> [FeasibleSet; 4] {
    [
        FeasibleSet::Box {
            dim: 10,
            lower: -1.0,
            upper: 1.0,
        },
        FeasibleSet::Simplex {
            dim: 10,
            radius: 1.0,
        },
        FeasibleSet::L1Ball {
            dim: 10,
            radius: 1.0,
        },
        FeasibleSet::NuclearBall {
            rows: 10,
            cols: 10,
            radius: 1.0,
        },
    ]
}

/// condg output against the exact prox point on random instances.
pub fn condg_prox_lemma() -> Criterion {
    timed(1, "condg-prox lemma", || {
        let sets = lemma_sets();
        let mut rng = SeedTree::new(1).stream(0);
        let mut worst = 0.0f64;
        let mut violations = 0;
        let mut unconverged = 0;
        for k in 0..LEMMA_INSTANCES {
            let set = &sets[k % sets.len()];
            let d = set.dim();
            let mut oracle = LinearOracle::new(set, &SeedTree::new(k as u64));
            let mut c = OracleCounters::new();
            // u: random convex combination of oracle vertices
            let mut u = vec![0.0; d];
            let weights: Vec<f64> = (0..5)
                .map(|_| -rng.random::<f64>().max(1e-300).ln())
                .collect();
            let total: f64 = weights.iter().sum();
            for w in &weights {
                let z: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
                let v = oracle.minimize(&z, &mut c).expect("valid direction");
                u.iter_mut()
                    .zip(&v)
                    .for_each(|(ui, vi)| *ui += w / total * vi);
            }
            let scale = 10f64.powf(rng.random_range(-1.0..1.0));
            let l: Vec<f64> = (0..d)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    scale * z
                })
                .collect();
            let lambda = rng.random_range(0.05..=2.0);
            let eta = 10f64.powf(rng.random_range(-5.0..=-2.0));
            let budget = LEMMA_BUDGET_FACTOR * crate::condg::default_max_iter(lambda, eta);
            let r = condg(&mut oracle, &l, &u, lambda, eta, Some(budget), &mut c)
                .expect("valid instance");
            unconverged += usize::from(!r.converged);
            let exact = prox_map(set, &u, &l, lambda).expect("projection supported");
            let ratio = dist_sq(&r.point, &exact) / (eta * lambda);
            worst = worst.max(ratio);
            violations += usize::from(ratio > 1.0);
        }
        (
            format!(
                "max ‖x−ψ‖²/(ηλ) = {worst:.3e}, {violations} violations, {unconverged} unconverged over {LEMMA_INSTANCES}"
            ),
            "‖x−ψ‖² ≤ ηλ on every instance".into(),
            violations == 0,
        )
    })
}

fn quadratic_gap(q: &QuadraticInstance) -> f64 {
    let theta0 = q.set.canonical_vertex();
    q.objective.value(&theta0) - q.optimal_value
}

/// Best recorded metric of option I on the box quadratic.
fn option1_min(q: &QuadraticInstance, horizon: usize) -> f64 {
    let mut c = OracleCounters::new();
    run_ncgs_option1(
        &q.objective,
        &q.set,
        1.0,
        horizon,
        None,
        &RunOptions::default(),
        &mut c,
    )
    .expect("valid run")
    .min_sq_grad_mapping()
}

pub fn batch_bound() -> Criterion {
    timed(2, "option I bound", || {
        let q = box_quadratic();
        let gap = quadratic_gap(&q);
        let mut pass = true;
        let pairs: Vec<String> = BOUND_HORIZONS
            .iter()
            .map(|&n| {
                let measured = option1_min(&q, n);
                let bound = (12.0 * gap + 16.0) / n as f64;
                pass &= measured <= bound;
                format!("N={n}: {measured:.3e} ≤ {bound:.3e}")
            })
            .collect();
        (
            pairs.join(", "),
            "min ‖g‖² ≤ (12L(F(θ0)−F*)+16L)/N".into(),
            pass,
        )
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn loglog_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let (mx, my) = (lx.iter().sum::<f64>() / n, ly.iter().sum::<f64>() / n);
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx).powi(2)).sum();
    sxy / sxx
}

pub fn batch_rate() -> Criterion {
    timed(3, "option I rate", || {
        let q = box_quadratic();
        let ns: Vec<f64> = RATE_HORIZONS.iter().map(|&n| n as f64).collect();
        let mins: Vec<f64> = RATE_HORIZONS.iter().map(|&n| option1_min(&q, n)).collect();
        let slope = loglog_slope(&ns, &mins);
        let listed: Vec<String> = RATE_HORIZONS
            .iter()
            .zip(&mins)
            .map(|(n, m)| format!("{n}:{m:.2e}"))
            .collect();
        (
            format!("slope {slope:.3} [{}]", listed.join(" ")),
            format!("slope in [{}, {}]", RATE_SLOPE.0, RATE_SLOPE.1),
            (RATE_SLOPE.0..=RATE_SLOPE.1).contains(&slope),
        )
    })
}

pub fn lo_growth() -> Criterion {
    timed(4, "option II LO growth", || {
        let q = box_quadratic();
        let lo = |n| {
            let mut c = OracleCounters::new();
            run_ncgs_option2(
                &q.objective,
                &q.set,
                1.0,
                n,
                None,
                &RunOptions::default(),
                &mut c,
            )
            .expect("valid run");
            c.lo
        };
        let (a, b) = (lo(LO_GROWTH_HORIZON), lo(2 * LO_GROWTH_HORIZON));
        let ratio = b as f64 / a as f64;
        (
            format!(
                "LO({})={a}, LO({})={b}, ratio {ratio:.3}",
                LO_GROWTH_HORIZON,
                2 * LO_GROWTH_HORIZON
            ),
            format!("ratio in [{}, {}]", LO_GROWTH_RATIO.0, LO_GROWTH_RATIO.1),
            (LO_GROWTH_RATIO.0..=LO_GROWTH_RATIO.1).contains(&ratio),
        )
    })
}

pub fn oracle_ledger() -> Criterion {
    timed(5, "oracle ledger", || {
        let q = box_quadratic();
        let n = 100;
        let mut c = OracleCounters::new();
        run_ncgs_option1(
            &q.objective,
            &q.set,
            1.0,
            n,
            None,
            &RunOptions::default(),
            &mut c,
        )
        .expect("valid run");
        let fo = c.fo;

        let noisy = NoisyQuadratic::new(q.objective.center.clone(), 1.0).expect("valid noise");
        let ns = 50;
        let mut c = OracleCounters::new();
        run_sncgs(
            &noisy,
            &q.set,
            1.0,
            ns,
            None,
            StopRule::At(ns),
            &RunOptions::default(),
            &mut c,
        )
        .expect("valid run");
        let sfo = c.sfo;
        let sfo_want = (ns * (ns + 1) / 2) as u64;

        let f = FiniteSumQuadratic::random(100, 10, 1.0, &SeedTree::new(5)).expect("valid sum");
        let set = FeasibleSet::unit_box(10);
        let schedule =
            VrSchedule::new(100, f.component_smoothness().upper, 60).expect("valid schedule");
        let mut c = OracleCounters::new();
        run_ncgs_vr(&f, &set, &schedule, None, &RunOptions::default(), &mut c).expect("valid run");
        let ifo = c.ifo;
        let ifo_want = schedule.ifo_cached();
        (
            format!(
                "FO={fo} (N={n}), SFO={sfo} (N={ns}), IFO={ifo} (S={}, n=100, b={}, m={})",
                schedule.epochs, schedule.batch, schedule.epoch_len
            ),
            format!("FO={n}, SFO={sfo_want}, IFO={ifo_want}"),
            fo == n as u64 && sfo == sfo_want && ifo == ifo_want,
        )
    })
}

pub fn svrg_variance() -> Criterion {
    timed(6, "SVRG variance lemma", || {
        let f = FiniteSumQuadratic::random(100, 10, 1.0, &SeedTree::new(6)).expect("valid sum");
        let l = f.component_smoothness().upper;
        let mut rng = SeedTree::new(6).stream(0);
        let mut worst = 0.0f64;
        for _ in 0..VARIANCE_PAIRS {
            let mut c = OracleCounters::new();
            let theta: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let snap: Vec<f64> = (0..10).map(|_| rng.random_range(-1.0..1.0)).collect();
            let state = EpochState::compute(&f, &snap, crate::Exec::default(), usize::MAX, &mut c)
                .expect("valid snapshot");
            let mut full = vec![0.0; 10];
            f.gradient(&theta, &mut full);
            let mean = (0..VARIANCE_DRAWS)
                .map(|_| {
                    let v = svrg_gradient(&f, &theta, &state, VARIANCE_BATCH, &mut rng, &mut c)
                        .expect("valid draw");
                    dist_sq(&full, &v)
                })
                .sum::<f64>()
                / VARIANCE_DRAWS as f64;
            let bound = l * l / VARIANCE_BATCH as f64 * dist_sq(&theta, &snap);
            worst = worst.max(mean / bound);
        }
        (
            format!("max E‖∇F−v‖² / ((L²/b)‖θ−θ̃‖²) = {worst:.4} over {VARIANCE_PAIRS} pairs"),
            format!("≤ {VARIANCE_SLACK}"),
            worst <= VARIANCE_SLACK,
        )
    })
}

pub fn vr_bound() -> Criterion {
    timed(7, "VR bound", || {
        let params = CompletionParams::sized(50, 50, 3);
        let (_, obj, set) = generate_completion(&params, 0).expect("valid instance");
        let l = obj.component_smoothness().upper;
        let n = obj.num_components();
        let m = VrSchedule::new(n, l, 1).expect("valid schedule").epoch_len;
        let f0 = obj.value(&set.canonical_vertex());
        let mut pass = true;
        let pairs: Vec<String> = VR_EPOCHS
            .iter()
            .map(|&s| {
                let schedule = VrSchedule::new(n, l, s * m).expect("valid schedule");
                let mut c = OracleCounters::new();
                let run = run_ncgs_vr(&obj, &set, &schedule, None, &RunOptions::default(), &mut c)
                    .expect("valid run");
                let measured = run.run.mean_sq_grad_mapping();
                let t = schedule.total as f64;
                let bound = 18.0 * l * (f0 + 1.0) / t;
                pass &= measured <= bound;
                format!("T={}: {measured:.3e} ≤ {bound:.3e}", schedule.total)
            })
            .collect();
        (
            format!("n={n}, m={m}; {}", pairs.join(", ")),
            "E_α‖g(θ_α)‖² ≤ 18L(F(θ0)+1)/T".into(),
            pass,
        )
    })
}

fn fmt_opt<T: fmt::Display>(x: Option<T>) -> String {
    x.map(|v| v.to_string()).unwrap_or_else(|| "never".into())
}

/// The reference 100×100 head-to-head instance, with the loss summed over
/// observed entries.
pub fn head_to_head_params() -> CompletionParams {
    CompletionParams {
        scaling: Scaling::Sum,
        ..CompletionParams::sized(100, 100, 5)
    }
}

pub fn head_to_head() -> Criterion {
    timed(8, "head-to-head", || {
        let params = head_to_head_params();
        let (_, obj, set) = generate_completion(&params, 0).expect("valid instance");
        let l = obj.smoothness().upper;

        let opts = RunOptions::default();
        let mut c = OracleCounters::new();
        let ncgs =
            run_ncgs_option1(&obj, &set, l, HEAD_HORIZON, None, &opts, &mut c).expect("valid run");
        let mut c = OracleCounters::new();
        let fw = run_fw_nonconvex(
            &obj,
            &set,
            l,
            HEAD_HORIZON,
            StepRule::Harmonic,
            None,
            &opts,
            &mut c,
        )
        .expect("valid run");
        let ncgs_fo = ncgs.first_below(HEAD_FO_TARGET).map(|r| r.fo);
        let fw_fo = fw.first_below(HEAD_FO_TARGET).map(|r| r.fo);
        let a = match (ncgs_fo, fw_fo) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        };

        let timing = RunOptions {
            timing: true,
            ..RunOptions::default()
        };
        let n = obj.num_components();
        let schedule = VrSchedule::new(n, l, HEAD_VR_STEPS).expect("valid schedule");
        let mut c = OracleCounters::new();
        let vr = run_ncgs_vr(&obj, &set, &schedule, None, &timing, &mut c).expect("valid run");
        let schedule = VrSchedule::new(n, l, HEAD_SVFW_STEPS).expect("valid schedule");
        let mut c = OracleCounters::new();
        let svfw = run_svfw(
            &obj,
            &set,
            &schedule,
            StepRule::Harmonic,
            None,
            &timing,
            &mut c,
        )
        .expect("valid run");
        let vr_t = vr
            .run
            .first_below(HEAD_TIME_TARGET)
            .and_then(|r| r.wall_seconds);
        let svfw_t = svfw
            .first_below(HEAD_TIME_TARGET)
            .and_then(|r| r.wall_seconds);
        let b = match (vr_t, svfw_t) {
            (Some(x), Some(y)) => x < y,
            (Some(_), None) => true,
            _ => false,
        };
        let secs = |t: Option<f64>| fmt_opt(t.map(|s| format!("{s:.3}s")));
        (
            format!(
                "(a) FO to {HEAD_FO_TARGET:.0e}: ncgs1 {} vs fw {}; (b) time to {HEAD_TIME_TARGET:.0e}: ncgs-vr {} (best {:.2e} in {}) vs svfw {} (best {:.2e} in {})",
                fmt_opt(ncgs_fo),
                fmt_opt(fw_fo),
                secs(vr_t),
                vr.run.min_sq_grad_mapping(),
                secs(vr.run.records.last().and_then(|r| r.wall_seconds)),
                secs(svfw_t),
                svfw.min_sq_grad_mapping(),
                secs(svfw.records.last().and_then(|r| r.wall_seconds)),
            ),
            "(a) ncgs1 < fw and (b) ncgs-vr < svfw".into(),
            a && b,
        )
    })
}

pub fn stop_index_distribution() -> Criterion {
    timed(9, "stop-index distribution", || {
        let p = stop_probabilities(STOP_HORIZON);
        let mut rng = SeedTree::new(9).stream(crate::rng::stream::STOP_INDEX);
        let mut counts = [0usize; STOP_HORIZON];
        for _ in 0..STOP_DRAWS {
            counts[sample_stop_index(STOP_HORIZON, &mut rng).expect("valid horizon") - 1] += 1;
        }
        let draws = STOP_DRAWS as f64;
        let worst = counts
            .iter()
            .zip(&p)
            .map(|(&c, &pk)| (c as f64 - draws * pk).abs() / (draws * pk * (1.0 - pk)).sqrt())
            .fold(0.0, f64::max);
        (
            format!("max |count − Np_k|/σ_k = {worst:.2} over {STOP_HORIZON} bins"),
            format!("≤ {STOP_SIGMAS}σ per bin"),
            worst <= STOP_SIGMAS,
        )
    })
}

fn trace_bytes(cfg: &RunConfig) -> Vec<u8> {
    let s = execute(cfg).expect("valid config");
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &s.header, &s.records, &s.footer).expect("in-memory write");
    buf
}

pub fn determinism() -> Criterion {
    timed(10, "determinism", || {
        let quadratic = ProblemSpec::Quadratic {
            dim: 20,
            center: None,
            center_half_width: 1.0,
            set: None,
            noise: 0.5,
        };
        let completion = ProblemSpec::Completion(CompletionSpec {
            rows: Some(30),
            cols: Some(30),
            rank: Some(3),
            ..Default::default()
        });
        let mut identical = 0;
        let mut total = 0;
        for (problem, algorithm, horizon) in [
            (quadratic.clone(), Algorithm::Ncgs1, 10),
            (quadratic, Algorithm::Sncgs, 20),
            (completion.clone(), Algorithm::NcgsVr, 60),
            (completion, Algorithm::Svfw, 60),
        ] {
            let mut cfg = RunConfig::new(problem, algorithm, horizon);
            cfg.seed = 7;
            total += 1;
            identical += usize::from(trace_bytes(&cfg) == trace_bytes(&cfg));
        }
        (
            format!("{identical}/{total} configurations byte-identical across two runs"),
            "all identical".into(),
            identical == total,
        )
    })
}
