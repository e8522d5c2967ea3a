//! Experiment pipeline: initial solutions, method runs, configuration files
//! and result rows.

mod preset;
mod record;

use std::collections::HashMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde::{Deserialize, Deserializer, Serialize};

pub use preset::{control_period_set, generate_preset, Preset, PresetParams, DAG_CORES};
pub use record::{read_records, relative_gap, write_records, ExperimentRecord, CSV_HEADER};

use crate::baselines::{brute_force_optimum, simulated_annealing, SaConfig};
use crate::error::{invalid, Error, Result};
use crate::north::{north_optimize, NorthOptions};
use crate::northplus::{northplus_optimize, NorthPlusOptions};
use crate::objectives::{round_periods, ObjectiveSpec};
use crate::oracle::{build_oracle, OracleKind, SchedulabilityOracle};
use crate::problem::{DesignMap, Evaluator, Problem};
use crate::taskmodel::{rate_monotonic_priorities, PriorityAssignment, TaskSet};

/// Default per-run time limit in seconds.
pub const DEFAULT_TIME_LIMIT_SECS: f64 = 600.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    North,
    #[serde(rename = "northplus")]
    NorthPlus,
    Sa,
    Brute,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::North, Method::NorthPlus, Method::Sa, Method::Brute];

    pub fn name(self) -> &'static str {
        match self {
            Method::North => "north",
            Method::NorthPlus => "northplus",
            Method::Sa => "sa",
            Method::Brute => "brute",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| invalid(format!("unknown method `{s}` (expected north, northplus, sa or brute)")))
    }
}

/// The heuristic starting point: maximum frequency, minimum execution time
/// or maximum period, depending on the design variables. One oracle query
/// confirms it.
pub fn initial_solution(
    problem: &Problem,
    oracle: &mut dyn SchedulabilityOracle,
    prio: &PriorityAssignment,
) -> Result<Vec<f64>> {
    let point = match problem.design() {
        DesignMap::Frequency { .. } | DesignMap::Period { .. } => problem.upper().to_vec(),
        DesignMap::Wcet => problem.lower().to_vec(),
    };
    if oracle.is_schedulable(&point, prio)? {
        Ok(point)
    } else {
        Err(Error::InitialInfeasible { point })
    }
}

/// Per-method knobs for one run.
#[derive(Clone, Debug)]
pub struct MethodSettings {
    pub north: NorthOptions,
    pub northplus: NorthPlusOptions,
    pub sa: SaConfig,
    pub brute_resolution: usize,
    pub time_limit: Option<Duration>,
}

impl MethodSettings {
    pub fn for_preset(preset: Preset, seed: u64) -> Self {
        let north = preset.north_options();
        MethodSettings {
            northplus: NorthPlusOptions { north: north.clone(), ..Default::default() },
            north,
            sa: SaConfig { seed, ..Default::default() },
            brute_resolution: 200,
            time_limit: Some(Duration::from_secs_f64(DEFAULT_TIME_LIMIT_SECS)),
        }
    }

    /// Settings for a task set loaded from disk, chosen by its objective and platform.
    pub fn for_taskset(ts: &TaskSet, seed: u64) -> Self {
        let preset = match (&ts.objective, ts.cores) {
            (Some(ObjectiveSpec::Control { .. }), _) => Preset::ControlDag,
            (Some(ObjectiveSpec::Energy { .. }), m) if m > 1 => Preset::EnergyDag,
            _ => Preset::EnergyRm,
        };
        MethodSettings::for_preset(preset, seed)
    }
}

/// Result of a single method run on a single problem.
#[derive(Clone, Debug)]
pub struct SolveOutcome {
    pub method: Method,
    pub x: Vec<f64>,
    pub priorities: PriorityAssignment,
    pub obj_init: f64,
    pub obj_final: f64,
    /// Queries counted by the oracle, including the initial and final checks.
    pub oracle_calls: u64,
    pub elim_rounds: usize,
    pub wall_ms: f64,
    pub feasible: bool,
    pub timeout: bool,
    /// Whether the heuristic starting point was schedulable.
    pub initial_feasible: bool,
    /// Objective trace reported by the method (best-so-far for annealing).
    pub trace: Vec<f64>,
}

struct MethodResult {
    x: Vec<f64>,
    prio: PriorityAssignment,
    rounds: usize,
    trace: Vec<f64>,
    /// Earlier designs worth comparing after rounding.
    alternatives: Vec<(Vec<f64>, PriorityAssignment)>,
}

fn run_method(
    method: Method,
    problem: &Problem,
    x0: &[f64],
    prio: &PriorityAssignment,
    oracle: &mut dyn SchedulabilityOracle,
    settings: &MethodSettings,
    deadline: Option<Instant>,
) -> Result<MethodResult> {
    match method {
        Method::North => {
            let mut opts = settings.north.clone();
            opts.lm.deadline = deadline;
            let out = north_optimize(problem, x0, oracle, prio.clone(), &opts)?;
            Ok(MethodResult {
                rounds: out.elimination_rounds(),
                x: out.space.x,
                prio: prio.clone(),
                trace: out.trace.objective,
                alternatives: Vec::new(),
            })
        }
        Method::NorthPlus => {
            let mut opts = settings.northplus.clone();
            opts.north.lm.deadline = deadline;
            let out = northplus_optimize(problem, x0, prio.clone(), oracle, &opts)?;
            Ok(MethodResult {
                rounds: out.elimination_rounds(),
                x: out.space.x,
                prio: out.priorities,
                trace: out.outer_objective,
                alternatives: out.phases.into_iter().map(|p| (p.x, p.priorities)).collect(),
            })
        }
        Method::Sa => {
            let cfg = SaConfig { deadline, ..settings.sa.clone() };
            let out = simulated_annealing(problem, x0, oracle, prio.clone(), &cfg)?;
            Ok(MethodResult { x: out.x, prio: prio.clone(), rounds: 0, trace: out.trace, alternatives: Vec::new() })
        }
        Method::Brute => {
            let best = brute_force_optimum(problem, settings.brute_resolution, oracle, prio.clone())?;
            let x = best.map_or_else(|| x0.to_vec(), |b| b.x);
            Ok(MethodResult { x, prio: prio.clone(), rounds: 0, trace: Vec::new(), alternatives: Vec::new() })
        }
    }
}

/// Runs `method` from the heuristic initial point under rate-monotonic
/// priorities. A time-out or an infeasible starting point yields the initial
/// point as the result. Period designs are rounded into their allowed set
/// before the final check; for NORTH+ the end point of every NORTH phase is
/// rounded too and the best schedulable design wins.
pub fn solve(
    problem: &Problem,
    method: Method,
    oracle: &mut dyn SchedulabilityOracle,
    settings: &MethodSettings,
) -> Result<SolveOutcome> {
    let start = Instant::now();
    let deadline = settings.time_limit.map(|d| start + d);
    let prio0 = rate_monotonic_priorities(problem.taskset());
    let (x0, initial_feasible) = match initial_solution(problem, oracle, &prio0) {
        Ok(x) => (x, true),
        Err(Error::InitialInfeasible { point }) => (point, false),
        Err(e) => return Err(e),
    };
    let obj_init = Evaluator::new(problem, oracle, prio0.clone())?.objective(&x0)?;
    if !initial_feasible {
        return Ok(SolveOutcome {
            method,
            x: x0,
            priorities: prio0,
            obj_init,
            obj_final: obj_init,
            oracle_calls: oracle.query_count(),
            elim_rounds: 0,
            wall_ms: start.elapsed().as_secs_f64() * 1e3,
            feasible: false,
            timeout: false,
            initial_feasible,
            trace: vec![obj_init],
        });
    }

    let (result, timeout) = match run_method(method, problem, &x0, &prio0, oracle, settings, deadline) {
        Ok(r) => (r, false),
        Err(Error::Timeout) => {
            let fallback = MethodResult {
                x: x0.clone(),
                prio: prio0.clone(),
                rounds: 0,
                trace: vec![obj_init],
                alternatives: Vec::new(),
            };
            (fallback, true)
        }
        Err(e) => return Err(e),
    };
    let (x, prio, feasible, obj_final) = if let DesignMap::Period { allowed: Some(_), .. } = problem.design() {
        // Rounding can reorder designs that were close before it, so every
        // candidate is rounded and the best schedulable one is kept.
        let mut best: Option<(Vec<f64>, PriorityAssignment, bool, f64)> = None;
        let candidates = std::iter::once((result.x, result.prio)).chain(result.alternatives);
        for (x, prio) in candidates {
            let x = match round_periods(problem, &x, oracle, &prio) {
                Ok(rounded) => rounded,
                Err(Error::RoundingInfeasible { .. }) => x,
                Err(e) => return Err(e),
            };
            let mut eval = Evaluator::new(problem, oracle, prio.clone())?;
            let feasible = eval.feasible(&x)?;
            let value = eval.objective(&x)?;
            let better = match &best {
                None => true,
                Some((_, _, f, v)) => (feasible && !f) || (feasible == *f && value < *v),
            };
            if better {
                best = Some((x, prio, feasible, value));
            }
        }
        best.expect("at least one candidate")
    } else {
        let mut eval = Evaluator::new(problem, oracle, result.prio.clone())?;
        let feasible = eval.feasible(&result.x)?;
        let value = eval.objective(&result.x)?;
        (result.x, result.prio, feasible, value)
    };
    Ok(SolveOutcome {
        method,
        x,
        priorities: prio,
        obj_init,
        obj_final,
        oracle_calls: oracle.query_count(),
        elim_rounds: result.rounds,
        wall_ms: start.elapsed().as_secs_f64() * 1e3,
        feasible,
        timeout,
        initial_feasible,
        trace: result.trace,
    })
}

fn one_or_many<'de, D, T>(de: D) -> std::result::Result<Vec<T>, D::Error>
where
    D: Deserializer<'de>,
    T: Deserialize<'de>,
{
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum OneOrMany<T> {
        One(T),
        Many(Vec<T>),
    }
    Ok(match OneOrMany::deserialize(de)? {
        OneOrMany::One(v) => vec![v],
        OneOrMany::Many(v) => v,
    })
}

/// Inclusive seed range.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SeedRange {
    pub from: u64,
    pub to: u64,
}

fn default_time_limit() -> f64 {
    DEFAULT_TIME_LIMIT_SECS
}

fn default_sa_iterations() -> u64 {
    SaConfig::default().iterations
}

fn default_resolution() -> usize {
    200
}

/// A JSON experiment description.
///
/// ```json
/// { "preset": "energy-rm", "n": [5, 10], "utilization": 0.7,
///   "seeds": { "from": 0, "to": 9 }, "methods": ["north", "sa"] }
/// ```
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub preset: Preset,
    /// `rta`, `sim` or `exec:<command>`; defaults to the preset's oracle.
    #[serde(default)]
    pub oracle: Option<String>,
    #[serde(deserialize_with = "one_or_many")]
    pub n: Vec<usize>,
    /// Total utilization, one value or a list.
    #[serde(default, deserialize_with = "one_or_many")]
    pub utilization: Vec<f64>,
    /// Adds the per-core 0.1..0.9 sweep to `utilization`.
    #[serde(default)]
    pub utilization_sweep: bool,
    pub seeds: SeedRange,
    pub methods: Vec<Method>,
    #[serde(default = "default_time_limit")]
    pub time_limit_secs: f64,
    #[serde(default)]
    pub nodes_per_dag: Option<(usize, usize)>,
    #[serde(default = "default_sa_iterations")]
    pub sa_iterations: u64,
    #[serde(default = "default_resolution")]
    pub brute_resolution: usize,
    /// Method whose result is the gap reference; by default the best
    /// objective among all methods on the same instance.
    #[serde(default)]
    pub gap_reference: Option<Method>,
    #[serde(default)]
    pub threads: Option<usize>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("{e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        ExperimentConfig::from_json(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: &str| Err(Error::Config(msg.into()));
        if self.methods.is_empty() {
            return fail("field `methods` must not be empty");
        }
        if self.n.is_empty() || self.n.contains(&0) {
            return fail("field `n` must list positive sizes");
        }
        if self.seeds.to < self.seeds.from {
            return fail("field `seeds`: `to` must not be below `from`");
        }
        if !(self.time_limit_secs > 0.0) || !self.time_limit_secs.is_finite() {
            return fail("field `time_limit_secs` must be positive");
        }
        if self.brute_resolution == 0 {
            return fail("field `brute_resolution` must be positive");
        }
        if self.preset != Preset::ControlDag && self.utilizations().is_empty() {
            return fail("field `utilization` is required for energy presets");
        }
        if self.utilization.iter().any(|u| !(*u > 0.0)) {
            return fail("field `utilization` must hold positive values");
        }
        if let Some(o) = &self.oracle {
            o.parse::<OracleKind>().map_err(|e| Error::Config(format!("field `oracle`: {e}")))?;
        }
        Ok(())
    }

    pub fn oracle_kind(&self) -> Result<OracleKind> {
        match &self.oracle {
            Some(o) => o.parse(),
            None => Ok(self.preset.default_oracle()),
        }
    }

    fn utilizations(&self) -> Vec<f64> {
        let mut u = self.utilization.clone();
        if self.utilization_sweep {
            u.extend(self.preset.utilization_sweep());
        }
        if u.is_empty() && self.preset == Preset::ControlDag {
            u.push(f64::NAN);
        }
        u
    }

    fn settings(&self, seed: u64) -> MethodSettings {
        let mut s = MethodSettings::for_preset(self.preset, seed);
        s.sa.iterations = self.sa_iterations;
        s.brute_resolution = self.brute_resolution;
        s.time_limit = Some(Duration::from_secs_f64(self.time_limit_secs));
        s
    }
}

#[derive(Clone, Debug)]
struct Job {
    n: usize,
    util: f64,
    seed: u64,
    method: Method,
}

fn run_job(cfg: &ExperimentConfig, kind: &OracleKind, job: &Job) -> Result<ExperimentRecord> {
    let mut params = PresetParams::new(job.n, job.util);
    if let Some(nodes) = cfg.nodes_per_dag {
        params.nodes_per_dag = nodes;
    }
    let ts = generate_preset(cfg.preset, &params, job.seed)?;
    let problem = Problem::from_taskset(&ts)?;
    let mut oracle = build_oracle(kind, &problem)?;
    let out = solve(&problem, job.method, &mut oracle, &cfg.settings(job.seed))?;
    Ok(ExperimentRecord {
        method: job.method.name().to_string(),
        seed: job.seed,
        n: job.n,
        util: if job.util.is_nan() { ts.utilization() } else { job.util },
        obj_init: out.obj_init,
        obj_final: out.obj_final,
        gap_pct: None,
        oracle_calls: out.oracle_calls,
        elim_rounds: out.elim_rounds,
        wall_ms: out.wall_ms,
        feasible: out.feasible,
        timeout: out.timeout,
    })
}

/// Runs every (size, utilization, seed, method) combination on a worker
/// pool. Rows come back sorted by size, utilization, seed and method, with
/// gaps filled in per instance.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<Vec<ExperimentRecord>> {
    cfg.validate()?;
    let kind = cfg.oracle_kind()?;
    let mut jobs = Vec::new();
    for &n in &cfg.n {
        for util in cfg.utilizations() {
            for seed in cfg.seeds.from..=cfg.seeds.to {
                for &method in &cfg.methods {
                    jobs.push(Job { n, util, seed, method });
                }
            }
        }
    }
    let threads = cfg
        .threads
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
        .clamp(1, jobs.len().max(1));
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<ExperimentRecord>>>> =
        Mutex::new((0..jobs.len()).map(|_| None).collect());
    std::thread::scope(|scope| {
        for _ in 0..threads {
            scope.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(job) = jobs.get(i) else { break };
                let r = run_job(cfg, &kind, job);
                results.lock().unwrap()[i] = Some(r);
            });
        }
    });
    let mut rows = Vec::with_capacity(jobs.len());
    for r in results.into_inner().unwrap() {
        rows.push(r.expect("every job ran")?);
    }
    fill_gaps(&mut rows, cfg.gap_reference);
    rows.sort_by(|a, b| {
        a.n.cmp(&b.n)
            .then(a.util.total_cmp(&b.util))
            .then(a.seed.cmp(&b.seed))
            .then_with(|| a.method.cmp(&b.method))
    });
    Ok(rows)
}

/// Sets `gap_pct` of every row against its instance's reference objective.
pub fn fill_gaps(rows: &mut [ExperimentRecord], reference: Option<Method>) {
    let mut refs: HashMap<(usize, u64, u64), f64> = HashMap::new();
    for r in rows.iter() {
        let key = (r.n, r.util.to_bits(), r.seed);
        let candidate = match reference {
            Some(m) if r.method != m.name() => continue,
            _ => r.obj_final,
        };
        if !candidate.is_finite() {
            continue;
        }
        let e = refs.entry(key).or_insert(candidate);
        *e = e.min(candidate);
    }
    for r in rows.iter_mut() {
        r.gap_pct = refs
            .get(&(r.n, r.util.to_bits(), r.seed))
            .and_then(|&reference| relative_gap(r.obj_final, reference).ok());
    }
}

/// Runs the experiment and writes the CSV to `out`.
pub fn run_to_csv(cfg: &ExperimentConfig, out: &Path) -> Result<Vec<ExperimentRecord>> {
    let rows = run_experiment(cfg)?;
    write_records(std::fs::File::create(out)?, &rows)?;
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::RtaOracle;

    fn example_problem() -> Problem {
        let mut ts = TaskSet::from_timing(&[(10.0, 6.0, 4.0), (40.0, 40.0, 1.0)]).unwrap();
        ts.objective = Some(ObjectiveSpec::Wcet {
            weights: vec![8.0, 1.0],
            lower: vec![4.0, 1.0],
            upper: vec![10.0, 40.0],
        });
        Problem::from_taskset(&ts).unwrap()
    }

    #[test]
    fn example_initial_point() {
        let p = example_problem();
        let mut o = RtaOracle::new(p.taskset().clone(), p.design().clone()).unwrap();
        let x = initial_solution(&p, &mut o, &PriorityAssignment::identity(2)).unwrap();
        assert_eq!(x, vec![4.0, 1.0]);
        assert_eq!(o.query_count(), 1);
    }

    #[test]
    fn energy_initial_point_is_max_frequency() {
        let ts = generate_preset(Preset::EnergyRm, &PresetParams::new(4, 0.5), 2).unwrap();
        let p = Problem::from_taskset(&ts).unwrap();
        let mut o = RtaOracle::new(p.taskset().clone(), p.design().clone()).unwrap();
        let x = initial_solution(&p, &mut o, &rate_monotonic_priorities(&ts)).unwrap();
        assert_eq!(x, vec![1.0; 4]);
    }

    #[test]
    fn overloaded_initial_point() {
        let mut ts = TaskSet::from_timing(&[(10.0, 10.0, 6.0), (10.0, 10.0, 6.0)]).unwrap();
        ts.objective = Some(ObjectiveSpec::Energy { params: Default::default() });
        let p = Problem::from_taskset(&ts).unwrap();
        let mut o = RtaOracle::new(p.taskset().clone(), p.design().clone()).unwrap();
        match initial_solution(&p, &mut o, &rate_monotonic_priorities(&ts)) {
            Err(Error::InitialInfeasible { point }) => assert_eq!(point, vec![1.0, 1.0]),
            other => panic!("expected an infeasible start, got {other:?}"),
        }
    }

    #[test]
    fn config_rejects_unknown_fields() {
        let text = r#"{"preset": "energy-rm", "n": 5, "utilization": 0.5,
            "seeds": {"from": 0, "to": 1}, "methods": ["north"], "colour": 3}"#;
        let err = ExperimentConfig::from_json(text).unwrap_err().to_string();
        assert!(err.contains("colour") && err.contains("line"), "{err}");
    }

    #[test]
    fn config_defaults() {
        let text = r#"{"preset": "energy-rm", "n": 5, "utilization": [0.5, 0.6],
            "seeds": {"from": 0, "to": 9}, "methods": ["north", "sa"]}"#;
        let cfg = ExperimentConfig::from_json(text).unwrap();
        assert_eq!(cfg.n, vec![5]);
        assert_eq!(cfg.time_limit_secs, 600.0);
        assert_eq!(cfg.oracle_kind().unwrap(), OracleKind::Rta);
        assert_eq!(cfg.brute_resolution, 200);
    }

    #[test]
    fn config_needs_methods() {
        let text = r#"{"preset": "energy-rm", "n": 5, "utilization": 0.5,
            "seeds": {"from": 0, "to": 1}, "methods": []}"#;
        assert!(matches!(ExperimentConfig::from_json(text), Err(Error::Config(_))));
    }

    #[test]
    fn gaps_use_best_method_by_default() {
        let row = |method: &str, obj: f64| ExperimentRecord {
            method: method.into(),
            seed: 0,
            n: 3,
            util: 0.5,
            obj_init: 200.0,
            obj_final: obj,
            gap_pct: None,
            oracle_calls: 0,
            elim_rounds: 0,
            wall_ms: 0.0,
            feasible: true,
            timeout: false,
        };
        let mut rows = vec![row("north", 100.0), row("sa", 110.0)];
        fill_gaps(&mut rows, None);
        assert_eq!(rows[0].gap_pct, Some(0.0));
        assert_eq!(rows[1].gap_pct, Some(10.0));
        fill_gaps(&mut rows, Some(Method::Sa));
        assert!((rows[0].gap_pct.unwrap() + 100.0 / 11.0).abs() < 1e-12);
    }
}
