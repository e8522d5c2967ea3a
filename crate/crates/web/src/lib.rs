//! Browser bindings for the optimizer demo.
//!
//! Each export takes plain numbers and returns a JSON string, so the page
//! needs no generated type glue. The same functions are plain Rust and are
//! tested natively.

use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

use northrt::baselines::{simulated_annealing, SaConfig};
use northrt::harness::{generate_preset, initial_solution, MethodSettings, Preset, PresetParams};
use northrt::north::{nmbo_descend, north_optimize, select_eliminations, NorthOptions, TestMode, VariableSpace};
use northrt::northplus::northplus_optimize;
use northrt::objectives::ObjectiveSpec;
use northrt::oracle::{build_oracle, RtaOracle, SchedulabilityOracle};
use northrt::problem::{Evaluator, Problem};
use northrt::taskmodel::{rate_monotonic_priorities, PriorityAssignment, TaskSet};

type Result<T> = std::result::Result<T, String>;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

/// Two tasks (c, T, D) = (4, 10, 6), (1, 40, 40); maximize the WCETs via
/// `(8/c₁)² + (1/c₂)²` over `[4, 10] × [1, 40]`.
fn wcet_example() -> Problem {
    let mut ts = TaskSet::from_timing(&[(10.0, 6.0, 4.0), (40.0, 40.0, 1.0)]).expect("valid tasks");
    ts.objective = Some(ObjectiveSpec::Wcet { weights: vec![8.0, 1.0], lower: vec![4.0, 1.0], upper: vec![10.0, 40.0] });
    Problem::from_taskset(&ts).expect("valid problem")
}

fn example_oracle(p: &Problem) -> Result<RtaOracle> {
    RtaOracle::new(p.taskset().clone(), p.design().clone()).map_err(err)
}

/// Schedulability of the two-task example on a `cols × rows` grid over its box,
/// row-major from the bottom-left corner.
pub fn example_region(cols: usize, rows: usize) -> Result<Value> {
    if cols < 2 || rows < 2 || cols * rows > 250_000 {
        return Err("grid must be at least 2×2 and at most 250000 cells".into());
    }
    let p = wcet_example();
    let mut o = example_oracle(&p)?;
    let prio = PriorityAssignment::identity(2);
    let (lo, hi) = (p.lower(), p.upper());
    let mut cells = Vec::with_capacity(cols * rows);
    for j in 0..rows {
        let c2 = lo[1] + (hi[1] - lo[1]) * j as f64 / (rows - 1) as f64;
        for i in 0..cols {
            let c1 = lo[0] + (hi[0] - lo[0]) * i as f64 / (cols - 1) as f64;
            cells.push(o.is_schedulable(&[c1, c2], &prio).map_err(err)?);
        }
    }
    Ok(json!({ "cols": cols, "rows": rows, "lower": lo, "upper": hi, "feasible": cells }))
}

/// Runs NORTH on the two-task example from `(c1, c2)`, recording the point
/// reached by every descent and the variables eliminated after it.
pub fn example_north(c1: f64, c2: f64) -> Result<Value> {
    let p = wcet_example();
    let mut o = example_oracle(&p)?;
    let opts = NorthOptions::default();
    let mut eval = Evaluator::new(&p, &mut o, PriorityAssignment::identity(2)).map_err(err)?;
    let start = vec![c1, c2];
    if !p.in_box(&start) || !eval.feasible(&start).map_err(err)? {
        return Err(format!("start ({c1:.3}, {c2:.3}) is outside the box or unschedulable"));
    }
    let mut space = VariableSpace::for_problem(&p, start.clone()).map_err(err)?;
    let mut probe = opts.probe.clone();
    let mut path = vec![json!({ "x": start, "objective": eval.objective(&start).map_err(err)? })];
    let mut steps = Vec::new();
    while !space.all_eliminated() {
        let res = nmbo_descend(&mut eval, &mut space, &opts.lm).map_err(err)?;
        let iterations = res.outcome.as_ref().map_or(0, |o| o.trace.len().saturating_sub(1));
        path.push(json!({ "x": space.x, "objective": eval.objective(&space.x).map_err(err)? }));
        let dims = select_eliminations(&mut eval, &space, &res.direction, &mut probe, TestMode::Plain).map_err(err)?;
        steps.push(json!({ "iterations": iterations, "eliminated": dims, "d": probe.d, "growths": probe.growths }));
        if dims.is_empty() {
            break;
        }
        space.eliminate(&dims);
    }
    Ok(json!({ "path": path, "rounds": steps, "queries": eval.query_count() }))
}

/// Energy minimization on a generated rate-monotonic task set: NORTH
/// against simulated annealing from the same start.
pub fn energy_compare(n: usize, utilization: f64, seed: u64, sa_iterations: u64) -> Result<Value> {
    if !(1..=40).contains(&n) {
        return Err("task count must lie in [1, 40]".into());
    }
    if sa_iterations > 2_000_000 {
        return Err("at most 2000000 annealing iterations".into());
    }
    let ts = generate_preset(Preset::EnergyRm, &PresetParams::new(n, utilization), seed).map_err(err)?;
    let p = Problem::from_taskset(&ts).map_err(err)?;
    let prio = rate_monotonic_priorities(&ts);
    let mut o = example_oracle(&p)?;
    let x0 = initial_solution(&p, &mut o, &prio).map_err(err)?;
    let mut o = example_oracle(&p)?;
    let north = north_optimize(&p, &x0, &mut o, prio.clone(), &Preset::EnergyRm.north_options()).map_err(err)?;
    let north_queries = o.query_count();
    let mut o = example_oracle(&p)?;
    let cfg = SaConfig { iterations: sa_iterations, seed, ..Default::default() };
    let sa = simulated_annealing(&p, &x0, &mut o, prio, &cfg).map_err(err)?;
    Ok(json!({
        "n": n,
        "periods": ts.tasks.iter().map(|t| t.period).collect::<Vec<_>>(),
        "north": {
            "x": north.space.x,
            "objective": north.objective,
            "trace": north.trace.objective,
            "descent": north.trace.descent,
            "queries": north_queries,
            "rounds": north.elimination_rounds(),
        },
        "sa": { "x": sa.x, "objective": sa.objective, "trace": sa.trace, "queries": sa.queries },
    }))
}

/// Control-cost period design on DAGs under the simulator: NORTH with
/// rate-monotonic priorities against NORTH+, which also moves priorities.
pub fn control_priorities(n: usize, seed: u64) -> Result<Value> {
    if !(2..=8).contains(&n) {
        return Err("DAG count must lie in [2, 8]".into());
    }
    let params = PresetParams { n, utilization: 0.0, nodes_per_dag: (1, 6) };
    let ts = generate_preset(Preset::ControlDag, &params, seed).map_err(err)?;
    let p = Problem::from_taskset(&ts).map_err(err)?;
    let kind = Preset::ControlDag.default_oracle();
    let settings = MethodSettings::for_preset(Preset::ControlDag, seed);
    let prio = rate_monotonic_priorities(&ts);
    let mut o = build_oracle(&kind, &p).map_err(err)?;
    let x0 = initial_solution(&p, o.as_mut(), &prio).map_err(err)?;
    let north = north_optimize(&p, &x0, o.as_mut(), prio.clone(), &settings.north).map_err(err)?;
    let mut o = build_oracle(&kind, &p).map_err(err)?;
    let plus = northplus_optimize(&p, &x0, prio.clone(), o.as_mut(), &settings.northplus).map_err(err)?;
    let moves: Vec<Value> = plus
        .moves
        .iter()
        .map(|m| json!({ "task": m.task, "raise": m.direction == northrt::northplus::Direction::Raise, "from_rank": m.from_rank, "objective": m.objective }))
        .collect();
    Ok(json!({
        "tasks": ts.len(),
        "dags": n,
        "initial": north.trace.objective[0],
        "north": { "x": north.space.x, "objective": north.objective, "priorities": prio.order() },
        "northplus": {
            "x": plus.space.x,
            "objective": plus.objective,
            "priorities": plus.priorities.order(),
            "outer": plus.outer_objective,
            "moves": moves,
        },
    }))
}

fn to_js(v: Result<Value>) -> std::result::Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen(js_name = exampleRegion)]
pub fn example_region_js(cols: usize, rows: usize) -> std::result::Result<String, JsError> {
    to_js(example_region(cols, rows))
}

#[wasm_bindgen(js_name = exampleNorth)]
pub fn example_north_js(c1: f64, c2: f64) -> std::result::Result<String, JsError> {
    to_js(example_north(c1, c2))
}

#[wasm_bindgen(js_name = energyCompare)]
pub fn energy_compare_js(n: usize, utilization: f64, seed: u32, sa_iterations: u32) -> std::result::Result<String, JsError> {
    to_js(energy_compare(n, utilization, seed.into(), sa_iterations.into()))
}

#[wasm_bindgen(js_name = controlPriorities)]
pub fn control_priorities_js(n: usize, seed: u32) -> std::result::Result<String, JsError> {
    to_js(control_priorities(n, seed.into()))
}
