//! NORTH+: NORTH on the continuous variables combined with priority moves.
//!
//! Each outer iteration runs NORTH on `x` with the priorities fixed, takes
//! one gradient step on a barrier-transformed problem over the response
//! times to decide which tasks should finish earlier, and tries one-level
//! priority swaps for those tasks.

use std::collections::HashMap;

use crate::error::{invalid, Error, Result};
use crate::north::{north_optimize, NorthOptions, NorthTrace, VariableSpace};
use crate::numcore::check_deadline;
use crate::oracle::SchedulabilityOracle;
use crate::problem::{Evaluator, Instance, Objective, Problem};
use crate::taskmodel::PriorityAssignment;

/// Gaps to the deadline are never taken below this when the barrier is
/// evaluated at a response time equal to its deadline.
const BARRIER_GAP_FLOOR: f64 = 1e-12;

/// Failure counts per `(task, rank)`, shared across outer iterations.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FailureLedger {
    counts: HashMap<(usize, usize), u32>,
    pub threshold: u32,
}

impl FailureLedger {
    pub fn new(threshold: u32) -> Self {
        FailureLedger { counts: HashMap::new(), threshold }
    }

    pub fn count(&self, task: usize, rank: usize) -> u32 {
        self.counts.get(&(task, rank)).copied().unwrap_or(0)
    }

    pub fn record_failure(&mut self, task: usize, rank: usize) {
        *self.counts.entry((task, rank)).or_insert(0) += 1;
    }

    /// A move of `task` from `rank` may still be attempted.
    pub fn allows(&self, task: usize, rank: usize) -> bool {
        self.count(task, rank) <= self.threshold
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct BarrierConfig {
    pub weight: f64,
    pub halve: bool,
    pub min_weight: f64,
    /// Δr = −η·gradient.
    pub eta: f64,
}

impl Default for BarrierConfig {
    fn default() -> Self {
        BarrierConfig { weight: 1e7, halve: true, min_weight: 1e-9, eta: 1.0 }
    }
}

/// Value and response-time gradient of `H(x, r) − w Σ log(D_i − r_i)`.
///
/// The gradient is `∂H/∂r + w/(D − r)`. Any `r_i ≥ D_i` gives
/// [`Error::InfiniteBarrier`].
pub fn barrier_value_and_gradient(
    objective: &dyn Objective,
    x: &[f64],
    inst: &Instance,
    r: &[f64],
    w: f64,
) -> Result<(f64, Vec<f64>)> {
    if let Some(task) = (0..r.len()).find(|&i| !(r[i] < inst.deadline[i])) {
        return Err(Error::InfiniteBarrier { task });
    }
    let h: f64 = objective.residuals(x, inst, Some(r)).iter().map(|f| f * f).sum();
    let log_sum: f64 = r.iter().zip(&inst.deadline).map(|(ri, di)| (di - ri).ln()).sum();
    Ok((h - w * log_sum, barrier_gradient(objective, x, inst, r, w)))
}

// Gradient with the gap floored, so a response time sitting exactly on its
// deadline yields a large finite push instead of an error.
fn barrier_gradient(objective: &dyn Objective, x: &[f64], inst: &Instance, r: &[f64], w: f64) -> Vec<f64> {
    objective
        .response_gradient(x, inst, r)
        .iter()
        .zip(r.iter().zip(&inst.deadline))
        .map(|(g, (ri, di))| g + w / (di - ri).max(BARRIER_GAP_FLOOR))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Direction {
    Raise,
    Lower,
}

/// Swaps `task` with its neighbour above (raise) or below (lower). The flag
/// is `false` when the task is already at the top or bottom.
pub fn change_task_priority_by_one(
    prio: &PriorityAssignment,
    task: usize,
    direction: Direction,
) -> Result<(PriorityAssignment, bool)> {
    let pos = prio.rank(task).ok_or_else(|| invalid(format!("unknown task {task}")))? - 1;
    let mut out = prio.clone();
    let other = match direction {
        Direction::Raise if pos > 0 => pos - 1,
        Direction::Lower if pos + 1 < prio.len() => pos + 1,
        _ => return Ok((out, false)),
    };
    out.swap_positions(pos, other);
    Ok((out, true))
}

#[derive(Clone, Debug, PartialEq)]
pub struct PriorityMove {
    pub task: usize,
    pub direction: Direction,
    pub from_rank: usize,
    pub objective: f64,
}

/// One pass of priority adjustment at fixed `x`.
///
/// Tasks with `|Δr_i| ≥ 1e-9` are visited by decreasing `|Δr_i|`. A task
/// with `Δr_i < 0` is raised, otherwise lowered, one level at a time, while
/// the ledger allows moves from its current rank. A move is kept only if it
/// stays schedulable and strictly lowers the objective; otherwise the ledger
/// records the failure and the task is left alone. A raise is skipped when
/// the task already ranks at least as high as its position in the `|Δr|`
/// order.
pub fn optimize_priorities(
    eval: &mut Evaluator<'_>,
    x: &[f64],
    delta_r: &[f64],
    ledger: &mut FailureLedger,
) -> Result<(PriorityAssignment, Vec<PriorityMove>)> {
    let problem = eval.problem();
    let mut prio = eval.priorities().clone();
    if delta_r.len() != prio.len() {
        return Err(invalid("one response-time step per task is required"));
    }
    let mut current = eval.objective(x)?;
    let mut order: Vec<usize> = (0..delta_r.len()).filter(|&i| delta_r[i].abs() >= 1e-9).collect();
    order.sort_by(|&a, &b| delta_r[b].abs().total_cmp(&delta_r[a].abs()).then(a.cmp(&b)));
    let mut moves = Vec::new();
    for (pos, &task) in order.iter().enumerate() {
        let gradient_rank = pos + 1;
        let direction = if delta_r[task] < 0.0 { Direction::Raise } else { Direction::Lower };
        loop {
            let rank = prio.rank(task).expect("task is in the order");
            if !ledger.allows(task, rank) {
                break;
            }
            if direction == Direction::Raise && gradient_rank >= rank {
                break;
            }
            let (candidate, moved) = change_task_priority_by_one(&prio, task, direction)?;
            if !moved {
                break;
            }
            let verdict = eval.verdict_with(x, &candidate)?;
            let value = if verdict.schedulable && problem.in_box(x) {
                problem.value(x, verdict.response.as_ref().map(|r| r.r.as_slice()))?
            } else {
                f64::NAN
            };
            if value < current {
                prio = candidate;
                current = value;
                moves.push(PriorityMove { task, direction, from_rank: rank, objective: value });
            } else {
                ledger.record_failure(task, rank);
                break;
            }
        }
    }
    Ok((prio, moves))
}

#[derive(Clone, Debug)]
pub struct NorthPlusOptions {
    pub north: NorthOptions,
    pub barrier: BarrierConfig,
    pub ledger_threshold: u32,
    pub max_outer: usize,
}

impl Default for NorthPlusOptions {
    fn default() -> Self {
        NorthPlusOptions {
            north: NorthOptions::default(),
            barrier: BarrierConfig::default(),
            ledger_threshold: 1,
            max_outer: 100,
        }
    }
}

/// End point of one NORTH phase, before the priority pass that follows it.
#[derive(Clone, Debug, PartialEq)]
pub struct Phase {
    pub x: Vec<f64>,
    pub priorities: PriorityAssignment,
    pub objective: f64,
    pub rounds: usize,
}

#[derive(Clone, Debug)]
pub struct NorthPlusOutcome {
    pub space: VariableSpace,
    pub priorities: PriorityAssignment,
    pub objective: f64,
    /// Rounds and descents of all phases, concatenated.
    pub trace: NorthTrace,
    /// Objective at the start and after every outer iteration.
    pub outer_objective: Vec<f64>,
    pub phases: Vec<Phase>,
    pub moves: Vec<PriorityMove>,
    pub ledger: FailureLedger,
    pub iterations: usize,
    pub queries: u64,
}

impl NorthPlusOutcome {
    /// Elimination rounds of the longest NORTH phase.
    pub fn elimination_rounds(&self) -> usize {
        self.phases.iter().map(|p| p.rounds).max().unwrap_or(0)
    }
}

/// Runs NORTH+ from the feasible pair `(x0, p0)`. The oracle must report
/// response times.
///
/// Every outer iteration optimizes `x` with NORTH under the current order,
/// starting from a fresh variable space, then takes one barrier step on the
/// response times and tries the priority moves it suggests. The barrier
/// weight is halved after each iteration and the loop ends once a priority
/// pass accepts nothing. Both halves only accept schedulable improvements, so
/// the objective never increases from one iteration to the next.
pub fn northplus_optimize(
    problem: &Problem,
    x0: &[f64],
    p0: PriorityAssignment,
    oracle: &mut dyn SchedulabilityOracle,
    opts: &NorthPlusOptions,
) -> Result<NorthPlusOutcome> {
    if !oracle.provides_response_times() {
        return Err(invalid("priority optimization needs an oracle that reports response times"));
    }
    let start_queries = oracle.query_count();
    let mut prio = p0;
    let mut x = x0.to_vec();
    let mut ledger = FailureLedger::new(opts.ledger_threshold);
    let mut w = opts.barrier.weight;
    let mut trace = NorthTrace::default();
    let mut outer_objective = Vec::new();
    let mut phases = Vec::new();
    let mut moves = Vec::new();
    let mut iterations = 0;
    while iterations < opts.max_outer {
        check_deadline(opts.north.lm.deadline)?;
        iterations += 1;
        let phase = north_optimize(problem, &x, oracle, prio.clone(), &opts.north)?;
        if outer_objective.is_empty() {
            outer_objective.push(phase.trace.objective[0]);
        }
        trace.objective.extend_from_slice(&phase.trace.objective);
        trace.descent.extend_from_slice(&phase.trace.descent);
        trace.terminations.extend_from_slice(&phase.trace.terminations);
        trace.rounds.extend(phase.trace.rounds.iter().cloned());
        x = phase.space.x;
        phases.push(Phase {
            x: x.clone(),
            priorities: prio.clone(),
            objective: phase.objective,
            rounds: phase.trace.rounds.len(),
        });

        let mut eval = Evaluator::new(problem, oracle, prio.clone())?;
        let verdict = eval.verdict(&x)?;
        let r = verdict
            .response
            .ok_or_else(|| Error::Oracle("oracle returned no response times".into()))?;
        let inst = problem.instance(&x)?;
        let grad = barrier_gradient(problem.objective(), &x, &inst, &r.r, w);
        let delta_r: Vec<f64> = grad.iter().map(|g| -opts.barrier.eta * g).collect();
        let (next, made) = optimize_priorities(&mut eval, &x, &delta_r, &mut ledger)?;
        let objective = made.last().map_or(phase.objective, |m| m.objective);
        outer_objective.push(objective);
        prio = next;
        if opts.barrier.halve {
            w = (w / 2.0).max(opts.barrier.min_weight);
        }
        if made.is_empty() {
            break;
        }
        moves.extend(made);
    }
    let objective = *outer_objective.last().expect("at least one iteration");
    let space = VariableSpace::for_problem(problem, x)?;
    Ok(NorthPlusOutcome {
        space,
        priorities: prio,
        objective,
        trace,
        outer_objective,
        phases,
        moves,
        ledger,
        iterations,
        queries: oracle.query_count() - start_queries,
    })
}
