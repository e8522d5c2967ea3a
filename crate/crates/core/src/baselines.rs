//! Comparison baselines: simulated annealing and exhaustive grid search.

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{invalid, Error, Result};
use crate::numcore::check_deadline;
use crate::oracle::SchedulabilityOracle;
use crate::problem::{Evaluator, Problem};
use crate::taskmodel::PriorityAssignment;

/// Largest grid the exhaustive search will enumerate.
pub const MAX_GRID_POINTS: u64 = 50_000_000;

#[derive(Clone, Debug)]
pub struct SaConfig {
    pub initial_temperature: f64,
    pub cooling: f64,
    pub iterations: u64,
    /// Half-width of a neighbour move as a fraction of each box width.
    pub step_scale: f64,
    pub seed: u64,
    pub deadline: Option<Instant>,
}

impl Default for SaConfig {
    fn default() -> Self {
        SaConfig {
            initial_temperature: 1e5,
            cooling: 0.99,
            iterations: 1_000_000,
            step_scale: 0.02,
            seed: 0,
            deadline: None,
        }
    }
}

#[derive(Clone, Debug)]
pub struct SaOutcome {
    pub x: Vec<f64>,
    pub objective: f64,
    /// Best objective at the start and after every improvement.
    pub trace: Vec<f64>,
    pub iterations: u64,
    pub queries: u64,
}

/// Simulated annealing with geometric cooling. Infeasible proposals are
/// rejected; feasible ones pass a Metropolis test. Returns the best point
/// visited.
///
/// When the objective does not depend on response times the Metropolis test
/// runs first, so proposals it rejects cost no oracle query.
pub fn simulated_annealing(
    problem: &Problem,
    x0: &[f64],
    oracle: &mut dyn SchedulabilityOracle,
    prio: PriorityAssignment,
    cfg: &SaConfig,
) -> Result<SaOutcome> {
    if !(cfg.cooling > 0.0 && cfg.cooling < 1.0) || !(cfg.initial_temperature > 0.0) {
        return Err(invalid("annealing needs cooling in (0, 1) and a positive temperature"));
    }
    let mut eval = Evaluator::new(problem, oracle, prio)?;
    if !eval.feasible(x0)? {
        return Err(invalid(format!("initial point {x0:?} is not schedulable")));
    }
    let lazy_oracle = !problem.uses_response_times();
    let widths: Vec<f64> = problem.lower().iter().zip(problem.upper()).map(|(l, u)| u - l).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = x0.to_vec();
    let mut value = eval.objective(&x)?;
    let mut best = (x.clone(), value);
    let mut trace = vec![value];
    let mut temperature = cfg.initial_temperature;
    let mut done = 0;
    while done < cfg.iterations {
        if done % 1024 == 0 {
            check_deadline(cfg.deadline)?;
        }
        done += 1;
        let mut y = x.clone();
        for (i, v) in y.iter_mut().enumerate() {
            *v += rng.random_range(-1.0..=1.0) * cfg.step_scale * widths[i];
            *v = v.clamp(problem.lower()[i], problem.upper()[i]);
        }
        let u: f64 = rng.random();
        let metropolis = |new: f64| new <= value || u < (-(new - value) / temperature).exp();
        let accepted = if lazy_oracle {
            let new = eval.objective(&y)?;
            if new.is_finite() && metropolis(new) && eval.feasible(&y)? {
                Some(new)
            } else {
                None
            }
        } else if eval.feasible(&y)? {
            Some(eval.objective(&y)?).filter(|v| v.is_finite() && metropolis(*v))
        } else {
            None
        };
        if let Some(new) = accepted {
            x = y;
            value = new;
            if value < best.1 {
                best = (x.clone(), value);
                trace.push(value);
            }
        }
        temperature *= cfg.cooling;
    }
    Ok(SaOutcome { x: best.0, objective: best.1, trace, iterations: done, queries: eval.query_count() })
}

/// Best feasible point of a regular grid.
#[derive(Clone, Debug, PartialEq)]
pub struct GridOptimum {
    pub x: Vec<f64>,
    pub objective: f64,
}

fn grid_value(lower: f64, upper: f64, k: usize, resolution: usize) -> f64 {
    if resolution == 1 {
        lower
    } else if k + 1 == resolution {
        upper
    } else {
        lower + (upper - lower) * k as f64 / (resolution - 1) as f64
    }
}

fn fill_grid_point(problem: &Problem, mut index: u64, resolution: usize, x: &mut [f64]) {
    for i in (0..x.len()).rev() {
        let k = (index % resolution as u64) as usize;
        index /= resolution as u64;
        x[i] = grid_value(problem.lower()[i], problem.upper()[i], k, resolution);
    }
}

fn grid_point(problem: &Problem, index: u64, resolution: usize) -> Vec<f64> {
    let mut x = vec![0.0; problem.dim()];
    fill_grid_point(problem, index, resolution, &mut x);
    x
}

/// Exhaustive search over `resolution` points per dimension, inclusive of
/// both bounds. Returns `None` when no grid point is feasible. Ties go to
/// the lexicographically first point.
pub fn brute_force_optimum(
    problem: &Problem,
    resolution: usize,
    oracle: &mut dyn SchedulabilityOracle,
    prio: PriorityAssignment,
) -> Result<Option<GridOptimum>> {
    let n = problem.dim();
    if n > 4 {
        return Err(Error::ResourceLimit(format!("grid search supports at most 4 variables, got {n}")));
    }
    if resolution == 0 {
        return Err(invalid("grid resolution must be positive"));
    }
    let total = (resolution as u64)
        .checked_pow(n as u32)
        .filter(|&t| t <= MAX_GRID_POINTS)
        .ok_or_else(|| Error::ResourceLimit("grid is too large".into()))?;
    let mut eval = Evaluator::new(problem, oracle, prio)?;

    if !problem.uses_response_times() {
        // Any feasible grid point bounds the optimum from above; the diagonal
        // is a cheap place to look for one.
        let prio = eval.priorities().clone();
        drop(eval);
        let mut x = vec![0.0; n];
        let mut bound = f64::INFINITY;
        let stride: u64 = (0..n).map(|i| (resolution as u64).pow(i as u32)).sum();
        for k in 0..resolution as u64 {
            fill_grid_point(problem, k * stride, resolution, &mut x);
            let v = problem.value(&x, None)?;
            if v < bound && oracle.is_schedulable(&x, &prio)? {
                bound = v;
            }
        }
        // Then visit points by increasing objective; the first feasible one wins.
        let mut order: Vec<(f64, u64)> = Vec::new();
        for idx in 0..total {
            fill_grid_point(problem, idx, resolution, &mut x);
            let v = problem.value(&x, None)?;
            if v <= bound {
                order.push((v, idx));
            }
        }
        order.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        // Grid points lie in the box, so the oracle alone decides.
        for (v, idx) in order {
            fill_grid_point(problem, idx, resolution, &mut x);
            if oracle.is_schedulable(&x, &prio)? {
                return Ok(Some(GridOptimum { x, objective: v }));
            }
        }
        return Ok(None);
    }

    let mut best: Option<GridOptimum> = None;
    for idx in 0..total {
        let x = grid_point(problem, idx, resolution);
        if !eval.feasible(&x)? {
            continue;
        }
        let v = eval.objective(&x)?;
        if v.is_finite() && best.as_ref().is_none_or(|b| v < b.objective) {
            best = Some(GridOptimum { x, objective: v });
        }
    }
    Ok(best)
}
