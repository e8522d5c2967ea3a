//! Glue between design vectors, task parameters, objectives and oracles.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::numcore::{sum_of_squares, ResidualSystem};
use crate::oracle::{SchedulabilityOracle, Verdict};
use crate::taskmodel::{PriorityAssignment, TaskSet};

/// Concrete timing parameters of every task at one design point.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Instance {
    pub exec: Vec<f64>,
    pub period: Vec<f64>,
    pub deadline: Vec<f64>,
}

/// How the design vector maps onto task parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DesignMap {
    /// `x[i]` is the execution time of task `i`.
    Wcet,
    /// `x[i]` is the run-time frequency of task `i`.
    Frequency { simplified: bool },
    /// `x[g]` is the period of every task in group `g`; deadlines equal
    /// periods. With an allowed set, periods are rounded up into it before
    /// analysis.
    Period { groups: Vec<usize>, allowed: Option<Vec<f64>> },
}

impl DesignMap {
    pub fn dim(&self, ts: &TaskSet) -> usize {
        match self {
            DesignMap::Wcet | DesignMap::Frequency { .. } => ts.len(),
            DesignMap::Period { groups, .. } => groups.iter().max().map_or(0, |g| g + 1),
        }
    }

    pub fn instance(&self, ts: &TaskSet, x: &[f64]) -> Result<Instance> {
        if x.len() != self.dim(ts) {
            return Err(invalid(format!(
                "design vector has {} entries, expected {}",
                x.len(),
                self.dim(ts)
            )));
        }
        let mut inst = Instance { exec: Vec::new(), period: ts.periods(), deadline: ts.deadlines() };
        match self {
            DesignMap::Wcet => inst.exec = x.to_vec(),
            DesignMap::Frequency { simplified } => {
                inst.exec = ts
                    .tasks
                    .iter()
                    .zip(x)
                    .map(|(t, &f)| {
                        if !(f > 0.0) {
                            return Err(invalid(format!("frequency {f} must be positive")));
                        }
                        Ok(if *simplified { t.c_org / f } else { t.c_fix + t.c_var / f })
                    })
                    .collect::<Result<_>>()?;
            }
            DesignMap::Period { groups, allowed } => {
                inst.exec = ts.tasks.iter().map(|t| t.nominal_exec()).collect();
                for (i, &g) in groups.iter().enumerate() {
                    let p = match allowed {
                        Some(set) => snap_up(set, x[g]),
                        None => x[g],
                    };
                    inst.period[i] = p;
                    inst.deadline[i] = p;
                }
            }
        }
        Ok(inst)
    }
}

/// Smallest allowed value not below `v` (the largest one if `v` exceeds all).
/// `allowed` must be sorted ascending.
pub fn snap_up(allowed: &[f64], v: f64) -> f64 {
    let tol = 1e-9 * v.abs().max(1.0);
    allowed.iter().copied().find(|&a| a >= v - tol).unwrap_or(*allowed.last().unwrap())
}

/// Largest allowed value not above `v`, if any.
pub fn snap_down(allowed: &[f64], v: f64) -> Option<f64> {
    let tol = 1e-9 * v.abs().max(1.0);
    allowed.iter().rev().copied().find(|&a| a <= v + tol)
}

/// A sum-of-squares objective `H = Σ F_i²`.
pub trait Objective: Send + Sync {
    /// Residuals `F_i`. Non-finite entries mark values that cannot be evaluated.
    fn residuals(&self, x: &[f64], inst: &Instance, response: Option<&[f64]>) -> Vec<f64>;

    fn uses_response_times(&self) -> bool {
        false
    }

    /// Whether `residuals` looks at the instance. Objectives that do not get
    /// an empty one, which saves building it.
    fn reads_instance(&self) -> bool {
        true
    }

    /// Gradient of `H` with respect to the response times at fixed `x`.
    fn response_gradient(&self, x: &[f64], inst: &Instance, r: &[f64]) -> Vec<f64> {
        if !self.uses_response_times() {
            return vec![0.0; r.len()];
        }
        let value = |r: &[f64]| self.residuals(x, inst, Some(r)).iter().map(|f| f * f).sum::<f64>();
        let mut probe = r.to_vec();
        (0..r.len())
            .map(|i| {
                let h = 1e-6 * r[i].abs().max(1.0);
                probe[i] = r[i] + h;
                let up = value(&probe);
                probe[i] = r[i] - h;
                let down = value(&probe);
                probe[i] = r[i];
                (up - down) / (2.0 * h)
            })
            .collect()
    }
}

/// An optimization problem: a task set, a design map, a box and an objective.
#[derive(Clone)]
pub struct Problem {
    taskset: TaskSet,
    design: DesignMap,
    lower: Vec<f64>,
    upper: Vec<f64>,
    objective: Arc<dyn Objective>,
}

impl std::fmt::Debug for Problem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Problem")
            .field("design", &self.design)
            .field("lower", &self.lower)
            .field("upper", &self.upper)
            .finish_non_exhaustive()
    }
}

impl Problem {
    pub fn new(
        taskset: TaskSet,
        design: DesignMap,
        lower: Vec<f64>,
        upper: Vec<f64>,
        objective: impl Objective + 'static,
    ) -> Result<Self> {
        taskset.validate()?;
        let n = design.dim(&taskset);
        if lower.len() != n || upper.len() != n {
            return Err(invalid(format!("bounds must have {n} entries")));
        }
        if lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
            return Err(invalid("every lower bound must not exceed its upper bound"));
        }
        if let DesignMap::Period { groups, allowed } = &design {
            if groups.len() != taskset.len() {
                return Err(invalid("period groups must cover every task"));
            }
            if let Some(a) = allowed {
                if a.is_empty() || a.windows(2).any(|w| w[0] >= w[1]) {
                    return Err(invalid("allowed periods must be nonempty and strictly increasing"));
                }
            }
        }
        Ok(Problem { taskset, design, lower, upper, objective: Arc::new(objective) })
    }

    pub fn taskset(&self) -> &TaskSet {
        &self.taskset
    }

    pub fn design(&self) -> &DesignMap {
        &self.design
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.len() == self.dim()
            && x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn instance(&self, x: &[f64]) -> Result<Instance> {
        self.design.instance(&self.taskset, x)
    }

    pub fn uses_response_times(&self) -> bool {
        self.objective.uses_response_times()
    }

    pub fn objective(&self) -> &dyn Objective {
        self.objective.as_ref()
    }

    pub fn residuals(&self, x: &[f64], response: Option<&[f64]>) -> Result<Vec<f64>> {
        if self.objective.reads_instance() {
            let inst = self.instance(x)?;
            return Ok(self.objective.residuals(x, &inst, response));
        }
        if x.len() != self.dim() {
            return Err(invalid(format!("design vector has {} entries, expected {}", x.len(), self.dim())));
        }
        Ok(self.objective.residuals(x, &Instance::default(), response))
    }

    /// `H(x, r) = Σ F_i²`; NaN when some residual cannot be evaluated.
    pub fn value(&self, x: &[f64], response: Option<&[f64]>) -> Result<f64> {
        Ok(sum_of_squares(&self.residuals(x, response)?))
    }
}

/// Evaluates objective and feasibility of design points for a fixed
/// priority assignment, remembering the last oracle verdict so that an
/// objective evaluation followed by a feasibility check costs one query.
pub struct Evaluator<'a> {
    problem: &'a Problem,
    oracle: &'a mut dyn SchedulabilityOracle,
    prio: PriorityAssignment,
    last: Option<(Vec<f64>, Verdict)>,
}

impl<'a> Evaluator<'a> {
    pub fn new(
        problem: &'a Problem,
        oracle: &'a mut dyn SchedulabilityOracle,
        prio: PriorityAssignment,
    ) -> Result<Self> {
        if prio.len() != problem.taskset().len() {
            return Err(invalid("priority assignment does not cover the task set"));
        }
        if problem.uses_response_times() && !oracle.provides_response_times() {
            return Err(invalid("objective needs response times but the oracle is a pure black box"));
        }
        Ok(Evaluator { problem, oracle, prio, last: None })
    }

    pub fn problem(&self) -> &'a Problem {
        self.problem
    }

    pub fn priorities(&self) -> &PriorityAssignment {
        &self.prio
    }

    pub fn set_priorities(&mut self, prio: PriorityAssignment) {
        if prio != self.prio {
            self.prio = prio;
            self.last = None;
        }
    }

    pub fn query_count(&self) -> u64 {
        self.oracle.query_count()
    }

    pub fn verdict(&mut self, x: &[f64]) -> Result<Verdict> {
        if let Some((px, v)) = &self.last {
            if px.as_slice() == x {
                return Ok(v.clone());
            }
        }
        let v = self.oracle.analyze(x, &self.prio)?;
        self.last = Some((x.to_vec(), v.clone()));
        Ok(v)
    }

    /// Verdict under another priority assignment; bypasses the memo.
    pub fn verdict_with(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict> {
        if prio == &self.prio {
            return self.verdict(x);
        }
        self.oracle.analyze(x, prio)
    }

    /// In the box and schedulable.
    pub fn feasible(&mut self, x: &[f64]) -> Result<bool> {
        Ok(self.problem.in_box(x) && self.verdict(x)?.schedulable)
    }

    pub fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        if self.problem.uses_response_times() {
            let v = self.verdict(x)?;
            let r = v.response.as_ref().map(|r| r.r.as_slice());
            self.problem.residuals(x, r)
        } else {
            self.problem.residuals(x, None)
        }
    }

    pub fn objective(&mut self, x: &[f64]) -> Result<f64> {
        Ok(sum_of_squares(&self.residuals(x)?))
    }
}

/// The residual system over all coordinates, accepting only feasible points.
impl ResidualSystem for Evaluator<'_> {
    fn residuals(&mut self, x: &[f64]) -> Result<Vec<f64>> {
        Evaluator::residuals(self, x)
    }

    fn accept(&mut self, x: &[f64]) -> Result<bool> {
        self.feasible(x)
    }
}

/// The residual system over a subset of coordinates; the others stay at
/// the values in `base`.
pub(crate) struct Restricted<'e, 'a> {
    pub eval: &'e mut Evaluator<'a>,
    pub base: Vec<f64>,
    pub free: Vec<usize>,
}

impl Restricted<'_, '_> {
    pub fn expand(&self, z: &[f64]) -> Vec<f64> {
        let mut x = self.base.clone();
        for (&i, &v) in self.free.iter().zip(z) {
            x[i] = v;
        }
        x
    }

    pub fn restrict(&self, x: &[f64]) -> Vec<f64> {
        self.free.iter().map(|&i| x[i]).collect()
    }
}

impl ResidualSystem for Restricted<'_, '_> {
    fn residuals(&mut self, z: &[f64]) -> Result<Vec<f64>> {
        let x = self.expand(z);
        self.eval.residuals(&x)
    }

    fn accept(&mut self, z: &[f64]) -> Result<bool> {
        let x = self.expand(z);
        self.eval.feasible(&x)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn snapping() {
        let allowed = [100.0, 200.0, 300.0];
        assert_eq!(snap_up(&allowed, 150.0), 200.0);
        assert_eq!(snap_up(&allowed, 200.0), 200.0);
        assert_eq!(snap_up(&allowed, 50.0), 100.0);
        assert_eq!(snap_up(&allowed, 400.0), 300.0);
        assert_eq!(snap_down(&allowed, 250.0), Some(200.0));
        assert_eq!(snap_down(&allowed, 50.0), None);
    }

    #[test]
    fn frequency_design_maps_execution_times() {
        let mut ts = TaskSet::from_timing(&[(10.0, 10.0, 2.0)]).unwrap();
        ts.tasks[0].c_fix = 1.0;
        let full = DesignMap::Frequency { simplified: false }.instance(&ts, &[0.5]).unwrap();
        assert_eq!(full.exec, vec![1.0 + 2.0 / 0.5]);
        let simple = DesignMap::Frequency { simplified: true }.instance(&ts, &[0.5]).unwrap();
        assert_eq!(simple.exec, vec![4.0]);
        assert!(DesignMap::Frequency { simplified: true }.instance(&ts, &[0.0]).is_err());
    }

    #[test]
    fn period_design_sets_implicit_deadlines() {
        let ts = TaskSet::from_timing(&[(10.0, 6.0, 1.0), (20.0, 20.0, 1.0)]).unwrap();
        let map = DesignMap::Period { groups: vec![0, 0], allowed: Some(vec![10.0, 20.0, 40.0]) };
        let inst = map.instance(&ts, &[12.0]).unwrap();
        assert_eq!(inst.period, vec![20.0, 20.0]);
        assert_eq!(inst.deadline, vec![20.0, 20.0]);
    }
}
