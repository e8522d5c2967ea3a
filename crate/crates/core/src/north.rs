//! NORTH: feasibility-guarded descent alternated with variable elimination.
//!
//! The descent stops where the schedulability boundary blocks it. Variables
//! that cannot move even a tiny distance along the descent direction are
//! then frozen, and the remaining ones continue along the boundary.

use crate::error::{invalid, Result};
use crate::numcore::{
    check_deadline, gradient, lm_minimize, numerical_jacobian, Bounds, LmOptions, LmOutcome,
    ResidualSystem, Termination,
};
use crate::oracle::SchedulabilityOracle;
use crate::problem::{Evaluator, Problem, Restricted};
use crate::taskmodel::PriorityAssignment;

/// Design vector with box bounds and the set of frozen coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct VariableSpace {
    pub x: Vec<f64>,
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub eliminated: Vec<bool>,
}

impl VariableSpace {
    pub fn new(x: Vec<f64>, lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        let n = x.len();
        if lower.len() != n || upper.len() != n {
            return Err(invalid("bounds must match the design vector"));
        }
        if (0..n).any(|i| !(lower[i] <= x[i] && x[i] <= upper[i])) {
            return Err(invalid(format!("{x:?} lies outside its bounds")));
        }
        Ok(VariableSpace { x, lower, upper, eliminated: vec![false; n] })
    }

    pub fn for_problem(problem: &Problem, x: Vec<f64>) -> Result<Self> {
        VariableSpace::new(x, problem.lower().to_vec(), problem.upper().to_vec())
    }

    pub fn dim(&self) -> usize {
        self.x.len()
    }

    /// Indices of coordinates still being optimized.
    pub fn free(&self) -> Vec<usize> {
        (0..self.dim()).filter(|&i| !self.eliminated[i]).collect()
    }

    pub fn all_eliminated(&self) -> bool {
        self.eliminated.iter().all(|&e| e)
    }

    pub fn eliminate(&mut self, dims: &[usize]) {
        for &d in dims {
            self.eliminated[d] = true;
        }
    }

    pub fn in_box(&self, x: &[f64]) -> bool {
        x.iter().zip(&self.lower).zip(&self.upper).all(|((v, l), u)| l <= v && v <= u)
    }

    pub fn bounds(&self) -> Bounds {
        Bounds { lower: self.lower.clone(), upper: self.upper.clone() }
    }

    /// Euclidean diameter of the box.
    pub fn diameter(&self) -> f64 {
        self.bounds().diameter()
    }
}

/// Growing probe distance for dimension feasibility tests. The distance
/// persists across elimination rounds.
#[derive(Clone, Debug, PartialEq)]
pub struct EliminationProbe {
    pub d: f64,
    pub d0: f64,
    pub growth: f64,
    /// Number of growth steps applied since `d0`.
    pub growths: u32,
}

impl EliminationProbe {
    pub fn new(d0: f64, growth: f64) -> Result<Self> {
        if !(d0 > 0.0) || !(growth > 1.0) {
            return Err(invalid("probe needs d0 > 0 and growth > 1"));
        }
        Ok(EliminationProbe { d: d0, d0, growth, growths: 0 })
    }

    pub fn grow(&mut self) {
        self.growths += 1;
        self.d = self.d0 * self.growth.powi(self.growths as i32);
    }
}

impl Default for EliminationProbe {
    fn default() -> Self {
        EliminationProbe::new(1e-5, 1.5).expect("valid defaults")
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TestMode {
    /// The probe must stay feasible.
    Plain,
    /// The probe must stay feasible and must not increase the objective.
    Descent,
}

/// Result of one descent on the free coordinates.
#[derive(Clone, Debug)]
pub struct NmboResult {
    pub outcome: Option<LmOutcome>,
    /// Direction for elimination tests, over all coordinates.
    pub direction: Vec<f64>,
}

fn embed(free: &[usize], n: usize, z: &[f64]) -> Vec<f64> {
    let mut v = vec![0.0; n];
    for (&i, &s) in free.iter().zip(z) {
        v[i] = s;
    }
    v
}

/// Runs the damped descent over the free coordinates with acceptance
/// `in box ∧ schedulable`. Frozen coordinates keep their values.
///
/// The returned direction is the last rejected step, else the last
/// accepted step, else the negative gradient at the final point.
pub fn nmbo_descend(
    eval: &mut Evaluator<'_>,
    space: &mut VariableSpace,
    opts: &LmOptions,
) -> Result<NmboResult> {
    let n = space.dim();
    if !eval.feasible(&space.x)? {
        return Err(invalid(format!("descent must start from a feasible point, got {:?}", space.x)));
    }
    let free = space.free();
    if free.is_empty() {
        return Ok(NmboResult { outcome: None, direction: vec![0.0; n] });
    }
    let bounds = space.bounds().subset(&free);
    let mut sys = Restricted { eval, base: space.x.clone(), free: free.clone() };
    let z0 = sys.restrict(&space.x);
    let out = lm_minimize(&mut sys, &z0, &bounds, opts)?;
    space.x = sys.expand(&out.x);
    let direction = match (&out.last_rejected, &out.last_accepted) {
        (Some(s), _) | (None, Some(s)) => embed(&free, n, s),
        (None, None) => {
            let f = sys.residuals(&out.x)?;
            let jac = numerical_jacobian(&mut sys, &out.x, opts.h, Some(&bounds))?;
            let g = gradient(&jac, &f);
            embed(&free, n, &g.iter().map(|v| -v).collect::<Vec<_>>())
        }
    };
    Ok(NmboResult { outcome: Some(out), direction })
}

/// Probes `x ⊕ (sign(Δ_j)·d, j)`. A zero `Δ_j` passes; leaving the box fails.
pub fn dimension_feasibility_test(
    eval: &mut Evaluator<'_>,
    space: &VariableSpace,
    direction: &[f64],
    d: f64,
    j: usize,
    mode: TestMode,
) -> Result<bool> {
    let base = match mode {
        TestMode::Plain => None,
        TestMode::Descent => Some(eval.objective(&space.x)?),
    };
    probe_dimension(eval, space, direction, d, j, base)
}

// `base` is the objective at `space.x` in descent mode, `None` in plain mode.
fn probe_dimension(
    eval: &mut Evaluator<'_>,
    space: &VariableSpace,
    direction: &[f64],
    d: f64,
    j: usize,
    base: Option<f64>,
) -> Result<bool> {
    if direction[j] == 0.0 {
        return Ok(true);
    }
    let mut probe = space.x.clone();
    probe[j] += direction[j].signum() * d;
    if !space.in_box(&probe) || !eval.feasible(&probe)? {
        return Ok(false);
    }
    Ok(match base {
        None => true,
        Some(before) => eval.objective(&probe)? <= before,
    })
}

/// Grows the probe distance until at least one free dimension fails its
/// test and returns every failing dimension at that distance. Returns an
/// empty set only when the distance exceeds the box diameter.
pub fn select_eliminations(
    eval: &mut Evaluator<'_>,
    space: &VariableSpace,
    direction: &[f64],
    probe: &mut EliminationProbe,
    mode: TestMode,
) -> Result<Vec<usize>> {
    let free = space.free();
    if free.is_empty() {
        return Err(invalid("no free dimension left to eliminate"));
    }
    let diameter = space.diameter();
    let base = match mode {
        TestMode::Plain => None,
        TestMode::Descent => Some(eval.objective(&space.x)?),
    };
    loop {
        let mut failing = Vec::new();
        for &j in &free {
            if !probe_dimension(eval, space, direction, probe.d, j, base)? {
                failing.push(j);
            }
        }
        if !failing.is_empty() {
            return Ok(failing);
        }
        if probe.d > diameter {
            return Ok(Vec::new());
        }
        probe.grow();
    }
}

#[derive(Clone, Debug, Default)]
pub struct NorthOptions {
    pub lm: LmOptions,
    pub probe: EliminationProbe,
    /// Forces a test mode; by default descent mode is used exactly when the
    /// objective depends on response times.
    pub mode: Option<TestMode>,
}

impl NorthOptions {
    pub(crate) fn mode_for(&self, problem: &Problem) -> TestMode {
        self.mode.unwrap_or(if problem.uses_response_times() {
            TestMode::Descent
        } else {
            TestMode::Plain
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EliminationRound {
    pub dims: Vec<usize>,
    pub d: f64,
    pub growths: u32,
    /// Objective when the round's eliminations were made.
    pub objective: f64,
    /// Oracle queries issued so far.
    pub queries: u64,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct NorthTrace {
    /// Objective at the start and after every descent.
    pub objective: Vec<f64>,
    /// Objective after every accepted descent step, across all descents.
    pub descent: Vec<f64>,
    pub rounds: Vec<EliminationRound>,
    pub terminations: Vec<Termination>,
}

#[derive(Clone, Debug)]
pub struct NorthOutcome {
    pub space: VariableSpace,
    pub objective: f64,
    pub trace: NorthTrace,
    pub queries: u64,
}

impl NorthOutcome {
    pub fn elimination_rounds(&self) -> usize {
        self.trace.rounds.len()
    }
}

pub(crate) fn record_descent(trace: &mut NorthTrace, res: &NmboResult) {
    if let Some(out) = &res.outcome {
        trace.descent.extend_from_slice(&out.trace[1..]);
        trace.objective.push(out.value);
        trace.terminations.push(out.termination);
    }
}

/// Runs NORTH from the feasible point `x0` under the fixed priority order `prio`.
pub fn north_optimize(
    problem: &Problem,
    x0: &[f64],
    oracle: &mut dyn SchedulabilityOracle,
    prio: PriorityAssignment,
    opts: &NorthOptions,
) -> Result<NorthOutcome> {
    let mut eval = Evaluator::new(problem, oracle, prio)?;
    let mut space = VariableSpace::for_problem(problem, x0.to_vec())?;
    if !eval.feasible(x0)? {
        return Err(invalid(format!("initial point {x0:?} is not schedulable")));
    }
    let mode = opts.mode_for(problem);
    let mut probe = opts.probe.clone();
    let initial = eval.objective(x0)?;
    let mut trace = NorthTrace { objective: vec![initial], ..Default::default() };
    loop {
        check_deadline(opts.lm.deadline)?;
        let res = nmbo_descend(&mut eval, &mut space, &opts.lm)?;
        record_descent(&mut trace, &res);
        if space.all_eliminated() {
            break;
        }
        let dims = select_eliminations(&mut eval, &space, &res.direction, &mut probe, mode)?;
        if dims.is_empty() {
            break;
        }
        space.eliminate(&dims);
        trace.rounds.push(EliminationRound {
            dims,
            d: probe.d,
            growths: probe.growths,
            objective: *trace.objective.last().expect("initial entry"),
            queries: eval.query_count(),
        });
    }
    let objective = eval.objective(&space.x)?;
    Ok(NorthOutcome { space, objective, queries: eval.query_count(), trace })
}
