//! Benchmark objectives: DVFS energy, control cost and weighted WCET.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::oracle::SchedulabilityOracle;
use crate::problem::{snap_down, snap_up, DesignMap, Instance, Objective, Problem};
use crate::taskmodel::{lcm_of_periods, PriorityAssignment, TaskSet};

/// Hyperperiods above this fall back to the longest period as the energy horizon.
pub const MAX_ENERGY_HORIZON: f64 = 1e12;

/// Tolerance below zero that a control-cost argument may reach before it is
/// treated as not evaluable.
const CONTROL_CLAMP_TOL: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EnergyModelParams {
    pub alpha: f64,
    pub gamma: f64,
    pub beta: f64,
    /// Use `α f^γ · c_org / f` instead of the full static-plus-dynamic model.
    pub simplified: bool,
    pub f_min: f64,
    pub f_max: f64,
}

impl Default for EnergyModelParams {
    fn default() -> Self {
        EnergyModelParams { alpha: 1.76, gamma: 3.0, beta: 0.5, simplified: true, f_min: 0.5, f_max: 1.0 }
    }
}

/// Control-cost weights of one task: cost `α T + β r + γ r²`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlWeights {
    pub alpha: f64,
    pub beta: f64,
    pub gamma: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlModelParams {
    /// One entry per task.
    pub weights: Vec<ControlWeights>,
    /// Allowed period values, ascending.
    pub allowed_periods: Vec<f64>,
    /// Period bounds per group (DAG, or lone task).
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

/// The objective attached to a task-set document.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ObjectiveSpec {
    Energy {
        #[serde(default)]
        params: EnergyModelParams,
    },
    Control {
        params: ControlModelParams,
    },
    /// Maximize weighted execution times: residual `w_i / c_i`.
    Wcet { weights: Vec<f64>, lower: Vec<f64>, upper: Vec<f64> },
}

/// Energy per hyperperiod: `E_i = (H/T_i)(β + α f^γ)(c_fix + c_var/f)`, or
/// `(H/T_i) α f^γ c_org / f` in the simplified model. Residual `√E_i`.
#[derive(Clone, Debug)]
pub struct EnergyObjective {
    params: EnergyModelParams,
    // H / T_i per task.
    weight: Vec<f64>,
    c_fix: Vec<f64>,
    c_var: Vec<f64>,
    c_org: Vec<f64>,
}

/// Energy horizon: the hyperperiod, or the longest period when the
/// hyperperiod is undefined or beyond [`MAX_ENERGY_HORIZON`].
pub fn energy_horizon(ts: &TaskSet) -> f64 {
    let periods = ts.periods();
    match lcm_of_periods(&periods) {
        Ok(h) if (h as f64) <= MAX_ENERGY_HORIZON => h as f64,
        _ => periods.iter().copied().fold(0.0, f64::max),
    }
}

impl EnergyObjective {
    pub fn new(ts: &TaskSet, params: EnergyModelParams) -> Result<Self> {
        if !(params.alpha > 0.0 && params.gamma > 0.0 && params.beta >= 0.0) {
            return Err(invalid("energy model needs α > 0, γ > 0 and β ≥ 0"));
        }
        if !(params.f_min > 0.0 && params.f_min <= params.f_max) {
            return Err(invalid("frequency bounds must satisfy 0 < f_min ≤ f_max"));
        }
        let h = energy_horizon(ts);
        Ok(EnergyObjective {
            params,
            weight: ts.tasks.iter().map(|t| h / t.period).collect(),
            c_fix: ts.tasks.iter().map(|t| t.c_fix).collect(),
            c_var: ts.tasks.iter().map(|t| t.c_var).collect(),
            c_org: ts.tasks.iter().map(|t| t.c_org).collect(),
        })
    }

    pub fn energy(&self, i: usize, f: f64) -> f64 {
        if !(f > 0.0) {
            return f64::NAN;
        }
        let p = &self.params;
        let dynamic = if p.gamma == 3.0 { p.alpha * f * f * f } else { p.alpha * f.powf(p.gamma) };
        if p.simplified {
            self.weight[i] * dynamic * self.c_org[i] / f
        } else {
            self.weight[i] * (p.beta + dynamic) * (self.c_fix[i] + self.c_var[i] / f)
        }
    }
}

impl Objective for EnergyObjective {
    fn residuals(&self, x: &[f64], _inst: &Instance, _response: Option<&[f64]>) -> Vec<f64> {
        x.iter().enumerate().map(|(i, &f)| self.energy(i, f).sqrt()).collect()
    }

    fn reads_instance(&self) -> bool {
        false
    }
}

/// Residuals of the energy objective; errors on a nonpositive frequency.
pub fn energy_residuals(ts: &TaskSet, f: &[f64], params: &EnergyModelParams) -> Result<Vec<f64>> {
    if f.len() != ts.len() {
        return Err(invalid("one frequency per task is required"));
    }
    if let Some(i) = f.iter().position(|&v| !(v > 0.0)) {
        return Err(invalid(format!("frequency of task {i} must be positive")));
    }
    let obj = EnergyObjective::new(ts, params.clone())?;
    let inst = Instance { exec: Vec::new(), period: ts.periods(), deadline: ts.deadlines() };
    Ok(obj.residuals(f, &inst, None))
}

/// Control cost `Σ α_i T_i + β_i r_i + γ_i r_i²` over period variables shared
/// per group. The `T_i` term uses the continuous design value. A residual
/// is not evaluable when `r_i` exceeds the deadline.
#[derive(Clone, Debug)]
pub struct ControlObjective {
    weights: Vec<ControlWeights>,
    groups: Vec<usize>,
}

impl ControlObjective {
    pub fn new(weights: Vec<ControlWeights>, groups: Vec<usize>) -> Result<Self> {
        if weights.len() != groups.len() {
            return Err(invalid("control weights must cover every task"));
        }
        Ok(ControlObjective { weights, groups })
    }

    fn argument(&self, i: usize, period: f64, r: f64) -> f64 {
        let w = &self.weights[i];
        w.alpha * period + w.beta * r + w.gamma * r * r
    }
}

fn control_residual(arg: f64) -> f64 {
    if arg >= 0.0 {
        arg.sqrt()
    } else if arg >= -CONTROL_CLAMP_TOL {
        0.0
    } else {
        f64::NAN
    }
}

impl Objective for ControlObjective {
    fn residuals(&self, x: &[f64], inst: &Instance, response: Option<&[f64]>) -> Vec<f64> {
        let Some(r) = response else {
            return vec![f64::NAN; self.weights.len()];
        };
        (0..self.weights.len())
            .map(|i| {
                if !r[i].is_finite() || r[i] > inst.deadline[i] {
                    return f64::NAN;
                }
                control_residual(self.argument(i, x[self.groups[i]], r[i]))
            })
            .collect()
    }

    fn uses_response_times(&self) -> bool {
        true
    }

    fn response_gradient(&self, _x: &[f64], _inst: &Instance, r: &[f64]) -> Vec<f64> {
        self.weights.iter().zip(r).map(|(w, &ri)| w.beta + 2.0 * w.gamma * ri).collect()
    }
}

/// Control residuals for explicit periods and response times; errors when an
/// argument is negative beyond the clamping tolerance.
pub fn control_residuals(periods: &[f64], r: &[f64], weights: &[ControlWeights]) -> Result<Vec<f64>> {
    if periods.len() != weights.len() || r.len() != weights.len() {
        return Err(invalid("periods, response times and weights differ in length"));
    }
    weights
        .iter()
        .zip(periods.iter().zip(r))
        .enumerate()
        .map(|(i, (w, (&t, &ri)))| {
            let arg = w.alpha * t + w.beta * ri + w.gamma * ri * ri;
            let v = control_residual(arg);
            if v.is_nan() {
                Err(Error::Numeric(format!("control cost of task {i} is negative ({arg})")))
            } else {
                Ok(v)
            }
        })
        .collect()
}

/// Residual `w_i / c_i`: larger execution budgets are better.
#[derive(Clone, Debug)]
pub struct WcetObjective {
    pub weights: Vec<f64>,
}

impl Objective for WcetObjective {
    fn residuals(&self, x: &[f64], _inst: &Instance, _response: Option<&[f64]>) -> Vec<f64> {
        x.iter().zip(&self.weights).map(|(c, w)| if *c > 0.0 { w / c } else { f64::NAN }).collect()
    }

    fn reads_instance(&self) -> bool {
        false
    }
}

impl Problem {
    /// Builds the problem described by the task set's `objective` entry.
    pub fn from_taskset(ts: &TaskSet) -> Result<Problem> {
        let spec = ts
            .objective
            .clone()
            .ok_or_else(|| Error::Config("task set has no `objective` entry".into()))?;
        let n = ts.len();
        match spec {
            ObjectiveSpec::Energy { params } => {
                let obj = EnergyObjective::new(ts, params.clone())?;
                Problem::new(
                    ts.clone(),
                    DesignMap::Frequency { simplified: params.simplified },
                    vec![params.f_min; n],
                    vec![params.f_max; n],
                    obj,
                )
            }
            ObjectiveSpec::Control { params } => {
                let (groups, _) = ts.groups();
                let mut allowed = params.allowed_periods.clone();
                allowed.sort_by(f64::total_cmp);
                let obj = ControlObjective::new(params.weights.clone(), groups.clone())?;
                Problem::new(
                    ts.clone(),
                    DesignMap::Period { groups, allowed: Some(allowed) },
                    params.lower.clone(),
                    params.upper.clone(),
                    obj,
                )
            }
            ObjectiveSpec::Wcet { weights, lower, upper } => {
                if weights.len() != n {
                    return Err(invalid("one WCET weight per task is required"));
                }
                Problem::new(ts.clone(), DesignMap::Wcet, lower, upper, WcetObjective { weights })
            }
        }
    }
}

/// Rounds period variables into the allowed set.
///
/// Every variable starts at its upward candidate; then, one dimension at a
/// time, the downward candidate is kept if the oracle confirms the vector
/// stays schedulable. The final vector is verified once more.
pub fn round_periods(
    problem: &Problem,
    x: &[f64],
    oracle: &mut dyn SchedulabilityOracle,
    prio: &PriorityAssignment,
) -> Result<Vec<f64>> {
    let DesignMap::Period { allowed: Some(allowed), .. } = problem.design() else {
        return Err(invalid("rounding needs a period design with an allowed set"));
    };
    let mut cur: Vec<f64> = x.iter().map(|&v| snap_up(allowed, v)).collect();
    for g in 0..cur.len() {
        let Some(down) = snap_down(allowed, x[g]) else { continue };
        if down == cur[g] || down < problem.lower()[g] {
            continue;
        }
        let mut trial = cur.clone();
        trial[g] = down;
        if oracle.is_schedulable(&trial, prio)? {
            cur = trial;
        }
    }
    if !problem.in_box(&cur) || !oracle.is_schedulable(&cur, prio)? {
        let dim = (0..x.len()).find(|&g| cur[g] != x[g]).unwrap_or(0);
        return Err(Error::RoundingInfeasible { dim });
    }
    Ok(cur)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracle::RtaOracle;
    use proptest::prelude::*;

    fn one_task(period: f64, c_fix: f64, c_var: f64) -> TaskSet {
        let mut ts = TaskSet::from_timing(&[(period, period, c_var)]).unwrap();
        ts.tasks[0].c_fix = c_fix;
        ts
    }

    #[test]
    fn full_energy_model_at_unit_frequency() {
        let ts = one_task(10.0, 0.0, 1.0);
        let p = EnergyModelParams { simplified: false, ..Default::default() };
        let f = energy_residuals(&ts, &[1.0], &p).unwrap();
        assert!((f[0] * f[0] - 2.26).abs() < 1e-12);
    }

    #[test]
    fn simplified_energy_model_at_unit_frequency() {
        let ts = one_task(10.0, 0.0, 1.0);
        let f = energy_residuals(&ts, &[1.0], &EnergyModelParams::default()).unwrap();
        assert!((f[0] * f[0] - 1.76).abs() < 1e-12);
    }

    #[test]
    fn simplified_energy_grows_with_frequency() {
        let ts = one_task(10.0, 0.0, 1.0);
        let p = EnergyModelParams { f_max: 2.0, ..Default::default() };
        let e: Vec<f64> = (0..=10)
            .map(|k| {
                let f = 1.0 + k as f64 / 10.0;
                energy_residuals(&ts, &[f], &p).unwrap()[0].powi(2)
            })
            .collect();
        assert!(e.windows(2).all(|w| w[1] > w[0]));
        assert!((e[10] / e[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn nonpositive_frequency_rejected() {
        let ts = one_task(10.0, 0.0, 1.0);
        assert!(energy_residuals(&ts, &[0.0], &EnergyModelParams::default()).is_err());
    }

    #[test]
    fn energy_horizon_falls_back_to_longest_period() {
        let ts = TaskSet::from_timing(&[(99_991.0, 99_991.0, 1.0), (99_989.0, 99_989.0, 1.0), (99_971.0, 99_971.0, 1.0)])
            .unwrap();
        assert_eq!(energy_horizon(&ts), 99_991.0);
        let ts = TaskSet::from_timing(&[(10.0, 10.0, 1.0), (40.0, 40.0, 1.0)]).unwrap();
        assert_eq!(energy_horizon(&ts), 40.0);
    }

    #[test]
    fn control_cost_examples() {
        let w = ControlWeights { alpha: 1.0, beta: 1.0, gamma: 0.0 };
        let f = control_residuals(&[10.0], &[5.0], &[w]).unwrap();
        assert!((f[0] * f[0] - 15.0).abs() < 1e-12);
        let w = ControlWeights { alpha: 1.0, beta: 100.0, gamma: -10.0 };
        assert!(control_residuals(&[10.0], &[5.0], &[w]).unwrap()[0].is_finite());
        let w = ControlWeights { alpha: 1.0, beta: 1.0, gamma: -10.0 };
        assert!(matches!(control_residuals(&[1.0], &[5.0], &[w]), Err(Error::Numeric(_))));
    }

    #[test]
    fn two_task_period_sum() {
        let unit = ControlWeights { alpha: 1.0, beta: 1.0, gamma: 0.0 };
        let f = control_residuals(&[10.0, 6.0], &[4.0, 5.0], &[unit, unit]).unwrap();
        assert!((f.iter().map(|v| v * v).sum::<f64>() - 25.0).abs() < 1e-12);
    }

    fn control_problem(timing: &[(f64, f64, f64)], lower: f64, upper: f64) -> Problem {
        let mut ts = TaskSet::from_timing(timing).unwrap();
        let n = ts.len();
        ts.objective = Some(ObjectiveSpec::Control {
            params: ControlModelParams {
                weights: vec![ControlWeights { alpha: 1.0, beta: 1.0, gamma: 0.0 }; n],
                allowed_periods: vec![1000.0, 2000.0, 3000.0, 4000.0],
                lower: vec![lower; n],
                upper: vec![upper; n],
            },
        });
        Problem::from_taskset(&ts).unwrap()
    }

    #[test]
    fn rounding_prefers_down_when_schedulable() {
        let p = control_problem(&[(3000.0, 3000.0, 100.0)], 1000.0, 4000.0);
        let mut o = RtaOracle::new(p.taskset().clone(), p.design().clone()).unwrap();
        let prio = PriorityAssignment::identity(1);
        assert_eq!(round_periods(&p, &[2700.0], &mut o, &prio).unwrap(), vec![2000.0]);
        assert_eq!(round_periods(&p, &[3000.0], &mut o, &prio).unwrap(), vec![3000.0]);
    }

    #[test]
    fn rounding_goes_up_when_down_breaks_schedulability() {
        // Task 1 cannot take period 2000 under interference from task 0.
        let p = control_problem(&[(1000.0, 1000.0, 600.0), (3000.0, 3000.0, 900.0)], 1000.0, 4000.0);
        let mut o = RtaOracle::new(p.taskset().clone(), p.design().clone()).unwrap();
        let prio = PriorityAssignment::identity(2);
        // Oracle check by hand: at T1 = 2000, r1 = 900 + 2·600 = 2100 > 2000;
        // at T1 = 3000, r1 = 900 + 3·600 = 2700 ≤ 3000.
        let r = round_periods(&p, &[1000.0, 2700.0], &mut o, &prio).unwrap();
        assert_eq!(r, vec![1000.0, 3000.0]);
    }

    proptest! {
        #[test]
        fn energy_is_separable(
            f in proptest::collection::vec(0.5f64..1.0, 2..6),
            which in 0usize..6,
            g in 0.5f64..1.0,
        ) {
            let n = f.len();
            let timing: Vec<(f64, f64, f64)> = (0..n).map(|i| (10.0 * (i + 1) as f64, 10.0 * (i + 1) as f64, 1.0)).collect();
            let ts = TaskSet::from_timing(&timing).unwrap();
            let p = EnergyModelParams::default();
            let a = energy_residuals(&ts, &f, &p).unwrap();
            let mut f2 = f.clone();
            f2[which % n] = g;
            let b = energy_residuals(&ts, &f2, &p).unwrap();
            for i in 0..n {
                if i != which % n {
                    prop_assert_eq!(a[i], b[i]);
                }
            }
        }

        #[test]
        fn control_residual_monotone_in_response(
            alpha in 1.0f64..1e3, beta in 1.0f64..1e4, gamma in 0.0f64..10.0,
            t in 100.0f64..1e4, r in 0.0f64..1e3, dr in 0.0f64..1e3,
        ) {
            let w = [ControlWeights { alpha, beta, gamma }];
            let a = control_residuals(&[t], &[r], &w).unwrap()[0];
            let b = control_residuals(&[t], &[r + dr], &w).unwrap()[0];
            prop_assert!(b >= a);
        }
    }
}
