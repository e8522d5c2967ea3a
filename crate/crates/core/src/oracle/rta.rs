use crate::error::{invalid, Result};
use crate::oracle::{ResponseTimeVector, SchedulabilityOracle, Verdict};
use crate::problem::DesignMap;
use crate::taskmodel::{PriorityAssignment, TaskSet};

// Quotients within this distance above an integer are treated as that integer,
// so accumulated rounding does not add a spurious extra job.
const CEIL_SLACK: f64 = 1e-9;

/// Least fixed point of `r_i = c_i + Σ_{j ∈ hp(i)} ⌈r_i / T_j⌉ c_j` for every task.
///
/// Iteration starts at `max(c_i, warm_i)` when a finite warm value is given;
/// the caller guarantees it does not exceed the true fixed point. A task
/// whose iterate passes `horizon[i]` is reported as `f64::INFINITY`.
pub fn rta_fixed_point(
    exec: &[f64],
    periods: &[f64],
    horizon: &[f64],
    prio: &PriorityAssignment,
    warm: Option<&[f64]>,
) -> Result<ResponseTimeVector> {
    let n = exec.len();
    if periods.len() != n || horizon.len() != n || prio.len() != n {
        return Err(invalid("task parameter vectors differ in length"));
    }
    if let Some(i) = exec.iter().position(|&c| !(c > 0.0)) {
        return Err(invalid(format!("execution time of task {i} must be positive")));
    }
    let mut r = vec![f64::INFINITY; n];
    for (pos, &i) in prio.order().iter().enumerate() {
        let hp = &prio.order()[..pos];
        let mut cur = match warm.map(|w| w[i]) {
            Some(w) if w.is_finite() => w.max(exec[i]),
            _ => exec[i],
        };
        loop {
            if cur > horizon[i] {
                break;
            }
            let next = exec[i]
                + hp.iter()
                    .map(|&j| ((cur / periods[j]) - CEIL_SLACK).ceil().max(1.0) * exec[j])
                    .sum::<f64>();
            if next <= cur {
                r[i] = cur;
                break;
            }
            cur = next;
        }
    }
    Ok(ResponseTimeVector { r })
}

/// Response-time analysis for a single-core preemptive fixed-priority task
/// set. The divergence horizon of each task is its deadline.
pub fn rta_response_times(
    ts: &TaskSet,
    exec: &[f64],
    prio: &PriorityAssignment,
    warm: Option<&ResponseTimeVector>,
) -> Result<ResponseTimeVector> {
    check_uniprocessor(ts)?;
    rta_fixed_point(exec, &ts.periods(), &ts.deadlines(), prio, warm.map(|w| w.r.as_slice()))
}

fn check_uniprocessor(ts: &TaskSet) -> Result<()> {
    if ts.cores != 1 || !ts.preemptive || !ts.edges.is_empty() {
        return Err(invalid(
            "response-time analysis needs independent tasks on one preemptive core",
        ));
    }
    Ok(())
}

struct WarmStart {
    prio: PriorityAssignment,
    exec: Vec<f64>,
    period: Vec<f64>,
    r: Vec<f64>,
}

/// Oracle backed by the analytic fixed-priority response-time analysis.
///
/// The last result is reused as the starting point of the next query when
/// it is provably below the new fixed point: same priority order, no
/// execution time decreased and no period increased.
pub struct RtaOracle {
    taskset: TaskSet,
    design: DesignMap,
    queries: u64,
    warm_enabled: bool,
    warm: Option<WarmStart>,
    warm_hits: u64,
}

impl RtaOracle {
    pub fn new(taskset: TaskSet, design: DesignMap) -> Result<Self> {
        check_uniprocessor(&taskset)?;
        Ok(RtaOracle { taskset, design, queries: 0, warm_enabled: true, warm: None, warm_hits: 0 })
    }

    pub fn with_warm_start(mut self, enabled: bool) -> Self {
        self.warm_enabled = enabled;
        self
    }

    /// Queries that started from a cached response-time vector.
    pub fn warm_start_hits(&self) -> u64 {
        self.warm_hits
    }

    fn usable_warm(&self, prio: &PriorityAssignment, exec: &[f64], period: &[f64]) -> Option<&[f64]> {
        let w = self.warm.as_ref().filter(|_| self.warm_enabled)?;
        let valid = &w.prio == prio
            && exec.iter().zip(&w.exec).all(|(a, b)| a >= b)
            && period.iter().zip(&w.period).all(|(a, b)| a <= b);
        valid.then_some(w.r.as_slice())
    }
}

impl SchedulabilityOracle for RtaOracle {
    fn analyze(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict> {
        self.queries += 1;
        let inst = self.design.instance(&self.taskset, x)?;
        let warm = self.usable_warm(prio, &inst.exec, &inst.period);
        let hit = warm.is_some();
        let r = rta_fixed_point(&inst.exec, &inst.period, &inst.deadline, prio, warm)?;
        if hit {
            self.warm_hits += 1;
        }
        let schedulable = r.meets(&inst.deadline);
        if self.warm_enabled {
            self.warm = Some(WarmStart {
                prio: prio.clone(),
                exec: inst.exec,
                period: inst.period,
                r: r.r.clone(),
            });
        }
        Ok(Verdict { schedulable, response: Some(r) })
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn two_task(t: (f64, f64), d: (f64, f64)) -> TaskSet {
        TaskSet::from_timing(&[(t.0, d.0, 1.0), (t.1, d.1, 1.0)]).unwrap()
    }

    #[test]
    fn two_task_period_variant() {
        let ts = two_task((10.0, 6.0), (10.0, 6.0));
        let r = rta_response_times(&ts, &[4.0, 1.0], &PriorityAssignment::identity(2), None).unwrap();
        assert_eq!(r.r, vec![4.0, 5.0]);
    }

    #[test]
    fn boundary_point_of_wcet_example() {
        let ts = two_task((10.0, 40.0), (6.0, 40.0));
        let r = rta_response_times(&ts, &[5.999, 15.89], &PriorityAssignment::identity(2), None)
            .unwrap();
        assert!((r.r[1] - 39.886).abs() < 1e-9, "{:?}", r.r);
        assert!(r.r[1] <= 40.0);
    }

    #[test]
    fn execution_beyond_deadline_diverges() {
        let ts = two_task((10.0, 40.0), (6.0, 40.0));
        let r = rta_response_times(&ts, &[6.5, 1.0], &PriorityAssignment::identity(2), None).unwrap();
        assert!(r.is_diverged(0));
        assert!(!r.meets(&ts.deadlines()));
    }

    #[test]
    fn nonpositive_execution_rejected() {
        let ts = two_task((10.0, 40.0), (6.0, 40.0));
        let p = PriorityAssignment::identity(2);
        assert!(rta_response_times(&ts, &[0.0, 1.0], &p, None).is_err());
    }

    #[test]
    fn oracle_counts_and_decides() {
        let ts = two_task((10.0, 40.0), (6.0, 40.0));
        let mut o = RtaOracle::new(ts, DesignMap::Wcet).unwrap();
        let p = PriorityAssignment::identity(2);
        assert!(o.is_schedulable(&[5.999, 1.499], &p).unwrap());
        assert!(!o.is_schedulable(&[6.1, 1.0], &p).unwrap());
        assert_eq!(o.query_count(), 2);
    }

    #[test]
    fn warm_start_is_used_when_execution_grows() {
        let ts = two_task((10.0, 40.0), (6.0, 40.0));
        let mut o = RtaOracle::new(ts.clone(), DesignMap::Wcet).unwrap();
        let p = PriorityAssignment::identity(2);
        let a = o.analyze(&[4.0, 10.0], &p).unwrap();
        let b = o.analyze(&[4.5, 10.0], &p).unwrap();
        let c = o.analyze(&[4.4, 10.0], &p).unwrap();
        assert_eq!(o.warm_start_hits(), 1);
        let mut cold = RtaOracle::new(ts, DesignMap::Wcet).unwrap().with_warm_start(false);
        assert_eq!(cold.analyze(&[4.0, 10.0], &p).unwrap(), a);
        assert_eq!(cold.analyze(&[4.5, 10.0], &p).unwrap(), b);
        assert_eq!(cold.analyze(&[4.4, 10.0], &p).unwrap(), c);
    }

    /// Smallest r on a grid of step 1 satisfying r >= c_i + Σ ⌈r/T_j⌉ c_j
    /// for integral parameters; such an r is the least fixed point.
    fn brute_force_lfp(c: &[u32], t: &[u32], order: &[usize], horizon: u32) -> Vec<f64> {
        order
            .iter()
            .enumerate()
            .map(|(pos, &i)| {
                (1..=horizon)
                    .find(|&r| {
                        let demand: u32 = c[i]
                            + order[..pos].iter().map(|&j| r.div_ceil(t[j]) * c[j]).sum::<u32>();
                        demand == r
                    })
                    .map_or(f64::INFINITY, f64::from)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .enumerate()
            .fold(vec![0.0; c.len()], |mut acc, (pos, r)| {
                acc[order[pos]] = r;
                acc
            })
    }

    proptest! {
        #[test]
        fn matches_exhaustive_least_fixed_point(
            params in proptest::collection::vec((1u32..6, 4u32..40), 1..=4),
            perm_seed in any::<u64>(),
        ) {
            let n = params.len();
            let c: Vec<u32> = params.iter().map(|p| p.0).collect();
            let t: Vec<u32> = params.iter().map(|p| p.1).collect();
            let mut order: Vec<usize> = (0..n).collect();
            let mut s = perm_seed;
            for i in (1..n).rev() {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1);
                order.swap(i, (s >> 33) as usize % (i + 1));
            }
            let prio = PriorityAssignment::new(order.clone()).unwrap();
            let horizon = 200u32;
            let got = rta_fixed_point(
                &c.iter().map(|&v| v as f64).collect::<Vec<_>>(),
                &t.iter().map(|&v| v as f64).collect::<Vec<_>>(),
                &vec![horizon as f64; n],
                &prio,
                None,
            ).unwrap();
            prop_assert_eq!(got.r, brute_force_lfp(&c, &t, &order, horizon));
        }

        #[test]
        fn response_time_is_sustainable(
            c in proptest::collection::vec(0.5f64..5.0, 2..6),
            t in proptest::collection::vec(10.0f64..60.0, 6),
            which in 0usize..6,
            bump in 0.0f64..2.0,
        ) {
            let n = c.len();
            let prio = PriorityAssignment::identity(n);
            let horizon = vec![1e4; n];
            let base = rta_fixed_point(&c, &t[..n], &horizon, &prio, None).unwrap();
            let mut c2 = c.clone();
            c2[which % n] += bump;
            let grown = rta_fixed_point(&c2, &t[..n], &horizon, &prio, None).unwrap();
            for i in 0..n {
                prop_assert!(grown.r[i] >= base.r[i]);
            }
        }

        #[test]
        fn raising_priority_never_lengthens_response(
            c in proptest::collection::vec(0.5f64..5.0, 2..6),
            t in proptest::collection::vec(10.0f64..60.0, 6),
            pos in 1usize..6,
        ) {
            let n = c.len();
            let pos = pos % n;
            prop_assume!(pos > 0);
            let prio = PriorityAssignment::identity(n);
            let mut raised = prio.clone();
            raised.swap_positions(pos - 1, pos);
            let horizon = vec![1e4; n];
            let before = rta_fixed_point(&c, &t[..n], &horizon, &prio, None).unwrap();
            let after = rta_fixed_point(&c, &t[..n], &horizon, &raised, None).unwrap();
            let task = prio.order()[pos];
            prop_assert!(after.r[task] <= before.r[task]);
        }

        #[test]
        fn warm_and_cold_agree(
            c in proptest::collection::vec(0.5f64..5.0, 1..6),
            t in proptest::collection::vec(10.0f64..60.0, 6),
            grow in proptest::collection::vec(0.0f64..1.0, 6),
        ) {
            let n = c.len();
            let prio = PriorityAssignment::identity(n);
            let horizon = vec![1e4; n];
            let warm = rta_fixed_point(&c, &t[..n], &horizon, &prio, None).unwrap();
            let c2: Vec<f64> = c.iter().zip(&grow).map(|(a, g)| a + g).collect();
            let cold = rta_fixed_point(&c2, &t[..n], &horizon, &prio, None).unwrap();
            let hot = rta_fixed_point(&c2, &t[..n], &horizon, &prio, Some(&warm.r)).unwrap();
            for i in 0..n {
                prop_assert!((cold.r[i] - hot.r[i]).abs() <= 1e-12 || cold.r[i] == hot.r[i]);
            }
        }
    }
}
