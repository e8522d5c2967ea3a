//! Discrete-event simulation of global non-preemptive fixed-priority
//! scheduling of periodic DAG tasks over one hyperperiod.

use std::cmp::{Ordering, Reverse};
use std::collections::BinaryHeap;

use crate::error::{invalid, Error, Result};
use crate::oracle::{ResponseTimeVector, SchedulabilityOracle, Verdict};
use crate::problem::{DesignMap, Instance};
use crate::taskmodel::{lcm_of_periods, PriorityAssignment, TaskSet};

/// Longest hyperperiod the simulator accepts, in time units.
pub const DEFAULT_HYPERPERIOD_CAP: u64 = 10_000_000;

// Events closer than this are treated as simultaneous.
const TIME_EPS: f64 = 1e-9;

#[derive(Clone, Debug, PartialEq)]
pub struct SimulationReport {
    /// Worst observed response time per task.
    pub response: ResponseTimeVector,
    /// Best observed response time per task.
    pub best_response: Vec<f64>,
    /// Total execution time placed on each core.
    pub busy: Vec<f64>,
    pub hyperperiod: u64,
    pub jobs: usize,
}

#[derive(Clone, Copy, PartialEq)]
struct Time(f64);

impl Eq for Time {}

impl PartialOrd for Time {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Time {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

#[derive(Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
enum Event {
    // Finishes sort before releases at the same instant so freed cores and
    // successors are visible to the dispatch that follows.
    Finish { core: usize, task: usize, job: usize },
    Release { task: usize, job: usize },
}

/// Ready-queue key: rank, then release time, then task id.
#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct ReadyJob {
    rank: usize,
    release: Time,
    task: usize,
    job: usize,
}

/// Simulates one hyperperiod with the periods of `ts` and returns the worst
/// response time of every task.
pub fn simulate_np_multicore(
    ts: &TaskSet,
    exec: &[f64],
    prio: &PriorityAssignment,
    m: usize,
) -> Result<ResponseTimeVector> {
    let inst = Instance { exec: exec.to_vec(), period: ts.periods(), deadline: ts.deadlines() };
    Ok(simulate_np_multicore_detailed(ts, &inst, prio, m, DEFAULT_HYPERPERIOD_CAP)?.response)
}

/// Simulation with explicit task parameters, core count and hyperperiod cap.
///
/// All tasks release their first job at time 0. A DAG node job becomes
/// ready once every predecessor job of the same release has finished. A
/// started job runs to completion on its core. Jobs that finish after the
/// hyperperiod are still simulated to completion.
pub fn simulate_np_multicore_detailed(
    ts: &TaskSet,
    inst: &Instance,
    prio: &PriorityAssignment,
    m: usize,
    cap: u64,
) -> Result<SimulationReport> {
    let n = ts.len();
    if inst.exec.len() != n || inst.period.len() != n || prio.len() != n {
        return Err(invalid("task parameter vectors differ in length"));
    }
    if m == 0 {
        return Err(invalid("core count must be positive"));
    }
    if let Some(i) = inst.exec.iter().position(|&c| !(c > 0.0) || !c.is_finite()) {
        return Err(invalid(format!("execution time of task {i} must be positive")));
    }
    let hyper = lcm_of_periods(&inst.period)?;
    if hyper > cap {
        return Err(Error::ResourceLimit(format!("hyperperiod {hyper} exceeds the cap {cap}")));
    }
    let h = hyper as f64;
    let ranks = prio.ranks();
    let preds = ts.predecessors();
    let mut succs = vec![Vec::new(); n];
    for &[a, b] in &ts.edges {
        succs[a].push(b);
    }
    let job_counts: Vec<usize> = inst.period.iter().map(|&p| (h / p).round() as usize).collect();
    let total_jobs: usize = job_counts.iter().sum();

    // Unfinished predecessors per job, and whether the job has been released.
    let mut waiting: Vec<Vec<usize>> =
        (0..n).map(|i| vec![preds[i].len(); job_counts[i]]).collect();
    let mut released: Vec<Vec<bool>> = job_counts.iter().map(|&k| vec![false; k]).collect();

    let mut events: BinaryHeap<Reverse<(Time, Event)>> = BinaryHeap::new();
    for i in 0..n {
        events.push(Reverse((Time(0.0), Event::Release { task: i, job: 0 })));
    }
    let mut ready: BinaryHeap<Reverse<ReadyJob>> = BinaryHeap::new();
    let mut free_cores: Vec<usize> = (0..m).rev().collect();
    let mut worst = vec![0.0f64; n];
    let mut best = vec![f64::INFINITY; n];
    let mut busy = vec![0.0; m];

    while let Some(Reverse((Time(now), _))) = events.peek().copied() {
        while let Some(Reverse((Time(t), ev))) = events.peek().copied() {
            if t > now + TIME_EPS {
                break;
            }
            events.pop();
            match ev {
                Event::Release { task, job } => {
                    released[task][job] = true;
                    if job + 1 < job_counts[task] {
                        let next = (job + 1) as f64 * inst.period[task];
                        events.push(Reverse((Time(next), Event::Release { task, job: job + 1 })));
                    }
                    if waiting[task][job] == 0 {
                        ready.push(Reverse(ReadyJob {
                            rank: ranks[task],
                            release: Time(job as f64 * inst.period[task]),
                            task,
                            job,
                        }));
                    }
                }
                Event::Finish { core, task, job } => {
                    free_cores.push(core);
                    let response = t - job as f64 * inst.period[task];
                    worst[task] = worst[task].max(response);
                    best[task] = best[task].min(response);
                    for &s in &succs[task] {
                        waiting[s][job] -= 1;
                        if waiting[s][job] == 0 && released[s][job] {
                            ready.push(Reverse(ReadyJob {
                                rank: ranks[s],
                                release: Time(job as f64 * inst.period[s]),
                                task: s,
                                job,
                            }));
                        }
                    }
                }
            }
        }
        // Lowest-numbered free core first, for reproducible per-core totals.
        free_cores.sort_unstable_by(|a, b| b.cmp(a));
        while !free_cores.is_empty() {
            let Some(Reverse(j)) = ready.pop() else { break };
            let core = free_cores.pop().expect("checked non-empty");
            let c = inst.exec[j.task];
            busy[core] += c;
            events.push(Reverse((
                Time(now + c),
                Event::Finish { core, task: j.task, job: j.job },
            )));
        }
    }

    Ok(SimulationReport {
        response: ResponseTimeVector::new(worst),
        best_response: best,
        busy,
        hyperperiod: hyper,
        jobs: total_jobs,
    })
}

/// Oracle backed by [`simulate_np_multicore_detailed`]. Schedulable iff
/// every worst observed response time is within its deadline.
pub struct SimulationOracle {
    taskset: TaskSet,
    design: DesignMap,
    cap: u64,
    queries: u64,
}

impl SimulationOracle {
    pub fn new(taskset: TaskSet, design: DesignMap) -> Result<Self> {
        if taskset.preemptive {
            return Err(invalid("the simulation oracle models non-preemptive scheduling only"));
        }
        Ok(SimulationOracle { taskset, design, cap: DEFAULT_HYPERPERIOD_CAP, queries: 0 })
    }

    pub fn with_hyperperiod_cap(mut self, cap: u64) -> Self {
        self.cap = cap;
        self
    }
}

impl SchedulabilityOracle for SimulationOracle {
    fn analyze(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict> {
        self.queries += 1;
        let inst = self.design.instance(&self.taskset, x)?;
        let report =
            simulate_np_multicore_detailed(&self.taskset, &inst, prio, self.taskset.cores, self.cap)?;
        let schedulable = report.response.meets(&inst.deadline);
        Ok(Verdict { schedulable, response: Some(report.response) })
    }

    fn query_count(&self) -> u64 {
        self.queries
    }
}
