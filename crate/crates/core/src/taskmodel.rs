//! Task-set data model, random task-set generators and priority orders.

use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::objectives::ObjectiveSpec;

/// Resampling budget of [`uunifast_capped`].
pub const UUNIFAST_MAX_ATTEMPTS: usize = 10_000;

/// One periodic task, or one node of a periodic DAG task.
///
/// The execution time at frequency `f` is `c_fix + c_var / f`; `c_org` is the
/// WCET at frequency 1 used by the simplified energy model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: usize,
    pub period: f64,
    pub deadline: f64,
    pub c_fix: f64,
    pub c_var: f64,
    pub c_org: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dag_id: Option<usize>,
}

impl Task {
    /// Execution time at frequency 1 under the full frequency model.
    pub fn nominal_exec(&self) -> f64 {
        self.c_fix + self.c_var
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskSet {
    pub tasks: Vec<Task>,
    #[serde(default)]
    pub edges: Vec<[usize; 2]>,
    pub cores: usize,
    pub preemptive: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub objective: Option<ObjectiveSpec>,
}

impl TaskSet {
    pub fn new(tasks: Vec<Task>, cores: usize, preemptive: bool) -> Result<Self> {
        let ts = TaskSet { tasks, edges: Vec::new(), cores, preemptive, objective: None };
        ts.validate()?;
        Ok(ts)
    }

    /// Builds a single-core preemptive task set from `(period, deadline, wcet)` triples.
    pub fn from_timing(timing: &[(f64, f64, f64)]) -> Result<Self> {
        let tasks = timing
            .iter()
            .enumerate()
            .map(|(id, &(period, deadline, c))| Task {
                id,
                period,
                deadline,
                c_fix: 0.0,
                c_var: c,
                c_org: c,
                dag_id: None,
            })
            .collect();
        TaskSet::new(tasks, 1, true)
    }

    pub fn len(&self) -> usize {
        self.tasks.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tasks.is_empty()
    }

    pub fn periods(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.period).collect()
    }

    pub fn deadlines(&self) -> Vec<f64> {
        self.tasks.iter().map(|t| t.deadline).collect()
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let ts: TaskSet = serde_json::from_str(text)?;
        ts.validate()?;
        Ok(ts)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.tasks.is_empty() {
            return Err(invalid("task set is empty"));
        }
        if self.cores == 0 {
            return Err(invalid("core count must be positive"));
        }
        for (i, t) in self.tasks.iter().enumerate() {
            if t.id != i {
                return Err(invalid(format!("task at position {i} has id {}", t.id)));
            }
            if !(t.period > 0.0 && t.deadline > 0.0) {
                return Err(invalid(format!("task {i}: period and deadline must be positive")));
            }
            if !(t.c_fix >= 0.0 && t.c_var >= 0.0 && t.c_org >= 0.0) {
                return Err(invalid(format!("task {i}: execution parameters must be nonnegative")));
            }
        }
        let n = self.tasks.len();
        for &[a, b] in &self.edges {
            if a >= n || b >= n {
                return Err(invalid(format!("edge ({a}, {b}) references a missing task")));
            }
            if a == b {
                return Err(invalid(format!("self loop on task {a}")));
            }
        }
        if self.has_cycle() {
            return Err(invalid("precedence edges contain a cycle"));
        }
        for t in &self.tasks {
            if let Some(d) = t.dag_id {
                let first = self.tasks.iter().find(|u| u.dag_id == Some(d)).unwrap();
                if first.period != t.period {
                    return Err(invalid(format!("nodes of DAG {d} have different periods")));
                }
            }
        }
        Ok(())
    }

    fn has_cycle(&self) -> bool {
        let n = self.tasks.len();
        let mut indeg = vec![0usize; n];
        let mut succ = vec![Vec::new(); n];
        for &[a, b] in &self.edges {
            indeg[b] += 1;
            succ[a].push(b);
        }
        let mut stack: Vec<usize> = (0..n).filter(|&i| indeg[i] == 0).collect();
        let mut seen = 0;
        while let Some(v) = stack.pop() {
            seen += 1;
            for &w in &succ[v] {
                indeg[w] -= 1;
                if indeg[w] == 0 {
                    stack.push(w);
                }
            }
        }
        seen != n
    }

    pub fn predecessors(&self) -> Vec<Vec<usize>> {
        let mut pred = vec![Vec::new(); self.tasks.len()];
        for &[a, b] in &self.edges {
            pred[b].push(a);
        }
        pred
    }

    /// Maps every task to a dense group index: one group per DAG, and one
    /// group per task that belongs to no DAG. Returns `(group_of_task, group_count)`.
    pub fn groups(&self) -> (Vec<usize>, usize) {
        let mut dag_group = std::collections::BTreeMap::new();
        let mut next = 0;
        let mut out = Vec::with_capacity(self.tasks.len());
        for t in &self.tasks {
            let g = match t.dag_id {
                Some(d) => *dag_group.entry(d).or_insert_with(|| {
                    next += 1;
                    next - 1
                }),
                None => {
                    next += 1;
                    next - 1
                }
            };
            out.push(g);
        }
        (out, next)
    }

    /// Total utilization at frequency 1.
    pub fn utilization(&self) -> f64 {
        self.tasks.iter().map(|t| t.nominal_exec() / t.period).sum()
    }
}

/// A total priority order over tasks, highest priority first.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "Vec<usize>", into = "Vec<usize>")]
pub struct PriorityAssignment {
    order: Vec<usize>,
}

impl PriorityAssignment {
    pub fn new(order: Vec<usize>) -> Result<Self> {
        let mut seen = vec![false; order.len()];
        for &t in &order {
            if t >= order.len() || seen[t] {
                return Err(invalid(format!("priority order {order:?} is not a permutation")));
            }
            seen[t] = true;
        }
        Ok(PriorityAssignment { order })
    }

    pub fn identity(n: usize) -> Self {
        PriorityAssignment { order: (0..n).collect() }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    /// 1-based rank of `task`; rank 1 is the highest priority.
    pub fn rank(&self, task: usize) -> Option<usize> {
        self.order.iter().position(|&t| t == task).map(|p| p + 1)
    }

    /// Rank of every task, indexed by task id.
    pub fn ranks(&self) -> Vec<usize> {
        let mut r = vec![0; self.order.len()];
        for (p, &t) in self.order.iter().enumerate() {
            r[t] = p + 1;
        }
        r
    }

    pub(crate) fn swap_positions(&mut self, a: usize, b: usize) {
        self.order.swap(a, b);
    }
}

impl TryFrom<Vec<usize>> for PriorityAssignment {
    type Error = Error;
    fn try_from(order: Vec<usize>) -> Result<Self> {
        PriorityAssignment::new(order)
    }
}

impl From<PriorityAssignment> for Vec<usize> {
    fn from(p: PriorityAssignment) -> Self {
        p.order
    }
}

/// Shorter period means higher priority; equal periods are ordered by task id.
pub fn rate_monotonic_priorities(ts: &TaskSet) -> PriorityAssignment {
    let mut order: Vec<usize> = (0..ts.tasks.len()).collect();
    order.sort_by(|&a, &b| ts.tasks[a].period.total_cmp(&ts.tasks[b].period).then(a.cmp(&b)));
    PriorityAssignment { order }
}

/// Least common multiple of all periods. Periods must be integral.
pub fn hyperperiod(ts: &TaskSet) -> Result<u64> {
    lcm_of_periods(&ts.periods())
}

pub fn lcm_of_periods(periods: &[f64]) -> Result<u64> {
    let mut acc: u64 = 1;
    for &p in periods {
        let rounded = p.round();
        if !(rounded >= 1.0) || (p - rounded).abs() > 1e-9 * p.max(1.0) || rounded > 9.0e15 {
            return Err(invalid(format!("period {p} is not a positive integer")));
        }
        let p = rounded as u64;
        let g = gcd(acc, p);
        acc = (acc / g)
            .checked_mul(p)
            .ok_or_else(|| Error::ResourceLimit("hyperperiod overflows 64 bits".into()))?;
    }
    Ok(acc)
}

fn gcd(mut a: u64, mut b: u64) -> u64 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

/// UUniFast with a dedicated seed.
pub fn uunifast(n: usize, u_total: f64, seed: u64) -> Result<Vec<f64>> {
    uunifast_with(&mut ChaCha8Rng::seed_from_u64(seed), n, u_total)
}

/// Draws `n` positive utilizations uniformly from the simplex summing to `u_total`.
pub fn uunifast_with<R: Rng + ?Sized>(rng: &mut R, n: usize, u_total: f64) -> Result<Vec<f64>> {
    if n == 0 {
        return Err(invalid("uunifast needs at least one share"));
    }
    if !(u_total > 0.0 && u_total.is_finite()) {
        return Err(invalid(format!("total utilization {u_total} must be positive")));
    }
    let mut out = Vec::with_capacity(n);
    let mut remaining = u_total;
    for i in 1..n {
        let r: f64 = rng.sample(Open01);
        let next = remaining * r.powf(1.0 / (n - i) as f64);
        out.push(remaining - next);
        remaining = next;
    }
    out.push(remaining);
    Ok(out)
}

/// UUniFast resampled until every share is at most `cap`.
pub fn uunifast_capped<R: Rng + ?Sized>(
    rng: &mut R,
    n: usize,
    u_total: f64,
    cap: f64,
) -> Result<Vec<f64>> {
    if u_total > n as f64 * cap {
        return Err(invalid(format!(
            "utilization {u_total} cannot be split into {n} shares of at most {cap}"
        )));
    }
    for _ in 0..UUNIFAST_MAX_ATTEMPTS {
        let shares = uunifast_with(rng, n, u_total)?;
        if shares.iter().all(|&u| u <= cap) {
            return Ok(shares);
        }
    }
    Err(Error::ResourceLimit(format!(
        "no UUniFast draw with all shares <= {cap} after {UUNIFAST_MAX_ATTEMPTS} attempts"
    )))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PeriodDistribution {
    /// Log-uniform on `[min, max]`, rounded to an integer.
    LogUniform { min: f64, max: f64 },
    /// Uniform choice from a fixed list.
    Discrete(Vec<f64>),
}

impl PeriodDistribution {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match self {
            PeriodDistribution::LogUniform { min, max } => {
                let v = rng.random_range(min.ln()..=max.ln()).exp();
                v.round().clamp(min.ceil(), max.floor())
            }
            PeriodDistribution::Discrete(values) => values[rng.random_range(0..values.len())],
        }
    }

    fn validate(&self) -> Result<()> {
        match self {
            PeriodDistribution::LogUniform { min, max } if !(*min >= 1.0 && min <= max) => {
                Err(invalid(format!("log-uniform period range [{min}, {max}] is invalid")))
            }
            PeriodDistribution::Discrete(v) if v.is_empty() || v.iter().any(|&p| !(p > 0.0)) => {
                Err(invalid("discrete period set must be nonempty and positive"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskShape {
    Periodic { task_count: usize },
    Dag { dag_count: usize, nodes_per_dag: (usize, usize), edge_probability: f64 },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GeneratorConfig {
    pub shape: TaskShape,
    pub total_utilization: f64,
    pub periods: PeriodDistribution,
    pub cores: usize,
    pub preemptive: bool,
    pub seed: u64,
}

impl GeneratorConfig {
    /// Implicit-deadline periodic tasks with log-uniform periods in `[1e2, 1e5]`
    /// on one preemptive core.
    pub fn periodic(task_count: usize, total_utilization: f64, seed: u64) -> Self {
        GeneratorConfig {
            shape: TaskShape::Periodic { task_count },
            total_utilization,
            periods: PeriodDistribution::LogUniform { min: 1e2, max: 1e5 },
            cores: 1,
            preemptive: true,
            seed,
        }
    }

    /// Periodic DAGs on four non-preemptive cores with periods from
    /// `{1, 2, 5, 10, 20, 50, 100}`, 1 to 20 nodes and edge probability 0.2.
    pub fn dag(dag_count: usize, total_utilization: f64, seed: u64) -> Self {
        GeneratorConfig {
            shape: TaskShape::Dag { dag_count, nodes_per_dag: (1, 20), edge_probability: 0.2 },
            total_utilization,
            periods: PeriodDistribution::Discrete(vec![1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0]),
            cores: 4,
            preemptive: false,
            seed,
        }
    }
}

pub fn generate_taskset(cfg: &GeneratorConfig) -> Result<TaskSet> {
    cfg.periods.validate()?;
    if cfg.cores == 0 {
        return Err(invalid("core count must be positive"));
    }
    if !(cfg.total_utilization > 0.0) || cfg.total_utilization > cfg.cores as f64 {
        return Err(invalid(format!(
            "total utilization {} must lie in (0, {}]",
            cfg.total_utilization, cfg.cores
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut tasks = Vec::new();
    let mut edges = Vec::new();
    match cfg.shape {
        TaskShape::Periodic { task_count } => {
            let shares = uunifast_capped(&mut rng, task_count, cfg.total_utilization, 1.0)?;
            for (id, u) in shares.into_iter().enumerate() {
                let period = cfg.periods.sample(&mut rng);
                tasks.push(node(id, period, u * period, None));
            }
        }
        TaskShape::Dag { dag_count, nodes_per_dag: (lo, hi), edge_probability } => {
            if lo == 0 || lo > hi {
                return Err(invalid(format!("node count range [{lo}, {hi}] is invalid")));
            }
            if !(0.0..=1.0).contains(&edge_probability) {
                return Err(invalid("edge probability must lie in [0, 1]"));
            }
            let dag_shares = uunifast_capped(&mut rng, dag_count, cfg.total_utilization, hi as f64)?;
            for (dag, u_dag) in dag_shares.into_iter().enumerate() {
                // Each node carries at most utilization 1, so heavy DAGs need more nodes.
                let min_nodes = lo.max((2.0 * u_dag).ceil() as usize).min(hi.max(u_dag.ceil() as usize));
                let nodes = rng.random_range(min_nodes..=hi.max(min_nodes));
                let period = cfg.periods.sample(&mut rng);
                let node_shares = uunifast_capped(&mut rng, nodes, u_dag, 1.0)?;
                let base = tasks.len();
                for u in node_shares {
                    tasks.push(node(tasks.len(), period, u * period, Some(dag)));
                }
                // Edges only run from lower to higher index, so every DAG is acyclic.
                for a in base..tasks.len() {
                    for b in a + 1..tasks.len() {
                        if rng.random_bool(edge_probability) {
                            edges.push([a, b]);
                        }
                    }
                }
            }
        }
    }
    let ts = TaskSet { tasks, edges, cores: cfg.cores, preemptive: cfg.preemptive, objective: None };
    ts.validate()?;
    Ok(ts)
}

fn node(id: usize, period: f64, c: f64, dag_id: Option<usize>) -> Task {
    Task { id, period, deadline: period, c_fix: 0.0, c_var: c, c_org: c, dag_id }
}
