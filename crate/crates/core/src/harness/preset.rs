//! Named benchmark generators.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::north::{EliminationProbe, NorthOptions};
use crate::numcore::LmOptions;
use crate::objectives::{ControlModelParams, ControlWeights, EnergyModelParams, ObjectiveSpec};
use crate::oracle::OracleKind;
use crate::problem::snap_up;
use crate::taskmodel::{generate_taskset, GeneratorConfig, Task, TaskSet, TaskShape};

/// Cores of the DAG platforms.
pub const DAG_CORES: usize = 4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Preset {
    /// Periodic tasks on one preemptive core, frequencies optimized for energy.
    EnergyRm,
    /// DAG tasks on four non-preemptive cores, frequencies optimized for energy.
    EnergyDag,
    /// DAG tasks on four non-preemptive cores, periods optimized for control cost.
    ControlDag,
}

impl Preset {
    pub const ALL: [Preset; 3] = [Preset::EnergyRm, Preset::EnergyDag, Preset::ControlDag];

    pub fn name(self) -> &'static str {
        match self {
            Preset::EnergyRm => "energy-rm",
            Preset::EnergyDag => "energy-dag",
            Preset::ControlDag => "control-dag",
        }
    }

    pub fn default_oracle(self) -> OracleKind {
        match self {
            Preset::EnergyRm => OracleKind::Rta,
            Preset::EnergyDag | Preset::ControlDag => OracleKind::Simulation,
        }
    }

    pub fn cores(self) -> usize {
        match self {
            Preset::EnergyRm => 1,
            Preset::EnergyDag | Preset::ControlDag => DAG_CORES,
        }
    }

    /// Optimizer settings tuned to the scale of each problem family.
    pub fn north_options(self) -> NorthOptions {
        let mut opts = NorthOptions::default();
        match self {
            Preset::EnergyRm => {}
            Preset::EnergyDag => opts.lm = LmOptions { rel_tol: 1e-3, ..opts.lm },
            Preset::ControlDag => {
                opts.lm = LmOptions { rel_tol: 1e-3, ..opts.lm };
                opts.probe = EliminationProbe { d: 10.0, d0: 10.0, ..opts.probe };
            }
        }
        opts
    }

    /// Per-core utilization sweep 0.1, 0.2, ..., 0.9 scaled to the platform.
    pub fn utilization_sweep(self) -> Vec<f64> {
        (1..=9).map(|k| k as f64 / 10.0 * self.cores() as f64).collect()
    }
}

impl fmt::Display for Preset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        Preset::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| invalid(format!("unknown preset `{s}` (expected energy-rm, energy-dag or control-dag)")))
    }
}

/// Size parameters of one generated instance.
#[derive(Clone, Debug, PartialEq)]
pub struct PresetParams {
    /// Tasks for `energy-rm`, DAGs otherwise.
    pub n: usize,
    /// Total utilization; ignored by `control-dag`, whose periods follow from
    /// the execution times.
    pub utilization: f64,
    pub nodes_per_dag: (usize, usize),
}

impl PresetParams {
    pub fn new(n: usize, utilization: f64) -> Self {
        PresetParams { n, utilization, nodes_per_dag: (1, 20) }
    }
}

/// Periods selectable in the control benchmark: {1,2,3,4,5,6,8} × {100,1000,10000}.
pub fn control_period_set() -> Vec<f64> {
    let mut set: Vec<f64> = [100.0, 1000.0, 10000.0]
        .iter()
        .flat_map(|s| [1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 8.0].map(|m| m * s))
        .collect();
    set.sort_by(f64::total_cmp);
    set
}

/// Generates a task set with its objective attached.
pub fn generate_preset(preset: Preset, params: &PresetParams, seed: u64) -> Result<TaskSet> {
    if params.n == 0 {
        return Err(invalid("preset needs at least one task"));
    }
    match preset {
        Preset::EnergyRm => {
            let mut ts = generate_taskset(&GeneratorConfig::periodic(params.n, params.utilization, seed))?;
            ts.objective = Some(ObjectiveSpec::Energy { params: EnergyModelParams::default() });
            Ok(ts)
        }
        Preset::EnergyDag => {
            let mut cfg = GeneratorConfig::dag(params.n, params.utilization, seed);
            if let TaskShape::Dag { nodes_per_dag, .. } = &mut cfg.shape {
                *nodes_per_dag = params.nodes_per_dag;
            }
            let mut ts = generate_taskset(&cfg)?;
            ts.objective = Some(ObjectiveSpec::Energy { params: EnergyModelParams::default() });
            Ok(ts)
        }
        Preset::ControlDag => generate_control(params, seed),
    }
}

/// Node execution times uniform on [1, 100]; every DAG starts at the same
/// period, five times the total execution time rounded up to a multiple of
/// 1000 and then into the allowed set.
fn generate_control(params: &PresetParams, seed: u64) -> Result<TaskSet> {
    let (lo, hi) = params.nodes_per_dag;
    if lo == 0 || lo > hi {
        return Err(invalid(format!("node count range [{lo}, {hi}] is invalid")));
    }
    let allowed = control_period_set();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut exec = Vec::new();
    let mut owner = Vec::new();
    let mut edges = Vec::new();
    for dag in 0..params.n {
        let nodes = rng.random_range(lo..=hi);
        let base = exec.len();
        for _ in 0..nodes {
            exec.push(rng.random_range(1..=100) as f64);
            owner.push(dag);
        }
        for a in base..exec.len() {
            for b in a + 1..exec.len() {
                if rng.random_bool(0.2) {
                    edges.push([a, b]);
                }
            }
        }
    }
    let total: f64 = exec.iter().sum();
    let period = snap_up(&allowed, (5.0 * total / 1000.0).ceil() * 1000.0);
    let tasks = exec
        .iter()
        .zip(&owner)
        .enumerate()
        .map(|(id, (&c, &dag))| Task {
            id,
            period,
            deadline: period,
            c_fix: 0.0,
            c_var: c,
            c_org: c,
            dag_id: Some(dag),
        })
        .collect();
    // γ is kept above -β/T_max so the cost argument stays positive for any
    // admissible response time.
    let t_max = *allowed.last().unwrap();
    let weights = (0..exec.len())
        .map(|_| {
            let alpha = rng.random_range(1.0..=1e3);
            let beta = rng.random_range(1.0..=1e4);
            let gamma = rng.random_range(-10.0..=10.0_f64).max(-beta / t_max);
            ControlWeights { alpha, beta, gamma }
        })
        .collect();
    let mut ts = TaskSet::new(tasks, DAG_CORES, false)?;
    ts.edges = edges;
    ts.objective = Some(ObjectiveSpec::Control {
        params: ControlModelParams {
            weights,
            allowed_periods: allowed.clone(),
            lower: vec![allowed[0]; params.n],
            upper: vec![period; params.n],
        },
    });
    ts.validate()?;
    Ok(ts)
}
