//! Black-box schedulability oracles.
//!
//! An oracle answers one question about a design vector and a priority
//! order: schedulable or not. The built-in oracles also report the response
//! times they computed on the way.

mod external;
mod rta;
mod sim;

use std::str::FromStr;

pub use external::{format_decimal, spawn_external_oracle, ExternalOracle, DEFAULT_QUERY_TIMEOUT};
pub use rta::{rta_fixed_point, rta_response_times, RtaOracle};
pub use sim::{
    simulate_np_multicore, simulate_np_multicore_detailed, SimulationOracle, SimulationReport,
    DEFAULT_HYPERPERIOD_CAP,
};

use crate::error::{invalid, Result};
use crate::problem::Problem;
use crate::taskmodel::PriorityAssignment;

/// Response time per task, indexed by task id. `f64::INFINITY` marks a task
/// whose fixed-point iteration exceeded its horizon.
#[derive(Clone, Debug, PartialEq)]
pub struct ResponseTimeVector {
    pub r: Vec<f64>,
}

impl ResponseTimeVector {
    pub fn new(r: Vec<f64>) -> Self {
        ResponseTimeVector { r }
    }

    pub fn len(&self) -> usize {
        self.r.len()
    }

    pub fn is_empty(&self) -> bool {
        self.r.is_empty()
    }

    pub fn is_diverged(&self, task: usize) -> bool {
        self.r[task].is_infinite()
    }

    /// Every response time is at most its deadline.
    pub fn meets(&self, deadlines: &[f64]) -> bool {
        self.r.iter().zip(deadlines).all(|(r, d)| r <= d)
    }
}

/// Outcome of one oracle query.
#[derive(Clone, Debug, PartialEq)]
pub struct Verdict {
    pub schedulable: bool,
    pub response: Option<ResponseTimeVector>,
}

pub trait SchedulabilityOracle {
    /// Runs the analysis once. Counts as exactly one query.
    fn analyze(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict>;

    /// Number of analyses run by this instance so far.
    fn query_count(&self) -> u64;

    fn provides_response_times(&self) -> bool {
        true
    }

    fn is_schedulable(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<bool> {
        Ok(self.analyze(x, prio)?.schedulable)
    }
}

impl<O: SchedulabilityOracle + ?Sized> SchedulabilityOracle for Box<O> {
    fn analyze(&mut self, x: &[f64], prio: &PriorityAssignment) -> Result<Verdict> {
        (**self).analyze(x, prio)
    }

    fn query_count(&self) -> u64 {
        (**self).query_count()
    }

    fn provides_response_times(&self) -> bool {
        (**self).provides_response_times()
    }
}

/// Which analysis backs an oracle. Parses `rta`, `sim` and `exec:<command>`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum OracleKind {
    Rta,
    Simulation,
    External(String),
}

impl FromStr for OracleKind {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "rta" => Ok(OracleKind::Rta),
            "sim" => Ok(OracleKind::Simulation),
            _ => match s.strip_prefix("exec:") {
                Some(cmd) if !cmd.trim().is_empty() => Ok(OracleKind::External(cmd.to_string())),
                _ => Err(invalid(format!("unknown oracle `{s}`; expected rta, sim or exec:<cmd>"))),
            },
        }
    }
}

impl std::fmt::Display for OracleKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OracleKind::Rta => write!(f, "rta"),
            OracleKind::Simulation => write!(f, "sim"),
            OracleKind::External(cmd) => write!(f, "exec:{cmd}"),
        }
    }
}

/// Builds a fresh oracle instance (own counter, own cache) for `problem`.
pub fn build_oracle(kind: &OracleKind, problem: &Problem) -> Result<Box<dyn SchedulabilityOracle + Send>> {
    let ts = problem.taskset().clone();
    let design = problem.design().clone();
    Ok(match kind {
        OracleKind::Rta => Box::new(RtaOracle::new(ts, design)?),
        OracleKind::Simulation => Box::new(SimulationOracle::new(ts, design)?),
        OracleKind::External(cmd) => Box::new(spawn_external_oracle(cmd)?),
    })
}
