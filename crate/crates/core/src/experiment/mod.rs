//! Experiment configuration, repeated trials and result aggregation.

mod engine;
pub mod report;
pub mod stats;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::agent::AgentError;
use crate::benchmarks::{BenchmarkError, ProblemKind};
use crate::ea::{EaError, OperatorConfig};
use crate::mix64;
use crate::netsim::{LatencyStats, LinkSpec, NetError};

pub use engine::{EvagSim, Handled, IslandSim, TrialSim};
pub use report::{read_runs_csv, write_runs_csv, write_summary_csv, SummaryRow};
pub use stats::{summarize, welch_t, SummaryStats, WelchT};

pub const DEFAULT_POPULATION: usize = 512;
pub const DEFAULT_BUDGET: u64 = 2_500_000;
pub const DEFAULT_RUNS: usize = 30;
pub const DEFAULT_EVAL_COST: f64 = 1e-5;
pub const MIGRATION_FREQUENCIES: [u64; 4] = [25, 50, 75, 100];
pub const MAX_NODES: usize = 64;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Benchmark(#[from] BenchmarkError),
    #[error(transparent)]
    Ea(#[from] EaError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Model {
    EvolvableAgent,
    Island,
}

impl Model {
    pub fn name(self) -> &'static str {
        match self {
            Model::EvolvableAgent => "evag",
            Model::Island => "island",
        }
    }
}

impl fmt::Display for Model {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Model {
    type Err = ExperimentError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "evag" | "evolvable-agent" | "evolvableagent" | "agent" => Ok(Model::EvolvableAgent),
            "island" | "islands" => Ok(Model::Island),
            _ => Err(ExperimentError::Config(format!("unknown model `{s}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: Model,
    pub problem: ProblemKind,
    pub dim: usize,
    pub instance_seed: u64,
    pub nodes: usize,
    pub population: usize,
    pub budget: u64,
    pub operators: OperatorConfig,
    pub migration_frequency: u64,
    pub link: LinkSpec,
    /// Simulated CPU seconds charged per evaluation.
    pub eval_cost: f64,
    pub runs: usize,
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn new(model: Model, problem: ProblemKind) -> Self {
        ExperimentConfig {
            model,
            problem,
            dim: problem.default_dim(),
            instance_seed: 1,
            nodes: 1,
            population: DEFAULT_POPULATION,
            budget: DEFAULT_BUDGET,
            operators: OperatorConfig::default(),
            migration_frequency: 25,
            link: LinkSpec::default(),
            eval_cost: DEFAULT_EVAL_COST,
            runs: DEFAULT_RUNS,
            base_seed: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        let bad = |m: String| Err(ExperimentError::Config(m));
        if self.dim == 0 {
            return bad("dimension must be positive".into());
        }
        if self.dim > u16::MAX as usize {
            return bad(format!(
                "dimension {} exceeds the wire format limit",
                self.dim
            ));
        }
        if !(1..=MAX_NODES).contains(&self.nodes) {
            return bad(format!(
                "nodes must be in [1, {MAX_NODES}], got {}",
                self.nodes
            ));
        }
        if self.population < self.nodes {
            return bad(format!(
                "population {} is smaller than the node count {}",
                self.population, self.nodes
            ));
        }
        if self.population / self.nodes < 2 {
            return bad("every node needs at least 2 individuals".into());
        }
        if self.budget == 0 {
            return bad("budget must be positive".into());
        }
        let ops = &self.operators;
        if !(0.0..=1.0).contains(&ops.crossover_prob) || !(0.0..=1.0).contains(&ops.mutation_prob) {
            return bad("operator probabilities must lie in [0, 1]".into());
        }
        if ops.tournament_size < 2 {
            return bad("tournament size must be at least 2".into());
        }
        if self.model == Model::Island && !MIGRATION_FREQUENCIES.contains(&self.migration_frequency)
        {
            return bad(format!(
                "migration frequency must be one of {MIGRATION_FREQUENCIES:?}, got {}",
                self.migration_frequency
            ));
        }
        LinkSpec::new(self.link.latency, self.link.bandwidth)?;
        if !(self.eval_cost >= 0.0 && self.eval_cost.is_finite()) {
            return bad("evaluation cost must be a finite non-negative time".into());
        }
        if self.runs == 0 {
            return bad("runs must be positive".into());
        }
        Ok(())
    }

    /// Individuals per node: `population / nodes`, remainder to the lowest ids.
    pub fn node_shares(&self) -> Vec<usize> {
        node_shares(self.population, self.nodes)
    }

    pub fn run_seed(&self, run_index: usize) -> u64 {
        run_seed(self.base_seed, run_index)
    }

    /// Worst-case overshoot of the evaluation budget: one agent step for the
    /// agent model, one generation of the largest island otherwise.
    pub fn budget_slack(&self) -> u64 {
        match self.model {
            Model::EvolvableAgent => self.population as u64,
            Model::Island => self.node_shares().into_iter().max().unwrap_or(0) as u64,
        }
    }
}

pub fn node_shares(population: usize, nodes: usize) -> Vec<usize> {
    let (base, rem) = (population / nodes, population % nodes);
    (0..nodes).map(|i| base + usize::from(i < rem)).collect()
}

/// Per-run seed: `mix64(base_seed ^ mix64(run_index))`.
pub fn run_seed(base_seed: u64, run_index: usize) -> u64 {
    mix64(base_seed ^ mix64(run_index as u64))
}

/// Outcome of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct RunResult {
    pub model: Model,
    pub problem: ProblemKind,
    pub nodes: usize,
    pub run: usize,
    pub best_fitness: f64,
    pub evaluations_used: u64,
    pub simulated_duration: f64,
    pub migrant_latency: Option<LatencyStats>,
    pub node_best: Vec<f64>,
    pub node_evaluations: Vec<u64>,
    /// Agent steps (agent model) or generations times island size (islands).
    pub work_units: u64,
    pub messages_sent: u64,
}

impl RunResult {
    pub fn migrant_latency_mean(&self) -> Option<f64> {
        self.migrant_latency.map(|l| l.mean)
    }
}

/// Runs one trial to completion.
pub fn run_trial(cfg: &ExperimentConfig, run_index: usize) -> Result<RunResult, ExperimentError> {
    let mut sim = TrialSim::new(cfg, run_index)?;
    sim.run_to_end();
    Ok(sim.result())
}

/// Runs `cfg.runs` trials, in parallel where cores allow, ordered by run index.
pub fn run_all(cfg: &ExperimentConfig) -> Result<Vec<RunResult>, ExperimentError> {
    cfg.validate()?;
    let workers = std::thread::available_parallelism()
        .map(|n| n.get())
        .unwrap_or(1)
        .min(cfg.runs);
    if workers <= 1 {
        return (0..cfg.runs).map(|r| run_trial(cfg, r)).collect();
    }
    let mut slots: Vec<Option<Result<RunResult, ExperimentError>>> =
        (0..cfg.runs).map(|_| None).collect();
    std::thread::scope(|scope| {
        let chunks: Vec<_> = slots.chunks_mut(cfg.runs.div_ceil(workers)).collect();
        let mut start = 0;
        for chunk in chunks {
            let first = start;
            start += chunk.len();
            scope.spawn(move || {
                for (i, slot) in chunk.iter_mut().enumerate() {
                    *slot = Some(run_trial(cfg, first + i));
                }
            });
        }
    });
    slots
        .into_iter()
        .map(|s| s.expect("every run executed"))
        .collect()
}

/// Runs every node count in `nodes` with otherwise identical settings.
pub fn sweep(
    cfg: &ExperimentConfig,
    nodes: impl IntoIterator<Item = usize>,
) -> Result<Vec<RunResult>, ExperimentError> {
    let mut out = Vec::new();
    for n in nodes {
        let c = ExperimentConfig {
            nodes: n,
            ..cfg.clone()
        };
        out.extend(run_all(&c)?);
    }
    Ok(out)
}
