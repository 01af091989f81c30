//! Evolvable Agents and the per-node Blackboard.
//!
//! Every agent owns one solution and improves it greedily: it draws parents
//! from the node's panmictic pool (the other agents' current solutions plus
//! the migrants held in the gossip cache), recombines and mutates them into a
//! single offspring, evaluates it, and keeps it only if it beats its own
//! solution. The Blackboard records the best solution seen on the node and
//! counts the evaluations its agents perform.

use std::collections::HashMap;

use rand::Rng;
use thiserror::Error;

use crate::benchmarks::ProblemInstance;
use crate::ea::{breed, EaError, Individual, OperatorConfig, SelectionPool};
use crate::gossip::Cache;
use crate::NodeId;

pub type AgentId = u32;

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("agent {0} is already registered")]
    DuplicateAgent(AgentId),
    #[error("agent {0} is not registered on this blackboard")]
    UnknownAgent(AgentId),
    #[error("blackboard has no registered agents")]
    EmptyBlackboard,
    #[error("agent solution has not been evaluated")]
    Unevaluated,
    #[error(transparent)]
    Ea(#[from] EaError),
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvolvableAgent {
    pub id: AgentId,
    current: Individual,
}

impl EvolvableAgent {
    pub fn new(id: AgentId, current: Individual) -> Self {
        EvolvableAgent { id, current }
    }

    pub fn current(&self) -> &Individual {
        &self.current
    }
}

/// Result of one agent loop iteration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub previous_fitness: f64,
    pub offspring_fitness: f64,
    pub replaced: bool,
    pub new_node_best: bool,
}

/// Per-node shared state.
#[derive(Debug, Clone)]
pub struct Blackboard {
    node_id: NodeId,
    agents: Vec<EvolvableAgent>,
    slots: HashMap<AgentId, usize>,
    cache: Cache,
    best: Option<Individual>,
    local_evaluations: u64,
}

/// Agents' solutions in registration order followed by cache entries in
/// node-id order.
pub struct PoolView<'a> {
    agents: &'a [EvolvableAgent],
    migrants: Vec<&'a Individual>,
}

impl SelectionPool for PoolView<'_> {
    fn pool_len(&self) -> usize {
        self.agents.len() + self.migrants.len()
    }

    fn member(&self, index: usize) -> &Individual {
        match self.agents.get(index) {
            Some(a) => &a.current,
            None => self.migrants[index - self.agents.len()],
        }
    }
}

impl Blackboard {
    pub fn new(node_id: NodeId) -> Self {
        Blackboard {
            node_id,
            agents: Vec::new(),
            slots: HashMap::new(),
            cache: Cache::new(node_id),
            best: None,
            local_evaluations: 0,
        }
    }

    pub fn node_id(&self) -> NodeId {
        self.node_id
    }

    pub fn cache(&self) -> &Cache {
        &self.cache
    }

    pub fn cache_mut(&mut self) -> &mut Cache {
        &mut self.cache
    }

    pub fn agents(&self) -> &[EvolvableAgent] {
        &self.agents
    }

    pub fn agent_count(&self) -> usize {
        self.agents.len()
    }

    pub fn agent(&self, id: AgentId) -> Option<&EvolvableAgent> {
        self.slots.get(&id).map(|&s| &self.agents[s])
    }

    pub fn best(&self) -> Option<&Individual> {
        self.best.as_ref()
    }

    pub fn best_fitness(&self) -> f64 {
        self.best
            .as_ref()
            .map_or(f64::INFINITY, |b| b.fitness_or_inf())
    }

    pub fn local_evaluations(&self) -> u64 {
        self.local_evaluations
    }

    /// Local evaluations plus every cached peer's last reported count. Cached
    /// counts lag, so this never exceeds the true global total.
    pub fn global_evaluations(&self) -> u64 {
        self.local_evaluations + self.cache.total_evaluations()
    }

    pub fn register_agent(&mut self, agent: EvolvableAgent) -> Result<(), AgentError> {
        if self.slots.contains_key(&agent.id) {
            return Err(AgentError::DuplicateAgent(agent.id));
        }
        if agent.current.fitness.is_none() {
            return Err(AgentError::Unevaluated);
        }
        self.offer_best(&agent.current);
        self.slots.insert(agent.id, self.agents.len());
        self.agents.push(agent);
        Ok(())
    }

    fn offer_best(&mut self, s: &Individual) -> bool {
        let better = match &self.best {
            Some(b) => s.is_better_than(b),
            None => true,
        };
        if better {
            self.best = Some(s.clone());
        }
        better
    }

    /// Counts one evaluation and keeps `s` as the node best when it is
    /// strictly better. Returns whether the best changed.
    pub fn record_evaluation(&mut self, s: &Individual) -> Result<bool, AgentError> {
        if s.fitness.is_none() {
            return Err(AgentError::Unevaluated);
        }
        self.local_evaluations += 1;
        Ok(self.offer_best(s))
    }

    pub fn pool_view(&self) -> Result<PoolView<'_>, AgentError> {
        if self.agents.is_empty() {
            return Err(AgentError::EmptyBlackboard);
        }
        Ok(PoolView {
            agents: &self.agents,
            migrants: self.cache.entries().map(|c| c.solution()).collect(),
        })
    }

    /// Everything an agent may select from, materialized.
    pub fn selection_pool(&self) -> Result<Vec<&Individual>, AgentError> {
        let mut pool: Vec<&Individual> = self.agents.iter().map(|a| &a.current).collect();
        if pool.is_empty() {
            return Err(AgentError::EmptyBlackboard);
        }
        pool.extend(self.cache.entries().map(|c| c.solution()));
        Ok(pool)
    }

    pub fn random_solution<R: Rng + ?Sized>(&self, rng: &mut R) -> Option<&Individual> {
        if self.agents.is_empty() {
            return None;
        }
        Some(&self.agents[rng.random_range(0..self.agents.len())].current)
    }

    /// Agent id at registration position `slot`, for round-robin stepping.
    pub fn agent_at(&self, slot: usize) -> Option<AgentId> {
        self.agents.get(slot).map(|a| a.id)
    }

    /// One iteration of the agent loop for `id`: select, recombine, mutate,
    /// evaluate once, update the node best, and replace the agent's solution
    /// on strict improvement.
    pub fn agent_step<R: Rng + ?Sized>(
        &mut self,
        id: AgentId,
        instance: &ProblemInstance,
        cfg: &OperatorConfig,
        rng: &mut R,
    ) -> Result<StepOutcome, AgentError> {
        let slot = *self.slots.get(&id).ok_or(AgentError::UnknownAgent(id))?;
        let child = {
            let view = self.pool_view()?;
            breed(&view, instance, cfg, rng)?
        };
        let offspring = Individual::from_genome(child, instance).map_err(AgentError::from)?;
        let new_node_best = self.record_evaluation(&offspring)?;
        let agent = &mut self.agents[slot];
        let previous_fitness = agent.current.fitness_or_inf();
        let offspring_fitness = offspring.fitness_or_inf();
        let replaced = offspring_fitness < previous_fitness;
        if replaced {
            agent.current = offspring;
        }
        Ok(StepOutcome {
            previous_fitness,
            offspring_fitness,
            replaced,
            new_node_best,
        })
    }
}
