//! Simulation drivers: both models run as event handlers over one
//! [`SimNetwork`].
//!
//! Agent model: every node has a compute timer that steps its agents
//! round-robin, one evaluation per turn, and a gossip timer that fires every
//! `delta_t`. Island model: every node has a generation timer; every
//! `migration_frequency` generations the island sends a copy of its best
//! individual to a uniformly chosen peer. A trial ends as soon as the summed
//! evaluation count of all nodes reaches the budget.

use std::io::{self, Write};

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{ExperimentConfig, ExperimentError, Model, RunResult};
use crate::agent::{AgentError, Blackboard, EvolvableAgent, StepOutcome};
use crate::benchmarks::{make_instance, ProblemInstance};
use crate::ea::{migration_due, EaError, Individual, Island};
use crate::gossip::{decode_message, encode_message, Message, SchedulerState};
use crate::netsim::{EventKind, MessageClass, SimNetwork};
use crate::{mix64, NodeId};

const TAG_COMPUTE: u64 = 0;
const TAG_GOSSIP: u64 = 1;

const STREAM_EVOLUTION: u64 = 1;
const STREAM_GOSSIP: u64 = 2;
const STREAM_FAULTS: u64 = 3;

fn stream_rng(run_seed: u64, node: usize, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(mix64(run_seed ^ mix64((node as u64) << 8 | stream)))
}

/// What a single processed event did.
#[derive(Debug, Clone, PartialEq)]
pub enum Handled {
    AgentStep {
        node: NodeId,
        outcome: Option<StepOutcome>,
    },
    Tick {
        node: NodeId,
        sent_to: Option<NodeId>,
    },
    Ping {
        node: NodeId,
        from: NodeId,
        answered: bool,
    },
    Pong {
        node: NodeId,
        delta_t: Option<f64>,
    },
    Generation {
        node: NodeId,
        generation: u64,
        migrated_to: Option<NodeId>,
    },
    Migrant {
        node: NodeId,
        from: NodeId,
    },
    Malformed {
        node: NodeId,
    },
}

fn build_network(cfg: &ExperimentConfig, run_seed: u64) -> Result<SimNetwork, ExperimentError> {
    let mut net = SimNetwork::build_complete(cfg.nodes, cfg.link)?;
    net.set_fault_seed(mix64(run_seed ^ STREAM_FAULTS));
    Ok(net)
}

/// The Evolvable Agent model over a simulated network.
pub struct EvagSim {
    cfg: ExperimentConfig,
    run: usize,
    instance: ProblemInstance,
    net: SimNetwork,
    boards: Vec<Blackboard>,
    schedulers: Vec<SchedulerState>,
    evo_rngs: Vec<ChaCha8Rng>,
    gossip_rngs: Vec<ChaCha8Rng>,
    cursors: Vec<usize>,
    total_evaluations: u64,
    agent_steps: u64,
    finished: bool,
}

impl EvagSim {
    pub fn new(cfg: &ExperimentConfig, run: usize) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let instance = make_instance(cfg.problem, cfg.dim, cfg.instance_seed)?;
        let seed = cfg.run_seed(run);
        let mut net = build_network(cfg, seed)?;
        let mut boards = Vec::with_capacity(cfg.nodes);
        let mut schedulers = Vec::with_capacity(cfg.nodes);
        let mut evo_rngs = Vec::with_capacity(cfg.nodes);
        let mut gossip_rngs = Vec::with_capacity(cfg.nodes);
        let mut next_agent = 0u32;
        for (node, share) in cfg.node_shares().into_iter().enumerate() {
            let id = NodeId(node as u32);
            let mut rng = stream_rng(seed, node, STREAM_EVOLUTION);
            let mut bb = Blackboard::new(id);
            for _ in 0..share {
                let s = Individual::random(&instance, &mut rng);
                bb.register_agent(EvolvableAgent::new(next_agent, s))?;
                next_agent += 1;
            }
            let sched = SchedulerState::complete(id, cfg.nodes).with_expected_dim(cfg.dim);
            net.schedule_timer(id, cfg.eval_cost, TAG_COMPUTE);
            if cfg.nodes > 1 {
                net.schedule_timer(id, sched.delta_t(), TAG_GOSSIP);
            }
            boards.push(bb);
            schedulers.push(sched);
            evo_rngs.push(rng);
            gossip_rngs.push(stream_rng(seed, node, STREAM_GOSSIP));
        }
        Ok(EvagSim {
            cfg: cfg.clone(),
            run,
            instance,
            net,
            boards,
            schedulers,
            evo_rngs,
            gossip_rngs,
            cursors: vec![0; cfg.nodes],
            total_evaluations: 0,
            agent_steps: 0,
            finished: false,
        })
    }

    pub fn network(&self) -> &SimNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        &mut self.net
    }

    pub fn boards(&self) -> &[Blackboard] {
        &self.boards
    }

    pub fn schedulers(&self) -> &[SchedulerState] {
        &self.schedulers
    }

    pub fn instance(&self) -> &ProblemInstance {
        &self.instance
    }

    pub fn total_evaluations(&self) -> u64 {
        self.total_evaluations
    }

    pub fn agent_steps(&self) -> u64 {
        self.agent_steps
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn agent_turn(&mut self, node: usize) -> Handled {
        let id = NodeId(node as u32);
        let bb = &mut self.boards[node];
        let slot = self.cursors[node];
        self.cursors[node] = (slot + 1) % bb.agent_count();
        let agent = bb.agent_at(slot).expect("cursor within registry");
        let outcome = match bb.agent_step(
            agent,
            &self.instance,
            &self.cfg.operators,
            &mut self.evo_rngs[node],
        ) {
            Ok(o) => Some(o),
            // A node whose pool is still too small idles until migrants arrive.
            Err(AgentError::Ea(EaError::PoolTooSmall(_))) => None,
            Err(e) => panic!("agent step failed: {e}"),
        };
        if outcome.is_some() {
            self.agent_steps += 1;
            self.total_evaluations += 1;
            if self.total_evaluations >= self.cfg.budget {
                self.finished = true;
            }
        }
        let now = self.net.now();
        self.net
            .schedule_timer(id, now + self.cfg.eval_cost, TAG_COMPUTE);
        Handled::AgentStep { node: id, outcome }
    }

    fn gossip_tick(&mut self, node: usize) -> Handled {
        let id = NodeId(node as u32);
        let now = self.net.now();
        let out = self.schedulers[node].tick(&self.boards[node], &mut self.gossip_rngs[node], now);
        let sent_to = out.map(|(target, msg)| {
            self.net
                .send(id, target, MessageClass::Migrant, encode_message(&msg))
                .expect("complete graph has every link");
            target
        });
        let next = now + self.schedulers[node].delta_t();
        self.net.schedule_timer(id, next, TAG_GOSSIP);
        Handled::Tick { node: id, sent_to }
    }

    fn deliver(&mut self, node: usize, payload: &[u8]) -> Handled {
        let id = NodeId(node as u32);
        let now = self.net.now();
        match decode_message(payload) {
            Ok(Message::Ping {
                token,
                contribution,
            }) => {
                let from = contribution.address();
                let reply = self.schedulers[node].handle_ping(
                    self.boards[node].cache_mut(),
                    token,
                    contribution,
                    now,
                );
                let answered = reply.is_some();
                if let Some((to, pong)) = reply {
                    // The sender may be unknown to the topology if the
                    // contribution lied about its address; drop in that case.
                    if self
                        .net
                        .send(id, to, MessageClass::Ack, encode_message(&pong))
                        .is_err()
                    {
                        self.schedulers[node].dropped_malformed += 1;
                    }
                }
                Handled::Ping {
                    node: id,
                    from,
                    answered,
                }
            }
            Ok(Message::Pong { token, .. }) => Handled::Pong {
                node: id,
                delta_t: self.schedulers[node].handle_pong(token, now),
            },
            Err(_) => {
                self.schedulers[node].dropped_malformed += 1;
                Handled::Malformed { node: id }
            }
        }
    }

    /// Processes one event; `None` once the budget is spent or no events remain.
    pub fn step(&mut self) -> Option<Handled> {
        if self.finished {
            return None;
        }
        let Some(ev) = self.net.step() else {
            self.finished = true;
            return None;
        };
        let node = ev.target.index();
        Some(match ev.kind {
            EventKind::Timer { tag: TAG_COMPUTE } => self.agent_turn(node),
            EventKind::Timer { .. } => self.gossip_tick(node),
            EventKind::Deliver { payload, .. } => self.deliver(node, &payload),
        })
    }

    pub fn result(&self) -> RunResult {
        let node_best: Vec<f64> = self.boards.iter().map(|b| b.best_fitness()).collect();
        RunResult {
            model: Model::EvolvableAgent,
            problem: self.cfg.problem,
            nodes: self.cfg.nodes,
            run: self.run,
            best_fitness: node_best.iter().copied().fold(f64::INFINITY, f64::min),
            evaluations_used: self.total_evaluations,
            simulated_duration: self.net.now(),
            migrant_latency: self.net.latency_stats(MessageClass::Migrant).ok(),
            node_best,
            node_evaluations: self.boards.iter().map(|b| b.local_evaluations()).collect(),
            work_units: self.agent_steps,
            messages_sent: self.net.messages_sent(),
        }
    }
}

/// The Island model over a simulated network.
pub struct IslandSim {
    cfg: ExperimentConfig,
    run: usize,
    instance: ProblemInstance,
    net: SimNetwork,
    islands: Vec<Island>,
    rngs: Vec<ChaCha8Rng>,
    next_token: u64,
    total_evaluations: u64,
    dropped: u64,
    finished: bool,
}

impl IslandSim {
    pub fn new(cfg: &ExperimentConfig, run: usize) -> Result<Self, ExperimentError> {
        cfg.validate()?;
        let instance = make_instance(cfg.problem, cfg.dim, cfg.instance_seed)?;
        let seed = cfg.run_seed(run);
        let mut net = build_network(cfg, seed)?;
        let mut islands = Vec::with_capacity(cfg.nodes);
        let mut rngs = Vec::with_capacity(cfg.nodes);
        for (node, share) in cfg.node_shares().into_iter().enumerate() {
            let id = NodeId(node as u32);
            let mut rng = stream_rng(seed, node, STREAM_EVOLUTION);
            islands.push(Island::random(id, share, &instance, &mut rng)?);
            rngs.push(rng);
            net.schedule_timer(id, share as f64 * cfg.eval_cost, TAG_COMPUTE);
        }
        Ok(IslandSim {
            cfg: cfg.clone(),
            run,
            instance,
            net,
            islands,
            rngs,
            next_token: 0,
            total_evaluations: 0,
            dropped: 0,
            finished: false,
        })
    }

    pub fn network(&self) -> &SimNetwork {
        &self.net
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        &mut self.net
    }

    pub fn islands(&self) -> &[Island] {
        &self.islands
    }

    pub fn total_evaluations(&self) -> u64 {
        self.total_evaluations
    }

    pub fn is_finished(&self) -> bool {
        self.finished
    }

    fn generation(&mut self, node: usize) -> Handled {
        let id = NodeId(node as u32);
        let island = &mut self.islands[node];
        let rng = &mut self.rngs[node];
        let report = island
            .run_generation(&self.instance, &self.cfg.operators, rng)
            .expect("validated island configuration");
        self.total_evaluations += report.evaluations;
        let generation = island.generation;
        let mut migrated_to = None;
        if self.total_evaluations >= self.cfg.budget {
            self.finished = true;
        } else if self.cfg.nodes > 1 && migration_due(generation, self.cfg.migration_frequency) {
            let peers: Vec<NodeId> = (0..self.cfg.nodes as u32)
                .map(NodeId)
                .filter(|p| *p != id)
                .collect();
            let target = *peers.choose(rng).expect("at least one peer");
            let contribution = island.migration_event().expect("island is evaluated");
            let msg = Message::Ping {
                token: self.next_token,
                contribution,
            };
            self.next_token += 1;
            self.net
                .send(id, target, MessageClass::Migrant, encode_message(&msg))
                .expect("complete graph has every link");
            migrated_to = Some(target);
        }
        let now = self.net.now();
        let cost = island.population.len() as f64 * self.cfg.eval_cost;
        self.net.schedule_timer(id, now + cost, TAG_COMPUTE);
        Handled::Generation {
            node: id,
            generation,
            migrated_to,
        }
    }

    pub fn step(&mut self) -> Option<Handled> {
        if self.finished {
            return None;
        }
        let Some(ev) = self.net.step() else {
            self.finished = true;
            return None;
        };
        let node = ev.target.index();
        Some(match ev.kind {
            EventKind::Timer { .. } => self.generation(node),
            EventKind::Deliver { payload, .. } => match decode_message(&payload) {
                Ok(Message::Ping { contribution, .. })
                    if contribution.is_well_formed(Some(self.cfg.dim)) =>
                {
                    let from = contribution.address();
                    self.islands[node].receive(contribution.solution().clone());
                    Handled::Migrant {
                        node: ev.target,
                        from,
                    }
                }
                _ => {
                    self.dropped += 1;
                    Handled::Malformed { node: ev.target }
                }
            },
        })
    }

    pub fn result(&self) -> RunResult {
        let node_best: Vec<f64> = self
            .islands
            .iter()
            .map(|i| i.elite.fitness_or_inf())
            .collect();
        let node_evaluations: Vec<u64> = self.islands.iter().map(|i| i.evaluations).collect();
        RunResult {
            model: Model::Island,
            problem: self.cfg.problem,
            nodes: self.cfg.nodes,
            run: self.run,
            best_fitness: node_best.iter().copied().fold(f64::INFINITY, f64::min),
            evaluations_used: self.total_evaluations,
            simulated_duration: self.net.now(),
            migrant_latency: self.net.latency_stats(MessageClass::Migrant).ok(),
            node_best,
            work_units: self
                .islands
                .iter()
                .map(|i| i.generation * i.population.len() as u64)
                .sum(),
            node_evaluations,
            messages_sent: self.net.messages_sent(),
        }
    }
}

/// Either model behind one interface.
pub enum TrialSim {
    Evag(EvagSim),
    Island(IslandSim),
}

impl TrialSim {
    pub fn new(cfg: &ExperimentConfig, run: usize) -> Result<Self, ExperimentError> {
        Ok(match cfg.model {
            Model::EvolvableAgent => TrialSim::Evag(EvagSim::new(cfg, run)?),
            Model::Island => TrialSim::Island(IslandSim::new(cfg, run)?),
        })
    }

    pub fn step(&mut self) -> Option<Handled> {
        match self {
            TrialSim::Evag(s) => s.step(),
            TrialSim::Island(s) => s.step(),
        }
    }

    pub fn run_to_end(&mut self) {
        while self.step().is_some() {}
    }

    pub fn result(&self) -> RunResult {
        match self {
            TrialSim::Evag(s) => s.result(),
            TrialSim::Island(s) => s.result(),
        }
    }

    pub fn network(&self) -> &SimNetwork {
        match self {
            TrialSim::Evag(s) => s.network(),
            TrialSim::Island(s) => s.network(),
        }
    }

    pub fn network_mut(&mut self) -> &mut SimNetwork {
        match self {
            TrialSim::Evag(s) => s.network_mut(),
            TrialSim::Island(s) => s.network_mut(),
        }
    }

    pub fn enable_event_log(&mut self) {
        self.network_mut().enable_log(false);
    }

    pub fn write_event_log<W: Write>(&self, w: &mut W) -> io::Result<()> {
        self.network().write_log(w)
    }
}
