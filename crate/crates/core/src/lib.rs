//! Fine-grained distributed evolutionary computation with Evolvable Agents.
//!
//! Each candidate solution is an autonomous agent that evolves its own
//! solution against a per-node [`agent::Blackboard`]. Nodes exchange
//! solutions through a gossip protocol whose refresh interval follows the
//! measured round-trip time ([`gossip`]). A classic generational Island model
//! ([`ea::Island`]) is provided as the baseline. Both run over the
//! deterministic discrete-event simulator in [`netsim`], driven by the
//! [`experiment`] harness.

pub mod agent;
pub mod benchmarks;
pub mod ea;
pub mod experiment;
pub mod gossip;
pub mod netsim;

use std::fmt;

/// Index of a node in the simulated network.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(pub u32);

impl NodeId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub use agent::{Blackboard, EvolvableAgent};
pub use benchmarks::{make_instance, Genome, ProblemInstance, ProblemKind};
pub use ea::{Individual, Island, OperatorConfig};
pub use experiment::{run_trial, ExperimentConfig, Model, RunResult};
pub use gossip::{Cache, Contribution, Message, SchedulerState};
pub use netsim::{LinkSpec, SimNetwork};
