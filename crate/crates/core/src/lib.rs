//! Online decentralized kernel learning over a multi-agent graph.
//!
//! Agents hold random-feature models, see one streaming sample per round and
//! cooperate through a linearized ADMM recursion. The communication-efficient
//! variant censors small updates and quantizes the rest.

pub mod comm;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod experiment;
pub mod features;
pub mod fixtures;
pub mod graph;
pub mod losses;
pub mod metrics;
pub mod reference;

pub use comm::{round_exchange, CensorSpec, CommCounters, CommSpec, QuantizerSpec};
pub use config::RunConfig;
pub use data::{AgentStreams, Dataset};
pub use engine::{Algorithm, AgentState, EtaSchedule, HyperParams, Sample, Simulation};
pub use error::{Error, Result};
pub use features::RfBasis;
pub use graph::Topology;
pub use losses::{LossKind, LossSpec};
