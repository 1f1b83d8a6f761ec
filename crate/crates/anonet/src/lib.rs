//! Protocols for computing on anonymous networks, plus a deterministic
//! synchronous simulator to run them.
//!
//! Nodes are identical automata on a connected port-labeled graph: no
//! identifiers, no global knowledge beyond each node's own degree and
//! input value. Computation proceeds in synchronous rounds; a protocol's
//! answer is the output field the nodes eventually agree on and never
//! change again.
//!
//! The crates's layers, bottom to top:
//!
//! * [`graph`] — port-labeled multigraphs and standard families.
//! * [`engine`] — the round-based simulator and the [`engine::Protocol`]
//!   trait, with a lock-step product combinator.
//! * [`extrema`] — distributed maximum/minimum tracking with
//!   parent-pointer witnesses, tolerant of input changes.
//! * [`averaging`] — pebble redistribution that drives every node's count
//!   to within one of the global mean, with interval outputs decoded from
//!   the extrema trackers.
//! * [`compiler`] — turns rational threshold predicates over value
//!   proportions into finite-state protocols built on averaging banks.
//! * [`frequency`] — exact proportion measurement via a growing family of
//!   time-shared averaging instances.
//! * [`verify`] — centralized oracles and audits used to cross-check runs.

pub mod averaging;
pub mod compiler;
pub mod engine;
pub mod extrema;
pub mod frequency;
pub mod graph;
pub mod verify;

pub use engine::{
    run, step, Configuration, EngineError, InputSchedule, NodeState, NodeUpdate, Protocol,
    ProtocolViolation, RunConfig, RunResult, TransitionCtx, Value,
};
pub use graph::{GraphError, GraphSpec, PortLabeledGraph};
pub use verify::{
    check_equivariance, check_replication, oracle_average, oracle_evaluate, oracle_proportions,
    verify_averaging_run, AveragingAudit, ProportionVector, VerifyError,
};
