//! Distributed maximum (or minimum) tracking with witness pointers.
//!
//! Every node continuously republishes the best value it can currently
//! justify: either its own input at hop 0, or a neighbor's claim aged by
//! one hop. Claims older than `hop_cap` hops are dropped, which is what
//! lets the estimate *decrease* again after the true extremum falls: a
//! claim that no live input backs must circulate to survive, and every
//! round of circulation adds a hop, so it ages out after at most
//! `hop_cap` rounds. On the way it can spike estimates upward, but never
//! invent stability — quiescence certifies that every claim is one hop
//! older than a neighbor's, grounded in a real input.
//!
//! The cap trades memory for reactivity: tracking values in `0..=K` with
//! cap `H` on a degree-`d` node takes about `2·log₂K + log₂H + log₂d`
//! bits of state (see [`state_bits`]), and a drop of the maximum is
//! repaired within `H + diameter` rounds. Any `H ≥ diameter` preserves
//! correctness; small `H` recovers faster.
//!
//! The `parent` field makes estimates auditable: following parents from
//! any node must walk a strictly-hop-decreasing path that ends at a node
//! whose own input equals the estimate ([`pointer_chain`]).

use thiserror::Error;

use crate::engine::{
    Configuration, NodeUpdate, Protocol, ProtocolViolation, TransitionCtx, Value,
};
use crate::graph::PortLabeledGraph;

/// Hop budget used when nothing better is known. Callers that know the
/// network size should pass `n` instead: recovery from a dropped extremum
/// takes on the order of the cap, and `n` always dominates the diameter.
pub const DEFAULT_HOP_CAP: u32 = 1 << 16;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExtremumKind {
    Max,
    Min,
}

/// Where a node's current estimate came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Parent {
    /// The node's own input.
    SelfNode,
    /// The neighbor behind this port (0-based).
    Port(usize),
}

impl Parent {
    fn rank(self) -> usize {
        match self {
            Parent::SelfNode => 0,
            Parent::Port(k) => k + 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerState {
    /// Input value the state was computed from.
    pub input: Value,
    pub estimate: Value,
    pub parent: Parent,
    /// Certified distance to the input backing the estimate.
    pub hop: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TrackerMessage {
    pub estimate: Value,
    pub hop: u32,
}

impl TrackerState {
    pub fn message(&self) -> TrackerMessage {
        TrackerMessage { estimate: self.estimate, hop: self.hop }
    }
}

/// One tracker transition, independent of the engine plumbing so that
/// protocols embedding trackers can drive them directly.
pub(crate) fn tracker_step(
    kind: ExtremumKind,
    hop_cap: u32,
    input: Value,
    inbox: &[Option<TrackerMessage>],
) -> TrackerState {
    let mut best = TrackerState { input, estimate: input, parent: Parent::SelfNode, hop: 0 };
    for (port, msg) in inbox.iter().enumerate() {
        let Some(m) = msg else { continue };
        let aged = m.hop + 1;
        if aged > hop_cap {
            continue;
        }
        let candidate =
            TrackerState { input, estimate: m.estimate, parent: Parent::Port(port), hop: aged };
        let better = match kind {
            ExtremumKind::Max => candidate.estimate > best.estimate,
            ExtremumKind::Min => candidate.estimate < best.estimate,
        };
        let tie = candidate.estimate == best.estimate
            && (candidate.hop, candidate.parent.rank()) < (best.hop, best.parent.rank());
        if better || tie {
            best = candidate;
        }
    }
    best
}

/// The tracker as a standalone protocol; output is the current estimate.
#[derive(Debug, Clone, Copy)]
pub struct TrackerProtocol {
    pub kind: ExtremumKind,
    pub hop_cap: u32,
}

impl TrackerProtocol {
    pub fn max(hop_cap: u32) -> Self {
        TrackerProtocol { kind: ExtremumKind::Max, hop_cap }
    }

    pub fn min(hop_cap: u32) -> Self {
        TrackerProtocol { kind: ExtremumKind::Min, hop_cap }
    }
}

impl Protocol for TrackerProtocol {
    type Memory = TrackerState;
    type Output = Value;
    type Message = TrackerMessage;

    fn transition(
        &self,
        ctx: &TransitionCtx<'_, Self>,
    ) -> Result<NodeUpdate<Self>, ProtocolViolation> {
        let state = tracker_step(self.kind, self.hop_cap, ctx.input, ctx.inbox);
        Ok(NodeUpdate {
            memory: Some(state),
            output: Some(state.estimate),
            outbox: vec![Some(state.message()); ctx.degree],
        })
    }
}

/// Reflects a value through the top of the alphabet `0..=alphabet_max`.
/// Min-tracking `x` and max-tracking the mirrored inputs are the same
/// computation with estimates mirrored back.
pub fn mirror_value(alphabet_max: Value, v: Value) -> Value {
    alphabet_max - v
}

fn bits_for(max_value: u64) -> u32 {
    // Values 0..=max_value.
    u64::BITS - max_value.leading_zeros()
}

/// Memory footprint of one tracker state, in bits, for alphabet
/// `0..=alphabet_max`, the given hop cap, and a degree-`degree` node.
pub fn state_bits(alphabet_max: Value, hop_cap: u32, degree: usize) -> u32 {
    // input + estimate, hop in 0..=hop_cap, parent in {self} ∪ ports.
    2 * bits_for(alphabet_max as u64) + bits_for(hop_cap as u64) + bits_for(degree as u64)
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum WitnessError {
    #[error("node {node} has no tracker state")]
    MissingState { node: usize },
    #[error("node {node} (hop {hop}) points at node {next} (hop {next_hop}); hops must strictly decrease")]
    HopNotDecreasing { node: usize, hop: u32, next: usize, next_hop: u32 },
    #[error("chain from node {start} exceeds {limit} nodes")]
    TooLong { start: usize, limit: usize },
    #[error("node {node} claims its own input backs estimate {estimate}, but its input is {input}")]
    RootMismatch { node: usize, estimate: Value, input: Value },
    #[error("node {node} (estimate {estimate}) points at node {next} (estimate {next_estimate})")]
    EstimateMismatch { node: usize, estimate: Value, next: usize, next_estimate: Value },
}

/// Follows parent pointers from `start` and returns the nodes visited,
/// ending at the input that backs the estimate. Rejects chains whose hops
/// fail to decrease, whose estimates drift, or that run longer than the
/// node count (a cycle).
pub fn pointer_chain<P>(
    graph: &PortLabeledGraph,
    config: &Configuration<P>,
    state_of: impl Fn(usize) -> Option<TrackerState>,
    start: usize,
) -> Result<Vec<usize>, WitnessError>
where
    P: Protocol,
{
    let _ = config;
    let limit = graph.node_count();
    let mut chain = vec![start];
    let mut node = start;
    let mut state = state_of(node).ok_or(WitnessError::MissingState { node })?;
    loop {
        match state.parent {
            Parent::SelfNode => {
                if state.input != state.estimate {
                    return Err(WitnessError::RootMismatch {
                        node,
                        estimate: state.estimate,
                        input: state.input,
                    });
                }
                return Ok(chain);
            }
            Parent::Port(k) => {
                let next = graph.ports(node)[k].neighbor;
                let next_state = state_of(next).ok_or(WitnessError::MissingState { node: next })?;
                if next_state.hop >= state.hop {
                    return Err(WitnessError::HopNotDecreasing {
                        node,
                        hop: state.hop,
                        next,
                        next_hop: next_state.hop,
                    });
                }
                if next_state.estimate != state.estimate {
                    return Err(WitnessError::EstimateMismatch {
                        node,
                        estimate: state.estimate,
                        next,
                        next_estimate: next_state.estimate,
                    });
                }
                chain.push(next);
                if chain.len() > limit {
                    return Err(WitnessError::TooLong { start, limit });
                }
                node = next;
                state = next_state;
            }
        }
    }
}

/// Convenience wrapper reading states straight out of a tracker run's
/// configuration.
pub fn tracker_chain(
    graph: &PortLabeledGraph,
    config: &Configuration<TrackerProtocol>,
    start: usize,
) -> Result<Vec<usize>, WitnessError> {
    pointer_chain(graph, config, |i| config.nodes[i].memory, start)
}
