//! Synchronous execution of identical automata on a port-labeled graph.
//!
//! Every node runs the same degree-parameterized automaton. A node's state
//! is the tuple (initial value, memory, output, outgoing message per port);
//! memory, output, and messages all start as the distinguished empty value,
//! modeled as `None`. One [`step`] evaluates every node's transition against
//! the round-t snapshot: the message arriving on node i's port k is whatever
//! the neighbor behind that port placed on the shared edge's far end in the
//! previous round. Transitions never see node identities, only degree,
//! input, memory, and the inbox, so the simulation is anonymous by
//! construction.
//!
//! [`run`] iterates steps until the configuration reaches an exact fixed
//! point (all node states including in-flight messages repeat), which is
//! absorbing because transitions are deterministic, or until `max_rounds`.
//!
//! With the `parallel` feature the per-round node map can run on rayon;
//! results are identical either way because every node reads only the
//! previous snapshot.

use std::collections::BTreeMap;
use std::fmt;

use thiserror::Error;

#[cfg(feature = "parallel")]
use rayon::prelude::*;

use crate::graph::PortLabeledGraph;

/// Alphabet element. Inputs, tracker values, and pebble counts are all
/// small nonnegative integers.
pub type Value = u32;

/// Fault raised by an automaton transition when its own protocol rules are
/// broken (malformed message, out-of-range input, unmatched reply).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProtocolViolation(pub String);

impl fmt::Display for ProtocolViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ProtocolViolation {}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum EngineError {
    #[error("expected {expected} initial values, got {got}")]
    InputLength { expected: usize, got: usize },
    #[error("node {node}, round {round}: transition produced {got} messages for degree {expected}")]
    OutputArity { node: usize, round: usize, expected: usize, got: usize },
    #[error("node {node}, round {round}: {violation}")]
    Protocol { node: usize, round: usize, violation: ProtocolViolation },
    #[error("schedule names node {node}, but the graph has {n} nodes")]
    ScheduleNode { node: usize, n: usize },
}

/// Everything a transition may read. `input` is the node's current input:
/// the immutable initial value unless an [`InputSchedule`] overrides it for
/// the round being entered.
pub struct TransitionCtx<'a, P: Protocol + ?Sized> {
    pub round: usize,
    pub degree: usize,
    pub input: Value,
    pub memory: Option<&'a P::Memory>,
    pub output: Option<&'a P::Output>,
    pub inbox: &'a [Option<P::Message>],
}

/// What a transition writes: next memory, next output, and one outgoing
/// message slot per port (`outbox.len()` must equal the degree).
pub struct NodeUpdate<P: Protocol + ?Sized> {
    pub memory: Option<P::Memory>,
    pub output: Option<P::Output>,
    pub outbox: Vec<Option<P::Message>>,
}

/// A family of identical automata, one per degree. Implementations must be
/// pure: the same context always yields the same update.
pub trait Protocol: Send + Sync {
    type Memory: Clone + PartialEq + fmt::Debug + Send + Sync;
    type Output: Clone + PartialEq + fmt::Debug + Send + Sync;
    type Message: Clone + PartialEq + fmt::Debug + Send + Sync;

    fn transition(&self, ctx: &TransitionCtx<'_, Self>) -> Result<NodeUpdate<Self>, ProtocolViolation>;
}

/// Full per-node state at some round.
pub struct NodeState<P: Protocol> {
    pub initial: Value,
    pub memory: Option<P::Memory>,
    pub output: Option<P::Output>,
    pub outbox: Vec<Option<P::Message>>,
}

impl<P: Protocol> Clone for NodeState<P> {
    fn clone(&self) -> Self {
        NodeState {
            initial: self.initial,
            memory: self.memory.clone(),
            output: self.output.clone(),
            outbox: self.outbox.clone(),
        }
    }
}

impl<P: Protocol> PartialEq for NodeState<P> {
    fn eq(&self, other: &Self) -> bool {
        self.initial == other.initial
            && self.memory == other.memory
            && self.output == other.output
            && self.outbox == other.outbox
    }
}

impl<P: Protocol> fmt::Debug for NodeState<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("NodeState")
            .field("initial", &self.initial)
            .field("memory", &self.memory)
            .field("output", &self.output)
            .field("outbox", &self.outbox)
            .finish()
    }
}

/// Global snapshot: round counter plus every node's state. In-flight
/// messages are exactly the outbox fields.
pub struct Configuration<P: Protocol> {
    pub round: usize,
    pub nodes: Vec<NodeState<P>>,
}

impl<P: Protocol> Clone for Configuration<P> {
    fn clone(&self) -> Self {
        Configuration { round: self.round, nodes: self.nodes.clone() }
    }
}

impl<P: Protocol> PartialEq for Configuration<P> {
    fn eq(&self, other: &Self) -> bool {
        self.round == other.round && self.nodes == other.nodes
    }
}

impl<P: Protocol> fmt::Debug for Configuration<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Configuration")
            .field("round", &self.round)
            .field("nodes", &self.nodes)
            .finish()
    }
}

/// Scripted exogenous input changes: entry (round, node, value) means the
/// node's input reads as `value` from that round on, until overridden.
/// Rounds earlier than any entry fall back to the node's initial value.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InputSchedule {
    per_node: BTreeMap<usize, BTreeMap<usize, Value>>,
    last_round: usize,
}

impl InputSchedule {
    pub fn new(entries: impl IntoIterator<Item = (usize, usize, Value)>) -> Self {
        let mut s = InputSchedule::default();
        for (round, node, value) in entries {
            s.per_node.entry(node).or_default().insert(round, value);
            s.last_round = s.last_round.max(round);
        }
        s
    }

    pub fn is_empty(&self) -> bool {
        self.per_node.is_empty()
    }

    /// Round after which no further change happens.
    pub fn last_round(&self) -> usize {
        self.last_round
    }

    pub fn max_node(&self) -> Option<usize> {
        self.per_node.keys().next_back().copied()
    }

    /// Effective input of `node` at `round` given its fallback initial value.
    pub fn effective(&self, node: usize, round: usize, initial: Value) -> Value {
        self.per_node
            .get(&node)
            .and_then(|m| m.range(..=round).next_back())
            .map(|(_, &v)| v)
            .unwrap_or(initial)
    }
}

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub max_rounds: usize,
    pub capture_trace: bool,
    /// Evaluate node transitions on rayon. Only effective with the
    /// `parallel` feature; ignored otherwise.
    pub parallel: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            max_rounds: 100_000,
            capture_trace: false,
            parallel: cfg!(feature = "parallel"),
        }
    }
}

pub struct RunResult<P: Protocol> {
    /// True when the run reached an exact global fixed point.
    pub quiescent: bool,
    /// Steps executed. When quiescent, the first repeated configuration
    /// appeared after this many rounds.
    pub rounds: usize,
    pub outputs: Vec<Option<P::Output>>,
    pub trace: Option<Vec<Configuration<P>>>,
}

impl<P: Protocol> fmt::Debug for RunResult<P> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("RunResult")
            .field("quiescent", &self.quiescent)
            .field("rounds", &self.rounds)
            .field("outputs", &self.outputs)
            .field("trace_len", &self.trace.as_ref().map(|t| t.len()))
            .finish()
    }
}

impl<P: Protocol> RunResult<P> {
    pub fn final_config(&self) -> Option<&Configuration<P>> {
        self.trace.as_ref().and_then(|t| t.last())
    }
}

/// Round-0 configuration: all memories, outputs, and messages empty.
pub fn initial_configuration<P: Protocol>(
    graph: &PortLabeledGraph,
    inputs: &[Value],
) -> Result<Configuration<P>, EngineError> {
    if inputs.len() != graph.node_count() {
        return Err(EngineError::InputLength { expected: graph.node_count(), got: inputs.len() });
    }
    let nodes = inputs
        .iter()
        .enumerate()
        .map(|(i, &x)| NodeState {
            initial: x,
            memory: None,
            output: None,
            outbox: vec![None; graph.degree(i)],
        })
        .collect();
    Ok(Configuration { round: 0, nodes })
}

fn eval_node<P: Protocol>(
    graph: &PortLabeledGraph,
    protocol: &P,
    config: &Configuration<P>,
    schedule: Option<&InputSchedule>,
    node: usize,
) -> Result<NodeState<P>, EngineError> {
    let state = &config.nodes[node];
    let degree = graph.degree(node);
    let inbox: Vec<Option<P::Message>> = graph
        .ports(node)
        .iter()
        .map(|t| config.nodes[t.neighbor].outbox[t.reverse_port].clone())
        .collect();
    let entering = config.round + 1;
    let input = match schedule {
        Some(s) => s.effective(node, entering, state.initial),
        None => state.initial,
    };
    let ctx = TransitionCtx::<P> {
        round: config.round,
        degree,
        input,
        memory: state.memory.as_ref(),
        output: state.output.as_ref(),
        inbox: &inbox,
    };
    let update = protocol
        .transition(&ctx)
        .map_err(|violation| EngineError::Protocol { node, round: config.round, violation })?;
    if update.outbox.len() != degree {
        return Err(EngineError::OutputArity {
            node,
            round: config.round,
            expected: degree,
            got: update.outbox.len(),
        });
    }
    Ok(NodeState {
        initial: state.initial,
        memory: update.memory,
        output: update.output,
        outbox: update.outbox,
    })
}

/// Advances every node one synchronous round against the round-t snapshot.
pub fn step<P: Protocol>(
    graph: &PortLabeledGraph,
    protocol: &P,
    config: &Configuration<P>,
    schedule: Option<&InputSchedule>,
    parallel: bool,
) -> Result<Configuration<P>, EngineError> {
    let n = graph.node_count();
    #[cfg(feature = "parallel")]
    let nodes = if parallel {
        (0..n)
            .into_par_iter()
            .map(|i| eval_node(graph, protocol, config, schedule, i))
            .collect::<Result<Vec<_>, _>>()?
    } else {
        (0..n)
            .map(|i| eval_node(graph, protocol, config, schedule, i))
            .collect::<Result<Vec<_>, _>>()?
    };
    #[cfg(not(feature = "parallel"))]
    let nodes = {
        let _ = parallel;
        (0..n)
            .map(|i| eval_node(graph, protocol, config, schedule, i))
            .collect::<Result<Vec<_>, _>>()?
    };
    Ok(Configuration { round: config.round + 1, nodes })
}

/// Runs from the round-0 configuration until quiescence or `max_rounds`.
///
/// Quiescence is an exact repeat of all node states including in-flight
/// messages; with a schedule attached it is additionally deferred until no
/// further input change is pending.
pub fn run<P: Protocol>(
    graph: &PortLabeledGraph,
    protocol: &P,
    inputs: &[Value],
    schedule: Option<&InputSchedule>,
    cfg: &RunConfig,
) -> Result<RunResult<P>, EngineError> {
    if let Some(s) = schedule {
        if let Some(node) = s.max_node() {
            if node >= graph.node_count() {
                return Err(EngineError::ScheduleNode { node, n: graph.node_count() });
            }
        }
    }
    let mut config = initial_configuration::<P>(graph, inputs)?;
    let mut trace = if cfg.capture_trace { Some(vec![config.clone()]) } else { None };
    for _ in 0..cfg.max_rounds {
        let next = step(graph, protocol, &config, schedule, cfg.parallel)?;
        let inputs_settled = schedule.map_or(true, |s| s.last_round() <= next.round);
        let stable = inputs_settled && next.nodes == config.nodes;
        if let Some(t) = trace.as_mut() {
            t.push(next.clone());
        }
        config = next;
        if stable {
            return Ok(RunResult {
                quiescent: true,
                rounds: config.round,
                outputs: config.nodes.iter().map(|s| s.output.clone()).collect(),
                trace,
            });
        }
    }
    Ok(RunResult {
        quiescent: false,
        rounds: config.round,
        outputs: config.nodes.iter().map(|s| s.output.clone()).collect(),
        trace,
    })
}

/// Runs exactly `rounds` steps and returns every configuration from round 0
/// on, regardless of quiescence. Used by trajectory comparisons.
pub fn run_trace<P: Protocol>(
    graph: &PortLabeledGraph,
    protocol: &P,
    inputs: &[Value],
    schedule: Option<&InputSchedule>,
    rounds: usize,
    parallel: bool,
) -> Result<Vec<Configuration<P>>, EngineError> {
    let mut config = initial_configuration::<P>(graph, inputs)?;
    let mut trace = Vec::with_capacity(rounds + 1);
    trace.push(config.clone());
    for _ in 0..rounds {
        config = step(graph, protocol, &config, schedule, parallel)?;
        trace.push(config.clone());
    }
    Ok(trace)
}

pub mod product {
    //! Lock-step composition: several protocol instances run inside each
    //! node, their per-port messages concatenated into one wire message.
    //! Each instance receives its own initial value, derived from the
    //! node's value by a [`Fanout`].

    use super::{NodeUpdate, Protocol, ProtocolViolation, TransitionCtx, Value};

    /// Derives the initial value fed to instance `idx` from the node's own
    /// input value.
    pub trait Fanout: Send + Sync {
        fn instance_input(&self, idx: usize, x: Value) -> Value;
    }

    /// Feeds every instance the node's own value unchanged.
    #[derive(Debug, Clone, Default)]
    pub struct SameInput;

    impl Fanout for SameInput {
        fn instance_input(&self, _idx: usize, x: Value) -> Value {
            x
        }
    }

    pub struct Product<P, F> {
        pub parts: Vec<P>,
        pub fanout: F,
    }

    impl<P: Protocol, F: Fanout> Protocol for Product<P, F> {
        type Memory = Vec<Option<P::Memory>>;
        type Output = Vec<Option<P::Output>>;
        type Message = Vec<Option<P::Message>>;

        fn transition(
            &self,
            ctx: &TransitionCtx<'_, Self>,
        ) -> Result<NodeUpdate<Self>, ProtocolViolation> {
            let m = self.parts.len();
            let d = ctx.degree;
            let mut memories = Vec::with_capacity(m);
            let mut outputs = Vec::with_capacity(m);
            let mut outboxes: Vec<Vec<Option<P::Message>>> = Vec::with_capacity(m);
            for (j, part) in self.parts.iter().enumerate() {
                let sub_inbox: Vec<Option<P::Message>> = (0..d)
                    .map(|p| ctx.inbox[p].as_ref().and_then(|bundle| bundle[j].clone()))
                    .collect();
                let sub_ctx = TransitionCtx::<P> {
                    round: ctx.round,
                    degree: d,
                    input: self.fanout.instance_input(j, ctx.input),
                    memory: ctx.memory.and_then(|v| v[j].as_ref()),
                    output: ctx.output.and_then(|v| v[j].as_ref()),
                    inbox: &sub_inbox,
                };
                let update = part.transition(&sub_ctx)?;
                if update.outbox.len() != d {
                    return Err(ProtocolViolation(format!(
                        "instance {j} produced {} messages for degree {d}",
                        update.outbox.len()
                    )));
                }
                memories.push(update.memory);
                outputs.push(update.output);
                outboxes.push(update.outbox);
            }
            let outbox = (0..d)
                .map(|p| Some(outboxes.iter_mut().map(|ob| ob[p].take()).collect()))
                .collect();
            Ok(NodeUpdate { memory: Some(memories), output: Some(outputs), outbox })
        }
    }
}
