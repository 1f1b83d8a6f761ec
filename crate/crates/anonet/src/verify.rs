//! Centralized oracles and audits.
//!
//! Everything here may cheat: it sees the whole input vector, the whole
//! graph, and every intermediate configuration at once. Protocol runs
//! are checked against these references, never the other way around.
//!
//! Two structural checks guard the simulation model itself.
//! [`check_equivariance`] replays a run under a graph isomorphism and
//! demands the states follow it — nodes must compute from position, not
//! identity. [`check_replication`] compares a ring against its `k`-fold
//! cover, where every node has an identically-looking counterpart, so
//! corresponding states must stay equal round for round. The same
//! construction shows what is *not* computable: quantities that differ
//! between a ring and its cover (say, the exact node count) can never be
//! read off stable outputs.

use num::rational::Rational64;
use thiserror::Error;

use crate::averaging::{decode_output, AveragingProtocol, AvgCore, IntervalValue, Mode};
use crate::compiler::LevelSetSpec;
use crate::engine::{
    run, run_trace, Configuration, EngineError, Protocol, RunConfig, Value,
};
use crate::extrema::pointer_chain;
use crate::graph::{GraphError, PortLabeledGraph};

#[derive(Debug, Error)]
pub enum VerifyError {
    #[error("no clause covers proportions {point}")]
    Uncovered { point: String },
    #[error("round {round}, node {node}: {detail}")]
    Mismatch { round: usize, node: usize, detail: String },
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Exact mean of the inputs as the interval value a correct averaging
/// run must output.
pub fn oracle_average(inputs: &[Value]) -> IntervalValue {
    assert!(!inputs.is_empty());
    let total: u64 = inputs.iter().map(|&x| x as u64).sum();
    let n = inputs.len() as u64;
    if total % n == 0 {
        IntervalValue::Singleton((total / n) as Value)
    } else {
        IntervalValue::Open((total / n) as Value)
    }
}

/// Shares of values `1..=alphabet_max`; value 0 holds the remainder.
/// Equal multisets-up-to-scaling give equal vectors.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ProportionVector {
    pub shares: Vec<Rational64>,
    pub population: usize,
}

impl ProportionVector {
    pub fn share_of(&self, value: Value) -> Rational64 {
        self.shares[value as usize - 1]
    }

    /// The implicit share of value 0.
    pub fn residual(&self) -> Rational64 {
        Rational64::new(1, 1) - self.shares.iter().sum::<Rational64>()
    }
}

pub fn oracle_proportions(inputs: &[Value], alphabet_max: Value) -> ProportionVector {
    assert!(!inputs.is_empty());
    assert!(inputs.iter().all(|&x| x <= alphabet_max), "input outside 0..={alphabet_max}");
    let n = inputs.len() as i64;
    let shares = (1..=alphabet_max)
        .map(|v| {
            let count = inputs.iter().filter(|&&x| x == v).count() as i64;
            Rational64::new(count, n)
        })
        .collect();
    ProportionVector { shares, population: inputs.len() }
}

/// Label a compiled protocol must settle on, by direct rational
/// evaluation of the spec at the true proportions.
pub fn oracle_evaluate(spec: &LevelSetSpec, inputs: &[Value]) -> Result<usize, VerifyError> {
    let p = oracle_proportions(inputs, spec.alphabet_max);
    spec.evaluate(&p.shares).ok_or_else(|| VerifyError::Uncovered {
        point: format!("{:?}", p.shares.iter().map(Rational64::to_string).collect::<Vec<_>>()),
    })
}

fn parallel_default() -> bool {
    cfg!(feature = "parallel")
}

/// Verifies that relabeling nodes by `perm` relabels whole trajectories:
/// for every round, the state of node `i` in the original run equals the
/// state of node `perm[i]` in the run on the permuted graph with
/// permuted inputs.
pub fn check_equivariance<P: Protocol>(
    graph: &PortLabeledGraph,
    protocol: &P,
    inputs: &[Value],
    perm: &[usize],
    rounds: usize,
) -> Result<(), VerifyError> {
    let permuted_graph = graph.apply_isomorphism(perm)?;
    let mut permuted_inputs = vec![0; inputs.len()];
    for (i, &x) in inputs.iter().enumerate() {
        permuted_inputs[perm[i]] = x;
    }
    let original = run_trace(graph, protocol, inputs, None, rounds, parallel_default())?;
    let permuted =
        run_trace(&permuted_graph, protocol, &permuted_inputs, None, rounds, parallel_default())?;
    for (t, (a, b)) in original.iter().zip(&permuted).enumerate() {
        for i in 0..inputs.len() {
            if a.nodes[i] != b.nodes[perm[i]] {
                return Err(VerifyError::Mismatch {
                    round: t,
                    node: i,
                    detail: format!(
                        "{:?} diverged from its relabeled image {:?}",
                        a.nodes[i],
                        b.nodes[perm[i]]
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Verifies the covering argument on rings: nodes of `ring(m)` and their
/// `k` copies in `ring(km)` see identical neighborhoods forever, so
/// their states must match round for round.
pub fn check_replication<P: Protocol>(
    protocol: &P,
    inputs: &[Value],
    k: usize,
    rounds: usize,
) -> Result<(), VerifyError> {
    let m = inputs.len();
    assert!(m >= 2 && k >= 1);
    let small = PortLabeledGraph::ring(m)?;
    let big = PortLabeledGraph::ring(k * m)?;
    let big_inputs: Vec<Value> = (0..k * m).map(|i| inputs[i % m]).collect();
    let small_trace = run_trace(&small, protocol, inputs, None, rounds, parallel_default())?;
    let big_trace = run_trace(&big, protocol, &big_inputs, None, rounds, parallel_default())?;
    for (t, (a, b)) in small_trace.iter().zip(&big_trace).enumerate() {
        for i in 0..k * m {
            if b.nodes[i] != a.nodes[i % m] {
                return Err(VerifyError::Mismatch {
                    round: t,
                    node: i,
                    detail: format!(
                        "cover node {:?} diverged from its class representative {:?}",
                        b.nodes[i],
                        a.nodes[i % m]
                    ),
                });
            }
        }
    }
    Ok(())
}

/// Everything a finished averaging run claims, checked centrally.
#[derive(Debug)]
pub struct AveragingAudit {
    pub expected: IntervalValue,
    pub outputs: Vec<Option<IntervalValue>>,
    pub rounds: usize,
    pub quiescent: bool,
    /// Human-readable descriptions of every invariant breach found.
    pub violations: Vec<String>,
}

impl AveragingAudit {
    pub fn agree(&self) -> bool {
        self.quiescent
            && self.violations.is_empty()
            && self.outputs.iter().all(|o| *o == Some(self.expected))
    }
}

fn held(core: Option<&AvgCore>, initial: Value) -> u64 {
    core.map_or(initial as u64, |m| m.pebbles as u64)
}

fn inbox_grant(
    graph: &PortLabeledGraph,
    cfg: &Configuration<AveragingProtocol>,
    node: usize,
) -> bool {
    graph.ports(node).iter().any(|t| {
        cfg.nodes[t.neighbor].outbox[t.reverse_port]
            .as_ref()
            .is_some_and(|w| w.accept.is_some())
    })
}

/// Runs averaging to quiescence and audits the whole trace: exact pebble
/// conservation each round, request/grant bookkeeping, frozen blocked
/// states, monotone spread potential, witness chains, and agreement of
/// the final outputs with [`oracle_average`].
pub fn verify_averaging_run(
    graph: &PortLabeledGraph,
    inputs: &[Value],
    alphabet_max: Value,
    hop_cap: u32,
    max_rounds: usize,
) -> Result<AveragingAudit, EngineError> {
    let protocol = AveragingProtocol::new(alphabet_max, hop_cap);
    let result = run(graph, &protocol, inputs, None, &RunConfig {
        max_rounds,
        capture_trace: true,
        parallel: parallel_default(),
    })?;
    let trace = result.trace.as_ref().expect("trace was requested");
    let mut violations = Vec::new();

    let total: u64 = inputs.iter().map(|&x| x as u64).sum();
    let mut requests_sent: u64 = 0;
    let mut grants_sent: u64 = 0;
    for cfg in trace {
        let mut circulating = 0u64;
        for (i, state) in cfg.nodes.iter().enumerate() {
            circulating += held(state.memory.as_ref(), state.initial);
            for wire in state.outbox.iter().flatten() {
                circulating += wire.accept.unwrap_or(0) as u64;
                requests_sent += wire.request.is_some() as u64;
                grants_sent += wire.accept.is_some() as u64;
                if wire.max_report.estimate > alphabet_max {
                    violations.push(format!(
                        "round {}, node {i}: estimate {} outside the alphabet",
                        cfg.round, wire.max_report.estimate
                    ));
                }
            }
        }
        if circulating != total {
            violations.push(format!(
                "round {}: {circulating} pebbles circulating, expected {total}",
                cfg.round
            ));
        }
    }
    if requests_sent != grants_sent {
        violations.push(format!(
            "{requests_sent} requests but {grants_sent} grants over the whole run"
        ));
    }

    // A blocked node that hears no grant must not move its request state
    // or ask again.
    for pair in trace.windows(2) {
        let (before, after) = (&pair[0], &pair[1]);
        for i in 0..before.nodes.len() {
            let Some(prev) = before.nodes[i].memory.as_ref() else { continue };
            if prev.mode != Mode::Blocked || inbox_grant(graph, before, i) {
                continue;
            }
            let next = after.nodes[i].memory.as_ref().expect("memory persists");
            if next.mode != Mode::Blocked
                || next.request_in != prev.request_in
                || next.request_out != prev.request_out
            {
                violations.push(format!(
                    "round {}, node {i}: blocked state moved without a grant",
                    after.round
                ));
            }
            if after.nodes[i].outbox.iter().flatten().any(|w| w.request.is_some()) {
                violations.push(format!(
                    "round {}, node {i}: emitted a request while blocked",
                    after.round
                ));
            }
        }
    }

    let first = &trace[0];
    let last = trace.last().unwrap();
    let sumsq = |cfg: &Configuration<AveragingProtocol>| -> u64 {
        cfg.nodes
            .iter()
            .map(|s| {
                let u = held(s.memory.as_ref(), s.initial);
                u * u
            })
            .sum()
    };
    if sumsq(last) > sumsq(first) {
        violations.push("squared counts grew over the run".into());
    }

    if result.quiescent {
        let counts: Vec<Value> =
            last.nodes.iter().map(|s| s.memory.as_ref().unwrap().pebbles).collect();
        let (lo, hi) = (*counts.iter().min().unwrap(), *counts.iter().max().unwrap());
        if hi - lo > 1 {
            violations.push(format!("final counts {counts:?} spread wider than one"));
        }
        if decode_output(hi, lo) != Some(oracle_average(inputs)) && hi - lo <= 1 {
            violations.push(format!(
                "final counts {counts:?} do not realize the mean of {inputs:?}"
            ));
        }
        for (kind, state_of) in [
            ("max", Box::new(|i: usize| last.nodes[i].memory.as_ref().map(|m| m.max_tracker))
                as Box<dyn Fn(usize) -> Option<crate::extrema::TrackerState>>),
            ("min", Box::new(|i: usize| last.nodes[i].memory.as_ref().map(|m| m.min_tracker))),
        ] {
            for start in 0..last.nodes.len() {
                if let Err(e) = pointer_chain(graph, last, &state_of, start) {
                    violations.push(format!("{kind} witness chain from node {start}: {e}"));
                }
            }
            let estimates: Vec<Value> = (0..last.nodes.len())
                .map(|i| state_of(i).unwrap().estimate)
                .collect();
            let truth = if kind == "max" { hi } else { lo };
            if estimates.iter().any(|&e| e != truth) {
                violations.push(format!("settled {kind} estimates {estimates:?} != {truth}"));
            }
        }
    }

    Ok(AveragingAudit {
        expected: oracle_average(inputs),
        outputs: result.outputs,
        rounds: result.rounds,
        quiescent: result.quiescent,
        violations,
    })
}
