//! Pebble averaging: drives every node's counter to within one of the
//! global mean of the initial values, while conserving the total exactly.
//!
//! Each node holds `u` pebbles (initially its input). Nodes poor relative
//! to the current maximum estimate request pebbles; the request travels
//! along max-tracker parent pointers toward a rich node, which splits the
//! difference and sends pebbles back along the same path. A transfer of
//! `w` pebbles from a node holding `u_s` to one that held `r` when it
//! asked moves `Σu²` down by at least `2w`, so transfers cannot recur
//! forever; once they stop, no node is 2 below the maximum, i.e. the
//! counts span at most two adjacent values.
//!
//! Embedded max and min trackers ([`crate::extrema`]) let every node
//! decode the mean from its own state: estimates `M = m` mean every
//! counter equals `m` (the mean exactly); `M = m + 1` means counts mix
//! `m` and `m+1`, placing the mean strictly inside `(m, m+1)`. Either
//! way the mean is pinned to an open unit interval or an exact value —
//! [`IntervalValue`] — which is all any threshold test ever needs.
//!
//! Requests resolve quickly because forwarding is conservative: a node
//! relays at most one request at a time, answers everything else with an
//! explicit zero grant, and a zero grant just unblocks the asker to try
//! again with fresher estimates.

use std::fmt;

use crate::engine::{NodeUpdate, Protocol, ProtocolViolation, TransitionCtx, Value};
use crate::extrema::{tracker_step, ExtremumKind, Parent, TrackerMessage, TrackerState};

/// The mean, as precisely as an anonymous node can state it: either an
/// exact value or an open unit interval.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IntervalValue {
    /// The mean is exactly this value.
    Singleton(Value),
    /// The mean lies strictly between `v` and `v + 1`.
    Open(Value),
}

impl IntervalValue {
    pub fn floor(self) -> Value {
        match self {
            IntervalValue::Singleton(v) | IntervalValue::Open(v) => v,
        }
    }
}

impl fmt::Display for IntervalValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            IntervalValue::Singleton(v) => write!(f, "{v}"),
            IntervalValue::Open(v) => write!(f, "({v}, {})", v + 1),
        }
    }
}

/// Decodes the mean from settled extremum estimates, if they are close
/// enough to pin it down.
pub fn decode_output(max_estimate: Value, min_estimate: Value) -> Option<IntervalValue> {
    if max_estimate == min_estimate {
        Some(IntervalValue::Singleton(max_estimate))
    } else if max_estimate == min_estimate + 1 {
        Some(IntervalValue::Open(min_estimate))
    } else {
        None
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Free,
    /// One request is outstanding; no new request may be issued or
    /// forwarded until its grant (possibly zero) comes back.
    Blocked,
}

/// Where the outstanding request originated, and so where its grant must
/// be delivered.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RequestSource {
    SelfNode,
    Port(usize),
}

#[derive(Debug, Clone, PartialEq)]
pub struct AvgCore {
    pub pebbles: Value,
    pub mode: Mode,
    pub request_in: Option<RequestSource>,
    /// Port the outstanding request left on; its grant must return there.
    pub request_out: Option<usize>,
    pub max_tracker: TrackerState,
    pub min_tracker: TrackerState,
}

/// Everything one edge carries per round. Extremum reports are always
/// present; at most one request and one grant ride along.
#[derive(Debug, Clone, PartialEq)]
pub struct AvgWire {
    pub max_report: TrackerMessage,
    pub min_report: TrackerMessage,
    /// "I held this many pebbles; send me some."
    pub request: Option<Value>,
    /// Grant of this many pebbles (zero = refusal, which only unblocks).
    pub accept: Option<Value>,
}

/// Fresh state holding `x` pebbles, before any communication.
pub fn avg_init(x: Value, alphabet_max: Value) -> Result<AvgCore, ProtocolViolation> {
    if x > alphabet_max {
        return Err(ProtocolViolation(format!(
            "input {x} exceeds the alphabet bound {alphabet_max}"
        )));
    }
    let rooted = TrackerState { input: x, estimate: x, parent: Parent::SelfNode, hop: 0 };
    Ok(AvgCore {
        pebbles: x,
        mode: Mode::Free,
        request_in: None,
        request_out: None,
        max_tracker: rooted,
        min_tracker: rooted,
    })
}

fn put(slot: &mut Option<Value>, v: Value, what: &str) -> Result<(), ProtocolViolation> {
    if slot.is_some() {
        return Err(ProtocolViolation(format!("two {what}s on one port in one round")));
    }
    *slot = Some(v);
    Ok(())
}

/// One averaging transition, free of engine plumbing so that protocols
/// time-sharing several averaging instances can drive each directly.
/// `input` seeds the pebble count only when `memory` is absent.
pub(crate) fn step_core(
    alphabet_max: Value,
    hop_cap: u32,
    degree: usize,
    input: Value,
    memory: Option<&AvgCore>,
    inbox: &[Option<AvgWire>],
) -> Result<(AvgCore, Vec<AvgWire>, Option<IntervalValue>), ProtocolViolation> {
    let prev = match memory {
        Some(m) => m.clone(),
        None => avg_init(input, alphabet_max)?,
    };
    let mut u = prev.pebbles;

    let max_inbox: Vec<Option<TrackerMessage>> =
        inbox.iter().map(|w| w.as_ref().map(|w| w.max_report)).collect();
    let min_inbox: Vec<Option<TrackerMessage>> =
        inbox.iter().map(|w| w.as_ref().map(|w| w.min_report)).collect();
    let max_tracker = tracker_step(ExtremumKind::Max, hop_cap, u, &max_inbox);
    let min_tracker = tracker_step(ExtremumKind::Min, hop_cap, u, &min_inbox);

    let mut grants: Vec<Option<Value>> = vec![None; degree];
    let mut requests: Vec<Option<Value>> = vec![None; degree];
    let mut mode = prev.mode;
    let mut request_in = prev.request_in;
    let mut request_out = prev.request_out;

    // Serve at most the lowest-port request; refuse the rest outright so
    // every asker unblocks.
    let mut chosen = true;
    for (port, wire) in inbox.iter().enumerate() {
        let Some(r) = wire.as_ref().and_then(|w| w.request) else { continue };
        if r > alphabet_max {
            return Err(ProtocolViolation(format!(
                "request for a count of {r} exceeds the alphabet bound {alphabet_max}"
            )));
        }
        if chosen && u >= r + 2 {
            let w = (u - r) / 2;
            u -= w;
            put(&mut grants[port], w, "grant")?;
        } else if chosen
            && prev.mode == Mode::Free
            && max_tracker.estimate > r + 1
            && max_tracker.parent != Parent::Port(port)
        {
            if let Parent::Port(q) = max_tracker.parent {
                put(&mut requests[q], r, "request")?;
                mode = Mode::Blocked;
                request_in = Some(RequestSource::Port(port));
                request_out = Some(q);
            } else {
                put(&mut grants[port], 0, "grant")?;
            }
        } else {
            put(&mut grants[port], 0, "grant")?;
        }
        chosen = false;
    }

    // A grant may arrive only on the port our outstanding request left on.
    let mut arrived: Option<(usize, Value)> = None;
    for (port, wire) in inbox.iter().enumerate() {
        let Some(w) = wire.as_ref().and_then(|w| w.accept) else { continue };
        if arrived.is_some() {
            return Err(ProtocolViolation("two grants in one round".into()));
        }
        if prev.mode != Mode::Blocked || prev.request_out != Some(port) {
            return Err(ProtocolViolation(format!("unsolicited grant on port {}", port + 1)));
        }
        arrived = Some((port, w));
    }
    if let Some((_, w)) = arrived {
        match prev.request_in {
            Some(RequestSource::SelfNode) => {
                u += w;
                if u > alphabet_max {
                    return Err(ProtocolViolation(format!(
                        "granted {w} pebbles overflow the alphabet bound {alphabet_max}"
                    )));
                }
            }
            Some(RequestSource::Port(j)) => put(&mut grants[j], w, "grant")?,
            None => return Err(ProtocolViolation("blocked with no request origin".into())),
        }
        mode = Mode::Free;
        request_in = None;
        request_out = None;
    }

    // Ask for pebbles whenever someone provably holds two more than us.
    if mode == Mode::Free && max_tracker.estimate >= u + 2 {
        if let Parent::Port(p) = max_tracker.parent {
            put(&mut requests[p], u, "request")?;
            mode = Mode::Blocked;
            request_in = Some(RequestSource::SelfNode);
            request_out = Some(p);
        }
    }

    let output = decode_output(max_tracker.estimate, min_tracker.estimate);
    let wires = (0..degree)
        .map(|k| AvgWire {
            max_report: max_tracker.message(),
            min_report: min_tracker.message(),
            request: requests[k],
            accept: grants[k],
        })
        .collect();
    let core = AvgCore { pebbles: u, mode, request_in, request_out, max_tracker, min_tracker };
    Ok((core, wires, output))
}

/// Averaging over the alphabet `0..=alphabet_max` as an engine protocol.
/// `hop_cap` bounds the embedded trackers; pass the node count when known.
#[derive(Debug, Clone, Copy)]
pub struct AveragingProtocol {
    pub alphabet_max: Value,
    pub hop_cap: u32,
}

impl AveragingProtocol {
    pub fn new(alphabet_max: Value, hop_cap: u32) -> Self {
        AveragingProtocol { alphabet_max, hop_cap }
    }
}

impl Protocol for AveragingProtocol {
    type Memory = AvgCore;
    type Output = IntervalValue;
    type Message = AvgWire;

    fn transition(
        &self,
        ctx: &TransitionCtx<'_, Self>,
    ) -> Result<NodeUpdate<Self>, ProtocolViolation> {
        let (core, wires, output) =
            step_core(self.alphabet_max, self.hop_cap, ctx.degree, ctx.input, ctx.memory, ctx.inbox)?;
        Ok(NodeUpdate {
            memory: Some(core),
            output,
            outbox: wires.into_iter().map(Some).collect(),
        })
    }
}
