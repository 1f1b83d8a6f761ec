//! Exact proportion measurement for an indicator input.
//!
//! One averaging instance over inputs `m·[x = 1]` has mean `m·p₁`; when
//! that mean is an integer the instance reports it exactly, pinning
//! `p₁ = v/m`. Some `m ≤ n` always works (`m` a multiple of `p₁`'s
//! reduced denominator), but `n` is unknown, so nodes run instance after
//! instance, time-shared on one wire under a triangular schedule: rounds
//! serve instances `1; 1,2; 1,2,3; …`, giving every instance infinitely
//! many turns while only one message rides each edge per round. Messages
//! need no instance tag — every node tracks the same schedule, so the
//! arrival round alone names the instance, at the price of buffering
//! each instance's traffic until its next turn.
//!
//! The answer is read off the smallest instantiated instance reporting
//! an exact mean: `(m, v/m)`. Earlier instances must have decided (with
//! non-integral means) before the readout commits, so the reported `m`
//! is the least denominator once everything settles.
//!
//! Because the active instance rotates, the configuration never repeats
//! round over round, and the engine's fixed-point test can't fire.
//! [`run_frequency`] instead compares configurations at consecutive
//! block boundaries: past the instance cap each block applies the same
//! composed map (trailing schedule slots are no-ops), so boundary
//! equality certifies a genuine fixed point of the block map.

use std::sync::Arc;

use num::rational::Rational64;

use crate::averaging::{step_core, AvgCore, AvgWire, IntervalValue};
use crate::engine::{
    initial_configuration, step, EngineError, NodeUpdate, Protocol, ProtocolViolation,
    TransitionCtx, Value,
};
use crate::graph::PortLabeledGraph;

/// First round of block `b` (1-based blocks): `T(b-1) = b(b-1)/2`.
pub fn block_start(b: usize) -> usize {
    b * (b - 1) / 2
}

/// Which instance (1-based) round `t` serves: block `b` covers rounds
/// `[T(b-1), T(b))` and serves instances `1..=b` in order.
pub fn schedule_index(t: usize) -> usize {
    let mut b = ((8 * t + 1) as f64).sqrt() as usize / 2 + 1;
    while block_start(b + 1) <= t {
        b += 1;
    }
    while block_start(b) > t {
        b -= 1;
    }
    t - block_start(b) + 1
}

/// One instance's state between its turns: its averaging core, the
/// traffic that arrived since its last turn, and its latest decode.
#[derive(Debug, Clone, PartialEq)]
pub struct FreqSlot {
    pub core: AvgCore,
    pub pending: Vec<Option<AvgWire>>,
    pub decoded: Option<IntervalValue>,
}

/// Shared-ownership handle so that per-round configuration clones copy
/// one pointer per instance instead of every instance's state.
#[derive(Debug, Clone)]
pub struct SlotHandle(pub Arc<FreqSlot>);

impl PartialEq for SlotHandle {
    fn eq(&self, other: &Self) -> bool {
        Arc::ptr_eq(&self.0, &other.0) || self.0 == other.0
    }
}

/// Proportion measurement for indicator inputs (`x ∈ {0, 1}`). Instances
/// above `m_max` are never instantiated; their schedule slots idle.
/// `m_max = n` always suffices. Output is `(denominator, share)`.
#[derive(Debug, Clone, Copy)]
pub struct FrequencyProtocol {
    pub m_max: Value,
    pub hop_cap: u32,
}

fn readout(slots: &[SlotHandle]) -> Option<(Value, Rational64)> {
    for (i, slot) in slots.iter().enumerate() {
        match slot.0.decoded {
            None => return None,
            Some(IntervalValue::Singleton(v)) => {
                let m = (i + 1) as Value;
                return Some((m, Rational64::new(v as i64, m as i64)));
            }
            Some(IntervalValue::Open(_)) => {}
        }
    }
    None
}

impl Protocol for FrequencyProtocol {
    type Memory = Vec<SlotHandle>;
    type Output = (Value, Rational64);
    type Message = AvgWire;

    fn transition(
        &self,
        ctx: &TransitionCtx<'_, Self>,
    ) -> Result<NodeUpdate<Self>, ProtocolViolation> {
        if ctx.memory.is_none() && ctx.input > 1 {
            return Err(ProtocolViolation(format!(
                "input {} is not an indicator value",
                ctx.input
            )));
        }
        let mut slots: Vec<SlotHandle> = ctx.memory.cloned().unwrap_or_default();

        // The wires now arriving were sent by the previous round's
        // instance; park them in its slot until its next turn.
        if ctx.round >= 1 {
            let prev = schedule_index(ctx.round - 1);
            if prev <= self.m_max as usize {
                let Some(handle) = slots.get_mut(prev - 1) else {
                    return Err(ProtocolViolation(format!(
                        "traffic for instance {prev} arrived before its slot exists"
                    )));
                };
                Arc::make_mut(&mut handle.0).pending = ctx.inbox.to_vec();
            } else if ctx.inbox.iter().any(|w| w.is_some()) {
                return Err(ProtocolViolation(
                    "traffic arrived during an idle schedule slot".into(),
                ));
            }
        }

        let m = schedule_index(ctx.round);
        let outbox = if m <= self.m_max as usize {
            let holdover = match m.cmp(&(slots.len() + 1)) {
                std::cmp::Ordering::Less => Some(slots[m - 1].0.clone()),
                std::cmp::Ordering::Equal => None,
                std::cmp::Ordering::Greater => {
                    return Err(ProtocolViolation(format!(
                        "instance {m} scheduled before instance {}",
                        slots.len() + 1
                    )))
                }
            };
            let blank = vec![None; ctx.degree];
            let (memory, pending) = match &holdover {
                Some(slot) => (Some(&slot.core), &slot.pending),
                None => (None, &blank),
            };
            let (core, wires, decoded) = step_core(
                m as Value,
                self.hop_cap,
                ctx.degree,
                m as Value * ctx.input,
                memory,
                pending,
            )?;
            let fresh =
                SlotHandle(Arc::new(FreqSlot { core, pending: vec![None; ctx.degree], decoded }));
            if holdover.is_some() {
                slots[m - 1] = fresh;
            } else {
                slots.push(fresh);
            }
            wires.into_iter().map(Some).collect()
        } else {
            vec![None; ctx.degree]
        };

        let output = readout(&slots);
        Ok(NodeUpdate { memory: Some(slots), output, outbox })
    }
}

#[derive(Debug)]
pub struct FrequencyRun {
    /// True when two consecutive block boundaries carried identical
    /// configurations (a fixed point of the per-block map).
    pub settled: bool,
    pub blocks: usize,
    pub rounds: usize,
    pub outputs: Vec<Option<(Value, Rational64)>>,
}

/// Runs until the per-block state map reaches its fixed point, or
/// `max_blocks` blocks pass.
pub fn run_frequency(
    graph: &PortLabeledGraph,
    protocol: &FrequencyProtocol,
    inputs: &[Value],
    max_blocks: usize,
    parallel: bool,
) -> Result<FrequencyRun, EngineError> {
    let mut cfg = initial_configuration::<FrequencyProtocol>(graph, inputs)?;
    let mut previous_boundary = None;
    for b in 1..=max_blocks {
        while cfg.round < block_start(b + 1) {
            cfg = step(graph, protocol, &cfg, None, parallel)?;
        }
        // Blocks longer than m_max end in idle slots, so boundary
        // configurations carry no in-flight traffic and are comparable.
        if b > protocol.m_max as usize + 1 {
            if previous_boundary.as_ref() == Some(&cfg.nodes) {
                return Ok(FrequencyRun {
                    settled: true,
                    blocks: b,
                    rounds: cfg.round,
                    outputs: cfg.nodes.iter().map(|s| s.output.clone()).collect(),
                });
            }
            previous_boundary = Some(cfg.nodes.clone());
        }
    }
    Ok(FrequencyRun {
        settled: false,
        blocks: max_blocks,
        rounds: cfg.round,
        outputs: cfg.nodes.iter().map(|s| s.output.clone()).collect(),
    })
}

/// Measures the share of every value `1..=alphabet_max` by one indicator
/// run per value. `None` if any run fails to settle within `max_blocks`.
pub fn frequency_vector(
    graph: &PortLabeledGraph,
    inputs: &[Value],
    alphabet_max: Value,
    hop_cap: u32,
    max_blocks: usize,
    parallel: bool,
) -> Result<Option<Vec<Rational64>>, EngineError> {
    let protocol = FrequencyProtocol { m_max: graph.node_count() as Value, hop_cap };
    let mut shares = Vec::with_capacity(alphabet_max as usize);
    for value in 1..=alphabet_max {
        let indicator: Vec<Value> = inputs.iter().map(|&x| (x == value) as Value).collect();
        let run = run_frequency(graph, &protocol, &indicator, max_blocks, parallel)?;
        if !run.settled {
            return Ok(None);
        }
        shares.push(run.outputs[0].as_ref().expect("settled run must decide").1);
    }
    Ok(Some(shares))
}
