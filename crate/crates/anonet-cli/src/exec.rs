//! Runs one plan, checks the oracle, and renders the artifacts.
//!
//! Everything here is a pure function of the plan: artifacts carry no
//! paths, clocks, or machine identity, so a scenario re-run produces
//! byte-identical files.

use std::fmt::{self, Write as _};

use anonet::averaging::AveragingProtocol;
use anonet::compiler::compile;
use anonet::engine::{run, run_trace, Configuration, RunConfig};
use anonet::extrema::{ExtremumKind, TrackerProtocol};
use anonet::frequency::{run_frequency, FrequencyProtocol};
use anonet::{oracle_average, oracle_evaluate, EngineError, Protocol, Value, VerifyError};

use crate::scenario::{CliError, Plan, ProtocolChoice};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum TraceMode {
    Off,
    /// One line per round with every node's output.
    Outputs,
    /// Outputs plus each node's full memory.
    Full,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Verdict {
    Agree,
    Disagree(String),
    Unchecked,
}

pub struct RunReport {
    pub summary: String,
    pub trace: Option<String>,
    pub rounds: usize,
    pub verdict: Verdict,
}

fn engine_error(e: EngineError) -> CliError {
    match e {
        EngineError::Protocol { .. } | EngineError::OutputArity { .. } => {
            CliError::Invariant(e.to_string())
        }
        // Pre-validated while planning; reaching here is still a bad input.
        EngineError::InputLength { .. } | EngineError::ScheduleNode { .. } => {
            CliError::Usage(e.to_string())
        }
    }
}

/// `[1, 0, ...]` for present outputs, `?` for nodes with none yet.
fn render_outputs<T>(outputs: &[Option<T>], show: impl Fn(&T) -> String) -> String {
    let cells: Vec<String> =
        outputs.iter().map(|o| o.as_ref().map_or_else(|| "?".into(), &show)).collect();
    format!("[{}]", cells.join(", "))
}

/// `uniform X` when every node reports the same thing, else the full list.
fn summarize_outputs<T: PartialEq>(outputs: &[Option<T>], show: impl Fn(&T) -> String) -> String {
    match outputs.split_first() {
        Some((Some(first), rest)) if rest.iter().all(|o| o.as_ref() == Some(first)) => {
            format!("uniform {}", show(first))
        }
        _ => render_outputs(outputs, show),
    }
}

fn render_trace<P: Protocol>(
    trace: &[Configuration<P>],
    mode: TraceMode,
    show: impl Fn(&P::Output) -> String,
) -> String {
    let mut text = String::new();
    for config in trace {
        let outs: Vec<Option<P::Output>> =
            config.nodes.iter().map(|s| s.output.clone()).collect();
        let _ = writeln!(text, "round {}: {}", config.round, render_outputs(&outs, &show));
        if mode == TraceMode::Full {
            for (i, node) in config.nodes.iter().enumerate() {
                match &node.memory {
                    Some(m) => {
                        let _ = writeln!(text, "  node {i}: {m:?}");
                    }
                    None => {
                        let _ = writeln!(text, "  node {i}: (unset)");
                    }
                }
            }
        }
    }
    text
}

struct SummaryHeader<'a> {
    plan: &'a Plan,
    protocol_line: String,
}

impl fmt::Display for SummaryHeader<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let p = self.plan;
        writeln!(f, "scenario: {}", p.name)?;
        writeln!(f, "protocol: {}", self.protocol_line)?;
        writeln!(f, "graph: {}, {} nodes", p.graph_desc, p.graph.node_count())?;
        writeln!(f, "alphabet: 0..={}", p.alphabet_max)?;
        writeln!(f, "values: {:?} ({})", p.values, p.values_desc)?;
        if let Some(s) = &p.schedule {
            writeln!(f, "schedule: input changes through round {}", s.last_round())?;
        }
        Ok(())
    }
}

/// What the oracle says the nodes should settle on.
pub enum Expectation<T> {
    Value(T),
    /// A compiled spec whose clauses cover no label for this input.
    Uncovered,
}

impl<T> Expectation<T> {
    fn describe(&self, show: impl Fn(&T) -> String) -> String {
        match self {
            Expectation::Value(v) => show(v),
            Expectation::Uncovered => "(no covering clause)".into(),
        }
    }
}

/// Compares the run against the expectation and phrases the verdict.
fn judge<T: PartialEq>(
    plan: &Plan,
    settled: bool,
    not_settled: &str,
    outputs: &[Option<T>],
    expected: &Expectation<T>,
    show: impl Fn(&T) -> String,
) -> Verdict {
    if !plan.oracle_check {
        return Verdict::Unchecked;
    }
    let expected = match expected {
        Expectation::Value(v) => v,
        Expectation::Uncovered => {
            return Verdict::Disagree("the clauses cover no label for this input".into())
        }
    };
    if !settled {
        return Verdict::Disagree(format!("{not_settled}; expected {}", show(expected)));
    }
    for (node, out) in outputs.iter().enumerate() {
        match out {
            None => return Verdict::Disagree(format!("node {node} reports no output")),
            Some(got) if got != expected => {
                return Verdict::Disagree(format!(
                    "node {node} reports {}, expected {}",
                    show(got),
                    show(expected)
                ))
            }
            Some(_) => {}
        }
    }
    Verdict::Agree
}

fn verdict_line(verdict: &Verdict, expected: &str) -> String {
    match verdict {
        Verdict::Agree => format!("oracle: agree (expected {expected})"),
        // Disagreement messages already name the expectation.
        Verdict::Disagree(why) => format!("oracle: DISAGREE — {why}"),
        Verdict::Unchecked => "oracle: skipped".to_string(),
    }
}

/// The oracle each protocol is checked against; `verify` prints this
/// without running anything.
pub fn expected_value(plan: &Plan) -> Result<String, CliError> {
    match &plan.choice {
        ProtocolChoice::Average => Ok(oracle_average(&plan.values).to_string()),
        ProtocolChoice::Tracker(kind) => Ok(tracker_expectation(plan, *kind).to_string()),
        ProtocolChoice::Frequency => {
            let (m, share) = frequency_expectation(plan);
            Ok(format!("({m}, {share})"))
        }
        ProtocolChoice::Compiled { spec, .. } => match oracle_evaluate(spec, &plan.values) {
            Ok(idx) => Ok(format!("{:?}", spec.labels[idx])),
            Err(VerifyError::Uncovered { point }) => Err(CliError::Oracle(format!(
                "the clauses cover no label for this input (proportions {point})"
            ))),
            Err(e) => Err(CliError::Usage(e.to_string())),
        },
    }
}

/// Extremum of the inputs after all scheduled changes have landed.
fn tracker_expectation(plan: &Plan, kind: ExtremumKind) -> Value {
    let finals = (0..plan.values.len()).map(|i| match &plan.schedule {
        Some(s) => s.effective(i, usize::MAX, plan.values[i]),
        None => plan.values[i],
    });
    match kind {
        ExtremumKind::Max => finals.max().unwrap_or(0),
        ExtremumKind::Min => finals.min().unwrap_or(0),
    }
}

fn frequency_expectation(plan: &Plan) -> (Value, num::rational::Rational64) {
    let ones = plan.values.iter().filter(|&&v| v == 1).count() as i64;
    let share = num::rational::Rational64::new(ones, plan.values.len() as i64);
    (*share.denom() as Value, share)
}

pub fn execute(plan: &Plan) -> Result<RunReport, CliError> {
    match &plan.choice {
        ProtocolChoice::Average => {
            let protocol = AveragingProtocol::new(plan.alphabet_max, plan.h_max);
            let expected = Expectation::Value(oracle_average(&plan.values));
            run_fixed_point(plan, &protocol, "average", expected, |v| v.to_string())
        }
        ProtocolChoice::Tracker(kind) => {
            let protocol = match kind {
                ExtremumKind::Max => TrackerProtocol::max(plan.h_max),
                ExtremumKind::Min => TrackerProtocol::min(plan.h_max),
            };
            let name = match kind {
                ExtremumKind::Max => "max_track",
                ExtremumKind::Min => "min_track",
            };
            let expected = Expectation::Value(tracker_expectation(plan, *kind));
            run_fixed_point(plan, &protocol, name, expected, |v| v.to_string())
        }
        ProtocolChoice::Compiled { spec, spec_name } => {
            let protocol = compile(spec, plan.h_max)
                .map_err(|e| CliError::Usage(format!("{spec_name}: {e}")))?;
            let labels = protocol.labels.clone();
            let expected = match oracle_evaluate(spec, &plan.values) {
                Ok(idx) => Expectation::Value(idx),
                Err(VerifyError::Uncovered { .. }) => Expectation::Uncovered,
                Err(e) => return Err(CliError::Usage(e.to_string())),
            };
            let show = move |idx: &usize| format!("{:?}", labels[*idx]);
            run_fixed_point(plan, &protocol, &format!("compiled ({spec_name})"), expected, show)
        }
        ProtocolChoice::Frequency => run_frequency_plan(plan),
    }
}

/// Shared path for the fixed-point protocols (everything but frequency).
fn run_fixed_point<P: Protocol>(
    plan: &Plan,
    protocol: &P,
    protocol_line: &str,
    expected: Expectation<P::Output>,
    show: impl Fn(&P::Output) -> String,
) -> Result<RunReport, CliError> {
    let cfg = RunConfig {
        max_rounds: plan.max_rounds,
        capture_trace: plan.trace != TraceMode::Off,
        ..RunConfig::default()
    };
    let result = run(&plan.graph, protocol, &plan.values, plan.schedule.as_ref(), &cfg)
        .map_err(engine_error)?;

    let not_settled = format!("no fixed point within {} rounds", plan.max_rounds);
    let verdict = judge(plan, result.quiescent, &not_settled, &result.outputs, &expected, &show);
    let mut summary = SummaryHeader { plan, protocol_line: protocol_line.into() }.to_string();
    let _ = writeln!(summary, "quiescent: {}", result.quiescent);
    let _ = writeln!(summary, "rounds: {}", result.rounds);
    let _ = writeln!(summary, "outputs: {}", summarize_outputs(&result.outputs, &show));
    let _ = writeln!(summary, "{}", verdict_line(&verdict, &expected.describe(&show)));

    let trace = result
        .trace
        .as_deref()
        .map(|t| render_trace(t, plan.trace, &show));
    Ok(RunReport { summary, trace, rounds: result.rounds, verdict })
}

fn run_frequency_plan(plan: &Plan) -> Result<RunReport, CliError> {
    let protocol = FrequencyProtocol { m_max: plan.m_max, hop_cap: plan.h_max };
    let result = run_frequency(
        &plan.graph,
        &protocol,
        &plan.values,
        plan.max_blocks,
        RunConfig::default().parallel,
    )
    .map_err(engine_error)?;

    let show = |out: &(Value, num::rational::Rational64)| format!("({}, {})", out.0, out.1);
    let expected = Expectation::Value(frequency_expectation(plan));
    let not_settled = format!("no per-block fixed point within {} blocks", plan.max_blocks);
    let verdict = judge(plan, result.settled, &not_settled, &result.outputs, &expected, show);

    let mut summary = SummaryHeader {
        plan,
        protocol_line: format!("frequency (m_max = {})", plan.m_max),
    }
    .to_string();
    let _ = writeln!(summary, "settled: {}", result.settled);
    let _ = writeln!(summary, "blocks: {}", result.blocks);
    let _ = writeln!(summary, "rounds: {}", result.rounds);
    let _ = writeln!(summary, "outputs: {}", summarize_outputs(&result.outputs, show));
    let _ = writeln!(summary, "{}", verdict_line(&verdict, &expected.describe(show)));

    // The block runner keeps no trace; replay the same rounds for one.
    let trace = if plan.trace != TraceMode::Off {
        let replay =
            run_trace(&plan.graph, &protocol, &plan.values, None, result.rounds, false)
                .map_err(engine_error)?;
        Some(render_trace(&replay, plan.trace, show))
    } else {
        None
    };
    Ok(RunReport { summary, trace, rounds: result.rounds, verdict })
}
