//! Scenario files: the TOML surface, validation, and the executable plan.
//!
//! A scenario pins everything a run depends on — graph, values, protocol,
//! caps, seeds — so the same file always produces the same bytes. The
//! harness resolves population-dependent caps (`h_max`, `m_max` default
//! to `n`); the node automata themselves never see `n`.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;

use anonet::compiler::{parse_spec, LevelSetSpec};
use anonet::extrema::ExtremumKind;
use anonet::{GraphSpec, InputSchedule, PortLabeledGraph, Value};

use crate::exec::TraceMode;

/// Failure taxonomy mirrored in the process exit code.
#[derive(Debug)]
pub enum CliError {
    /// Bad invocation, unreadable or ill-formed scenario: exit 1.
    Usage(String),
    /// A protocol invariant broke while running: exit 2.
    Invariant(String),
    /// The run finished but its results contradict the oracle: exit 3.
    Oracle(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Invariant(_) => 2,
            CliError::Oracle(_) => 3,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(msg) => write!(f, "{msg}"),
            CliError::Invariant(msg) => write!(f, "invariant violation: {msg}"),
            CliError::Oracle(msg) => write!(f, "oracle disagreement: {msg}"),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    /// average | max_track | min_track | frequency | compiled
    pub protocol: String,
    pub graph: GraphField,
    pub values: ValuesField,
    /// Alphabet bound: values range over `0..=k`. Defaults to the largest
    /// listed value; for `compiled` it must match the spec's bound.
    pub k: Option<Value>,
    /// Level-set spec file for `compiled`, relative to the scenario file.
    pub spec: Option<PathBuf>,
    /// Hop cap for extremum claims; defaults to the node count.
    pub h_max: Option<u32>,
    /// Largest frequency instance; defaults to the node count.
    pub m_max: Option<Value>,
    pub max_rounds: Option<usize>,
    /// Block budget for frequency settling; defaults to `30 + 3n^2`.
    pub max_blocks: Option<usize>,
    /// Compare the results against the oracle (default true).
    pub oracle_check: Option<bool>,
    /// off | outputs | full (overridable with --trace).
    pub trace: Option<String>,
    /// Scripted input changes `[round, node, value]`; tracker protocols
    /// only — the other protocols commit to their inputs at round one.
    pub schedule: Option<Vec<(usize, usize, Value)>>,
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GraphField {
    /// `ring(6)`, `path(4)`, `star(5)`, `complete(3)`, `singleton`,
    /// `random_connected(n, extra, seed=s)`.
    Named(String),
    /// Explicit edge list, optionally with a full port assignment
    /// (`ports[e] = [port at a, port at b]`, 1-based, for `edges[e] = [a, b]`).
    Explicit { nodes: usize, edges: Vec<(usize, usize)>, ports: Option<Vec<(usize, usize)>> },
}

#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum ValuesField {
    List(Vec<Value>),
    /// `random(seed=N)`: seeded uniform draw from `0..=k` per node.
    Generator(String),
}

#[derive(Debug, Clone)]
pub enum ProtocolChoice {
    Average,
    Tracker(ExtremumKind),
    Frequency,
    Compiled { spec: LevelSetSpec, spec_name: String },
}

impl ProtocolChoice {
    pub fn is_tracker(&self) -> bool {
        matches!(self, ProtocolChoice::Tracker(_))
    }
}

/// Everything needed to execute one run, fully resolved and validated.
pub struct Plan {
    pub name: String,
    pub graph_desc: String,
    pub graph: PortLabeledGraph,
    pub values: Vec<Value>,
    pub values_desc: String,
    pub alphabet_max: Value,
    pub choice: ProtocolChoice,
    pub h_max: u32,
    pub m_max: Value,
    pub max_rounds: usize,
    pub max_blocks: usize,
    pub oracle_check: bool,
    pub trace: TraceMode,
    pub schedule: Option<InputSchedule>,
}

/// Command-line overrides applied on top of the file.
#[derive(Default, Clone, Copy)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub max_rounds: Option<usize>,
    pub trace: Option<TraceMode>,
}

pub fn load(path: &Path, overrides: Overrides) -> Result<Plan, CliError> {
    let (file, dir, name) = load_raw(path)?;
    plan_from(&file, &dir, &name, overrides)
}

pub fn load_raw(path: &Path) -> Result<(ScenarioFile, PathBuf, String), CliError> {
    let text = fs::read_to_string(path)
        .map_err(|e| usage(format!("cannot read {}: {e}", path.display())))?;
    let file: ScenarioFile = toml::from_str(&text)
        .map_err(|e| usage(format!("{}: {e}", path.display())))?;
    let dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "scenario".into());
    Ok((file, dir, name))
}

fn parse_generator(text: &str) -> Result<u64, CliError> {
    let inner = text
        .trim()
        .strip_prefix("random(")
        .and_then(|rest| rest.strip_suffix(')'))
        .ok_or_else(|| usage(format!("unrecognized values generator `{text}`")))?;
    let seed = inner
        .trim()
        .strip_prefix("seed=")
        .ok_or_else(|| usage(format!("values generator needs `seed=N`, got `{text}`")))?;
    seed.trim()
        .parse()
        .map_err(|_| usage(format!("bad seed in values generator `{text}`")))
}

pub fn plan_from(
    file: &ScenarioFile,
    dir: &Path,
    name: &str,
    overrides: Overrides,
) -> Result<Plan, CliError> {
    let (graph, graph_desc) = match &file.graph {
        GraphField::Named(text) => {
            let spec: GraphSpec = text
                .parse()
                .map_err(|e: anonet::GraphError| usage(e.to_string()))?;
            let graph = spec.build().map_err(|e| usage(e.to_string()))?;
            (graph, spec.to_string())
        }
        GraphField::Explicit { nodes, edges, ports } => {
            let graph = PortLabeledGraph::from_edges(*nodes, edges, ports.as_deref())
                .map_err(|e| usage(e.to_string()))?;
            graph.validate().map_err(|e| usage(e.to_string()))?;
            (graph, format!("explicit({nodes} nodes, {} edges)", edges.len()))
        }
    };
    let n = graph.node_count();

    let choice = match file.protocol.as_str() {
        "average" => ProtocolChoice::Average,
        "max_track" => ProtocolChoice::Tracker(ExtremumKind::Max),
        "min_track" => ProtocolChoice::Tracker(ExtremumKind::Min),
        "frequency" => ProtocolChoice::Frequency,
        "compiled" => {
            let rel = file
                .spec
                .as_ref()
                .ok_or_else(|| usage("protocol \"compiled\" needs a `spec` file"))?;
            let spec_path = dir.join(rel);
            let text = fs::read_to_string(&spec_path)
                .map_err(|e| usage(format!("cannot read {}: {e}", spec_path.display())))?;
            let spec = parse_spec(&text)
                .map_err(|e| usage(format!("{}: {e}", spec_path.display())))?;
            let spec_name = rel.to_string_lossy().into_owned();
            ProtocolChoice::Compiled { spec, spec_name }
        }
        other => return Err(usage(format!("unknown protocol `{other}`"))),
    };
    if file.spec.is_some() && !matches!(choice, ProtocolChoice::Compiled { .. }) {
        return Err(usage("`spec` only applies to protocol \"compiled\""));
    }

    // The alphabet bound: explicit `k`, the compiled spec's bound, or the
    // largest listed value.
    let alphabet_max = match (&choice, file.k) {
        (ProtocolChoice::Compiled { spec, .. }, k) => {
            if let Some(k) = k {
                if k != spec.alphabet_max {
                    return Err(usage(format!(
                        "k = {k} but the spec declares values 0..={}",
                        spec.alphabet_max
                    )));
                }
            }
            spec.alphabet_max
        }
        (_, Some(k)) => k,
        (_, None) => match &file.values {
            ValuesField::List(vs) => *vs.iter().max().unwrap_or(&0),
            ValuesField::Generator(_) => {
                return Err(usage("random values need an explicit `k` bound"))
            }
        },
    };

    let (values, values_desc) = match &file.values {
        ValuesField::List(vs) => {
            if overrides.seed.is_some() {
                return Err(usage("--seed has no effect on explicitly listed values"));
            }
            if vs.len() != n {
                return Err(usage(format!("{} values for {n} nodes", vs.len())));
            }
            (vs.clone(), "explicit".to_string())
        }
        ValuesField::Generator(text) => {
            let seed = overrides.seed.unwrap_or(parse_generator(text)?);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let vs = (0..n).map(|_| rng.gen_range(0..=alphabet_max)).collect();
            (vs, format!("random(seed={seed})"))
        }
    };
    if let Some(&v) = values.iter().find(|&&v| v > alphabet_max) {
        return Err(usage(format!("value {v} outside the alphabet 0..={alphabet_max}")));
    }

    let h_max = file.h_max.unwrap_or(n as u32);
    let m_max = file.m_max.unwrap_or(n as Value);
    let max_rounds = overrides.max_rounds.or(file.max_rounds).unwrap_or(100_000);
    let max_blocks = file.max_blocks.unwrap_or(30 + 3 * n * n);
    if h_max == 0 || m_max == 0 || max_rounds == 0 || max_blocks == 0 {
        return Err(usage("limits (h_max, m_max, max_rounds, max_blocks) must be positive"));
    }

    let trace = match (&overrides.trace, &file.trace) {
        (Some(mode), _) => *mode,
        (None, Some(text)) => match text.as_str() {
            "off" => TraceMode::Off,
            "outputs" => TraceMode::Outputs,
            "full" => TraceMode::Full,
            other => return Err(usage(format!("unknown trace mode `{other}`"))),
        },
        (None, None) => TraceMode::Off,
    };

    let schedule = match &file.schedule {
        None => None,
        Some(entries) => {
            if !choice.is_tracker() {
                return Err(usage(
                    "schedule applies only to max_track/min_track; \
                     the other protocols commit to their inputs at round one",
                ));
            }
            for &(round, node, value) in entries {
                if node >= n {
                    return Err(usage(format!("schedule names node {node}, graph has {n}")));
                }
                if value > alphabet_max {
                    return Err(usage(format!(
                        "schedule value {value} at round {round} outside 0..={alphabet_max}"
                    )));
                }
            }
            Some(InputSchedule::new(entries.iter().copied()))
        }
    };

    Ok(Plan {
        name: name.to_string(),
        graph_desc,
        graph,
        values,
        values_desc,
        alphabet_max,
        choice,
        h_max,
        m_max,
        max_rounds,
        max_blocks,
        oracle_check: file.oracle_check.unwrap_or(true),
        trace,
        schedule,
    })
}
