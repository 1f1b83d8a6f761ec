//! Parameter sweeps: many runs of one scenario across node counts and
//! seeds, plus the ring-replication audit. Individual run failures are
//! recorded in the aggregate rather than aborting the sweep; the exit
//! code reflects the worst category seen.

use std::fmt::Write as _;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use anonet::averaging::AveragingProtocol;
use anonet::compiler::compile;
use anonet::extrema::{ExtremumKind, TrackerProtocol};
use anonet::frequency::FrequencyProtocol;
use anonet::{check_replication, GraphSpec, Value};

use crate::exec::{self, TraceMode, Verdict};
use crate::scenario::{
    plan_from, CliError, GraphField, Overrides, ProtocolChoice, ScenarioFile, ValuesField,
};

pub struct SweepOutcome {
    pub text: String,
    /// Worst failure category across all runs; decides the exit code.
    pub failure: Option<CliError>,
}

/// `5`, `2..12` (half-open), or `2..=12`.
pub fn parse_range(text: &str) -> Result<Vec<usize>, CliError> {
    let bad = || CliError::Usage(format!("bad range `{text}`; use N, a..b, or a..=b"));
    if let Some((lo, hi)) = text.split_once("..=") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo > hi {
            return Err(bad());
        }
        return Ok((lo..=hi).collect());
    }
    if let Some((lo, hi)) = text.split_once("..") {
        let lo: usize = lo.trim().parse().map_err(|_| bad())?;
        let hi: usize = hi.trim().parse().map_err(|_| bad())?;
        if lo >= hi {
            return Err(bad());
        }
        return Ok((lo..hi).collect());
    }
    let single: usize = text.trim().parse().map_err(|_| bad())?;
    Ok(vec![single])
}

fn worse(a: Option<CliError>, b: Option<CliError>) -> Option<CliError> {
    // Invariant violations outrank oracle disagreements.
    match (&a, &b) {
        (Some(CliError::Invariant(_)), _) => a,
        (_, Some(CliError::Invariant(_))) => b,
        (Some(_), _) => a,
        _ => b,
    }
}

/// Cartesian sweep over node counts and value seeds. Every run gets a
/// fresh graph (size swapped in, seed swapped in for random families) and
/// freshly drawn values; the oracle is always consulted.
pub fn run_sweep(
    file: &ScenarioFile,
    dir: &std::path::Path,
    name: &str,
    ns: Option<Vec<usize>>,
    seeds: u64,
    max_rounds: Option<usize>,
) -> Result<SweepOutcome, CliError> {
    let base_spec: GraphSpec = match &file.graph {
        GraphField::Named(text) => text
            .parse()
            .map_err(|e: anonet::GraphError| CliError::Usage(e.to_string()))?,
        GraphField::Explicit { .. } => {
            return Err(CliError::Usage(
                "sweeps need a named graph family, not an explicit edge list".into(),
            ))
        }
    };
    if matches!(file.values, ValuesField::List(_)) && ns.is_some() {
        return Err(CliError::Usage(
            "sweeping n needs generator-form values (`random(seed=N)`)".into(),
        ));
    }

    let ns = ns.unwrap_or_else(|| vec![base_spec.node_count()]);
    let mut text = String::new();
    let _ = writeln!(text, "sweep: {name}");
    let _ = writeln!(text, "protocol: {}", file.protocol);
    let _ = writeln!(text, "base graph: {base_spec}");
    let _ = writeln!(text, "n values: {ns:?}");
    let _ = writeln!(text, "seeds per n: {seeds}");

    let mut runs = 0usize;
    let mut passed = 0usize;
    let mut oracle_failures = 0usize;
    let mut violations = 0usize;
    let mut max_rounds_seen: Option<(usize, usize, u64)> = None;
    let mut failures = String::new();
    let mut worst: Option<CliError> = None;

    for &n in &ns {
        for seed in 0..seeds {
            runs += 1;
            let spec = base_spec.with_node_count(n).with_seed(seed);
            let per_run = ScenarioFile {
                protocol: file.protocol.clone(),
                graph: GraphField::Named(spec.to_string()),
                values: match &file.values {
                    ValuesField::List(vs) => ValuesField::List(vs.clone()),
                    ValuesField::Generator(_) => {
                        ValuesField::Generator(format!("random(seed={seed})"))
                    }
                },
                k: file.k,
                spec: file.spec.clone(),
                h_max: file.h_max,
                m_max: file.m_max,
                max_rounds: max_rounds.or(file.max_rounds),
                max_blocks: file.max_blocks,
                oracle_check: Some(true),
                trace: None,
                schedule: file.schedule.clone(),
            };
            let plan = plan_from(&per_run, dir, name, Overrides::default())?;
            debug_assert_eq!(plan.trace, TraceMode::Off);
            match exec::execute(&plan) {
                Ok(report) => match report.verdict {
                    Verdict::Agree => {
                        passed += 1;
                        let record = max_rounds_seen.map_or(true, |(r, _, _)| report.rounds > r);
                        if record {
                            max_rounds_seen = Some((report.rounds, n, seed));
                        }
                    }
                    Verdict::Disagree(why) => {
                        oracle_failures += 1;
                        let _ = writeln!(failures, "FAIL n={n} seed={seed}: oracle — {why}");
                        worst = worse(worst, Some(CliError::Oracle(why)));
                    }
                    Verdict::Unchecked => unreachable!("sweep forces the oracle on"),
                },
                Err(CliError::Invariant(why)) => {
                    violations += 1;
                    let _ = writeln!(failures, "FAIL n={n} seed={seed}: invariant — {why}");
                    worst = worse(worst, Some(CliError::Invariant(why)));
                }
                // A bad parameter combination poisons the whole sweep.
                Err(other) => return Err(other),
            }
        }
    }

    let _ = writeln!(text, "runs: {runs}");
    let _ = writeln!(text, "pass: {passed}");
    let _ = writeln!(text, "oracle failures: {oracle_failures}");
    let _ = writeln!(text, "invariant violations: {violations}");
    match max_rounds_seen {
        Some((rounds, n, seed)) => {
            let _ = writeln!(text, "max rounds to quiescence: {rounds} (n={n}, seed={seed})");
        }
        None => {
            let _ = writeln!(text, "max rounds to quiescence: n/a (no passing runs)");
        }
    }
    text.push_str(&failures);
    Ok(SweepOutcome { text, failure: worst })
}

/// Ring-replication audit: the scenario's protocol runs on `ring(m)` and
/// `ring(k*m)` with inputs tiled `k` times; anonymous nodes cannot tell
/// the rings apart, so per-round states must match node-for-node
/// (index mod m). A divergence is an engine/protocol invariant violation.
pub fn run_replication(
    file: &ScenarioFile,
    dir: &std::path::Path,
    name: &str,
    ms: Vec<usize>,
    ks: Vec<usize>,
    seeds: u64,
) -> Result<SweepOutcome, CliError> {
    let probe = plan_from(file, dir, name, Overrides::default())?;
    let alphabet_max = probe.alphabet_max;

    let mut text = String::new();
    let _ = writeln!(text, "replication audit: {name}");
    let _ = writeln!(text, "protocol: {}", file.protocol);
    let _ = writeln!(text, "m values: {ms:?}");
    let _ = writeln!(text, "k values: {ks:?}");
    let _ = writeln!(text, "seeds per pair: {seeds}");

    let mut checks = 0usize;
    let mut passed = 0usize;
    let mut failures = String::new();
    let mut worst: Option<CliError> = None;

    for &m in &ms {
        if m < 2 {
            return Err(CliError::Usage("replication needs m >= 2 (ring size)".into()));
        }
        for &k in &ks {
            if k < 2 {
                return Err(CliError::Usage("replication needs k >= 2 (copies)".into()));
            }
            for seed in 0..seeds {
                checks += 1;
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                // Frequency counts indicator inputs; everything else uses
                // the scenario's alphabet.
                let draw_max = match &probe.choice {
                    ProtocolChoice::Frequency => 1,
                    _ => alphabet_max,
                };
                let inputs: Vec<Value> =
                    (0..m).map(|_| rng.gen_range(0..=draw_max)).collect();
                // The larger ring has k*m nodes; cover its diameter.
                let hop_cap = (k * m) as u32;
                let rounds = 3 * k * m + 40;
                let outcome = match &probe.choice {
                    ProtocolChoice::Average => check_replication(
                        &AveragingProtocol::new(alphabet_max, hop_cap),
                        &inputs,
                        k,
                        rounds,
                    ),
                    ProtocolChoice::Tracker(ExtremumKind::Max) => {
                        check_replication(&TrackerProtocol::max(hop_cap), &inputs, k, rounds)
                    }
                    ProtocolChoice::Tracker(ExtremumKind::Min) => {
                        check_replication(&TrackerProtocol::min(hop_cap), &inputs, k, rounds)
                    }
                    ProtocolChoice::Frequency => check_replication(
                        &FrequencyProtocol { m_max: m as Value, hop_cap },
                        &inputs,
                        k,
                        rounds,
                    ),
                    ProtocolChoice::Compiled { spec, spec_name } => {
                        let protocol = compile(spec, hop_cap)
                            .map_err(|e| CliError::Usage(format!("{spec_name}: {e}")))?;
                        check_replication(&protocol, &inputs, k, rounds)
                    }
                };
                match outcome {
                    Ok(()) => passed += 1,
                    Err(e) => {
                        let why = e.to_string();
                        let _ = writeln!(failures, "FAIL m={m} k={k} seed={seed}: {why}");
                        worst = worse(worst, Some(CliError::Invariant(why)));
                    }
                }
            }
        }
    }

    let _ = writeln!(text, "checks: {checks}");
    let _ = writeln!(text, "pass: {passed}");
    let _ = writeln!(text, "divergences: {}", checks - passed);
    text.push_str(&failures);
    Ok(SweepOutcome { text, failure: worst })
}
