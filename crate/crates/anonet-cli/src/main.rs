//! `anonet` — scenario runner for anonymous-network protocols.
//!
//! Exit codes: 0 success, 1 bad invocation or malformed scenario,
//! 2 protocol invariant violation, 3 run finished but disagrees with
//! the oracle.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};

mod exec;
mod scenario;
mod sweep;

use exec::{RunReport, TraceMode, Verdict};
use scenario::{CliError, Overrides};

#[derive(Parser)]
#[command(name = "anonet", version, about = "Run anonymous-network protocol scenarios")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario; write a summary (and optional trace) artifact.
    Run {
        /// Scenario file (TOML).
        file: PathBuf,
        /// Capture a per-round trace: `--trace` alone records outputs,
        /// `--trace=full` adds every node's memory.
        #[arg(long, value_enum, num_args = 0..=1, require_equals = true,
              default_missing_value = "outputs")]
        trace: Option<TraceMode>,
        /// Replace the seed of generator-form values.
        #[arg(long)]
        seed: Option<u64>,
        /// Round budget for reaching a fixed point.
        #[arg(long)]
        max_rounds: Option<usize>,
        /// Directory the artifacts are written to.
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Re-run a scenario across node counts and seeds; aggregate verdicts.
    Sweep {
        /// Scenario file (TOML).
        file: PathBuf,
        /// Node counts to sweep, e.g. `2..=12`.
        #[arg(long)]
        n: Option<String>,
        /// Value seeds per point; each runs with `random(seed=s)`, s < seeds.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
        /// Audit ring replication (`ring(m)` vs `ring(k*m)`) instead of
        /// sweeping sizes.
        #[arg(long)]
        replication: bool,
        /// Ring sizes for --replication.
        #[arg(long, default_value = "2..=6")]
        m: String,
        /// Copy counts for --replication.
        #[arg(long, default_value = "2..=3")]
        k: String,
        #[arg(long)]
        max_rounds: Option<usize>,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Print what the oracle expects of a scenario, without running it.
    Verify {
        /// Scenario file (TOML).
        file: PathBuf,
        /// Replace the seed of generator-form values.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Build a graph from a family spec and print its port table.
    GenGraph {
        /// e.g. `ring(6)`, `path(4)`, `complete(3)`, `singleton`,
        /// `random_connected(10, 5, seed=7)`.
        spec: String,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // Keep clap's rendering but remap its exit code: usage errors
            // are 1 here (2 means an invariant violation).
            use clap::error::ErrorKind;
            let code = match e.kind() {
                ErrorKind::DisplayHelp | ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{e}");
            ExitCode::from(e.code())
        }
    }
}

fn dispatch(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Run { file, trace, seed, max_rounds, out } => {
            let overrides = Overrides { seed, max_rounds, trace };
            let plan = scenario::load(&file, overrides)?;
            let report = exec::execute(&plan)?;
            emit(&out, &plan.name, &report)?;
            match report.verdict {
                Verdict::Agree | Verdict::Unchecked => Ok(()),
                Verdict::Disagree(why) => Err(CliError::Oracle(why)),
            }
        }
        Command::Sweep { file, n, seeds, replication, m, k, max_rounds, out } => {
            let (raw, dir, name) = scenario::load_raw(&file)?;
            if seeds == 0 {
                return Err(CliError::Usage("--seeds must be positive".into()));
            }
            let (outcome, artifact) = if replication {
                let ms = sweep::parse_range(&m)?;
                let ks = sweep::parse_range(&k)?;
                let outcome = sweep::run_replication(&raw, &dir, &name, ms, ks, seeds)?;
                (outcome, format!("{name}.replication.txt"))
            } else {
                let ns = n.as_deref().map(sweep::parse_range).transpose()?;
                let outcome = sweep::run_sweep(&raw, &dir, &name, ns, seeds, max_rounds)?;
                (outcome, format!("{name}.sweep.txt"))
            };
            write_artifact(&out, &artifact, &outcome.text)?;
            print!("{}", outcome.text);
            match outcome.failure {
                None => Ok(()),
                Some(e) => Err(e),
            }
        }
        Command::Verify { file, seed } => {
            let overrides = Overrides { seed, ..Overrides::default() };
            let plan = scenario::load(&file, overrides)?;
            println!("scenario: {}", plan.name);
            println!("graph: {}, {} nodes", plan.graph_desc, plan.graph.node_count());
            println!("values: {:?} ({})", plan.values, plan.values_desc);
            if let scenario::ProtocolChoice::Compiled { spec, spec_name } = &plan.choice {
                spec.validate_partition(plan.graph.node_count() as u32)
                    .map_err(|e| CliError::Oracle(format!("{spec_name}: {e}")))?;
                println!(
                    "partition: valid for populations up to {}",
                    plan.graph.node_count()
                );
            }
            println!("expected: {}", exec::expected_value(&plan)?);
            Ok(())
        }
        Command::GenGraph { spec } => {
            let parsed: anonet::GraphSpec =
                spec.parse().map_err(|e: anonet::GraphError| CliError::Usage(e.to_string()))?;
            let graph = parsed.build().map_err(|e| CliError::Usage(e.to_string()))?;
            println!("{parsed}: {} nodes", graph.node_count());
            print!("{}", graph.port_table());
            Ok(())
        }
    }
}

/// Writes the run artifacts and mirrors the summary to stdout. Artifacts
/// carry no paths or timestamps, so a rerun reproduces them byte for byte.
fn emit(out: &Path, name: &str, report: &RunReport) -> Result<(), CliError> {
    write_artifact(out, &format!("{name}.summary.txt"), &report.summary)?;
    if let Some(trace) = &report.trace {
        write_artifact(out, &format!("{name}.trace.txt"), trace)?;
    }
    print!("{}", report.summary);
    Ok(())
}

fn write_artifact(out: &Path, file_name: &str, text: &str) -> Result<(), CliError> {
    fs::create_dir_all(out)
        .map_err(|e| CliError::Usage(format!("cannot create {}: {e}", out.display())))?;
    let path = out.join(file_name);
    fs::write(&path, text)
        .map_err(|e| CliError::Usage(format!("cannot write {}: {e}", path.display())))
}
