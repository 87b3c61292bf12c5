//! Command-line front end.
//!
//! Exit codes: 0 on success, 1 when the input trace is not well formed,
//! 2 on usage, I/O, parse and query errors.

use std::collections::BTreeSet;
use std::ffi::OsString;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::error::Error;
use crate::locksets::{self, Analysis, LockSetReport};
use crate::reorder::{self, DEFAULT_CAP};
use crate::trace::{self, EventId, LockId, Operation, ThreadId, Trace};
use crate::tracegen::{self, GenParams};
use crate::wellformed::{self, WfViolation};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ILL_FORMED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "locksem", version, about = "Critical sections and lock sets of fork/join/lock traces")]
struct Cli {
    /// Emit JSON instead of text.
    #[arg(long, global = true)]
    json: bool,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check a trace for well-formedness.
    Validate { file: PathBuf },
    /// List the entry and exit point of every critical section.
    Exits { file: PathBuf },
    /// Compute lock sets for every event.
    Locksets {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = Mode::Diff)]
        mode: Mode,
        /// Decide protection by enumerating all reorderings.
        #[arg(long)]
        oracle: bool,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Decide whether one event must precede another under all reorderings.
    MustPrecede {
        file: PathBuf,
        #[arg(long)]
        from: u32,
        #[arg(long)]
        to: u32,
    },
    /// Enumerate or count correctly reordered prefixes.
    Crp {
        file: PathBuf,
        #[arg(long, value_enum, default_value_t = CrpAction::Enumerate)]
        action: CrpAction,
        #[arg(long, default_value_t = DEFAULT_CAP)]
        cap: usize,
    },
    /// Generate a random well-formed trace.
    Gen {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 3)]
        threads: usize,
        #[arg(long, default_value_t = 2)]
        locks: usize,
        #[arg(long, default_value_t = 12)]
        events: usize,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Mode {
    PerThread,
    Trace,
    Diff,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CrpAction {
    Enumerate,
    Count,
}

#[derive(Debug)]
enum Failure {
    Usage(String),
    IllFormed(Vec<WfViolation>),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<io::Error> for Failure {
    fn from(e: io::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

impl From<serde_json::Error> for Failure {
    fn from(e: serde_json::Error) -> Self {
        Failure::Usage(e.to_string())
    }
}

/// Parses `args` (including the program name) and runs one command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                err.write_all(text.as_bytes())
            } else {
                out.write_all(text.as_bytes())
            };
            return code;
        }
    };
    match execute(&cli, out) {
        Ok(code) => code,
        Err(Failure::Usage(msg)) => {
            let _ = writeln!(err, "error: {msg}");
            EXIT_USAGE
        }
        Err(Failure::IllFormed(violations)) => {
            let _ = writeln!(err, "error: trace is not well formed");
            for v in violations {
                let _ = writeln!(err, "  {v}");
            }
            EXIT_ILL_FORMED
        }
    }
}

fn read_trace(path: &Path) -> Result<Trace, Failure> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))?;
    trace::parse_trace(&text).map_err(|e| Failure::Usage(format!("{}: {e}", path.display())))
}

fn read_well_formed(path: &Path) -> Result<Trace, Failure> {
    let trace = read_trace(path)?;
    let violations = wellformed::validate(&trace);
    if violations.is_empty() {
        Ok(trace)
    } else {
        Err(Failure::IllFormed(violations))
    }
}

fn write_json(out: &mut dyn Write, value: &impl Serialize) -> Result<(), Failure> {
    serde_json::to_writer_pretty(&mut *out, value)?;
    writeln!(out)?;
    Ok(())
}

fn execute(cli: &Cli, out: &mut dyn Write) -> Result<i32, Failure> {
    match &cli.command {
        Command::Validate { file } => {
            let trace = read_trace(file)?;
            let violations = wellformed::validate(&trace);
            if cli.json {
                write_json(out, &violations)?;
            } else if violations.is_empty() {
                writeln!(out, "well-formed")?;
            } else {
                for v in &violations {
                    writeln!(out, "{v}")?;
                }
            }
            Ok(if violations.is_empty() { EXIT_OK } else { EXIT_ILL_FORMED })
        }
        Command::Exits { file } => {
            let trace = read_well_formed(file)?;
            let pairs = locksets::entry_exit_pairs(&trace);
            if cli.json {
                write_json(out, &pairs)?;
            } else {
                for p in &pairs {
                    let open = if p.open { " (open)" } else { "" };
                    writeln!(
                        out,
                        "e{} -> e{}  lock {}  thread {}{open}",
                        p.entry, p.exit, p.lock, p.thread
                    )?;
                }
            }
            Ok(EXIT_OK)
        }
        Command::Locksets {
            file,
            mode,
            oracle,
            cap,
        } => {
            let trace = read_well_formed(file)?;
            lockset_command(&trace, *mode, *oracle, *cap, cli.json, out)?;
            Ok(EXIT_OK)
        }
        Command::MustPrecede { file, from, to } => {
            let trace = read_well_formed(file)?;
            let witness = reorder::must_precede_witness(&trace, EventId(*from), EventId(*to))?;
            if cli.json {
                write_json(
                    out,
                    &json!({ "from": from, "to": to, "holds": witness.is_none(), "witness": witness }),
                )?;
            } else {
                match witness {
                    None => writeln!(out, "true")?,
                    Some(w) => {
                        writeln!(out, "false")?;
                        writeln!(out, "witness: {w}")?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Crp { file, action, cap } => {
            let trace = read_well_formed(file)?;
            match action {
                CrpAction::Count => {
                    let n = reorder::count_crps(&trace, *cap)?;
                    if cli.json {
                        write_json(out, &json!({ "count": n }))?;
                    } else {
                        writeln!(out, "{n}")?;
                    }
                }
                CrpAction::Enumerate if cli.json => {
                    let all = reorder::enumerate_crps(&trace, *cap)?;
                    write_json(out, &all)?;
                }
                CrpAction::Enumerate => {
                    for candidate in reorder::crps(&trace, *cap) {
                        writeln!(out, "{}", candidate?)?;
                    }
                }
            }
            Ok(EXIT_OK)
        }
        Command::Gen {
            seed,
            threads,
            locks,
            events,
        } => {
            let trace = tracegen::generate(GenParams {
                seed: *seed,
                max_threads: *threads,
                max_locks: *locks,
                max_events: *events,
            });
            if cli.json {
                let events: Vec<_> = trace
                    .events()
                    .iter()
                    .map(|e| json!({ "id": e.id, "thread": e.thread, "op": e.op }))
                    .collect();
                write_json(out, &events)?;
            } else {
                out.write_all(trace::serialize(&trace).as_bytes())?;
            }
            Ok(EXIT_OK)
        }
    }
}

#[derive(Serialize)]
struct LockSetEntry {
    event_id: EventId,
    thread: ThreadId,
    op: Operation,
    lockset: BTreeSet<LockId>,
}

fn lockset_command(
    trace: &Trace,
    mode: Mode,
    oracle: bool,
    cap: usize,
    json: bool,
    out: &mut dyn Write,
) -> Result<(), Failure> {
    let report: LockSetReport = if oracle {
        locksets::diff_report_with_oracle(trace, cap)?
    } else if mode == Mode::PerThread {
        // skip the must-precede relation when it is not needed
        let rows = trace
            .events()
            .iter()
            .map(|e| {
                Ok(locksets::LockSetRow {
                    event_id: e.id,
                    thread: e.thread,
                    op: e.op.clone(),
                    per_thread: locksets::per_thread_lockset(trace, e.id)?,
                    trace_based: BTreeSet::new(),
                    gained: BTreeSet::new(),
                })
            })
            .collect::<Result<_, Error>>()?;
        LockSetReport { rows }
    } else {
        Analysis::new(trace).report()
    };

    match mode {
        Mode::Diff if json => write_json(out, &report),
        Mode::Diff => {
            out.write_all(render_table(trace, &report).as_bytes())?;
            Ok(())
        }
        Mode::PerThread | Mode::Trace => {
            let entries: Vec<LockSetEntry> = report
                .rows
                .into_iter()
                .map(|r| LockSetEntry {
                    event_id: r.event_id,
                    thread: r.thread,
                    op: r.op,
                    lockset: if mode == Mode::PerThread { r.per_thread } else { r.trace_based },
                })
                .collect();
            if json {
                write_json(out, &entries)
            } else {
                for e in &entries {
                    writeln!(out, "e{}  {}  {}", e.event_id, e.op, fmt_set(&e.lockset))?;
                }
                Ok(())
            }
        }
    }
}

fn fmt_set(locks: &BTreeSet<LockId>) -> String {
    let names: Vec<&str> = locks.iter().map(LockId::as_str).collect();
    format!("{{{}}}", names.join(", "))
}

/// One row per event, one column per thread, followed by the lock sets.
pub fn render_table(trace: &Trace, report: &LockSetReport) -> String {
    let threads: Vec<ThreadId> = trace.threads().into_iter().collect();
    let mut header = vec!["event".to_string()];
    header.extend(threads.iter().map(|t| format!("t{t}")));
    header.extend(["per-thread", "trace-based", "gained"].map(String::from));

    let mut rows = vec![header];
    for r in &report.rows {
        let mut row = vec![format!("e{}", r.event_id)];
        row.extend(
            threads
                .iter()
                .map(|&t| if t == r.thread { r.op.to_string() } else { String::new() }),
        );
        row.push(fmt_set(&r.per_thread));
        row.push(fmt_set(&r.trace_based));
        row.push(if r.gained.is_empty() { String::new() } else { fmt_set(&r.gained) });
        rows.push(row);
    }

    let widths: Vec<usize> = (0..rows[0].len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut text = String::new();
    for row in &rows {
        let cells: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        text.push_str(cells.join(" | ").trim_end());
        text.push('\n');
    }
    text
}
