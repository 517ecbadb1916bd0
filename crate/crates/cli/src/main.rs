//! `ringpulse`: sweeps, replays and lower-bound witnesses for pulse-only ring elections.

mod config;
mod run;

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use ringpulse::oracle::{
    assert_patterns_unique, build_prefix_witness, estimate_distinct_after_resample,
    estimate_unique_max, replay_witness, solitude_patterns, DESK_THRESHOLD,
};
use ringpulse::protocols::ProtocolKind;
use ringpulse::trace::replay_jsonl;
use serde::Serialize;

use config::ExperimentConfig;

pub const OUT_DIR_ENV: &str = "RINGPULSE_OUT_DIR";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Core(#[from] ringpulse::Error),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

mod exit {
    pub const USAGE: u8 = 1;
    pub const FAILED: u8 = 2;
    pub const STEP_LIMIT: u8 = 3;
}

#[derive(Parser, Debug)]
#[command(name = "ringpulse", version, about = "Leader election on rings that carry only pulses")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Run a protocol over a seed range and check every run
    Run {
        /// JSON config; flags override its fields
        #[arg(long)]
        config: Option<PathBuf>,
        /// Output directory (default: $RINGPULSE_OUT_DIR or ./ringpulse-out)
        #[arg(long = "out-dir")]
        out_dir: Option<PathBuf>,
        #[command(flatten)]
        flags: Box<ExperimentConfig>,
    },
    /// Re-execute a trace's delivery script and compare it byte for byte
    Replay { trace: PathBuf },
    /// Build the shared-prefix witness from single-node patterns and replay it
    Lowerbound {
        #[arg(long)]
        protocol: ProtocolKind,
        /// Number of ids (1..=k) whose patterns are extracted
        #[arg(long)]
        k: u64,
        /// Ring size of the witness
        #[arg(long)]
        n: u64,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo estimates for sampled ids
    Estimate {
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 2.0)]
        c: f64,
        #[arg(long, default_value_t = 10_000)]
        trials: u64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Simulate the full redrawing election instead of drawing ids only
        #[arg(long)]
        resample: bool,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

fn out_dir(flag: Option<PathBuf>) -> PathBuf {
    flag.or_else(|| std::env::var_os(OUT_DIR_ENV).map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("ringpulse-out"))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text)?;
    Ok(())
}

fn cmd_run(config: Option<PathBuf>, dir: Option<PathBuf>, flags: ExperimentConfig) -> Result<u8, CliError> {
    let base = match config {
        Some(path) => ExperimentConfig::load(&path)?,
        None => ExperimentConfig::default(),
    };
    let resolved = base.overlay(flags).resolve()?;
    let paths = run::Paths::new(out_dir(dir), &resolved);
    let report = run::sweep(&resolved, &paths)?;
    let rows = run::summarize(&report, &resolved);
    run::write_outputs(&report, &rows, &paths)?;

    for row in &rows {
        let total = if row.total_pulses_min == row.total_pulses_max {
            row.total_pulses_min.to_string()
        } else {
            format!("{}..{}", row.total_pulses_min, row.total_pulses_max)
        };
        println!(
            "{} n={} id_max={} seeds={} total={} invariants={}",
            row.protocol,
            row.n,
            row.id_max,
            row.seeds,
            total,
            if row.all_invariants_pass { "pass" } else { "FAIL" }
        );
    }
    let notes: BTreeSet<&str> = report.runs.iter().flat_map(|r| r.report.notes.iter().map(String::as_str)).collect();
    for note in notes {
        println!("note: {note}");
    }
    println!("report: {}", paths.report.display());
    println!("summary: {}", paths.summary.display());

    for r in report.runs.iter().filter(|r| !r.report.all_pass()) {
        let failing: Vec<&str> = r.report.failures().map(|c| c.name.as_str()).collect();
        let repro = r
            .report
            .reproducer
            .as_ref()
            .and_then(|p| p.trace_path.as_deref())
            .unwrap_or("-");
        eprintln!(
            "seed {} trial {} ({}): {} | reproducer: {repro}",
            r.seed,
            r.trial,
            r.outcome,
            failing.join(", ")
        );
    }
    Ok(if report.step_limit_hit {
        exit::STEP_LIMIT
    } else if !report.all_pass {
        exit::FAILED
    } else {
        0
    })
}

fn cmd_replay(path: &Path) -> Result<u8, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read {}: {e}", path.display())))?;
    let report = replay_jsonl(&text).map_err(|e| CliError::Usage(e.to_string()))?;
    if report.identical() {
        println!("identical: {} lines", report.lines);
        return Ok(0);
    }
    if let Some(d) = &report.divergence {
        match d.event_index {
            Some(i) => println!("diverged at event {i} (line {})", d.line),
            None => println!("diverged at line {}", d.line),
        }
        println!("  recorded: {}", d.expected.as_deref().unwrap_or("<end of file>"));
        println!("  replayed: {}", d.found.as_deref().unwrap_or("<end of run>"));
    }
    if let Some(e) = &report.error {
        println!("replay stopped: {e}");
    }
    Ok(exit::FAILED)
}

#[derive(Serialize)]
struct WitnessFile {
    protocol: ProtocolKind,
    k: u64,
    n: u64,
    patterns_distinct: bool,
    witness: ringpulse::oracle::PrefixWitness,
    replay: ringpulse::oracle::WitnessReplay,
    measured_pulses: u64,
    bound_met: bool,
}

fn cmd_lowerbound(protocol: ProtocolKind, k: u64, n: u64, out: Option<PathBuf>) -> Result<u8, CliError> {
    if n == 0 || k < n {
        return Err(CliError::Usage(format!("need k >= n >= 1, got k={k} n={n}")));
    }
    let patterns = solitude_patterns(protocol, 1..=k)?;
    let distinct = assert_patterns_unique(&patterns);
    if !distinct.all_pass() {
        for c in distinct.failures() {
            eprintln!("{}: {}", c.name, c.detail.as_deref().unwrap_or(""));
        }
        return Ok(exit::FAILED);
    }
    let witness = build_prefix_witness(&patterns, n)?;
    let replay = replay_witness(protocol, &witness, &patterns)?;
    let measured = replay.matched_deliveries;
    let bound_met = measured >= witness.pulse_lower_bound;
    let path = out.unwrap_or_else(|| {
        out_dir(None).join(format!("witness-{}-k{k}-n{n}.json", protocol.name().replace('+', "_")))
    });
    println!(
        "ids {:?} share a {}-bit prefix (needed {}); {} pulses delivered before divergence, bound {}",
        witness.id_subset, witness.common_prefix_length, witness.prefix_length, measured, witness.pulse_lower_bound
    );
    write_json(
        &path,
        &WitnessFile {
            protocol,
            k,
            n,
            patterns_distinct: true,
            witness,
            replay,
            measured_pulses: measured,
            bound_met,
        },
    )?;
    println!("witness: {}", path.display());
    Ok(if bound_met { 0 } else { exit::FAILED })
}

fn cmd_estimate(n: usize, c: f64, trials: u64, seed: u64, resample: bool, out: Option<PathBuf>) -> Result<u8, CliError> {
    let usage = |e: ringpulse::Error| CliError::Usage(e.to_string());
    let (freq, json, label) = if resample {
        let est = estimate_distinct_after_resample(n, c, trials, seed).map_err(usage)?;
        println!(
            "n={n} c={c} trials={trials}: distinct ids {:.4}, unique max {:.4}, elected and oriented {:.4}",
            est.distinct_ids_freq, est.unique_max_freq, est.elected_and_oriented_freq
        );
        (est.distinct_ids_freq, serde_json::to_value(&est)?, "resample")
    } else {
        let est = estimate_unique_max(n, c, trials, seed).map_err(usage)?;
        println!(
            "n={n} c={c} trials={trials}: unique max {:.4}, longest draw <= {:.1} bits in {:.4}",
            est.unique_max_freq, est.u_bound, est.max_bits_within_u_freq
        );
        (est.unique_max_freq.min(est.max_bits_within_u_freq), serde_json::to_value(&est)?, "unique-max")
    };
    let path = out.unwrap_or_else(|| out_dir(None).join(format!("estimate-{label}-n{n}.json")));
    write_json(&path, &json)?;
    println!("estimate: {}", path.display());
    Ok(if freq >= DESK_THRESHOLD { 0 } else { exit::FAILED })
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { exit::USAGE } else { 0 });
        }
    };
    let result = match cli.command {
        Command::Run { config, out_dir, flags } => cmd_run(config, out_dir, *flags),
        Command::Replay { trace } => cmd_replay(&trace),
        Command::Lowerbound { protocol, k, n, out } => cmd_lowerbound(protocol, k, n, out),
        Command::Estimate { n, c, trials, seed, resample, out } => cmd_estimate(n, c, trials, seed, resample, out),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                CliError::Usage(_) => exit::USAGE,
                _ => exit::FAILED,
            })
        }
    }
}
