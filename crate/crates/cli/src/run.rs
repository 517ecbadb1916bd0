//! The `run` sweep: one execution per (seed, trial), checked and summarized.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use ringpulse::fabric::{PortAssignment, RunOutcome, SchedulerPolicy};
use ringpulse::oracle::{
    check_a3_snapshot, check_trace, trial_rng, Check, CheckStatus, InvariantReport, Reproducer,
};
use ringpulse::protocols::RingSetup;
use ringpulse::trace::{execute, ExecutionTrace};
use ringpulse::Error;
use serde::Serialize;

use crate::config::{ExperimentConfig, Resolved, Schedule, Wiring};
use crate::CliError;

/// Above this many expected pulses, non-terminating protocols run in
/// compressed form and only their end state is checked.
pub const COMPRESS_ABOVE: u128 = 20_000_000;

#[derive(Clone, Debug, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Events,
    Compressed,
}

#[derive(Clone, Debug, Serialize)]
pub struct RunEntry {
    pub seed: u64,
    pub trial: u64,
    pub ids: Vec<u64>,
    pub id_max: u64,
    pub scheduler: String,
    pub mode: Mode,
    pub outcome: String,
    pub total_pulses: u128,
    pub expected_pulses: u128,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
    pub report: InvariantReport,
}

#[derive(Debug, Serialize)]
pub struct SweepReport {
    pub config: ExperimentConfig,
    pub all_pass: bool,
    pub step_limit_hit: bool,
    pub runs: Vec<RunEntry>,
}

#[derive(Debug, Serialize)]
pub struct SummaryRow {
    pub protocol: String,
    pub n: usize,
    pub id_max: u64,
    pub seeds: String,
    pub total_pulses_min: u128,
    pub total_pulses_max: u128,
    pub all_invariants_pass: bool,
}

pub struct Paths {
    pub out_dir: PathBuf,
    pub report: PathBuf,
    pub summary: PathBuf,
}

impl Paths {
    pub fn new(out_dir: PathBuf, resolved: &Resolved) -> Self {
        Paths {
            report: resolved.report_out.clone().unwrap_or_else(|| out_dir.join("report.json")),
            summary: out_dir.join("summary.csv"),
            out_dir,
        }
    }
}

fn file_stem(setup: &RingSetup, seed: u64, trial: u64) -> String {
    format!("{}-s{seed}-t{trial}", setup.protocol.name().replace('+', "_"))
}

fn display(path: &Path) -> String {
    path.display().to_string()
}

fn outcome_name(outcome: RunOutcome) -> &'static str {
    match outcome {
        RunOutcome::Quiescent => "quiescent",
        RunOutcome::AllTerminated => "all_terminated",
        RunOutcome::StepLimit => "step_limit",
    }
}

fn stopped_early(setup: &RingSetup, trace: &ExecutionTrace) -> InvariantReport {
    let mut report = InvariantReport::new(setup.protocol.name());
    report.push(Check {
        name: "reached_quiescence".into(),
        claim: "the run goes quiet within the delivery budget".into(),
        status: CheckStatus::Incomplete,
        first_violation: None,
        detail: Some(format!("stopped after {} deliveries", trace.record.snapshot.deliveries)),
    });
    report.reproducer = Some(Reproducer::from_trace(trace));
    report
}

fn step_limit(setup: &RingSetup, mult: f64) -> u64 {
    let expected = setup.protocol.pulse_total(setup.n(), setup.id_max()).max(1) as f64;
    let limit = (expected * mult).ceil();
    if limit >= u64::MAX as f64 {
        u64::MAX
    } else {
        (limit as u64).max(1)
    }
}

pub fn sweep(resolved: &Resolved, paths: &Paths) -> Result<SweepReport, CliError> {
    if let Some(dir) = &resolved.trace_out {
        std::fs::create_dir_all(dir)?;
    }
    let mut runs = Vec::new();
    for seed in resolved.seeds.iter() {
        for trial in 0..resolved.trials {
            runs.push(one_run(resolved, paths, seed, trial)?);
        }
    }
    let all_pass = runs.iter().all(|r| r.report.all_pass());
    let step_limit_hit = runs.iter().any(|r| r.outcome == "step_limit");
    Ok(SweepReport {
        config: resolved.config.clone(),
        all_pass,
        step_limit_hit,
        runs,
    })
}

fn one_run(resolved: &Resolved, paths: &Paths, seed: u64, trial: u64) -> Result<RunEntry, CliError> {
    let mut rng = trial_rng(seed, trial);
    let ids = resolved.ids.draw(&mut rng);
    let n = ids.len();
    let assignment = match &resolved.wiring {
        Wiring::Oriented => PortAssignment::oriented(n)?,
        Wiring::Random => PortAssignment::random(n, &mut rng)?,
        Wiring::Fixed(a) => a.clone(),
    };
    let setup = RingSetup::new(resolved.protocol, ids.clone(), assignment).with_node_seed(rng.gen());
    let policy = match &resolved.scheduler {
        Schedule::Random => SchedulerPolicy::UniformRandom { seed: rng.gen() },
        Schedule::Fixed(p) => p.clone(),
    };
    let expected = setup.protocol.pulse_total(n, setup.id_max());
    let mut entry = RunEntry {
        seed,
        trial,
        ids,
        id_max: setup.id_max(),
        scheduler: policy.name().to_string(),
        mode: Mode::Events,
        outcome: String::new(),
        total_pulses: 0,
        expected_pulses: expected,
        trace_path: None,
        report: InvariantReport::default(),
    };

    if !setup.protocol.terminates() && expected > COMPRESS_ABOVE {
        let summary = setup.build()?.run_bursts(u64::MAX)?;
        entry.mode = Mode::Compressed;
        entry.scheduler = "compressed".into();
        entry.outcome = "quiescent".into();
        entry.total_pulses = summary.snapshot.sends;
        entry.report = check_a3_snapshot(&setup, &summary.snapshot)?;
        entry.report.note("compressed run: end state checked, per-event checks skipped");
        return Ok(entry);
    }

    let trace = match execute(&setup, policy, step_limit(&setup, resolved.step_mult)) {
        Ok(trace) => trace,
        Err(Error::Stalled) => {
            let mut report = InvariantReport::new(setup.protocol.name());
            report.verdict("no_stall", "pulses in flight can always be consumed", false, || {
                "pulses in flight, none deliverable".into()
            });
            entry.outcome = "stalled".into();
            entry.report = report;
            return Ok(entry);
        }
        Err(e) => return Err(e.into()),
    };
    entry.outcome = outcome_name(trace.record.outcome).into();
    entry.total_pulses = trace.record.snapshot.sends;
    entry.report = match check_trace(&trace) {
        Ok(report) => report,
        Err(Error::NotQuiescent) => stopped_early(&setup, &trace),
        Err(e) => return Err(e.into()),
    };
    let stem = file_stem(&setup, seed, trial);
    if let Some(dir) = &resolved.trace_out {
        let path = dir.join(format!("{stem}.jsonl"));
        trace.write_jsonl(&path)?;
        entry.trace_path = Some(display(&path));
    }
    if !entry.report.all_pass() {
        let path = match &entry.trace_path {
            Some(p) => PathBuf::from(p),
            None => {
                let dir = paths.out_dir.join("reproducers");
                std::fs::create_dir_all(&dir)?;
                let path = dir.join(format!("{stem}.jsonl"));
                trace.write_jsonl(&path)?;
                path
            }
        };
        if let Some(r) = entry.report.reproducer.as_mut() {
            r.trace_path = Some(display(&path));
        }
    }
    Ok(entry)
}

pub fn summarize(report: &SweepReport, resolved: &Resolved) -> Vec<SummaryRow> {
    let mut groups: BTreeMap<(usize, u64), SummaryRow> = BTreeMap::new();
    for run in &report.runs {
        let row = groups.entry((run.ids.len(), run.id_max)).or_insert_with(|| SummaryRow {
            protocol: resolved.protocol.name().into(),
            n: run.ids.len(),
            id_max: run.id_max,
            seeds: resolved.seeds.to_string(),
            total_pulses_min: u128::MAX,
            total_pulses_max: 0,
            all_invariants_pass: true,
        });
        row.total_pulses_min = row.total_pulses_min.min(run.total_pulses);
        row.total_pulses_max = row.total_pulses_max.max(run.total_pulses);
        row.all_invariants_pass &= run.report.all_pass();
    }
    groups.into_values().collect()
}

pub fn write_outputs(report: &SweepReport, rows: &[SummaryRow], paths: &Paths) -> Result<(), CliError> {
    for path in [&paths.report, &paths.summary] {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            std::fs::create_dir_all(parent)?;
        }
    }
    let mut json = serde_json::to_string_pretty(report)?;
    json.push('\n');
    std::fs::write(&paths.report, json)?;
    let mut csv = csv::Writer::from_path(&paths.summary)?;
    for row in rows {
        csv.serialize(row)?;
    }
    csv.flush()?;
    Ok(())
}
