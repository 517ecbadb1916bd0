//! Execution traces: running a setup under a scheduler, JSON-lines export,
//! and byte-exact replay.
//!
//! A trace file is one JSON object per line: a header carrying the setup,
//! the scheduler that produced the run and the delivery script, then one
//! line per event, then a final snapshot line.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::fabric::{
    ChannelId, Endpoint, FinalSnapshot, RunOutcome, RunRecord, Scheduler, SchedulerPolicy,
    TraceEvent,
};
use crate::protocols::RingSetup;
use crate::{Error, Result};

pub const FORMAT: &str = "ringpulse-trace/1";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExecutionTrace {
    pub setup: RingSetup,
    pub scheduler: SchedulerPolicy,
    pub step_limit: u64,
    pub record: RunRecord,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum HeaderTag {
    Header,
}

#[derive(Clone, Copy, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum FinalTag {
    Final,
}

// Plain structs rather than a tagged enum: tagged enums are buffered by
// serde, which cannot carry the u128 totals in the snapshot.
#[derive(Serialize, Deserialize)]
struct Header {
    #[serde(rename = "type")]
    tag: HeaderTag,
    format: String,
    setup: RingSetup,
    scheduler: SchedulerPolicy,
    step_limit: u64,
    script: Vec<ChannelId>,
}

#[derive(Serialize, Deserialize)]
struct Final {
    #[serde(rename = "type")]
    tag: FinalTag,
    outcome: RunOutcome,
    snapshot: FinalSnapshot,
}

/// Runs `setup` to completion with event recording on.
///
/// Running out of steps is not an error here: the trace comes back with
/// outcome [`RunOutcome::StepLimit`] so that it can be saved and replayed.
pub fn execute(setup: &RingSetup, scheduler: SchedulerPolicy, step_limit: u64) -> Result<ExecutionTrace> {
    let mut net = setup.build()?;
    net.set_recording(true);
    let mut sched = Scheduler::new(scheduler.clone());
    let record = match net.run_to_quiescence(&mut sched, step_limit) {
        Ok(record) => record,
        Err(Error::StepLimit { partial, .. }) => *partial,
        Err(e) => return Err(e),
    };
    Ok(ExecutionTrace {
        setup: setup.clone(),
        scheduler,
        step_limit,
        record,
    })
}

impl ExecutionTrace {
    pub fn events(&self) -> &[TraceEvent] {
        &self.record.events
    }

    /// The channel of every delivery, in order; replaying it as a script
    /// reproduces the run.
    pub fn delivery_script(&self) -> Vec<ChannelId> {
        let assignment = &self.setup.assignment;
        self.record
            .events
            .iter()
            .filter_map(|e| match e {
                TraceEvent::Deliver { node, port, .. } | TraceEvent::Discard { node, port, .. } => {
                    Some(assignment.incoming(Endpoint { node: *node, port: *port }))
                }
                _ => None,
            })
            .collect()
    }

    pub fn to_jsonl(&self) -> Result<String> {
        let mut out = String::new();
        let header = Header {
            tag: HeaderTag::Header,
            format: FORMAT.to_string(),
            setup: self.setup.clone(),
            scheduler: self.scheduler.clone(),
            step_limit: self.step_limit,
            script: self.delivery_script(),
        };
        out.push_str(&serde_json::to_string(&header)?);
        out.push('\n');
        for event in &self.record.events {
            out.push_str(&serde_json::to_string(event)?);
            out.push('\n');
        }
        let fin = Final {
            tag: FinalTag::Final,
            outcome: self.record.outcome,
            snapshot: self.record.snapshot.clone(),
        };
        out.push_str(&serde_json::to_string(&fin)?);
        out.push('\n');
        Ok(out)
    }

    pub fn write_jsonl(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_jsonl()?)?;
        Ok(())
    }

    pub fn read_jsonl(path: &Path) -> Result<(ExecutionTrace, Vec<ChannelId>)> {
        Self::from_jsonl(&fs::read_to_string(path)?)
    }

    /// Parses a trace file; also returns the embedded delivery script.
    pub fn from_jsonl(text: &str) -> Result<(ExecutionTrace, Vec<ChannelId>)> {
        let mut lines = text.lines().filter(|l| !l.trim().is_empty());
        let first = lines
            .next()
            .ok_or_else(|| Error::MalformedTrace("empty file".into()))?;
        let Header {
            format,
            setup,
            scheduler,
            step_limit,
            script,
            ..
        } = serde_json::from_str(first)
            .map_err(|e| Error::MalformedTrace(format!("bad header: {e}")))?;
        if format != FORMAT {
            return Err(Error::MalformedTrace(format!("unknown format {format:?}")));
        }
        let mut events = Vec::new();
        let mut fin = None;
        for (i, line) in lines.enumerate() {
            if fin.is_some() {
                return Err(Error::MalformedTrace(format!(
                    "line {} follows the final snapshot",
                    i + 2
                )));
            }
            if let Ok(Final {
                outcome, snapshot, ..
            }) = serde_json::from_str::<Final>(line)
            {
                fin = Some((outcome, snapshot));
                continue;
            }
            let event = serde_json::from_str(line)
                .map_err(|e| Error::MalformedTrace(format!("line {}: {e}", i + 2)))?;
            events.push(event);
        }
        let (outcome, snapshot) =
            fin.ok_or_else(|| Error::MalformedTrace("missing final snapshot".into()))?;
        let trace = ExecutionTrace {
            setup,
            scheduler,
            step_limit,
            record: RunRecord {
                events,
                outcome,
                snapshot,
            },
        };
        Ok((trace, script))
    }
}

/// Where a replayed event stream first differs from the file.
#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct Divergence {
    /// 1-based line number in the trace file.
    pub line: usize,
    /// 0-based index among event lines, when the difference is on one.
    pub event_index: Option<usize>,
    pub expected: Option<String>,
    pub found: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize)]
pub struct ReplayReport {
    pub lines: usize,
    pub divergence: Option<Divergence>,
    /// Set when the embedded script could not be executed to the end.
    pub error: Option<String>,
}

impl ReplayReport {
    pub fn identical(&self) -> bool {
        self.divergence.is_none() && self.error.is_none()
    }
}

/// Re-executes the delivery script embedded in `text` and compares the
/// regenerated file line by line.
pub fn replay_jsonl(text: &str) -> Result<ReplayReport> {
    let (trace, script) = ExecutionTrace::from_jsonl(text)?;
    let mut net = trace.setup.build()?;
    net.set_recording(true);
    let mut sched = Scheduler::script(script);
    let (record, error) = match net.run_to_quiescence(&mut sched, trace.step_limit) {
        Ok(record) => (record, None),
        Err(Error::StepLimit { partial, .. }) => (*partial, None),
        Err(e) => (net.take_record(RunOutcome::StepLimit), Some(e.to_string())),
    };
    let replayed = ExecutionTrace {
        setup: trace.setup,
        scheduler: trace.scheduler,
        step_limit: trace.step_limit,
        record,
    };
    let regenerated = replayed.to_jsonl()?;
    let original: Vec<&str> = text.lines().filter(|l| !l.trim().is_empty()).collect();
    let fresh: Vec<&str> = regenerated.lines().collect();
    let event_lines = replayed.record.events.len().max(trace.record.events.len());
    let divergence = (0..original.len().max(fresh.len()))
        .find(|i| original.get(*i) != fresh.get(*i))
        .map(|i| Divergence {
            line: i + 1,
            event_index: (i >= 1 && i <= event_lines).then(|| i - 1),
            expected: original.get(i).map(|s| s.to_string()),
            found: fresh.get(i).map(|s| s.to_string()),
        });
    Ok(ReplayReport {
        lines: original.len(),
        divergence,
        error,
    })
}
