use serde::{Deserialize, Serialize};

use crate::fabric::{ChannelId, SchedulerPolicy};
use crate::protocols::RingSetup;
use crate::trace::ExecutionTrace;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckStatus {
    Pass,
    Fail,
    /// The trace stops before the property can be decided.
    Incomplete,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Check {
    pub name: String,
    /// The guarantee being checked, in words.
    pub claim: String,
    pub status: CheckStatus,
    /// Index into the trace's event list of the first offending event.
    pub first_violation: Option<usize>,
    pub detail: Option<String>,
}

/// Enough to rerun a failing execution exactly.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Reproducer {
    pub setup: RingSetup,
    pub scheduler: SchedulerPolicy,
    pub script: Vec<ChannelId>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trace_path: Option<String>,
}

impl Reproducer {
    pub fn from_trace(trace: &ExecutionTrace) -> Self {
        Reproducer {
            setup: trace.setup.clone(),
            scheduler: trace.scheduler.clone(),
            script: trace.delivery_script(),
            trace_path: None,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub subject: String,
    pub checks: Vec<Check>,
    /// Observations that are not failures, e.g. several leaders when the
    /// maximum id is shared.
    pub notes: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reproducer: Option<Reproducer>,
}

impl InvariantReport {
    pub fn new(subject: impl Into<String>) -> Self {
        InvariantReport {
            subject: subject.into(),
            ..Default::default()
        }
    }

    pub fn all_pass(&self) -> bool {
        self.checks.iter().all(|c| c.status == CheckStatus::Pass)
    }

    pub fn check(&self, name: &str) -> Option<&Check> {
        self.checks.iter().find(|c| c.name == name)
    }

    pub fn status(&self, name: &str) -> Option<CheckStatus> {
        self.check(name).map(|c| c.status)
    }

    pub fn failures(&self) -> impl Iterator<Item = &Check> {
        self.checks.iter().filter(|c| c.status != CheckStatus::Pass)
    }

    pub fn push(&mut self, check: Check) {
        self.checks.push(check);
    }

    pub fn note(&mut self, note: impl Into<String>) {
        self.notes.push(note.into());
    }

    /// Adds a single pass/fail check decided outside any event walk.
    pub fn verdict(&mut self, name: &str, claim: &str, ok: bool, detail: impl FnOnce() -> String) {
        self.checks.push(Check {
            name: name.to_string(),
            claim: claim.to_string(),
            status: if ok { CheckStatus::Pass } else { CheckStatus::Fail },
            first_violation: None,
            detail: (!ok).then(detail),
        });
    }

    /// Appends another report's checks, prefixing their names.
    pub fn absorb(&mut self, prefix: &str, other: InvariantReport) {
        for mut c in other.checks {
            c.name = format!("{prefix}{}", c.name);
            self.checks.push(c);
        }
        self.notes.extend(other.notes);
    }

    pub(crate) fn attach_reproducer_if_failed(&mut self, trace: &ExecutionTrace) {
        if !self.all_pass() {
            self.reproducer = Some(Reproducer::from_trace(trace));
        }
    }
}

/// Accumulates the first violation of one property during a walk.
#[derive(Clone, Debug)]
pub(crate) struct Tracker {
    name: &'static str,
    claim: &'static str,
    first: Option<(Option<usize>, String)>,
    incomplete: Option<String>,
}

impl Tracker {
    pub fn new(name: &'static str, claim: &'static str) -> Self {
        Tracker {
            name,
            claim,
            first: None,
            incomplete: None,
        }
    }

    pub fn fail(&mut self, index: Option<usize>, detail: impl FnOnce() -> String) {
        if self.first.is_none() {
            self.first = Some((index, detail()));
        }
    }

    pub fn incomplete(&mut self, detail: impl Into<String>) {
        if self.incomplete.is_none() {
            self.incomplete = Some(detail.into());
        }
    }

    pub fn finish(self) -> Check {
        let (status, first_violation, detail) = match (self.first, self.incomplete) {
            (Some((index, detail)), _) => (CheckStatus::Fail, index, Some(detail)),
            (None, Some(detail)) => (CheckStatus::Incomplete, None, Some(detail)),
            (None, None) => (CheckStatus::Pass, None, None),
        };
        Check {
            name: self.name.to_string(),
            claim: self.claim.to_string(),
            status,
            first_violation,
            detail,
        }
    }
}
