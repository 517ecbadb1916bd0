//! Executable checks of the protocols' guarantees.
//!
//! Every check works from an [`ExecutionTrace`](crate::trace::ExecutionTrace)
//! alone: the event list is replayed onto fresh counters and channels, so a
//! bug in the simulator shows up as a disagreement instead of being copied
//! into the oracle.

mod checks;
mod explore;
mod lower_bound;
mod montecarlo;
mod report;
mod walk;

pub use checks::{
    check_a1_invariants, check_a2_invariants, check_a3_outcome, check_a3_snapshot, project_direction,
};
pub use explore::{explore_all, Exploration, TerminalOutcome};
pub use lower_bound::{
    assert_patterns_unique, build_prefix_witness, common_prefix_length, default_budget,
    first_collision, floor_log2_ratio, replay_witness, solitude_pattern, solitude_pattern_of,
    solitude_patterns, verify_prefix, PrefixWitness, SolitudePattern, WitnessReplay,
};
pub use montecarlo::{
    estimate_distinct_after_resample, estimate_unique_max, max_bits_bound, trial_rng,
    ResampleEstimate, UniqueMaxEstimate, DESK_THRESHOLD,
};
pub use report::{Check, CheckStatus, InvariantReport, Reproducer};

use crate::protocols::ProtocolKind;
use crate::trace::ExecutionTrace;
use crate::Result;

/// Runs the checks that apply to the trace's protocol.
pub fn check_trace(trace: &ExecutionTrace) -> Result<InvariantReport> {
    match trace.setup.protocol {
        ProtocolKind::A1 => check_a1_invariants(trace),
        ProtocolKind::A2 => check_a2_invariants(trace),
        _ => check_a3_outcome(trace),
    }
}
