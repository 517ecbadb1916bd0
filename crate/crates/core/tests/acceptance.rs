//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any FAIL.

use std::collections::{BTreeMap, BTreeSet};
use std::process::ExitCode;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ringpulse::fabric::{
    NodeId, Output, PortAssignment, PortLabel, RunOutcome, SchedulerPolicy, TraceEvent,
};
use ringpulse::oracle::{
    assert_patterns_unique, build_prefix_witness, check_a1_invariants, check_a2_invariants,
    check_a3_outcome, estimate_distinct_after_resample, estimate_unique_max, explore_all,
    floor_log2_ratio, replay_witness, solitude_patterns, verify_prefix, CheckStatus,
    InvariantReport, DESK_THRESHOLD,
};
use ringpulse::protocols::{ProtocolKind, RingSetup};
use ringpulse::trace::{execute, replay_jsonl, ExecutionTrace};

const ID_BOUND: u64 = 4096;
const SEEDS: u64 = 100;

type Outcome = Result<String, String>;

/// Step checks that must hold at every event, tallied across criteria 1 to 3.
#[derive(Default)]
struct StepTally {
    runs: u64,
    passed: BTreeMap<String, u64>,
    failures: Vec<String>,
}

impl StepTally {
    const TRACKED: [&'static str; 6] = [
        "relay_balance",
        "max_id_last_to_reach_id",
        "quiescence_equivalence",
        "ccw_lags_cw",
        "trigger_conditions",
        "unique_trigger",
    ];

    fn absorb(&mut self, label: &str, report: &InvariantReport) {
        self.runs += 1;
        for check in &report.checks {
            let base = check.name.rsplit('.').next().unwrap_or(&check.name);
            if !Self::TRACKED.contains(&base) {
                continue;
            }
            if check.status == CheckStatus::Pass {
                *self.passed.entry(check.name.clone()).or_default() += 1;
            } else if self.failures.len() < 5 {
                self.failures.push(format!("{label}: {} {:?}", check.name, check.status));
            }
        }
    }
}

#[derive(Default)]
struct Samples {
    traces: Vec<ExecutionTrace>,
}

impl Samples {
    fn offer(&mut self, seed: u64, trace: &ExecutionTrace) {
        if seed.is_multiple_of(50) && trace.setup.n() <= 4 {
            self.traces.push(trace.clone());
        }
    }
}

fn distinct_ids(n: usize, bound: u64, rng: &mut ChaCha8Rng) -> Vec<u64> {
    rand::seq::index::sample(rng, bound as usize, n)
        .into_iter()
        .map(|i| i as u64 + 1)
        .collect()
}

fn run(setup: &RingSetup, seed: u64) -> ExecutionTrace {
    execute(setup, SchedulerPolicy::UniformRandom { seed }, setup.default_step_limit()).expect("run")
}

fn leaders(trace: &ExecutionTrace) -> Vec<usize> {
    let outputs = &trace.record.snapshot.outputs;
    (0..outputs.len()).filter(|v| outputs[*v] == Output::Leader).collect()
}

fn max_holders(ids: &[u64]) -> Vec<usize> {
    let top = ids.iter().copied().max().unwrap_or(0);
    (0..ids.len()).filter(|v| ids[*v] == top).collect()
}

fn failed(report: &InvariantReport) -> String {
    report
        .failures()
        .map(|c| format!("{} ({:?}) {}", c.name, c.status, c.detail.clone().unwrap_or_default()))
        .collect::<Vec<_>>()
        .join("; ")
}

fn a1_exact_totals(tally: &mut StepTally, samples: &mut Samples) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA1);
    let mut runs = 0;
    for n in 1..=16 {
        for seed in 0..SEEDS {
            let ids = distinct_ids(n, ID_BOUND, &mut rng);
            let setup = RingSetup::oriented(ProtocolKind::A1, ids.clone()).map_err(|e| e.to_string())?;
            let trace = run(&setup, seed);
            let label = format!("A1 n={n} seed={seed} ids={ids:?}");
            let top = setup.id_max();
            if trace.record.outcome != RunOutcome::Quiescent {
                return Err(format!("{label}: ended {:?}", trace.record.outcome));
            }
            let snap = &trace.record.snapshot;
            if let Some(v) = snap.counters.iter().position(|c| c.rho_cw() != top || c.sigma_cw() != top) {
                return Err(format!("{label}: node {v} counters {:?}", snap.counters[v]));
            }
            if leaders(&trace) != max_holders(&ids) {
                return Err(format!("{label}: leaders {:?}", leaders(&trace)));
            }
            let report = check_a1_invariants(&trace).map_err(|e| e.to_string())?;
            if !report.all_pass() {
                return Err(format!("{label}: {}", failed(&report)));
            }
            tally.absorb(&label, &report);
            samples.offer(seed, &trace);
            runs += 1;
        }
    }
    Ok(format!("{runs} runs, every node sent and received exactly IDmax, leader = max id"))
}

fn a2_termination(tally: &mut StepTally, samples: &mut Samples) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA2);
    let mut runs = 0;
    for n in 1..=16 {
        for seed in 0..SEEDS {
            let ids = distinct_ids(n, ID_BOUND, &mut rng);
            let setup = RingSetup::oriented(ProtocolKind::A2, ids.clone()).map_err(|e| e.to_string())?;
            let trace = run(&setup, seed);
            let label = format!("A2 n={n} seed={seed} ids={ids:?}");
            let expected = n as u128 * (2 * setup.id_max() as u128 + 1);
            if trace.record.snapshot.sends != expected {
                return Err(format!("{label}: {} pulses, expected {expected}", trace.record.snapshot.sends));
            }
            // an independent look at the termination order
            let terminations: Vec<(usize, u64)> = trace
                .events()
                .iter()
                .enumerate()
                .filter_map(|(i, e)| match e {
                    TraceEvent::Terminate { node, .. } => Some((node.0, i as u64)),
                    _ => None,
                })
                .collect();
            let last = terminations.last().map(|t| t.0);
            if terminations.len() != n || last != max_holders(&ids).first().copied() {
                return Err(format!("{label}: termination order {terminations:?}"));
            }
            let report = check_a2_invariants(&trace).map_err(|e| e.to_string())?;
            if !report.all_pass() {
                return Err(format!("{label}: {}", failed(&report)));
            }
            tally.absorb(&label, &report);
            samples.offer(seed, &trace);
            runs += 1;
        }
    }

    let mut explored = 0;
    let mut states = 0;
    for a in 1..=4u64 {
        for b in 1..=4u64 {
            if a == b {
                continue;
            }
            let setup = RingSetup::oriented(ProtocolKind::A2, vec![a, b]).map_err(|e| e.to_string())?;
            let ex = explore_all(setup.build().map_err(|e| e.to_string())?, 10_000_000).map_err(|e| e.to_string())?;
            let Some(outcome) = ex.unique_outcome() else {
                return Err(format!("ids [{a}, {b}]: {} distinct outcomes", ex.outcomes.len()));
            };
            let reference = run(&setup, 0).record.snapshot;
            let counters: Vec<_> = reference
                .counters
                .iter()
                .map(|c| (c.rho_cw(), c.sigma_cw(), c.rho_ccw(), c.sigma_ccw()))
                .collect();
            if outcome.counters != counters || outcome.sends != reference.sends || outcome.in_flight != 0 {
                return Err(format!("ids [{a}, {b}]: explored outcome {outcome:?} differs from a run"));
            }
            explored += 1;
            states += ex.states;
        }
    }
    Ok(format!(
        "{runs} runs terminate quiescently with n(2IDmax+1) pulses, leader last; \
         {explored} two-node rings explored ({states} states), one outcome each"
    ))
}

fn a3_sweep(tally: &mut StepTally, samples: &mut Samples) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xA3);
    let mut runs = 0;
    let mut check_run = |setup: RingSetup, seed: u64, tally: &mut StepTally, samples: &mut Samples| -> Result<(), String> {
        let trace = run(&setup, seed);
        let n = setup.n();
        let label = format!("{} n={n} seed={seed} ids={:?} cw_ports={:?}", setup.protocol, setup.ids, setup.assignment.cw_ports());
        let expected = setup.protocol.pulse_total(n, setup.id_max());
        let direct = match setup.protocol {
            ProtocolKind::A3a => n as u128 * (4 * setup.id_max() as u128 - 1),
            _ => n as u128 * (2 * setup.id_max() as u128 + 1),
        };
        if expected != direct || trace.record.snapshot.sends != direct {
            return Err(format!("{label}: {} pulses, expected {direct}", trace.record.snapshot.sends));
        }
        if leaders(&trace) != max_holders(&setup.ids) {
            return Err(format!("{label}: leaders {:?}", leaders(&trace)));
        }
        // consistent orientation: following each node's chosen clockwise port
        // must visit every node once and come back
        let snap = &trace.record.snapshot;
        let chosen = |v: usize| match snap.orientations[v] {
            ringpulse::fabric::Orientation::Port1IsCw => Ok(PortLabel::One),
            ringpulse::fabric::Orientation::Port0IsCw => Ok(PortLabel::Zero),
            other => Err(format!("{label}: node {v} orientation {other:?}")),
        };
        let mut seen = BTreeSet::new();
        let mut v = 0usize;
        for _ in 0..n {
            seen.insert(v);
            let out = ringpulse::fabric::ChannelId::from_sender(ringpulse::fabric::Endpoint::new(v, chosen(v)?));
            let next = setup.assignment.destination(out);
            if next.port == chosen(next.node.0)? {
                return Err(format!("{label}: nodes {v} and {} disagree on clockwise", next.node));
            }
            v = next.node.0;
        }
        if v != 0 || seen.len() != n {
            return Err(format!("{label}: orientation does not close a cycle"));
        }
        let report = check_a3_outcome(&trace).map_err(|e| e.to_string())?;
        if !report.all_pass() {
            return Err(format!("{label}: {}", failed(&report)));
        }
        tally.absorb(&label, &report);
        samples.offer(seed, &trace);
        runs += 1;
        Ok(())
    };
    for protocol in [ProtocolKind::A3a, ProtocolKind::A3b] {
        for n in 1..=4 {
            for assignment in PortAssignment::enumerate_all(n) {
                let ids = distinct_ids(n, ID_BOUND, &mut rng);
                let seed = rng.gen();
                check_run(RingSetup::new(protocol, ids, assignment), seed, tally, samples)?;
            }
        }
        for n in 1..=16 {
            for _ in 0..100 {
                let ids = distinct_ids(n, ID_BOUND, &mut rng);
                let assignment = PortAssignment::random(n, &mut rng).map_err(|e| e.to_string())?;
                let seed = rng.gen::<u64>() % 1000;
                check_run(RingSetup::new(protocol, ids, assignment), seed, tally, samples)?;
            }
        }
    }
    Ok(format!(
        "{runs} runs over every wiring for n<=4 and 100 random wirings per n<=16, ids<={ID_BOUND}: \
         exact totals, one leader, one orientation"
    ))
}

fn expect_fail(report: &InvariantReport, names: &[&str]) -> Result<(), String> {
    for name in names {
        if report.status(name) != Some(CheckStatus::Fail) {
            return Err(format!("mutated trace left {name} at {:?}", report.status(name)));
        }
    }
    Ok(())
}

fn step_invariants(tally: &StepTally) -> Outcome {
    if !tally.failures.is_empty() {
        return Err(tally.failures.join("; "));
    }
    for name in StepTally::TRACKED {
        let hits: u64 = tally
            .passed
            .iter()
            .filter(|(k, _)| k.rsplit('.').next() == Some(name))
            .map(|(_, v)| *v)
            .sum();
        if hits == 0 {
            return Err(format!("{name} was never evaluated"));
        }
    }

    // negative cases: an unearned relay, an early counter-clockwise pulse,
    // and the same unearned relay inside one lane of a non-oriented run
    let setup = RingSetup::oriented(ProtocolKind::A1, vec![2, 1, 3]).map_err(|e| e.to_string())?;
    let mut trace = run(&setup, 4);
    forge_relay(&mut trace, 1, PortLabel::One);
    expect_fail(&check_a1_invariants(&trace).map_err(|e| e.to_string())?, &["relay_balance"])?;

    let setup = RingSetup::oriented(ProtocolKind::A2, vec![3, 1, 4, 2]).map_err(|e| e.to_string())?;
    let mut trace = run(&setup, 6);
    forge_early_ccw(&mut trace, 1);
    expect_fail(
        &check_a2_invariants(&trace).map_err(|e| e.to_string())?,
        &["ccw_lags_cw", "trigger_conditions", "unique_trigger"],
    )?;

    let setup = RingSetup::oriented(ProtocolKind::A3b, vec![2, 1, 3]).map_err(|e| e.to_string())?;
    let mut trace = run(&setup, 2);
    forge_relay(&mut trace, 1, PortLabel::One);
    let report = check_a3_outcome(&trace);
    match report {
        Ok(r) => expect_fail(&r, &["cw_lane.relay_balance"])?,
        Err(e) => return Err(format!("mutated A3 trace not checked: {e}")),
    }

    let evaluated: u64 = tally.passed.values().sum();
    Ok(format!(
        "{} runs, {evaluated} per-event checks passed; mutated traces fail relay_balance, \
         ccw_lags_cw, trigger_conditions, unique_trigger",
        tally.runs
    ))
}

/// Adds a send from node `u` right after its first arrival, as if it had
/// relayed a pulse it should have swallowed.
fn forge_relay(trace: &mut ExecutionTrace, u: usize, port: PortLabel) {
    let events = &mut trace.record.events;
    let at = events
        .iter()
        .position(|e| matches!(e, TraceEvent::Deliver { node, .. } if node.0 == u))
        .expect("node receives");
    let step = events[at].step();
    events.insert(at + 1, TraceEvent::Send { step, node: NodeId(u), port });
}

/// Adds a counter-clockwise arrival at the node holding `id` right after its
/// first clockwise one.
fn forge_early_ccw(trace: &mut ExecutionTrace, id: u64) {
    let u = trace.setup.ids.iter().position(|x| *x == id).expect("id present");
    let w = trace.setup.assignment.cw_successor(NodeId(u));
    let events = &mut trace.record.events;
    let at = events
        .iter()
        .position(|e| matches!(e, TraceEvent::Deliver { node, .. } if node.0 == u))
        .expect("node receives");
    let TraceEvent::Deliver { step, counters, .. } = events[at] else {
        unreachable!()
    };
    let mut forged = counters;
    forged.recv[1] += 1;
    events.insert(at + 1, TraceEvent::Send { step, node: w, port: PortLabel::Zero });
    events.insert(at + 2, TraceEvent::Deliver { step, node: NodeId(u), port: PortLabel::One, counters: forged });
}

fn duplicate_ids() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(0xD0);
    let (mut unique, mut shared) = (0, 0);
    for n in 1..=8usize {
        for seed in 0..50 {
            for duplicate_max in [false, true] {
                let mut ids: Vec<u64> = (0..n).map(|_| rng.gen_range(1..=(n as u64).max(2))).collect();
                let top = ids.iter().copied().max().unwrap_or(1) + 1;
                ids[rng.gen_range(0..n)] = top;
                if duplicate_max && n > 1 {
                    let others: Vec<usize> = (0..n).filter(|v| ids[*v] != top).collect();
                    ids[*others.choose(&mut rng).expect("n > 1")] = top;
                }
                let setup = RingSetup::oriented(ProtocolKind::A1, ids.clone()).map_err(|e| e.to_string())?;
                let trace = run(&setup, seed);
                let label = format!("n={n} seed={seed} ids={ids:?}");
                let snap = &trace.record.snapshot;
                if snap.counters.iter().any(|c| c.rho_cw() != top || c.sigma_cw() != top) {
                    return Err(format!("{label}: counters {:?}", snap.counters));
                }
                let vmax = max_holders(&ids);
                if leaders(&trace) != vmax {
                    return Err(format!("{label}: leaders {:?}, max holders {vmax:?}", leaders(&trace)));
                }
                let report = check_a1_invariants(&trace).map_err(|e| e.to_string())?;
                if !report.all_pass() {
                    return Err(format!("{label}: {}", failed(&report)));
                }
                if vmax.len() == 1 {
                    unique += 1;
                } else {
                    shared += 1;
                }
            }
        }
    }
    Ok(format!(
        "{unique} runs with a unique maximum and {shared} with a shared one: counters = IDmax, leaders = max holders"
    ))
}

fn lower_bound() -> Outcome {
    let patterns = solitude_patterns(ProtocolKind::A2, 1..=256).map_err(|e| e.to_string())?;
    let report = assert_patterns_unique(&patterns);
    if !report.all_pass() {
        return Err(failed(&report));
    }
    let (k, n) = (1024u64, 4u64);
    let patterns = solitude_patterns(ProtocolKind::A2, 1..=k).map_err(|e| e.to_string())?;
    let witness = build_prefix_witness(&patterns, n).map_err(|e| e.to_string())?;
    let ell = floor_log2_ratio(k, n);
    let bound = n as u128 * ell as u128;
    if witness.common_prefix_length < 8 || witness.prefix_length < 8 || !verify_prefix(&witness, &patterns) {
        return Err(format!("witness {witness:?}"));
    }
    let replay = replay_witness(ProtocolKind::A2, &witness, &patterns).map_err(|e| e.to_string())?;
    if (replay.matched_deliveries as u128) < bound {
        return Err(format!("replay matched {} deliveries, bound {bound}", replay.matched_deliveries));
    }
    Ok(format!(
        "256 patterns distinct; ids {:?} share a {}-bit prefix, replay delivers {} pulses before divergence (bound {bound})",
        witness.id_subset, witness.common_prefix_length, replay.matched_deliveries
    ))
}

fn monte_carlo() -> Outcome {
    let unique = estimate_unique_max(64, 2.0, 10_000, 1).map_err(|e| e.to_string())?;
    let bits = estimate_unique_max(1024, 2.0, 10_000, 2).map_err(|e| e.to_string())?;
    let pipeline = estimate_distinct_after_resample(16, 4.0, 500, 3).map_err(|e| e.to_string())?;
    let line = format!(
        "unique max n=64: {:.4}; longest draw <= {:.0} bits n=1024: {:.4}; distinct ids after redrawing n=16: {:.4} \
         (elected and oriented {:.4})",
        unique.unique_max_freq,
        bits.u_bound,
        bits.max_bits_within_u_freq,
        pipeline.distinct_ids_freq,
        pipeline.elected_and_oriented_freq
    );
    let ok = unique.unique_max_freq >= DESK_THRESHOLD
        && bits.max_bits_within_u_freq >= DESK_THRESHOLD
        && pipeline.distinct_ids_freq >= DESK_THRESHOLD;
    if ok {
        Ok(line)
    } else {
        Err(line)
    }
}

fn determinism(samples: &Samples) -> Outcome {
    let mut bytes = 0;
    for trace in &samples.traces {
        let text = trace.to_jsonl().map_err(|e| e.to_string())?;
        let report = replay_jsonl(&text).map_err(|e| e.to_string())?;
        if !report.identical() {
            return Err(format!("{} n={}: {report:?}", trace.setup.protocol, trace.setup.n()));
        }
        let again = execute(&trace.setup, trace.scheduler.clone(), trace.step_limit)
            .and_then(|t| t.to_jsonl())
            .map_err(|e| e.to_string())?;
        if again != text {
            return Err(format!("{} n={}: rerun differs", trace.setup.protocol, trace.setup.n()));
        }
        bytes += text.len();
    }
    if samples.traces.is_empty() {
        return Err("no traces sampled".into());
    }
    Ok(format!("{} sampled traces ({bytes} bytes) replay byte-identical", samples.traces.len()))
}

fn report(number: u32, name: &str, started: Instant, outcome: Outcome) -> bool {
    let secs = started.elapsed().as_secs_f64();
    match outcome {
        Ok(detail) => {
            println!("PASS criterion {number} {name} [{secs:.1}s]: {detail}");
            true
        }
        Err(detail) => {
            println!("FAIL criterion {number} {name} [{secs:.1}s]: {detail}");
            false
        }
    }
}

fn main() -> ExitCode {
    let mut tally = StepTally::default();
    let mut samples = Samples::default();
    let mut ok = true;

    let t = Instant::now();
    ok &= report(1, "a1_exact_totals", t, a1_exact_totals(&mut tally, &mut samples));
    let t = Instant::now();
    ok &= report(2, "a2_quiescent_termination", t, a2_termination(&mut tally, &mut samples));
    let t = Instant::now();
    ok &= report(3, "a3_totals_and_orientation", t, a3_sweep(&mut tally, &mut samples));
    let t = Instant::now();
    ok &= report(4, "step_invariants", t, step_invariants(&tally));
    let t = Instant::now();
    ok &= report(5, "duplicate_ids", t, duplicate_ids());
    let t = Instant::now();
    ok &= report(6, "lower_bound_witness", t, lower_bound());
    let t = Instant::now();
    ok &= report(7, "monte_carlo", t, monte_carlo());
    let t = Instant::now();
    ok &= report(8, "replay_determinism", t, determinism(&samples));

    if ok {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
