use crate::fabric::{
    ChannelId, Counters, Direction, Endpoint, FinalSnapshot, NodeId, Output, Phase, PortLabel,
    RunOutcome, StateChange, TraceEvent,
};
use crate::protocols::{ProtocolKind, RingSetup};
use crate::trace::ExecutionTrace;
use crate::{Error, Result};

use super::report::{Check, InvariantReport, Tracker};
use super::walk::{at_boundary, LaneView, Walker};

fn expect_protocol(trace: &ExecutionTrace, ok: &[ProtocolKind], expected: &str) -> Result<()> {
    if ok.contains(&trace.setup.protocol) {
        Ok(())
    } else {
        Err(Error::ProtocolMismatch {
            expected: expected.to_string(),
            found: trace.setup.protocol.name().to_string(),
        })
    }
}

/// Watches one rotational direction and checks the clockwise-only
/// election's invariants on it at every step boundary.
struct LaneMonitor {
    view: LaneView,
    in_flight: u64,
    satisfied: Vec<bool>,
    satisfied_count: usize,
    settled: Vec<bool>,
    settled_count: usize,
    all_reached: bool,
    relay: Tracker,
    last: Tracker,
    equivalence: Tracker,
}

impl LaneMonitor {
    fn new(view: LaneView) -> Self {
        let n = view.ids.len();
        LaneMonitor {
            view,
            in_flight: 0,
            satisfied: vec![false; n],
            satisfied_count: 0,
            settled: vec![false; n],
            settled_count: 0,
            all_reached: false,
            relay: Tracker::new(
                "relay_balance",
                "a node below its id has sent one more pulse than it received; at or above it, exactly as many",
            ),
            last: Tracker::new(
                "max_id_last_to_reach_id",
                "the last node to reach its own id in received pulses holds the maximum id",
            ),
            equivalence: Tracker::new(
                "quiescence_equivalence",
                "no pulse in transit iff every node has received at least its id iff every node has sent and received exactly the maximum id",
            ),
        }
    }

    fn on_event(&mut self, event: &TraceEvent) {
        match *event {
            TraceEvent::Send { node, port, .. } if self.view.send_port[node.0] == port => {
                self.in_flight += 1;
            }
            TraceEvent::Deliver { node, port, .. } | TraceEvent::Discard { node, port, .. }
                if self.view.recv_port[node.0] == port =>
            {
                self.in_flight = self.in_flight.saturating_sub(1);
            }
            _ => {}
        }
    }

    fn at_boundary(&mut self, index: usize, w: &Walker) {
        let top = self.view.max_id;
        let mut flipped_max = false;
        let mut flipped = false;
        for &v in &w.dirty {
            let c = &w.counters[v];
            let (rho, sigma, id) = (self.view.rho(c, v), self.view.sigma(c, v), self.view.ids[v]);
            let expected = if rho < id { rho + 1 } else { rho };
            if sigma != expected {
                self.relay.fail(Some(index), || {
                    format!("node {v}: id {id}, received {rho}, sent {sigma}")
                });
            }
            let sat = rho >= id;
            if sat && !self.satisfied[v] {
                self.satisfied[v] = true;
                self.satisfied_count += 1;
                flipped = true;
                flipped_max |= id == top;
            }
            let settled = rho == top && sigma == top;
            if settled != self.settled[v] {
                self.settled[v] = settled;
                if settled {
                    self.settled_count += 1;
                } else {
                    self.settled_count -= 1;
                }
            }
        }
        let n = self.satisfied.len();
        if !self.all_reached && self.satisfied_count == n {
            self.all_reached = true;
            if flipped && !flipped_max {
                self.last.fail(Some(index), || {
                    format!("every node reached its id, the last of them below the maximum {top}")
                });
            }
        }
        let quiet = self.in_flight == 0;
        let reached = self.satisfied_count == n;
        let settled = self.settled_count == n;
        if quiet != reached || reached != settled {
            let in_flight = self.in_flight;
            self.equivalence.fail(Some(index), || {
                format!(
                    "in transit {in_flight}, {} of {n} nodes reached their id, {} of {n} settled at {top}",
                    self.satisfied_count, self.settled_count
                )
            });
        }
    }

    fn finish(self, report: &mut InvariantReport) {
        report.push(self.relay.finish());
        report.push(self.last.finish());
        report.push(self.equivalence.finish());
    }
}

fn walk<F>(trace: &ExecutionTrace, mut on_event: F) -> Walker
where
    F: FnMut(usize, &TraceEvent, &mut Walker, bool),
{
    let mut w = Walker::new(&trace.setup);
    let events = trace.events();
    for (i, event) in events.iter().enumerate() {
        w.apply(i, event);
        let boundary = at_boundary(events, i);
        on_event(i, event, &mut w, boundary);
        if boundary {
            w.clear_dirty();
        }
    }
    w
}

fn consistency(w: &Walker) -> Check {
    let mut t = Tracker::new(
        "trace_consistency",
        "events describe a legal pulse flow: no pulse from an empty channel, no activity after termination, recorded counters and state changes agree",
    );
    if let Some((index, detail)) = &w.anomaly {
        t.fail(Some(*index), || detail.clone());
    }
    t.finish()
}

fn snapshot_agrees(trace: &ExecutionTrace, walked: &FinalSnapshot) -> Check {
    let mut t = Tracker::new(
        "snapshot_agrees",
        "the recorded end state equals the state rebuilt from the events, and the recorded outcome holds in it",
    );
    if *walked != trace.record.snapshot {
        t.fail(None, || "recorded snapshot differs from the walked events".into());
    }
    match trace.record.outcome {
        RunOutcome::Quiescent if walked.in_flight_total() != 0 => {
            t.fail(None, || "outcome quiescent with pulses in transit".into())
        }
        RunOutcome::AllTerminated if walked.terminated.iter().any(|t| !t) => {
            t.fail(None, || "outcome all-terminated with live nodes".into())
        }
        _ => {}
    }
    t.finish()
}

fn gated(name: &'static str, claim: &'static str, complete: bool, ok: bool, detail: impl FnOnce() -> String) -> Check {
    let mut t = Tracker::new(name, claim);
    if !complete {
        t.incomplete("the run stopped before the end state");
    } else if !ok {
        t.fail(None, detail);
    }
    t.finish()
}

fn total_check(trace: &ExecutionTrace, complete: bool, sends: u128) -> Check {
    let setup = &trace.setup;
    let expected = setup.protocol.pulse_total(setup.n(), setup.id_max());
    gated(
        "total_pulses",
        "the run sends exactly the protocol's pulse total for this ring size and maximum id",
        complete,
        sends == expected,
        || format!("sent {sends}, expected {expected}"),
    )
}

fn max_id_nodes(ids: &[u64]) -> Vec<usize> {
    let top = ids.iter().copied().max().unwrap_or(0);
    (0..ids.len()).filter(|v| ids[*v] == top).collect()
}

fn leaders(outputs: &[Output]) -> Vec<usize> {
    (0..outputs.len()).filter(|v| outputs[*v] == Output::Leader).collect()
}

/// Checks a run of the clockwise-only election: relay balance at every
/// step, the maximum-id node reaching its id last, the three-way
/// quiescence equivalence, exact final counters and totals, and that the
/// leaders are exactly the nodes holding the maximum id.
pub fn check_a1_invariants(trace: &ExecutionTrace) -> Result<InvariantReport> {
    expect_protocol(trace, &[ProtocolKind::A1], "a1")?;
    let setup = &trace.setup;
    let mut lane = LaneMonitor::new(LaneView::new(&setup.assignment, Direction::Cw, setup.ids.clone()));
    let w = walk(trace, |i, event, w, boundary| {
        lane.on_event(event);
        if boundary {
            lane.at_boundary(i, w);
        }
    });
    let walked = w.snapshot();
    let mut report = InvariantReport::new("a1");
    report.push(consistency(&w));
    report.push(snapshot_agrees(trace, &walked));
    lane.finish(&mut report);

    let complete = trace.record.outcome == RunOutcome::Quiescent;
    let top = setup.id_max();
    let off = walked
        .counters
        .iter()
        .position(|c| c.rho_cw() != top || c.sigma_cw() != top);
    report.push(gated(
        "final_counters",
        "every node ends having received and sent exactly the maximum id",
        complete,
        off.is_none(),
        || format!("node {} ends with {:?}", off.unwrap_or(0), walked.counters[off.unwrap_or(0)]),
    ));
    report.push(total_check(trace, complete, walked.sends));
    let expected = max_id_nodes(&setup.ids);
    let found = leaders(&walked.outputs);
    report.push(gated(
        "leaders_are_max_ids",
        "the nodes outputting Leader are exactly those holding the maximum id",
        complete,
        found == expected,
        || format!("leaders {found:?}, maximum-id nodes {expected:?}"),
    ));
    if expected.len() > 1 {
        report.note(format!(
            "{} nodes share the maximum id {top}; each of them outputs Leader",
            expected.len()
        ));
    }
    report.attach_reproducer_if_failed(trace);
    Ok(report)
}

/// Checks a run of the terminating oriented election.
pub fn check_a2_invariants(trace: &ExecutionTrace) -> Result<InvariantReport> {
    expect_protocol(trace, &[ProtocolKind::A2], "a2")?;
    let setup = &trace.setup;
    let n = setup.n();
    let top = setup.id_max();
    let mut cw = LaneMonitor::new(LaneView::new(&setup.assignment, Direction::Cw, setup.ids.clone()));
    let mut lag = Tracker::new(
        "ccw_lags_cw",
        "until no clockwise pulse is in transit, every node has received fewer counter-clockwise than clockwise pulses, or none of either",
    );
    let mut trigger = Tracker::new(
        "unique_trigger",
        "exactly once in the run a node has received its id in both directions, and that node is the one waiting for the echo",
    );
    let mut conditions = Tracker::new(
        "trigger_conditions",
        "when the trigger first holds: no clockwise or counter-clockwise pulse in transit, the node holds the maximum id, every node has received the maximum id both ways, no node has terminated",
    );
    let mut no_late = Tracker::new(
        "no_delivery_after_termination",
        "no pulse reaches a node after it terminated",
    );
    let mut quiet_end = Tracker::new(
        "quiescent_termination",
        "no pulse is in transit when the last node terminates",
    );
    let mut holds = vec![false; n];
    let mut triggers: Vec<(usize, usize)> = Vec::new();
    let mut waiting: Vec<usize> = Vec::new();
    let mut terminations: Vec<usize> = Vec::new();

    let w = walk(trace, |i, event, w, boundary| {
        cw.on_event(event);
        match *event {
            TraceEvent::Deliver { node, .. } => {
                let v = node.0;
                if w.terminated[v] {
                    no_late.fail(Some(i), || format!("node {v} received after terminating"));
                }
                let c = w.counters[v];
                let id = setup.ids[v];
                let now = c.rho_cw() == id && c.rho_ccw() == id;
                if now && !holds[v] {
                    if triggers.is_empty() {
                        first_trigger(i, v, w, setup, &mut conditions);
                    }
                    triggers.push((v, i));
                }
                holds[v] = now;
            }
            TraceEvent::Discard { node, .. } => {
                no_late.fail(Some(i), || format!("pulse dropped at terminated node {}", node.0));
            }
            TraceEvent::State {
                node,
                change: StateChange::Phase { to: Phase::AwaitingEcho, .. },
                ..
            } => waiting.push(node.0),
            TraceEvent::Terminate { node, .. } => {
                terminations.push(node.0);
                if w.terminations == n && w.in_flight_total != 0 {
                    let left = w.in_flight_total;
                    quiet_end.fail(Some(i), || format!("{left} pulses in transit at the last termination"));
                }
            }
            _ => {}
        }
        if boundary {
            cw.at_boundary(i, w);
            if cw.in_flight > 0 {
                for &v in &w.dirty {
                    let c = w.counters[v];
                    if c.rho_ccw() > c.rho_cw() || (c.rho_ccw() == c.rho_cw() && c.rho_cw() != 0) {
                        lag.fail(Some(i), || {
                            format!("node {v}: {} clockwise, {} counter-clockwise", c.rho_cw(), c.rho_ccw())
                        });
                    }
                }
            }
        }
    });

    let walked = w.snapshot();
    let complete = trace.record.outcome == RunOutcome::AllTerminated;
    let mut report = InvariantReport::new("a2");
    report.push(consistency(&w));
    report.push(snapshot_agrees(trace, &walked));
    cw.finish(&mut report);
    report.push(lag.finish());

    match triggers.as_slice() {
        [] => {
            if complete {
                trigger.fail(None, || "the trigger never held".into());
            } else {
                trigger.incomplete("the run stopped before any node triggered");
            }
        }
        [(v, _)] => {
            if waiting != [*v] {
                trigger.fail(None, || format!("trigger at node {v}, echo awaited by {waiting:?}"));
            }
        }
        [_, (v, i), ..] => trigger.fail(Some(*i), || format!("trigger holds again, at node {v}")),
    }
    report.push(trigger.finish());
    if triggers.is_empty() {
        conditions.incomplete("no trigger in the trace");
    }
    report.push(conditions.finish());

    let live = walked.terminated.iter().filter(|t| !**t).count();
    report.push(gated(
        "all_terminated",
        "every node terminates",
        complete,
        live == 0,
        || format!("{live} nodes still running"),
    ));
    let maxima = max_id_nodes(&setup.ids);
    report.push(gated(
        "leader_terminates_last",
        "the maximum-id node terminates strictly after every other node",
        complete,
        terminations.len() == n && maxima.len() == 1 && terminations.last() == Some(&maxima[0]),
        || format!("termination order {terminations:?}, maximum-id node {maxima:?}"),
    ));
    if !complete {
        quiet_end.incomplete("not every node terminated");
    }
    report.push(quiet_end.finish());
    report.push(no_late.finish());
    report.push(total_check(trace, complete, walked.sends));
    let off = walked.counters.iter().position(|c| {
        c.rho_cw() != top || c.sigma_cw() != top || c.rho_ccw() != top + 1 || c.sigma_ccw() != top + 1
    });
    report.push(gated(
        "final_counters",
        "every node ends with the maximum id in clockwise counts and one more in counter-clockwise counts",
        complete,
        off.is_none(),
        || format!("node {} ends with {:?}", off.unwrap_or(0), walked.counters[off.unwrap_or(0)]),
    ));
    let found = leaders(&walked.outputs);
    report.push(gated(
        "unique_leader",
        "exactly one node outputs Leader and it holds the maximum id",
        complete,
        found == maxima && found.len() == 1,
        || format!("leaders {found:?}, maximum-id nodes {maxima:?}"),
    ));
    report.attach_reproducer_if_failed(trace);
    Ok(report)
}

fn first_trigger(i: usize, v: usize, w: &Walker, setup: &RingSetup, t: &mut Tracker) {
    let top = setup.id_max();
    let cw = w.in_flight_toward(Direction::Cw);
    let ccw = w.in_flight_toward(Direction::Ccw);
    let off = w.counters.iter().position(|c| c.rho_cw() != top || c.rho_ccw() != top);
    let dead = w.terminated.iter().position(|t| *t);
    let mut problems = Vec::new();
    if cw != 0 {
        problems.push(format!("{cw} clockwise pulses in transit"));
    }
    if setup.ids[v] != top {
        problems.push(format!("node {v} has id {} below the maximum {top}", setup.ids[v]));
    }
    if ccw != 0 {
        problems.push(format!("{ccw} counter-clockwise pulses in transit"));
    }
    if let Some(u) = off {
        problems.push(format!("node {u} has counters {:?}", w.counters[u]));
    }
    if let Some(u) = dead {
        problems.push(format!("node {u} already terminated"));
    }
    if !problems.is_empty() {
        t.fail(Some(i), || problems.join("; "));
    }
}

/// End-state checks for the non-oriented election that need no events.
pub fn check_a3_snapshot(setup: &RingSetup, snapshot: &FinalSnapshot) -> Result<InvariantReport> {
    let scheme = setup.protocol.virtual_ids().ok_or_else(|| Error::ProtocolMismatch {
        expected: "a non-oriented protocol".into(),
        found: setup.protocol.name().into(),
    })?;
    let n = setup.n();
    let assignment = &setup.assignment;
    let mut report = InvariantReport::new(setup.protocol.name());

    let maxima = max_id_nodes(&setup.ids);
    let found = leaders(&snapshot.outputs);
    report.verdict(
        "unique_leader",
        "exactly one node outputs Leader and it holds the largest starting id",
        found.len() == 1 && found == maxima,
        || format!("leaders {found:?}, largest-id nodes {maxima:?}"),
    );

    // Follow the port each node labelled clockwise; a consistent labelling
    // returns to the start after n hops, entering every node on the port it
    // did not label.
    let mut cycle_error = None;
    let mut seen = vec![false; n];
    let mut v = 0;
    for hop in 0..n {
        let Some(port) = snapshot.orientations[v].cw_port() else {
            cycle_error = Some(format!("node {v} has no orientation"));
            break;
        };
        seen[v] = true;
        let next = assignment.destination(ChannelId::from_sender(Endpoint::new(v, port)));
        let u = next.node.0;
        if snapshot.orientations[u].cw_port() == Some(next.port) {
            cycle_error = Some(format!("hop {hop} from node {v} enters node {u} on its clockwise port"));
            break;
        }
        v = u;
    }
    if cycle_error.is_none() && (v != 0 || seen.iter().any(|s| !s)) {
        cycle_error = Some("the walk does not close after visiting every node once".into());
    }
    report.verdict(
        "orientation_cycle",
        "following the ports labelled clockwise from any node traverses every edge of the ring once and returns",
        cycle_error.is_none(),
        || cycle_error.clone().unwrap_or_default(),
    );

    let anchor = maxima[0];
    let leader_dir = assignment.send_direction(Endpoint::new(anchor, PortLabel::One));
    let stray = (0..n).find(|v| {
        snapshot.orientations[*v]
            .cw_port()
            .is_none_or(|p| assignment.send_direction(Endpoint::new(*v, p)) != leader_dir)
    });
    report.verdict(
        "orientation_matches_leader",
        "the agreed clockwise direction is the one the largest-id node's port 1 sends in",
        stray.is_none(),
        || format!("node {} disagrees", stray.unwrap_or(0)),
    );

    let mut off = None;
    for direction in [Direction::Cw, Direction::Ccw] {
        let ids = lane_ids(setup, scheme, direction);
        let view = LaneView::new(assignment, direction, ids);
        for v in 0..n {
            let c = &snapshot.counters[v];
            let (rho, sigma) = (view.rho(c, v), view.sigma(c, v));
            if off.is_none() && (rho != view.max_id || sigma != view.max_id) {
                off = Some(format!(
                    "node {v} {direction:?}: received {rho}, sent {sigma}, lane maximum {}",
                    view.max_id
                ));
            }
        }
    }
    report.verdict(
        "direction_counters",
        "in each direction every node has sent and received exactly that direction's largest virtual id",
        off.is_none(),
        || off.clone().unwrap_or_default(),
    );

    let expected = setup.protocol.pulse_total(n, setup.id_max());
    report.verdict(
        "total_pulses",
        "the run sends exactly the protocol's pulse total and leaves nothing in transit",
        snapshot.sends == expected && snapshot.deliveries == expected && snapshot.in_flight_total() == 0,
        || format!("sent {}, delivered {}, expected {expected}", snapshot.sends, snapshot.deliveries),
    );
    Ok(report)
}

fn lane_ids(setup: &RingSetup, scheme: crate::protocols::VirtualIds, direction: Direction) -> Vec<u64> {
    let assignment = &setup.assignment;
    (0..setup.n())
        .map(|v| {
            let port = PortLabel::BOTH
                .into_iter()
                .find(|p| assignment.send_direction(Endpoint::new(v, *p)) == direction)
                .expect("one port per direction");
            scheme.derive(setup.ids[v])[port.index()]
        })
        .collect()
}

/// Checks a quiescent run of the non-oriented election: the end state, and
/// each rotational direction as a clockwise-only election on virtual ids.
pub fn check_a3_outcome(trace: &ExecutionTrace) -> Result<InvariantReport> {
    if trace.setup.protocol.virtual_ids().is_none() {
        return Err(Error::ProtocolMismatch {
            expected: "a non-oriented protocol".into(),
            found: trace.setup.protocol.name().into(),
        });
    }
    if trace.record.outcome != RunOutcome::Quiescent {
        return Err(Error::NotQuiescent);
    }
    let w = walk(trace, |_, _, _, _| {});
    let walked = w.snapshot();
    let mut report = InvariantReport::new(trace.setup.protocol.name());
    report.push(consistency(&w));
    report.push(snapshot_agrees(trace, &walked));
    let end = check_a3_snapshot(&trace.setup, &walked)?;
    report.absorb("", end);
    for (direction, prefix) in [(Direction::Cw, "cw_lane."), (Direction::Ccw, "ccw_lane.")] {
        let lane = project_direction(trace, direction)?;
        let mut sub = check_a1_invariants(&lane)?;
        sub.notes.clear();
        report.absorb(prefix, sub);
    }
    report.attach_reproducer_if_failed(trace);
    Ok(report)
}

/// Keeps only the pulses travelling in `direction` and relabels the ring so
/// that they run clockwise on an oriented ring whose ids are the virtual ids
/// governing that direction. The result is a clockwise-only election trace;
/// its outputs are those that election assigns.
pub fn project_direction(trace: &ExecutionTrace, direction: Direction) -> Result<ExecutionTrace> {
    let setup = &trace.setup;
    let scheme = setup.protocol.virtual_ids().ok_or_else(|| Error::ProtocolMismatch {
        expected: "a non-oriented protocol".into(),
        found: setup.protocol.name().into(),
    })?;
    let view = LaneView::new(&setup.assignment, direction, lane_ids(setup, scheme, direction));
    let order = view.order(&setup.assignment);
    let mut position = vec![0; order.len()];
    for (i, v) in order.iter().enumerate() {
        position[*v] = i;
    }
    let ids: Vec<u64> = order.iter().map(|v| view.ids[*v]).collect();
    let lane_setup = RingSetup::oriented(ProtocolKind::A1, ids.clone())?;

    let mut counters = vec![Counters::default(); ids.len()];
    let mut outputs = vec![Output::Undecided; ids.len()];
    let mut events = Vec::new();
    for event in trace.events() {
        match *event {
            TraceEvent::Send { step, node, port } if view.send_port[node.0] == port => {
                let p = position[node.0];
                counters[p].sent[1] += 1;
                events.push(TraceEvent::Send {
                    step,
                    node: NodeId(p),
                    port: PortLabel::One,
                });
            }
            TraceEvent::Deliver { step, node, port, .. } if view.recv_port[node.0] == port => {
                let p = position[node.0];
                counters[p].recv[0] += 1;
                events.push(TraceEvent::Deliver {
                    step,
                    node: NodeId(p),
                    port: PortLabel::Zero,
                    counters: counters[p],
                });
                let to = if counters[p].recv[0] == ids[p] {
                    Output::Leader
                } else {
                    Output::NonLeader
                };
                if to != outputs[p] {
                    events.push(TraceEvent::State {
                        step,
                        node: NodeId(p),
                        change: StateChange::Output { from: outputs[p], to },
                    });
                    outputs[p] = to;
                }
            }
            TraceEvent::Discard { step, node, port } if view.recv_port[node.0] == port => {
                events.push(TraceEvent::Discard {
                    step,
                    node: NodeId(position[node.0]),
                    port: PortLabel::Zero,
                });
            }
            _ => {}
        }
    }
    let mut lane = ExecutionTrace {
        setup: lane_setup,
        scheduler: trace.scheduler.clone(),
        step_limit: trace.step_limit,
        record: crate::fabric::RunRecord {
            events,
            outcome: trace.record.outcome,
            snapshot: FinalSnapshot {
                counters: Vec::new(),
                outputs: Vec::new(),
                orientations: Vec::new(),
                ids: Vec::new(),
                terminated: Vec::new(),
                in_flight: Vec::new(),
                sends: 0,
                deliveries: 0,
                discards: 0,
            },
        },
    };
    lane.record.snapshot = walk(&lane, |_, _, _, _| {}).snapshot();
    Ok(lane)
}
