//! State reconstruction from an event list, independent of the simulator.

use crate::fabric::{
    ChannelId, Counters, Direction, Endpoint, FinalSnapshot, NodeId, Orientation, Output, Phase,
    PortAssignment, PortLabel, StateChange, TraceEvent,
};
use crate::protocols::RingSetup;

/// Replays events onto counters, channels and node states, noting anything
/// the event list could not have come from.
#[derive(Clone, Debug)]
pub(crate) struct Walker {
    pub assignment: PortAssignment,
    pub counters: Vec<Counters>,
    pub in_flight: Vec<u64>,
    pub in_flight_total: u64,
    pub terminated: Vec<bool>,
    pub terminations: usize,
    pub outputs: Vec<Output>,
    pub phases: Vec<Phase>,
    pub orientations: Vec<Orientation>,
    pub ids: Vec<u64>,
    pub sends: u128,
    pub deliveries: u128,
    pub discards: u128,
    pub violations: usize,
    /// Nodes whose counters changed since the last step boundary.
    pub dirty: Vec<usize>,
    dirty_mark: Vec<bool>,
    /// First event the walker could not reconcile.
    pub anomaly: Option<(usize, String)>,
}

impl Walker {
    pub fn new(setup: &RingSetup) -> Self {
        let n = setup.n();
        Walker {
            assignment: setup.assignment.clone(),
            counters: vec![Counters::default(); n],
            in_flight: vec![0; 2 * n],
            in_flight_total: 0,
            terminated: vec![false; n],
            terminations: 0,
            outputs: vec![Output::Undecided; n],
            phases: vec![Phase::CwOnly; n],
            orientations: vec![Orientation::Unset; n],
            ids: setup.ids.clone(),
            sends: 0,
            deliveries: 0,
            discards: 0,
            violations: 0,
            dirty: Vec::new(),
            dirty_mark: vec![false; n],
            anomaly: None,
        }
    }

    pub fn n(&self) -> usize {
        self.counters.len()
    }

    fn flag(&mut self, index: usize, detail: impl FnOnce() -> String) {
        if self.anomaly.is_none() {
            self.anomaly = Some((index, detail()));
        }
    }

    fn touch(&mut self, node: usize) {
        if !self.dirty_mark[node] {
            self.dirty_mark[node] = true;
            self.dirty.push(node);
        }
    }

    pub fn clear_dirty(&mut self) {
        for v in self.dirty.drain(..) {
            self.dirty_mark[v] = false;
        }
    }

    fn take_pulse(&mut self, index: usize, node: NodeId, port: PortLabel) {
        let channel = self.assignment.incoming(Endpoint { node, port });
        if self.in_flight[channel.0] == 0 {
            self.flag(index, || format!("pulse taken from empty channel into {node} port {}", port.index()));
        } else {
            self.in_flight[channel.0] -= 1;
            self.in_flight_total -= 1;
        }
    }

    pub fn apply(&mut self, index: usize, event: &TraceEvent) {
        let v = event.node().0;
        let n = self.n();
        if v >= n {
            self.flag(index, || format!("event names node {v} of a {n}-node ring"));
            return;
        }
        match event {
            TraceEvent::Send { port, .. } => {
                if self.terminated[v] {
                    self.flag(index, || format!("node {v} sends after terminating"));
                }
                self.counters[v].sent[port.index()] += 1;
                let channel = ChannelId::from_sender(Endpoint::new(v, *port));
                self.in_flight[channel.0] += 1;
                self.in_flight_total += 1;
                self.sends += 1;
                self.touch(v);
            }
            TraceEvent::Deliver {
                node,
                port,
                counters,
                ..
            } => {
                if self.terminated[v] {
                    self.flag(index, || format!("node {v} receives after terminating"));
                }
                self.take_pulse(index, *node, *port);
                self.counters[v].recv[port.index()] += 1;
                self.deliveries += 1;
                if *counters != self.counters[v] {
                    let walked = self.counters[v];
                    self.flag(index, || {
                        format!("recorded counters {counters:?} differ from walked {walked:?}")
                    });
                }
                self.touch(v);
            }
            TraceEvent::Discard { node, port, .. } => {
                if !self.terminated[v] {
                    self.flag(index, || format!("pulse discarded at live node {v}"));
                }
                self.take_pulse(index, *node, *port);
                self.discards += 1;
            }
            TraceEvent::State { change, .. } => self.apply_change(index, v, *change),
            TraceEvent::Terminate { .. } => {
                if self.terminated[v] {
                    self.flag(index, || format!("node {v} terminates twice"));
                } else {
                    self.terminated[v] = true;
                    self.terminations += 1;
                }
            }
            TraceEvent::Violation { violation, .. } => {
                self.violations += 1;
                self.flag(index, || format!("node {v} reported {violation:?}"));
            }
        }
    }

    fn apply_change(&mut self, index: usize, v: usize, change: StateChange) {
        let stale = match change {
            StateChange::Output { from, to } => {
                let held = std::mem::replace(&mut self.outputs[v], to);
                (held != from).then(|| format!("{held:?}"))
            }
            StateChange::Phase { from, to } => {
                let held = std::mem::replace(&mut self.phases[v], to);
                (held != from).then(|| format!("{held:?}"))
            }
            StateChange::Orientation { from, to } => {
                let held = std::mem::replace(&mut self.orientations[v], to);
                (held != from).then(|| format!("{held:?}"))
            }
            StateChange::Id { from, to } => {
                let held = std::mem::replace(&mut self.ids[v], to);
                (held != from).then(|| format!("{held}"))
            }
        };
        if let Some(held) = stale {
            self.flag(index, || format!("node {v} change {change:?} but it held {held}"));
        }
    }

    /// In-flight pulses travelling in `direction`.
    pub fn in_flight_toward(&self, direction: Direction) -> u64 {
        (0..self.in_flight.len())
            .filter(|c| self.assignment.channel_direction(ChannelId(*c)) == direction)
            .map(|c| self.in_flight[c])
            .sum()
    }

    pub fn snapshot(&self) -> FinalSnapshot {
        FinalSnapshot {
            counters: self.counters.clone(),
            outputs: self.outputs.clone(),
            orientations: self.orientations.clone(),
            ids: self.ids.clone(),
            terminated: self.terminated.clone(),
            in_flight: self.in_flight.clone(),
            sends: self.sends,
            deliveries: self.deliveries,
            discards: self.discards,
        }
    }
}

/// Whether event `i` is the last one caused by its delivery.
pub(crate) fn at_boundary(events: &[TraceEvent], i: usize) -> bool {
    events
        .get(i + 1)
        .is_none_or(|next| next.step() != events[i].step())
}

/// One rotational direction of a ring seen as a clockwise-only ring: which
/// port each node sends and receives that direction's pulses on, and the
/// id that governs relaying there.
#[derive(Clone, Debug)]
pub(crate) struct LaneView {
    pub send_port: Vec<PortLabel>,
    pub recv_port: Vec<PortLabel>,
    pub ids: Vec<u64>,
    pub max_id: u64,
}

impl LaneView {
    pub fn new(assignment: &PortAssignment, direction: Direction, ids: Vec<u64>) -> Self {
        let n = assignment.len();
        let pick = |v: usize, f: &dyn Fn(Endpoint) -> Direction| {
            PortLabel::BOTH
                .into_iter()
                .find(|p| f(Endpoint::new(v, *p)) == direction)
                .expect("each node has one port per direction")
        };
        let send_port = (0..n).map(|v| pick(v, &|ep| assignment.send_direction(ep))).collect();
        let recv_port = (0..n).map(|v| pick(v, &|ep| assignment.arrival_direction(ep))).collect();
        let max_id = ids.iter().copied().max().unwrap_or(0);
        LaneView {
            send_port,
            recv_port,
            ids,
            max_id,
        }
    }

    pub fn rho(&self, c: &Counters, v: usize) -> u64 {
        c.received(self.recv_port[v])
    }

    pub fn sigma(&self, c: &Counters, v: usize) -> u64 {
        c.sent_on(self.send_port[v])
    }

    /// Nodes in the order this direction's pulses visit them, from node 0.
    pub fn order(&self, assignment: &PortAssignment) -> Vec<usize> {
        let n = assignment.len();
        let mut order = Vec::with_capacity(n);
        let mut v = 0;
        for _ in 0..n {
            order.push(v);
            let out = ChannelId::from_sender(Endpoint::new(v, self.send_port[v]));
            v = assignment.destination(out).node.0;
        }
        order
    }
}
