use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{
    Automaton, ChannelId, Counters, Direction, Effect, Endpoint, FinalSnapshot, NodeId, NodeIo,
    PortAssignment, RunOutcome, RunRecord, Scheduler, TraceEvent,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Delivery {
    Delivered { channel: ChannelId, at: Endpoint },
    Quiescent,
}

/// Everything that evolves during a run, for state-space search.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct NetworkState<A> {
    pub in_flight: Vec<u64>,
    pub counters: Vec<Counters>,
    pub terminated: Vec<bool>,
    pub automata: Vec<A>,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BurstSummary {
    /// Directional sweeps performed.
    pub rounds: u64,
    /// Channel drains performed, not counting lap jumps.
    pub bursts: u64,
    pub lap_jumps: u64,
    pub snapshot: FinalSnapshot,
}

/// A ring of automata joined by counting channels.
///
/// The network is a single-threaded state machine driven by the caller;
/// distinct networks share nothing.
#[derive(Clone, Debug)]
pub struct RingNetwork<A> {
    assignment: PortAssignment,
    automata: Vec<A>,
    counters: Vec<Counters>,
    in_flight: Vec<u64>,
    terminated: Vec<bool>,
    rngs: Vec<ChaCha8Rng>,
    initialized: bool,
    step: u64,
    sends: u128,
    deliveries: u128,
    discards: u128,
    recording: bool,
    events: Vec<TraceEvent>,
    effects: Vec<Effect>,
    scratch: Vec<ChannelId>,
}

impl<A: Automaton> RingNetwork<A> {
    /// `node_seed` seeds the per-node random streams used by randomized programs.
    pub fn new(assignment: PortAssignment, automata: Vec<A>, node_seed: u64) -> Result<Self> {
        let n = assignment.len();
        if automata.len() != n {
            return Err(Error::WiringSize {
                endpoints: 2 * automata.len(),
                expected: 2 * n,
            });
        }
        let rngs = (0..n)
            .map(|v| {
                let mut rng = ChaCha8Rng::seed_from_u64(node_seed);
                rng.set_stream(v as u64);
                rng
            })
            .collect();
        Ok(RingNetwork {
            automata,
            counters: vec![Counters::default(); n],
            in_flight: vec![0; 2 * n],
            terminated: vec![false; n],
            rngs,
            initialized: false,
            step: 0,
            sends: 0,
            deliveries: 0,
            discards: 0,
            recording: false,
            events: Vec::new(),
            effects: Vec::new(),
            scratch: Vec::with_capacity(2 * n),
            assignment,
        })
    }

    pub fn len(&self) -> usize {
        self.automata.len()
    }

    pub fn is_empty(&self) -> bool {
        self.automata.is_empty()
    }

    pub fn assignment(&self) -> &PortAssignment {
        &self.assignment
    }

    pub fn automata(&self) -> &[A] {
        &self.automata
    }

    pub fn counters(&self) -> &[Counters] {
        &self.counters
    }

    pub fn in_flight(&self) -> &[u64] {
        &self.in_flight
    }

    pub fn terminated(&self) -> &[bool] {
        &self.terminated
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn is_initialized(&self) -> bool {
        self.initialized
    }

    /// Turns event logging on or off; off by default.
    pub fn set_recording(&mut self, on: bool) {
        self.recording = on;
    }

    pub fn events(&self) -> &[TraceEvent] {
        &self.events
    }

    pub fn is_quiescent(&self) -> bool {
        self.in_flight.iter().all(|c| *c == 0)
    }

    pub fn all_terminated(&self) -> bool {
        self.terminated.iter().all(|t| *t)
    }

    /// A channel is deliverable when it holds a pulse its receiver will consume
    /// now. Terminated receivers always take (and drop) pulses.
    pub fn is_deliverable(&self, channel: ChannelId) -> bool {
        if self.in_flight[channel.0] == 0 {
            return false;
        }
        let to = self.assignment.destination(channel);
        self.terminated[to.node.0] || self.automata[to.node.0].accepts(to.port)
    }

    pub fn deliverable_channels(&self) -> Vec<ChannelId> {
        (0..self.in_flight.len())
            .map(ChannelId)
            .filter(|c| self.is_deliverable(*c))
            .collect()
    }

    /// Runs every node's initial action, in node order.
    pub fn initialize(&mut self, sched: &mut Scheduler) -> Result<()> {
        if self.initialized {
            return Err(Error::AlreadyInitialized);
        }
        self.initialized = true;
        for v in 0..self.automata.len() {
            {
                let mut io = NodeIo::new(&mut self.counters[v], &mut self.effects, &mut self.rngs[v]);
                self.automata[v].init(&mut io);
            }
            self.apply_effects(NodeId(v), Some(sched));
        }
        Ok(())
    }

    /// Delivers one pulse from the channel the scheduler picks.
    pub fn deliver_next(&mut self, sched: &mut Scheduler) -> Result<Delivery> {
        if self.is_quiescent() {
            return Ok(Delivery::Quiescent);
        }
        let mut candidates = std::mem::take(&mut self.scratch);
        candidates.clear();
        candidates.extend(
            (0..self.in_flight.len())
                .map(ChannelId)
                .filter(|c| self.is_deliverable(*c)),
        );
        if candidates.is_empty() {
            self.scratch = candidates;
            return Err(Error::Stalled);
        }
        let picked = sched.pick(&candidates, self.in_flight.len());
        self.scratch = candidates;
        let channel = picked?;
        let at = self.deliver(channel, Some(sched))?;
        Ok(Delivery::Delivered { channel, at })
    }

    /// Delivers one pulse from `channel`. `sched` observes the resulting sends.
    pub fn deliver(&mut self, channel: ChannelId, sched: Option<&mut Scheduler>) -> Result<Endpoint> {
        if channel.0 >= self.in_flight.len() || !self.is_deliverable(channel) {
            return Err(Error::SchedulerContract(channel));
        }
        self.in_flight[channel.0] -= 1;
        self.step += 1;
        self.deliveries += 1;
        let at = self.assignment.destination(channel);
        let v = at.node.0;
        if self.terminated[v] {
            self.discards += 1;
            if self.recording {
                self.events.push(TraceEvent::Discard {
                    step: self.step,
                    node: at.node,
                    port: at.port,
                });
            }
            return Ok(at);
        }
        {
            let mut io = NodeIo::new(&mut self.counters[v], &mut self.effects, &mut self.rngs[v]);
            io.receive(at.port);
            if self.recording {
                self.events.push(TraceEvent::Deliver {
                    step: self.step,
                    node: at.node,
                    port: at.port,
                    counters: *io.counters(),
                });
            }
            self.automata[v].on_pulse(at.port, &mut io);
        }
        self.apply_effects(at.node, sched);
        Ok(at)
    }

    fn apply_effects(&mut self, node: NodeId, mut sched: Option<&mut Scheduler>) {
        let step = self.step;
        for effect in self.effects.drain(..) {
            match effect {
                Effect::Send(port) => {
                    let from = Endpoint { node, port };
                    let channel = ChannelId::from_sender(from);
                    self.in_flight[channel.0] += 1;
                    self.sends += 1;
                    if let Some(s) = sched.as_deref_mut() {
                        s.on_send(channel, self.assignment.send_direction(from));
                    }
                    if self.recording {
                        self.events.push(TraceEvent::Send { step, node, port });
                    }
                }
                Effect::SendMany(port, count) => {
                    let channel = ChannelId::from_sender(Endpoint { node, port });
                    self.in_flight[channel.0] += count;
                    self.sends += count as u128;
                }
                Effect::Note(change) => {
                    if self.recording {
                        self.events.push(TraceEvent::State { step, node, change });
                    }
                }
                Effect::Terminate => {
                    self.terminated[node.0] = true;
                    if self.recording {
                        self.events.push(TraceEvent::Terminate { step, node });
                    }
                }
                Effect::Violation(violation) => {
                    if self.recording {
                        self.events.push(TraceEvent::Violation {
                            step,
                            node,
                            violation,
                        });
                    }
                }
            }
        }
    }

    /// Drives the network until quiescence or until every node has terminated.
    ///
    /// Initializes first if needed. Exceeding `step_limit` deliveries is an
    /// error carrying the partial record.
    pub fn run_to_quiescence(&mut self, sched: &mut Scheduler, step_limit: u64) -> Result<RunRecord> {
        if !self.initialized {
            self.initialize(sched)?;
        }
        loop {
            if self.all_terminated() {
                return Ok(self.take_record(RunOutcome::AllTerminated));
            }
            if self.is_quiescent() {
                return Ok(self.take_record(RunOutcome::Quiescent));
            }
            if self.step >= step_limit {
                let partial = self.take_record(RunOutcome::StepLimit);
                return Err(Error::StepLimit {
                    limit: step_limit,
                    partial: Box::new(partial),
                });
            }
            self.deliver_next(sched)?;
        }
    }

    pub fn snapshot(&self) -> FinalSnapshot {
        FinalSnapshot {
            counters: self.counters.clone(),
            outputs: self.automata.iter().map(|a| a.output()).collect(),
            orientations: self.automata.iter().map(|a| a.orientation()).collect(),
            ids: self.automata.iter().map(|a| a.current_id()).collect(),
            terminated: self.terminated.clone(),
            in_flight: self.in_flight.clone(),
            sends: self.sends,
            deliveries: self.deliveries,
            discards: self.discards,
        }
    }

    /// Moves the recorded events out together with the current snapshot.
    pub fn take_record(&mut self, outcome: RunOutcome) -> RunRecord {
        RunRecord {
            events: std::mem::take(&mut self.events),
            outcome,
            snapshot: self.snapshot(),
        }
    }

    pub fn state(&self) -> NetworkState<A>
    where
        A: Clone,
    {
        NetworkState {
            in_flight: self.in_flight.clone(),
            counters: self.counters.clone(),
            terminated: self.terminated.clone(),
            automata: self.automata.clone(),
        }
    }

    /// Compressed execution for protocols that never terminate.
    ///
    /// Rounds alternate between the two rotational directions. A round for
    /// one direction visits the nodes in that direction's ring order and
    /// hands each one every pulse waiting on its incoming channel, which
    /// gathers all of that direction's pulses into a single channel. When
    /// every node would simply relay that batch for `L` more full laps (see
    /// [`Automaton::relay_horizon`]), the `L` laps are applied at once. Both
    /// moves are ordinary delivery schedules, only executed in bulk. Nothing
    /// is recorded.
    pub fn run_bursts(&mut self, round_limit: u64) -> Result<BurstSummary> {
        if self.automata.iter().any(|a| a.may_terminate()) {
            return Err(Error::BurstUnsupported);
        }
        if !self.initialized {
            self.initialize(&mut Scheduler::new(super::SchedulerPolicy::RoundRobin))?;
        }
        let lanes = [Lane::new(&self.assignment, Direction::Cw), Lane::new(&self.assignment, Direction::Ccw)];
        let mut summary = BurstSummary {
            rounds: 0,
            bursts: 0,
            lap_jumps: 0,
            snapshot: self.snapshot(),
        };
        while !self.is_quiescent() {
            let mut moved = false;
            for lane in &lanes {
                if summary.rounds >= round_limit {
                    let partial = self.take_record(RunOutcome::StepLimit);
                    return Err(Error::StepLimit {
                        limit: round_limit,
                        partial: Box::new(partial),
                    });
                }
                summary.rounds += 1;
                for (v, channel) in lane.order.iter().zip(&lane.incoming) {
                    if !self.is_deliverable(*channel) {
                        continue;
                    }
                    let count = std::mem::take(&mut self.in_flight[channel.0]);
                    self.burst(*v, lane.recv_port[v.0], count);
                    summary.bursts += 1;
                    moved = true;
                }
                if self.jump_laps(lane) {
                    summary.lap_jumps += 1;
                }
            }
            if !moved && !self.is_quiescent() {
                return Err(Error::Stalled);
            }
        }
        summary.snapshot = self.snapshot();
        Ok(summary)
    }

    fn burst(&mut self, node: NodeId, port: super::PortLabel, count: u64) {
        // compressed runs can exceed u64 deliveries; the exact total is in `deliveries`
        self.step = self.step.saturating_add(count);
        self.deliveries += count as u128;
        let v = node.0;
        {
            let mut io = NodeIo::new(&mut self.counters[v], &mut self.effects, &mut self.rngs[v]);
            self.automata[v].on_burst(port, count, &mut io);
        }
        let was_recording = std::mem::replace(&mut self.recording, false);
        self.apply_effects(node, None);
        self.recording = was_recording;
    }

    /// Applies as many whole laps of a lone batch as every node would relay.
    fn jump_laps(&mut self, lane: &Lane) -> bool {
        let mut loaded = lane.incoming.iter().filter(|c| self.in_flight[c.0] > 0);
        let (Some(batch_channel), None) = (loaded.next(), loaded.next()) else {
            return false;
        };
        let batch = self.in_flight[batch_channel.0];
        let laps = lane
            .order
            .iter()
            .map(|v| {
                let port = lane.recv_port[v.0];
                self.automata[v.0].relay_horizon(port, &self.counters[v.0]) / batch
            })
            .min()
            .unwrap_or(0);
        if laps == 0 {
            return false;
        }
        let count = laps * batch;
        let sent_before: u128 = self.sends;
        for v in &lane.order {
            self.burst(*v, lane.recv_port[v.0], count);
        }
        assert_eq!(
            self.sends - sent_before,
            count as u128 * lane.order.len() as u128,
            "a node swallowed a pulse within its reported relay horizon"
        );
        // every channel of the lane gained `count` from its sender and lost
        // `count` to its receiver
        for c in &lane.incoming {
            self.in_flight[c.0] -= count;
        }
        true
    }
}

/// One rotational direction: ring order plus each node's receiving port
/// and incoming channel for it.
struct Lane {
    order: Vec<NodeId>,
    recv_port: Vec<super::PortLabel>,
    incoming: Vec<ChannelId>,
}

impl Lane {
    fn new(assignment: &PortAssignment, direction: Direction) -> Lane {
        let n = assignment.len();
        let mut cw = Vec::with_capacity(n);
        let mut v = NodeId(0);
        for _ in 0..n {
            cw.push(v);
            v = assignment.cw_successor(v);
        }
        let order = match direction {
            Direction::Cw => cw,
            Direction::Ccw => std::iter::once(cw[0]).chain(cw[1..].iter().rev().copied()).collect(),
        };
        let recv_port: Vec<_> = (0..n)
            .map(|v| {
                let cw_port = assignment.cw_port(NodeId(v));
                match direction {
                    Direction::Cw => cw_port.opposite(),
                    Direction::Ccw => cw_port,
                }
            })
            .collect();
        let incoming = order
            .iter()
            .map(|v| assignment.incoming(Endpoint { node: *v, port: recv_port[v.0] }))
            .collect();
        Lane {
            order,
            recv_port,
            incoming,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::{Output, PortLabel, SchedulerPolicy};

    /// Forwards every pulse out of the opposite port and never decides.
    #[derive(Clone, Debug, PartialEq, Eq, Hash)]
    struct Relay {
        hops_left: u64,
    }

    impl Automaton for Relay {
        fn init(&mut self, io: &mut NodeIo<'_>) {
            io.send(PortLabel::One);
        }

        fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>) {
            if self.hops_left > 0 {
                self.hops_left -= 1;
                io.send(port.opposite());
            }
        }

        fn output(&self) -> Output {
            Output::Undecided
        }
    }

    fn relay_ring(n: usize, hops: u64) -> RingNetwork<Relay> {
        RingNetwork::new(
            PortAssignment::oriented(n).unwrap(),
            vec![Relay { hops_left: hops }; n],
            0,
        )
        .unwrap()
    }

    #[test]
    fn fresh_network_is_quiescent() {
        let mut net = relay_ring(3, 1);
        assert!(net.is_quiescent());
        assert_eq!(
            net.deliver_next(&mut Scheduler::new(SchedulerPolicy::RoundRobin)).unwrap(),
            Delivery::Quiescent
        );
    }

    #[test]
    fn conservation_holds_after_every_delivery() {
        let mut net = relay_ring(4, 3);
        let mut sched = Scheduler::random(5);
        net.initialize(&mut sched).unwrap();
        assert!(!net.is_quiescent());
        while let Delivery::Delivered { .. } = net.deliver_next(&mut sched).unwrap() {
            let sent: u64 = net.counters().iter().map(|c| c.sent[0] + c.sent[1]).sum();
            let recv: u64 = net.counters().iter().map(|c| c.recv[0] + c.recv[1]).sum();
            let flying: u64 = net.in_flight().iter().sum();
            assert_eq!(sent - recv, flying);
        }
        assert_eq!(net.snapshot().sends, 4 + 4 * 3);
    }

    #[test]
    fn scheduler_picking_empty_channel_is_rejected() {
        let mut net = relay_ring(2, 0);
        let mut sched = Scheduler::script(vec![ChannelId(0)]);
        net.initialize(&mut sched).unwrap();
        // only the port-1 channels hold pulses
        assert!(matches!(
            net.deliver_next(&mut sched),
            Err(Error::SchedulerContract(ChannelId(0)))
        ));
    }

    #[test]
    fn step_limit_returns_partial_record() {
        let mut net = relay_ring(2, 100);
        net.set_recording(true);
        let err = net
            .run_to_quiescence(&mut Scheduler::new(SchedulerPolicy::RoundRobin), 10)
            .unwrap_err();
        match err {
            Error::StepLimit { limit, partial } => {
                assert_eq!(limit, 10);
                assert_eq!(partial.outcome, RunOutcome::StepLimit);
                assert_eq!(partial.snapshot.deliveries, 10);
                assert!(!partial.events.is_empty());
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn double_initialize_is_an_error() {
        let mut net = relay_ring(1, 0);
        let mut sched = Scheduler::new(SchedulerPolicy::RoundRobin);
        net.initialize(&mut sched).unwrap();
        assert!(matches!(net.initialize(&mut sched), Err(Error::AlreadyInitialized)));
    }
}
