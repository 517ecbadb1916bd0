use rand_chacha::ChaCha8Rng;

use super::{Counters, Orientation, Output, PortLabel, StateChange, Violation};

/// Something a node did while handling one event, applied by the ring afterwards.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Effect {
    Send(PortLabel),
    /// `count` pulses out of one port at once; only produced in compressed runs.
    SendMany(PortLabel, u64),
    Note(StateChange),
    Terminate,
    Violation(Violation),
}

/// The node's window onto the ring while it reacts to an event.
///
/// Sends update the node's counters immediately so that guards evaluated
/// later in the same handler see them.
pub struct NodeIo<'a> {
    counters: &'a mut Counters,
    effects: &'a mut Vec<Effect>,
    rng: &'a mut ChaCha8Rng,
}

impl<'a> NodeIo<'a> {
    pub fn new(
        counters: &'a mut Counters,
        effects: &'a mut Vec<Effect>,
        rng: &'a mut ChaCha8Rng,
    ) -> Self {
        NodeIo {
            counters,
            effects,
            rng,
        }
    }

    pub fn counters(&self) -> &Counters {
        self.counters
    }

    /// Counts one pulse consumed at `port`.
    pub fn receive(&mut self, port: PortLabel) {
        self.counters.recv[port.index()] += 1;
    }

    pub fn receive_many(&mut self, port: PortLabel, count: u64) {
        self.counters.recv[port.index()] += count;
    }

    pub fn send(&mut self, port: PortLabel) {
        self.counters.sent[port.index()] += 1;
        self.effects.push(Effect::Send(port));
    }

    pub fn send_many(&mut self, port: PortLabel, count: u64) {
        if count == 0 {
            return;
        }
        self.counters.sent[port.index()] += count;
        self.effects.push(Effect::SendMany(port, count));
    }

    pub fn note(&mut self, change: StateChange) {
        self.effects.push(Effect::Note(change));
    }

    pub fn terminate(&mut self) {
        self.effects.push(Effect::Terminate);
    }

    pub fn violation(&mut self, violation: Violation) {
        self.effects.push(Effect::Violation(violation));
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }
}

/// An event-driven node program.
///
/// The ring calls [`Automaton::init`] once and then [`Automaton::on_pulse`]
/// once per consumed pulse, with the receive counter for that port already
/// incremented. Each call runs to completion before the next delivery.
pub trait Automaton {
    fn init(&mut self, io: &mut NodeIo<'_>);

    fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>);

    /// Consumes `count` pulses from `port` back to back. Counters are not yet
    /// incremented on entry.
    fn on_burst(&mut self, port: PortLabel, count: u64, io: &mut NodeIo<'_>) {
        for _ in 0..count {
            io.receive(port);
            self.on_pulse(port, io);
        }
    }

    /// How many more pulses arriving at `port` the node is certain to relay
    /// one-for-one out of the opposite port, with no other effect on the
    /// pulses it sends. Zero means no guarantee.
    fn relay_horizon(&self, _port: PortLabel, _counters: &Counters) -> u64 {
        0
    }

    /// Whether the node currently consumes pulses waiting at `port`. Pulses
    /// on a port that is not accepting stay queued.
    fn accepts(&self, _port: PortLabel) -> bool {
        true
    }

    fn output(&self) -> Output;

    fn orientation(&self) -> Orientation {
        Orientation::Unset
    }

    fn current_id(&self) -> u64 {
        0
    }

    /// False for programs that only ever stabilize.
    fn may_terminate(&self) -> bool {
        true
    }
}
