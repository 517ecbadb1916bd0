use crate::fabric::{Automaton, NodeIo, Output, Phase, PortLabel, StateChange, Violation};

const CW_IN: PortLabel = PortLabel::Zero;
const CW_OUT: PortLabel = PortLabel::One;
const CCW_IN: PortLabel = PortLabel::One;
const CCW_OUT: PortLabel = PortLabel::Zero;

/// Terminating election on an oriented ring.
///
/// Runs the clockwise election and, lagging behind it, a counter-clockwise
/// copy that a node joins once its clockwise count reaches its id. The node
/// that sees both counts equal to its id sends one extra counter-clockwise
/// pulse; every node that receives more counter-clockwise than clockwise
/// pulses terminates.
///
/// Each delivered pulse runs one pass: the pulse's own block, then the
/// counter-clockwise start, then the termination trigger, then the exit test.
/// Counter-clockwise pulses stay queued until the node has started its
/// counter-clockwise run.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct A2Node {
    id: u64,
    output: Output,
    phase: Phase,
}

impl A2Node {
    pub fn new(id: u64) -> Self {
        A2Node {
            id,
            output: Output::Undecided,
            phase: Phase::CwOnly,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
    }

    pub fn phase(&self) -> Phase {
        self.phase
    }

    fn set_output(&mut self, to: Output, io: &mut NodeIo<'_>) {
        if self.output != to {
            io.note(StateChange::Output {
                from: self.output,
                to,
            });
            self.output = to;
        }
    }

    fn set_phase(&mut self, to: Phase, io: &mut NodeIo<'_>) {
        if self.phase != to {
            io.note(StateChange::Phase {
                from: self.phase,
                to,
            });
            self.phase = to;
        }
    }

    fn guards(&mut self, io: &mut NodeIo<'_>) {
        let c = *io.counters();
        if c.rho_cw() >= self.id {
            if self.phase == Phase::CwOnly {
                self.set_phase(Phase::BothActive, io);
            }
            if c.sigma_ccw() == 0 {
                io.send(CCW_OUT);
            }
        }
        let c = *io.counters();
        if c.rho_cw() == self.id && c.rho_ccw() == self.id && self.phase != Phase::AwaitingEcho {
            self.set_phase(Phase::AwaitingEcho, io);
            io.send(CCW_OUT);
            return;
        }
        if c.rho_ccw() > c.rho_cw() {
            self.set_phase(Phase::Terminated, io);
            io.terminate();
        }
    }
}

impl Automaton for A2Node {
    fn init(&mut self, io: &mut NodeIo<'_>) {
        io.send(CW_OUT);
    }

    fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>) {
        if self.phase == Phase::AwaitingEcho {
            if port == CW_IN {
                io.violation(Violation::CwWhileAwaitingEcho);
                return;
            }
            // the echo ends the wait; the pass resumes at the exit test
            self.set_phase(Phase::BothActive, io);
            let c = *io.counters();
            if c.rho_ccw() > c.rho_cw() {
                self.set_phase(Phase::Terminated, io);
                io.terminate();
            }
            return;
        }
        if port == CW_IN {
            if io.counters().rho_cw() == self.id {
                self.set_output(Output::Leader, io);
            } else {
                self.set_output(Output::NonLeader, io);
                io.send(CW_OUT);
            }
        } else if io.counters().rho_ccw() != self.id {
            io.send(CCW_OUT);
        }
        self.guards(io);
    }

    fn accepts(&self, port: PortLabel) -> bool {
        match self.phase {
            Phase::CwOnly => port != CCW_IN,
            Phase::BothActive | Phase::AwaitingEcho => true,
            Phase::Terminated => false,
        }
    }

    fn output(&self) -> Output {
        self.output
    }

    fn current_id(&self) -> u64 {
        self.id
    }
}
