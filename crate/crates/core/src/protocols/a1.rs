use crate::fabric::{Automaton, Counters, NodeIo, Output, PortLabel, StateChange, Violation};

/// Clockwise-only election that stabilizes without terminating.
///
/// Each node sends one clockwise pulse, then relays every clockwise pulse
/// except the one that brings its receive count to exactly its id.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct A1Node {
    id: u64,
    output: Output,
}

impl A1Node {
    pub fn new(id: u64) -> Self {
        A1Node {
            id,
            output: Output::Undecided,
        }
    }

    pub fn id(&self) -> u64 {
        self.id
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
}

impl Automaton for A1Node {
    fn init(&mut self, io: &mut NodeIo<'_>) {
        io.send(PortLabel::One);
    }

    fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>) {
        if port != PortLabel::Zero {
            io.violation(Violation::UnexpectedPort);
            return;
        }
        if io.counters().rho_cw() == self.id {
            self.set_output(Output::Leader, io);
        } else {
            self.set_output(Output::NonLeader, io);
            io.send(PortLabel::One);
        }
    }

    fn on_burst(&mut self, port: PortLabel, count: u64, io: &mut NodeIo<'_>) {
        if port != PortLabel::Zero || count == 0 {
            for _ in 0..count {
                io.receive(port);
                self.on_pulse(port, io);
            }
            return;
        }
        let before = io.counters().rho_cw();
        io.receive_many(port, count);
        let after = before + count;
        let swallowed = before < self.id && self.id <= after;
        io.send_many(PortLabel::One, count - u64::from(swallowed));
        self.output = if after == self.id {
            Output::Leader
        } else {
            Output::NonLeader
        };
    }

    fn relay_horizon(&self, port: PortLabel, counters: &Counters) -> u64 {
        match port {
            PortLabel::Zero if counters.rho_cw() < self.id => self.id - counters.rho_cw() - 1,
            PortLabel::Zero => u64::MAX,
            PortLabel::One => 0,
        }
    }

    fn output(&self) -> Output {
        self.output
    }

    fn current_id(&self) -> u64 {
        self.id
    }

    fn may_terminate(&self) -> bool {
        false
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fabric::Effect;
    use crate::protocols::test_io::Bench;

    #[test]
    fn relays_below_own_id() {
        let mut bench = Bench::default();
        let mut node = A1Node::new(2);
        let fx = bench.pulse(&mut node, PortLabel::Zero);
        assert_eq!(bench.counters.rho_cw(), 1);
        assert_eq!(node.output(), Output::NonLeader);
        assert!(fx.contains(&Effect::Send(PortLabel::One)));
    }

    #[test]
    fn swallows_pulse_matching_id() {
        let mut bench = Bench::default();
        let mut node = A1Node::new(2);
        bench.pulse(&mut node, PortLabel::Zero);
        let fx = bench.pulse(&mut node, PortLabel::Zero);
        assert_eq!(node.output(), Output::Leader);
        assert!(!fx.iter().any(|e| matches!(e, Effect::Send(_))));
    }

    #[test]
    fn later_pulse_reverts_leader() {
        let mut bench = Bench::default();
        let mut node = A1Node::new(2);
        bench.pulse(&mut node, PortLabel::Zero);
        bench.pulse(&mut node, PortLabel::Zero);
        let fx = bench.pulse(&mut node, PortLabel::Zero);
        assert_eq!(bench.counters.rho_cw(), 3);
        assert_eq!(node.output(), Output::NonLeader);
        assert!(fx.contains(&Effect::Send(PortLabel::One)));
    }

    #[test]
    fn burst_matches_pulse_by_pulse() {
        for id in 1..6 {
            for split in 0..8 {
                let mut slow = A1Node::new(id);
                let mut slow_bench = Bench::default();
                for _ in 0..8 {
                    slow_bench.pulse(&mut slow, PortLabel::Zero);
                }
                let mut fast = A1Node::new(id);
                let mut fast_bench = Bench::default();
                fast_bench.burst(&mut fast, PortLabel::Zero, split);
                fast_bench.burst(&mut fast, PortLabel::Zero, 8 - split);
                assert_eq!(slow_bench.counters, fast_bench.counters);
                assert_eq!(slow.output(), fast.output());
            }
        }
    }
}
