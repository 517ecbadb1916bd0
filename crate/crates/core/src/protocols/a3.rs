use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::fabric::{Automaton, Counters, NodeIo, Orientation, Output, PortLabel, StateChange};

/// How a node derives its two virtual ids from its base id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VirtualIds {
    /// `2·id − 1 + i` for port `i`.
    Doubling,
    /// `id` for port 0 and `id + 1` for port 1.
    Shifted,
}

impl VirtualIds {
    pub fn derive(self, base: u64) -> [u64; 2] {
        match self {
            VirtualIds::Doubling => [2 * base - 1, 2 * base],
            VirtualIds::Shifted => [base, base + 1],
        }
    }
}

/// Election and orientation on a ring with arbitrary port labels.
///
/// Two copies of the clockwise-only election run in opposite directions.
/// A pulse arriving at port `1 − i` is forwarded out of port `i` unless the
/// port's receive count equals the virtual id `ids[i]`. The direction with
/// the larger maximum virtual id ends up carrying more pulses, which fixes
/// the orientation and singles out the leader.
///
/// With `resample` set, a node whose receive counts both exceed its base id
/// redraws the id uniformly from `1..min(ρ⁰, ρ¹)` after handling the pulse.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct A3Node {
    base_id: u64,
    ids: [u64; 2],
    scheme: VirtualIds,
    resample: bool,
    output: Output,
    orientation: Orientation,
}

impl A3Node {
    pub fn new(base_id: u64, scheme: VirtualIds, resample: bool) -> Self {
        A3Node {
            base_id,
            ids: scheme.derive(base_id),
            scheme,
            resample,
            output: Output::Undecided,
            orientation: Orientation::Unset,
        }
    }

    pub fn base_id(&self) -> u64 {
        self.base_id
    }

    pub fn virtual_ids(&self) -> [u64; 2] {
        self.ids
    }

    fn resample_due(&self, rho: [u64; 2]) -> bool {
        self.resample && rho[0].min(rho[1]) > self.base_id
    }

    fn redraw(&mut self, rho: [u64; 2], io: &mut NodeIo<'_>) -> u64 {
        let bound = rho[0].min(rho[1]);
        io.rng().gen_range(1..bound)
    }

    fn set_id(&mut self, to: u64, io: Option<&mut NodeIo<'_>>) {
        if to != self.base_id {
            if let Some(io) = io {
                io.note(StateChange::Id {
                    from: self.base_id,
                    to,
                });
            }
            self.base_id = to;
            self.ids = self.scheme.derive(to);
        }
    }

    /// Output and orientation as the node would compute them from `rho`.
    fn decide(&self, rho: [u64; 2]) -> Option<(Output, Orientation)> {
        let top = self.ids[1];
        if rho[0].max(rho[1]) < top {
            return None;
        }
        let output = if rho[0] == top && rho[1] < top {
            Output::Leader
        } else {
            Output::NonLeader
        };
        let orientation = if rho[0] > rho[1] {
            Orientation::Port1IsCw
        } else {
            Orientation::Port0IsCw
        };
        Some((output, orientation))
    }

    fn refresh(&mut self, rho: [u64; 2], io: Option<&mut NodeIo<'_>>) {
        let Some((output, orientation)) = self.decide(rho) else {
            return;
        };
        if let Some(io) = io {
            if output != self.output {
                io.note(StateChange::Output {
                    from: self.output,
                    to: output,
                });
            }
            if orientation != self.orientation {
                io.note(StateChange::Orientation {
                    from: self.orientation,
                    to: orientation,
                });
            }
        }
        self.output = output;
        self.orientation = orientation;
    }
}

impl Automaton for A3Node {
    fn init(&mut self, io: &mut NodeIo<'_>) {
        io.send(PortLabel::Zero);
        io.send(PortLabel::One);
    }

    fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>) {
        let out = port.opposite();
        if io.counters().received(port) != self.ids[out.index()] {
            io.send(out);
        }
        let rho = io.counters().recv;
        if self.resample_due(rho) {
            let id = self.redraw(rho, io);
            self.set_id(id, Some(io));
        }
        self.refresh(rho, Some(io));
    }

    /// Closed form of `count` back-to-back arrivals. When resampling, every
    /// arrival after the guard first holds draws a fresh id, and only the
    /// last draw survives, so a single draw against the final counts is made.
    fn on_burst(&mut self, port: PortLabel, count: u64, io: &mut NodeIo<'_>) {
        if count == 0 {
            return;
        }
        let out = port.opposite();
        let before = io.counters().received(port);
        let guard = self.ids[out.index()];
        // Resampling only ever lowers virtual ids below both counts, so the
        // one possible swallow is decided by the ids held on entry.
        let swallowed = before < guard && guard <= before + count;
        io.receive_many(port, count);
        io.send_many(out, count - u64::from(swallowed));
        let rho = io.counters().recv;
        if self.resample_due(rho) {
            let id = self.redraw(rho, io);
            self.set_id(id, None);
        }
        self.refresh(rho, None);
    }

    fn relay_horizon(&self, port: PortLabel, counters: &Counters) -> u64 {
        let seen = counters.received(port);
        let guard = self.ids[port.opposite().index()];
        if seen < guard {
            guard - seen - 1
        } else {
            u64::MAX
        }
    }

    fn output(&self) -> Output {
        self.output
    }

    fn orientation(&self) -> Orientation {
        self.orientation
    }

    fn current_id(&self) -> u64 {
        self.base_id
    }

    fn may_terminate(&self) -> bool {
        false
    }
}
