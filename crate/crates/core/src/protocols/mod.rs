//! Node programs for the pulse-only ring.

mod a1;
mod a2;
mod a3;
mod sampling;

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::fabric::{
    Automaton, Counters, NodeIo, Orientation, Output, PortAssignment, PortLabel, RingNetwork,
};
use crate::{Error, Result};

pub use a1::A1Node;
pub use a2::A2Node;
pub use a3::{A3Node, VirtualIds};
pub use sampling::{A4Config, SampledId, MAX_ID_BITS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum ProtocolKind {
    /// Clockwise-only stabilizing election (oriented rings).
    A1,
    /// Terminating election (oriented rings).
    A2,
    /// Non-oriented election with virtual ids `2·id − 1 + i`.
    A3a,
    /// Non-oriented election with virtual ids `id`, `id + 1`.
    A3b,
    /// `A3b` where nodes redraw their id once both counts pass it.
    A3bResample,
    /// `A3b` run on ids drawn by the message-free sampler.
    A4A3b,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 6] = [
        ProtocolKind::A1,
        ProtocolKind::A2,
        ProtocolKind::A3a,
        ProtocolKind::A3b,
        ProtocolKind::A3bResample,
        ProtocolKind::A4A3b,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::A1 => "a1",
            ProtocolKind::A2 => "a2",
            ProtocolKind::A3a => "a3a",
            ProtocolKind::A3b => "a3b",
            ProtocolKind::A3bResample => "a3b+resample",
            ProtocolKind::A4A3b => "a4+a3b",
        }
    }

    pub fn requires_oriented(self) -> bool {
        matches!(self, ProtocolKind::A1 | ProtocolKind::A2)
    }

    /// Whether every id in the ring must differ.
    pub fn requires_distinct_ids(self) -> bool {
        matches!(self, ProtocolKind::A2 | ProtocolKind::A3a)
    }

    pub fn terminates(self) -> bool {
        self == ProtocolKind::A2
    }

    pub fn is_non_oriented(self) -> bool {
        !self.requires_oriented()
    }

    /// Exact pulse count of a complete run with a unique maximum id.
    pub fn pulse_total(self, n: usize, id_max: u64) -> u128 {
        let n = n as u128;
        let m = id_max as u128;
        match self {
            ProtocolKind::A1 => n * m,
            ProtocolKind::A2 => n * (2 * m + 1),
            ProtocolKind::A3a => n * (4 * m - 1),
            ProtocolKind::A3b | ProtocolKind::A3bResample | ProtocolKind::A4A3b => {
                n * (2 * m + 1)
            }
        }
    }

    /// Largest virtual id per direction for a ring whose maximum base id is
    /// `id_max` and unique: (direction of the leader's port-1 sends, other).
    pub fn direction_maxima(self, id_max: u64) -> (u64, u64) {
        match self {
            ProtocolKind::A1 | ProtocolKind::A2 => (id_max, id_max),
            ProtocolKind::A3a => (2 * id_max, 2 * id_max - 1),
            _ => (id_max + 1, id_max),
        }
    }

    /// Virtual-id scheme of the non-oriented protocols.
    pub fn virtual_ids(self) -> Option<VirtualIds> {
        match self {
            ProtocolKind::A1 | ProtocolKind::A2 => None,
            ProtocolKind::A3a => Some(VirtualIds::Doubling),
            _ => Some(VirtualIds::Shifted),
        }
    }

    fn node(self, id: u64) -> ProtocolNode {
        match self {
            ProtocolKind::A1 => ProtocolNode::A1(A1Node::new(id)),
            ProtocolKind::A2 => ProtocolNode::A2(A2Node::new(id)),
            ProtocolKind::A3a => ProtocolNode::A3(A3Node::new(id, VirtualIds::Doubling, false)),
            ProtocolKind::A3b | ProtocolKind::A4A3b => {
                ProtocolNode::A3(A3Node::new(id, VirtualIds::Shifted, false))
            }
            ProtocolKind::A3bResample => {
                ProtocolNode::A3(A3Node::new(id, VirtualIds::Shifted, true))
            }
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ProtocolKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidParameter(format!("unknown protocol {s:?}")))
    }
}

impl TryFrom<String> for ProtocolKind {
    type Error = Error;

    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<ProtocolKind> for String {
    fn from(k: ProtocolKind) -> String {
        k.name().to_string()
    }
}

/// Any of the in-repo node programs.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub enum ProtocolNode {
    A1(A1Node),
    A2(A2Node),
    A3(A3Node),
}

macro_rules! each_node {
    ($self:expr, $n:ident => $body:expr) => {
        match $self {
            ProtocolNode::A1($n) => $body,
            ProtocolNode::A2($n) => $body,
            ProtocolNode::A3($n) => $body,
        }
    };
}

impl Automaton for ProtocolNode {
    fn init(&mut self, io: &mut NodeIo<'_>) {
        each_node!(self, n => n.init(io))
    }

    fn on_pulse(&mut self, port: PortLabel, io: &mut NodeIo<'_>) {
        each_node!(self, n => n.on_pulse(port, io))
    }

    fn on_burst(&mut self, port: PortLabel, count: u64, io: &mut NodeIo<'_>) {
        each_node!(self, n => n.on_burst(port, count, io))
    }

    fn relay_horizon(&self, port: PortLabel, counters: &Counters) -> u64 {
        each_node!(self, n => n.relay_horizon(port, counters))
    }

    fn accepts(&self, port: PortLabel) -> bool {
        each_node!(self, n => n.accepts(port))
    }

    fn output(&self) -> Output {
        each_node!(self, n => n.output())
    }

    fn orientation(&self) -> Orientation {
        each_node!(self, n => n.orientation())
    }

    fn current_id(&self) -> u64 {
        each_node!(self, n => n.current_id())
    }

    fn may_terminate(&self) -> bool {
        each_node!(self, n => n.may_terminate())
    }
}

/// Everything needed to build a ring in its initial state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RingSetup {
    pub protocol: ProtocolKind,
    pub ids: Vec<u64>,
    pub assignment: PortAssignment,
    /// Seeds the per-node random streams (used only by resampling nodes).
    #[serde(default)]
    pub node_seed: u64,
}

impl RingSetup {
    pub fn new(protocol: ProtocolKind, ids: Vec<u64>, assignment: PortAssignment) -> Self {
        RingSetup {
            protocol,
            ids,
            assignment,
            node_seed: 0,
        }
    }

    /// Ring with every port 1 pointing clockwise.
    pub fn oriented(protocol: ProtocolKind, ids: Vec<u64>) -> Result<Self> {
        let assignment = PortAssignment::oriented(ids.len())?;
        Ok(Self::new(protocol, ids, assignment))
    }

    pub fn with_node_seed(mut self, seed: u64) -> Self {
        self.node_seed = seed;
        self
    }

    pub fn n(&self) -> usize {
        self.ids.len()
    }

    pub fn id_max(&self) -> u64 {
        self.ids.iter().copied().max().unwrap_or(0)
    }

    /// Checks the ids and wiring against the protocol's requirements.
    pub fn validate(&self) -> Result<()> {
        if self.ids.is_empty() {
            return Err(Error::EmptyRing);
        }
        if self.ids.contains(&0) {
            return Err(Error::ZeroId);
        }
        if self.assignment.len() != self.ids.len() {
            return Err(Error::WiringSize {
                endpoints: 2 * self.assignment.len(),
                expected: 2 * self.ids.len(),
            });
        }
        if self.protocol.requires_oriented() && !self.assignment.is_oriented() {
            return Err(Error::NotOriented(self.protocol.name()));
        }
        if self.protocol.requires_distinct_ids() {
            let mut seen = HashSet::new();
            if let Some(dup) = self.ids.iter().find(|id| !seen.insert(**id)) {
                return Err(Error::DuplicateId(*dup));
            }
        }
        let limit = match self.protocol {
            ProtocolKind::A3a => u64::MAX / 2,
            ProtocolKind::A1 | ProtocolKind::A2 => u64::MAX - 1,
            _ => u64::MAX - 2,
        };
        if let Some(id) = self.ids.iter().find(|id| **id > limit) {
            return Err(Error::InvalidParameter(format!(
                "id {id} is too large for {}",
                self.protocol
            )));
        }
        Ok(())
    }

    pub fn build(&self) -> Result<RingNetwork<ProtocolNode>> {
        self.validate()?;
        let nodes = self.ids.iter().map(|id| self.protocol.node(*id)).collect();
        RingNetwork::new(self.assignment.clone(), nodes, self.node_seed)
    }

    /// Default delivery budget: twice the protocol's pulse total.
    pub fn default_step_limit(&self) -> u64 {
        let bound = self.protocol.pulse_total(self.n(), self.id_max()).max(1);
        u64::try_from(bound.saturating_mul(2)).unwrap_or(u64::MAX)
    }
}

#[cfg(test)]
pub(crate) mod test_io {
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::fabric::{Automaton, Counters, Effect, NodeIo, PortLabel};

    /// Drives one automaton by hand, with its own counters.
    #[derive(Clone)]
    pub struct Bench {
        pub counters: Counters,
        pub rng: ChaCha8Rng,
    }

    impl Default for Bench {
        fn default() -> Self {
            Bench {
                counters: Counters::default(),
                rng: ChaCha8Rng::seed_from_u64(0),
            }
        }
    }

    impl Bench {
        pub fn init<A: Automaton>(&mut self, node: &mut A) -> Vec<Effect> {
            let mut fx = Vec::new();
            node.init(&mut NodeIo::new(&mut self.counters, &mut fx, &mut self.rng));
            fx
        }

        pub fn pulse<A: Automaton>(&mut self, node: &mut A, port: PortLabel) -> Vec<Effect> {
            let mut fx = Vec::new();
            let mut io = NodeIo::new(&mut self.counters, &mut fx, &mut self.rng);
            io.receive(port);
            node.on_pulse(port, &mut io);
            fx
        }

        pub fn burst<A: Automaton>(&mut self, node: &mut A, port: PortLabel, count: u64) -> Vec<Effect> {
            let mut fx = Vec::new();
            node.on_burst(port, count, &mut NodeIo::new(&mut self.counters, &mut fx, &mut self.rng));
            fx
        }
    }
}
