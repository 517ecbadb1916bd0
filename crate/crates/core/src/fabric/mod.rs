//! The asynchronous ring of content-free channels.
//!
//! Pulses carry no content, so each directed channel is represented by the
//! number of pulses currently in transit on it. A [`RingNetwork`] owns the
//! per-node automata and counters and is driven one delivery at a time by a
//! [`Scheduler`].

mod assignment;
mod automaton;
mod events;
mod network;
mod scheduler;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use assignment::PortAssignment;
pub use automaton::{Automaton, Effect, NodeIo};
pub use events::{
    Counters, FinalSnapshot, Orientation, Output, Phase, RunOutcome, RunRecord, StateChange,
    TraceEvent, Violation,
};
pub use network::{BurstSummary, Delivery, NetworkState, RingNetwork};
pub use scheduler::{Scheduler, SchedulerPolicy};

/// Positional identity of a node, independent of its protocol id.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct NodeId(pub usize);

impl fmt::Display for NodeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "node {}", self.0)
    }
}

/// Protocol-level identifier; always at least 1.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u64", into = "u64")]
pub struct ProtocolId(u64);

impl ProtocolId {
    pub fn new(value: u64) -> crate::Result<Self> {
        if value == 0 {
            return Err(crate::Error::ZeroId);
        }
        Ok(ProtocolId(value))
    }

    pub fn get(self) -> u64 {
        self.0
    }
}

impl TryFrom<u64> for ProtocolId {
    type Error = crate::Error;

    fn try_from(value: u64) -> crate::Result<Self> {
        ProtocolId::new(value)
    }
}

impl From<ProtocolId> for u64 {
    fn from(id: ProtocolId) -> u64 {
        id.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub enum PortLabel {
    Zero,
    One,
}

impl PortLabel {
    pub const BOTH: [PortLabel; 2] = [PortLabel::Zero, PortLabel::One];

    pub fn index(self) -> usize {
        match self {
            PortLabel::Zero => 0,
            PortLabel::One => 1,
        }
    }

    pub fn from_index(index: usize) -> PortLabel {
        if index == 0 {
            PortLabel::Zero
        } else {
            PortLabel::One
        }
    }

    pub fn opposite(self) -> PortLabel {
        match self {
            PortLabel::Zero => PortLabel::One,
            PortLabel::One => PortLabel::Zero,
        }
    }
}

impl TryFrom<u8> for PortLabel {
    type Error = String;

    fn try_from(value: u8) -> Result<Self, String> {
        match value {
            0 => Ok(PortLabel::Zero),
            1 => Ok(PortLabel::One),
            other => Err(format!("port must be 0 or 1, got {other}")),
        }
    }
}

impl From<PortLabel> for u8 {
    fn from(port: PortLabel) -> u8 {
        port.index() as u8
    }
}

/// One side of a link: a node and one of its two ports.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "(usize, PortLabel)", into = "(usize, PortLabel)")]
pub struct Endpoint {
    pub node: NodeId,
    pub port: PortLabel,
}

impl Endpoint {
    pub fn new(node: usize, port: PortLabel) -> Self {
        Endpoint {
            node: NodeId(node),
            port,
        }
    }
}

impl From<(usize, PortLabel)> for Endpoint {
    fn from((node, port): (usize, PortLabel)) -> Self {
        Endpoint::new(node, port)
    }
}

impl From<Endpoint> for (usize, PortLabel) {
    fn from(ep: Endpoint) -> Self {
        (ep.node.0, ep.port)
    }
}

/// A directed channel, named by the endpoint that sends into it.
///
/// Serialized as `[node, port]`, which is also the delivery-script format.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(from = "Endpoint", into = "Endpoint")]
pub struct ChannelId(pub usize);

impl ChannelId {
    pub fn from_sender(ep: Endpoint) -> Self {
        ChannelId(ep.node.0 * 2 + ep.port.index())
    }

    pub fn sender(self) -> Endpoint {
        Endpoint::new(self.0 / 2, PortLabel::from_index(self.0 % 2))
    }
}

impl From<Endpoint> for ChannelId {
    fn from(ep: Endpoint) -> Self {
        ChannelId::from_sender(ep)
    }
}

impl From<ChannelId> for Endpoint {
    fn from(c: ChannelId) -> Self {
        c.sender()
    }
}

/// Rotational direction of a channel relative to the ring's reference orientation.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Direction {
    Cw,
    Ccw,
}

impl Direction {
    pub fn reverse(self) -> Direction {
        match self {
            Direction::Cw => Direction::Ccw,
            Direction::Ccw => Direction::Cw,
        }
    }
}
