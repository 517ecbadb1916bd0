use serde::{Deserialize, Serialize};

use super::{NodeId, PortLabel};

/// Per-node pulse counters, indexed by port.
///
/// On an oriented ring clockwise pulses leave through port 1 and arrive at
/// port 0, so `recv[0]`/`sent[1]` are the clockwise counters and
/// `recv[1]`/`sent[0]` the counter-clockwise ones.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Counters {
    pub recv: [u64; 2],
    pub sent: [u64; 2],
}

impl Counters {
    pub fn received(&self, port: PortLabel) -> u64 {
        self.recv[port.index()]
    }

    pub fn sent_on(&self, port: PortLabel) -> u64 {
        self.sent[port.index()]
    }

    pub fn rho_cw(&self) -> u64 {
        self.recv[0]
    }

    pub fn sigma_cw(&self) -> u64 {
        self.sent[1]
    }

    pub fn rho_ccw(&self) -> u64 {
        self.recv[1]
    }

    pub fn sigma_ccw(&self) -> u64 {
        self.sent[0]
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Output {
    #[default]
    Undecided,
    Leader,
    NonLeader,
}

/// Progress of the terminating oriented-ring election at one node.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    #[default]
    CwOnly,
    BothActive,
    AwaitingEcho,
    Terminated,
}

/// Which local port a node has named as leading to its clockwise neighbour.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Orientation {
    #[default]
    Unset,
    Port0IsCw,
    Port1IsCw,
}

impl Orientation {
    pub fn cw_port(self) -> Option<PortLabel> {
        match self {
            Orientation::Unset => None,
            Orientation::Port0IsCw => Some(PortLabel::Zero),
            Orientation::Port1IsCw => Some(PortLabel::One),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "field", rename_all = "snake_case")]
pub enum StateChange {
    Output { from: Output, to: Output },
    Phase { from: Phase, to: Phase },
    Orientation { from: Orientation, to: Orientation },
    Id { from: u64, to: u64 },
}

/// Behaviour a protocol leaves undefined and the node flags instead of acting on.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Violation {
    /// A pulse arrived on a port the protocol never receives on.
    UnexpectedPort,
    /// A clockwise pulse reached a node waiting for its termination echo.
    CwWhileAwaitingEcho,
}

/// One entry of an execution trace.
///
/// `step` is the number of deliveries made so far; events emitted during
/// initialization carry step 0 and every event caused by the k-th delivery
/// carries step k.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum TraceEvent {
    Send {
        step: u64,
        node: NodeId,
        port: PortLabel,
    },
    /// A pulse consumed at `port`; `counters` are the receiver's counters
    /// right after the receive, before it reacts.
    Deliver {
        step: u64,
        node: NodeId,
        port: PortLabel,
        counters: Counters,
    },
    /// A pulse that reached an already terminated node and was dropped by it.
    Discard {
        step: u64,
        node: NodeId,
        port: PortLabel,
    },
    State {
        step: u64,
        node: NodeId,
        change: StateChange,
    },
    Terminate {
        step: u64,
        node: NodeId,
    },
    Violation {
        step: u64,
        node: NodeId,
        violation: Violation,
    },
}

impl TraceEvent {
    pub fn step(&self) -> u64 {
        match self {
            TraceEvent::Send { step, .. }
            | TraceEvent::Deliver { step, .. }
            | TraceEvent::Discard { step, .. }
            | TraceEvent::State { step, .. }
            | TraceEvent::Terminate { step, .. }
            | TraceEvent::Violation { step, .. } => *step,
        }
    }

    pub fn node(&self) -> NodeId {
        match self {
            TraceEvent::Send { node, .. }
            | TraceEvent::Deliver { node, .. }
            | TraceEvent::Discard { node, .. }
            | TraceEvent::State { node, .. }
            | TraceEvent::Terminate { node, .. }
            | TraceEvent::Violation { node, .. } => *node,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunOutcome {
    /// No pulse is in transit.
    Quiescent,
    /// Every node reached a terminal state.
    AllTerminated,
    /// The delivery budget ran out first.
    StepLimit,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FinalSnapshot {
    pub counters: Vec<Counters>,
    pub outputs: Vec<Output>,
    pub orientations: Vec<Orientation>,
    /// Protocol ids held at the end of the run (they can change under resampling).
    pub ids: Vec<u64>,
    pub terminated: Vec<bool>,
    pub in_flight: Vec<u64>,
    pub sends: u128,
    pub deliveries: u128,
    pub discards: u128,
}

impl FinalSnapshot {
    pub fn in_flight_total(&self) -> u128 {
        self.in_flight.iter().map(|c| *c as u128).sum()
    }
}

/// Result of driving a network: its event log, why it stopped, and the end state.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunRecord {
    pub events: Vec<TraceEvent>,
    pub outcome: RunOutcome,
    pub snapshot: FinalSnapshot,
}
