use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelId, Direction, Endpoint, NodeId, PortLabel};
use crate::{Error, Result};

/// Port wiring of a ring.
///
/// `peers[2 * v + p]` is the endpoint that port `p` of node `v` is linked to.
/// The reference clockwise direction is fixed by `cw_ports[0]`: a pulse sent
/// out of node 0's clockwise port and forwarded through the opposite port at
/// every node travels clockwise. `cw_ports[v]` is the port through which node
/// `v` reaches its clockwise neighbour.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "WiringRepr", into = "WiringRepr")]
pub struct PortAssignment {
    peers: Vec<Endpoint>,
    cw_ports: Vec<PortLabel>,
    cw_next: Vec<NodeId>,
}

#[derive(Serialize, Deserialize)]
struct WiringRepr {
    peers: Vec<Endpoint>,
    cw_ports: Vec<PortLabel>,
}

impl TryFrom<WiringRepr> for PortAssignment {
    type Error = Error;

    fn try_from(repr: WiringRepr) -> Result<Self> {
        let anchor = *repr
            .cw_ports
            .first()
            .ok_or_else(|| Error::MalformedWiring("cw_ports is empty".into()))?;
        let assignment = PortAssignment::from_wiring_anchored(repr.peers, anchor)?;
        if assignment.cw_ports != repr.cw_ports {
            return Err(Error::MalformedWiring(
                "cw_ports disagree with the wiring".into(),
            ));
        }
        Ok(assignment)
    }
}

impl From<PortAssignment> for WiringRepr {
    fn from(a: PortAssignment) -> Self {
        WiringRepr {
            peers: a.peers,
            cw_ports: a.cw_ports,
        }
    }
}

impl PortAssignment {
    /// Ring `0 -> 1 -> ... -> n-1 -> 0` where every port 1 leads clockwise.
    pub fn oriented(n: usize) -> Result<Self> {
        Self::from_cw_ports(vec![PortLabel::One; n])
    }

    /// Ring in index order with node `v` reaching its clockwise neighbour via `cw_ports[v]`.
    pub fn from_cw_ports(cw_ports: Vec<PortLabel>) -> Result<Self> {
        let n = cw_ports.len();
        if n == 0 {
            return Err(Error::EmptyRing);
        }
        let mut peers = vec![Endpoint::new(0, PortLabel::Zero); 2 * n];
        for v in 0..n {
            let next = (v + 1) % n;
            let out = Endpoint::new(v, cw_ports[v]);
            let back = Endpoint::new(next, cw_ports[next].opposite());
            peers[ChannelId::from_sender(out).0] = back;
            peers[ChannelId::from_sender(back).0] = out;
        }
        Self::from_wiring_anchored(peers, cw_ports[0])
    }

    /// Uniformly random port labels on a ring in index order.
    pub fn random<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Result<Self> {
        let ports = (0..n)
            .map(|_| {
                if rng.gen::<bool>() {
                    PortLabel::One
                } else {
                    PortLabel::Zero
                }
            })
            .collect();
        Self::from_cw_ports(ports)
    }

    /// All `2^n` port labelings of an `n`-ring in index order.
    pub fn enumerate_all(n: usize) -> impl Iterator<Item = PortAssignment> {
        assert!(n < 32, "enumerating 2^{n} labelings");
        (0u32..(1 << n)).map(move |mask| {
            let ports = (0..n)
                .map(|v| PortLabel::from_index(((mask >> v) & 1) as usize))
                .collect();
            Self::from_cw_ports(ports).expect("index-order ring is always valid")
        })
    }

    /// Validates an explicit wiring; node 0's port 1 defines clockwise.
    pub fn from_wiring(peers: Vec<Endpoint>) -> Result<Self> {
        Self::from_wiring_anchored(peers, PortLabel::One)
    }

    fn from_wiring_anchored(peers: Vec<Endpoint>, anchor: PortLabel) -> Result<Self> {
        if peers.is_empty() {
            return Err(Error::EmptyRing);
        }
        if !peers.len().is_multiple_of(2) {
            return Err(Error::WiringSize {
                endpoints: peers.len(),
                expected: peers.len() + 1,
            });
        }
        let n = peers.len() / 2;
        for (idx, peer) in peers.iter().enumerate() {
            let me = ChannelId(idx).sender();
            if peer.node.0 >= n {
                return Err(Error::MalformedWiring(format!(
                    "{me:?} is wired to missing node {}",
                    peer.node.0
                )));
            }
            if *peer == me {
                return Err(Error::MalformedWiring(format!("{me:?} is wired to itself")));
            }
            if peers[ChannelId::from_sender(*peer).0] != me {
                return Err(Error::MalformedWiring(format!(
                    "{me:?} -> {peer:?} is not reciprocated"
                )));
            }
        }

        let mut cw_ports = vec![PortLabel::Zero; n];
        let mut cw_next = vec![NodeId(0); n];
        let mut seen = vec![false; n];
        let mut out = Endpoint::new(0, anchor);
        for _ in 0..n {
            let v = out.node.0;
            if seen[v] {
                return Err(Error::MalformedWiring(format!(
                    "ring closes after visiting {} of {n} nodes",
                    seen.iter().filter(|s| **s).count()
                )));
            }
            seen[v] = true;
            cw_ports[v] = out.port;
            let arrival = peers[ChannelId::from_sender(out).0];
            cw_next[v] = arrival.node;
            out = Endpoint {
                node: arrival.node,
                port: arrival.port.opposite(),
            };
        }
        if out != Endpoint::new(0, anchor) {
            return Err(Error::MalformedWiring("links do not form a single cycle".into()));
        }
        Ok(PortAssignment {
            peers,
            cw_ports,
            cw_next,
        })
    }

    pub fn len(&self) -> usize {
        self.cw_ports.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cw_ports.is_empty()
    }

    pub fn channel_count(&self) -> usize {
        self.peers.len()
    }

    pub fn peers(&self) -> &[Endpoint] {
        &self.peers
    }

    /// Where a pulse sent into `channel` arrives.
    pub fn destination(&self, channel: ChannelId) -> Endpoint {
        self.peers[channel.0]
    }

    /// The channel that delivers into `ep`.
    pub fn incoming(&self, ep: Endpoint) -> ChannelId {
        ChannelId::from_sender(self.peers[ChannelId::from_sender(ep).0])
    }

    pub fn cw_port(&self, node: NodeId) -> PortLabel {
        self.cw_ports[node.0]
    }

    pub fn cw_ports(&self) -> &[PortLabel] {
        &self.cw_ports
    }

    pub fn cw_successor(&self, node: NodeId) -> NodeId {
        self.cw_next[node.0]
    }

    /// Direction of pulses sent out of `ep`.
    pub fn send_direction(&self, ep: Endpoint) -> Direction {
        if ep.port == self.cw_ports[ep.node.0] {
            Direction::Cw
        } else {
            Direction::Ccw
        }
    }

    pub fn channel_direction(&self, channel: ChannelId) -> Direction {
        self.send_direction(channel.sender())
    }

    /// Direction of pulses arriving at `ep`.
    pub fn arrival_direction(&self, ep: Endpoint) -> Direction {
        self.send_direction(ep).reverse()
    }

    /// True when every node's port 1 is wired to a port 0 and leads clockwise.
    pub fn is_oriented(&self) -> bool {
        self.cw_ports.iter().all(|p| *p == PortLabel::One)
            && self
                .peers
                .iter()
                .enumerate()
                .all(|(idx, peer)| ChannelId(idx).sender().port != peer.port)
    }
}
