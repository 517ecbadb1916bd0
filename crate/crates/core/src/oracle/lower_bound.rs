//! Solitude patterns and the common-prefix construction behind the pulse
//! lower bound.

use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use crate::fabric::{
    Automaton, ChannelId, Delivery, Direction, PortAssignment, RingNetwork, Scheduler,
    SchedulerPolicy,
};
use crate::protocols::{ProtocolKind, RingSetup};
use crate::{Error, Result};

use super::report::InvariantReport;

/// Arrival directions seen by a node alone on a one-node ring: `0` for a
/// clockwise pulse, `1` for a counter-clockwise one.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SolitudePattern {
    pub bits: String,
    /// False when the pulse budget ran out before the run went quiet.
    pub complete: bool,
}

impl SolitudePattern {
    pub fn len(&self) -> usize {
        self.bits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.bits.is_empty()
    }
}

/// Default budget: twice the longest pattern the terminating election produces.
pub fn default_budget(id: u64) -> u64 {
    id.saturating_mul(4).saturating_add(4)
}

/// Pattern of `protocol` at `id` under the sent-order, clockwise-first scheduler.
pub fn solitude_pattern(protocol: ProtocolKind, id: u64, budget: Option<u64>) -> Result<SolitudePattern> {
    let setup = RingSetup::oriented(protocol, vec![id])?;
    let net = setup.build()?;
    run_solitude(net, budget.unwrap_or_else(|| default_budget(id)))
}

/// Pattern of an arbitrary node program on the one-node ring.
pub fn solitude_pattern_of<A: Automaton>(node: A, budget: u64) -> Result<SolitudePattern> {
    let net = RingNetwork::new(PortAssignment::oriented(1)?, vec![node], 0)?;
    run_solitude(net, budget)
}

fn run_solitude<A: Automaton>(mut net: RingNetwork<A>, budget: u64) -> Result<SolitudePattern> {
    let mut sched = Scheduler::new(SchedulerPolicy::Solitude);
    net.initialize(&mut sched)?;
    let mut bits = String::new();
    let mut delivered = 0;
    loop {
        if net.is_quiescent() || net.all_terminated() {
            return Ok(SolitudePattern { bits, complete: true });
        }
        if delivered == budget {
            return Ok(SolitudePattern { bits, complete: false });
        }
        let was_live = !net.terminated()[0];
        match net.deliver_next(&mut sched)? {
            Delivery::Quiescent => return Ok(SolitudePattern { bits, complete: true }),
            Delivery::Delivered { channel, .. } => {
                delivered += 1;
                if was_live {
                    bits.push(bit(net.assignment().channel_direction(channel)));
                }
            }
        }
    }
}

fn bit(direction: Direction) -> char {
    match direction {
        Direction::Cw => '0',
        Direction::Ccw => '1',
    }
}

/// Patterns of `protocol` for every id in `ids`.
pub fn solitude_patterns(
    protocol: ProtocolKind,
    ids: impl IntoIterator<Item = u64>,
) -> Result<BTreeMap<u64, SolitudePattern>> {
    ids.into_iter()
        .map(|id| Ok((id, solitude_pattern(protocol, id, None)?)))
        .collect()
}

/// Two ids sharing a pattern, smallest pair first.
pub fn first_collision(patterns: &BTreeMap<u64, SolitudePattern>) -> Option<(u64, u64)> {
    let mut seen: HashMap<&str, u64> = HashMap::new();
    for (id, p) in patterns {
        if let Some(prev) = seen.insert(&p.bits, *id) {
            return Some((prev, *id));
        }
    }
    None
}

/// Distinct patterns for distinct ids: a shared pattern would let two nodes
/// both act as if alone on a two-node ring, and both elect themselves.
pub fn assert_patterns_unique(patterns: &BTreeMap<u64, SolitudePattern>) -> InvariantReport {
    let mut report = InvariantReport::new("solitude_patterns");
    let partial: Vec<u64> = patterns
        .iter()
        .filter(|(_, p)| !p.complete)
        .map(|(id, _)| *id)
        .collect();
    report.verdict(
        "patterns_complete",
        "every pattern ended in quiescence or termination within its budget",
        partial.is_empty(),
        || format!("budget exhausted for ids {partial:?}"),
    );
    let collision = first_collision(patterns);
    report.verdict(
        "patterns_distinct",
        "no two ids share a solitude pattern",
        collision.is_none(),
        || {
            let (a, b) = collision.unwrap_or_default();
            format!("ids {a} and {b} share pattern {:?}", patterns[&a].bits)
        },
    );
    report
}

/// `⌊log₂(k/n)⌋`: the largest `ℓ` with `n·2^ℓ ≤ k`.
pub fn floor_log2_ratio(k: u64, n: u64) -> u32 {
    assert!(n >= 1 && k >= n);
    (k / n).ilog2()
}

/// `n` ids whose patterns agree on a prefix long enough to force a pulse
/// lower bound on the ring built from them.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PrefixWitness {
    /// Number of distinct patterns the witness was drawn from.
    pub k: u64,
    pub n: u64,
    pub id_subset: Vec<u64>,
    /// The guaranteed prefix length `⌊log₂(k/n)⌋`.
    pub prefix_length: u32,
    pub shared_prefix: String,
    /// Length of the longest prefix the chosen patterns actually share.
    pub common_prefix_length: usize,
    /// `n · prefix_length`.
    pub pulse_lower_bound: u64,
}

/// Picks `n` ids whose patterns share a prefix of length `⌊log₂(k/n)⌋`.
///
/// Patterns of at least that length are grouped by their prefix; the
/// lexicographically first group with `n` members supplies its `n`
/// smallest ids.
pub fn build_prefix_witness(patterns: &BTreeMap<u64, SolitudePattern>, n: u64) -> Result<PrefixWitness> {
    let k = patterns.len() as u64;
    if n == 0 {
        return Err(Error::InvalidParameter("witness needs n >= 1".into()));
    }
    if k < n {
        return Err(Error::InvalidParameter(format!(
            "witness needs at least n = {n} patterns, got {k}"
        )));
    }
    if let Some((a, b)) = first_collision(patterns) {
        return Err(Error::InvalidParameter(format!(
            "ids {a} and {b} share a pattern"
        )));
    }
    let ell = floor_log2_ratio(k, n);
    let mut groups: BTreeMap<&str, Vec<u64>> = BTreeMap::new();
    for (id, p) in patterns {
        if p.bits.len() >= ell as usize {
            groups.entry(&p.bits[..ell as usize]).or_default().push(*id);
        }
    }
    let (prefix, ids) = groups
        .into_iter()
        .find(|(_, ids)| ids.len() as u64 >= n)
        .ok_or_else(|| Error::InvalidParameter("no prefix is shared by n patterns".into()))?;
    let id_subset: Vec<u64> = ids.into_iter().take(n as usize).collect();
    let chosen: Vec<&str> = id_subset.iter().map(|id| patterns[id].bits.as_str()).collect();
    Ok(PrefixWitness {
        k,
        n,
        shared_prefix: prefix.to_string(),
        common_prefix_length: common_prefix_length(&chosen),
        prefix_length: ell,
        pulse_lower_bound: n * ell as u64,
        id_subset,
    })
}

pub fn common_prefix_length(strings: &[&str]) -> usize {
    let Some(first) = strings.first() else {
        return 0;
    };
    (0..first.len())
        .take_while(|i| strings.iter().all(|s| s.as_bytes().get(*i) == first.as_bytes().get(*i)))
        .count()
}

/// Re-checks, character by character, that every chosen id's pattern starts
/// with the witness prefix and that the prefix has the promised length.
pub fn verify_prefix(witness: &PrefixWitness, patterns: &BTreeMap<u64, SolitudePattern>) -> bool {
    let prefix = witness.shared_prefix.as_bytes();
    prefix.len() >= witness.prefix_length as usize
        && witness.id_subset.len() as u64 == witness.n
        && witness.id_subset.iter().all(|id| {
            patterns.get(id).is_some_and(|p| {
                let bits = p.bits.as_bytes();
                bits.len() >= prefix.len() && prefix.iter().zip(bits).all(|(a, b)| a == b)
            })
        })
}

/// Outcome of running the witness ids together on one ring.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WitnessReplay {
    pub setup: RingSetup,
    /// Every delivery made, in order, up to and including the divergent one.
    pub schedule: Vec<ChannelId>,
    /// Deliveries before any node saw something its solitude run did not.
    pub matched_deliveries: u64,
    pub sends_before_divergence: u128,
    /// Index into `schedule` of the first divergent delivery, if any.
    pub diverged_at: Option<usize>,
}

/// Builds an oriented ring from the witness ids and delivers pulses in
/// global send order, clockwise first, one time unit per hop. Stops at the
/// first arrival that differs from the receiving node's solitude pattern or
/// runs past its end.
pub fn replay_witness(
    protocol: ProtocolKind,
    witness: &PrefixWitness,
    patterns: &BTreeMap<u64, SolitudePattern>,
) -> Result<WitnessReplay> {
    let setup = RingSetup::oriented(protocol, witness.id_subset.clone())?;
    let mut net = setup.build()?;
    let mut sched = Scheduler::new(SchedulerPolicy::Synchronized);
    net.initialize(&mut sched)?;
    let expected: Vec<&[u8]> = witness
        .id_subset
        .iter()
        .map(|id| patterns[id].bits.as_bytes())
        .collect();
    let mut seen = vec![0usize; setup.n()];
    let mut schedule = Vec::new();
    let mut sends_before = net.snapshot().sends;
    let mut diverged_at = None;
    let limit = setup.default_step_limit();
    while (schedule.len() as u64) < limit {
        let Delivery::Delivered { channel, at } = net.deliver_next(&mut sched)? else {
            break;
        };
        schedule.push(channel);
        let v = at.node.0;
        let got = bit(net.assignment().channel_direction(channel)) as u8;
        if expected[v].get(seen[v]) != Some(&got) {
            diverged_at = Some(schedule.len() - 1);
            break;
        }
        seen[v] += 1;
        sends_before = net.snapshot().sends;
        if net.all_terminated() {
            break;
        }
    }
    Ok(WitnessReplay {
        matched_deliveries: diverged_at.unwrap_or(schedule.len()) as u64,
        sends_before_divergence: sends_before,
        diverged_at,
        schedule,
        setup,
    })
}
