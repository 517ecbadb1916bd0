//! Exhaustive search over delivery orders.

use std::collections::{BTreeSet, HashSet};
use std::hash::Hash;

use serde::{Deserialize, Serialize};

use crate::fabric::{Automaton, ChannelId, Counters, Output, RingNetwork, Scheduler, SchedulerPolicy};
use crate::{Error, Result};

/// What a run looks like once nothing more can be delivered.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct TerminalOutcome {
    /// Per node `(ρcw, σcw, ρccw, σccw)` on an oriented ring.
    pub counters: Vec<(u64, u64, u64, u64)>,
    pub outputs: Vec<String>,
    pub terminated: Vec<bool>,
    /// Pulses left in channels, nonzero only for a stalled run.
    pub in_flight: u64,
    pub sends: u128,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exploration {
    /// Distinct global states visited.
    pub states: usize,
    /// Distinct reachable states with nothing deliverable.
    pub terminal_states: usize,
    pub outcomes: BTreeSet<TerminalOutcome>,
}

impl Exploration {
    /// Every interleaving ends in the same place.
    pub fn unique_outcome(&self) -> Option<&TerminalOutcome> {
        match self.outcomes.len() {
            1 => self.outcomes.iter().next(),
            _ => None,
        }
    }
}

fn outcome<A: Automaton>(net: &RingNetwork<A>) -> TerminalOutcome {
    let c = |c: &Counters| (c.recv[0], c.sent[1], c.recv[1], c.sent[0]);
    let label = |o: Output| match o {
        Output::Undecided => "undecided".to_string(),
        Output::Leader => "leader".to_string(),
        Output::NonLeader => "non_leader".to_string(),
    };
    TerminalOutcome {
        counters: net.counters().iter().map(c).collect(),
        outputs: net.automata().iter().map(|a| label(a.output())).collect(),
        terminated: net.terminated().to_vec(),
        in_flight: net.in_flight().iter().sum(),
        sends: net
            .counters()
            .iter()
            .map(|c| (c.sent[0] + c.sent[1]) as u128)
            .sum(),
    }
}

/// Visits every state reachable from `net` by some delivery order,
/// merging identical global states. Fails once more than `max_states`
/// states have been seen.
pub fn explore_all<A>(mut net: RingNetwork<A>, max_states: usize) -> Result<Exploration>
where
    A: Automaton + Clone + Eq + Hash,
{
    if !net.is_initialized() {
        net.initialize(&mut Scheduler::new(SchedulerPolicy::RoundRobin))?;
    }
    let mut seen = HashSet::new();
    seen.insert(net.state());
    let mut stack = vec![net];
    let mut outcomes = BTreeSet::new();
    let mut terminal_states = 0;
    while let Some(net) = stack.pop() {
        let channels: Vec<ChannelId> = net.deliverable_channels();
        if channels.is_empty() {
            terminal_states += 1;
            outcomes.insert(outcome(&net));
            continue;
        }
        for channel in channels {
            let mut next = net.clone();
            next.deliver(channel, None)?;
            if seen.insert(next.state()) {
                if seen.len() > max_states {
                    return Err(Error::InvalidParameter(format!(
                        "state space exceeds {max_states} states"
                    )));
                }
                stack.push(next);
            }
        }
    }
    Ok(Exploration {
        states: seen.len(),
        terminal_states,
        outcomes,
    })
}
