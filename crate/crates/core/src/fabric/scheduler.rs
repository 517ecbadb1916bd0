use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{ChannelId, Direction};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "policy", rename_all = "snake_case")]
pub enum SchedulerPolicy {
    /// Uniform choice among deliverable channels.
    UniformRandom { seed: u64 },
    /// Cycles through channel indices.
    RoundRobin,
    /// Always the first deliverable channel in `order`; unlisted channels
    /// rank after listed ones, by index.
    FixedPriority { order: Vec<ChannelId> },
    /// An explicit delivery list.
    Script { deliveries: Vec<ChannelId> },
    /// Single-node canonical order: pulses in the order they were sent,
    /// simultaneous sends clockwise first.
    Solitude,
    /// The same rule on any ring: every pulse takes one time unit, pulses
    /// are delivered by send time, clockwise first, then in send order.
    Synchronized,
}

impl SchedulerPolicy {
    pub fn name(&self) -> &'static str {
        match self {
            SchedulerPolicy::UniformRandom { .. } => "random",
            SchedulerPolicy::RoundRobin => "roundrobin",
            SchedulerPolicy::FixedPriority { .. } => "priority",
            SchedulerPolicy::Script { .. } => "script",
            SchedulerPolicy::Solitude => "solitude",
            SchedulerPolicy::Synchronized => "synchronized",
        }
    }
}

#[derive(Clone, Debug)]
enum State {
    Random(Box<ChaCha8Rng>),
    RoundRobin { cursor: usize },
    Priority,
    Script { pos: usize },
    Fifo(Fifo),
}

#[derive(Clone, Debug, Default)]
struct Fifo {
    /// Per channel: (send time, direction rank, send sequence) of each pulse.
    queues: Vec<VecDeque<(u64, u8, u64)>>,
    now: u64,
    seq: u64,
}

/// Chooses which channel delivers next. Every source of nondeterminism in a
/// run lives here.
#[derive(Clone, Debug)]
pub struct Scheduler {
    policy: SchedulerPolicy,
    state: State,
}

impl Scheduler {
    pub fn new(policy: SchedulerPolicy) -> Self {
        let state = match &policy {
            SchedulerPolicy::UniformRandom { seed } => {
                State::Random(Box::new(ChaCha8Rng::seed_from_u64(*seed)))
            }
            SchedulerPolicy::RoundRobin => State::RoundRobin { cursor: 0 },
            SchedulerPolicy::FixedPriority { .. } => State::Priority,
            SchedulerPolicy::Script { .. } => State::Script { pos: 0 },
            SchedulerPolicy::Solitude | SchedulerPolicy::Synchronized => {
                State::Fifo(Fifo::default())
            }
        };
        Scheduler { policy, state }
    }

    pub fn random(seed: u64) -> Self {
        Self::new(SchedulerPolicy::UniformRandom { seed })
    }

    pub fn script(deliveries: Vec<ChannelId>) -> Self {
        Self::new(SchedulerPolicy::Script { deliveries })
    }

    pub fn policy(&self) -> &SchedulerPolicy {
        &self.policy
    }

    pub(crate) fn on_send(&mut self, channel: ChannelId, direction: Direction) {
        if let State::Fifo(fifo) = &mut self.state {
            if fifo.queues.len() <= channel.0 {
                fifo.queues.resize_with(channel.0 + 1, VecDeque::new);
            }
            let rank = match direction {
                Direction::Cw => 0,
                Direction::Ccw => 1,
            };
            fifo.queues[channel.0].push_back((fifo.now, rank, fifo.seq));
            fifo.seq += 1;
        }
    }

    /// Picks one of `deliverable` (ascending, nonempty).
    pub(crate) fn pick(
        &mut self,
        deliverable: &[ChannelId],
        channel_count: usize,
    ) -> Result<ChannelId> {
        debug_assert!(!deliverable.is_empty());
        match (&mut self.state, &self.policy) {
            (State::Random(rng), _) => Ok(deliverable[rng.gen_range(0..deliverable.len())]),
            (State::RoundRobin { cursor }, _) => {
                let chosen = deliverable
                    .iter()
                    .copied()
                    .find(|c| c.0 >= *cursor)
                    .unwrap_or(deliverable[0]);
                *cursor = chosen.0 + 1;
                Ok(chosen)
            }
            (State::Priority, SchedulerPolicy::FixedPriority { order }) => Ok(order
                .iter()
                .copied()
                .find(|c| deliverable.binary_search(c).is_ok())
                .unwrap_or(deliverable[0])),
            (State::Script { pos }, SchedulerPolicy::Script { deliveries }) => {
                let next = deliveries.get(*pos).copied().ok_or(Error::ScriptExhausted)?;
                *pos += 1;
                Ok(next)
            }
            (State::Fifo(fifo), policy) => {
                if *policy == SchedulerPolicy::Solitude && channel_count != 2 {
                    return Err(Error::SolitudeNeedsSingleNode(channel_count / 2));
                }
                let chosen = deliverable
                    .iter()
                    .copied()
                    .filter_map(|c| fifo.queues.get(c.0).and_then(|q| q.front()).map(|k| (*k, c)))
                    .min()
                    .map(|(_, c)| c)
                    .ok_or(Error::SchedulerContract(deliverable[0]))?;
                let (time, _, _) = fifo.queues[chosen.0]
                    .pop_front()
                    .expect("chosen queue is nonempty");
                fifo.now = time + 1;
                Ok(chosen)
            }
            _ => unreachable!("scheduler state always matches its policy"),
        }
    }

    /// Remaining scripted deliveries, if this is a script scheduler.
    pub fn script_remaining(&self) -> Option<usize> {
        match (&self.state, &self.policy) {
            (State::Script { pos }, SchedulerPolicy::Script { deliveries }) => {
                Some(deliveries.len() - *pos)
            }
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn chans(ids: &[usize]) -> Vec<ChannelId> {
        ids.iter().map(|i| ChannelId(*i)).collect()
    }

    #[test]
    fn round_robin_cycles() {
        let mut s = Scheduler::new(SchedulerPolicy::RoundRobin);
        let d = chans(&[0, 2, 3]);
        let picks: Vec<_> = (0..4).map(|_| s.pick(&d, 4).unwrap().0).collect();
        assert_eq!(picks, vec![0, 2, 3, 0]);
    }

    #[test]
    fn priority_respects_order() {
        let mut s = Scheduler::new(SchedulerPolicy::FixedPriority {
            order: chans(&[3, 1]),
        });
        assert_eq!(s.pick(&chans(&[0, 1, 3]), 4).unwrap(), ChannelId(3));
        assert_eq!(s.pick(&chans(&[0, 1]), 4).unwrap(), ChannelId(1));
        assert_eq!(s.pick(&chans(&[0, 2]), 4).unwrap(), ChannelId(0));
    }

    #[test]
    fn script_runs_out() {
        let mut s = Scheduler::script(chans(&[1]));
        assert_eq!(s.pick(&chans(&[1]), 2).unwrap(), ChannelId(1));
        assert!(matches!(s.pick(&chans(&[1]), 2), Err(Error::ScriptExhausted)));
    }

    #[test]
    fn fifo_prefers_earlier_then_clockwise() {
        let mut s = Scheduler::new(SchedulerPolicy::Synchronized);
        // time 0: ccw on channel 0, then cw on channel 1
        s.on_send(ChannelId(0), Direction::Ccw);
        s.on_send(ChannelId(1), Direction::Cw);
        assert_eq!(s.pick(&chans(&[0, 1]), 2).unwrap(), ChannelId(1));
        // now = 1; a new cw send is later than the pending ccw one
        s.on_send(ChannelId(1), Direction::Cw);
        assert_eq!(s.pick(&chans(&[0, 1]), 2).unwrap(), ChannelId(0));
    }

    #[test]
    fn solitude_rejects_larger_rings() {
        let mut s = Scheduler::new(SchedulerPolicy::Solitude);
        s.on_send(ChannelId(1), Direction::Cw);
        assert!(matches!(
            s.pick(&chans(&[1]), 4),
            Err(Error::SolitudeNeedsSingleNode(2))
        ));
    }

    #[test]
    fn same_seed_same_choices() {
        let d = chans(&[0, 1, 2, 3, 4, 5]);
        let mut a = Scheduler::random(9);
        let mut b = Scheduler::random(9);
        for _ in 0..50 {
            assert_eq!(a.pick(&d, 6).unwrap(), b.pick(&d, 6).unwrap());
        }
    }
}
