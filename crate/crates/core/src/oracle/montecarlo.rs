//! Monte-Carlo estimates for the message-free id sampler.

use std::collections::HashSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::fabric::PortAssignment;
use crate::protocols::{A4Config, ProtocolKind, RingSetup, MAX_ID_BITS};
use crate::{Error, Result};

use super::checks::check_a3_snapshot;

/// Frequency a desk-scale run must reach where the guarantee is asymptotic.
pub const DESK_THRESHOLD: f64 = 0.99;

/// Random stream for one trial; independent of the order trials run in.
pub fn trial_rng(seed: u64, trial: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    rng
}

/// `(c+1)(c+2)·log₂ n`, the bit length the longest draw stays under w.h.p.
pub fn max_bits_bound(n: usize, c: f64) -> f64 {
    (c + 1.0) * (c + 2.0) * (n as f64).log2()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniqueMaxEstimate {
    pub n: usize,
    pub c: f64,
    pub trials: u64,
    pub seed: u64,
    /// Trials where exactly one node drew the largest id.
    pub unique_max_freq: f64,
    pub u_bound: f64,
    /// Trials whose longest bit count is at most `u_bound`.
    pub max_bits_within_u_freq: f64,
    pub mean_bits: f64,
    pub mean_max_bits: f64,
    /// Draws longer than [`MAX_ID_BITS`], which keep only their low bits.
    pub clamped_draws: u64,
    pub threshold: f64,
}

fn check_sizes(n: usize, trials: u64) -> Result<()> {
    if n == 0 {
        return Err(Error::EmptyRing);
    }
    if trials == 0 {
        return Err(Error::InvalidParameter("need at least one trial".into()));
    }
    Ok(())
}

/// Draws `n` ids per trial and measures how often the maximum is unique and
/// how long the longest draw is.
pub fn estimate_unique_max(n: usize, c: f64, trials: u64, seed: u64) -> Result<UniqueMaxEstimate> {
    check_sizes(n, trials)?;
    let config = A4Config::new(c)?;
    let u_bound = max_bits_bound(n, c);
    let mut unique = 0u64;
    let mut within = 0u64;
    let mut bits_total = 0u128;
    let mut max_bits_total = 0u128;
    let mut clamped = 0u64;
    let mut ids = Vec::with_capacity(n);
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        ids.clear();
        let mut longest = 0;
        for _ in 0..n {
            let s = config.sample(&mut rng);
            bits_total += s.bit_count as u128;
            longest = longest.max(s.bit_count);
            clamped += u64::from(s.bit_count > MAX_ID_BITS);
            ids.push(s.id);
        }
        let top = ids.iter().copied().max().unwrap_or(0);
        unique += u64::from(ids.iter().filter(|id| **id == top).count() == 1);
        within += u64::from(longest as f64 <= u_bound);
        max_bits_total += longest as u128;
    }
    let t = trials as f64;
    Ok(UniqueMaxEstimate {
        n,
        c,
        trials,
        seed,
        unique_max_freq: unique as f64 / t,
        u_bound,
        max_bits_within_u_freq: within as f64 / t,
        mean_bits: bits_total as f64 / (t * n as f64),
        mean_max_bits: max_bits_total as f64 / t,
        clamped_draws: clamped,
        threshold: DESK_THRESHOLD,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResampleEstimate {
    pub n: usize,
    pub c: f64,
    pub trials: u64,
    pub seed: u64,
    /// Runs ending with every node holding a different id.
    pub distinct_ids_freq: f64,
    /// Runs whose sampled ids had a unique maximum.
    pub unique_max_freq: f64,
    /// Runs that elected exactly the largest-id node and agreed on a direction.
    pub elected_and_oriented_freq: f64,
    /// Runs with at least one draw longer than [`MAX_ID_BITS`].
    pub clamped_runs: u64,
    pub mean_pulses: f64,
    pub threshold: f64,
}

/// Full pipeline: sampled ids on a randomly wired ring, then the
/// non-oriented election with id redrawing, run to quiescence.
pub fn estimate_distinct_after_resample(n: usize, c: f64, trials: u64, seed: u64) -> Result<ResampleEstimate> {
    check_sizes(n, trials)?;
    let config = A4Config::new(c)?;
    let mut distinct = 0u64;
    let mut unique_max = 0u64;
    let mut elected = 0u64;
    let mut clamped = 0u64;
    let mut pulses = 0f64;
    for trial in 0..trials {
        let mut rng = trial_rng(seed, trial);
        let draws: Vec<_> = (0..n).map(|_| config.sample(&mut rng)).collect();
        clamped += u64::from(draws.iter().any(|d| d.bit_count > MAX_ID_BITS));
        let ids: Vec<u64> = draws.iter().map(|d| d.id).collect();
        let top = ids.iter().copied().max().unwrap_or(0);
        unique_max += u64::from(ids.iter().filter(|id| **id == top).count() == 1);
        let assignment = PortAssignment::random(n, &mut rng)?;
        let setup = RingSetup::new(ProtocolKind::A3bResample, ids, assignment).with_node_seed(rng.gen());
        let summary = setup.build()?.run_bursts(u64::MAX)?;
        let end = &summary.snapshot;
        let mut seen = HashSet::new();
        distinct += u64::from(end.ids.iter().all(|id| seen.insert(*id)));
        elected += u64::from(check_a3_snapshot(&setup, end)?.all_pass());
        pulses += end.sends as f64;
    }
    let t = trials as f64;
    Ok(ResampleEstimate {
        n,
        c,
        trials,
        seed,
        distinct_ids_freq: distinct as f64 / t,
        unique_max_freq: unique_max as f64 / t,
        elected_and_oriented_freq: elected as f64 / t,
        clamped_runs: clamped,
        mean_pulses: pulses / t,
        threshold: DESK_THRESHOLD,
    })
}
