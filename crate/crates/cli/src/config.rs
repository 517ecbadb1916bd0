//! Experiment configuration: a JSON file, overridden field by field by flags.

use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::index;
use rand::Rng;
use ringpulse::fabric::{ChannelId, PortAssignment, SchedulerPolicy};
use ringpulse::protocols::{A4Config, ProtocolKind};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Ports {
    Oriented,
    Random,
    File,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Random,
    Roundrobin,
    Priority,
    Script,
    Synchronized,
}

/// How ids are drawn when no explicit list is given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum IdDist {
    /// Distinct ids from `1..=id_max`.
    Distinct,
    /// Independent ids from `1..=id_max`, repeats allowed.
    Duplicates,
    /// The message-free sampler with parameter `c`.
    Sampled,
}

/// Inclusive seed range, written `a..b` or as a single number.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct SeedRange {
    pub first: u64,
    pub last: u64,
}

impl SeedRange {
    pub fn iter(self) -> impl Iterator<Item = u64> {
        self.first..=self.last
    }
}

impl FromStr for SeedRange {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let parse = |t: &str| t.trim().parse::<u64>().map_err(|_| format!("bad seed {t:?}"));
        let (first, last) = match s.split_once("..") {
            Some((a, b)) => (parse(a)?, parse(b.trim_start_matches('='))?),
            None => (parse(s)?, parse(s)?),
        };
        if first > last {
            return Err(format!("empty seed range {s:?}"));
        }
        Ok(SeedRange { first, last })
    }
}

impl TryFrom<String> for SeedRange {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        s.parse()
    }
}

impl From<SeedRange> for String {
    fn from(r: SeedRange) -> String {
        r.to_string()
    }
}

impl std::fmt::Display for SeedRange {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}..{}", self.first, self.last)
    }
}

/// Every field is optional so a file and flags can each supply a part.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    /// a1, a2, a3a, a3b, a3b+resample or a4+a3b
    #[arg(long)]
    pub protocol: Option<ProtocolKind>,
    /// Explicit ids in ring order, comma separated
    #[arg(long, value_delimiter = ',')]
    pub ids: Option<Vec<u64>>,
    /// Ring size when ids are drawn
    #[arg(long)]
    pub n: Option<usize>,
    /// Upper end of the id range when ids are drawn
    #[arg(long = "id-max")]
    pub id_max: Option<u64>,
    #[arg(long = "id-dist", value_enum)]
    pub id_dist: Option<IdDist>,
    #[arg(long, value_enum)]
    pub ports: Option<Ports>,
    /// Wiring JSON for `--ports file`
    #[arg(long)]
    pub wiring: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub scheduler: Option<SchedulerKind>,
    /// Channel order for `--scheduler priority`
    #[arg(long, value_delimiter = ',')]
    pub priority: Option<Vec<usize>>,
    /// Delivery list for `--scheduler script`: a JSON array of channels or a trace file
    #[arg(long)]
    pub script: Option<PathBuf>,
    /// Seed range, e.g. 0..99 (inclusive)
    #[arg(long)]
    pub seeds: Option<SeedRange>,
    /// Runs per seed
    #[arg(long)]
    pub trials: Option<u64>,
    /// Delivery budget as a multiple of the expected pulse total
    #[arg(long = "step-mult")]
    pub step_mult: Option<f64>,
    /// Directory for one JSON-lines trace per run
    #[arg(long = "trace-out")]
    pub trace_out: Option<PathBuf>,
    /// Path of the JSON report
    #[arg(long = "report-out")]
    pub report_out: Option<PathBuf>,
    /// Sampler parameter for drawn ids
    #[arg(long)]
    pub c: Option<f64>,
}

macro_rules! overlay {
    ($base:ident, $top:ident, $($f:ident),*) => {
        $( if $top.$f.is_some() { $base.$f = $top.$f; } )*
    };
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        serde_json::from_str(&text)
            .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
    }

    /// Fields set in `flags` win.
    pub fn overlay(mut self, flags: ExperimentConfig) -> Self {
        overlay!(
            self, flags, protocol, ids, n, id_max, id_dist, ports, wiring, scheduler, priority,
            script, seeds, trials, step_mult, trace_out, report_out, c
        );
        self
    }

    /// Fills defaults and rejects inconsistent combinations before any run.
    pub fn resolve(self) -> Result<Resolved, CliError> {
        let usage = |m: String| Err(CliError::Usage(m));
        let Some(protocol) = self.protocol else {
            return usage("--protocol is required".into());
        };
        let ids = match (&self.ids, self.n) {
            (Some(_), Some(_)) => return usage("give either --ids or --n, not both".into()),
            (Some(ids), None) => {
                if ids.is_empty() {
                    return usage("--ids is empty".into());
                }
                if ids.contains(&0) {
                    return usage("ids must be >= 1".into());
                }
                if protocol.requires_distinct_ids() {
                    let mut sorted = ids.clone();
                    sorted.sort_unstable();
                    if let Some(w) = sorted.windows(2).find(|w| w[0] == w[1]) {
                        return usage(format!("{protocol} needs distinct ids; {} repeats", w[0]));
                    }
                }
                IdSource::Explicit(ids.clone())
            }
            (None, Some(0)) => return usage("--n must be at least 1".into()),
            (None, Some(n)) => {
                let default_dist = if protocol == ProtocolKind::A4A3b || self.c.is_some() {
                    IdDist::Sampled
                } else {
                    IdDist::Distinct
                };
                match self.id_dist.unwrap_or(default_dist) {
                    IdDist::Sampled => {
                        let c = self.c.unwrap_or(2.0);
                        let sampler = A4Config::new(c).map_err(|e| CliError::Usage(e.to_string()))?;
                        IdSource::Sampled { n, sampler }
                    }
                    dist => {
                        let Some(id_max) = self.id_max else {
                            return usage("--n needs --id-max (or --c for sampled ids)".into());
                        };
                        if id_max == 0 {
                            return usage("--id-max must be at least 1".into());
                        }
                        let distinct = dist == IdDist::Distinct || protocol.requires_distinct_ids();
                        if distinct && (id_max as u128) < n as u128 {
                            return usage(format!("cannot draw {n} distinct ids from 1..={id_max}"));
                        }
                        IdSource::Range { n, id_max, distinct }
                    }
                }
            }
            (None, None) => return usage("give --ids or --n".into()),
        };
        if protocol == ProtocolKind::A4A3b && !matches!(ids, IdSource::Sampled { .. }) {
            return usage("a4+a3b draws its ids; use --n and --c".into());
        }
        let n = ids.n();

        let ports = self.ports.unwrap_or(if protocol.requires_oriented() {
            Ports::Oriented
        } else {
            Ports::Random
        });
        let wiring = match ports {
            Ports::Oriented => Wiring::Oriented,
            Ports::Random => Wiring::Random,
            Ports::File => {
                let Some(path) = &self.wiring else {
                    return usage("--ports file needs --wiring".into());
                };
                let text = std::fs::read_to_string(path)
                    .map_err(|e| CliError::Usage(format!("cannot read wiring {}: {e}", path.display())))?;
                let a: PortAssignment = serde_json::from_str(&text)
                    .map_err(|e| CliError::Usage(format!("bad wiring {}: {e}", path.display())))?;
                if a.len() != n {
                    return usage(format!("wiring has {} nodes, ring has {n}", a.len()));
                }
                Wiring::Fixed(a)
            }
        };
        if protocol.requires_oriented() && ports == Ports::Random {
            return usage(format!("{protocol} runs on oriented rings only"));
        }
        if let Wiring::Fixed(a) = &wiring {
            if protocol.requires_oriented() && !a.is_oriented() {
                return usage(format!("{protocol} runs on oriented rings only"));
            }
        }

        let scheduler = match self.scheduler.unwrap_or(SchedulerKind::Random) {
            SchedulerKind::Random => Schedule::Random,
            SchedulerKind::Roundrobin => Schedule::Fixed(SchedulerPolicy::RoundRobin),
            SchedulerKind::Synchronized => Schedule::Fixed(SchedulerPolicy::Synchronized),
            SchedulerKind::Priority => {
                let order: Vec<usize> = self.priority.clone().unwrap_or_else(|| (0..2 * n).collect());
                if let Some(c) = order.iter().find(|c| **c >= 2 * n) {
                    return usage(format!("channel {c} does not exist on a {n}-node ring"));
                }
                Schedule::Fixed(SchedulerPolicy::FixedPriority {
                    order: order.into_iter().map(ChannelId).collect(),
                })
            }
            SchedulerKind::Script => {
                let Some(path) = &self.script else {
                    return usage("--scheduler script needs --script".into());
                };
                Schedule::Fixed(SchedulerPolicy::Script {
                    deliveries: read_script(path)?,
                })
            }
        };

        let trials = self.trials.unwrap_or(1);
        if trials == 0 {
            return usage("--trials must be at least 1".into());
        }
        let step_mult = self.step_mult.unwrap_or(2.0);
        if !(step_mult.is_finite() && step_mult > 0.0) {
            return usage("--step-mult must be positive".into());
        }
        Ok(Resolved {
            protocol,
            ids,
            wiring,
            scheduler,
            seeds: self.seeds.unwrap_or(SeedRange { first: 0, last: 0 }),
            trials,
            step_mult,
            trace_out: self.trace_out.clone(),
            report_out: self.report_out.clone(),
            config: self,
        })
    }
}

fn read_script(path: &Path) -> Result<Vec<ChannelId>, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read script {}: {e}", path.display())))?;
    if let Ok(list) = serde_json::from_str::<Vec<usize>>(&text) {
        return Ok(list.into_iter().map(ChannelId).collect());
    }
    ringpulse::trace::ExecutionTrace::from_jsonl(&text)
        .map(|(_, script)| script)
        .map_err(|e| CliError::Usage(format!("script {} is neither a channel list nor a trace: {e}", path.display())))
}

#[derive(Clone, Debug)]
pub enum IdSource {
    Explicit(Vec<u64>),
    Range { n: usize, id_max: u64, distinct: bool },
    Sampled { n: usize, sampler: A4Config },
}

impl IdSource {
    pub fn n(&self) -> usize {
        match self {
            IdSource::Explicit(ids) => ids.len(),
            IdSource::Range { n, .. } | IdSource::Sampled { n, .. } => *n,
        }
    }

    pub fn draw<R: Rng>(&self, rng: &mut R) -> Vec<u64> {
        match self {
            IdSource::Explicit(ids) => ids.clone(),
            IdSource::Range { n, id_max, distinct: true } => {
                index::sample(rng, *id_max as usize, *n).into_iter().map(|i| i as u64 + 1).collect()
            }
            IdSource::Range { n, id_max, distinct: false } => {
                (0..*n).map(|_| rng.gen_range(1..=*id_max)).collect()
            }
            IdSource::Sampled { n, sampler } => (0..*n).map(|_| sampler.sample(rng).id).collect(),
        }
    }
}

#[derive(Clone, Debug)]
pub enum Wiring {
    Oriented,
    Random,
    Fixed(PortAssignment),
}

#[derive(Clone, Debug)]
pub enum Schedule {
    /// Uniform random with a seed derived from the run.
    Random,
    Fixed(SchedulerPolicy),
}

/// A validated configuration; `config` keeps what the user asked for.
#[derive(Clone, Debug)]
pub struct Resolved {
    pub protocol: ProtocolKind,
    pub ids: IdSource,
    pub wiring: Wiring,
    pub scheduler: Schedule,
    pub seeds: SeedRange,
    pub trials: u64,
    pub step_mult: f64,
    pub trace_out: Option<PathBuf>,
    pub report_out: Option<PathBuf>,
    pub config: ExperimentConfig,
}
