use thiserror::Error;

use crate::fabric::{ChannelId, RunRecord};

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("a ring needs at least one node")]
    EmptyRing,

    #[error("protocol ids must be >= 1")]
    ZeroId,

    #[error("duplicate protocol id {0}; this protocol needs distinct ids")]
    DuplicateId(u64),

    #[error("wiring has {endpoints} endpoints, expected {expected}")]
    WiringSize { endpoints: usize, expected: usize },

    #[error("malformed wiring: {0}")]
    MalformedWiring(String),

    #[error("protocol {0} needs an oriented ring (every port 1 wired to a port 0)")]
    NotOriented(&'static str),

    #[error("network was already initialized")]
    AlreadyInitialized,

    #[error("scheduler selected channel {0:?}, which has no deliverable pulse")]
    SchedulerContract(ChannelId),

    #[error("delivery script exhausted with pulses still deliverable")]
    ScriptExhausted,

    #[error("pulses are in flight but none can be consumed by its receiver")]
    Stalled,

    #[error("the solitude scheduler is only defined on a single-node ring (got n = {0})")]
    SolitudeNeedsSingleNode(usize),

    #[error("step limit of {limit} deliveries exceeded")]
    StepLimit {
        limit: u64,
        partial: Box<RunRecord>,
    },

    #[error("compressed execution requires a protocol that never terminates")]
    BurstUnsupported,

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed trace: {0}")]
    MalformedTrace(String),

    #[error("trace is from protocol {found}, expected {expected}")]
    ProtocolMismatch { expected: String, found: String },

    #[error("trace did not end in quiescence")]
    NotQuiescent,

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}
