use thiserror::Error;

use crate::instance::{BinId, SubpacketRef};

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("invalid cost function {0}")]
    Cost(String),
    #[error("packet {packet}: {message}")]
    Packet { packet: u32, message: String },
    #[error("instance: {0}")]
    Instance(String),
}

impl ModelError {
    pub(crate) fn from_json(e: serde_json::Error) -> Self {
        ModelError::Parse { line: e.line(), column: e.column(), message: e.to_string() }
    }
}

/// Structural problems with an allocation relative to its instance.
#[derive(Debug, Error, PartialEq, Eq)]
pub enum AllocationError {
    #[error("unknown packet {0}")]
    UnknownPacket(u32),
    #[error("{0} is outside the packet's sub-packet range")]
    UnknownSubpacket(SubpacketRef),
    #[error("unknown bin {0}")]
    UnknownBin(BinId),
    #[error("{0} is already allocated")]
    AlreadyAllocated(SubpacketRef),
    #[error("{r} allocated to {bin}, which locked before the packet arrived")]
    LockedBin { r: SubpacketRef, bin: BinId },
    #[error("sub-packets of packet {0} are allocated out of order")]
    OutOfOrder(u32),
    #[error("{r} arrives at {arrival}, before the current clock {clock}")]
    ArrivedInPast { r: SubpacketRef, arrival: u32, clock: u32 },
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum MatchingError {
    #[error("forced edges share node {0}")]
    ForcedConflict(String),
    #[error("forced edge ({0}, {1}) is not in the graph")]
    ForcedMissing(usize, usize),
    #[error("event stream out of order: {0}")]
    Sequencing(String),
    #[error("binary expansion requires unit packets (packet {0} has {1} sub-packets)")]
    NotBinary(u32, u32),
    #[error("slot {slot} precedes the arrival of packet {packet}")]
    BeforeArrival { packet: u32, slot: u32 },
    #[error("mini-slot positions start at 1")]
    ZeroPosition,
    #[error("unknown node {0}")]
    UnknownNode(String),
    #[error("edge weight for ({0}, {1}) is negative")]
    NegativeWeight(usize, usize),
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum OracleError {
    #[error("instance too large for exact oracle: search budget of {budget} nodes exhausted")]
    BudgetExceeded { budget: u64 },
    #[error(transparent)]
    Matching(#[from] MatchingError),
}

#[derive(Debug, Error)]
pub enum AdapterError {
    #[error("source {source_index}: {message}")]
    Events { source_index: usize, message: String },
    #[error("server {server}: {message}")]
    Power { server: usize, message: String },
    #[error(transparent)]
    Model(#[from] ModelError),
}
