//! Online matching with vertex locking and greedy allocation for age-of-information
//! style scheduling, with exact rational arithmetic throughout.

pub mod adapters;
pub mod campaign;
pub mod cost;
pub mod error;
pub mod generate;
pub mod greedy;
pub mod instance;
pub mod matching;
pub mod oracle;
pub mod reduction;
pub mod validate;
pub mod valuation;
pub mod value;

pub use cost::CostFamily;
pub use error::{AdapterError, AllocationError, MatchingError, ModelError, OracleError};
pub use instance::{Allocation, BinId, Instance, Packet, Slot, SubpacketRef};
pub use value::Value;
