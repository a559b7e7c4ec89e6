use thiserror::Error;

use crate::{Gas, Height, Wei};

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("gas used {gas_used} exceeds block gas limit {limit}")]
    GasAboveLimit { gas_used: Gas, limit: Gas },

    #[error("arithmetic overflow in {context}")]
    Overflow { context: &'static str },

    #[error("invalid parameter {name}: {reason}")]
    InvalidParam { name: &'static str, reason: String },

    #[error("transaction {id} not includable: max fee {max_fee} below base fee {base_fee}")]
    NotIncludable { id: u64, max_fee: Wei, base_fee: Wei },

    #[error("duplicate transaction id {id}")]
    DuplicateTx { id: u64 },

    #[error("empty series")]
    EmptySeries,

    #[error("batch count {batches} exceeds series length {len}")]
    BatchCountTooLarge { batches: usize, len: usize },

    #[error("empty dataset")]
    EmptyDataset,

    #[error("dataset error: {0}")]
    Dataset(String),

    #[error("{path}:{line}: {reason}")]
    MalformedRow { path: String, line: usize, reason: String },

    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("simulation failed at slot {slot}: {source}")]
    SlotFailed {
        slot: Height,
        #[source]
        source: Box<Error>,
    },

    #[error("run {run} failed: {source}")]
    RunFailed {
        run: usize,
        #[source]
        source: Box<Error>,
    },
}
