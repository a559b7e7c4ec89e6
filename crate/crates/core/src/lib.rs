//! Deterministic simulator and analysis toolkit for EIP-1559-style
//! transaction fee markets.
//!
//! The crate is organized around the per-block life cycle: demand arrives
//! ([`demand`]), a miner builds a block from the mempool ([`market`]), the
//! protocol adjusts the base fee with either a constant or an AIMD-driven
//! learning rate ([`fee`]), and the loop plus the multi-run experiment
//! harness live in [`sim`]. Dataset ingestion and the series statistics
//! (weighted gas prices, batch averages, median smoothing, block-size
//! metrics) are in [`analytics`].
//!
//! All fee arithmetic is exact: base fees are integer wei and learning
//! rates are arbitrary-precision rationals, so identical inputs produce
//! bit-identical trajectories on every platform.

pub mod analytics;
pub mod demand;
pub mod error;
pub mod fee;
pub mod market;
pub mod num;
pub mod sim;

pub use error::{Error, Result};
pub use num::{Rational, Scalar};

/// Price or amount in wei. Per-gas prices and settled totals both fit
/// comfortably; totals of `wei/gas * gas` can exceed `u64`.
pub type Wei = u128;

/// Gas units (per transaction or per block).
pub type Gas = u64;

/// Block height / simulation slot index.
pub type Height = u64;

/// 1 Gwei in wei.
pub const GWEI: Wei = 1_000_000_000;

/// 1 ETH in wei.
pub const ETH: Wei = 1_000_000_000_000_000_000;
