//! Two-sided dynamic matching pool: a seeded discrete simulator, a
//! deterministic mean-field solver, and exact enumeration oracles for the
//! random-pairing primitives.

pub mod config;
pub mod continuum;
pub mod error;
pub mod geometry;
pub mod market;
pub mod metrics;
pub mod oracles;
pub mod output;
pub mod simulation;
pub mod strategy;

pub use config::{ModelKind, RunConfig};
pub use error::{Error, Result};
pub use geometry::{GridPoint, StripId, StripKind, StripPartition};
pub use market::{Agent, Gender, Market, MarketParams, MatchRecord, StepReport};
pub use strategy::StrategyKind;
