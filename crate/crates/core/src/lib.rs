//! Tooling for multi-variant instruction datasets.
//!
//! The crate covers the whole loop: task files and instruction families
//! ([`task_schema`]), seeded variant generation ([`augmentation`]), dataset
//! property metrics ([`metrics`]), single- vs multi-variant training
//! mixtures ([`mixtures`]), Rouge-L scoring ([`evaluation`]), equivalence
//! and robustness analyses ([`analysis`]), a nearest-neighbour baseline
//! learner ([`baseline`]) and the `instrux` command line ([`cli`]).

pub mod analysis;
pub mod augmentation;
pub mod baseline;
pub mod cli;
pub mod error;
pub mod evaluation;
pub mod metrics;
pub mod mixtures;
pub mod seed;
mod stats;
pub mod task_schema;

pub use error::{Error, Result};
