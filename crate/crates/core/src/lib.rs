//! Label-name supervised topic assignment.
//!
//! Documents and analyst-written labels are turned into a cost matrix
//! ([`costs`]), coupled by entropy-regularized optimal transport ([`ot`]),
//! assembled in batches and hardened into clusters ([`assignment`]), and
//! scored against gold labels ([`metrics`]). [`harness`] wires the stages
//! into runnable experiments.

pub mod assignment;
pub mod corpus;
pub mod costs;
pub mod error;
pub mod format;
pub mod harness;
pub mod metrics;
pub mod ot;
pub mod provider;

pub use error::{Error, Result};
