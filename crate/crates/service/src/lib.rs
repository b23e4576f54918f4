//! HTTP JSON service for interactive topic-assignment sessions.
//!
//! A session holds an uploaded corpus and versioned label specs. Assignment
//! jobs run the batched transport pipeline off the request path and publish
//! immutable result snapshots, one per job, under the data directory.

pub mod api;
pub mod config;
pub mod session;
pub mod store;

pub use api::{router, AppState, Shared};
pub use config::ServiceConfig;
