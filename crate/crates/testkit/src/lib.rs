//! Reference implementations used only by tests.
//!
//! Nothing here shares code with `edtm-core`: every oracle takes plain
//! vectors and recomputes its answer by a different route (simplex, vertex
//! enumeration, plain-domain scaling, point counting). [`stub`] serves a
//! fake embedding API over HTTP.

pub mod fixtures;
pub mod lp;
pub mod metrics;
pub mod scaling;
pub mod stub;

/// Dense row-major matrix as nested vectors.
pub type Rows = Vec<Vec<f64>>;
