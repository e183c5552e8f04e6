//! Two-round planning and execution of conjunctive queries with semiring
//! aggregation.

pub mod error;
pub mod executor;
pub mod fixtures;
pub mod gen;
pub mod ghd;
pub mod emitter;
pub mod hypergraph;
pub mod load;
pub mod model;
pub mod optimizer;
pub mod par;
pub mod planner;
pub mod queryfile;

pub use error::{Error, Result};
