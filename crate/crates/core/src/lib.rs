//! Hyperbolic cone embeddings for knowledge graphs with several
//! heterogeneous hierarchies.
//!
//! Each entity lives in a product of Poincaré disks. A hierarchical relation
//! owns a subset of the disks; there, children must lie in cones rooted at
//! their parents, while the remaining disks model the relation as a
//! rotation, so the same entities can take part in many hierarchies.

pub mod cli;
pub mod cone_model;
pub mod data;
pub mod error;
pub mod eval;
pub mod geometry;
pub mod hierarchy_detect;
pub mod loss;
pub mod real;
pub mod training;

pub use error::{Error, Result};
