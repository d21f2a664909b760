//! Burer–Monteiro synchronization over Z2: instance generators, Riemannian
//! solver on the oblique manifold, optimality certificates and sufficient
//! conditions for benign landscapes.

pub mod certificates;
pub mod commands;
pub mod conditions;
pub mod error;
pub mod experiment;
pub mod instances;
pub mod linalg;
pub mod manifold;
pub mod rng;
pub mod solver;

pub use error::{Error, Result};
