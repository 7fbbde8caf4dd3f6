//! Graph-filter power allocation on random geometric graphs, and numerical
//! checks of how GNN outputs and losses transfer across graph sizes.
//!
//! Modules, bottom-up: [`linalg`] and [`rng`] are utilities; [`geometry`]
//! builds grid and perturbed graphs; [`gnn`] holds filters and networks;
//! [`spectral`] measures frequency responses; [`channel`] simulates
//! interference channels; [`policy`] trains and evaluates allocation
//! policies; [`bounds`] checks the transfer inequalities; [`harness`] runs
//! experiments and backs the CLI.

// `!(x > 0.0)` style checks are meant to reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod geometry;
pub mod gnn;
pub mod harness;
pub mod linalg;
pub mod policy;
pub mod rng;
pub mod channel;
pub mod spectral;

pub use error::{Error, Result};
