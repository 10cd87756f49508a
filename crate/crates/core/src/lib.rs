//! Optimal-transport graph reconstruction losses, graph matching solvers and
//! graph edit distances.
//!
//! The crate is organised around the padded dense graph `(h, F, C)`
//! ([`graph::DenseGraph`]):
//!
//! - [`featurize`] builds input and target dense graphs from labelled graphs,
//! - [`loss`] evaluates the transport-plan loss and its reordered variants,
//! - [`solvers`] produces plans (Sinkhorn, Hungarian, Frank–Wolfe, exhaustive),
//! - [`matcher`] learns node affinities and trains them end to end,
//! - [`editdist`] computes exact and matching-based edit distances,
//! - [`datagen`] generates seeded synthetic datasets,
//! - [`bench`] drives the reproducible experiments behind the CLI.

pub mod bench;
pub mod datagen;
pub mod editdist;
pub mod error;
pub mod featurize;
pub mod fixtures;
pub mod graph;
pub mod loss;
pub mod matcher;
pub mod solvers;

pub use error::{Error, Result};
pub use graph::{DenseGraph, Permutation, SparseGraph, TransportPlan};
