//! Core algorithms for solving Euclidean TSP instances as link prediction on
//! sparse k-nearest-neighbour graphs.
//!
//! The crate is `no_std` (with `alloc`). It contains everything that is pure
//! computation: instances and tours, k-NN sparsification and edge labeling,
//! exact and heuristic reference solvers, the edge-aware residual gated graph
//! autoencoder with its hand-written backward pass, Adam, the batch samplers,
//! heatmap-guided tour search and evaluation metrics. File formats, threading
//! and the command-line tool live in the `edgegae` companion crate.
#![no_std]
#![deny(unsafe_code)]

extern crate alloc;

pub mod error;
pub mod math;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod oracle;
pub mod rng;
pub mod sampler;
pub mod search;
pub mod train;
pub mod tsp;

pub use error::{Error, Result};
pub use model::{BatchedGraph, EdgeGae, Mode, ModelConfig};
pub use tsp::{Heatmap, Instance, Point, SparseGraph, Tour};
