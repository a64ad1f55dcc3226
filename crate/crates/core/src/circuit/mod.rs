// SPDX-License-Identifier: MIT OR Apache-2.0

//! Coarse residual graph and circuit extraction.

mod extract;
pub mod graph;

pub use extract::{
    circuit_forward, decisions, extract, find_witness, necessity_filter, witnesses, Circuit, ExtractionReport,
};
pub use graph::{CoarseGraph, Edge, EdgeSet, Node};
