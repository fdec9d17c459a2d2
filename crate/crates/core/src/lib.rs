//! Constructive search for rainbow Hamilton cycles in randomly edge-colored
//! random graphs, together with exact small-instance oracles, the colored
//! graph / 3-uniform hypergraph reduction, and a Monte Carlo diagnostics
//! harness.
//!
//! The pipeline samples three prioritized colored digraph layers, merges them
//! into one colored graph, isolates low-degree "dangerous" vertices, covers
//! them with short rainbow paths, grows a long rainbow path by a greedy
//! backtracking walk, splits it into segments, absorbs all leftover vertices
//! via third-layer edges, and finally links segment endpoints through an
//! auxiliary digraph whose rainbow Hamilton cycle stitches the full cycle.

pub mod cover;
pub mod dangerous;
pub mod experiments;
pub mod graph;
pub mod hamsearch;
pub mod hypergraph;
pub mod ledger;
pub mod linker;
pub mod long_path;
pub mod oracle;
pub mod params;
pub mod pipeline;
pub mod rng;
pub mod sampler;
pub mod segments;
pub mod stats;

pub use graph::{ColoredDigraph, ColoredGraph, HamiltonCycleCertificate};
pub use params::ParamSet;
pub use pipeline::{find_rainbow_hamilton, TrialConfig, TrialReport};
pub use rng::RandomSource;
