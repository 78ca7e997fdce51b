//! Geometric alignment of embedding spaces: similarity-transform and ridge
//! projections, exact nearest-neighbor retrieval, representational
//! similarity, analogy evaluation and per-layer trend analysis.

mod binfmt;

pub mod analogy;
pub mod analysis;
pub mod cli;
pub mod embedding_io;
pub mod fingerprint;
pub mod knn_graph;
pub mod linalg;
pub mod projection;
pub mod retrieval;
pub mod rsa;
pub mod synthetic;
