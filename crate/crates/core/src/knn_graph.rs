//! Directed k-nearest-neighbor graphs over one embedding space, and their
//! comparison under the identity token bijection.

use std::collections::HashSet;
use std::io::{self, Write};

use rayon::prelude::*;
use serde::Serialize;
use thiserror::Error;

use crate::embedding_io::EmbeddingSpace;
use crate::fingerprint::Fingerprint;
use crate::retrieval::{Corpus, Metric};

#[derive(Debug, Error, PartialEq)]
pub enum GraphError {
    #[error("k = {k} must be in 1..{n} for a space of {n} points")]
    BadK { k: usize, n: usize },
    #[error("graphs are over different token sequences")]
    FingerprintMismatch,
    #[error("graphs differ in shape: n {n1} vs {n2}, k {k1} vs {k2}")]
    ShapeMismatch { n1: usize, n2: usize, k1: usize, k2: usize },
}

#[derive(Clone, Debug, PartialEq)]
pub struct KnnGraph {
    pub k: usize,
    pub metric: Metric,
    /// Node `i`'s neighbors, nearest first.
    pub edges: Vec<Vec<usize>>,
    pub tokens: Vec<String>,
    pub token_fingerprint: Fingerprint,
}

impl KnnGraph {
    pub fn n(&self) -> usize {
        self.edges.len()
    }

    /// One JSON object per line: `{"node", "token", "neighbors"}`.
    pub fn write_jsonl<W: Write>(&self, w: &mut W) -> io::Result<()> {
        #[derive(Serialize)]
        struct Line<'a> {
            node: usize,
            token: &'a str,
            neighbors: &'a [usize],
        }
        for (i, nbrs) in self.edges.iter().enumerate() {
            let line = Line {
                node: i,
                token: &self.tokens[i],
                neighbors: nbrs,
            };
            serde_json::to_writer(&mut *w, &line)?;
            w.write_all(b"\n")?;
        }
        Ok(())
    }
}

/// Each node points to its `k` nearest other points, ties broken by index.
pub fn build_knn_graph(space: &EmbeddingSpace, k: usize, metric: Metric) -> Result<KnnGraph, GraphError> {
    let n = space.len();
    if k == 0 || k >= n {
        return Err(GraphError::BadK { k, n });
    }
    let corpus = Corpus::new(space.matrix(), metric);
    let edges = (0..corpus.len())
        .into_par_iter()
        .map(|i| {
            let q = corpus.row(i).to_vec();
            corpus.top_k(&q, k, Some(i)).into_iter().map(|(j, _)| j).collect()
        })
        .collect();
    Ok(KnnGraph {
        k,
        metric,
        edges,
        tokens: space.tokens().to_vec(),
        token_fingerprint: space.fingerprint(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct GraphComparison {
    pub identical: bool,
    /// `|E1 ∩ E2| / |E1|` over directed edges.
    pub overlap: f64,
    pub shared_edges: usize,
    pub total_edges: usize,
}

pub fn graph_identical(g1: &KnnGraph, g2: &KnnGraph) -> Result<GraphComparison, GraphError> {
    if g1.token_fingerprint != g2.token_fingerprint {
        return Err(GraphError::FingerprintMismatch);
    }
    if g1.n() != g2.n() || g1.k != g2.k {
        return Err(GraphError::ShapeMismatch {
            n1: g1.n(),
            n2: g2.n(),
            k1: g1.k,
            k2: g2.k,
        });
    }
    let shared: usize = g1
        .edges
        .iter()
        .zip(&g2.edges)
        .map(|(a, b)| {
            let b: HashSet<usize> = b.iter().copied().collect();
            a.iter().filter(|j| b.contains(j)).count()
        })
        .sum();
    let total = g1.n() * g1.k;
    Ok(GraphComparison {
        identical: shared == total,
        overlap: shared as f64 / total as f64,
        shared_edges: shared,
        total_edges: total,
    })
}
