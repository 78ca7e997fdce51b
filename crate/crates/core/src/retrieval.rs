//! Exact nearest-neighbor search and precision@k scoring.
//!
//! Every query is scored against every corpus row. Ordering is by distance,
//! then by ascending corpus index, so results are fully deterministic and do
//! not depend on how queries are sharded across workers.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_io::EmbeddingSpace;
use crate::knn_graph::{self, GraphError};

#[derive(Debug, Error, PartialEq)]
pub enum RetrievalError {
    #[error("k = {k} exceeds the {n} available candidates")]
    KTooLarge { k: usize, n: usize },
    #[error("k must be positive")]
    ZeroK,
    #[error("no k values given")]
    EmptyKs,
    #[error("dimension mismatch: queries have {queries}, corpus has {corpus}")]
    DimensionMismatch { queries: usize, corpus: usize },
    #[error("query set is empty")]
    EmptyQueries,
    #[error("{queries} queries but {labels} true indices")]
    LabelCountMismatch { queries: usize, labels: usize },
    #[error("true index {index} out of range for {len} candidates")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("true index {0} appears more than once")]
    DuplicateTrueIndex(usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    #[default]
    Cosine,
    Euclidean,
}

impl Metric {
    pub fn name(&self) -> &'static str {
        match self {
            Metric::Cosine => "cosine",
            Metric::Euclidean => "euclidean",
        }
    }
}

/// A corpus laid out row-major and preprocessed for one metric. Under
/// cosine, rows are normalized up front and zero rows are kept as zeros.
pub(crate) struct Corpus {
    data: Vec<f64>,
    n: usize,
    d: usize,
    metric: Metric,
    zero_rows: usize,
}

fn row_major(m: &DMatrix<f64>) -> Vec<f64> {
    let mut out = Vec::with_capacity(m.len());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            out.push(m[(i, j)]);
        }
    }
    out
}

fn normalize_rows(data: &mut [f64], d: usize) -> usize {
    let mut zero = 0;
    for row in data.chunks_mut(d) {
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
        if norm > 0.0 {
            row.iter_mut().for_each(|v| *v /= norm);
        } else {
            zero += 1;
        }
    }
    zero
}

impl Corpus {
    pub(crate) fn new(m: &DMatrix<f64>, metric: Metric) -> Self {
        let d = m.ncols();
        let mut data = row_major(m);
        let zero_rows = match metric {
            Metric::Cosine => normalize_rows(&mut data, d),
            Metric::Euclidean => 0,
        };
        Corpus {
            data,
            n: m.nrows(),
            d,
            metric,
            zero_rows,
        }
    }

    pub(crate) fn len(&self) -> usize {
        self.n
    }

    pub(crate) fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Prepares a query the same way corpus rows were prepared. Returns the
    /// query and whether it is a zero vector under cosine.
    pub(crate) fn prepare(&self, q: &[f64]) -> (Vec<f64>, bool) {
        let mut q = q.to_vec();
        let zero = match self.metric {
            Metric::Cosine => normalize_rows(&mut q, self.d) == 1,
            Metric::Euclidean => false,
        };
        (q, zero)
    }

    /// Ranking key: squared distance for Euclidean, `1 - cos` for cosine.
    /// Zero vectors are at cosine distance 1 from everything.
    #[inline]
    pub(crate) fn score(&self, q: &[f64], j: usize) -> f64 {
        let c = self.row(j);
        match self.metric {
            Metric::Euclidean => q.iter().zip(c).map(|(a, b)| (a - b) * (a - b)).sum(),
            Metric::Cosine => 1.0 - q.iter().zip(c).map(|(a, b)| a * b).sum::<f64>(),
        }
    }

    /// Converts a ranking key into a reported distance.
    pub(crate) fn distance(&self, score: f64) -> f64 {
        match self.metric {
            Metric::Euclidean => score.sqrt(),
            Metric::Cosine => score,
        }
    }

    /// The `k` nearest rows to a prepared query, optionally skipping one row.
    pub(crate) fn top_k(&self, q: &[f64], k: usize, skip: Option<usize>) -> Vec<(usize, f64)> {
        let mut scored: Vec<(usize, f64)> = (0..self.n)
            .filter(|&j| Some(j) != skip)
            .map(|j| (j, self.score(q, j)))
            .collect();
        if k < scored.len() {
            scored.select_nth_unstable_by(k, cmp_scored);
            scored.truncate(k);
        }
        scored.sort_unstable_by(cmp_scored);
        scored
    }

    /// 1-based rank of row `target` among all rows for a prepared query.
    pub(crate) fn rank_of(&self, q: &[f64], target: usize) -> usize {
        let t = (target, self.score(q, target));
        1 + (0..self.n)
            .filter(|&j| j != target && cmp_scored(&(j, self.score(q, j)), &t) == Ordering::Less)
            .count()
    }
}

#[inline]
pub(crate) fn cmp_scored(a: &(usize, f64), b: &(usize, f64)) -> Ordering {
    a.1.total_cmp(&b.1).then(a.0.cmp(&b.0))
}

/// Result of a k-nearest-neighbor query batch.
#[derive(Clone, Debug, PartialEq)]
pub struct Neighbors {
    /// `m x k` corpus indices, nearest first.
    pub indices: Vec<Vec<usize>>,
    pub distances: Vec<Vec<f64>>,
    /// Zero vectors encountered under cosine (queries plus corpus rows).
    pub zero_vectors: usize,
}

pub fn knn(
    queries: &DMatrix<f64>,
    corpus: &DMatrix<f64>,
    k: usize,
    metric: Metric,
) -> Result<Neighbors, RetrievalError> {
    if k == 0 {
        return Err(RetrievalError::ZeroK);
    }
    if k > corpus.nrows() {
        return Err(RetrievalError::KTooLarge { k, n: corpus.nrows() });
    }
    if queries.ncols() != corpus.ncols() {
        return Err(RetrievalError::DimensionMismatch {
            queries: queries.ncols(),
            corpus: corpus.ncols(),
        });
    }
    let prepared = Corpus::new(corpus, metric);
    let rows = row_major(queries);
    let d = queries.ncols().max(1);
    let results: Vec<(Vec<(usize, f64)>, bool)> = rows
        .par_chunks(d)
        .take(queries.nrows())
        .map(|q| {
            let (q, zero) = prepared.prepare(q);
            (prepared.top_k(&q, k, None), zero)
        })
        .collect();
    let zero_queries = results.iter().filter(|r| r.1).count();
    let zero_vectors = zero_queries + prepared.zero_rows;
    if zero_vectors > 0 {
        log::warn!("knn: {zero_vectors} zero vectors under cosine metric; treated as distance 1");
    }
    let (indices, distances) = results
        .into_iter()
        .map(|(r, _)| {
            (
                r.iter().map(|x| x.0).collect(),
                r.iter().map(|x| prepared.distance(x.1)).collect(),
            )
        })
        .unzip();
    Ok(Neighbors {
        indices,
        distances,
        zero_vectors,
    })
}

/// Precision@k outcome of a retrieval experiment.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalReport {
    pub ks: Vec<usize>,
    pub precision: BTreeMap<usize, f64>,
    pub hit_counts: BTreeMap<usize, usize>,
    pub n_test: usize,
    pub n_candidates: usize,
    pub metric: Metric,
    /// Token to 1-based rank of its true counterpart, i.e. the smallest k
    /// at which it is retrieved.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub hits: Option<BTreeMap<String, usize>>,
}

impl RetrievalReport {
    /// Rebuilds a report from per-token ranks.
    pub fn from_ranks(
        ranks: BTreeMap<String, usize>,
        ks: &[usize],
        n_candidates: usize,
        metric: Metric,
    ) -> Result<Self, RetrievalError> {
        if ranks.is_empty() {
            return Err(RetrievalError::EmptyQueries);
        }
        let ks = normalize_ks(ks)?;
        let n = ranks.len();
        let mut precision = BTreeMap::new();
        let mut hit_counts = BTreeMap::new();
        for &k in &ks {
            let hits = ranks.values().filter(|&&r| r <= k).count();
            hit_counts.insert(k, hits);
            precision.insert(k, hits as f64 / n as f64);
        }
        Ok(RetrievalReport {
            ks,
            precision,
            hit_counts,
            n_test: n,
            n_candidates,
            metric,
            hits: Some(ranks),
        })
    }

    pub fn precision_at(&self, k: usize) -> Option<f64> {
        self.precision.get(&k).copied()
    }

    pub fn without_hits(mut self) -> Self {
        self.hits = None;
        self
    }
}

/// Sorted, deduplicated, all positive.
pub fn normalize_ks(ks: &[usize]) -> Result<Vec<usize>, RetrievalError> {
    if ks.is_empty() {
        return Err(RetrievalError::EmptyKs);
    }
    if ks.contains(&0) {
        return Err(RetrievalError::ZeroK);
    }
    let mut ks = ks.to_vec();
    ks.sort_unstable();
    ks.dedup();
    Ok(ks)
}

/// Scores projected rows against `reference`: query `i` is a hit at `k` when
/// `reference` row `true_indices[i]` is among its `k` nearest rows.
pub fn precision_at_k(
    projected: &DMatrix<f64>,
    reference: &EmbeddingSpace,
    true_indices: &[usize],
    ks: &[usize],
    metric: Metric,
) -> Result<RetrievalReport, RetrievalError> {
    let m = projected.nrows();
    if m == 0 {
        return Err(RetrievalError::EmptyQueries);
    }
    if true_indices.len() != m {
        return Err(RetrievalError::LabelCountMismatch {
            queries: m,
            labels: true_indices.len(),
        });
    }
    if projected.ncols() != reference.dim() {
        return Err(RetrievalError::DimensionMismatch {
            queries: projected.ncols(),
            corpus: reference.dim(),
        });
    }
    let n = reference.len();
    if let Some(&bad) = true_indices.iter().find(|&&t| t >= n) {
        return Err(RetrievalError::IndexOutOfRange { index: bad, len: n });
    }
    let mut seen = vec![false; n];
    for &t in true_indices {
        if std::mem::replace(&mut seen[t], true) {
            return Err(RetrievalError::DuplicateTrueIndex(t));
        }
    }
    let ks = normalize_ks(ks)?;
    let max_k = *ks.last().expect("nonempty");
    if max_k > n {
        return Err(RetrievalError::KTooLarge { k: max_k, n });
    }

    let corpus = Corpus::new(reference.matrix(), metric);
    let rows = row_major(projected);
    let d = projected.ncols();
    let ranks: Vec<(usize, bool)> = rows
        .par_chunks(d)
        .zip(true_indices.par_iter())
        .map(|(q, &t)| {
            let (q, zero) = corpus.prepare(q);
            (corpus.rank_of(&q, t), zero)
        })
        .collect();
    let zero = ranks.iter().filter(|r| r.1).count() + corpus.zero_rows;
    if zero > 0 {
        log::warn!("precision@k: {zero} zero vectors under cosine metric");
    }
    let by_token: BTreeMap<String, usize> = true_indices
        .iter()
        .zip(&ranks)
        .map(|(&t, &(r, _))| (reference.tokens()[t].clone(), r))
        .collect();
    RetrievalReport::from_ranks(by_token, &ks, n, metric)
}

/// Fraction of directed Euclidean k-NN edges of `a` that are also edges of
/// `b`, with nodes identified by token.
pub fn knn_graph_overlap(a: &EmbeddingSpace, b: &EmbeddingSpace, k: usize) -> Result<f64, RetrievalError> {
    let ga = knn_graph::build_knn_graph(a, k, Metric::Euclidean)?;
    let gb = knn_graph::build_knn_graph(b, k, Metric::Euclidean)?;
    Ok(knn_graph::graph_identical(&ga, &gb)?.overlap)
}
