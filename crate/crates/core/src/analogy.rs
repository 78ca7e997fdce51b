//! Vector-offset analogy solving over quadruple datasets.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{self, BufRead, BufReader};
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_io::EmbeddingSpace;
use crate::retrieval::{cmp_scored, normalize_ks, Corpus, Metric, RetrievalError};

#[derive(Debug, Error)]
pub enum AnalogyError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: expected 4 tab-separated columns, found {found}")]
    ColumnCount { line: usize, found: usize },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
    #[error("vector dimensions differ: {0}, {1}, {2}")]
    DimensionMismatch(usize, usize, usize),
    #[error("no quadruple could be evaluated")]
    NothingToEvaluate,
    #[error(transparent)]
    Ks(#[from] RetrievalError),
}

/// `w1 : w2 :: w3 : w4`
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyQuadruple {
    pub w1: String,
    pub w2: String,
    pub w3: String,
    pub w4: String,
}

impl AnalogyQuadruple {
    pub fn new(w1: &str, w2: &str, w3: &str, w4: &str) -> Self {
        AnalogyQuadruple {
            w1: w1.into(),
            w2: w2.into(),
            w3: w3.into(),
            w4: w4.into(),
        }
    }

    fn words(&self) -> [&str; 4] {
        [&self.w1, &self.w2, &self.w3, &self.w4]
    }
}

pub fn load_quadruples(path: &Path) -> Result<Vec<AnalogyQuadruple>, AnalogyError> {
    read_quadruples(BufReader::new(File::open(path)?))
}

/// One quadruple per line, four tab-separated tokens. Blank lines are skipped.
pub fn read_quadruples<R: BufRead>(reader: R) -> Result<Vec<AnalogyQuadruple>, AnalogyError> {
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        if cols.len() != 4 {
            return Err(AnalogyError::ColumnCount {
                line: i + 1,
                found: cols.len(),
            });
        }
        if cols.iter().any(|c| c.is_empty()) {
            return Err(AnalogyError::EmptyToken { line: i + 1 });
        }
        out.push(AnalogyQuadruple::new(cols[0], cols[1], cols[2], cols[3]));
    }
    Ok(out)
}

/// `e1 - e2 + e3`
pub fn solve_analogy(e1: &DVector<f64>, e2: &DVector<f64>, e3: &DVector<f64>) -> Result<DVector<f64>, AnalogyError> {
    if e1.len() != e2.len() || e2.len() != e3.len() {
        return Err(AnalogyError::DimensionMismatch(e1.len(), e2.len(), e3.len()));
    }
    Ok(e1 - e2 + e3)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionMode {
    /// Remove w1, w2 and w3 from the candidates of their own quadruple.
    #[default]
    ExcludeSources,
    IncludeAll,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum CandidatePool {
    /// In-vocabulary tokens that occur anywhere in the dataset.
    #[default]
    Lexicon,
    /// Every token of the space.
    Vocabulary,
}

/// Which offset predicts w4.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum OffsetOrder {
    /// `e1 - e2 + e3`
    #[default]
    Printed,
    /// `e2 - e1 + e3`
    Conventional,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnalogyOptions {
    pub exclusion: ExclusionMode,
    pub pool: CandidatePool,
    pub order: OffsetOrder,
    pub metric: Metric,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnalogyReport {
    pub ks: Vec<usize>,
    pub precision: BTreeMap<usize, f64>,
    pub hit_counts: BTreeMap<usize, usize>,
    pub n_total: usize,
    pub n_evaluated: usize,
    pub n_skipped_oov: usize,
    /// Quadruples whose answer is one of its own sources while sources are
    /// excluded; they cannot be hit and are not scored.
    pub n_skipped_answer_in_sources: usize,
    pub n_candidates: usize,
    pub exclusion_mode: ExclusionMode,
    pub pool: CandidatePool,
    pub order: OffsetOrder,
    pub metric: Metric,
}

pub fn evaluate_analogies(
    space: &EmbeddingSpace,
    quads: &[AnalogyQuadruple],
    ks: &[usize],
    options: AnalogyOptions,
) -> Result<AnalogyReport, AnalogyError> {
    let ks = normalize_ks(ks)?;
    let index = space.index_map();

    // Candidates sorted by token so ranking ties (and hence results) do not
    // depend on the row order of the space.
    let candidates: Vec<&str> = match options.pool {
        CandidatePool::Lexicon => quads
            .iter()
            .flat_map(|q| q.words())
            .filter(|w| index.contains_key(w))
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
        CandidatePool::Vocabulary => {
            let mut all: Vec<&str> = space.tokens().iter().map(String::as_str).collect();
            all.sort_unstable();
            all
        }
    };
    let position: BTreeMap<&str, usize> = candidates.iter().enumerate().map(|(i, &t)| (t, i)).collect();
    let m = space.matrix();
    let cand_matrix = DMatrix::from_fn(candidates.len(), space.dim(), |i, j| m[(index[candidates[i]], j)]);
    let corpus = Corpus::new(&cand_matrix, options.metric);

    enum Outcome {
        Oov,
        AnswerInSources,
        Rank(usize),
    }

    let outcomes: Vec<Outcome> = quads
        .par_iter()
        .map(|q| {
            let words = q.words();
            if words.iter().any(|w| !index.contains_key(w)) {
                return Outcome::Oov;
            }
            let exclude = options.exclusion == ExclusionMode::ExcludeSources;
            if exclude && words[..3].contains(&words[3]) {
                return Outcome::AnswerInSources;
            }
            let e = |w: &str| space.row(index[w]);
            let (a, b) = match options.order {
                OffsetOrder::Printed => (e(words[0]), e(words[1])),
                OffsetOrder::Conventional => (e(words[1]), e(words[0])),
            };
            let target = solve_analogy(&a, &b, &e(words[2])).expect("rows share the space dimension");
            let (query, _) = corpus.prepare(target.as_slice());
            let skipped: Vec<usize> = if exclude {
                words[..3].iter().filter_map(|w| position.get(w).copied()).collect()
            } else {
                Vec::new()
            };
            // every in-vocabulary dataset token is a candidate in both pools
            let answer = position[words[3]];
            let key = (answer, corpus.score(&query, answer));
            let before = (0..corpus.len())
                .filter(|j| *j != answer && !skipped.contains(j))
                .filter(|&j| cmp_scored(&(j, corpus.score(&query, j)), &key).is_lt())
                .count();
            Outcome::Rank(before + 1)
        })
        .collect();

    let mut n_oov = 0;
    let mut n_degenerate = 0;
    let mut ranks = Vec::new();
    for o in outcomes {
        match o {
            Outcome::Oov => n_oov += 1,
            Outcome::AnswerInSources => n_degenerate += 1,
            Outcome::Rank(r) => ranks.push(r),
        }
    }
    if ranks.is_empty() {
        return Err(AnalogyError::NothingToEvaluate);
    }
    let mut precision = BTreeMap::new();
    let mut hit_counts = BTreeMap::new();
    for &k in &ks {
        let hits = ranks.iter().filter(|&&r| r <= k).count();
        hit_counts.insert(k, hits);
        precision.insert(k, hits as f64 / ranks.len() as f64);
    }
    Ok(AnalogyReport {
        ks,
        precision,
        hit_counts,
        n_total: quads.len(),
        n_evaluated: ranks.len(),
        n_skipped_oov: n_oov,
        n_skipped_answer_in_sources: n_degenerate,
        n_candidates: candidates.len(),
        exclusion_mode: options.exclusion,
        pool: options.pool,
        order: options.order,
        metric: options.metric,
    })
}
