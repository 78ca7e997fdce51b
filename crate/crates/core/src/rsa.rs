//! Representational dissimilarity matrices and their cosine comparison.
//!
//! An RDM over `n` points is stored condensed: the `n(n-1)/2` strictly
//! upper-triangular Euclidean distances in row-major order. The cosine of two
//! condensed vectors equals the cosine of the full symmetric matrices, since
//! mirroring doubles both inner products and the diagonal is zero.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binfmt;
use crate::embedding_io::{shuffled_indices, EmbeddingSpace};
use crate::fingerprint::Fingerprint;

const RDM_MAGIC: &[u8; 8] = b"GARDM001";

/// Default point count for interactive RSA runs.
pub const DEFAULT_SUBSAMPLE: usize = 5000;

#[derive(Debug, Error)]
pub enum RsaError {
    #[error("subsample of {count} exceeds the {n} available points")]
    SubsampleTooLarge { count: usize, n: usize },
    #[error("need at least 2 points, found {0}")]
    TooFewPoints(usize),
    #[error("RDMs are over different point sequences")]
    FingerprintMismatch,
    #[error("RDMs differ in size: {0} vs {1}")]
    SizeMismatch(usize, usize),
    #[error("RDM has no nonzero entries")]
    AllZero,
    #[error("invalid RDM file: {0}")]
    BadFile(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Subsample {
    pub count: usize,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct DissimilarityMatrix {
    n: usize,
    condensed: Vec<f64>,
    token_fingerprint: Fingerprint,
}

/// Offset of row `i`'s segment in the condensed vector.
fn row_offset(n: usize, i: usize) -> usize {
    i * n - i * (i + 1) / 2
}

impl DissimilarityMatrix {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn condensed(&self) -> &[f64] {
        &self.condensed
    }

    pub fn token_fingerprint(&self) -> Fingerprint {
        self.token_fingerprint
    }

    /// Distance between points `i != j`.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        let (a, b) = if i < j { (i, j) } else { (j, i) };
        if a == b {
            return 0.0;
        }
        self.condensed[row_offset(self.n, a) + (b - a - 1)]
    }

    /// Binary layout: magic `GARDM001`, `n: u64`, 32-byte fingerprint, then
    /// the condensed `f64` entries, little-endian.
    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(RDM_MAGIC)?;
        binfmt::write_u64(w, self.n as u64)?;
        w.write_all(&self.token_fingerprint.0)?;
        binfmt::write_f64s(w, &self.condensed)
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, RsaError> {
        let bad = |e: io::Error| RsaError::BadFile(e.to_string());
        if !binfmt::check_magic(r, RDM_MAGIC).map_err(bad)? {
            return Err(RsaError::BadFile("bad magic".into()));
        }
        let n = binfmt::read_u64(r).map_err(bad)? as usize;
        let mut fp = [0u8; 32];
        r.read_exact(&mut fp).map_err(bad)?;
        let len = n * n.saturating_sub(1) / 2;
        let condensed = binfmt::read_f64s(r, len).map_err(bad)?;
        if condensed.iter().any(|v| !v.is_finite() || *v < 0.0) {
            return Err(RsaError::BadFile("negative or non-finite distance".into()));
        }
        Ok(DissimilarityMatrix {
            n,
            condensed,
            token_fingerprint: Fingerprint(fp),
        })
    }

    pub fn save(&self, path: &Path) -> Result<(), RsaError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, RsaError> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }
}

/// Indices of a seeded subsample, kept in their original order.
pub fn subsample_indices(n: usize, sub: Subsample) -> Result<Vec<usize>, RsaError> {
    if sub.count > n {
        return Err(RsaError::SubsampleTooLarge { count: sub.count, n });
    }
    let mut idx = shuffled_indices(n, sub.seed);
    idx.truncate(sub.count);
    idx.sort_unstable();
    Ok(idx)
}

pub fn compute_rdm(space: &EmbeddingSpace, subsample: Option<Subsample>) -> Result<DissimilarityMatrix, RsaError> {
    let selected;
    let space = match subsample {
        Some(sub) => {
            let idx = subsample_indices(space.len(), sub)?;
            selected = space.select(&idx).map_err(|_| RsaError::TooFewPoints(idx.len()))?;
            &selected
        }
        None => space,
    };
    let n = space.len();
    if n < 2 {
        return Err(RsaError::TooFewPoints(n));
    }
    let d = space.dim();
    let m = space.matrix();
    let mut rows = Vec::with_capacity(n * d);
    for i in 0..n {
        for j in 0..d {
            rows.push(m[(i, j)]);
        }
    }

    let mut condensed = vec![0.0; n * (n - 1) / 2];
    // carve the output into disjoint per-row segments
    let mut segments: Vec<(usize, &mut [f64])> = Vec::with_capacity(n - 1);
    let mut rest = condensed.as_mut_slice();
    for i in 0..n - 1 {
        let (seg, tail) = rest.split_at_mut(n - 1 - i);
        segments.push((i, seg));
        rest = tail;
    }
    segments.par_iter_mut().for_each(|(i, seg)| {
        let a = &rows[*i * d..(*i + 1) * d];
        for (slot, j) in seg.iter_mut().zip(*i + 1..n) {
            let b = &rows[j * d..(j + 1) * d];
            *slot = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        }
    });

    Ok(DissimilarityMatrix {
        n,
        condensed,
        token_fingerprint: space.fingerprint(),
    })
}

/// Cosine of the two condensed distance vectors.
pub fn rsa_similarity(r1: &DissimilarityMatrix, r2: &DissimilarityMatrix) -> Result<f64, RsaError> {
    if r1.n != r2.n {
        return Err(RsaError::SizeMismatch(r1.n, r2.n));
    }
    if r1.token_fingerprint != r2.token_fingerprint {
        return Err(RsaError::FingerprintMismatch);
    }
    let (mut dot, mut aa, mut bb) = (0.0, 0.0, 0.0);
    for (a, b) in r1.condensed.iter().zip(&r2.condensed) {
        dot += a * b;
        aa += a * a;
        bb += b * b;
    }
    if aa == 0.0 || bb == 0.0 {
        return Err(RsaError::AllZero);
    }
    Ok(dot / (aa * bb).sqrt())
}
