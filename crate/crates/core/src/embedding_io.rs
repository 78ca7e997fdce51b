//! Loading, validating, intersecting and splitting embedding spaces.
//!
//! Three on-disk formats are supported:
//!
//! * word2vec text: a `V d` header line followed by `token v1 ... vd` rows.
//! * TSV: `token<TAB>v1<TAB>...<TAB>vd` rows without a header; the dimension
//!   is taken from the first row.
//! * binary: magic `GAEMB001`, `V: u64`, `d: u64`, a token table of
//!   length-prefixed (`u32`) UTF-8 strings, then `V*d` row-major `f64`, all
//!   little-endian.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{self, BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use rand::RngCore;
use rand::SeedableRng;
use rand_xoshiro::Xoshiro256PlusPlus;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binfmt;
use crate::fingerprint::Fingerprint;

const BINARY_MAGIC: &[u8; 8] = b"GAEMB001";

#[derive(Debug, Error)]
pub enum EmbeddingError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: malformed header: {reason}")]
    MalformedHeader { line: usize, reason: String },
    #[error("line {line} (row {row}): expected {expected} values, found {found}")]
    DimensionMismatch {
        line: usize,
        row: usize,
        expected: usize,
        found: usize,
    },
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: non-finite or unparsable value {value:?}")]
    BadValue { line: usize, value: String },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
    #[error("header declares {expected} rows, file has {found}")]
    RowCountMismatch { expected: usize, found: usize },
    #[error("invalid binary embedding file: {0}")]
    BadBinary(String),
    #[error("embedding space is empty")]
    Empty,
    #[error("embedding dimension must be positive")]
    ZeroDim,
    #[error("token count {tokens} does not match matrix rows {rows}")]
    ShapeMismatch { tokens: usize, rows: usize },
    #[error("token {0:?} is not representable in word2vec text (contains whitespace)")]
    UnwritableToken(String),
    #[error("vocabularies do not intersect")]
    EmptyIntersection,
    #[error("split of {n} items at fraction {fraction} leaves an empty side")]
    DegenerateSplit { n: usize, fraction: f64 },
    #[error("unknown embedding format {0:?}")]
    UnknownFormat(String),
    #[error("index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
}

#[derive(Debug, Error)]
pub enum MetaError {
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
    #[error("line {line}: duplicate token {token:?}")]
    DuplicateToken { line: usize, token: String },
    #[error("line {line}: invalid polysemy count {value:?}")]
    BadCount { line: usize, value: String },
    #[error("line {line}: unknown category {value:?}")]
    UnknownCategory { line: usize, value: String },
    #[error("line {line}: empty token")]
    EmptyToken { line: usize },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum EmbeddingFormat {
    Word2vecText,
    Tsv,
    Binary,
}

impl EmbeddingFormat {
    /// Guesses the format from a file extension; word2vec text is the fallback.
    pub fn infer(path: &Path) -> Self {
        match path.extension().and_then(|e| e.to_str()) {
            Some("bin") | Some("gaemb") => EmbeddingFormat::Binary,
            Some("tsv") => EmbeddingFormat::Tsv,
            _ => EmbeddingFormat::Word2vecText,
        }
    }
}

impl FromStr for EmbeddingFormat {
    type Err = EmbeddingError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "word2vec-text" | "w2v" | "text" => Ok(EmbeddingFormat::Word2vecText),
            "tsv" => Ok(EmbeddingFormat::Tsv),
            "binary" | "bin" => Ok(EmbeddingFormat::Binary),
            other => Err(EmbeddingError::UnknownFormat(other.to_string())),
        }
    }
}

/// An ordered vocabulary with one real vector per token.
#[derive(Clone, Debug, PartialEq)]
pub struct EmbeddingSpace {
    name: String,
    tokens: Vec<String>,
    matrix: DMatrix<f64>,
}

impl EmbeddingSpace {
    /// Builds a validated space. Rejects empty spaces, zero dimension, empty
    /// or duplicate tokens and non-finite entries.
    pub fn new(
        name: impl Into<String>,
        tokens: Vec<String>,
        matrix: DMatrix<f64>,
    ) -> Result<Self, EmbeddingError> {
        if tokens.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if tokens.len() != matrix.nrows() {
            return Err(EmbeddingError::ShapeMismatch {
                tokens: tokens.len(),
                rows: matrix.nrows(),
            });
        }
        if matrix.ncols() == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        let mut seen = HashSet::with_capacity(tokens.len());
        for (i, t) in tokens.iter().enumerate() {
            if t.is_empty() {
                return Err(EmbeddingError::EmptyToken { line: i + 1 });
            }
            if !seen.insert(t.as_str()) {
                return Err(EmbeddingError::DuplicateToken {
                    line: i + 1,
                    token: t.clone(),
                });
            }
        }
        for i in 0..matrix.nrows() {
            for j in 0..matrix.ncols() {
                let v = matrix[(i, j)];
                if !v.is_finite() {
                    return Err(EmbeddingError::BadValue {
                        line: i + 1,
                        value: v.to_string(),
                    });
                }
            }
        }
        Ok(EmbeddingSpace {
            name: name.into(),
            tokens,
            matrix,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn fingerprint(&self) -> Fingerprint {
        Fingerprint::of_tokens(&self.tokens)
    }

    pub fn row(&self, i: usize) -> DVector<f64> {
        self.matrix.row(i).transpose()
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.tokens.iter().position(|t| t == token)
    }

    /// Token to row index lookup table.
    pub fn index_map(&self) -> HashMap<&str, usize> {
        self.tokens
            .iter()
            .enumerate()
            .map(|(i, t)| (t.as_str(), i))
            .collect()
    }

    /// Rows at `indices`, in the given order, as a new space.
    pub fn select(&self, indices: &[usize]) -> Result<EmbeddingSpace, EmbeddingError> {
        let rows = select_rows(&self.matrix, indices)?;
        let tokens = indices.iter().map(|&i| self.tokens[i].clone()).collect();
        EmbeddingSpace::new(self.name.clone(), tokens, rows)
    }

    /// Copy with every nonzero row scaled to unit Euclidean norm.
    pub fn unit_normalized(&self) -> EmbeddingSpace {
        let mut m = self.matrix.clone();
        for mut row in m.row_iter_mut() {
            let norm = row.norm();
            if norm > 0.0 {
                row /= norm;
            }
        }
        EmbeddingSpace {
            name: self.name.clone(),
            tokens: self.tokens.clone(),
            matrix: m,
        }
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }
}

/// Copies the rows at `indices` into a new matrix.
pub fn select_rows(m: &DMatrix<f64>, indices: &[usize]) -> Result<DMatrix<f64>, EmbeddingError> {
    if let Some(&bad) = indices.iter().find(|&&i| i >= m.nrows()) {
        return Err(EmbeddingError::IndexOutOfRange {
            index: bad,
            len: m.nrows(),
        });
    }
    Ok(DMatrix::from_fn(indices.len(), m.ncols(), |r, c| {
        m[(indices[r], c)]
    }))
}

pub fn load_embeddings(path: &Path, format: EmbeddingFormat) -> Result<EmbeddingSpace, EmbeddingError> {
    let name = path
        .file_stem()
        .and_then(|s| s.to_str())
        .unwrap_or("embeddings")
        .to_string();
    let reader = BufReader::new(File::open(path)?);
    read_embeddings(reader, format, name)
}

pub fn read_embeddings<R: BufRead>(
    reader: R,
    format: EmbeddingFormat,
    name: impl Into<String>,
) -> Result<EmbeddingSpace, EmbeddingError> {
    match format {
        EmbeddingFormat::Word2vecText => read_word2vec_text(reader, name.into()),
        EmbeddingFormat::Tsv => read_tsv(reader, name.into()),
        EmbeddingFormat::Binary => read_binary(reader, name.into()),
    }
}

pub fn save_embeddings(
    space: &EmbeddingSpace,
    path: &Path,
    format: EmbeddingFormat,
) -> Result<(), EmbeddingError> {
    let mut w = BufWriter::new(File::create(path)?);
    write_embeddings(space, &mut w, format)?;
    w.flush()?;
    Ok(())
}

pub fn write_embeddings<W: Write>(
    space: &EmbeddingSpace,
    w: &mut W,
    format: EmbeddingFormat,
) -> Result<(), EmbeddingError> {
    if space.is_empty() {
        return Err(EmbeddingError::Empty);
    }
    match format {
        EmbeddingFormat::Word2vecText => {
            writeln!(w, "{} {}", space.len(), space.dim())?;
            write_text_rows(space, w, ' ')
        }
        EmbeddingFormat::Tsv => write_text_rows(space, w, '\t'),
        EmbeddingFormat::Binary => {
            w.write_all(BINARY_MAGIC)?;
            binfmt::write_u64(w, space.len() as u64)?;
            binfmt::write_u64(w, space.dim() as u64)?;
            for t in &space.tokens {
                binfmt::write_bytes(w, t.as_bytes())?;
            }
            for i in 0..space.len() {
                for j in 0..space.dim() {
                    binfmt::write_f64(w, space.matrix[(i, j)])?;
                }
            }
            Ok(())
        }
    }
}

fn write_text_rows<W: Write>(space: &EmbeddingSpace, w: &mut W, sep: char) -> Result<(), EmbeddingError> {
    for (i, t) in space.tokens.iter().enumerate() {
        if t.chars().any(|c| c.is_ascii_whitespace()) {
            return Err(EmbeddingError::UnwritableToken(t.clone()));
        }
        w.write_all(t.as_bytes())?;
        for j in 0..space.dim() {
            // 9 significant digits
            write!(w, "{sep}{:.8e}", space.matrix[(i, j)])?;
        }
        w.write_all(b"\n")?;
    }
    Ok(())
}

fn parse_value(s: &str, line: usize) -> Result<f64, EmbeddingError> {
    match s.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(EmbeddingError::BadValue {
            line,
            value: s.to_string(),
        }),
    }
}

struct RowCollector {
    tokens: Vec<String>,
    seen: HashSet<String>,
    data: Vec<f64>,
    dim: usize,
}

impl RowCollector {
    fn new(dim: usize) -> Self {
        RowCollector {
            tokens: Vec::new(),
            seen: HashSet::new(),
            data: Vec::new(),
            dim,
        }
    }

    fn push<'a>(
        &mut self,
        token: &str,
        values: impl Iterator<Item = &'a str>,
        line: usize,
    ) -> Result<(), EmbeddingError> {
        if token.is_empty() {
            return Err(EmbeddingError::EmptyToken { line });
        }
        if !self.seen.insert(token.to_string()) {
            return Err(EmbeddingError::DuplicateToken {
                line,
                token: token.to_string(),
            });
        }
        let start = self.data.len();
        for v in values {
            self.data.push(parse_value(v, line)?);
        }
        let found = self.data.len() - start;
        if found != self.dim {
            return Err(EmbeddingError::DimensionMismatch {
                line,
                row: self.tokens.len() + 1,
                expected: self.dim,
                found,
            });
        }
        self.tokens.push(token.to_string());
        Ok(())
    }

    fn finish(self, name: String) -> Result<EmbeddingSpace, EmbeddingError> {
        let rows = self.tokens.len();
        let matrix = DMatrix::from_row_slice(rows, self.dim, &self.data);
        EmbeddingSpace::new(name, self.tokens, matrix)
    }
}

fn read_word2vec_text<R: BufRead>(reader: R, name: String) -> Result<EmbeddingSpace, EmbeddingError> {
    let mut lines = reader.lines();
    let header = match lines.next() {
        Some(l) => l?,
        None => {
            return Err(EmbeddingError::MalformedHeader {
                line: 1,
                reason: "file is empty".into(),
            })
        }
    };
    let fields: Vec<&str> = header.split_ascii_whitespace().collect();
    let (n_rows, dim) = match fields.as_slice() {
        [v, d] => match (v.parse::<usize>(), d.parse::<usize>()) {
            (Ok(v), Ok(d)) if d > 0 => (v, d),
            _ => {
                return Err(EmbeddingError::MalformedHeader {
                    line: 1,
                    reason: format!("expected \"V d\" with positive integers, got {header:?}"),
                })
            }
        },
        _ => {
            return Err(EmbeddingError::MalformedHeader {
                line: 1,
                reason: format!("expected two fields, got {}", fields.len()),
            })
        }
    };

    let mut rows = RowCollector::new(dim);
    for (i, line) in lines.enumerate() {
        let line = line?;
        let lineno = i + 2;
        if line.trim().is_empty() {
            continue;
        }
        let mut it = line.split_ascii_whitespace();
        let token = it.next().unwrap_or("");
        rows.push(token, it, lineno)?;
    }
    if rows.tokens.len() != n_rows {
        return Err(EmbeddingError::RowCountMismatch {
            expected: n_rows,
            found: rows.tokens.len(),
        });
    }
    rows.finish(name)
}

fn read_tsv<R: BufRead>(reader: R, name: String) -> Result<EmbeddingSpace, EmbeddingError> {
    let mut rows: Option<RowCollector> = None;
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches(['\r', '\n']);
        if line.is_empty() {
            continue;
        }
        let mut it = line.split('\t');
        let token = it.next().unwrap_or("");
        let values: Vec<&str> = it.collect();
        let collector = rows.get_or_insert_with(|| RowCollector::new(values.len()));
        if collector.dim == 0 {
            return Err(EmbeddingError::ZeroDim);
        }
        collector.push(token, values.into_iter(), lineno)?;
    }
    rows.ok_or(EmbeddingError::Empty)?.finish(name)
}

fn read_binary<R: Read>(mut r: R, name: String) -> Result<EmbeddingSpace, EmbeddingError> {
    let bad = |e: io::Error| EmbeddingError::BadBinary(e.to_string());
    if !binfmt::check_magic(&mut r, BINARY_MAGIC).map_err(bad)? {
        return Err(EmbeddingError::BadBinary("bad magic".into()));
    }
    let n = binfmt::read_u64(&mut r).map_err(bad)? as usize;
    let d = binfmt::read_u64(&mut r).map_err(bad)? as usize;
    let mut tokens = Vec::with_capacity(n.min(1 << 20));
    for _ in 0..n {
        let bytes = binfmt::read_bytes(&mut r).map_err(bad)?;
        let t = String::from_utf8(bytes)
            .map_err(|_| EmbeddingError::BadBinary("token is not UTF-8".into()))?;
        tokens.push(t);
    }
    let data = binfmt::read_f64s(&mut r, n * d).map_err(bad)?;
    let mut trailing = [0u8; 1];
    if r.read(&mut trailing)? != 0 {
        return Err(EmbeddingError::BadBinary("trailing bytes".into()));
    }
    EmbeddingSpace::new(name, tokens, DMatrix::from_row_slice(n, d, &data))
}

/// Restricts both spaces to their shared tokens, sorted lexicographically
/// by byte value.
pub fn intersect(
    a: &EmbeddingSpace,
    b: &EmbeddingSpace,
) -> Result<(EmbeddingSpace, EmbeddingSpace), EmbeddingError> {
    let b_index = b.index_map();
    let mut shared: Vec<(&str, usize, usize)> = a
        .tokens
        .iter()
        .enumerate()
        .filter_map(|(ia, t)| b_index.get(t.as_str()).map(|&ib| (t.as_str(), ia, ib)))
        .collect();
    if shared.is_empty() {
        return Err(EmbeddingError::EmptyIntersection);
    }
    shared.sort_by(|x, y| x.0.as_bytes().cmp(y.0.as_bytes()));
    let ia: Vec<usize> = shared.iter().map(|s| s.1).collect();
    let ib: Vec<usize> = shared.iter().map(|s| s.2).collect();
    Ok((a.select(&ia)?, b.select(&ib)?))
}

/// Seeded train/test split parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train_fraction: 0.8,
            seed: 0,
        }
    }
}

/// Disjoint train and test index sets. Both keep the shuffled order.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

/// Uniform integer in `0..bound` from a 64-bit draw by multiply-shift.
fn bounded(rng: &mut Xoshiro256PlusPlus, bound: usize) -> usize {
    ((rng.next_u64() as u128 * bound as u128) >> 64) as usize
}

/// Fisher-Yates shuffle of `0..n` driven by xoshiro256++ seeded through
/// splitmix64. The output depends only on `n` and `seed`.
pub fn shuffled_indices(n: usize, seed: u64) -> Vec<usize> {
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        let j = bounded(&mut rng, i + 1);
        idx.swap(i, j);
    }
    idx
}

pub fn split(space: &EmbeddingSpace, spec: SplitSpec) -> Result<Split, EmbeddingError> {
    split_count(space.len(), spec)
}

pub(crate) fn split_count(n: usize, spec: SplitSpec) -> Result<Split, EmbeddingError> {
    let degenerate = EmbeddingError::DegenerateSplit {
        n,
        fraction: spec.train_fraction,
    };
    if !(spec.train_fraction > 0.0 && spec.train_fraction < 1.0) || n < 2 {
        return Err(degenerate);
    }
    let n_train = (spec.train_fraction * n as f64).round() as usize;
    if n_train == 0 || n_train >= n {
        return Err(degenerate);
    }
    let mut order = shuffled_indices(n, spec.seed);
    let test = order.split_off(n_train);
    Ok(Split { train: order, test })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Common,
    Places,
    Names,
    Other,
}

impl Category {
    pub fn label(&self) -> &'static str {
        match self {
            Category::Common => "common",
            Category::Places => "places",
            Category::Names => "names",
            Category::Other => "other",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Category {
    type Err = ();

    fn from_str(s: &str) -> Result<Self, ()> {
        match s {
            "common" => Ok(Category::Common),
            "places" => Ok(Category::Places),
            "names" => Ok(Category::Names),
            "other" => Ok(Category::Other),
            _ => Err(()),
        }
    }
}

/// Per-token lexical metadata.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct VocabMeta {
    pub token: String,
    pub polysemy_count: Option<u32>,
    pub category: Option<Category>,
}

pub fn load_vocab_meta(path: &Path) -> Result<Vec<VocabMeta>, MetaError> {
    read_vocab_meta(BufReader::new(File::open(path)?))
}

/// Parses `token<TAB>polysemy_count<TAB>category` rows. Trailing columns may
/// be missing or empty. A first line whose second column is present but not
/// an integer is treated as a header.
pub fn read_vocab_meta<R: BufRead>(reader: R) -> Result<Vec<VocabMeta>, MetaError> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line?;
        let lineno = i + 1;
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').map(str::trim).collect();
        let count_col = cols.get(1).copied().unwrap_or("");
        if lineno == 1 && !count_col.is_empty() && count_col.parse::<i64>().is_err() {
            continue;
        }
        let token = cols[0];
        if token.is_empty() {
            return Err(MetaError::EmptyToken { line: lineno });
        }
        let polysemy_count = if count_col.is_empty() {
            None
        } else {
            match count_col.parse::<u32>() {
                Ok(c) => Some(c),
                Err(_) => {
                    return Err(MetaError::BadCount {
                        line: lineno,
                        value: count_col.to_string(),
                    })
                }
            }
        };
        let category = match cols.get(2).copied().unwrap_or("") {
            "" => None,
            c => Some(c.parse::<Category>().map_err(|_| MetaError::UnknownCategory {
                line: lineno,
                value: c.to_string(),
            })?),
        };
        if !seen.insert(token.to_string()) {
            return Err(MetaError::DuplicateToken {
                line: lineno,
                token: token.to_string(),
            });
        }
        out.push(VocabMeta {
            token: token.to_string(),
            polysemy_count,
            category,
        });
    }
    Ok(out)
}

/// Token to category map over the records that carry a category.
pub fn categories(meta: &[VocabMeta]) -> BTreeMap<String, String> {
    meta.iter()
        .filter_map(|m| m.category.map(|c| (m.token.clone(), c.label().to_string())))
        .collect()
}
