//! Alignment pipelines: fit a projection on training rows of a source
//! space, project held-out rows into the reference space and score them.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::Path;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::binfmt;
use crate::embedding_io::{self, select_rows, EmbeddingError, EmbeddingSpace, Split, SplitSpec};
use crate::fingerprint::Fingerprint;
use crate::linalg::{self, LinalgError, PcaBasis, ProcrustesMap, RidgeModel};
use crate::retrieval::{self, Metric, RetrievalError, RetrievalReport};

const MODEL_MAGIC: &[u8; 8] = b"GAMODEL1";
const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ProjectionError {
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error(transparent)]
    Linalg(#[from] LinalgError),
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
    #[error("source and reference vocabularies are not aligned")]
    VocabularyMismatch,
    #[error("training set has {0} rows; need at least 2")]
    TooFewTrainingRows(usize),
    #[error("source has dimension {found}, model expects {expected}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("model was fitted on a different training split")]
    SplitMismatch,
    #[error("invalid model file: {0}")]
    BadModelFile(String),
    #[error("I/O error: {0}")]
    Io(#[from] io::Error),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    #[default]
    Procrustes,
    Ridge,
}

#[derive(Clone, Debug, PartialEq)]
pub enum FittedMap {
    Procrustes(ProcrustesMap),
    Ridge(RidgeModel),
}

/// A fitted projection from a source space into a reference space.
///
/// For Procrustes the source is PCA-reduced to the reference dimension; when
/// the reference is the larger space it is reduced to the source dimension
/// instead, and retrieval happens in that reduced reference space.
#[derive(Clone, Debug, PartialEq)]
pub struct AlignmentModel {
    pub kind: Method,
    pub source_pca: Option<PcaBasis>,
    pub reference_pca: Option<PcaBasis>,
    pub map: FittedMap,
    pub source_dim: usize,
    pub target_dim: usize,
    pub train_fingerprint: Fingerprint,
}

impl AlignmentModel {
    /// Dimension of projected rows.
    pub fn output_dim(&self) -> usize {
        match &self.map {
            FittedMap::Procrustes(m) => m.dim(),
            FittedMap::Ridge(m) => m.output_dim(),
        }
    }

    /// The reference space as seen by projected rows.
    pub fn reference_view(&self, reference: &EmbeddingSpace) -> Result<EmbeddingSpace, ProjectionError> {
        if reference.dim() != self.target_dim {
            return Err(ProjectionError::DimensionMismatch {
                expected: self.target_dim,
                found: reference.dim(),
            });
        }
        match &self.reference_pca {
            None => Ok(reference.clone()),
            Some(pca) => {
                let m = linalg::pca_project(pca, reference.matrix())?;
                Ok(EmbeddingSpace::new(reference.name(), reference.tokens().to_vec(), m)?)
            }
        }
    }

    pub fn save(&self, path: &Path) -> Result<(), ProjectionError> {
        let mut w = BufWriter::new(File::create(path)?);
        self.write(&mut w)?;
        w.flush()?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ProjectionError> {
        Self::read(&mut BufReader::new(File::open(path)?))
    }

    /// Layout: magic, version `u32`, kind `u8`, source and target dims
    /// `u64`, train fingerprint (32 bytes), optional source and reference
    /// PCA blocks (presence byte first), then the map parameters.
    pub fn write<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(MODEL_MAGIC)?;
        binfmt::write_u32(w, MODEL_VERSION)?;
        binfmt::write_u8(w, match self.kind {
            Method::Procrustes => 0,
            Method::Ridge => 1,
        })?;
        binfmt::write_u64(w, self.source_dim as u64)?;
        binfmt::write_u64(w, self.target_dim as u64)?;
        w.write_all(&self.train_fingerprint.0)?;
        for pca in [&self.source_pca, &self.reference_pca] {
            match pca {
                None => binfmt::write_u8(w, 0)?,
                Some(p) => {
                    binfmt::write_u8(w, 1)?;
                    binfmt::write_vector(w, &p.mean)?;
                    binfmt::write_matrix(w, &p.components)?;
                    binfmt::write_vector(w, &p.explained_variance)?;
                    binfmt::write_u8(w, p.rank_deficient as u8)?;
                }
            }
        }
        match &self.map {
            FittedMap::Procrustes(m) => {
                binfmt::write_f64(w, m.scale)?;
                binfmt::write_matrix(w, &m.rotation)?;
                binfmt::write_vector(w, &m.source_mean)?;
                binfmt::write_vector(w, &m.target_mean)?;
            }
            FittedMap::Ridge(m) => {
                binfmt::write_f64(w, m.lambda)?;
                binfmt::write_matrix(w, &m.weights)?;
                binfmt::write_vector(w, &m.intercepts)?;
            }
        }
        Ok(())
    }

    pub fn read<R: Read>(r: &mut R) -> Result<Self, ProjectionError> {
        let bad = |e: io::Error| ProjectionError::BadModelFile(e.to_string());
        if !binfmt::check_magic(r, MODEL_MAGIC).map_err(bad)? {
            return Err(ProjectionError::BadModelFile("bad magic".into()));
        }
        let version = binfmt::read_u32(r).map_err(bad)?;
        if version != MODEL_VERSION {
            return Err(ProjectionError::BadModelFile(format!("unsupported version {version}")));
        }
        let kind = match binfmt::read_u8(r).map_err(bad)? {
            0 => Method::Procrustes,
            1 => Method::Ridge,
            k => return Err(ProjectionError::BadModelFile(format!("unknown kind {k}"))),
        };
        let source_dim = binfmt::read_u64(r).map_err(bad)? as usize;
        let target_dim = binfmt::read_u64(r).map_err(bad)? as usize;
        let mut fp = [0u8; 32];
        r.read_exact(&mut fp).map_err(bad)?;
        let mut pcas = Vec::with_capacity(2);
        for _ in 0..2 {
            let pca = match binfmt::read_u8(r).map_err(bad)? {
                0 => None,
                1 => Some(PcaBasis {
                    mean: binfmt::read_vector(r).map_err(bad)?,
                    components: binfmt::read_matrix(r).map_err(bad)?,
                    explained_variance: binfmt::read_vector(r).map_err(bad)?,
                    rank_deficient: binfmt::read_u8(r).map_err(bad)? != 0,
                }),
                b => return Err(ProjectionError::BadModelFile(format!("bad PCA flag {b}"))),
            };
            pcas.push(pca);
        }
        let reference_pca = pcas.pop().flatten();
        let source_pca = pcas.pop().flatten();
        let map = match kind {
            Method::Procrustes => FittedMap::Procrustes(ProcrustesMap {
                scale: binfmt::read_f64(r).map_err(bad)?,
                rotation: binfmt::read_matrix(r).map_err(bad)?,
                source_mean: binfmt::read_vector(r).map_err(bad)?,
                target_mean: binfmt::read_vector(r).map_err(bad)?,
            }),
            Method::Ridge => {
                let lambda = binfmt::read_f64(r).map_err(bad)?;
                FittedMap::Ridge(RidgeModel {
                    lambda,
                    weights: binfmt::read_matrix(r).map_err(bad)?,
                    intercepts: binfmt::read_vector(r).map_err(bad)?,
                })
            }
        };
        Ok(AlignmentModel {
            kind,
            source_pca,
            reference_pca,
            map,
            source_dim,
            target_dim,
            train_fingerprint: Fingerprint(fp),
        })
    }
}

/// Fits on `train` rows only; no statistic of any other row is read.
pub fn fit_alignment(
    src: &EmbeddingSpace,
    reference: &EmbeddingSpace,
    train: &[usize],
    method: Method,
    lambda: f64,
) -> Result<AlignmentModel, ProjectionError> {
    if src.tokens() != reference.tokens() {
        return Err(ProjectionError::VocabularyMismatch);
    }
    if train.len() < 2 {
        return Err(ProjectionError::TooFewTrainingRows(train.len()));
    }
    let x = select_rows(src.matrix(), train)?;
    let y = select_rows(reference.matrix(), train)?;
    let (d_e, d_ref) = (src.dim(), reference.dim());
    let train_tokens: Vec<&str> = train.iter().map(|&i| src.tokens()[i].as_str()).collect();

    let (source_pca, reference_pca, map) = match method {
        Method::Procrustes => {
            let d = d_e.min(d_ref);
            let source_pca = linalg::pca_fit(&x, d)?;
            let xr = linalg::pca_project(&source_pca, &x)?;
            if d_e >= d_ref {
                let map = linalg::procrustes_fit(&xr, &y)?;
                (Some(source_pca), None, FittedMap::Procrustes(map))
            } else {
                log::info!("reference dimension {d_ref} exceeds source {d_e}; reducing reference by PCA");
                let reference_pca = linalg::pca_fit(&y, d)?;
                let yr = linalg::pca_project(&reference_pca, &y)?;
                let map = linalg::procrustes_fit(&xr, &yr)?;
                (Some(source_pca), Some(reference_pca), FittedMap::Procrustes(map))
            }
        }
        Method::Ridge => (None, None, FittedMap::Ridge(linalg::ridge_fit(&x, &y, lambda)?)),
    };
    Ok(AlignmentModel {
        kind: method,
        source_pca,
        reference_pca,
        map,
        source_dim: d_e,
        target_dim: d_ref,
        train_fingerprint: Fingerprint::of_tokens(&train_tokens),
    })
}

/// Passes the selected source rows through the optional PCA and the map.
pub fn project(model: &AlignmentModel, src: &EmbeddingSpace, rows: &[usize]) -> Result<DMatrix<f64>, ProjectionError> {
    if src.dim() != model.source_dim {
        return Err(ProjectionError::DimensionMismatch {
            expected: model.source_dim,
            found: src.dim(),
        });
    }
    let x = select_rows(src.matrix(), rows)?;
    if rows.is_empty() {
        return Ok(DMatrix::zeros(0, model.output_dim()));
    }
    let x = match &model.source_pca {
        Some(pca) => linalg::pca_project(pca, &x)?,
        None => x,
    };
    Ok(match &model.map {
        FittedMap::Procrustes(m) => linalg::procrustes_apply(m, &x)?,
        FittedMap::Ridge(m) => linalg::ridge_apply(m, &x)?,
    })
}

/// Which reference rows compete as retrieval candidates.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CandidateMode {
    /// Only the held-out test rows.
    #[default]
    Test,
    /// The whole shared vocabulary.
    Full,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AlignConfig {
    pub method: Method,
    pub lambda: f64,
    pub split: SplitSpec,
    pub ks: Vec<usize>,
    pub metric: Metric,
    pub candidates: CandidateMode,
    pub normalize: bool,
}

impl Default for AlignConfig {
    fn default() -> Self {
        AlignConfig {
            method: Method::Procrustes,
            lambda: linalg::DEFAULT_LAMBDA,
            split: SplitSpec::default(),
            ks: vec![1, 10, 20, 50],
            metric: Metric::Cosine,
            candidates: CandidateMode::Test,
            normalize: false,
        }
    }
}

pub struct AlignOutcome {
    pub report: RetrievalReport,
    pub model: AlignmentModel,
    pub split: Split,
    pub shared_vocabulary: usize,
    /// Set when the reference was PCA-reduced to the source dimension.
    pub reference_reduced: bool,
}

/// intersect, split, fit on train, project test, score against the reference.
pub fn run_alignment(
    src: &EmbeddingSpace,
    reference: &EmbeddingSpace,
    config: &AlignConfig,
) -> Result<AlignOutcome, ProjectionError> {
    run_alignment_with(src, reference, config, None)
}

/// As [`run_alignment`], but scores `pretrained` instead of fitting when
/// given. The model must have been fitted on this split's training tokens.
pub fn run_alignment_with(
    src: &EmbeddingSpace,
    reference: &EmbeddingSpace,
    config: &AlignConfig,
    pretrained: Option<&AlignmentModel>,
) -> Result<AlignOutcome, ProjectionError> {
    let (src, reference) = if config.normalize {
        (src.unit_normalized(), reference.unit_normalized())
    } else {
        (src.clone(), reference.clone())
    };
    let (src, reference) = embedding_io::intersect(&src, &reference)?;
    let split = embedding_io::split(&src, config.split)?;
    let model = match pretrained {
        Some(m) => {
            let train_tokens: Vec<&str> = split.train.iter().map(|&i| src.tokens()[i].as_str()).collect();
            if m.train_fingerprint != Fingerprint::of_tokens(&train_tokens) {
                return Err(ProjectionError::SplitMismatch);
            }
            m.clone()
        }
        None => fit_alignment(&src, &reference, &split.train, config.method, config.lambda)?,
    };
    let projected = project(&model, &src, &split.test)?;
    let view = model.reference_view(&reference)?;
    let report = match config.candidates {
        CandidateMode::Test => {
            let pool = view.select(&split.test)?;
            let truth: Vec<usize> = (0..split.test.len()).collect();
            retrieval::precision_at_k(&projected, &pool, &truth, &config.ks, config.metric)?
        }
        CandidateMode::Full => retrieval::precision_at_k(&projected, &view, &split.test, &config.ks, config.metric)?,
    };
    Ok(AlignOutcome {
        report,
        reference_reduced: model.reference_pca.is_some(),
        model,
        split,
        shared_vocabulary: src.len(),
    })
}
