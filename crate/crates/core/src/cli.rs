//! Subcommands behind the `geomalign` binary.
//!
//! Every command writes one JSON report of the shape
//! `{"tool", "version", "config", "created_unix", "result"}`, where `config`
//! is the parsed invocation itself. Feeding that echo back through
//! [`Command::run`] (or `geomalign replay`) reproduces the report.

use std::collections::BTreeMap;
use std::fs::{self, File};
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::analogy::{self, AnalogyError, AnalogyOptions, CandidatePool, ExclusionMode, OffsetOrder};
use crate::analysis::{self, AnalysisError, PositivityStats, TrendFit, XTransform};
use crate::embedding_io::{self, EmbeddingError, EmbeddingFormat, EmbeddingSpace, MetaError, SplitSpec};
use crate::fingerprint::Fingerprint;
use crate::knn_graph::{self, GraphComparison, GraphError};
use crate::linalg;
use crate::projection::{self, AlignConfig, AlignmentModel, CandidateMode, FittedMap, Method, ProjectionError};
use crate::retrieval::{Metric, RetrievalReport};
use crate::rsa::{self, RsaError, Subsample};

pub const THREADS_ENV: &str = "GEOMALIGN_THREADS";

#[derive(Debug, Error)]
pub enum CliError {
    #[error("loading {path}: {source}")]
    Load { path: PathBuf, source: EmbeddingError },
    #[error("loading {path}: {source}")]
    Meta { path: PathBuf, source: MetaError },
    #[error(transparent)]
    Embedding(#[from] EmbeddingError),
    #[error("align: {0}")]
    Projection(#[from] ProjectionError),
    #[error("rsa: {0}")]
    Rsa(#[from] RsaError),
    #[error("analogy: {0}")]
    Analogy(#[from] AnalogyError),
    #[error("analysis: {0}")]
    Analysis(#[from] AnalysisError),
    #[error("knn-graph: {0}")]
    Graph(#[from] GraphError),
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("{path}: {source}")]
    Json { path: PathBuf, source: serde_json::Error },
    #[error("{path}: {reason}")]
    BadReport { path: PathBuf, reason: String },
    #[error("{0}")]
    Usage(String),
    #[error("worker pool: {0}")]
    Threads(String),
}

#[derive(Debug, Parser)]
#[command(name = "geomalign", version, about = "Measure structural similarity between embedding spaces")]
pub struct Cli {
    #[command(subcommand)]
    pub invocation: Invocation,
}

#[derive(Debug, Subcommand)]
pub enum Invocation {
    #[command(flatten)]
    Run(Command),
    /// Re-run the configuration echoed in an existing report.
    Replay(ReplayArgs),
}

#[derive(Debug, Args)]
pub struct ReplayArgs {
    /// Report whose `config` is re-run.
    pub report: PathBuf,
    /// Write to this path instead of the echoed output path.
    #[arg(long)]
    pub output: Option<PathBuf>,
}

#[derive(Clone, Debug, PartialEq, Subcommand, Serialize, Deserialize)]
#[serde(tag = "command", rename_all = "kebab-case")]
pub enum Command {
    /// Fit a projection on a training split and score retrieval on the rest.
    Align(AlignArgs),
    /// Cosine similarity between the distance matrices of two spaces.
    Rsa(RsaArgs),
    /// Solve analogy quadruples by vector offset.
    Analogy(AnalogyArgs),
    /// Fit score-versus-model-size trend lines over existing reports.
    Trend(TrendArgs),
    /// Break an align report with per-token hits down by polysemy or category.
    Stratify(StratifyArgs),
    /// Build nearest-neighbor graphs and compare them across spaces.
    KnnGraph(KnnGraphArgs),
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AlignArgs {
    /// Space to be projected.
    #[arg(long)]
    pub source: PathBuf,
    /// Space projected into.
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum)]
    pub source_format: Option<EmbeddingFormat>,
    #[arg(long, value_enum)]
    pub reference_format: Option<EmbeddingFormat>,
    #[arg(long, value_enum, default_value_t = Method::Procrustes)]
    pub method: Method,
    /// Ridge penalty.
    #[arg(long, default_value_t = linalg::DEFAULT_LAMBDA)]
    pub lambda: f64,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 20, 50])]
    pub ks: Vec<usize>,
    #[arg(long, default_value_t = 0.8)]
    pub train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Metric::Cosine)]
    pub metric: Metric,
    /// Retrieval candidates: held-out rows only, or the whole shared vocabulary.
    #[arg(long, value_enum, default_value_t = CandidateMode::Test)]
    pub candidates: CandidateMode,
    /// Scale every row to unit length before anything else.
    #[arg(long)]
    pub normalize: bool,
    /// Include per-token ranks in the report (needed by `stratify`).
    #[arg(long)]
    pub hits: bool,
    /// Score an existing model file instead of fitting.
    #[arg(long)]
    pub load_model: Option<PathBuf>,
    #[arg(long)]
    pub save_model: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct RsaArgs {
    #[arg(long)]
    pub source: PathBuf,
    #[arg(long)]
    pub reference: PathBuf,
    #[arg(long, value_enum)]
    pub source_format: Option<EmbeddingFormat>,
    #[arg(long, value_enum)]
    pub reference_format: Option<EmbeddingFormat>,
    /// Number of shared tokens sampled; defaults to min(5000, V).
    #[arg(long, conflicts_with = "full")]
    pub subsample: Option<usize>,
    /// Use every shared token.
    #[arg(long)]
    pub full: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long)]
    pub save_source_rdm: Option<PathBuf>,
    #[arg(long)]
    pub save_reference_rdm: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct AnalogyArgs {
    #[arg(long)]
    pub space: PathBuf,
    #[arg(long, value_enum)]
    pub format: Option<EmbeddingFormat>,
    /// Tab-separated quadruples, one per line.
    #[arg(long)]
    pub quadruples: PathBuf,
    #[arg(long, value_delimiter = ',', default_values_t = [1, 10, 20, 50])]
    pub ks: Vec<usize>,
    #[arg(long, value_enum, default_value_t = ExclusionMode::ExcludeSources)]
    pub exclusion: ExclusionMode,
    #[arg(long, value_enum, default_value_t = CandidatePool::Lexicon)]
    pub pool: CandidatePool,
    #[arg(long, value_enum, default_value_t = OffsetOrder::Printed)]
    pub order: OffsetOrder,
    #[arg(long, value_enum, default_value_t = Metric::Cosine)]
    pub metric: Metric,
    #[arg(long)]
    pub normalize: bool,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct TrendArgs {
    /// Reports from align, analogy or rsa, one per model.
    #[arg(long, num_args = 1.., required = true)]
    pub reports: Vec<PathBuf>,
    /// Parameter count of each report's model, in the same order.
    #[arg(long, num_args = 1.., required = true)]
    pub sizes: Vec<f64>,
    /// Which precision@k series to fit; ignored for rsa reports.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    #[arg(long, value_enum, default_value_t = XTransform::Log10)]
    pub x_transform: XTransform,
    /// Also write the points as `series,size,score` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Axis {
    Polysemy,
    Category,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct StratifyArgs {
    /// Align report written with `--hits`.
    #[arg(long)]
    pub report: PathBuf,
    /// Token metadata: `token<TAB>polysemy_count<TAB>category`.
    #[arg(long)]
    pub meta: PathBuf,
    #[arg(long, value_enum)]
    pub axis: Axis,
    /// Defaults to the ks of the input report.
    #[arg(long, value_delimiter = ',')]
    pub ks: Option<Vec<usize>>,
    /// Also write `stratum,k,precision,n_tokens` rows.
    #[arg(long)]
    pub csv: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Args, Serialize, Deserialize)]
pub struct KnnGraphArgs {
    #[arg(long)]
    pub source: PathBuf,
    /// Second space; its graph is compared with the source graph over the
    /// shared vocabulary.
    #[arg(long)]
    pub reference: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub source_format: Option<EmbeddingFormat>,
    #[arg(long, value_enum)]
    pub reference_format: Option<EmbeddingFormat>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
    #[arg(long, value_enum, default_value_t = Metric::Euclidean)]
    pub metric: Metric,
    /// Write the source graph as JSON lines.
    #[arg(long)]
    pub jsonl: Option<PathBuf>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Serialize)]
struct Envelope<'a, T: Serialize> {
    tool: &'static str,
    version: &'static str,
    config: &'a Command,
    created_unix: u64,
    result: T,
}

#[derive(Serialize)]
struct AlignResult {
    source_vocabulary: usize,
    reference_vocabulary: usize,
    shared_vocabulary: usize,
    n_train: usize,
    source_dim: usize,
    reference_dim: usize,
    output_dim: usize,
    reference_reduced: bool,
    train_fingerprint: Fingerprint,
    model: ModelSummary,
    retrieval: RetrievalReport,
}

#[derive(Serialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
enum ModelSummary {
    Procrustes { scale: f64, rank_deficient: bool },
    Ridge { lambda: f64 },
}

#[derive(Serialize)]
struct RsaResult {
    similarity: f64,
    n: usize,
    shared_vocabulary: usize,
    /// Sampled point count, or null when every shared token was used.
    subsample: Option<usize>,
    seed: u64,
    token_fingerprint: Fingerprint,
}

#[derive(Serialize)]
struct TrendPoint {
    report: PathBuf,
    size: f64,
    score: f64,
}

#[derive(Serialize)]
struct TrendSeries {
    series: String,
    fit: TrendFit,
    points: Vec<TrendPoint>,
}

#[derive(Serialize)]
struct TrendResult {
    series: Vec<TrendSeries>,
    /// Over every fitted series above.
    slopes: PositivityStats,
}

#[derive(Serialize)]
struct StratifyResult {
    axis: Axis,
    n_tokens: usize,
    #[serde(flatten)]
    stratification: analysis::Stratification,
}

#[derive(Serialize)]
struct GraphResult {
    n: usize,
    k: usize,
    metric: Metric,
    token_fingerprint: Fingerprint,
    /// Present when a reference space was given.
    comparison: Option<GraphComparison>,
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Align(_) => "align",
            Command::Rsa(_) => "rsa",
            Command::Analogy(_) => "analogy",
            Command::Trend(_) => "trend",
            Command::Stratify(_) => "stratify",
            Command::KnnGraph(_) => "knn-graph",
        }
    }

    pub fn output(&self) -> &Path {
        match self {
            Command::Align(a) => &a.output,
            Command::Rsa(a) => &a.output,
            Command::Analogy(a) => &a.output,
            Command::Trend(a) => &a.output,
            Command::Stratify(a) => &a.output,
            Command::KnnGraph(a) => &a.output,
        }
    }

    pub fn set_output(&mut self, path: PathBuf) {
        match self {
            Command::Align(a) => a.output = path,
            Command::Rsa(a) => a.output = path,
            Command::Analogy(a) => a.output = path,
            Command::Trend(a) => a.output = path,
            Command::Stratify(a) => a.output = path,
            Command::KnnGraph(a) => a.output = path,
        }
    }

    /// Computes the `result` section without writing the report. Side
    /// outputs (models, RDMs, CSV, JSON lines) are written.
    pub fn execute(&self) -> Result<Value, CliError> {
        let v = match self {
            Command::Align(a) => to_value(cmd_align(a)?),
            Command::Rsa(a) => to_value(cmd_rsa(a)?),
            Command::Analogy(a) => to_value(cmd_analogy(a)?),
            Command::Trend(a) => to_value(cmd_trend(a)?),
            Command::Stratify(a) => to_value(cmd_stratify(a)?),
            Command::KnnGraph(a) => to_value(cmd_knn_graph(a)?),
        };
        Ok(v)
    }

    /// Executes and writes the report to the output path. The report only
    /// appears once everything upstream succeeded.
    pub fn run(&self) -> Result<PathBuf, CliError> {
        let result = self.execute()?;
        let created_unix = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
        let envelope = Envelope {
            tool: "geomalign",
            version: env!("CARGO_PKG_VERSION"),
            config: self,
            created_unix,
            result,
        };
        let path = self.output().to_path_buf();
        let mut text = serde_json::to_string_pretty(&envelope).expect("report serializes");
        text.push('\n');
        write_file(&path, text.as_bytes())?;
        log::info!("{} report written to {}", self.name(), path.display());
        Ok(path)
    }

    /// The configuration echoed in a report file.
    pub fn from_report(path: &Path) -> Result<Command, CliError> {
        let value = read_json(path)?;
        let config = value.get("config").cloned().ok_or_else(|| CliError::BadReport {
            path: path.to_path_buf(),
            reason: "no config echo".into(),
        })?;
        serde_json::from_value(config).map_err(|source| CliError::Json {
            path: path.to_path_buf(),
            source,
        })
    }
}

pub fn replay(args: &ReplayArgs) -> Result<PathBuf, CliError> {
    let mut command = Command::from_report(&args.report)?;
    if let Some(out) = &args.output {
        command.set_output(out.clone());
    }
    command.run()
}

/// Sizes the global worker pool from `GEOMALIGN_THREADS` when set.
pub fn init_thread_pool() -> Result<(), CliError> {
    let Ok(raw) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| CliError::Usage(format!("{THREADS_ENV} must be a positive integer, got {raw:?}")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| CliError::Threads(e.to_string()))
}

fn to_value<T: Serialize>(t: T) -> Value {
    serde_json::to_value(t).expect("result serializes")
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io_err = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(bytes).map_err(io_err)?;
    w.flush().map_err(io_err)
}

fn read_json(path: &Path) -> Result<Value, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    serde_json::from_str(&text).map_err(|source| CliError::Json {
        path: path.to_path_buf(),
        source,
    })
}

fn load(path: &Path, format: Option<EmbeddingFormat>) -> Result<EmbeddingSpace, CliError> {
    let format = format.unwrap_or_else(|| EmbeddingFormat::infer(path));
    let space = embedding_io::load_embeddings(path, format).map_err(|source| CliError::Load {
        path: path.to_path_buf(),
        source,
    })?;
    log::info!("{}: {} tokens, d = {}", path.display(), space.len(), space.dim());
    Ok(space)
}

fn cmd_align(a: &AlignArgs) -> Result<AlignResult, CliError> {
    let src = load(&a.source, a.source_format)?;
    let reference = load(&a.reference, a.reference_format)?;
    let config = AlignConfig {
        method: a.method,
        lambda: a.lambda,
        split: SplitSpec {
            train_fraction: a.train_fraction,
            seed: a.seed,
        },
        ks: a.ks.clone(),
        metric: a.metric,
        candidates: a.candidates,
        normalize: a.normalize,
    };
    let pretrained = match &a.load_model {
        Some(p) => {
            let m = AlignmentModel::load(p)?;
            if m.kind != a.method {
                return Err(CliError::Usage(format!(
                    "{} holds a {:?} model but --method is {:?}",
                    p.display(),
                    m.kind,
                    a.method
                )));
            }
            Some(m)
        }
        None => None,
    };
    let outcome = projection::run_alignment_with(&src, &reference, &config, pretrained.as_ref())?;
    if let Some(p) = &a.save_model {
        outcome.model.save(p)?;
    }
    let model = &outcome.model;
    let summary = match &model.map {
        FittedMap::Procrustes(m) => ModelSummary::Procrustes {
            scale: m.scale,
            rank_deficient: model.source_pca.as_ref().is_some_and(|p| p.rank_deficient),
        },
        FittedMap::Ridge(m) => ModelSummary::Ridge { lambda: m.lambda },
    };
    let retrieval = if a.hits {
        outcome.report
    } else {
        outcome.report.without_hits()
    };
    Ok(AlignResult {
        source_vocabulary: src.len(),
        reference_vocabulary: reference.len(),
        shared_vocabulary: outcome.shared_vocabulary,
        n_train: outcome.split.train.len(),
        source_dim: model.source_dim,
        reference_dim: model.target_dim,
        output_dim: model.output_dim(),
        reference_reduced: outcome.reference_reduced,
        train_fingerprint: model.train_fingerprint,
        model: summary,
        retrieval,
    })
}

fn cmd_rsa(a: &RsaArgs) -> Result<RsaResult, CliError> {
    let mut src = load(&a.source, a.source_format)?;
    let mut reference = load(&a.reference, a.reference_format)?;
    if a.normalize {
        src = src.unit_normalized();
        reference = reference.unit_normalized();
    }
    let (src, reference) = embedding_io::intersect(&src, &reference)?;
    let v = src.len();
    let count = match (a.full, a.subsample) {
        (true, _) => None,
        (false, Some(c)) => Some(c),
        (false, None) if v > rsa::DEFAULT_SUBSAMPLE => Some(rsa::DEFAULT_SUBSAMPLE),
        (false, None) => None,
    };
    let sub = count.map(|count| Subsample { count, seed: a.seed });
    let r1 = rsa::compute_rdm(&src, sub)?;
    let r2 = rsa::compute_rdm(&reference, sub)?;
    if let Some(p) = &a.save_source_rdm {
        r1.save(p)?;
    }
    if let Some(p) = &a.save_reference_rdm {
        r2.save(p)?;
    }
    Ok(RsaResult {
        similarity: rsa::rsa_similarity(&r1, &r2)?,
        n: r1.n(),
        shared_vocabulary: v,
        subsample: count,
        seed: a.seed,
        token_fingerprint: r1.token_fingerprint(),
    })
}

fn cmd_analogy(a: &AnalogyArgs) -> Result<analogy::AnalogyReport, CliError> {
    let mut space = load(&a.space, a.format)?;
    if a.normalize {
        space = space.unit_normalized();
    }
    let quads = analogy::load_quadruples(&a.quadruples)?;
    let options = AnalogyOptions {
        exclusion: a.exclusion,
        pool: a.pool,
        order: a.order,
        metric: a.metric,
    };
    Ok(analogy::evaluate_analogies(&space, &quads, &a.ks, options)?)
}

/// Named score series of one report: `p@k` for precision reports,
/// `similarity` for rsa reports.
fn report_scores(path: &Path, ks: Option<&[usize]>) -> Result<BTreeMap<String, f64>, CliError> {
    let bad = |reason: String| CliError::BadReport {
        path: path.to_path_buf(),
        reason,
    };
    let value = read_json(path)?;
    let result = value.get("result").ok_or_else(|| bad("no result section".into()))?;
    let precision = result
        .get("precision")
        .or_else(|| result.get("retrieval").and_then(|r| r.get("precision")));
    let mut out = BTreeMap::new();
    if let Some(p) = precision.and_then(Value::as_object) {
        let available: BTreeMap<usize, f64> = p
            .iter()
            .filter_map(|(k, v)| Some((k.parse().ok()?, v.as_f64()?)))
            .collect();
        let wanted: Vec<usize> = match ks {
            Some(ks) => ks.to_vec(),
            None => available.keys().copied().collect(),
        };
        for k in wanted {
            let score = available.get(&k).ok_or_else(|| bad(format!("no precision at k = {k}")))?;
            out.insert(format!("p@{k}"), *score);
        }
    } else if let Some(s) = result.get("similarity").and_then(Value::as_f64) {
        out.insert("similarity".into(), s);
    } else {
        return Err(bad("neither precision nor similarity found".into()));
    }
    Ok(out)
}

fn cmd_trend(a: &TrendArgs) -> Result<TrendResult, CliError> {
    if a.reports.len() != a.sizes.len() {
        return Err(CliError::Usage(format!(
            "{} reports but {} sizes",
            a.reports.len(),
            a.sizes.len()
        )));
    }
    let mut by_series: BTreeMap<String, Vec<TrendPoint>> = BTreeMap::new();
    let mut first_keys: Option<Vec<String>> = None;
    for (path, &size) in a.reports.iter().zip(&a.sizes) {
        let scores = report_scores(path, a.ks.as_deref())?;
        let keys: Vec<String> = scores.keys().cloned().collect();
        match &first_keys {
            None => first_keys = Some(keys),
            Some(f) if *f != keys => {
                return Err(CliError::BadReport {
                    path: path.clone(),
                    reason: format!("series {keys:?} differ from the first report's {f:?}"),
                })
            }
            Some(_) => {}
        }
        for (series, score) in scores {
            by_series.entry(series).or_default().push(TrendPoint {
                report: path.clone(),
                size,
                score,
            });
        }
    }
    let mut series = Vec::new();
    for (name, points) in by_series {
        let xy: Vec<(f64, f64)> = points.iter().map(|p| (p.size, p.score)).collect();
        let fit = analysis::fit_trend(&xy, a.x_transform)?;
        series.push(TrendSeries { series: name, fit, points });
    }
    // p@k series in numeric k order rather than string order
    series.sort_by_key(|s| s.series.strip_prefix("p@").and_then(|k| k.parse::<usize>().ok()));
    let fits: Vec<TrendFit> = series.iter().map(|s| s.fit).collect();
    let slopes = analysis::positivity_stats(&fits)?;
    if let Some(csv) = &a.csv {
        let mut text = String::from("series,size,score\n");
        for s in &series {
            for p in &s.points {
                text.push_str(&format!("{},{},{}\n", s.series, p.size, p.score));
            }
        }
        write_file(csv, text.as_bytes())?;
    }
    Ok(TrendResult { series, slopes })
}

fn cmd_stratify(a: &StratifyArgs) -> Result<StratifyResult, CliError> {
    let value = read_json(&a.report)?;
    let retrieval = value
        .get("result")
        .and_then(|r| r.get("retrieval"))
        .ok_or_else(|| CliError::BadReport {
            path: a.report.clone(),
            reason: "not an align report".into(),
        })?;
    let report: RetrievalReport = serde_json::from_value(retrieval.clone()).map_err(|source| CliError::Json {
        path: a.report.clone(),
        source,
    })?;
    if report.hits.is_none() {
        return Err(CliError::BadReport {
            path: a.report.clone(),
            reason: "no per-token hits; re-run align with --hits".into(),
        });
    }
    let meta = embedding_io::load_vocab_meta(&a.meta).map_err(|source| CliError::Meta {
        path: a.meta.clone(),
        source,
    })?;
    let strata = match a.axis {
        Axis::Polysemy => analysis::polysemy_strata(&meta),
        Axis::Category => embedding_io::categories(&meta),
    };
    let ks = a.ks.clone().unwrap_or_else(|| report.ks.clone());
    let stratification = analysis::stratified_precision(&report, &strata, &ks)?;
    if let Some(csv) = &a.csv {
        write_file(csv, stratification.to_csv().as_bytes())?;
    }
    Ok(StratifyResult {
        axis: a.axis,
        n_tokens: report.n_test,
        stratification,
    })
}

fn cmd_knn_graph(a: &KnnGraphArgs) -> Result<GraphResult, CliError> {
    let src = load(&a.source, a.source_format)?;
    let (src, other) = match &a.reference {
        Some(p) => {
            let reference = load(p, a.reference_format)?;
            let (s, r) = embedding_io::intersect(&src, &reference)?;
            (s, Some(r))
        }
        None => (src, None),
    };
    let g1 = knn_graph::build_knn_graph(&src, a.k, a.metric)?;
    let comparison = match &other {
        Some(r) => {
            let g2 = knn_graph::build_knn_graph(r, a.k, a.metric)?;
            Some(knn_graph::graph_identical(&g1, &g2)?)
        }
        None => None,
    };
    if let Some(p) = &a.jsonl {
        let io_err = |source| CliError::Io { path: p.clone(), source };
        let mut w = BufWriter::new(File::create(p).map_err(io_err)?);
        g1.write_jsonl(&mut w).map_err(io_err)?;
        w.flush().map_err(io_err)?;
    }
    Ok(GraphResult {
        n: g1.n(),
        k: g1.k,
        metric: g1.metric,
        token_fingerprint: g1.token_fingerprint,
        comparison,
    })
}
