//! Convergence trends over model size and stratified precision.

use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embedding_io::VocabMeta;
use crate::retrieval::{RetrievalError, RetrievalReport};

#[derive(Debug, Error, PartialEq)]
pub enum AnalysisError {
    #[error("need at least 2 points, found {0}")]
    TooFewPoints(usize),
    #[error("all x values are equal; slope is undefined")]
    DegenerateX,
    #[error("log10 transform needs positive x, found {0}")]
    NonPositiveX(f64),
    #[error("non-finite point ({0}, {1})")]
    NonFinite(f64, f64),
    #[error("no trend fits given")]
    NoTrends,
    #[error("report carries no per-token hit records")]
    MissingHits,
    #[error(transparent)]
    Retrieval(#[from] RetrievalError),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum XTransform {
    Raw,
    #[default]
    Log10,
}

impl XTransform {
    pub fn apply(&self, x: f64) -> Result<f64, AnalysisError> {
        match self {
            XTransform::Raw => Ok(x),
            XTransform::Log10 if x > 0.0 => Ok(x.log10()),
            XTransform::Log10 => Err(AnalysisError::NonPositiveX(x)),
        }
    }
}

/// Least-squares line `y = slope * t(x) + intercept`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrendFit {
    pub slope: f64,
    pub intercept: f64,
    pub rss: f64,
    pub n_points: usize,
    pub x_transform: XTransform,
}

impl TrendFit {
    pub fn predict(&self, x: f64) -> Result<f64, AnalysisError> {
        Ok(self.slope * self.x_transform.apply(x)? + self.intercept)
    }
}

pub fn fit_trend(points: &[(f64, f64)], x_transform: XTransform) -> Result<TrendFit, AnalysisError> {
    if points.len() < 2 {
        return Err(AnalysisError::TooFewPoints(points.len()));
    }
    let mut pts = Vec::with_capacity(points.len());
    for &(x, y) in points {
        if !x.is_finite() || !y.is_finite() {
            return Err(AnalysisError::NonFinite(x, y));
        }
        pts.push((x_transform.apply(x)?, y));
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(AnalysisError::DegenerateX);
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss = pts
        .iter()
        .map(|p| {
            let r = p.1 - (slope * p.0 + intercept);
            r * r
        })
        .sum();
    Ok(TrendFit {
        slope,
        intercept,
        rss,
        n_points: pts.len(),
        x_transform,
    })
}

/// Slope summary over a group of trend lines.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PositivityStats {
    /// Share of fits with slope strictly above zero.
    pub fraction_positive: f64,
    pub max_coeff: f64,
    /// Population standard deviation of the slopes.
    pub sd: f64,
    pub n: usize,
}

pub fn positivity_stats(trends: &[TrendFit]) -> Result<PositivityStats, AnalysisError> {
    slope_stats(&trends.iter().map(|t| t.slope).collect::<Vec<_>>())
}

pub fn slope_stats(slopes: &[f64]) -> Result<PositivityStats, AnalysisError> {
    if slopes.is_empty() {
        return Err(AnalysisError::NoTrends);
    }
    let n = slopes.len() as f64;
    let positive = slopes.iter().filter(|&&m| m > 0.0).count();
    let max_coeff = slopes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mean = slopes.iter().sum::<f64>() / n;
    let var = slopes.iter().map(|m| (m - mean) * (m - mean)).sum::<f64>() / n;
    Ok(PositivityStats {
        fraction_positive: positive as f64 / n,
        max_coeff,
        sd: var.sqrt(),
        n: slopes.len(),
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum PolysemyBin {
    #[serde(rename = "1")]
    One,
    #[serde(rename = "2-3")]
    TwoToThree,
    #[serde(rename = "4+")]
    FourPlus,
}

impl PolysemyBin {
    /// `None` for zero senses.
    pub fn of(count: u32) -> Option<Self> {
        match count {
            0 => None,
            1 => Some(PolysemyBin::One),
            2 | 3 => Some(PolysemyBin::TwoToThree),
            _ => Some(PolysemyBin::FourPlus),
        }
    }

    pub fn label(&self) -> &'static str {
        match self {
            PolysemyBin::One => "1",
            PolysemyBin::TwoToThree => "2-3",
            PolysemyBin::FourPlus => "4+",
        }
    }
}

impl fmt::Display for PolysemyBin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

/// Bins every record with a positive polysemy count. Records with a zero
/// count are dropped with a warning; records without a count are ignored.
pub fn bin_polysemy(meta: &[VocabMeta]) -> BTreeMap<String, PolysemyBin> {
    let mut out = BTreeMap::new();
    let mut zero = 0;
    for m in meta {
        if let Some(c) = m.polysemy_count {
            match PolysemyBin::of(c) {
                Some(bin) => {
                    out.insert(m.token.clone(), bin);
                }
                None => zero += 1,
            }
        }
    }
    if zero > 0 {
        log::warn!("{zero} tokens with a polysemy count of 0 excluded from binning");
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StratumReport {
    pub stratum: String,
    pub n_tokens: usize,
    pub report: RetrievalReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Stratification {
    pub strata: Vec<StratumReport>,
    /// Evaluated tokens with no stratum label.
    pub unlabeled: usize,
}

impl Stratification {
    /// `stratum,k,precision,n_tokens`, one row per k per stratum.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("stratum,k,precision,n_tokens\n");
        for s in &self.strata {
            for (k, p) in &s.report.precision {
                out.push_str(&format!("{},{},{},{}\n", s.stratum, k, p, s.n_tokens));
            }
        }
        out
    }
}

/// Recomputes precision@k within each stratum from per-token ranks. Strata
/// without tokens are absent from the output.
pub fn stratified_precision(
    report: &RetrievalReport,
    strata: &BTreeMap<String, String>,
    ks: &[usize],
) -> Result<Stratification, AnalysisError> {
    let hits = report.hits.as_ref().ok_or(AnalysisError::MissingHits)?;
    let mut grouped: BTreeMap<&str, BTreeMap<String, usize>> = BTreeMap::new();
    let mut unlabeled = 0;
    for (token, &rank) in hits {
        match strata.get(token) {
            Some(label) => {
                grouped.entry(label.as_str()).or_default().insert(token.clone(), rank);
            }
            None => unlabeled += 1,
        }
    }
    let mut out = Vec::with_capacity(grouped.len());
    for (label, ranks) in grouped {
        let n_tokens = ranks.len();
        let mut sub = RetrievalReport::from_ranks(ranks, ks, report.n_candidates, report.metric)?;
        sub.hits = None;
        out.push(StratumReport {
            stratum: label.to_string(),
            n_tokens,
            report: sub,
        });
    }
    Ok(Stratification { strata: out, unlabeled })
}

/// Token to bin-label map for [`stratified_precision`].
pub fn polysemy_strata(meta: &[VocabMeta]) -> BTreeMap<String, String> {
    bin_polysemy(meta)
        .into_iter()
        .map(|(t, b)| (t, b.label().to_string()))
        .collect()
}
