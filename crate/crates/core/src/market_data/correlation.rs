use serde::{Deserialize, Serialize};

use super::{FeatureMatrix, MarketDataError};
use crate::stats::pearson;

/// Default absolute-correlation threshold of the feature filter.
pub const DEFAULT_THRESHOLD: f64 = 0.6;

/// How per-asset observations are combined into one coefficient per feature pair.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Pooling {
    /// Mean of the per-asset coefficients.
    #[default]
    AssetAverage,
    /// One coefficient over all assets' rows stacked end to end.
    Stacked,
}

/// A feature dropped by the filter and the kept feature that triggered it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DroppedFeature {
    pub feature: String,
    pub partner: String,
    pub rho: f64,
}

/// Pairwise correlations of features plus the outcome of the filter at `threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationReport {
    pub feature_names: Vec<String>,
    pub matrix: Vec<Vec<f64>>,
    pub threshold: f64,
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
}

/// Result of [`correlation_filter`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FilterOutcome {
    pub kept: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
}

impl CorrelationReport {
    /// Coefficient between two named features.
    pub fn rho(&self, a: &str, b: &str) -> Option<f64> {
        let i = self.feature_names.iter().position(|f| f == a)?;
        let j = self.feature_names.iter().position(|f| f == b)?;
        Some(self.matrix[i][j])
    }

    /// Sub-report over `names` (kept in this report's order), refiltered at the same threshold.
    pub fn restrict(&self, names: &[String]) -> CorrelationReport {
        let idx: Vec<usize> = (0..self.feature_names.len())
            .filter(|&i| names.contains(&self.feature_names[i]))
            .collect();
        let mut report = CorrelationReport {
            feature_names: idx.iter().map(|&i| self.feature_names[i].clone()).collect(),
            matrix: idx
                .iter()
                .map(|&i| idx.iter().map(|&j| self.matrix[i][j]).collect())
                .collect(),
            threshold: self.threshold,
            kept: Vec::new(),
            dropped: Vec::new(),
        };
        let outcome = correlation_filter(&report, self.threshold);
        report.kept = outcome.kept;
        report.dropped = outcome.dropped;
        report
    }
}

/// Sample Pearson coefficients between features over the non-warm-up rows.
///
/// The returned report is already filtered at [`DEFAULT_THRESHOLD`]; use
/// [`correlation_filter`] for other thresholds.
pub fn pearson_matrix(
    features: &FeatureMatrix,
    pooling: Pooling,
) -> Result<CorrelationReport, MarketDataError> {
    let usable = features.len().saturating_sub(features.warmup());
    if usable < 2 {
        return Err(MarketDataError::TooFewRows(usable));
    }
    let n_feat = features.n_features();
    let n_assets = features.assets().len();
    let start = features.warmup();
    let cols: Vec<Vec<Vec<f64>>> = (0..n_assets)
        .map(|d| {
            (0..n_feat)
                .map(|i| features.column(d, i)[start..].to_vec())
                .collect()
        })
        .collect();

    for (d, per_asset) in cols.iter().enumerate() {
        for (i, col) in per_asset.iter().enumerate() {
            if col.iter().all(|&v| v == col[0]) {
                return Err(MarketDataError::ConstantColumn(
                    features.column_name(d * n_feat + i),
                ));
            }
        }
    }

    let mut matrix = vec![vec![0.0; n_feat]; n_feat];
    for i in 0..n_feat {
        matrix[i][i] = 1.0;
        for j in i + 1..n_feat {
            let rho = match pooling {
                Pooling::AssetAverage => {
                    let sum: f64 = cols
                        .iter()
                        .map(|c| pearson(&c[i], &c[j]).expect("non-constant columns"))
                        .sum();
                    sum / n_assets as f64
                }
                Pooling::Stacked => {
                    let x: Vec<f64> = cols.iter().flat_map(|c| c[i].iter().copied()).collect();
                    let y: Vec<f64> = cols.iter().flat_map(|c| c[j].iter().copied()).collect();
                    pearson(&x, &y).ok_or_else(|| {
                        MarketDataError::ConstantColumn(features.feature_names()[i].clone())
                    })?
                }
            };
            matrix[i][j] = rho;
            matrix[j][i] = rho;
        }
    }

    let mut report = CorrelationReport {
        feature_names: features.feature_names().to_vec(),
        matrix,
        threshold: DEFAULT_THRESHOLD,
        kept: Vec::new(),
        dropped: Vec::new(),
    };
    let outcome = correlation_filter(&report, DEFAULT_THRESHOLD);
    report.kept = outcome.kept;
    report.dropped = outcome.dropped;
    Ok(report)
}

/// Greedy scan in report order: a feature is dropped iff `|rho| > threshold`
/// with a feature already kept. The first such kept feature is recorded as partner.
pub fn correlation_filter(report: &CorrelationReport, threshold: f64) -> FilterOutcome {
    let mut kept_idx: Vec<usize> = Vec::new();
    let mut dropped = Vec::new();
    for i in 0..report.feature_names.len() {
        match kept_idx
            .iter()
            .find(|&&k| report.matrix[i][k].abs() > threshold)
        {
            Some(&k) => dropped.push(DroppedFeature {
                feature: report.feature_names[i].clone(),
                partner: report.feature_names[k].clone(),
                rho: report.matrix[i][k],
            }),
            None => kept_idx.push(i),
        }
    }
    FilterOutcome {
        kept: kept_idx
            .iter()
            .map(|&i| report.feature_names[i].clone())
            .collect(),
        dropped,
    }
}
