use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, TrialSpec};
use super::pipeline::{FeatureSet, Windows};
use super::HarnessError;
use crate::agents::{CemAgent, HyperparameterSet, PerfMetrics, SelectionMetric};
use crate::market_data::{AlignReport, DroppedFeature, Panel};
use crate::pbo::{histogram_svg, write_logits_csv, PboResult, TrialMatrix, Verdict};
use crate::splits::{GroupPartition, SplitPlan};
use crate::stats::mean;
use crate::trading_env::{write_equity_csv, write_trades_csv, Episode};

pub const NOT_REPRODUCED: &str =
    "Published absolute returns, volatilities and logit-distribution shapes are \
not reproduced here; every figure in this report comes from the supplied data and seeds.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataSummary {
    pub assets: Vec<String>,
    pub rows: usize,
    pub dropped_rows: Vec<(String, usize)>,
    /// `[start, end)` row ranges.
    pub train_rows: [usize; 2],
    pub test_rows: [usize; 2],
    /// First and last timestamp of each period.
    pub train_period: [i64; 2],
    pub test_period: [i64; 2],
    pub warmup: usize,
    pub groups: usize,
    pub group_size: usize,
    pub trial_matrix_rows: usize,
    pub features: Vec<String>,
    pub dropped_features: Vec<DroppedFeature>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub index: usize,
    pub grid_index: usize,
    pub hyperparameters: HyperparameterSet,
    pub seed: u64,
    /// Mean selection metric over every validation episode.
    pub validation_metric: f64,
    pub validation_episodes: usize,
    pub validation_mean_return: f64,
    pub test: Option<PerfMetrics>,
}

impl TrialRecord {
    pub fn new(spec: &TrialSpec, episodes: &[PerfMetrics], metric: SelectionMetric) -> Self {
        let scores: Vec<f64> = episodes.iter().map(|m| metric.of(m)).collect();
        let returns: Vec<f64> = episodes.iter().map(|m| m.cumulative_return).collect();
        Self {
            index: spec.index,
            grid_index: spec.grid_index,
            hyperparameters: spec.hyperparameters,
            seed: spec.seed,
            validation_metric: mean(&scores),
            validation_episodes: episodes.len(),
            validation_mean_return: mean(&returns),
            test: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FamilyPbo {
    pub family: String,
    pub trial_ids: Vec<String>,
    pub result: PboResult,
    #[serde(skip)]
    pub matrix: Option<TrialMatrix>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BacktestRecord {
    pub strategy: String,
    pub risk_control: bool,
    pub metrics: PerfMetrics,
    pub initial_value: f64,
    pub final_value: f64,
    pub total_fees: f64,
    pub n_trades: usize,
    #[serde(skip)]
    pub episode: Episode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub not_reproduced: String,
    /// The config as run; the output directory is left out.
    pub config: ExperimentConfig,
    pub config_hash: String,
    pub split_plan: SplitPlan,
    pub data: Option<DataSummary>,
    pub trials: Vec<TrialRecord>,
    pub selected_trial: Option<usize>,
    pub pbo: Vec<FamilyPbo>,
    pub backtests: Vec<BacktestRecord>,
    pub files: Vec<String>,
    /// The retrained winner, written next to the report for replay.
    #[serde(skip)]
    pub selected_agent: Option<CemAgent>,
    /// SHA-256 of this report serialised with an empty `content_hash`.
    pub content_hash: String,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn content_hash(report: &ExperimentReport) -> String {
    let blank = ExperimentReport {
        content_hash: String::new(),
        ..report.clone()
    };
    sha256_hex(&serde_json::to_vec(&blank).expect("reports always serialize"))
}

impl ExperimentReport {
    pub fn new(config: ExperimentConfig, split_plan: SplitPlan) -> Self {
        let config_hash =
            sha256_hex(&serde_json::to_vec(&config).expect("configs always serialize"));
        Self {
            not_reproduced: NOT_REPRODUCED.to_string(),
            config,
            config_hash,
            split_plan,
            data: None,
            trials: Vec::new(),
            selected_trial: None,
            pbo: Vec::new(),
            backtests: Vec::new(),
            files: Vec::new(),
            selected_agent: None,
            content_hash: String::new(),
        }
    }

    pub(crate) fn set_data(
        &mut self,
        panel: &Panel,
        align: &AlignReport,
        windows: &Windows,
        first: usize,
        partition: &GroupPartition,
        features: &FeatureSet,
    ) {
        let ts = panel.timestamps();
        self.data = Some(DataSummary {
            assets: panel.assets().to_vec(),
            rows: panel.len(),
            dropped_rows: align.dropped.clone(),
            train_rows: [first, windows.train.end],
            test_rows: [windows.test.start, windows.test.end],
            train_period: [ts[first], ts[windows.train.end - 1]],
            test_period: [ts[windows.test.start], ts[windows.test.end - 1]],
            warmup: features.train.warmup(),
            groups: partition.n,
            group_size: partition.group_size,
            trial_matrix_rows: partition.n * partition.group_size,
            features: features.names.clone(),
            dropped_features: features.dropped.clone(),
        });
    }

    /// Verdict of the first gated family.
    pub fn verdict(&self) -> Option<Verdict> {
        self.pbo.first().map(|f| f.result.verdict)
    }

    /// True when any family is rejected.
    pub fn any_rejected(&self) -> bool {
        self.pbo.iter().any(|f| f.result.verdict == Verdict::Reject)
    }

    /// Names of every artifact [`emit_report`] writes besides the manifest.
    pub fn planned_files(&self) -> Vec<String> {
        let mut files = vec!["report.json".to_string()];
        if !self.pbo.is_empty() {
            files.push("logits.csv".into());
            files.push("logit_hist.svg".into());
        }
        for f in &self.pbo {
            files.push(format!("trial_matrix_{}.csv", f.family));
        }
        if self.selected_agent.is_some() {
            files.push("agent_cem_selected.json".into());
        }
        for b in &self.backtests {
            files.push(format!("equity_{}.csv", b.strategy));
            files.push(format!("trades_{}.csv", b.strategy));
        }
        files
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("reports always serialize")
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Data(e.to_string()))
    }

    /// Plain-text table: one row per backtested strategy and gated family.
    pub fn summary(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<16} {:>12} {:>12} {:>10}\n",
            "strategy", "cum. return", "volatility", "sharpe"
        ));
        for b in &self.backtests {
            out.push_str(&format!(
                "{:<16} {:>11.3}% {:>11.5}% {:>10.4}\n",
                b.strategy,
                100.0 * b.metrics.cumulative_return,
                100.0 * b.metrics.volatility,
                b.metrics.sharpe
            ));
        }
        for f in &self.pbo {
            out.push_str(&format!(
                "pbo[{}]: p = {:.4} over {} combinations, alpha = {}, {}\n",
                f.family, f.result.p, f.result.combination_count, f.result.alpha, f.result.verdict
            ));
        }
        if let Some(i) = self.selected_trial {
            out.push_str(&format!("selected trial: {i}\n"));
        }
        out.push_str(&format!("content hash: {}\n", self.content_hash));
        out
    }
}

/// One written artifact.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub file: String,
    pub bytes: usize,
    pub sha256: String,
}

fn io(path: &Path, e: impl std::fmt::Display) -> HarnessError {
    HarnessError::Io(format!("{}: {e}", path.display()))
}

/// Writes every artifact of `report` into `dir` plus a `manifest.json`
/// hashing each of them.
pub fn emit_report(
    report: &ExperimentReport,
    dir: &Path,
) -> Result<Vec<ManifestEntry>, HarnessError> {
    if let Some(f) = report.pbo.iter().find(|f| f.result.lambdas.is_empty()) {
        return Err(HarnessError::Internal(format!(
            "family {} has no logits; only freshly computed reports can be emitted",
            f.family
        )));
    }
    fs::create_dir_all(dir).map_err(|e| io(dir, e))?;
    let mut written: Vec<(String, Vec<u8>)> = Vec::new();
    written.push(("report.json".into(), report.to_json().into_bytes()));
    if !report.pbo.is_empty() {
        let families: Vec<(&str, &PboResult)> = report
            .pbo
            .iter()
            .map(|f| (f.family.as_str(), &f.result))
            .collect();
        let mut buf = Vec::new();
        write_logits_csv(&mut buf, &families)?;
        written.push(("logits.csv".into(), buf));
        written.push((
            "logit_hist.svg".into(),
            histogram_svg(&families).into_bytes(),
        ));
    }
    for f in &report.pbo {
        let mut buf = Vec::new();
        if let Some(m) = &f.matrix {
            m.write_csv(&mut buf)?;
        }
        written.push((format!("trial_matrix_{}.csv", f.family), buf));
    }
    if let Some(agent) = &report.selected_agent {
        written.push((
            "agent_cem_selected.json".into(),
            agent.to_json().into_bytes(),
        ));
    }
    for b in &report.backtests {
        let mut buf = Vec::new();
        write_equity_csv(&mut buf, &b.episode.timestamps, &b.episode.equity)?;
        written.push((format!("equity_{}.csv", b.strategy), buf));
        let mut buf = Vec::new();
        write_trades_csv(&mut buf, &b.episode.trades)?;
        written.push((format!("trades_{}.csv", b.strategy), buf));
    }

    let mut manifest = Vec::with_capacity(written.len());
    for (name, bytes) in &written {
        let path = dir.join(name);
        fs::write(&path, bytes).map_err(|e| io(&path, e))?;
        manifest.push(ManifestEntry {
            file: name.clone(),
            bytes: bytes.len(),
            sha256: sha256_hex(bytes),
        });
    }
    manifest.sort_by(|a, b| a.file.cmp(&b.file));
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifests always serialize");
    fs::write(&path, text).map_err(|e| io(&path, e))?;
    Ok(manifest)
}
