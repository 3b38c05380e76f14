//! End-to-end experiments: sample hyperparameter trials, train and
//! validate them on every split, gate the resulting trial matrix, retrain
//! the winner and backtest it against benchmarks on the test window.
//!
//! Work runs on a pool of `jobs` threads; every reduction happens in trial
//! and split index order, so the report does not depend on `jobs`.

mod config;
mod dataset;
mod pipeline;
mod report;

pub use config::{
    sample_trials, AssetSource, DataConfig, ExperimentConfig, FeatureConfig, Sampler, SplitConfig,
    TrialConfig, TrialSpec, WindowConfig, RECOMMENDED_MIN_TRIALS,
};
pub use dataset::write_synthetic_dataset;
pub use pipeline::{
    backtest_record, load_panel, load_value_series, resolve_windows, retrain_and_test,
    run_experiment, select_features, select_trial, FeatureSet, MarketContext, Windows,
};
pub use report::{
    content_hash, emit_report, BacktestRecord, DataSummary, ExperimentReport, FamilyPbo,
    ManifestEntry, TrialRecord, NOT_REPRODUCED,
};

use crate::agents::AgentError;
use crate::market_data::MarketDataError;
use crate::pbo::PboError;
use crate::splits::SplitError;
use crate::trading_env::EnvError;

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("config error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error(transparent)]
    MarketData(#[from] MarketDataError),
    #[error(transparent)]
    Split(#[from] SplitError),
    #[error(transparent)]
    Env(#[from] EnvError),
    #[error(transparent)]
    Agent(#[from] AgentError),
    #[error(transparent)]
    Pbo(#[from] PboError),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("internal error: {0}")]
    Internal(String),
    #[error("{context}: {source}")]
    Context {
        context: String,
        #[source]
        source: Box<HarnessError>,
    },
}

impl HarnessError {
    pub fn context(context: impl Into<String>, source: impl Into<HarnessError>) -> Self {
        HarnessError::Context {
            context: context.into(),
            source: Box::new(source.into()),
        }
    }

    /// True for problems with the experiment definition rather than the data.
    pub fn is_config(&self) -> bool {
        match self {
            HarnessError::Config(_) | HarnessError::Split(_) => true,
            HarnessError::Agent(AgentError::Hyperparameter(_) | AgentError::Config(_)) => true,
            HarnessError::Env(EnvError::Config(_)) => true,
            HarnessError::Pbo(PboError::OddS(_) | PboError::SmallS(_) | PboError::BadAlpha(_)) => {
                true
            }
            HarnessError::Context { source, .. } => source.is_config(),
            _ => false,
        }
    }
}
