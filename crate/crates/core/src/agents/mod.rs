//! Strategy interface, benchmark strategies, the trainable CEM agent,
//! performance metrics and the import path for externally trained trials.

mod baseline;
pub mod cem;
mod external;
mod hyper;
mod metrics;

use serde::{Deserialize, Serialize};

pub use baseline::{BuyHold, DoNothing, EqualWeight, Momentum, RandomAgent};
pub use cem::{train, CemAgent, CemModel, CemScale};
pub use external::{import_external_trials, read_external_trials};
pub use hyper::{HyperparameterGrid, HyperparameterSet};
pub use metrics::{evaluate, simple_returns, Evaluation, PerfMetrics, SelectionMetric};

use crate::trading_env::{ActionVector, EnvError, MarketState};

#[derive(Debug, thiserror::Error)]
pub enum AgentError {
    #[error("agent has not been trained")]
    Untrained,
    #[error("evaluation window needs at least 2 bars")]
    EmptyWindow,
    #[error("no training range is long enough for a rollout")]
    DegenerateWindow,
    #[error("invalid agent config: {0}")]
    Config(String),
    #[error("invalid hyperparameters: {0}")]
    Hyperparameter(String),
    #[error(transparent)]
    Env(Box<EnvError>),
    #[error("I/O error: {0}")]
    Io(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("trial {trial} has no return for split {split} at timestamp {timestamp}")]
    RaggedCoverage {
        trial: String,
        split: u64,
        timestamp: i64,
    },
    #[error("row {row}: duplicate cell (trial {trial}, split {split}, timestamp {timestamp})")]
    DuplicateCell {
        row: usize,
        trial: String,
        split: u64,
        timestamp: i64,
    },
}

impl From<EnvError> for AgentError {
    fn from(e: EnvError) -> Self {
        match e {
            EnvError::Policy(inner) => *inner,
            other => AgentError::Env(Box::new(other)),
        }
    }
}

/// A trading strategy.
pub trait Policy {
    /// Clears per-episode state; called before every episode.
    fn reset(&mut self) {}

    /// Units to trade per asset at `state`; positive buys, negative sells.
    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError>;
}

/// Which strategy an [`AgentSpec`] builds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "kind")]
pub enum AgentKind {
    EqualWeight,
    BuyHold {
        asset: usize,
    },
    Momentum {
        lookback: usize,
    },
    Random,
    CemPolicy {
        hyperparameters: HyperparameterSet,
    },
    /// Returns trained elsewhere; no parameters live here.
    External {
        path: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentSpec {
    #[serde(flatten)]
    pub kind: AgentKind,
    #[serde(default)]
    pub seed: u64,
}

impl AgentSpec {
    /// Builds a strategy that needs no training.
    ///
    /// CEM agents come back untrained; external trials have no policy.
    pub fn build(
        &self,
        fee_rate: f64,
        scale: CemScale,
    ) -> Result<Box<dyn Policy + Send>, AgentError> {
        Ok(match &self.kind {
            AgentKind::EqualWeight => Box::new(EqualWeight::new(fee_rate)),
            AgentKind::BuyHold { asset } => Box::new(BuyHold::new(*asset, fee_rate)),
            AgentKind::Momentum { lookback } => Box::new(Momentum::new(*lookback, fee_rate)),
            AgentKind::Random => Box::new(RandomAgent::new(self.seed, fee_rate)),
            AgentKind::CemPolicy { hyperparameters } => {
                Box::new(CemAgent::untrained(*hyperparameters, scale, self.seed))
            }
            AgentKind::External { path } => {
                return Err(AgentError::Config(format!(
                    "external trials at {path} cannot act"
                )))
            }
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trips_through_json() {
        let spec = AgentSpec {
            kind: AgentKind::Momentum { lookback: 5 },
            seed: 3,
        };
        let json = serde_json::to_string(&spec).unwrap();
        assert_eq!(json, r#"{"kind":"MOMENTUM","lookback":5,"seed":3}"#);
        assert_eq!(serde_json::from_str::<AgentSpec>(&json).unwrap(), spec);
    }

    #[test]
    fn external_spec_cannot_build_a_policy() {
        let spec = AgentSpec {
            kind: AgentKind::External {
                path: "x.csv".into(),
            },
            seed: 0,
        };
        assert!(matches!(
            spec.build(0.0, CemScale::default()),
            Err(AgentError::Config(_))
        ));
    }
}
