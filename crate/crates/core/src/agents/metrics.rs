use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{AgentError, Policy};
use crate::stats::{mean, std_pop};
use crate::trading_env::{run_episode, Episode, TradingEnv};

/// Cumulative return, volatility and per-bar Sharpe of an equity curve.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PerfMetrics {
    pub cumulative_return: f64,
    /// Population standard deviation of simple per-bar returns.
    pub volatility: f64,
    /// Mean over standard deviation of simple returns, not annualised;
    /// 0 when the returns have no variance.
    pub sharpe: f64,
}

/// `(v_t - v_{t-1}) / v_{t-1}` for consecutive equity values.
pub fn simple_returns(equity: &[f64]) -> Vec<f64> {
    equity.windows(2).map(|w| (w[1] - w[0]) / w[0]).collect()
}

impl PerfMetrics {
    pub fn from_equity(equity: &[f64]) -> Self {
        let (Some(&first), Some(&last)) = (equity.first(), equity.last()) else {
            return PerfMetrics {
                cumulative_return: 0.0,
                volatility: 0.0,
                sharpe: 0.0,
            };
        };
        let r = simple_returns(equity);
        let volatility = std_pop(&r);
        let sharpe = if volatility > 0.0 {
            mean(&r) / volatility
        } else {
            0.0
        };
        PerfMetrics {
            cumulative_return: (last - first) / first,
            volatility,
            sharpe,
        }
    }
}

/// Which per-episode number ranks trials.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SelectionMetric {
    #[default]
    Sharpe,
    CumulativeReturn,
}

impl SelectionMetric {
    pub fn of(&self, m: &PerfMetrics) -> f64 {
        match self {
            SelectionMetric::Sharpe => m.sharpe,
            SelectionMetric::CumulativeReturn => m.cumulative_return,
        }
    }
}

/// An evaluated validation window.
#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub episode: Episode,
    /// `R_t = v_t - v_{t-1}` in currency units.
    pub returns: Vec<f64>,
    pub metrics: PerfMetrics,
}

/// Replays `window` with `policy` and summarises it.
pub fn evaluate(
    policy: &mut dyn Policy,
    env: &TradingEnv<'_>,
    window: Range<usize>,
) -> Result<Evaluation, AgentError> {
    if window.len() < 2 {
        return Err(AgentError::EmptyWindow);
    }
    let episode = run_episode(env, policy, window)?;
    let returns: Vec<f64> = episode.equity.windows(2).map(|w| w[1] - w[0]).collect();
    let metrics = PerfMetrics::from_equity(&episode.equity);
    Ok(Evaluation {
        episode,
        returns,
        metrics,
    })
}
