//! Market-replay trading environment.
//!
//! A step executes sells before buys at the current close, charges a
//! proportional fee on every traded notional, skips buys that cash cannot
//! cover (fee included), and rewards the change in portfolio value
//! `v = b + p·h` between consecutive closes. When a volatility-index series
//! is attached and exceeds its threshold, the environment liquidates and
//! refuses buys until the index falls back to or below the threshold.

mod env;
mod episode;
mod state;

use serde::{Deserialize, Serialize};

pub use env::{risk_control, TradingEnv};
pub use episode::{run_episode, write_equity_csv, write_trades_csv, Episode, TradeRecord};
pub use state::{ActionVector, MarketState, StepResult};

use crate::agents::AgentError;

/// Default proportional transaction fee.
pub const DEFAULT_FEE_RATE: f64 = 0.003;
/// Default volatility-index halt threshold.
pub const DEFAULT_CVIX_THRESHOLD: f64 = 90.1;

/// How buys are filled when cash cannot cover all of them.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BuyFill {
    /// Ascending asset index; an unaffordable order is skipped whole.
    #[default]
    SkipWhole,
    /// All buy orders scaled by the same factor so the total fits the cash.
    ProRata,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EnvConfig {
    pub initial_cash: f64,
    pub fee_rate: f64,
    pub cvix_threshold: f64,
    /// Per-step cap on `|a_i|` in units; `None` disables the clamp.
    pub max_position_per_step: Option<f64>,
    pub buy_fill: BuyFill,
}

impl Default for EnvConfig {
    fn default() -> Self {
        Self {
            initial_cash: 1_000_000.0,
            fee_rate: DEFAULT_FEE_RATE,
            cvix_threshold: DEFAULT_CVIX_THRESHOLD,
            max_position_per_step: None,
            buy_fill: BuyFill::SkipWhole,
        }
    }
}

impl EnvConfig {
    pub fn validate(&self) -> Result<(), EnvError> {
        if !(self.initial_cash.is_finite() && self.initial_cash > 0.0) {
            return Err(EnvError::Config(format!(
                "initial_cash must be > 0, got {}",
                self.initial_cash
            )));
        }
        if !(0.0..1.0).contains(&self.fee_rate) {
            return Err(EnvError::Config(format!(
                "fee_rate must be in [0, 1), got {}",
                self.fee_rate
            )));
        }
        if let Some(m) = self.max_position_per_step {
            if !(m.is_finite() && m > 0.0) {
                return Err(EnvError::Config(format!(
                    "max_position_per_step must be > 0, got {m}"
                )));
            }
        }
        if !self.cvix_threshold.is_finite() {
            return Err(EnvError::Config("cvix_threshold must be finite".into()));
        }
        Ok(())
    }
}

#[derive(Debug, thiserror::Error)]
pub enum EnvError {
    #[error("invalid environment config: {0}")]
    Config(String),
    #[error("panel and feature matrix disagree: {0}")]
    Mismatch(String),
    #[error("window [{start}, {end}) is outside the usable rows [{min}, {max})")]
    WindowOutOfBounds {
        start: usize,
        end: usize,
        min: usize,
        max: usize,
    },
    #[error("window [{start}, {end}) is shorter than 2 steps")]
    WindowTooShort { start: usize, end: usize },
    #[error("state at t={0} is terminal")]
    Terminal(usize),
    #[error("action has {got} entries, expected {expected}")]
    ActionShape { got: usize, expected: usize },
    #[error("action entry {index} is not finite")]
    NonFiniteAction { index: usize },
    #[error("no CVIX value at timestamp {timestamp}")]
    MissingCvix { timestamp: i64 },
    #[error("policy failed: {0}")]
    Policy(Box<AgentError>),
    #[error("I/O error: {0}")]
    Io(String),
}

impl From<AgentError> for EnvError {
    fn from(e: AgentError) -> Self {
        EnvError::Policy(Box::new(e))
    }
}
