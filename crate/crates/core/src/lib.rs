//! Backtest-overfitting detection for trading strategies.
//!
//! The crate is organised bottom-up:
//!
//! - [`market_data`]: OHLCV ingestion, timestamp alignment, technical
//!   indicators and the correlation-based feature filter.
//! - [`trading_env`]: a market-replay environment with fee-aware,
//!   sell-then-buy execution and a volatility-index circuit breaker.
//! - [`splits`]: walk-forward, K-fold and combinatorial split plans.
//! - [`agents`]: the policy interface, benchmark strategies, a
//!   cross-entropy-method agent and performance metrics.
//! - [`pbo`]: the trial-return matrix, IS/OOS combination logits, the
//!   probability of backtest overfitting and the accept/reject gate.
//! - [`harness`]: end-to-end experiments driven by a single config file.

pub mod agents;
pub mod harness;
pub mod market_data;
pub mod pbo;
pub mod splits;
pub mod stats;
pub mod synthetic;
pub mod trading_env;

pub use agents::{AgentError, PerfMetrics, Policy};
pub use market_data::{Bar, FeatureMatrix, MarketDataError, Panel};
pub use pbo::{PboError, PboResult, TrialMatrix, Verdict};
pub use splits::{SplitError, SplitPlan};
pub use trading_env::{EnvConfig, EnvError, MarketState, TradingEnv};
