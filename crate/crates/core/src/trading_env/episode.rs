use std::io::Write;
use std::ops::Range;

use serde::{Deserialize, Serialize};

use super::{EnvError, TradingEnv};
use crate::agents::Policy;

/// One executed fill.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TradeRecord {
    pub timestamp: i64,
    pub asset: String,
    /// Signed units: positive bought, negative sold.
    pub qty: f64,
    pub price: f64,
    pub fee: f64,
}

/// Outcome of replaying one window with one policy.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Episode {
    /// Timestamps of the equity curve.
    pub timestamps: Vec<i64>,
    /// `v_t` for every row of the window.
    pub equity: Vec<f64>,
    /// Per-step rewards `v_t - v_{t-1}`; one shorter than `equity`.
    pub returns: Vec<f64>,
    pub trades: Vec<TradeRecord>,
    pub total_fees: f64,
    /// `sum_t p_t·|a_exec,t|`
    pub traded_notional: f64,
}

impl Episode {
    pub fn initial_value(&self) -> f64 {
        self.equity.first().copied().unwrap_or(0.0)
    }

    pub fn final_value(&self) -> f64 {
        self.equity.last().copied().unwrap_or(0.0)
    }
}

/// Replays `window` from a fresh reset, asking `policy` for an action at every non-terminal state.
pub fn run_episode(
    env: &TradingEnv<'_>,
    policy: &mut dyn Policy,
    window: Range<usize>,
) -> Result<Episode, EnvError> {
    let timestamps = env.panel().timestamps();
    let assets = env.panel().assets();
    let mut state = env.reset(window.clone())?;
    policy.reset();

    let mut ep = Episode {
        timestamps: vec![timestamps[state.t]],
        equity: vec![state.portfolio_value()],
        ..Episode::default()
    };
    while !state.is_terminal() {
        let action = policy.act(&state)?;
        let result = env.step(&state, &action)?;
        for (i, &q) in result.executed_action.iter().enumerate() {
            if q != 0.0 {
                let price = state.prices[i];
                ep.trades.push(TradeRecord {
                    timestamp: timestamps[state.t],
                    asset: assets[i].clone(),
                    qty: q,
                    price,
                    fee: env.config().fee_rate * price * q.abs(),
                });
                ep.traded_notional += price * q.abs();
            }
        }
        ep.total_fees += result.fee_paid;
        ep.returns.push(result.reward);
        state = result.next_state;
        ep.timestamps.push(timestamps[state.t]);
        ep.equity.push(state.portfolio_value());
    }
    Ok(ep)
}

/// `timestamp,value` CSV of an equity curve.
pub fn write_equity_csv<W: Write>(
    writer: W,
    timestamps: &[i64],
    equity: &[f64],
) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| EnvError::Io(e.to_string());
    w.write_record(["timestamp", "value"]).map_err(io)?;
    for (t, v) in timestamps.iter().zip(equity) {
        w.write_record([t.to_string(), v.to_string()]).map_err(io)?;
    }
    w.flush().map_err(|e| EnvError::Io(e.to_string()))
}

/// `timestamp,asset,qty,price,fee` CSV of a trade log.
pub fn write_trades_csv<W: Write>(writer: W, trades: &[TradeRecord]) -> Result<(), EnvError> {
    let mut w = csv::Writer::from_writer(writer);
    let io = |e: csv::Error| EnvError::Io(e.to_string());
    w.write_record(["timestamp", "asset", "qty", "price", "fee"])
        .map_err(io)?;
    for t in trades {
        w.write_record([
            t.timestamp.to_string(),
            t.asset.clone(),
            t.qty.to_string(),
            t.price.to_string(),
            t.fee.to_string(),
        ])
        .map_err(io)?;
    }
    w.flush().map_err(|e| EnvError::Io(e.to_string()))
}
