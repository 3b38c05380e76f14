//! Stateless-ish benchmark strategies.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{AgentError, Policy};
use crate::trading_env::{ActionVector, MarketState};

/// Never trades.
#[derive(Debug, Clone, Default)]
pub struct DoNothing;

impl Policy for DoNothing {
    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        Ok(ActionVector::zeros(state.n_assets()))
    }
}

/// Units of asset `price` that `budget` buys once the fee is paid.
fn units_for(budget: f64, price: f64, fee_rate: f64) -> f64 {
    budget / (price * (1.0 + fee_rate))
}

/// Splits the starting cash equally across all assets at the first step, then holds.
#[derive(Debug, Clone)]
pub struct EqualWeight {
    fee_rate: f64,
    invested: bool,
}

impl EqualWeight {
    pub fn new(fee_rate: f64) -> Self {
        Self {
            fee_rate,
            invested: false,
        }
    }
}

impl Policy for EqualWeight {
    fn reset(&mut self) {
        self.invested = false;
    }

    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        if self.invested {
            return Ok(ActionVector::zeros(state.n_assets()));
        }
        self.invested = true;
        let budget = state.cash / state.n_assets() as f64;
        Ok(state
            .prices
            .iter()
            .map(|&p| units_for(budget, p, self.fee_rate))
            .collect::<Vec<_>>()
            .into())
    }
}

/// Puts all cash into one asset at the first step, then holds.
#[derive(Debug, Clone)]
pub struct BuyHold {
    asset: usize,
    fee_rate: f64,
    invested: bool,
}

impl BuyHold {
    pub fn new(asset: usize, fee_rate: f64) -> Self {
        Self {
            asset,
            fee_rate,
            invested: false,
        }
    }
}

impl Policy for BuyHold {
    fn reset(&mut self) {
        self.invested = false;
    }

    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        let mut a = vec![0.0; state.n_assets()];
        if self.asset >= a.len() {
            return Err(AgentError::Config(format!(
                "asset index {} out of range",
                self.asset
            )));
        }
        if !self.invested {
            self.invested = true;
            a[self.asset] = units_for(state.cash, state.prices[self.asset], self.fee_rate);
        }
        Ok(a.into())
    }
}

/// Holds, in equal weights, the assets whose price rose over the last
/// `lookback` bars; re-balances every `lookback` bars.
#[derive(Debug, Clone)]
pub struct Momentum {
    lookback: usize,
    fee_rate: f64,
    history: Vec<Vec<f64>>,
}

impl Momentum {
    pub fn new(lookback: usize, fee_rate: f64) -> Self {
        Self {
            lookback: lookback.max(1),
            fee_rate,
            history: Vec::new(),
        }
    }
}

impl Policy for Momentum {
    fn reset(&mut self) {
        self.history.clear();
    }

    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        self.history.push(state.prices.clone());
        let n = state.n_assets();
        let steps = self.history.len() - 1;
        if steps < self.lookback || steps % self.lookback != 0 {
            return Ok(ActionVector::zeros(n));
        }
        let past = &self.history[steps - self.lookback];
        let winners: Vec<bool> = (0..n).map(|i| state.prices[i] > past[i]).collect();
        let count = winners.iter().filter(|&&w| w).count();
        let value = state.portfolio_value();
        let target_value = if count == 0 {
            0.0
        } else {
            value / count as f64
        };
        let a = (0..n)
            .map(|i| {
                let target = if winners[i] {
                    units_for(target_value, state.prices[i], self.fee_rate)
                } else {
                    0.0
                };
                target - state.holdings[i]
            })
            .collect::<Vec<_>>();
        Ok(a.into())
    }
}

/// Uniformly random trades from a fixed seed; reproducible per episode.
#[derive(Debug, Clone)]
pub struct RandomAgent {
    seed: u64,
    fee_rate: f64,
    rng: ChaCha8Rng,
}

impl RandomAgent {
    pub fn new(seed: u64, fee_rate: f64) -> Self {
        Self {
            seed,
            fee_rate,
            rng: ChaCha8Rng::seed_from_u64(seed),
        }
    }
}

impl Policy for RandomAgent {
    fn reset(&mut self) {
        self.rng = ChaCha8Rng::seed_from_u64(self.seed);
    }

    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        let n = state.n_assets();
        let a = (0..n)
            .map(|i| {
                let u: f64 = self.rng.random_range(-1.0..1.0);
                if u >= 0.0 {
                    u * units_for(state.cash / n as f64, state.prices[i], self.fee_rate)
                } else {
                    u * state.holdings[i]
                }
            })
            .collect::<Vec<_>>();
        Ok(a.into())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn state(cash: f64, prices: Vec<f64>) -> MarketState {
        let n = prices.len();
        MarketState {
            t: 0,
            window_end: 10,
            cash,
            holdings: vec![0.0; n],
            prices,
            features: vec![],
            risk_halt: false,
        }
    }

    #[test]
    fn equal_weight_first_step_units() {
        let mut ew = EqualWeight::new(0.003);
        let a = ew.act(&state(1000.0, vec![10.0, 20.0])).unwrap();
        // 500 / (10 * 1.003) and 500 / (20 * 1.003)
        assert!((a.0[0] - 49.850_448_654_037_89).abs() < 1e-9);
        assert!((a.0[1] - 24.925_224_327_018_94).abs() < 1e-9);
        assert_eq!(
            ew.act(&state(0.0, vec![10.0, 20.0])).unwrap().0,
            vec![0.0, 0.0]
        );
        ew.reset();
        assert!(ew.act(&state(1000.0, vec![10.0, 20.0])).unwrap().0[0] > 0.0);
    }

    #[test]
    fn buy_hold_trades_once() {
        let mut bh = BuyHold::new(0, 0.0);
        assert_eq!(bh.act(&state(1000.0, vec![100.0])).unwrap().0, vec![10.0]);
        for _ in 0..5 {
            assert_eq!(bh.act(&state(0.0, vec![110.0])).unwrap().0, vec![0.0]);
        }
    }

    #[test]
    fn random_is_reproducible() {
        let s = state(1000.0, vec![10.0, 20.0, 30.0]);
        let mut a = RandomAgent::new(42, 0.003);
        let first: Vec<_> = (0..20).map(|_| a.act(&s).unwrap()).collect();
        a.reset();
        let second: Vec<_> = (0..20).map(|_| a.act(&s).unwrap()).collect();
        assert_eq!(first, second);
        let mut b = RandomAgent::new(42, 0.003);
        let third: Vec<_> = (0..20).map(|_| b.act(&s).unwrap()).collect();
        assert_eq!(first, third);
    }

    #[test]
    fn momentum_buys_only_risers() {
        let mut m = Momentum::new(2, 0.0);
        m.act(&state(100.0, vec![10.0, 10.0])).unwrap();
        m.act(&state(100.0, vec![11.0, 9.0])).unwrap();
        let a = m.act(&state(100.0, vec![12.0, 8.0])).unwrap();
        assert!((a.0[0] - 100.0 / 12.0).abs() < 1e-12);
        assert_eq!(a.0[1], 0.0);
    }
}
