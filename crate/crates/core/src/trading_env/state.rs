use serde::{Deserialize, Serialize};

/// MDP state `s_t = [b_t, h_t, p_t, f_t]` plus bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarketState {
    /// Panel row index.
    pub t: usize,
    /// Exclusive end of the episode window.
    pub window_end: usize,
    pub cash: f64,
    /// Units held per asset.
    pub holdings: Vec<f64>,
    /// Close prices at `t`.
    pub prices: Vec<f64>,
    /// Flattened `I * D` feature block at `t`.
    pub features: Vec<f64>,
    /// Circuit breaker active at `t`.
    pub risk_halt: bool,
}

impl MarketState {
    /// Portfolio value `b + p·h`.
    pub fn portfolio_value(&self) -> f64 {
        self.cash
            + self
                .prices
                .iter()
                .zip(&self.holdings)
                .map(|(p, h)| p * h)
                .sum::<f64>()
    }

    /// `true` once no further step is possible.
    pub fn is_terminal(&self) -> bool {
        self.t + 1 >= self.window_end
    }

    pub fn n_assets(&self) -> usize {
        self.prices.len()
    }

    /// `[b, h, p, f]`, length `1 + (I + 2) * D`.
    pub fn flatten(&self) -> Vec<f64> {
        let mut v =
            Vec::with_capacity(1 + self.holdings.len() + self.prices.len() + self.features.len());
        v.push(self.cash);
        v.extend_from_slice(&self.holdings);
        v.extend_from_slice(&self.prices);
        v.extend_from_slice(&self.features);
        v
    }
}

/// Units to trade per asset: positive buys, negative sells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionVector(pub Vec<f64>);

impl ActionVector {
    pub fn zeros(n: usize) -> Self {
        ActionVector(vec![0.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }
}

impl From<Vec<f64>> for ActionVector {
    fn from(v: Vec<f64>) -> Self {
        ActionVector(v)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub next_state: MarketState,
    /// `v_{t+1} - v_t`.
    pub reward: f64,
    /// The trade actually executed after clipping and affordability checks.
    pub executed_action: Vec<f64>,
    pub fee_paid: f64,
    pub done: bool,
}
