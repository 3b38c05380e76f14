use std::ops::Range;

use super::state::{ActionVector, MarketState, StepResult};
use super::{BuyFill, EnvConfig, EnvError};
use crate::market_data::{FeatureMatrix, MarketDataError, Panel, ValueSeries};

/// Relative slack on the affordability check so that "spend all cash"
/// orders computed by the caller survive floating-point rounding.
const AFFORD_EPS: f64 = 1e-12;

/// Sets `state.risk_halt` from the index value and returns it.
///
/// The halt is active while `cvix_value > threshold`; it clears as soon as
/// the value is back at or under the threshold.
pub fn risk_control(state: &mut MarketState, cvix_value: f64, threshold: f64) -> bool {
    state.risk_halt = cvix_value > threshold;
    state.risk_halt
}

/// Replays a [`Panel`] as an episodic MDP. Stateless between calls: the
/// episode lives entirely in the [`MarketState`] values passed around.
#[derive(Debug, Clone)]
pub struct TradingEnv<'a> {
    panel: &'a Panel,
    features: &'a FeatureMatrix,
    config: EnvConfig,
    cvix: Option<Vec<Option<f64>>>,
}

impl<'a> TradingEnv<'a> {
    pub fn new(
        panel: &'a Panel,
        features: &'a FeatureMatrix,
        config: EnvConfig,
    ) -> Result<Self, EnvError> {
        config.validate()?;
        if features.timestamps() != panel.timestamps() {
            return Err(EnvError::Mismatch("timestamps differ".into()));
        }
        if features.assets() != panel.assets() {
            return Err(EnvError::Mismatch("asset lists differ".into()));
        }
        Ok(Self {
            panel,
            features,
            config,
            cvix: None,
        })
    }

    /// Attaches a volatility-index series; timestamps it lacks become
    /// errors only if an episode visits them.
    pub fn with_cvix(mut self, series: &ValueSeries) -> Self {
        let aligned = self
            .panel
            .timestamps()
            .iter()
            .map(|t| {
                series
                    .aligned_to(std::slice::from_ref(t))
                    .ok()
                    .map(|v| v[0])
            })
            .collect();
        self.cvix = Some(aligned);
        self
    }

    /// Attaches a volatility-index series that must cover every panel row.
    pub fn with_cvix_values(mut self, values: Vec<f64>) -> Result<Self, EnvError> {
        if values.len() != self.panel.len() {
            return Err(EnvError::Mismatch(format!(
                "{} CVIX values for {} panel rows",
                values.len(),
                self.panel.len()
            )));
        }
        self.cvix = Some(values.into_iter().map(Some).collect());
        Ok(self)
    }

    pub fn config(&self) -> &EnvConfig {
        &self.config
    }

    pub fn panel(&self) -> &Panel {
        self.panel
    }

    pub fn features(&self) -> &FeatureMatrix {
        self.features
    }

    pub fn n_assets(&self) -> usize {
        self.panel.n_assets()
    }

    /// Length of the flattened state, `1 + (I + 2) * D`.
    pub fn state_len(&self) -> usize {
        1 + (self.features.n_features() + 2) * self.panel.n_assets()
    }

    /// First row an episode may start at.
    pub fn first_usable_row(&self) -> usize {
        self.features.warmup()
    }

    /// `s_0` of an episode over `window`: initial cash, no holdings.
    pub fn reset(&self, window: Range<usize>) -> Result<MarketState, EnvError> {
        let (min, max) = (self.features.warmup(), self.panel.len());
        if window.start < min || window.end > max || window.start >= window.end {
            return Err(EnvError::WindowOutOfBounds {
                start: window.start,
                end: window.end,
                min,
                max,
            });
        }
        if window.end - window.start < 2 {
            return Err(EnvError::WindowTooShort {
                start: window.start,
                end: window.end,
            });
        }
        self.observe(
            window.start,
            window.end,
            self.config.initial_cash,
            vec![0.0; self.n_assets()],
        )
    }

    fn observe(
        &self,
        t: usize,
        window_end: usize,
        cash: f64,
        holdings: Vec<f64>,
    ) -> Result<MarketState, EnvError> {
        let mut state = MarketState {
            t,
            window_end,
            cash,
            holdings,
            prices: self.panel.closes_at(t),
            features: self.features.row(t).to_vec(),
            risk_halt: false,
        };
        if let Some(cvix) = &self.cvix {
            let value = cvix[t].ok_or(EnvError::MissingCvix {
                timestamp: self.panel.timestamps()[t],
            })?;
            risk_control(&mut state, value, self.config.cvix_threshold);
        }
        Ok(state)
    }

    /// Executes `action` at `state.prices` and advances one row.
    pub fn step(&self, state: &MarketState, action: &ActionVector) -> Result<StepResult, EnvError> {
        if state.is_terminal() {
            return Err(EnvError::Terminal(state.t));
        }
        let d = self.n_assets();
        let a = action.as_slice();
        if a.len() != d {
            return Err(EnvError::ActionShape {
                got: a.len(),
                expected: d,
            });
        }
        if let Some(index) = a.iter().position(|v| !v.is_finite()) {
            return Err(EnvError::NonFiniteAction { index });
        }

        let fee_rate = self.config.fee_rate;
        let prices = &state.prices;
        let mut cash = state.cash;
        let mut holdings = state.holdings.clone();
        let mut executed = vec![0.0; d];
        let mut fee_paid = 0.0;

        let mut sell = |i: usize, qty: f64, cash: &mut f64, holdings: &mut [f64]| {
            let notional = prices[i] * qty;
            let fee = fee_rate * notional;
            *cash += notional - fee;
            holdings[i] = if qty >= holdings[i] {
                0.0
            } else {
                holdings[i] - qty
            };
            executed[i] = -qty;
            fee_paid += fee;
        };

        if state.risk_halt {
            for i in 0..d {
                if holdings[i] > 0.0 {
                    let q = holdings[i];
                    sell(i, q, &mut cash, &mut holdings);
                }
            }
        } else {
            let clamped: Vec<f64> = match self.config.max_position_per_step {
                Some(m) => a.iter().map(|v| v.clamp(-m, m)).collect(),
                None => a.to_vec(),
            };
            for i in 0..d {
                if clamped[i] < 0.0 {
                    let q = (-clamped[i]).min(holdings[i]);
                    if q > 0.0 {
                        sell(i, q, &mut cash, &mut holdings);
                    }
                }
            }
            let wants: Vec<(usize, f64)> = (0..d)
                .filter(|&i| clamped[i] > 0.0)
                .map(|i| (i, clamped[i]))
                .collect();
            let scale = match self.config.buy_fill {
                BuyFill::SkipWhole => 1.0,
                BuyFill::ProRata => {
                    let total: f64 = wants
                        .iter()
                        .map(|&(i, q)| prices[i] * q * (1.0 + fee_rate))
                        .sum();
                    if total > cash {
                        cash / total
                    } else {
                        1.0
                    }
                }
            };
            for (i, q) in wants {
                let q = q * scale;
                let notional = prices[i] * q;
                let fee = fee_rate * notional;
                let total = notional + fee;
                if q > 0.0 && total <= cash * (1.0 + AFFORD_EPS) {
                    cash = (cash - total).max(0.0);
                    holdings[i] += q;
                    executed[i] = q;
                    fee_paid += fee;
                }
            }
        }

        let v_t = state.portfolio_value();
        let next_state = self.observe(state.t + 1, state.window_end, cash, holdings)?;
        let reward = next_state.portfolio_value() - v_t;
        let done = next_state.is_terminal();
        Ok(StepResult {
            next_state,
            reward,
            executed_action: executed,
            fee_paid,
            done,
        })
    }
}

impl From<MarketDataError> for EnvError {
    fn from(e: MarketDataError) -> Self {
        EnvError::Mismatch(e.to_string())
    }
}
