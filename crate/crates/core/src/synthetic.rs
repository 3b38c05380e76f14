//! Deterministic synthetic markets for tests, demos and the bundled dataset.
//!
//! Each asset follows a geometric random walk with its own constant drift,
//! so a policy that learns which assets trend upward has a real, persistent
//! edge. The volatility index is a mean-reverting series with occasional
//! spikes above the default halt threshold.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::market_data::{AssetSeries, Bar, ValueSeries};
use crate::stats::derive_seed;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub n_assets: usize,
    pub n_bars: usize,
    pub start_timestamp: i64,
    pub interval_secs: i64,
    pub seed: u64,
    /// Per-bar log drift of every asset; empty spreads them evenly over
    /// `[-drift_spread, drift_spread]` in a seed-dependent order.
    pub drifts: Vec<f64>,
    pub drift_spread: f64,
    pub volatility: f64,
    pub start_price: f64,
    pub cvix_base: f64,
    /// Per-bar probability that a volatility spike starts.
    pub cvix_spike_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            n_assets: 3,
            n_bars: 1500,
            start_timestamp: 1_600_000_000,
            interval_secs: 300,
            seed: 7,
            drifts: Vec::new(),
            drift_spread: 4e-4,
            volatility: 4e-3,
            start_price: 100.0,
            cvix_base: 60.0,
            cvix_spike_rate: 0.002,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticMarket {
    pub assets: Vec<AssetSeries>,
    pub cvix: ValueSeries,
    pub drifts: Vec<f64>,
}

impl SyntheticConfig {
    pub fn timestamps(&self) -> Vec<i64> {
        (0..self.n_bars as i64)
            .map(|t| self.start_timestamp + t * self.interval_secs)
            .collect()
    }

    fn resolved_drifts(&self) -> Vec<f64> {
        if !self.drifts.is_empty() {
            return self.drifts.clone();
        }
        let d = self.n_assets;
        let mut drifts: Vec<f64> = (0..d)
            .map(|i| {
                if d == 1 {
                    self.drift_spread
                } else {
                    -self.drift_spread + 2.0 * self.drift_spread * i as f64 / (d - 1) as f64
                }
            })
            .collect();
        drifts.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(
            self.seed,
            u64::MAX,
        )));
        drifts
    }
}

fn asset_bars(config: &SyntheticConfig, drift: f64, rng: &mut ChaCha8Rng) -> Vec<Bar> {
    let sigma = config.volatility;
    let mut close = config.start_price;
    config
        .timestamps()
        .into_iter()
        .map(|timestamp| {
            let open = close;
            let z: f64 = rng.sample(StandardNormal);
            close = open * (drift + sigma * z).exp();
            let wick_hi: f64 = rng.sample::<f64, _>(StandardNormal).abs() * sigma * 0.5;
            let wick_lo: f64 = rng.sample::<f64, _>(StandardNormal).abs() * sigma * 0.5;
            let shock: f64 = rng.sample(StandardNormal);
            Bar {
                timestamp,
                open,
                high: open.max(close) * (1.0 + wick_hi),
                low: open.min(close) * (1.0 - wick_lo),
                close,
                volume: 1000.0 * (0.3 * shock + 20.0 * z.abs() * sigma).exp(),
            }
        })
        .collect()
}

fn cvix_values(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut level = config.cvix_base;
    let mut spike = 0.0;
    (0..config.n_bars)
        .map(|_| {
            if rng.random_bool(config.cvix_spike_rate.clamp(0.0, 1.0)) {
                spike = 45.0;
            }
            spike *= 0.93;
            level += 0.05 * (config.cvix_base - level) + 1.5 * rng.sample::<f64, _>(StandardNormal);
            (level + spike).max(0.0)
        })
        .collect()
}

pub fn generate(config: &SyntheticConfig) -> SyntheticMarket {
    let drifts = config.resolved_drifts();
    let assets = drifts
        .iter()
        .enumerate()
        .map(|(i, &mu)| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, i as u64));
            AssetSeries {
                asset: format!("SYN{i}"),
                bars: asset_bars(config, mu, &mut rng),
            }
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(config.seed, u64::MAX - 1));
    let cvix = ValueSeries {
        timestamps: config.timestamps(),
        values: cvix_values(config, &mut rng),
    };
    SyntheticMarket {
        assets,
        cvix,
        drifts,
    }
}
