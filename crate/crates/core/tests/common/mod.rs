#![allow(dead_code)]

use std::path::Path;

use overfit_core::agents::HyperparameterGrid;
use overfit_core::harness::{write_synthetic_dataset, ExperimentConfig};
use overfit_core::market_data::{Bar, FeatureMatrix, Panel};
use overfit_core::synthetic::{SyntheticConfig, SyntheticMarket};

/// Panel whose bars are flat at the given closes, with one constant feature.
pub fn flat_panel(closes: &[Vec<f64>]) -> (Panel, FeatureMatrix) {
    let len = closes[0].len();
    let bars = closes
        .iter()
        .map(|cs| {
            cs.iter()
                .enumerate()
                .map(|(t, &c)| Bar {
                    timestamp: 1000 + 60 * t as i64,
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                    volume: 1.0,
                })
                .collect()
        })
        .collect();
    let assets: Vec<String> = (0..closes.len()).map(|i| format!("A{i}")).collect();
    let panel = Panel::new(assets.clone(), bars).unwrap();
    let fm = FeatureMatrix::new(
        assets,
        panel.timestamps().to_vec(),
        vec!["volume".into()],
        vec![1.0; len * closes.len()],
        0,
    )
    .unwrap();
    (panel, fm)
}

/// A grid small enough that a whole experiment trains in seconds.
pub fn quick_grid() -> HyperparameterGrid {
    HyperparameterGrid {
        step_size: vec![0.03, 0.015, 0.0075],
        batch_size: vec![256, 512],
        gamma: vec![0.95, 0.99],
        net_dimension: vec![256, 512],
        target_step: vec![1250, 2500],
        break_step: vec![3000, 6000],
    }
}

/// Writes a small synthetic dataset and returns a quick config for it.
pub fn quick_dataset(
    dir: &Path,
    seed: u64,
    bars: usize,
    trials: usize,
) -> (ExperimentConfig, SyntheticMarket) {
    let synth = SyntheticConfig {
        n_bars: bars,
        seed,
        ..SyntheticConfig::default()
    };
    let (mut config, market) = write_synthetic_dataset(&synth, dir, trials).unwrap();
    config.trials.grid = quick_grid();
    config.trials.master_seed = seed;
    (config, market)
}
