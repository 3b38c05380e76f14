use std::fs;
use std::path::Path;

use super::{AssetSource, ExperimentConfig, HarnessError};
use crate::market_data::write_bars;
use crate::synthetic::{generate, SyntheticConfig, SyntheticMarket};

fn put(path: &Path, bytes: &[u8]) -> Result<(), HarnessError> {
    fs::write(path, bytes).map_err(|e| HarnessError::Io(format!("{}: {e}", path.display())))
}

/// Writes a generated market as `<asset>.csv`, `cvix.csv`, an equal-weight
/// `index.csv` and a matching `experiment.toml` with `trials` trials.
///
/// Returns the config (with `base_dir` set to `dir`) and the market.
pub fn write_synthetic_dataset(
    synth: &SyntheticConfig,
    dir: &Path,
    trials: usize,
) -> Result<(ExperimentConfig, SyntheticMarket), HarnessError> {
    fs::create_dir_all(dir).map_err(|e| HarnessError::Io(format!("{}: {e}", dir.display())))?;
    let market = generate(synth);
    let mut config = ExperimentConfig::default();
    for series in &market.assets {
        let mut buf = Vec::new();
        write_bars(&mut buf, &series.bars)?;
        let file = format!("{}.csv", series.asset);
        put(&dir.join(&file), &buf)?;
        config.data.assets.push(AssetSource {
            name: series.asset.clone(),
            path: file,
        });
    }

    let mut cvix = String::from("timestamp,value\n");
    for (t, v) in market.cvix.timestamps.iter().zip(&market.cvix.values) {
        cvix.push_str(&format!("{t},{v}\n"));
    }
    put(&dir.join("cvix.csv"), cvix.as_bytes())?;
    config.data.cvix = Some("cvix.csv".into());

    let mut index = String::from("timestamp,value\n");
    let n = market.assets.len() as f64;
    for t in 0..synth.n_bars {
        let level: f64 = market
            .assets
            .iter()
            .map(|a| a.bars[t].close / a.bars[0].close)
            .sum::<f64>()
            / n;
        index.push_str(&format!("{},{level}\n", market.assets[0].bars[t].timestamp));
    }
    put(&dir.join("index.csv"), index.as_bytes())?;
    config.data.benchmark_index = Some("index.csv".into());

    config.trials.h = trials;
    config.output_dir = Some("out".into());
    put(&dir.join("experiment.toml"), config.to_toml().as_bytes())?;
    config.base_dir = dir.to_path_buf();
    Ok((config, market))
}
