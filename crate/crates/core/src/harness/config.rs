use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{CemScale, HyperparameterGrid, HyperparameterSet, SelectionMetric};
use crate::market_data::{
    parse_timestamp, CsvSchema, IndicatorSpec, Pooling, DEFAULT_MIN_BARS, DEFAULT_THRESHOLD,
};
use crate::pbo::PboConfig;
use crate::splits::{make_combinatorial, make_kfold, make_walk_forward, Scheme, SplitPlan};
use crate::stats::derive_seed;
use crate::trading_env::EnvConfig;

/// Trial count at which `1 - 0.95^H` first reaches 0.9.
pub const RECOMMENDED_MIN_TRIALS: usize = 50;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssetSource {
    pub name: String,
    pub path: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DataConfig {
    pub assets: Vec<AssetSource>,
    pub cvix: Option<String>,
    pub external_trials: Option<String>,
    /// Value series replayed as a buy-and-hold index benchmark.
    pub benchmark_index: Option<String>,
    pub schema: CsvSchema,
    pub min_bars: usize,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            assets: Vec::new(),
            cvix: None,
            external_trials: None,
            benchmark_index: None,
            schema: CsvSchema::default(),
            min_bars: DEFAULT_MIN_BARS,
        }
    }
}

/// Train and test periods. Unset bounds fall back to the panel ends, and
/// an unset `train_end` to `1 - test_fraction` of the rows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WindowConfig {
    pub train_start: Option<String>,
    pub train_end: Option<String>,
    pub test_start: Option<String>,
    pub test_end: Option<String>,
    pub test_fraction: f64,
}

impl Default for WindowConfig {
    fn default() -> Self {
        Self {
            train_start: None,
            train_end: None,
            test_start: None,
            test_end: None,
            test_fraction: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FeatureConfig {
    pub indicators: Vec<IndicatorSpec>,
    pub filter: bool,
    pub correlation_threshold: f64,
    pub pooling: Pooling,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            indicators: IndicatorSpec::canonical(),
            filter: true,
            correlation_threshold: DEFAULT_THRESHOLD,
            pooling: Pooling::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub scheme: Scheme,
    #[serde(rename = "N", alias = "n")]
    pub n: usize,
    /// Validation groups per split (combinatorial only).
    pub k: usize,
    pub embargo: usize,
    /// Share of groups used for training (walk-forward only).
    pub train_fraction: f64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            scheme: Scheme::Combinatorial,
            n: 5,
            k: 2,
            embargo: 0,
            train_fraction: 0.8,
        }
    }
}

impl SplitConfig {
    pub fn plan(&self) -> Result<SplitPlan, HarnessError> {
        Ok(match self.scheme {
            Scheme::Combinatorial => make_combinatorial(self.n, self.k)?,
            Scheme::WalkForward => make_walk_forward(self.n, self.train_fraction)?,
            Scheme::KFold => make_kfold(self.n)?,
        })
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Sampler {
    /// Evenly strided walk through the grid in mixed-radix order.
    Grid,
    /// Uniform draws without replacement.
    #[default]
    Random,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrialConfig {
    /// Set to false to gate only imported external trials.
    pub enabled: bool,
    #[serde(rename = "H", alias = "h")]
    pub h: usize,
    pub sampler: Sampler,
    pub master_seed: u64,
    pub grid: HyperparameterGrid,
    pub cem: CemScale,
    pub selection_metric: SelectionMetric,
    /// Also retrain and test every trial, not only the selected one.
    pub test_all_trials: bool,
}

impl Default for TrialConfig {
    fn default() -> Self {
        Self {
            enabled: true,
            h: RECOMMENDED_MIN_TRIALS,
            sampler: Sampler::Random,
            master_seed: 0,
            grid: HyperparameterGrid::default(),
            cem: CemScale::default(),
            selection_metric: SelectionMetric::Sharpe,
            test_all_trials: false,
        }
    }
}

/// One experiment, loadable from TOML or JSON.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub data: DataConfig,
    pub windows: WindowConfig,
    pub env: EnvConfig,
    pub features: FeatureConfig,
    pub splits: SplitConfig,
    pub trials: TrialConfig,
    pub pbo: PboConfig,
    pub output_dir: Option<String>,
    /// Directory relative data paths are resolved against.
    #[serde(skip)]
    pub base_dir: PathBuf,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        toml::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        serde_json::from_str(text).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Reads a `.json` file as JSON and anything else as TOML.
    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))?;
        let mut config = if path
            .extension()
            .is_some_and(|e| e.eq_ignore_ascii_case("json"))
        {
            Self::from_json(&text)?
        } else {
            Self::from_toml(&text)?
        };
        config.base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("configs always serialize")
    }

    pub fn resolve(&self, relative: &str) -> PathBuf {
        let p = Path::new(relative);
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    /// Checks everything that can be checked without reading data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        self.env
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.splits.plan()?;
        if self.data.assets.is_empty() && self.data.external_trials.is_none() {
            return Err(HarnessError::Config(
                "no asset data and no external trials".into(),
            ));
        }
        if self.trials.enabled && !self.data.assets.is_empty() {
            if self.trials.h < 2 {
                return Err(HarnessError::Config(format!(
                    "H must be at least 2, got {}",
                    self.trials.h
                )));
            }
            self.trials
                .grid
                .validate()
                .map_err(|e| HarnessError::Config(e.to_string()))?;
        }
        if !(self.pbo.alpha > 0.0 && self.pbo.alpha < 1.0) {
            return Err(HarnessError::Config(format!(
                "alpha must be in (0, 1), got {}",
                self.pbo.alpha
            )));
        }
        if !(self.windows.test_fraction > 0.0 && self.windows.test_fraction < 1.0) {
            return Err(HarnessError::Config(
                "test_fraction must be in (0, 1)".into(),
            ));
        }
        for (name, value) in [
            ("train_start", &self.windows.train_start),
            ("train_end", &self.windows.train_end),
            ("test_start", &self.windows.test_start),
            ("test_end", &self.windows.test_end),
        ] {
            if let Some(v) = value {
                parse_timestamp(v)
                    .ok_or_else(|| HarnessError::Config(format!("{name}: bad timestamp {v:?}")))?;
            }
        }
        let mut paths: Vec<&str> = self.data.assets.iter().map(|a| a.path.as_str()).collect();
        paths.extend(
            [
                &self.data.cvix,
                &self.data.external_trials,
                &self.data.benchmark_index,
            ]
            .into_iter()
            .flatten()
            .map(String::as_str),
        );
        for p in paths {
            if !self.resolve(p).is_file() {
                return Err(HarnessError::Config(format!(
                    "missing file {}",
                    self.resolve(p).display()
                )));
            }
        }
        Ok(())
    }
}

/// One sampled hyperparameter trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSpec {
    pub index: usize,
    pub grid_index: usize,
    pub hyperparameters: HyperparameterSet,
    pub seed: u64,
}

/// Draws `h` distinct grid points; seeds depend only on `(master_seed, index)`.
pub fn sample_trials(
    grid: &HyperparameterGrid,
    h: usize,
    sampler: Sampler,
    master_seed: u64,
) -> Result<Vec<TrialSpec>, HarnessError> {
    grid.validate()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    let card = grid.cardinality();
    if h > card {
        return Err(HarnessError::Config(format!(
            "H = {h} exceeds the grid cardinality {card}"
        )));
    }
    if h < RECOMMENDED_MIN_TRIALS {
        log::warn!(
            "H = {h} is below {RECOMMENDED_MIN_TRIALS}; with H = 50, 1 - 0.95^50 = {:.3} >= 0.9",
            1.0 - 0.95f64.powi(RECOMMENDED_MIN_TRIALS as i32)
        );
    }
    let indices: Vec<usize> = match sampler {
        Sampler::Grid => (0..h).map(|i| i * card / h).collect(),
        Sampler::Random => {
            let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
            rand::seq::index::sample(&mut rng, card, h).into_vec()
        }
    };
    Ok(indices
        .into_iter()
        .enumerate()
        .map(|(index, grid_index)| TrialSpec {
            index,
            grid_index,
            hyperparameters: grid.get(grid_index).expect("index below cardinality"),
            seed: derive_seed(master_seed, index as u64),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn random_sampling_is_reproducible_and_distinct() {
        let g = HyperparameterGrid::default();
        let a = sample_trials(&g, 50, Sampler::Random, 42).unwrap();
        assert_eq!(a, sample_trials(&g, 50, Sampler::Random, 42).unwrap());
        let mut idx: Vec<usize> = a.iter().map(|t| t.grid_index).collect();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), 50);
        assert!(a.iter().all(|t| g.contains(&t.hyperparameters)));
        assert_ne!(a, sample_trials(&g, 50, Sampler::Random, 43).unwrap());
    }

    #[test]
    fn grid_sampling_strides() {
        let g = HyperparameterGrid::default();
        let t = sample_trials(&g, 4, Sampler::Grid, 0).unwrap();
        let idx: Vec<usize> = t.iter().map(|t| t.grid_index).collect();
        assert_eq!(idx, vec![0, 675, 1350, 2025]);
    }

    #[test]
    fn too_many_trials() {
        let g = HyperparameterGrid::default();
        assert!(matches!(
            sample_trials(&g, 2701, Sampler::Random, 0),
            Err(HarnessError::Config(_))
        ));
    }

    #[test]
    fn trial_count_rule() {
        assert!(1.0 - 0.95f64.powi(50) >= 0.9);
        assert!(1.0 - 0.95f64.powi(44) < 0.9);
    }

    #[test]
    fn toml_defaults_mirror_reference_setup() {
        let c = ExperimentConfig::from_toml("[splits]\nN = 5\n").unwrap();
        assert_eq!((c.splits.n, c.splits.k), (5, 2));
        assert_eq!(c.pbo.s, 14);
        assert_eq!(c.pbo.alpha, 0.10);
        assert_eq!(c.env.fee_rate, 0.003);
        assert_eq!(c.env.cvix_threshold, 90.1);
        assert_eq!(c.trials.h, 50);
        let back = ExperimentConfig::from_toml(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        let json = serde_json::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::from_json(&json).unwrap(), c);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(ExperimentConfig::from_toml("[splits]\nbogus = 1\n").is_err());
    }
}
