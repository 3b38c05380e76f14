#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::harness::ExperimentConfig;

fuzz_target!(|data: &str| {
    if let Ok(config) = ExperimentConfig::from_toml(data) {
        let _ = config.splits.plan();
        let _ = ExperimentConfig::from_toml(&config.to_toml()).unwrap();
    }
    let _ = ExperimentConfig::from_json(data);
});
