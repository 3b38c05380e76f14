//! Replays the checked-in fuzz corpus through every decoder.

use std::fs;
use std::path::PathBuf;

use overfit_core::agents::{read_external_trials, CemAgent};
use overfit_core::harness::ExperimentConfig;
use overfit_core::market_data::{read_bars, read_value_series, CsvSchema, IndicatorSpec};
use overfit_core::pbo::TrialMatrix;
use overfit_core::splits::SplitPlan;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../fuzz/corpus")
        .join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let path = e.unwrap().path();
            (
                path.file_name().unwrap().to_string_lossy().into_owned(),
                fs::read(&path).unwrap(),
            )
        })
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

fn text(bytes: &[u8]) -> &str {
    std::str::from_utf8(bytes).unwrap()
}

#[test]
fn bars_csv() {
    let results: Vec<(String, bool)> = seeds("bars_csv")
        .into_iter()
        .map(|(n, b)| {
            (
                n,
                read_bars(b.as_slice(), "X", &CsvSchema::default()).is_ok(),
            )
        })
        .collect();
    assert!(results.contains(&("synthetic_head.csv".into(), true)));
    assert!(results.contains(&("bad_range.csv".into(), false)));
}

#[test]
fn value_series() {
    for (name, bytes) in seeds("value_series") {
        let ok = read_value_series(bytes.as_slice()).is_ok();
        assert_eq!(ok, name != "duplicate.csv", "{name}");
    }
}

#[test]
fn external_trials() {
    for (name, bytes) in seeds("external_trials") {
        let ok = read_external_trials(bytes.as_slice()).is_ok();
        assert_eq!(ok, name == "complete.csv", "{name}");
    }
}

#[test]
fn trial_matrix_csv() {
    for (name, bytes) in seeds("trial_matrix_csv") {
        let ok = TrialMatrix::read_csv(bytes.as_slice()).is_ok();
        assert_eq!(ok, name == "small.csv", "{name}");
    }
}

#[test]
fn split_plan_json() {
    for (name, bytes) in seeds("split_plan_json") {
        let plan = SplitPlan::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(SplitPlan::from_json(&plan.to_json()).unwrap(), plan);
    }
}

#[test]
fn experiment_config() {
    for (name, bytes) in seeds("experiment_config") {
        let config =
            ExperimentConfig::from_toml(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert!(config.splits.plan().is_ok(), "{name}");
    }
}

#[test]
fn indicator_spec() {
    let mut parsed = 0;
    for (_, bytes) in seeds("indicator_spec") {
        if let Ok(spec) = text(&bytes).parse::<IndicatorSpec>() {
            assert_eq!(spec.to_string().parse::<IndicatorSpec>().unwrap(), spec);
            parsed += 1;
        }
    }
    assert_eq!(parsed, 10);
}

#[test]
fn agent_json() {
    for (name, bytes) in seeds("agent_json") {
        let agent = CemAgent::from_json(text(&bytes)).unwrap_or_else(|e| panic!("{name}: {e}"));
        assert_eq!(agent.model.is_some(), name == "trained.json");
    }
}
