mod common;

use std::fs;

use overfit_core::agents::EqualWeight;
use overfit_core::harness::{emit_report, run_experiment, ExperimentConfig, HarnessError};
use overfit_core::market_data::write_bars;
use overfit_core::splits::make_combinatorial;
use overfit_core::trading_env::{run_episode, EnvConfig, TradingEnv};

use common::{flat_panel, quick_dataset};

#[test]
fn rows_after_train_end_do_not_reach_validation() {
    let clean = tempfile::tempdir().unwrap();
    let poisoned = tempfile::tempdir().unwrap();
    let (config_a, _) = quick_dataset(clean.path(), 3, 600, 4);
    let (config_b, market) = quick_dataset(poisoned.path(), 3, 600, 4);

    let train_end = 480;
    for series in &market.assets {
        let mut bars = series.bars.clone();
        for (k, b) in bars[train_end..].iter_mut().enumerate() {
            let f = 1.0 + 0.01 * k as f64;
            b.open *= f;
            b.high *= f;
            b.low *= f;
            b.close *= f;
            b.volume *= 10.0;
        }
        let mut buf = Vec::new();
        write_bars(&mut buf, &bars).unwrap();
        fs::write(poisoned.path().join(format!("{}.csv", series.asset)), buf).unwrap();
    }

    let a = run_experiment(&config_a, 2).unwrap();
    let b = run_experiment(&config_b, 2).unwrap();
    assert_eq!(
        a.data.as_ref().unwrap().train_rows,
        b.data.as_ref().unwrap().train_rows
    );
    let metrics = |r: &overfit_core::harness::ExperimentReport| {
        r.trials
            .iter()
            .map(|t| t.validation_metric)
            .collect::<Vec<_>>()
    };
    assert_eq!(metrics(&a), metrics(&b));
    assert_eq!(a.pbo[0].result.lambdas, b.pbo[0].result.lambdas);
    assert_eq!(a.selected_trial, b.selected_trial);
    let ew = |r: &overfit_core::harness::ExperimentReport| {
        r.backtests
            .iter()
            .find(|b| b.strategy == "equal_weight")
            .unwrap()
            .final_value
    };
    assert_ne!(ew(&a), ew(&b));
}

fn external_csv(plan_splits: &[Vec<usize>], trials: usize, group_len: usize) -> String {
    let mut out = String::from("trial_id,split_id,timestamp,return\n");
    for trial in 0..trials {
        for (j, groups) in plan_splits.iter().enumerate() {
            for &g in groups {
                for t in g * group_len..(g + 1) * group_len {
                    let r = ((t * 37 + trial * 11 + j * 5) % 23) as f64 / 23.0 - 0.5
                        + 0.01 * trial as f64;
                    out.push_str(&format!("s{trial},{j},{},{r}\n", 10_000 + t));
                }
            }
        }
    }
    out
}

#[test]
fn external_trials_only() {
    let dir = tempfile::tempdir().unwrap();
    let plan = make_combinatorial(5, 2).unwrap();
    let groups: Vec<Vec<usize>> = plan.splits.iter().map(|s| s.validation.clone()).collect();
    fs::write(dir.path().join("ext.csv"), external_csv(&groups, 4, 20)).unwrap();

    let mut config = ExperimentConfig::default();
    config.data.external_trials = Some("ext.csv".into());
    config.base_dir = dir.path().to_path_buf();
    let report = run_experiment(&config, 1).unwrap();

    assert!(report.trials.is_empty());
    assert!(report.backtests.is_empty());
    assert_eq!(report.pbo.len(), 1);
    let family = &report.pbo[0];
    assert_eq!(family.family, "external");
    assert_eq!(family.trial_ids, vec!["s0", "s1", "s2", "s3"]);
    assert_eq!(family.result.h, 4);
    assert_eq!(family.result.combination_count, 3432);

    // each timestamp is validated by 4 splits; the matrix holds their mean
    let m = family.matrix.as_ref().unwrap();
    assert_eq!(m.n_rows(), 100);
    let g = 1;
    let t = 25;
    let covering: Vec<usize> = (0..groups.len())
        .filter(|&j| groups[j].contains(&g))
        .collect();
    assert_eq!(covering.len(), 4);
    let expected: f64 = covering
        .iter()
        .map(|&j| ((t * 37 + 2 * 11 + j * 5) % 23) as f64 / 23.0 - 0.5 + 0.02)
        .sum::<f64>()
        / 4.0;
    assert!((m.get(t, 2) - expected).abs() < 1e-12);

    let out = tempfile::tempdir().unwrap();
    let manifest = emit_report(&report, out.path()).unwrap();
    let names: Vec<&str> = manifest.iter().map(|e| e.file.as_str()).collect();
    assert_eq!(
        names,
        vec![
            "logit_hist.svg",
            "logits.csv",
            "report.json",
            "trial_matrix_external.csv"
        ]
    );
}

#[test]
fn missing_data_is_a_config_error() {
    let config = ExperimentConfig::default();
    let err = run_experiment(&config, 1).unwrap_err();
    assert!(err.is_config(), "{err}");
}

#[test]
fn equal_weight_matches_closed_form() {
    let a: Vec<f64> = (0..50).map(|t| 10.0 * 1.01f64.powi(t)).collect();
    let b: Vec<f64> = (0..50).map(|t| 20.0 + 0.5 * t as f64).collect();
    let (panel, fm) = flat_panel(&[a.clone(), b.clone()]);
    let fee = 0.003;
    let env = TradingEnv::new(
        &panel,
        &fm,
        EnvConfig {
            initial_cash: 1000.0,
            fee_rate: fee,
            ..EnvConfig::default()
        },
    )
    .unwrap();
    let ep = run_episode(&env, &mut EqualWeight::new(fee), 0..50).unwrap();

    let qa = 500.0 / (10.0 * (1.0 + fee));
    let qb = 500.0 / (20.0 * (1.0 + fee));
    assert!((ep.trades[0].qty - qa).abs() < 1e-12);
    assert!((ep.trades[1].qty - qb).abs() < 1e-12);
    for t in 1..50 {
        let v = qa * a[t] + qb * b[t];
        assert!(
            (ep.equity[t] - v).abs() < 1e-9 * v,
            "t={t}: {} vs {v}",
            ep.equity[t]
        );
    }
    assert!((ep.total_fees - fee * 1000.0 / (1.0 + fee)).abs() < 1e-9);
}

#[test]
fn equal_weight_reset_reinvests() {
    let (panel, fm) = flat_panel(&[vec![5.0; 6]]);
    let env = TradingEnv::new(
        &panel,
        &fm,
        EnvConfig {
            initial_cash: 100.0,
            fee_rate: 0.0,
            ..EnvConfig::default()
        },
    )
    .unwrap();
    let mut agent = EqualWeight::new(0.0);
    let first = run_episode(&env, &mut agent, 0..3).unwrap();
    let second = run_episode(&env, &mut agent, 3..6).unwrap();
    assert_eq!(first.trades.len(), 1);
    assert_eq!(second.trades.len(), 1);
}

#[test]
fn emitting_twice_is_byte_identical() {
    let data = tempfile::tempdir().unwrap();
    let (config, _) = quick_dataset(data.path(), 11, 500, 3);
    let report = run_experiment(&config, 1).unwrap();
    let (x, y) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    let a = emit_report(&report, x.path()).unwrap();
    let b = emit_report(&report, y.path()).unwrap();
    assert_eq!(a, b);
    assert_eq!(
        fs::read(x.path().join("manifest.json")).unwrap(),
        fs::read(y.path().join("manifest.json")).unwrap()
    );

    let equities: Vec<&str> = a
        .iter()
        .map(|e| e.file.as_str())
        .filter(|f| f.starts_with("equity_"))
        .collect();
    assert_eq!(
        equities,
        vec![
            "equity_cem_selected.csv",
            "equity_equal_weight.csv",
            "equity_index.csv"
        ]
    );
    assert!(a.iter().any(|e| e.file == "agent_cem_selected.json"));
    for entry in &a {
        let bytes = fs::read(x.path().join(&entry.file)).unwrap();
        assert_eq!(bytes.len(), entry.bytes);
    }
}

#[test]
fn parsed_reports_cannot_be_emitted() {
    let data = tempfile::tempdir().unwrap();
    let (config, _) = quick_dataset(data.path(), 12, 500, 3);
    let report = run_experiment(&config, 1).unwrap();
    let parsed = overfit_core::harness::ExperimentReport::from_json(&report.to_json()).unwrap();
    assert_eq!(parsed.content_hash, report.content_hash);
    let out = tempfile::tempdir().unwrap();
    let err = emit_report(&parsed, out.path()).unwrap_err();
    assert!(matches!(err, HarnessError::Internal(_)), "{err}");
}

#[test]
fn selected_trial_has_best_validation_metric() {
    let data = tempfile::tempdir().unwrap();
    let (config, _) = quick_dataset(data.path(), 13, 500, 4);
    let report = run_experiment(&config, 1).unwrap();
    let sel = report.selected_trial.unwrap();
    let best = report
        .trials
        .iter()
        .map(|t| t.validation_metric)
        .fold(f64::NEG_INFINITY, f64::max);
    assert_eq!(report.trials[sel].validation_metric, best);
    assert!(report.trials[..sel]
        .iter()
        .all(|t| t.validation_metric < best));
    assert_eq!(report.trials[sel].validation_episodes, 10 * 2);
}
