use std::ops::Range;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{sample_trials, ExperimentConfig, TrialSpec};
use super::report::{content_hash, BacktestRecord, ExperimentReport, FamilyPbo, TrialRecord};
use super::HarnessError;
use crate::agents::{
    evaluate, import_external_trials, train, CemAgent, EqualWeight, HyperparameterSet, PerfMetrics,
    Policy,
};
use crate::market_data::{
    align, build_features, correlation_filter, load_csv, parse_timestamp, pearson_matrix,
    read_value_series, AlignReport, DroppedFeature, FeatureMatrix, Panel, ValueSeries,
};
use crate::pbo::{build_trial_matrix, estimate_pbo, SplitReturns, TrialMatrix, TrialReturns};
use crate::splits::{materialize, GroupPartition, MaterializedSplit, SplitPlan};
use crate::trading_env::{run_episode, Episode, TradingEnv};

/// Loads and aligns every configured asset.
pub fn load_panel(config: &ExperimentConfig) -> Result<(Panel, AlignReport), HarnessError> {
    let series = config
        .data
        .assets
        .iter()
        .map(|a| load_csv(&config.resolve(&a.path), &a.name, &config.data.schema))
        .collect::<Result<Vec<_>, _>>()?;
    let (panel, report) = align(&series, config.data.min_bars)?;
    Ok((panel, report))
}

pub fn load_value_series(
    config: &ExperimentConfig,
    path: &str,
) -> Result<ValueSeries, HarnessError> {
    let resolved = config.resolve(path);
    let file = std::fs::File::open(&resolved)
        .map_err(|e| HarnessError::Data(format!("{}: {e}", resolved.display())))?;
    Ok(read_value_series(file)?)
}

/// Row ranges of the train and test periods.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Windows {
    pub train: Range<usize>,
    pub test: Range<usize>,
}

pub fn resolve_windows(config: &ExperimentConfig, panel: &Panel) -> Result<Windows, HarnessError> {
    let w = &config.windows;
    let len = panel.len();
    let row = |v: &Option<String>| {
        v.as_deref()
            .and_then(parse_timestamp)
            .map(|ts| panel.index_at_or_after(ts))
    };
    let train_start = row(&w.train_start).unwrap_or(0);
    let train_end = row(&w.train_end)
        .unwrap_or_else(|| ((len as f64) * (1.0 - w.test_fraction)).round() as usize)
        .min(len);
    let test_start = row(&w.test_start).unwrap_or(train_end);
    let test_end = row(&w.test_end).unwrap_or(len).min(len);
    if train_start >= train_end {
        return Err(HarnessError::Config(format!(
            "empty train window [{train_start}, {train_end})"
        )));
    }
    if test_start < train_end {
        return Err(HarnessError::Config(
            "test window must start after the train window ends".into(),
        ));
    }
    if test_end < test_start + 2 {
        return Err(HarnessError::Config(format!(
            "test window [{test_start}, {test_end}) has fewer than 2 rows"
        )));
    }
    Ok(Windows {
        train: train_start..train_end,
        test: test_start..test_end,
    })
}

/// Feature columns chosen on training rows, and the matrices built with them.
#[derive(Debug, Clone)]
pub struct FeatureSet {
    pub names: Vec<String>,
    pub dropped: Vec<DroppedFeature>,
    pub train: FeatureMatrix,
}

/// Builds features on `train_panel` and filters correlated ones.
pub fn select_features(
    config: &ExperimentConfig,
    train_panel: &Panel,
) -> Result<FeatureSet, HarnessError> {
    let all = build_features(train_panel, &config.features.indicators)?;
    if !config.features.filter {
        return Ok(FeatureSet {
            names: all.feature_names().to_vec(),
            dropped: Vec::new(),
            train: all,
        });
    }
    let report = pearson_matrix(&all, config.features.pooling)?;
    let outcome = correlation_filter(&report, config.features.correlation_threshold);
    let train = all.select(&outcome.kept)?;
    Ok(FeatureSet {
        names: outcome.kept,
        dropped: outcome.dropped,
        train,
    })
}

fn validation_returns(
    agent: &mut dyn Policy,
    env: &TradingEnv<'_>,
    split: usize,
    ms: &MaterializedSplit,
) -> Result<(SplitReturns, Vec<PerfMetrics>), HarnessError> {
    let timestamps = env.panel().timestamps();
    let mut out = SplitReturns {
        split,
        timestamps: Vec::new(),
        returns: Vec::new(),
    };
    let mut metrics = Vec::new();
    for group in &ms.validation {
        let eval = evaluate(agent, env, group.clone())?;
        out.timestamps.extend_from_slice(&timestamps[group.clone()]);
        // every group is its own episode, so its first row earns nothing
        out.returns.push(0.0);
        out.returns.extend_from_slice(&eval.returns);
        metrics.push(eval.metrics);
    }
    Ok((out, metrics))
}

struct SplitOutcome {
    returns: SplitReturns,
    metrics: Vec<PerfMetrics>,
}

fn run_split(
    trial: &TrialSpec,
    split: usize,
    ms: &MaterializedSplit,
    env: &TradingEnv<'_>,
    config: &ExperimentConfig,
) -> Result<SplitOutcome, HarnessError> {
    let mut agent = train(
        trial.hyperparameters,
        config.trials.cem,
        env,
        &ms.train,
        trial.seed,
    )?;
    let (returns, metrics) = validation_returns(&mut agent, env, split, ms)?;
    Ok(SplitOutcome { returns, metrics })
}

/// Trains the winner on the whole training window and replays `test`.
pub fn retrain_and_test(
    hyperparameters: HyperparameterSet,
    seed: u64,
    config: &ExperimentConfig,
    train_env: &TradingEnv<'_>,
    train_range: Range<usize>,
    test_env: &TradingEnv<'_>,
    test: Range<usize>,
) -> Result<(CemAgent, Episode), HarnessError> {
    let mut agent = train(
        hyperparameters,
        config.trials.cem,
        train_env,
        &[train_range],
        seed,
    )?;
    let episode = run_episode(test_env, &mut agent, test)?;
    Ok((agent, episode))
}

fn index_episode(
    series: &ValueSeries,
    timestamps: &[i64],
    initial_cash: f64,
) -> Result<Episode, HarnessError> {
    let values = series.aligned_to(timestamps)?;
    let base = values[0];
    if !(base.is_finite() && base > 0.0) {
        return Err(HarnessError::Data(format!(
            "benchmark index starts at {base}"
        )));
    }
    let equity: Vec<f64> = values.iter().map(|v| initial_cash * v / base).collect();
    Ok(Episode {
        timestamps: timestamps.to_vec(),
        returns: equity.windows(2).map(|w| w[1] - w[0]).collect(),
        equity,
        ..Episode::default()
    })
}

pub fn backtest_record(strategy: &str, risk_control: bool, episode: Episode) -> BacktestRecord {
    BacktestRecord {
        strategy: strategy.to_string(),
        risk_control,
        metrics: PerfMetrics::from_equity(&episode.equity),
        initial_value: episode.initial_value(),
        final_value: episode.final_value(),
        total_fees: episode.total_fees,
        n_trades: episode.trades.len(),
        episode,
    }
}

/// Everything computed before any file is written.
pub fn run_experiment(
    config: &ExperimentConfig,
    jobs: usize,
) -> Result<ExperimentReport, HarnessError> {
    config.validate()?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs.max(1))
        .build()
        .map_err(|e| HarnessError::Config(e.to_string()))?;
    pool.install(|| run_in_pool(config))
}

fn echo(config: &ExperimentConfig) -> ExperimentConfig {
    ExperimentConfig {
        output_dir: None,
        ..config.clone()
    }
}

fn run_in_pool(config: &ExperimentConfig) -> Result<ExperimentReport, HarnessError> {
    let plan = config.splits.plan()?;
    let mut report = ExperimentReport::new(echo(config), plan.clone());
    let mut matrices: Vec<(String, TrialMatrix)> = Vec::new();

    if !config.data.assets.is_empty() {
        run_market(config, &plan, &mut report, &mut matrices)?;
    }
    if let Some(path) = &config.data.external_trials {
        let trials = import_external_trials(&config.resolve(path))?;
        let m = build_trial_matrix(&trials, &plan)?;
        matrices.push(("external".into(), m));
    }

    for (family, m) in matrices {
        let result = estimate_pbo(&m, &config.pbo)
            .map_err(|e| HarnessError::context(format!("family {family}"), e))?;
        report.pbo.push(FamilyPbo {
            family,
            trial_ids: m.trial_ids().to_vec(),
            result,
            matrix: Some(m),
        });
    }
    report.files = report.planned_files();
    report.content_hash = content_hash(&report);
    Ok(report)
}

/// Data shared by every stage that touches the market.
#[derive(Debug, Clone)]
pub struct MarketContext {
    pub panel: Panel,
    pub align: AlignReport,
    pub windows: Windows,
    /// Rows `[0, train.end)`; nothing later is visible to training.
    pub train_panel: Panel,
    pub features: FeatureSet,
    /// First usable training row after the indicator warm-up.
    pub first: usize,
    /// Rows `[0, test.end)` with the selected feature columns.
    pub test_panel: Panel,
    pub test_features: FeatureMatrix,
    pub cvix: Option<ValueSeries>,
}

impl MarketContext {
    pub fn load(config: &ExperimentConfig) -> Result<Self, HarnessError> {
        let (panel, align) = load_panel(config)?;
        let windows = resolve_windows(config, &panel)?;
        let train_panel = panel.slice(0, windows.train.end)?;
        let features = select_features(config, &train_panel)?;
        let first = windows.train.start.max(features.train.warmup());
        if first + 2 > windows.train.end {
            return Err(HarnessError::Data(format!(
                "indicator warm-up of {} rows leaves no training data",
                features.train.warmup()
            )));
        }
        let test_panel = panel.slice(0, windows.test.end)?;
        let test_features =
            build_features(&test_panel, &config.features.indicators)?.select(&features.names)?;
        let cvix = config
            .data
            .cvix
            .as_deref()
            .map(|p| load_value_series(config, p))
            .transpose()?;
        Ok(Self {
            panel,
            align,
            windows,
            train_panel,
            features,
            first,
            test_panel,
            test_features,
            cvix,
        })
    }

    pub fn train_range(&self) -> Range<usize> {
        self.first..self.windows.train.end
    }

    pub fn train_env(&self, config: &ExperimentConfig) -> Result<TradingEnv<'_>, HarnessError> {
        Ok(TradingEnv::new(
            &self.train_panel,
            &self.features.train,
            config.env.clone(),
        )?)
    }

    /// Test-window environment, with the volatility halt when requested and configured.
    pub fn test_env(
        &self,
        config: &ExperimentConfig,
        risk_control: bool,
    ) -> Result<TradingEnv<'_>, HarnessError> {
        let env = TradingEnv::new(&self.test_panel, &self.test_features, config.env.clone())?;
        Ok(match (&self.cvix, risk_control) {
            (Some(series), true) => env.with_cvix(series),
            _ => env,
        })
    }

    pub fn partition(&self, plan: &SplitPlan) -> Result<GroupPartition, HarnessError> {
        Ok(GroupPartition::with_offset(
            self.first,
            self.windows.train.end - self.first,
            plan.n,
        )?)
    }
}

fn run_market(
    config: &ExperimentConfig,
    plan: &SplitPlan,
    report: &mut ExperimentReport,
    matrices: &mut Vec<(String, TrialMatrix)>,
) -> Result<(), HarnessError> {
    let ctx = MarketContext::load(config)?;
    let train_env = ctx.train_env(config)?;
    let partition = ctx.partition(plan)?;
    let materialized = materialize(plan, &partition, config.splits.embargo)?;
    let test_env = ctx.test_env(config, true)?;
    report.set_data(
        &ctx.panel,
        &ctx.align,
        &ctx.windows,
        ctx.first,
        &partition,
        &ctx.features,
    );

    if config.trials.enabled {
        let trials = sample_trials(
            &config.trials.grid,
            config.trials.h,
            config.trials.sampler,
            config.trials.master_seed,
        )?;
        let jobs: Vec<(usize, usize)> = (0..trials.len())
            .flat_map(|i| (0..materialized.len()).map(move |j| (i, j)))
            .collect();
        let outcomes: Vec<SplitOutcome> = jobs
            .par_iter()
            .map(|&(i, j)| {
                run_split(&trials[i], j, &materialized[j], &train_env, config)
                    .map_err(|e| HarnessError::context(format!("trial {i}, split {j}"), e))
            })
            .collect::<Result<_, _>>()?;

        let mut returns = Vec::with_capacity(trials.len());
        let mut outcomes = outcomes.into_iter();
        for t in &trials {
            let splits: Vec<SplitOutcome> = outcomes.by_ref().take(materialized.len()).collect();
            let metrics: Vec<PerfMetrics> = splits
                .iter()
                .flat_map(|s| s.metrics.iter().copied())
                .collect();
            report.trials.push(TrialRecord::new(
                t,
                &metrics,
                config.trials.selection_metric,
            ));
            returns.push(TrialReturns {
                trial_id: format!("trial_{}", t.index),
                splits: splits.into_iter().map(|s| s.returns).collect(),
            });
        }
        matrices.push(("cem".into(), build_trial_matrix(&returns, plan)?));

        let selected = select_trial(&report.trials);
        report.selected_trial = Some(selected);

        let to_test: Vec<usize> = if config.trials.test_all_trials {
            (0..trials.len()).collect()
        } else {
            vec![selected]
        };
        let tested: Vec<(usize, CemAgent, Episode)> = to_test
            .par_iter()
            .map(|&i| {
                retrain_and_test(
                    trials[i].hyperparameters,
                    trials[i].seed,
                    config,
                    &train_env,
                    ctx.train_range(),
                    &test_env,
                    ctx.windows.test.clone(),
                )
                .map(|(agent, ep)| (i, agent, ep))
                .map_err(|e| HarnessError::context(format!("retraining trial {i}"), e))
            })
            .collect::<Result<_, _>>()?;
        for (i, agent, ep) in tested {
            report.trials[i].test = Some(PerfMetrics::from_equity(&ep.equity));
            if i == selected {
                report
                    .backtests
                    .push(backtest_record("cem_selected", ctx.cvix.is_some(), ep));
                report.selected_agent = Some(agent);
            }
        }
    }

    let plain_test_env = ctx.test_env(config, false)?;
    let ew = run_episode(
        &plain_test_env,
        &mut EqualWeight::new(config.env.fee_rate),
        ctx.windows.test.clone(),
    )?;
    report
        .backtests
        .push(backtest_record("equal_weight", false, ew));
    if let Some(path) = &config.data.benchmark_index {
        let series = load_value_series(config, path)?;
        let ts = &ctx.panel.timestamps()[ctx.windows.test.clone()];
        report.backtests.push(backtest_record(
            "index",
            false,
            index_episode(&series, ts, config.env.initial_cash)?,
        ));
    }
    Ok(())
}

/// Index of the highest mean validation metric; ties go to the lower index.
pub fn select_trial(trials: &[TrialRecord]) -> usize {
    let mut best = 0;
    for (i, t) in trials.iter().enumerate() {
        if t.validation_metric > trials[best].validation_metric {
            best = i;
        }
    }
    best
}
