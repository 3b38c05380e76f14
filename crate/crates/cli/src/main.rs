use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};

use overfit_core::agents::{BuyHold, CemAgent, EqualWeight, Momentum, Policy, RandomAgent};
use overfit_core::harness::{
    backtest_record, emit_report, run_experiment, sample_trials, write_synthetic_dataset,
    ExperimentConfig, ExperimentReport, HarnessError, MarketContext,
};
use overfit_core::market_data::{pearson_matrix, write_bars};
use overfit_core::pbo::{
    estimate_pbo, gate, histogram_svg, write_logits_csv, Metric, PboConfig, PboError, PboMode,
    TrialMatrix, Verdict,
};
use overfit_core::splits::{materialize, GroupPartition, Scheme};
use overfit_core::synthetic::SyntheticConfig;
use overfit_core::trading_env::{run_episode, write_equity_csv, write_trades_csv};

// Writes to stdout, ignoring a closed pipe.
macro_rules! out {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = write!(std::io::stdout(), $($t)*);
    }};
}

macro_rules! outln {
    ($($t:tt)*) => {{
        use std::io::Write as _;
        let _ = writeln!(std::io::stdout(), $($t)*);
    }};
}

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;
const EXIT_REJECT: u8 = 3;

/// Detects backtest overfitting of trading-strategy hyperparameter searches.
#[derive(Parser, Debug)]
#[command(name = "overfit", version)]
struct Cli {
    /// Experiment config (TOML, or JSON by extension).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Overrides the master seed of the config.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    jobs: Option<usize>,
    /// Output directory; overrides the config.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Load and align the configured asset CSVs.
    Ingest,
    /// Compute indicators on the train window and filter correlated ones.
    Features,
    /// Print a split plan, and its row ranges when a length is given.
    Splits {
        #[arg(long, value_enum)]
        scheme: Option<SchemeArg>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        train_fraction: Option<f64>,
        /// Number of rows to partition into groups.
        #[arg(long)]
        len: Option<usize>,
        #[arg(long, default_value_t = 0)]
        embargo: usize,
    },
    /// Sample the hyperparameter trials of the config.
    Trials,
    /// Estimate the probability of backtest overfitting of a trial matrix CSV.
    Pbo {
        /// CSV with a timestamp column followed by one column per trial.
        #[arg(long)]
        matrix: PathBuf,
        #[arg(long)]
        s: Option<usize>,
        #[arg(long, value_enum)]
        metric: Option<MetricArg>,
        #[arg(long)]
        alpha: Option<f64>,
        /// Evaluate this many random combinations instead of all of them.
        #[arg(long)]
        sampled: Option<u64>,
    },
    /// Apply the hypothesis gate to a given probability.
    Gate {
        #[arg(long)]
        p: f64,
        #[arg(long, default_value_t = 0.10)]
        alpha: f64,
    },
    /// Replay one strategy on the test window.
    Backtest {
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        /// Trained agent JSON, required for `cem`.
        #[arg(long)]
        agent: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        asset: usize,
        #[arg(long, default_value_t = 20)]
        lookback: usize,
    },
    /// Summarise an emitted report.json.
    Report {
        #[arg(long)]
        report: PathBuf,
    },
    /// Run the full experiment and write every artifact.
    Run,
    /// Write a synthetic dataset and a matching config.
    Synth {
        #[arg(long, default_value_t = 3)]
        assets: usize,
        #[arg(long, default_value_t = 1500)]
        bars: usize,
        /// Trials in the generated config.
        #[arg(long, default_value_t = 10)]
        trials: usize,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum SchemeArg {
    Wf,
    Kfold,
    Combinatorial,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MetricArg {
    Sharpe,
    CumulativeReturn,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StrategyArg {
    EqualWeight,
    BuyHold,
    Momentum,
    Random,
    Cem,
}

/// Error raised for bad invocations rather than bad data.
#[derive(Debug)]
struct UsageError(String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

fn usage(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn exit_code_for(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return EXIT_USAGE;
        }
        if let Some(h) = cause.downcast_ref::<HarnessError>() {
            return if h.is_config() { EXIT_USAGE } else { EXIT_DATA };
        }
        if let Some(p) = cause.downcast_ref::<PboError>() {
            return match p {
                PboError::OddS(_)
                | PboError::SmallS(_)
                | PboError::BadAlpha(_)
                | PboError::CapExceeded { .. } => EXIT_USAGE,
                _ => EXIT_DATA,
            };
        }
    }
    EXIT_DATA
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(exit_code_for(&e))
        }
    }
}

fn load_config(cli: &Cli) -> Result<ExperimentConfig> {
    let path = cli
        .config
        .as_ref()
        .ok_or_else(|| usage("--config is required for this command"))?;
    let mut config = ExperimentConfig::load(path)?;
    if let Some(seed) = cli.seed {
        config.trials.master_seed = seed;
    }
    Ok(config)
}

fn out_dir(cli: &Cli, config: Option<&ExperimentConfig>) -> PathBuf {
    if let Some(out) = &cli.out {
        return out.clone();
    }
    match config.and_then(|c| c.output_dir.as_deref().map(|d| c.resolve(d))) {
        Some(dir) => dir,
        None => PathBuf::from("out"),
    }
}

fn jobs(cli: &Cli) -> usize {
    cli.jobs
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

fn write(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).with_context(|| format!("creating {}", parent.display()))?;
    }
    fs::write(path, bytes).with_context(|| format!("writing {}", path.display()))
}

fn dispatch(cli: &Cli) -> Result<u8> {
    match &cli.command {
        Command::Ingest => ingest(cli),
        Command::Features => features(cli),
        Command::Splits {
            scheme,
            n,
            k,
            train_fraction,
            len,
            embargo,
        } => splits(cli, *scheme, *n, *k, *train_fraction, *len, *embargo),
        Command::Trials => trials(cli),
        Command::Pbo {
            matrix,
            s,
            metric,
            alpha,
            sampled,
        } => pbo(cli, matrix, *s, *metric, *alpha, *sampled),
        Command::Gate { p, alpha } => gate_cmd(*p, *alpha),
        Command::Backtest {
            strategy,
            agent,
            asset,
            lookback,
        } => backtest(cli, *strategy, agent.as_deref(), *asset, *lookback),
        Command::Report { report } => report_cmd(report),
        Command::Run => run(cli),
        Command::Synth {
            assets,
            bars,
            trials,
        } => synth(cli, *assets, *bars, *trials),
    }
}

fn ingest(cli: &Cli) -> Result<u8> {
    let config = load_config(cli)?;
    let (panel, report) = overfit_core::harness::load_panel(&config)?;
    let dir = out_dir(cli, Some(&config)).join("aligned");
    for (d, asset) in panel.assets().iter().enumerate() {
        let mut buf = Vec::new();
        write_bars(&mut buf, panel.bars(d))?;
        write(&dir.join(format!("{asset}.csv")), buf)?;
    }
    outln!("{}", serde_json::to_string_pretty(&report)?);
    Ok(0)
}

fn features(cli: &Cli) -> Result<u8> {
    let config = load_config(cli)?;
    let ctx = MarketContext::load(&config)?;
    let dir = out_dir(cli, Some(&config));
    let mut buf = Vec::new();
    ctx.features.train.write_csv(&mut buf)?;
    write(&dir.join("features.csv"), buf)?;
    let all =
        overfit_core::market_data::build_features(&ctx.train_panel, &config.features.indicators)?;
    let mut report = pearson_matrix(&all, config.features.pooling)?;
    report.threshold = config.features.correlation_threshold;
    report.kept = ctx.features.names.clone();
    report.dropped = ctx.features.dropped.clone();
    write(
        &dir.join("correlation.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    outln!("kept: {}", ctx.features.names.join(", "));
    for d in &ctx.features.dropped {
        outln!(
            "dropped {} (|rho| = {:.3} with {})",
            d.feature,
            d.rho.abs(),
            d.partner
        );
    }
    Ok(0)
}

fn splits(
    cli: &Cli,
    scheme: Option<SchemeArg>,
    n: Option<usize>,
    k: Option<usize>,
    train_fraction: Option<f64>,
    len: Option<usize>,
    embargo: usize,
) -> Result<u8> {
    let mut split_config = match &cli.config {
        Some(_) => load_config(cli)?.splits,
        None => Default::default(),
    };
    if let Some(s) = scheme {
        split_config.scheme = match s {
            SchemeArg::Wf => Scheme::WalkForward,
            SchemeArg::Kfold => Scheme::KFold,
            SchemeArg::Combinatorial => Scheme::Combinatorial,
        };
    }
    split_config.n = n.unwrap_or(split_config.n);
    split_config.k = k.unwrap_or(split_config.k);
    split_config.train_fraction = train_fraction.unwrap_or(split_config.train_fraction);
    let plan = split_config.plan()?;
    outln!("{}", plan.to_json());
    if let Some(len) = len {
        let partition = GroupPartition::new(len, plan.n).map_err(|e| usage(e.to_string()))?;
        let ranges = materialize(&plan, &partition, embargo).map_err(|e| usage(e.to_string()))?;
        outln!("{}", serde_json::to_string(&ranges)?);
    }
    Ok(0)
}

fn trials(cli: &Cli) -> Result<u8> {
    let config = load_config(cli)?;
    let t = sample_trials(
        &config.trials.grid,
        config.trials.h,
        config.trials.sampler,
        config.trials.master_seed,
    )?;
    outln!("{}", serde_json::to_string_pretty(&t)?);
    Ok(0)
}

fn pbo(
    cli: &Cli,
    matrix: &Path,
    s: Option<usize>,
    metric: Option<MetricArg>,
    alpha: Option<f64>,
    sampled: Option<u64>,
) -> Result<u8> {
    let mut cfg = match &cli.config {
        Some(_) => load_config(cli)?.pbo,
        None => PboConfig::default(),
    };
    cfg.s = s.unwrap_or(cfg.s);
    cfg.alpha = alpha.unwrap_or(cfg.alpha);
    if let Some(m) = metric {
        cfg.metric = match m {
            MetricArg::Sharpe => Metric::Sharpe,
            MetricArg::CumulativeReturn => Metric::CumulativeReturn,
        };
    }
    if let Some(n) = sampled {
        cfg.mode = PboMode::Sampled {
            n,
            seed: cli.seed.unwrap_or(0),
        };
    }
    let file = fs::File::open(matrix).with_context(|| format!("opening {}", matrix.display()))?;
    let m = TrialMatrix::read_csv(file)?;
    let result = estimate_pbo(&m, &cfg)?;
    let dir = out_dir(cli, None);
    write(&dir.join("pbo.json"), result.to_json())?;
    let mut buf = Vec::new();
    write_logits_csv(&mut buf, &[("matrix", &result)])?;
    write(&dir.join("logits.csv"), buf)?;
    write(
        &dir.join("logit_hist.svg"),
        histogram_svg(&[("matrix", &result)]),
    )?;
    outln!(
        "p = {:.6} over {} combinations (S = {}, H = {}): {}",
        result.p,
        result.combination_count,
        result.s,
        result.h,
        result.verdict
    );
    Ok(if result.verdict == Verdict::Reject {
        EXIT_REJECT
    } else {
        0
    })
}

fn gate_cmd(p: f64, alpha: f64) -> Result<u8> {
    if !(0.0..=1.0).contains(&p) {
        return Err(usage(format!("p must be in [0, 1], got {p}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(usage(format!("alpha must be in (0, 1), got {alpha}")));
    }
    let verdict = gate(p, alpha);
    outln!("{verdict}");
    Ok(if verdict == Verdict::Reject {
        EXIT_REJECT
    } else {
        0
    })
}

fn backtest(
    cli: &Cli,
    strategy: StrategyArg,
    agent: Option<&Path>,
    asset: usize,
    lookback: usize,
) -> Result<u8> {
    let config = load_config(cli)?;
    let ctx = MarketContext::load(&config)?;
    let fee = config.env.fee_rate;
    let (name, mut policy, risk_control): (&str, Box<dyn Policy>, bool) = match strategy {
        StrategyArg::EqualWeight => ("equal_weight", Box::new(EqualWeight::new(fee)), false),
        StrategyArg::BuyHold => ("buy_hold", Box::new(BuyHold::new(asset, fee)), false),
        StrategyArg::Momentum => ("momentum", Box::new(Momentum::new(lookback, fee)), false),
        StrategyArg::Random => (
            "random",
            Box::new(RandomAgent::new(cli.seed.unwrap_or(0), fee)),
            false,
        ),
        StrategyArg::Cem => {
            let path = agent.ok_or_else(|| usage("--agent is required for the cem strategy"))?;
            let text =
                fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            ("cem", Box::new(CemAgent::from_json(&text)?), true)
        }
    };
    let env = ctx.test_env(&config, risk_control)?;
    let episode = run_episode(&env, policy.as_mut(), ctx.windows.test.clone())?;
    let dir = out_dir(cli, Some(&config));
    let mut buf = Vec::new();
    write_equity_csv(&mut buf, &episode.timestamps, &episode.equity)?;
    write(&dir.join(format!("equity_{name}.csv")), buf)?;
    let mut buf = Vec::new();
    write_trades_csv(&mut buf, &episode.trades)?;
    write(&dir.join(format!("trades_{name}.csv")), buf)?;
    let record = backtest_record(name, risk_control && ctx.cvix.is_some(), episode);
    outln!("{}", serde_json::to_string_pretty(&record)?);
    Ok(0)
}

fn report_cmd(path: &Path) -> Result<u8> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let report = ExperimentReport::from_json(&text)?;
    let recomputed = overfit_core::harness::content_hash(&report);
    out!("{}", report.summary());
    if recomputed != report.content_hash {
        bail!(
            "content hash mismatch: file says {}, contents hash to {recomputed}",
            report.content_hash
        );
    }
    Ok(if report.any_rejected() {
        EXIT_REJECT
    } else {
        0
    })
}

fn run(cli: &Cli) -> Result<u8> {
    let config = load_config(cli)?;
    let report = run_experiment(&config, jobs(cli))?;
    let dir = out_dir(cli, Some(&config));
    emit_report(&report, &dir)?;
    out!("{}", report.summary());
    Ok(if report.any_rejected() {
        EXIT_REJECT
    } else {
        0
    })
}

fn synth(cli: &Cli, assets: usize, bars: usize, trials: usize) -> Result<u8> {
    if assets == 0 || bars < 200 {
        return Err(usage("need at least one asset and 200 bars"));
    }
    let synth = SyntheticConfig {
        n_assets: assets,
        n_bars: bars,
        seed: cli.seed.unwrap_or(7),
        ..Default::default()
    };
    let dir = cli
        .out
        .clone()
        .unwrap_or_else(|| PathBuf::from("synthetic"));
    let (_, market) = write_synthetic_dataset(&synth, &dir, trials)?;
    outln!(
        "wrote {} assets x {} bars to {} (drifts {:?})",
        assets,
        bars,
        dir.display(),
        market.drifts
    );
    Ok(0)
}
