//! Cross-entropy-method search over a linear-softmax allocation policy.
//!
//! The policy maps a normalised state, optionally widened with fixed
//! random `tanh` features, through a linear layer to softmax weights over
//! the `D` assets plus cash. Weights become unit targets; differences
//! smaller than the rebalance band are not traded.
//!
//! Hyperparameters map onto the search as follows (see [`CemScale`]):
//! `batch_size` sets the population, `net_dimension` the expansion width,
//! `target_step` the rollout horizon, `break_step` the total environment
//! steps, `step_size` the smoothing rate of the sampling distribution and
//! `gamma` the discount applied when scoring rollouts.

use std::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{AgentError, HyperparameterSet, Policy};
use crate::trading_env::{ActionVector, MarketState, TradingEnv};

/// Conversion from grid hyperparameters to search settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CemScale {
    /// `population = ceil(batch_size / batch_per_candidate)`, at least 2.
    pub batch_per_candidate: usize,
    /// `width = net_dimension / net_dim_per_unit`.
    pub net_dim_per_unit: usize,
    /// `horizon = target_step / horizon_divisor`.
    pub horizon_divisor: usize,
    /// `budget = break_step / budget_divisor` environment steps.
    pub budget_divisor: usize,
    /// `smoothing = min(1, step_size * step_size_gain)`.
    pub step_size_gain: f64,
    pub elite_fraction: f64,
    /// Initial sampling std of the bias weights; the others start at
    /// `init_std / sqrt(basis_len)`.
    pub init_std: f64,
    /// Floor on the sampling std during the search.
    pub min_std: f64,
    /// Trades smaller than this fraction of portfolio value are suppressed.
    pub rebalance_band: f64,
}

impl Default for CemScale {
    fn default() -> Self {
        Self {
            batch_per_candidate: 128,
            net_dim_per_unit: 128,
            horizon_divisor: 25,
            budget_divisor: 1,
            step_size_gain: 30.0,
            elite_fraction: 0.2,
            init_std: 0.5,
            min_std: 0.01,
            rebalance_band: 0.05,
        }
    }
}

/// Concrete search settings derived from a [`HyperparameterSet`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CemSchedule {
    pub population: usize,
    pub width: usize,
    pub horizon: usize,
    pub budget: usize,
    pub smoothing: f64,
    pub gamma: f64,
    pub n_elite: usize,
}

impl CemSchedule {
    pub fn new(hp: &HyperparameterSet, scale: &CemScale) -> Self {
        let population = hp
            .batch_size
            .div_ceil(scale.batch_per_candidate.max(1))
            .max(2);
        let n_elite =
            ((population as f64 * scale.elite_fraction).ceil() as usize).clamp(1, population);
        Self {
            population,
            width: hp.net_dimension / scale.net_dim_per_unit.max(1),
            horizon: (hp.target_step / scale.horizon_divisor.max(1)).max(1),
            budget: hp.break_step / scale.budget_divisor.max(1),
            smoothing: (hp.step_size * scale.step_size_gain).clamp(0.0, 1.0),
            gamma: hp.gamma,
            n_elite,
        }
    }

    /// Number of CEM generations the budget pays for; 0 only when the budget is 0.
    pub fn generations(&self) -> usize {
        if self.budget == 0 {
            0
        } else {
            (self.budget / (self.population * self.horizon)).max(1)
        }
    }
}

/// Per-column statistics fitted on training rows only.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Normalizer {
    pub ref_price: Vec<f64>,
    pub feature_mean: Vec<f64>,
    pub feature_std: Vec<f64>,
}

impl Normalizer {
    pub fn fit(env: &TradingEnv<'_>, ranges: &[Range<usize>]) -> Self {
        let d = env.n_assets();
        let fm = env.features();
        let w = fm.width();
        let rows: Vec<usize> = ranges.iter().flat_map(|r| r.clone()).collect();
        let n = rows.len().max(1) as f64;
        let mut ref_price = vec![0.0; d];
        let mut mean = vec![0.0; w];
        for &t in &rows {
            for (i, p) in env.panel().closes_at(t).iter().enumerate() {
                ref_price[i] += p / n;
            }
            for (c, v) in fm.row(t).iter().enumerate() {
                mean[c] += v / n;
            }
        }
        let mut var = vec![0.0; w];
        for &t in &rows {
            for (c, v) in fm.row(t).iter().enumerate() {
                var[c] += (v - mean[c]) * (v - mean[c]) / n;
            }
        }
        let feature_std = var
            .iter()
            .map(|v| if *v > 0.0 { v.sqrt() } else { 1.0 })
            .collect();
        Self {
            ref_price,
            feature_mean: mean,
            feature_std,
        }
    }
}

/// Trained policy parameters; serialisable for replay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemModel {
    pub n_assets: usize,
    pub input_dim: usize,
    pub width: usize,
    /// `width x input_dim` fixed random projection.
    pub expansion: Vec<f64>,
    /// `(n_assets + 1) x basis_len` linear layer.
    pub theta: Vec<f64>,
    pub normalizer: Normalizer,
    pub fee_rate: f64,
    pub rebalance_band: f64,
}

impl CemModel {
    pub fn basis_len(&self) -> usize {
        1 + self.input_dim + self.width
    }

    pub fn n_params(&self) -> usize {
        (self.n_assets + 1) * self.basis_len()
    }

    /// Checks that every array agrees with the declared dimensions.
    pub fn check_shape(&self) -> Result<(), AgentError> {
        let d = self.n_assets;
        let features = self.input_dim.checked_sub(1 + 2 * d);
        let bad = |what: &str| Err(AgentError::Config(format!("inconsistent model: {what}")));
        if d == 0 {
            return bad("no assets");
        }
        let Some(f) = features else {
            return bad("input_dim too small for the asset count");
        };
        if Some(self.expansion.len()) != self.width.checked_mul(self.input_dim) {
            return bad("expansion size");
        }
        if self.theta.len() != self.n_params() {
            return bad("theta size");
        }
        let n = &self.normalizer;
        if n.ref_price.len() != d || n.feature_mean.len() != f || n.feature_std.len() != f {
            return bad("normalizer size");
        }
        Ok(())
    }

    fn inputs(&self, state: &MarketState) -> Vec<f64> {
        let value = state.portfolio_value();
        let v = if value > 0.0 { value } else { 1.0 };
        let mut z = Vec::with_capacity(self.input_dim);
        z.push(state.cash / v);
        z.extend(
            state
                .prices
                .iter()
                .zip(&state.holdings)
                .map(|(p, h)| p * h / v),
        );
        z.extend(
            state
                .prices
                .iter()
                .zip(&self.normalizer.ref_price)
                .map(|(p, r)| (p / r).ln()),
        );
        z.extend(
            state
                .features
                .iter()
                .zip(
                    self.normalizer
                        .feature_mean
                        .iter()
                        .zip(&self.normalizer.feature_std),
                )
                .map(|(f, (m, s))| ((f - m) / s).clamp(-5.0, 5.0)),
        );
        z
    }

    fn basis(&self, state: &MarketState) -> Vec<f64> {
        let z = self.inputs(state);
        let mut x = Vec::with_capacity(self.basis_len());
        x.push(1.0);
        x.extend_from_slice(&z);
        for row in self
            .expansion
            .chunks(self.input_dim.max(1))
            .take(self.width)
        {
            let dot: f64 = row.iter().zip(&z).map(|(w, v)| w * v).sum();
            x.push(dot.tanh());
        }
        x
    }

    /// Softmax allocation over the assets followed by cash.
    pub fn target_weights(&self, theta: &[f64], state: &MarketState) -> Vec<f64> {
        let x = self.basis(state);
        let logits: Vec<f64> = theta
            .chunks(x.len())
            .map(|row| row.iter().zip(&x).map(|(w, v)| w * v).sum())
            .collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let exps: Vec<f64> = logits.iter().map(|l| (l - max).exp()).collect();
        let total: f64 = exps.iter().sum();
        exps.iter().map(|e| e / total).collect()
    }

    fn action_for(&self, theta: &[f64], state: &MarketState) -> ActionVector {
        let w = self.target_weights(theta, state);
        let value = state.portfolio_value();
        (0..self.n_assets)
            .map(|i| {
                let p = state.prices[i];
                let target = w[i] * value / (p * (1.0 + self.fee_rate));
                let diff = target - state.holdings[i];
                if (diff * p).abs() < self.rebalance_band * value {
                    0.0
                } else {
                    diff
                }
            })
            .collect::<Vec<_>>()
            .into()
    }

    pub fn action(&self, state: &MarketState) -> ActionVector {
        self.action_for(&self.theta, state)
    }
}

impl Policy for CemModel {
    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        if state.n_assets() != self.n_assets {
            return Err(AgentError::Config(format!(
                "model trained for {} assets, state has {}",
                self.n_assets,
                state.n_assets()
            )));
        }
        if state.features.len() != self.normalizer.feature_mean.len() {
            return Err(AgentError::Config(format!(
                "model expects {} feature columns, state has {}",
                self.normalizer.feature_mean.len(),
                state.features.len()
            )));
        }
        Ok(self.action(state))
    }
}

/// The trainable agent: hyperparameters, seed, and (once trained) a model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CemAgent {
    pub hyperparameters: HyperparameterSet,
    pub scale: CemScale,
    pub seed: u64,
    pub model: Option<CemModel>,
}

impl CemAgent {
    pub fn untrained(hyperparameters: HyperparameterSet, scale: CemScale, seed: u64) -> Self {
        Self {
            hyperparameters,
            scale,
            seed,
            model: None,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("agents always serialize")
    }

    pub fn from_json(s: &str) -> Result<Self, AgentError> {
        let agent: Self = serde_json::from_str(s).map_err(|e| AgentError::Config(e.to_string()))?;
        if let Some(m) = &agent.model {
            m.check_shape()?;
        }
        Ok(agent)
    }
}

impl Policy for CemAgent {
    fn act(&mut self, state: &MarketState) -> Result<ActionVector, AgentError> {
        match &mut self.model {
            Some(m) => m.act(state),
            None => Err(AgentError::Untrained),
        }
    }
}

fn rollout_score(
    env: &TradingEnv<'_>,
    model: &CemModel,
    theta: &[f64],
    window: Range<usize>,
    gamma: f64,
) -> Result<f64, AgentError> {
    let mut state = env.reset(window)?;
    let scale = env.config().initial_cash;
    let mut discount = 1.0;
    let mut score = 0.0;
    while !state.is_terminal() {
        let action = model.action_for(theta, &state);
        let step = env.step(&state, &action)?;
        score += discount * step.reward / scale;
        discount *= gamma;
        state = step.next_state;
    }
    Ok(score)
}

fn pick_window(ranges: &[Range<usize>], horizon: usize, rng: &mut ChaCha8Rng) -> Range<usize> {
    let total: usize = ranges.iter().map(|r| r.len()).sum();
    let mut pick = rng.random_range(0..total);
    let range = ranges
        .iter()
        .find(|r| {
            if pick < r.len() {
                true
            } else {
                pick -= r.len();
                false
            }
        })
        .expect("pick < total");
    let steps = horizon.min(range.len() - 1);
    let start = rng.random_range(range.start..=range.end - steps - 1);
    start..start + steps + 1
}

/// Trains a [`CemAgent`] on rollouts drawn from `train_ranges` only.
///
/// Every candidate of a generation is scored on the same window;
/// candidates are evaluated in parallel and reduced in candidate order,
/// so the result depends only on `seed`.
pub fn train(
    hyperparameters: HyperparameterSet,
    scale: CemScale,
    env: &TradingEnv<'_>,
    train_ranges: &[Range<usize>],
    seed: u64,
) -> Result<CemAgent, AgentError> {
    let ranges: Vec<Range<usize>> = train_ranges
        .iter()
        .filter(|r| r.len() >= 2)
        .cloned()
        .collect();
    if ranges.is_empty() {
        return Err(AgentError::DegenerateWindow);
    }
    if !(hyperparameters.gamma > 0.0 && hyperparameters.gamma <= 1.0) {
        return Err(AgentError::Hyperparameter(format!(
            "gamma {} outside (0, 1]",
            hyperparameters.gamma
        )));
    }
    let schedule = CemSchedule::new(&hyperparameters, &scale);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let n_assets = env.n_assets();
    let input_dim = 1 + 2 * n_assets + env.features().width();
    let norm = 1.0 / (input_dim as f64).sqrt();
    let expansion: Vec<f64> = (0..schedule.width * input_dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal) * norm)
        .collect();
    let mut model = CemModel {
        n_assets,
        input_dim,
        width: schedule.width,
        expansion,
        theta: Vec::new(),
        normalizer: Normalizer::fit(env, &ranges),
        fee_rate: env.config().fee_rate,
        rebalance_band: scale.rebalance_band,
    };
    let n_params = model.n_params();
    let mut mean = vec![0.0; n_params];
    let basis_len = model.basis_len();
    let mut std: Vec<f64> = (0..n_params)
        .map(|p| {
            if p % basis_len == 0 {
                scale.init_std
            } else {
                scale.init_std / (basis_len as f64).sqrt()
            }
        })
        .collect();
    let alpha = schedule.smoothing;

    for _ in 0..schedule.generations() {
        let window = pick_window(&ranges, schedule.horizon, &mut rng);
        let candidates: Vec<Vec<f64>> = (0..schedule.population)
            .map(|_| {
                mean.iter()
                    .zip(&std)
                    .map(|(m, s)| m + s * rng.sample::<f64, _>(StandardNormal))
                    .collect()
            })
            .collect();
        let scores: Vec<f64> = candidates
            .par_iter()
            .map(|theta| rollout_score(env, &model, theta, window.clone(), schedule.gamma))
            .collect::<Result<_, _>>()?;
        let mut order: Vec<usize> = (0..candidates.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let elites = &order[..schedule.n_elite];
        let k = elites.len() as f64;
        for p in 0..n_params {
            let em = elites.iter().map(|&e| candidates[e][p]).sum::<f64>() / k;
            let ev = elites
                .iter()
                .map(|&e| (candidates[e][p] - em).powi(2))
                .sum::<f64>()
                / k;
            mean[p] = (1.0 - alpha) * mean[p] + alpha * em;
            std[p] = ((1.0 - alpha) * std[p] + alpha * ev.sqrt()).max(scale.min_std);
        }
    }

    model.theta = mean;
    Ok(CemAgent {
        hyperparameters,
        scale,
        seed,
        model: Some(model),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::agents::{evaluate, DoNothing};
    use crate::market_data::{Bar, FeatureMatrix, Panel};
    use crate::trading_env::EnvConfig;

    fn rising() -> (Panel, FeatureMatrix) {
        let n = 200;
        let bars = (0..n)
            .map(|t| {
                let c = 100.0 * (1.0 + 0.002 * t as f64);
                Bar {
                    timestamp: t as i64,
                    open: c,
                    high: c,
                    low: c,
                    close: c,
                    volume: 1.0 + (t % 7) as f64,
                }
            })
            .collect();
        let panel = Panel::new(vec!["UP".into()], vec![bars]).unwrap();
        let values = (0..n).map(|t| (t % 7) as f64).collect();
        let fm = FeatureMatrix::new(
            vec!["UP".into()],
            panel.timestamps().to_vec(),
            vec!["volume".into()],
            values,
            0,
        )
        .unwrap();
        (panel, fm)
    }

    fn hp(break_step: usize) -> HyperparameterSet {
        HyperparameterSet {
            step_size: 0.03,
            batch_size: 512,
            gamma: 0.99,
            net_dimension: 512,
            target_step: 1250,
            break_step,
        }
    }

    #[test]
    fn schedule_mapping() {
        let s = CemSchedule::new(&hp(30_000), &CemScale::default());
        assert_eq!(s.population, 4);
        assert_eq!(s.width, 4);
        assert_eq!(s.horizon, 50);
        assert_eq!(s.budget, 30_000);
        assert_eq!(s.generations(), 150);
        assert!((s.smoothing - 0.9).abs() < 1e-12);
        assert_eq!(
            CemSchedule::new(&hp(0), &CemScale::default()).generations(),
            0
        );
    }

    #[test]
    fn zero_budget_returns_initialisation() {
        let (p, f) = rising();
        let env = TradingEnv::new(
            &p,
            &f,
            EnvConfig {
                fee_rate: 0.0,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        let agent = train(hp(0), CemScale::default(), &env, &[0..200], 1).unwrap();
        assert!(agent.model.unwrap().theta.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn same_seed_same_parameters() {
        let (p, f) = rising();
        let env = TradingEnv::new(&p, &f, EnvConfig::default()).unwrap();
        let a = train(
            hp(30_000),
            CemScale::default(),
            &env,
            &[0..100, 120..200],
            9,
        )
        .unwrap();
        let b = train(
            hp(30_000),
            CemScale::default(),
            &env,
            &[0..100, 120..200],
            9,
        )
        .unwrap();
        assert_eq!(a, b);
        let c = train(
            hp(30_000),
            CemScale::default(),
            &env,
            &[0..100, 120..200],
            10,
        )
        .unwrap();
        assert_ne!(a.model.unwrap().theta, c.model.unwrap().theta);
    }

    #[test]
    fn beats_do_nothing_on_rising_market() {
        let (p, f) = rising();
        let env = TradingEnv::new(
            &p,
            &f,
            EnvConfig {
                fee_rate: 0.0,
                ..EnvConfig::default()
            },
        )
        .unwrap();
        let mut agent = train(hp(30_000), CemScale::default(), &env, &[0..200], 3).unwrap();
        let trained = evaluate(&mut agent, &env, 0..200).unwrap();
        let idle = evaluate(&mut DoNothing, &env, 0..200).unwrap();
        assert!(trained.metrics.cumulative_return >= idle.metrics.cumulative_return);
        assert!(trained.metrics.cumulative_return > 0.0);
    }

    #[test]
    fn untrained_agent_refuses_to_act() {
        let (p, f) = rising();
        let env = TradingEnv::new(&p, &f, EnvConfig::default()).unwrap();
        let mut agent = CemAgent::untrained(hp(10), CemScale::default(), 0);
        let s = env.reset(0..10).unwrap();
        assert!(matches!(agent.act(&s), Err(AgentError::Untrained)));
    }

    #[test]
    fn degenerate_training_window() {
        let (p, f) = rising();
        let env = TradingEnv::new(&p, &f, EnvConfig::default()).unwrap();
        assert!(matches!(
            train(hp(100), CemScale::default(), &env, &[5..6], 0),
            Err(AgentError::DegenerateWindow)
        ));
    }

    #[test]
    fn agent_json_round_trip() {
        let (p, f) = rising();
        let env = TradingEnv::new(&p, &f, EnvConfig::default()).unwrap();
        let agent = train(hp(5_000), CemScale::default(), &env, &[0..200], 4).unwrap();
        let back = CemAgent::from_json(&agent.to_json()).unwrap();
        assert_eq!(agent, back);

        let mut broken = agent.clone();
        broken.model.as_mut().unwrap().theta.pop();
        assert!(CemAgent::from_json(&broken.to_json()).is_err());
    }
}
