use std::ops::Range;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::report::{Histogram, PboResult};
use super::{gate, PboError, TrialMatrix};
use crate::stats::binomial;

pub const DEFAULT_S: usize = 14;
pub const DEFAULT_ALPHA: f64 = 0.10;
/// Largest combination count evaluated exhaustively by default.
pub const DEFAULT_CAP: u64 = 1_000_000;
const DEFAULT_BINS: usize = 20;

/// Per-trial performance score inside a block set.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    /// Mean over population standard deviation. With zero variance the
    /// score is 0, `+inf` or `-inf` following the sign of the mean.
    #[default]
    Sharpe,
    /// Sum of the per-row returns.
    CumulativeReturn,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE", tag = "kind")]
pub enum PboMode {
    /// Exhaustive up to the cap, otherwise `cap` sampled combinations.
    #[default]
    Auto,
    Exhaustive,
    /// `n` distinct combinations drawn uniformly without replacement.
    Sampled {
        n: u64,
        seed: u64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PboConfig {
    #[serde(rename = "S", alias = "s")]
    pub s: usize,
    pub metric: Metric,
    pub mode: PboMode,
    pub cap: u64,
    pub alpha: f64,
    pub bins: usize,
    /// Seed for `Auto` when it falls back to sampling.
    pub seed: u64,
}

impl Default for PboConfig {
    fn default() -> Self {
        Self {
            s: DEFAULT_S,
            metric: Metric::Sharpe,
            mode: PboMode::Auto,
            cap: DEFAULT_CAP,
            alpha: DEFAULT_ALPHA,
            bins: DEFAULT_BINS,
            seed: 0,
        }
    }
}

/// Running count, sum, mean and sum of squared deviations.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Moments {
    n: usize,
    sum: f64,
    mean: f64,
    m2: f64,
}

impl Moments {
    const EMPTY: Moments = Moments {
        n: 0,
        sum: 0.0,
        mean: 0.0,
        m2: 0.0,
    };

    fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        if n == 0 {
            return Self::EMPTY;
        }
        let sum: f64 = xs.iter().sum();
        if xs.iter().all(|&x| x == xs[0]) {
            return Moments {
                n,
                sum,
                mean: xs[0],
                m2: 0.0,
            };
        }
        let mean = sum / n as f64;
        let m2 = xs.iter().map(|x| (x - mean) * (x - mean)).sum();
        Moments { n, sum, mean, m2 }
    }

    fn merge(self, other: Moments) -> Moments {
        if self.n == 0 {
            return other;
        }
        if other.n == 0 {
            return self;
        }
        let n = self.n + other.n;
        let (na, nb, nf) = (self.n as f64, other.n as f64, n as f64);
        let delta = other.mean - self.mean;
        Moments {
            n,
            sum: self.sum + other.sum,
            mean: self.mean + delta * nb / nf,
            m2: self.m2 + other.m2 + delta * delta * na * nb / nf,
        }
    }

    fn score(&self, metric: Metric) -> f64 {
        let v = match metric {
            Metric::CumulativeReturn => self.sum,
            Metric::Sharpe if self.m2 > 0.0 => self.mean / (self.m2 / self.n as f64).sqrt(),
            Metric::Sharpe if self.mean > 0.0 => f64::INFINITY,
            Metric::Sharpe if self.mean < 0.0 => f64::NEG_INFINITY,
            Metric::Sharpe => 0.0,
        };
        // keep -0.0 and 0.0 in the same rank class
        if v == 0.0 {
            0.0
        } else {
            v
        }
    }
}

/// `S` contiguous row blocks of a trial matrix with per-block moments.
#[derive(Debug, Clone)]
pub struct Blocks {
    s: usize,
    h: usize,
    ranges: Vec<Range<usize>>,
    stats: Vec<Moments>,
}

impl Blocks {
    pub fn s(&self) -> usize {
        self.s
    }

    pub fn n_trials(&self) -> usize {
        self.h
    }

    /// Row range of every block; trailing remainder rows belong to none.
    pub fn ranges(&self) -> &[Range<usize>] {
        &self.ranges
    }

    pub fn rows_per_block(&self) -> usize {
        self.ranges[0].len()
    }
}

/// Cuts `m` into `s` chronological blocks of `floor(T_rows / s)` rows.
pub fn partition_rows(m: &TrialMatrix, s: usize) -> Result<Blocks, PboError> {
    if s < 2 {
        return Err(PboError::SmallS(s));
    }
    if s % 2 != 0 {
        return Err(PboError::OddS(s));
    }
    if s > m.n_rows() {
        return Err(PboError::STooLarge {
            s,
            rows: m.n_rows(),
        });
    }
    let size = m.n_rows() / s;
    let h = m.n_trials();
    let ranges: Vec<Range<usize>> = (0..s).map(|b| b * size..(b + 1) * size).collect();
    let mut stats = Vec::with_capacity(s * h);
    for r in &ranges {
        for i in 0..h {
            let col: Vec<f64> = r.clone().map(|row| m.get(row, i)).collect();
            stats.push(Moments::of(&col));
        }
    }
    Ok(Blocks {
        s,
        h,
        ranges,
        stats,
    })
}

/// One IS/OOS split of the blocks and its logit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CombinationSample {
    pub is_blocks: Vec<usize>,
    pub oos_blocks: Vec<usize>,
    pub is_perf: Vec<f64>,
    pub oos_perf: Vec<f64>,
    /// Index of the best in-sample trial.
    pub epsilon: usize,
    /// Out-of-sample rank of `epsilon`, 1 = worst.
    pub oos_rank: usize,
    pub omega: f64,
    pub lambda: f64,
}

/// Ascending ranks `1..=H`; ties go to the lower index first.
fn ranks(values: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]).then(a.cmp(&b)));
    let mut r = vec![0; values.len()];
    for (pos, &i) in order.iter().enumerate() {
        r[i] = pos + 1;
    }
    r
}

fn perf(blocks: &Blocks, chosen: &[usize], metric: Metric) -> Vec<f64> {
    (0..blocks.h)
        .map(|i| {
            chosen
                .iter()
                .fold(Moments::EMPTY, |acc, &b| {
                    acc.merge(blocks.stats[b * blocks.h + i])
                })
                .score(metric)
        })
        .collect()
}

/// Scores one choice of in-sample blocks; the rest are out-of-sample.
pub fn evaluate_combination(
    blocks: &Blocks,
    is_blocks: &[usize],
    metric: Metric,
) -> Result<CombinationSample, PboError> {
    let half = blocks.s / 2;
    if is_blocks.len() != half
        || is_blocks.windows(2).any(|w| w[0] >= w[1])
        || is_blocks.iter().any(|&b| b >= blocks.s)
    {
        return Err(PboError::BadCombination(format!(
            "{is_blocks:?} is not {half} ascending blocks below {}",
            blocks.s
        )));
    }
    let oos_blocks: Vec<usize> = (0..blocks.s).filter(|b| !is_blocks.contains(b)).collect();
    let is_perf = perf(blocks, is_blocks, metric);
    let oos_perf = perf(blocks, &oos_blocks, metric);
    let h = blocks.h;
    let is_rank = ranks(&is_perf);
    let epsilon = is_rank
        .iter()
        .position(|&r| r == h)
        .expect("ranks are a permutation");
    let oos_rank = ranks(&oos_perf)[epsilon];
    let omega = oos_rank as f64 / (h + 1) as f64;
    // ln(r) - ln(H + 1 - r) is exactly +-ln H at the extremes and 0 at the median
    let lambda = (oos_rank as f64).ln() - ((h + 1 - oos_rank) as f64).ln();
    Ok(CombinationSample {
        is_blocks: is_blocks.to_vec(),
        oos_blocks,
        is_perf,
        oos_perf,
        epsilon,
        oos_rank,
        omega,
        lambda,
    })
}

/// The `index`-th `k`-subset of `0..n` in lexicographic order.
pub fn unrank_combination(n: usize, k: usize, mut index: u64) -> Option<Vec<usize>> {
    if index >= binomial(n as u64, k as u64)? {
        return None;
    }
    let mut out = Vec::with_capacity(k);
    let mut next = 0;
    while out.len() < k {
        let remaining = (k - out.len() - 1) as u64;
        let with = binomial((n - next - 1) as u64, remaining)?;
        if index < with {
            out.push(next);
        } else {
            index -= with;
        }
        next += 1;
    }
    Some(out)
}

/// Estimates the probability of backtest overfitting of the trials in `m`.
pub fn estimate_pbo(m: &TrialMatrix, config: &PboConfig) -> Result<PboResult, PboError> {
    let h = m.n_trials();
    if h < 2 {
        return Err(PboError::TooFewTrials(h));
    }
    if !(config.alpha > 0.0 && config.alpha < 1.0) {
        return Err(PboError::BadAlpha(config.alpha));
    }
    let blocks = partition_rows(m, config.s)?;
    let half = config.s / 2;
    let total =
        binomial(config.s as u64, half as u64).ok_or(PboError::Overflow { s: config.s, half })?;

    let mode = match config.mode {
        PboMode::Auto if total <= config.cap => PboMode::Exhaustive,
        PboMode::Auto => PboMode::Sampled {
            n: config.cap,
            seed: config.seed,
        },
        PboMode::Exhaustive if total > config.cap => {
            return Err(PboError::CapExceeded {
                count: total,
                cap: config.cap,
            })
        }
        other => other,
    };
    let indices: Vec<u64> = match mode {
        PboMode::Sampled { n, seed } => {
            if n == 0 {
                return Err(PboError::EmptySample);
            }
            let n = n.min(total);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let mut picked: Vec<u64> =
                rand::seq::index::sample(&mut rng, total as usize, n as usize)
                    .into_iter()
                    .map(|i| i as u64)
                    .collect();
            picked.sort_unstable();
            picked
        }
        _ => (0..total).collect(),
    };

    let lambdas: Vec<f64> = indices
        .par_iter()
        .map(|&ix| {
            let is_blocks = unrank_combination(config.s, half, ix).expect("index below C(S, S/2)");
            evaluate_combination(&blocks, &is_blocks, config.metric).map(|c| c.lambda)
        })
        .collect::<Result<_, _>>()?;

    let below = lambdas.iter().filter(|&&l| l < 0.0).count() as f64;
    let at = lambdas.iter().filter(|&&l| l == 0.0).count() as f64;
    let p = (below + 0.5 * at) / lambdas.len() as f64;
    Ok(PboResult {
        p,
        alpha: config.alpha,
        verdict: gate(p, config.alpha),
        s: config.s,
        h,
        rows_per_block: blocks.rows_per_block(),
        metric: config.metric,
        mode,
        combination_count: lambdas.len() as u64,
        total_combinations: total,
        histogram: Histogram::new(&lambdas, h, config.bins.max(1)),
        lambdas,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::splits::k_subsets;

    fn matrix(cols: &[Vec<f64>]) -> TrialMatrix {
        TrialMatrix::from_columns(cols).unwrap()
    }

    #[test]
    fn unranking_matches_lexicographic_enumeration() {
        for n in [2, 4, 6, 8, 14] {
            let all = k_subsets(n, n / 2);
            for (i, c) in all.iter().enumerate() {
                assert_eq!(&unrank_combination(n, n / 2, i as u64).unwrap(), c);
            }
            assert_eq!(unrank_combination(n, n / 2, all.len() as u64), None);
        }
    }

    #[test]
    fn block_layout() {
        let m = matrix(&[vec![0.0; 29], vec![1.0; 29]]);
        let b = partition_rows(&m, 14).unwrap();
        assert_eq!(b.ranges().len(), 14);
        assert!(b.ranges().iter().all(|r| r.len() == 2));
        assert_eq!(b.ranges()[13], 26..28);
        assert!(matches!(partition_rows(&m, 3), Err(PboError::OddS(3))));
        assert!(matches!(
            partition_rows(&m, 30),
            Err(PboError::STooLarge { .. })
        ));
    }

    #[test]
    fn two_trials_swapped_ranks() {
        // IS block favours trial 1, OOS block favours trial 0
        let m = matrix(&[vec![0.0, 1.0, 3.0, 2.0], vec![2.0, 3.0, 0.0, 1.0]]);
        let b = partition_rows(&m, 2).unwrap();
        let c = evaluate_combination(&b, &[0], Metric::CumulativeReturn).unwrap();
        assert_eq!(c.epsilon, 1);
        assert_eq!(c.oos_rank, 1);
        assert!((c.omega - 1.0 / 3.0).abs() < 1e-15);
        assert!((c.lambda - 0.5f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn median_rank_gives_zero_logit() {
        // 9 trials; IS ranks follow the index, OOS puts trial 8 in the middle
        let oos = [0.0, 1.0, 2.0, 3.0, 5.0, 6.0, 7.0, 8.0, 4.5];
        let cols: Vec<Vec<f64>> = (0..9).map(|i| vec![i as f64, oos[i]]).collect();
        let b = partition_rows(&matrix(&cols), 2).unwrap();
        let c = evaluate_combination(&b, &[0], Metric::CumulativeReturn).unwrap();
        assert_eq!((c.epsilon, c.oos_rank), (8, 5));
        assert_eq!(c.omega, 0.5);
        assert_eq!(c.lambda, 0.0);
    }

    #[test]
    fn dominant_column_has_zero_pbo() {
        let mut cols: Vec<Vec<f64>> = (0..4)
            .map(|i| (0..28).map(|t| ((t * 7 + i * 3) % 5) as f64).collect())
            .collect();
        cols.push((0..28).map(|t| 10.0 + (t % 3) as f64).collect());
        let r = estimate_pbo(&matrix(&cols), &PboConfig::default()).unwrap();
        assert_eq!(r.p, 0.0);
        assert_eq!(r.combination_count, 3432);
        assert!(r.lambdas.iter().all(|&l| l == 5f64.ln()));
    }

    #[test]
    fn zero_variance_sharpe_orders_by_sign() {
        let m = Moments::of(&[0.0, 0.0]);
        assert_eq!(m.score(Metric::Sharpe), 0.0);
        assert_eq!(
            Moments::of(&[0.1, 0.1, 0.1]).score(Metric::Sharpe),
            f64::INFINITY
        );
        assert_eq!(
            Moments::of(&[-0.3; 4]).score(Metric::Sharpe),
            f64::NEG_INFINITY
        );
        let merged = Moments::of(&[0.1; 3]).merge(Moments::of(&[0.1; 5]));
        assert_eq!(merged.m2, 0.0);
    }

    #[test]
    fn sampled_with_full_count_equals_exhaustive() {
        let cols: Vec<Vec<f64>> = (0..4)
            .map(|i| {
                (0..24)
                    .map(|t| ((t * 13 + i * 5) % 11) as f64 - 5.0)
                    .collect()
            })
            .collect();
        let m = matrix(&cols);
        let cfg = PboConfig {
            s: 8,
            ..PboConfig::default()
        };
        let ex = estimate_pbo(&m, &cfg).unwrap();
        for seed in [0, 1, 99] {
            let sm = estimate_pbo(
                &m,
                &PboConfig {
                    mode: PboMode::Sampled { n: 70, seed },
                    ..cfg.clone()
                },
            )
            .unwrap();
            assert_eq!(sm.lambdas, ex.lambdas);
            assert_eq!(sm.p, ex.p);
        }
    }

    #[test]
    fn exhaustive_over_cap_is_refused_and_auto_samples() {
        let cols: Vec<Vec<f64>> = (0..3)
            .map(|i| (0..16).map(|t| ((t + i) % 4) as f64).collect())
            .collect();
        let m = matrix(&cols);
        let cfg = PboConfig {
            s: 8,
            cap: 10,
            ..PboConfig::default()
        };
        assert!(matches!(
            estimate_pbo(
                &m,
                &PboConfig {
                    mode: PboMode::Exhaustive,
                    ..cfg.clone()
                }
            ),
            Err(PboError::CapExceeded { count: 70, cap: 10 })
        ));
        let auto = estimate_pbo(&m, &cfg).unwrap();
        assert_eq!(auto.combination_count, 10);
        assert_eq!(auto.mode, PboMode::Sampled { n: 10, seed: 0 });
    }
}
