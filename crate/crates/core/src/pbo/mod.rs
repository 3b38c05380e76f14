//! Probability of backtest overfitting via combinatorially symmetric
//! cross-validation.
//!
//! The trial matrix `M` (timesteps x trials) is cut into `S` contiguous
//! row blocks. For every choice of `S/2` in-sample blocks the trial with
//! the best in-sample metric is located, its out-of-sample rank `r` turned
//! into `omega = r / (H + 1)` and the logit `lambda = ln(omega / (1 - omega))`.
//! `p` is the share of combinations with `lambda < 0`, counting
//! `lambda = 0` as half.

mod cscv;
mod matrix;
mod report;

use serde::{Deserialize, Serialize};

pub use cscv::{
    estimate_pbo, evaluate_combination, partition_rows, unrank_combination, Blocks,
    CombinationSample, Metric, PboConfig, PboMode, DEFAULT_ALPHA, DEFAULT_CAP, DEFAULT_S,
};
pub use matrix::{build_trial_matrix, SplitReturns, TrialMatrix, TrialReturns};
pub use report::{histogram_svg, write_logits_csv, Histogram, PboResult};

#[derive(Debug, thiserror::Error)]
pub enum PboError {
    #[error("S must be even, got {0}")]
    OddS(usize),
    #[error("S must be at least 2, got {0}")]
    SmallS(usize),
    #[error("S = {s} exceeds the {rows} matrix rows")]
    STooLarge { s: usize, rows: usize },
    #[error("need at least 2 trials, got {0}")]
    TooFewTrials(usize),
    #[error("non-finite value at row {row}, trial {trial}")]
    NonFinite { row: usize, trial: String },
    #[error("malformed matrix: {0}")]
    Shape(String),
    #[error("no trials supplied")]
    NoTrials,
    #[error("trial {trial} has no returns for split {split}")]
    MissingSplit { trial: String, split: usize },
    #[error("trial {trial}, split {split}: {message}")]
    Ragged {
        trial: String,
        split: usize,
        message: String,
    },
    #[error("non-finite return for trial {trial}, split {split}")]
    NonFiniteReturn { trial: String, split: usize },
    #[error("{count} combinations exceed the exhaustive cap {cap}")]
    CapExceeded { count: u64, cap: u64 },
    #[error("combination count C({s}, {half}) overflows")]
    Overflow { s: usize, half: usize },
    #[error("sample size must be >= 1")]
    EmptySample,
    #[error("invalid combination: {0}")]
    BadCombination(String),
    #[error("alpha must be in (0, 1), got {0}")]
    BadAlpha(f64),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("row {row}: {message}")]
    Parse { row: usize, message: String },
    #[error("I/O error: {0}")]
    Io(String),
}

/// Outcome of the overfitting hypothesis test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum Verdict {
    /// Not overfitted: `p < alpha`.
    Accept,
    /// Overfitted: `p >= alpha`.
    Reject,
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Verdict::Accept => "ACCEPT",
            Verdict::Reject => "REJECT",
        })
    }
}

/// Rejects iff `p >= alpha`.
pub fn gate(p: f64, alpha: f64) -> Verdict {
    if p >= alpha {
        Verdict::Reject
    } else {
        Verdict::Accept
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn gate_boundaries() {
        assert_eq!(gate(0.175, 0.10), Verdict::Reject);
        assert_eq!(gate(0.079, 0.10), Verdict::Accept);
        assert_eq!(gate(0.10, 0.10), Verdict::Reject);
        assert_eq!(gate(0.0, 0.10), Verdict::Accept);
    }
}
