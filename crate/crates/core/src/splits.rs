//! Training/validation split plans over `N` equal, contiguous groups.
//!
//! Combinatorial plans enumerate every choice of `k` validation groups in
//! lexicographic order, so split `j` of `make_combinatorial(n, k)` is the
//! `j`-th `k`-subset of `0..n` in that order.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::stats::binomial;

#[derive(Debug, thiserror::Error)]
pub enum SplitError {
    #[error("need at least 2 groups, got {0}")]
    TooFewGroups(usize),
    #[error("k = {k} must satisfy 1 <= k <= N - 1 (N = {n})")]
    BadK { n: usize, k: usize },
    #[error("train fraction must be in (0, 1), got {0}")]
    BadFraction(f64),
    #[error("{len} points cannot fill {n} groups")]
    TooShort { len: usize, n: usize },
    #[error("split plan is inconsistent: {0}")]
    Invalid(String),
    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Scheme {
    #[serde(rename = "WF", alias = "wf", alias = "walk_forward")]
    WalkForward,
    #[serde(rename = "KFOLD", alias = "kfold")]
    KFold,
    #[serde(rename = "COMBINATORIAL", alias = "combinatorial")]
    Combinatorial,
}

/// Group indices used for training and validation in one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub scheme: Scheme,
    pub n: usize,
    /// Validation groups per split.
    pub k: usize,
    pub splits: Vec<Split>,
}

impl SplitPlan {
    /// Number of splits `J`.
    pub fn j(&self) -> usize {
        self.splits.len()
    }

    /// How many splits validate on `group`.
    pub fn validation_count(&self, group: usize) -> usize {
        self.splits
            .iter()
            .filter(|s| s.validation.contains(&group))
            .count()
    }

    /// Checks disjointness, coverage and the split count of combinatorial plans.
    pub fn validate(&self) -> Result<(), SplitError> {
        if self.n < 2 {
            return Err(SplitError::TooFewGroups(self.n));
        }
        if self.splits.is_empty() {
            return Err(SplitError::Invalid("no splits".into()));
        }
        for (j, s) in self.splits.iter().enumerate() {
            let mut seen = vec![0u8; self.n];
            for &g in s.train.iter().chain(&s.validation) {
                if g >= self.n {
                    return Err(SplitError::Invalid(format!(
                        "split {j}: group {g} >= N = {}",
                        self.n
                    )));
                }
                seen[g] += 1;
            }
            if seen.iter().any(|&c| c != 1) {
                return Err(SplitError::Invalid(format!(
                    "split {j}: train and validation must partition all {} groups",
                    self.n
                )));
            }
            if s.validation.is_empty() || s.train.is_empty() {
                return Err(SplitError::Invalid(format!("split {j}: empty side")));
            }
            if s.validation.len() != self.k {
                return Err(SplitError::Invalid(format!(
                    "split {j}: {} validation groups, expected k = {}",
                    s.validation.len(),
                    self.k
                )));
            }
        }
        if self.scheme == Scheme::Combinatorial {
            let expected = binomial(self.n as u64, self.k as u64).unwrap_or(u64::MAX);
            if self.splits.len() as u64 != expected {
                return Err(SplitError::Invalid(format!(
                    "{} combinatorial splits, expected C({}, {}) = {expected}",
                    self.splits.len(),
                    self.n,
                    self.k
                )));
            }
            let mut vals: Vec<&Vec<usize>> = self.splits.iter().map(|s| &s.validation).collect();
            vals.sort();
            vals.dedup();
            if vals.len() != self.splits.len() {
                return Err(SplitError::Invalid("repeated validation set".into()));
            }
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("split plans always serialize")
    }

    /// Parses and validates a plan exported by [`SplitPlan::to_json`] or an external tool.
    pub fn from_json(s: &str) -> Result<Self, SplitError> {
        let mut plan: SplitPlan = serde_json::from_str(s)?;
        for split in &mut plan.splits {
            split.train.sort_unstable();
            split.validation.sort_unstable();
        }
        plan.validate()?;
        Ok(plan)
    }
}

fn complement(n: usize, chosen: &[usize]) -> Vec<usize> {
    (0..n).filter(|g| !chosen.contains(g)).collect()
}

/// All `k`-subsets of `0..n` in lexicographic order.
pub fn k_subsets(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        // rightmost position that can still advance
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// Every choice of `k` validation groups out of `n`, training on the rest.
pub fn make_combinatorial(n: usize, k: usize) -> Result<SplitPlan, SplitError> {
    if n < 2 {
        return Err(SplitError::TooFewGroups(n));
    }
    if k == 0 || k >= n {
        return Err(SplitError::BadK { n, k });
    }
    let splits = k_subsets(n, k)
        .into_iter()
        .map(|validation| Split {
            train: complement(n, &validation),
            validation,
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::Combinatorial,
        n,
        k,
        splits,
    })
}

/// One chronological split: the leading `round(fraction * n)` groups train
/// (clamped to `1..=n-1`), the rest validate.
pub fn make_walk_forward(n: usize, train_fraction: f64) -> Result<SplitPlan, SplitError> {
    if n < 2 {
        return Err(SplitError::TooFewGroups(n));
    }
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(SplitError::BadFraction(train_fraction));
    }
    let n_train = ((train_fraction * n as f64).round() as usize).clamp(1, n - 1);
    let split = Split {
        train: (0..n_train).collect(),
        validation: (n_train..n).collect(),
    };
    Ok(SplitPlan {
        scheme: Scheme::WalkForward,
        n,
        k: n - n_train,
        splits: vec![split],
    })
}

/// `n` splits, each validating on one group.
pub fn make_kfold(n: usize) -> Result<SplitPlan, SplitError> {
    if n < 2 {
        return Err(SplitError::TooFewGroups(n));
    }
    let splits = (0..n)
        .map(|g| Split {
            train: complement(n, &[g]),
            validation: vec![g],
        })
        .collect();
    Ok(SplitPlan {
        scheme: Scheme::KFold,
        n,
        k: 1,
        splits,
    })
}

/// `n` equal contiguous groups over `len` points starting at `offset`;
/// the `len % n` trailing points are dropped.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct GroupPartition {
    pub offset: usize,
    pub n: usize,
    pub group_size: usize,
}

impl GroupPartition {
    pub fn new(len: usize, n: usize) -> Result<Self, SplitError> {
        Self::with_offset(0, len, n)
    }

    pub fn with_offset(offset: usize, len: usize, n: usize) -> Result<Self, SplitError> {
        if n < 2 {
            return Err(SplitError::TooFewGroups(n));
        }
        if len < n {
            return Err(SplitError::TooShort { len, n });
        }
        Ok(Self {
            offset,
            n,
            group_size: len / n,
        })
    }

    /// `n + 1` ascending indices.
    pub fn boundaries(&self) -> Vec<usize> {
        (0..=self.n)
            .map(|g| self.offset + g * self.group_size)
            .collect()
    }

    pub fn group(&self, g: usize) -> Range<usize> {
        let start = self.offset + g * self.group_size;
        start..start + self.group_size
    }

    /// Covered index range `[offset, offset + n * group_size)`.
    pub fn span(&self) -> Range<usize> {
        self.offset..self.offset + self.n * self.group_size
    }

    /// Group containing `index`, if covered.
    pub fn group_of(&self, index: usize) -> Option<usize> {
        if self.span().contains(&index) {
            Some((index - self.offset) / self.group_size)
        } else {
            None
        }
    }
}

/// Concrete index ranges of one split.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MaterializedSplit {
    /// Contiguous training runs after the embargo is removed.
    pub train: Vec<Range<usize>>,
    /// One range per validation group, in group order.
    pub validation: Vec<Range<usize>>,
}

impl MaterializedSplit {
    pub fn train_len(&self) -> usize {
        self.train.iter().map(|r| r.len()).sum()
    }
}

/// Turns group indices into index ranges, removing `embargo` training
/// points on each side of every validation group.
pub fn materialize(
    plan: &SplitPlan,
    partition: &GroupPartition,
    embargo: usize,
) -> Result<Vec<MaterializedSplit>, SplitError> {
    if plan.n != partition.n {
        return Err(SplitError::Invalid(format!(
            "plan has N = {} but partition has {} groups",
            plan.n, partition.n
        )));
    }
    let out = plan
        .splits
        .iter()
        .map(|split| {
            let is_val = |g: usize| split.validation.contains(&g);
            let mut train: Vec<Range<usize>> = Vec::new();
            let mut g = 0;
            while g < plan.n {
                if is_val(g) {
                    g += 1;
                    continue;
                }
                let first = g;
                while g < plan.n && !is_val(g) {
                    g += 1;
                }
                let mut start = partition.group(first).start;
                let mut end = partition.group(g - 1).end;
                if first > 0 {
                    start += embargo;
                }
                if g < plan.n {
                    end = end.saturating_sub(embargo);
                }
                if start < end {
                    train.push(start..end);
                }
            }
            let validation = split
                .validation
                .iter()
                .map(|&g| partition.group(g))
                .collect();
            MaterializedSplit { train, validation }
        })
        .collect();
    Ok(out)
}
