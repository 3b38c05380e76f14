use std::collections::BTreeMap;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::PboError;
use crate::market_data::parse_timestamp;
use crate::splits::SplitPlan;

/// Validation returns of one trial on one split, in chronological order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitReturns {
    pub split: usize,
    pub timestamps: Vec<i64>,
    pub returns: Vec<f64>,
}

/// All validation returns of one trial.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialReturns {
    pub trial_id: String,
    pub splits: Vec<SplitReturns>,
}

/// Row-major `T_rows x H` grid of per-timestep returns.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialMatrix {
    trial_ids: Vec<String>,
    timestamps: Vec<i64>,
    values: Vec<f64>,
}

impl TrialMatrix {
    pub fn new(
        trial_ids: Vec<String>,
        timestamps: Vec<i64>,
        values: Vec<f64>,
    ) -> Result<Self, PboError> {
        if trial_ids.is_empty() {
            return Err(PboError::NoTrials);
        }
        if values.len() != trial_ids.len() * timestamps.len() {
            return Err(PboError::Shape(format!(
                "{} values for {} rows x {} trials",
                values.len(),
                timestamps.len(),
                trial_ids.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            let h = trial_ids.len();
            return Err(PboError::NonFinite {
                row: i / h,
                trial: trial_ids[i % h].clone(),
            });
        }
        if timestamps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(PboError::Shape(
                "row timestamps must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            trial_ids,
            timestamps,
            values,
        })
    }

    /// Builds a matrix from column vectors with row indices as timestamps.
    pub fn from_columns(columns: &[Vec<f64>]) -> Result<Self, PboError> {
        let h = columns.len();
        let t = columns.first().map_or(0, Vec::len);
        if columns.iter().any(|c| c.len() != t) {
            return Err(PboError::Shape("columns differ in length".into()));
        }
        let values = (0..t)
            .flat_map(|r| columns.iter().map(move |c| c[r]))
            .collect();
        Self::new(
            (0..h).map(|i| i.to_string()).collect(),
            (0..t as i64).collect(),
            values,
        )
    }

    pub fn trial_ids(&self) -> &[String] {
        &self.trial_ids
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn n_trials(&self) -> usize {
        self.trial_ids.len()
    }

    pub fn get(&self, row: usize, trial: usize) -> f64 {
        self.values[row * self.n_trials() + trial]
    }

    pub fn row(&self, row: usize) -> &[f64] {
        let h = self.n_trials();
        &self.values[row * h..(row + 1) * h]
    }

    pub fn column(&self, trial: usize) -> Vec<f64> {
        (0..self.n_rows()).map(|r| self.get(r, trial)).collect()
    }

    /// Keeps the listed trial columns, in the given order.
    pub fn select_trials(&self, trials: &[usize]) -> Result<Self, PboError> {
        if let Some(&bad) = trials.iter().find(|&&i| i >= self.n_trials()) {
            return Err(PboError::Shape(format!("trial index {bad} out of range")));
        }
        let ids = trials.iter().map(|&i| self.trial_ids[i].clone()).collect();
        let values = (0..self.n_rows())
            .flat_map(|r| trials.iter().map(move |&i| self.get(r, i)))
            .collect();
        Self::new(ids, self.timestamps.clone(), values)
    }

    /// CSV with a `timestamp` column followed by one column per trial.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), PboError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend(self.trial_ids.iter().cloned());
        w.write_record(&header)?;
        for (r, ts) in self.timestamps.iter().enumerate() {
            let mut rec = vec![ts.to_string()];
            rec.extend(self.row(r).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| PboError::Io(e.to_string()))
    }

    pub fn read_csv<R: Read>(reader: R) -> Result<Self, PboError> {
        let mut rdr = csv::ReaderBuilder::new()
            .has_headers(true)
            .from_reader(reader);
        let headers = rdr.headers()?.clone();
        if headers.get(0).map(str::trim) != Some("timestamp") {
            return Err(PboError::Parse {
                row: 0,
                message: "first column must be timestamp".into(),
            });
        }
        let trial_ids: Vec<String> = headers
            .iter()
            .skip(1)
            .map(|h| h.trim().to_string())
            .collect();
        let mut timestamps = Vec::new();
        let mut values = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec?;
            let row = i + 1;
            if rec.len() != trial_ids.len() + 1 {
                return Err(PboError::Parse {
                    row,
                    message: format!("expected {} fields", trial_ids.len() + 1),
                });
            }
            let ts = parse_timestamp(rec[0].trim()).ok_or_else(|| PboError::Parse {
                row,
                message: format!("bad timestamp {:?}", &rec[0]),
            })?;
            timestamps.push(ts);
            for field in rec.iter().skip(1) {
                let v: f64 = field.trim().parse().map_err(|_| PboError::Parse {
                    row,
                    message: format!("bad value {field:?}"),
                })?;
                values.push(v);
            }
        }
        Self::new(trial_ids, timestamps, values)
    }
}

fn by_split(t: &TrialReturns, j: usize) -> Result<Vec<&SplitReturns>, PboError> {
    let mut out: Vec<Option<&SplitReturns>> = vec![None; j];
    for s in &t.splits {
        let slot = out.get_mut(s.split).ok_or_else(|| PboError::Ragged {
            trial: t.trial_id.clone(),
            split: s.split,
            message: format!("plan has only {j} splits"),
        })?;
        if slot.replace(s).is_some() {
            return Err(PboError::Ragged {
                trial: t.trial_id.clone(),
                split: s.split,
                message: "split listed twice".into(),
            });
        }
        if s.timestamps.len() != s.returns.len() {
            return Err(PboError::Ragged {
                trial: t.trial_id.clone(),
                split: s.split,
                message: "timestamps and returns differ in length".into(),
            });
        }
        if s.returns.iter().any(|v| !v.is_finite()) {
            return Err(PboError::NonFiniteReturn {
                trial: t.trial_id.clone(),
                split: s.split,
            });
        }
    }
    out.into_iter()
        .enumerate()
        .map(|(split, s)| {
            s.ok_or_else(|| PboError::MissingSplit {
                trial: t.trial_id.clone(),
                split,
            })
        })
        .collect()
}

/// Stacks validation returns into the trial matrix.
///
/// Row `t` of column `i` is the mean of trial `i`'s return at timestamp
/// `t` over every split that validates `t`. Every trial must cover the
/// same timestamps on every split of `plan`.
pub fn build_trial_matrix(
    trials: &[TrialReturns],
    plan: &SplitPlan,
) -> Result<TrialMatrix, PboError> {
    let first = trials.first().ok_or(PboError::NoTrials)?;
    let j = plan.j();

    let reference = by_split(first, j)?;
    let mut counts: BTreeMap<i64, usize> = BTreeMap::new();
    for s in &reference {
        for &ts in &s.timestamps {
            *counts.entry(ts).or_default() += 1;
        }
    }
    let row_of: BTreeMap<i64, usize> = counts.keys().enumerate().map(|(i, &ts)| (ts, i)).collect();
    let h = trials.len();
    let mut sums = vec![0.0; counts.len() * h];

    for (i, trial) in trials.iter().enumerate() {
        let splits = by_split(trial, j)?;
        for (s, r) in splits.iter().zip(&reference) {
            if s.timestamps != r.timestamps {
                let message = match s.timestamps.iter().zip(&r.timestamps).find(|(a, b)| a != b) {
                    Some((got, want)) => format!("timestamp {got} where {want} was expected"),
                    None => format!(
                        "{} timestamps, expected {}",
                        s.timestamps.len(),
                        r.timestamps.len()
                    ),
                };
                return Err(PboError::Ragged {
                    trial: trial.trial_id.clone(),
                    split: s.split,
                    message,
                });
            }
            for (ts, v) in s.timestamps.iter().zip(&s.returns) {
                sums[row_of[ts] * h + i] += v;
            }
        }
    }
    for (row, &n) in counts.values().enumerate() {
        for v in &mut sums[row * h..(row + 1) * h] {
            *v /= n as f64;
        }
    }
    TrialMatrix::new(
        trials.iter().map(|t| t.trial_id.clone()).collect(),
        counts.into_keys().collect(),
        sums,
    )
}
