//! Validation returns of externally trained trials.
//!
//! CSV columns: `trial_id,split_id,timestamp,return`. Every trial must
//! report exactly the same set of `(split_id, timestamp)` cells.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Read;
use std::path::Path;

use super::AgentError;
use crate::market_data::parse_timestamp;
use crate::pbo::{SplitReturns, TrialReturns};

fn field<'r>(rec: &'r csv::StringRecord, idx: usize) -> &'r str {
    rec.get(idx).unwrap_or("").trim()
}

fn column(headers: &csv::StringRecord, name: &str) -> Result<usize, AgentError> {
    headers
        .iter()
        .position(|h| h.trim().eq_ignore_ascii_case(name))
        .ok_or_else(|| AgentError::Parse {
            row: 0,
            message: format!("missing column {name}"),
        })
}

/// Parses and validates external trial returns.
///
/// Trials keep their order of first appearance; splits and timestamps
/// are sorted ascending.
pub fn read_external_trials<R: Read>(reader: R) -> Result<Vec<TrialReturns>, AgentError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let (c_trial, c_split, c_ts, c_ret) = (
        column(&headers, "trial_id")?,
        column(&headers, "split_id")?,
        column(&headers, "timestamp")?,
        column(&headers, "return")?,
    );

    let mut order: Vec<String> = Vec::new();
    let mut cells: HashMap<String, BTreeMap<(u64, i64), f64>> = HashMap::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = i + 1;
        let trial = field(&rec, c_trial).to_string();
        if trial.is_empty() {
            return Err(AgentError::Parse {
                row,
                message: "empty trial_id".into(),
            });
        }
        let split: u64 = field(&rec, c_split)
            .parse()
            .map_err(|_| AgentError::Parse {
                row,
                message: format!("bad split_id {:?}", field(&rec, c_split)),
            })?;
        let timestamp = parse_timestamp(field(&rec, c_ts)).ok_or_else(|| AgentError::Parse {
            row,
            message: format!("bad timestamp {:?}", field(&rec, c_ts)),
        })?;
        let value: f64 = field(&rec, c_ret)
            .parse()
            .ok()
            .filter(|v: &f64| v.is_finite())
            .ok_or_else(|| AgentError::Parse {
                row,
                message: format!("bad return {:?}", field(&rec, c_ret)),
            })?;
        let entry = cells.entry(trial.clone()).or_insert_with(|| {
            order.push(trial.clone());
            BTreeMap::new()
        });
        if entry.insert((split, timestamp), value).is_some() {
            return Err(AgentError::DuplicateCell {
                row,
                trial,
                split,
                timestamp,
            });
        }
    }
    if order.is_empty() {
        return Err(AgentError::Parse {
            row: 0,
            message: "no trial rows".into(),
        });
    }

    let universe: BTreeSet<(u64, i64)> = cells.values().flat_map(|m| m.keys().copied()).collect();
    let mut trials = Vec::with_capacity(order.len());
    for id in order {
        let map = &cells[&id];
        if let Some(&(split, timestamp)) = universe.iter().find(|k| !map.contains_key(k)) {
            return Err(AgentError::RaggedCoverage {
                trial: id,
                split,
                timestamp,
            });
        }
        let mut splits: Vec<SplitReturns> = Vec::new();
        for (&(split, ts), &v) in map {
            match splits.last_mut() {
                Some(s) if s.split == split as usize => {
                    s.timestamps.push(ts);
                    s.returns.push(v);
                }
                _ => splits.push(SplitReturns {
                    split: split as usize,
                    timestamps: vec![ts],
                    returns: vec![v],
                }),
            }
        }
        trials.push(TrialReturns {
            trial_id: id,
            splits,
        });
    }
    Ok(trials)
}

pub fn import_external_trials(path: &Path) -> Result<Vec<TrialReturns>, AgentError> {
    let file = std::fs::File::open(path)
        .map_err(|e| AgentError::Io(format!("{}: {e}", path.display())))?;
    read_external_trials(file)
}

#[cfg(test)]
mod tests {
    use super::*;

    const COMPLETE: &str = "trial_id,split_id,timestamp,return\n\
        a,0,1,0.5\na,0,2,-1\na,0,3,2\nb,0,3,1\nb,0,1,0\nb,0,2,0.25\n";

    #[test]
    fn complete_file_is_accepted() {
        let t = read_external_trials(COMPLETE.as_bytes()).unwrap();
        assert_eq!(t.len(), 2);
        assert_eq!(t[0].trial_id, "a");
        assert_eq!(t[1].splits[0].timestamps, vec![1, 2, 3]);
        assert_eq!(t[1].splits[0].returns, vec![0.0, 0.25, 1.0]);
    }

    #[test]
    fn missing_cell_is_named() {
        let csv =
            "trial_id,split_id,timestamp,return\na,0,1,0\na,0,2,0\na,0,3,0\nb,0,1,0\nb,0,3,0\n";
        match read_external_trials(csv.as_bytes()) {
            Err(AgentError::RaggedCoverage {
                trial,
                split,
                timestamp,
            }) => {
                assert_eq!((trial.as_str(), split, timestamp), ("b", 0, 2));
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn duplicate_cell_is_rejected() {
        let csv = "trial_id,split_id,timestamp,return\na,0,1,0\na,0,1,0.5\n";
        assert!(matches!(
            read_external_trials(csv.as_bytes()),
            Err(AgentError::DuplicateCell { row: 2, .. })
        ));
    }

    #[test]
    fn non_finite_return_is_rejected() {
        let csv = "trial_id,split_id,timestamp,return\na,0,1,NaN\n";
        assert!(matches!(
            read_external_trials(csv.as_bytes()),
            Err(AgentError::Parse { row: 1, .. })
        ));
    }
}
