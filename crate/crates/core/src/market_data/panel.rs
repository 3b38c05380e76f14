use std::collections::BTreeSet;
use std::io::Read;

use serde::Serialize;

use super::bar::{column_index, parse_f64, parse_timestamp, AssetSeries, Bar};
use super::MarketDataError;

/// Default minimum number of aligned bars [`align`] accepts.
pub const DEFAULT_MIN_BARS: usize = 100;

/// Time-aligned bars for `D` assets over `T` shared timestamps.
#[derive(Debug, Clone, PartialEq)]
pub struct Panel {
    assets: Vec<String>,
    timestamps: Vec<i64>,
    /// `bars[d][t]`
    bars: Vec<Vec<Bar>>,
    bar_interval: i64,
}

impl Panel {
    /// Builds a panel from pre-aligned bars, checking the shape invariants.
    pub fn new(assets: Vec<String>, bars: Vec<Vec<Bar>>) -> Result<Self, MarketDataError> {
        if assets.is_empty() || assets.len() != bars.len() {
            return Err(MarketDataError::Shape(format!(
                "{} asset names for {} bar series",
                assets.len(),
                bars.len()
            )));
        }
        let timestamps: Vec<i64> = bars[0].iter().map(|b| b.timestamp).collect();
        if timestamps.len() < 2 {
            return Err(MarketDataError::Shape(
                "a panel needs at least 2 timestamps".into(),
            ));
        }
        if timestamps.windows(2).any(|w| w[1] <= w[0]) {
            return Err(MarketDataError::Shape(
                "timestamps must be strictly increasing".into(),
            ));
        }
        for (d, series) in bars.iter().enumerate() {
            if series.len() != timestamps.len()
                || series
                    .iter()
                    .zip(&timestamps)
                    .any(|(b, t)| b.timestamp != *t)
            {
                return Err(MarketDataError::Shape(format!(
                    "asset {} is not aligned to the shared timestamps",
                    assets[d]
                )));
            }
        }
        let bar_interval = timestamps
            .windows(2)
            .map(|w| w[1] - w[0])
            .min()
            .unwrap_or(0);
        Ok(Self {
            assets,
            timestamps,
            bars,
            bar_interval,
        })
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Number of assets `D`.
    pub fn n_assets(&self) -> usize {
        self.assets.len()
    }

    /// Number of time steps `T`.
    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Smallest spacing between consecutive timestamps, in seconds.
    pub fn bar_interval(&self) -> i64 {
        self.bar_interval
    }

    pub fn bars(&self, asset: usize) -> &[Bar] {
        &self.bars[asset]
    }

    pub fn bar(&self, asset: usize, t: usize) -> &Bar {
        &self.bars[asset][t]
    }

    /// Close prices of every asset at step `t`.
    pub fn closes_at(&self, t: usize) -> Vec<f64> {
        self.bars.iter().map(|s| s[t].close).collect()
    }

    /// Panel restricted to rows `[start, end)`.
    pub fn slice(&self, start: usize, end: usize) -> Result<Panel, MarketDataError> {
        if start >= end || end > self.len() {
            return Err(MarketDataError::Shape(format!(
                "slice [{start}, {end}) outside panel of length {}",
                self.len()
            )));
        }
        Panel::new(
            self.assets.clone(),
            self.bars.iter().map(|s| s[start..end].to_vec()).collect(),
        )
    }

    /// Index of the first timestamp `>= ts`.
    pub fn index_at_or_after(&self, ts: i64) -> usize {
        self.timestamps.partition_point(|&t| t < ts)
    }
}

/// Rows dropped per asset during alignment.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct AlignReport {
    pub kept: usize,
    pub dropped: Vec<(String, usize)>,
}

/// Aligns series on the intersection of their timestamps. No interpolation.
pub fn align(
    series_list: &[AssetSeries],
    min_bars: usize,
) -> Result<(Panel, AlignReport), MarketDataError> {
    let first = series_list.first().ok_or(MarketDataError::NoSeries)?;
    let mut common: BTreeSet<i64> = first.bars.iter().map(|b| b.timestamp).collect();
    for s in &series_list[1..] {
        let ts: BTreeSet<i64> = s.bars.iter().map(|b| b.timestamp).collect();
        common = common.intersection(&ts).copied().collect();
    }
    if common.is_empty() {
        return Err(MarketDataError::EmptyIntersection);
    }
    if common.len() < min_bars.max(2) {
        return Err(MarketDataError::TooShort {
            got: common.len(),
            min: min_bars.max(2),
        });
    }
    let mut dropped = Vec::with_capacity(series_list.len());
    let mut bars = Vec::with_capacity(series_list.len());
    for s in series_list {
        let kept: Vec<Bar> = s
            .bars
            .iter()
            .filter(|b| common.contains(&b.timestamp))
            .copied()
            .collect();
        dropped.push((s.asset.clone(), s.bars.len() - kept.len()));
        bars.push(kept);
    }
    let panel = Panel::new(series_list.iter().map(|s| s.asset.clone()).collect(), bars)?;
    let report = AlignReport {
        kept: panel.len(),
        dropped,
    };
    Ok((panel, report))
}

/// A `(timestamp, value)` series such as a volatility index or a benchmark level.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueSeries {
    pub timestamps: Vec<i64>,
    pub values: Vec<f64>,
}

impl ValueSeries {
    /// Values at exactly `timestamps`; the first timestamp with no entry is an error.
    pub fn aligned_to(&self, timestamps: &[i64]) -> Result<Vec<f64>, MarketDataError> {
        timestamps
            .iter()
            .map(|t| {
                self.timestamps
                    .binary_search(t)
                    .map(|i| self.values[i])
                    .map_err(|_| MarketDataError::MissingValue { timestamp: *t })
            })
            .collect()
    }
}

/// Reads a `timestamp,value` CSV (header required, column names fixed).
pub fn read_value_series<R: Read>(reader: R) -> Result<ValueSeries, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let ts_col = column_index(&headers, "timestamp")?;
    let v_col = column_index(&headers, "value")?;
    let mut timestamps: Vec<i64> = Vec::new();
    let mut values = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let raw_ts = record.get(ts_col).unwrap_or("");
        let ts = parse_timestamp(raw_ts).ok_or_else(|| MarketDataError::Parse {
            row,
            column: "timestamp".into(),
            message: format!("unrecognised timestamp {raw_ts:?}"),
        })?;
        let v = parse_f64(record.get(v_col).unwrap_or(""), row, "value")?;
        if !v.is_finite() {
            return Err(MarketDataError::Parse {
                row,
                column: "value".into(),
                message: "value must be finite".into(),
            });
        }
        if let Some(&prev) = timestamps.last() {
            if ts == prev {
                return Err(MarketDataError::DuplicateTimestamp { row, timestamp: ts });
            }
            if ts < prev {
                return Err(MarketDataError::NonMonotone {
                    row,
                    timestamp: ts,
                    previous: prev,
                });
            }
        }
        timestamps.push(ts);
        values.push(v);
    }
    Ok(ValueSeries { timestamps, values })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn series(asset: &str, ts: &[i64]) -> AssetSeries {
        AssetSeries {
            asset: asset.into(),
            bars: ts
                .iter()
                .map(|&t| Bar {
                    timestamp: t,
                    open: 1.0,
                    high: 1.0,
                    low: 1.0,
                    close: 1.0,
                    volume: 1.0,
                })
                .collect(),
        }
    }

    #[test]
    fn identical_timestamps_keep_everything() {
        let (p, r) = align(&[series("A", &[1, 2, 3]), series("B", &[1, 2, 3])], 2).unwrap();
        assert_eq!(p.len(), 3);
        assert_eq!(r.dropped, vec![("A".into(), 0), ("B".into(), 0)]);
    }

    #[test]
    fn intersection_is_taken() {
        let (p, r) = align(&[series("A", &[1, 2, 3]), series("B", &[2, 3, 4])], 2).unwrap();
        assert_eq!(p.timestamps(), &[2, 3]);
        assert_eq!(r.dropped, vec![("A".into(), 1), ("B".into(), 1)]);
    }

    #[test]
    fn disjoint_sets_fail() {
        let err = align(&[series("A", &[1, 2]), series("B", &[3, 4])], 2).unwrap_err();
        assert!(matches!(err, MarketDataError::EmptyIntersection));
    }

    #[test]
    fn short_intersection_fails_against_default_minimum() {
        let err = align(&[series("A", &[1, 2, 3])], DEFAULT_MIN_BARS).unwrap_err();
        assert!(matches!(
            err,
            MarketDataError::TooShort { got: 3, min: 100 }
        ));
    }

    #[test]
    fn value_series_alignment_reports_gap() {
        let vs = read_value_series("timestamp,value\n1,80\n3,95\n".as_bytes()).unwrap();
        assert_eq!(vs.aligned_to(&[1, 3]).unwrap(), vec![80.0, 95.0]);
        assert!(matches!(
            vs.aligned_to(&[1, 2]),
            Err(MarketDataError::MissingValue { timestamp: 2 })
        ));
    }
}
