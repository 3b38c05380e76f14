use std::fs::File;
use std::io::Read;
use std::path::Path;

use chrono::{DateTime, NaiveDate, NaiveDateTime};
use serde::{Deserialize, Serialize};

use super::MarketDataError;

/// One OHLCV bar. `timestamp` is epoch seconds (UTC).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Bar {
    pub timestamp: i64,
    pub open: f64,
    pub high: f64,
    pub low: f64,
    pub close: f64,
    pub volume: f64,
}

impl Bar {
    /// Checks the price/volume invariants; on failure returns the offending column name.
    pub fn check(&self) -> Result<(), (&'static str, String)> {
        for (name, v) in [
            ("open", self.open),
            ("high", self.high),
            ("low", self.low),
            ("close", self.close),
        ] {
            if !v.is_finite() || v <= 0.0 {
                return Err((name, format!("price must be positive and finite, got {v}")));
            }
        }
        if !self.volume.is_finite() || self.volume < 0.0 {
            return Err((
                "volume",
                format!("volume must be non-negative, got {}", self.volume),
            ));
        }
        if self.low > self.open.min(self.close) {
            return Err(("low", format!("low {} above min(open, close)", self.low)));
        }
        if self.high < self.open.max(self.close) {
            return Err(("high", format!("high {} below max(open, close)", self.high)));
        }
        Ok(())
    }
}

/// Bars of a single asset, strictly increasing in time.
#[derive(Debug, Clone, PartialEq)]
pub struct AssetSeries {
    pub asset: String,
    pub bars: Vec<Bar>,
}

/// Column names used to read an OHLCV CSV file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct CsvSchema {
    pub timestamp: String,
    pub open: String,
    pub high: String,
    pub low: String,
    pub close: String,
    pub volume: String,
}

impl Default for CsvSchema {
    fn default() -> Self {
        Self {
            timestamp: "timestamp".into(),
            open: "open".into(),
            high: "high".into(),
            low: "low".into(),
            close: "close".into(),
            volume: "volume".into(),
        }
    }
}

/// Parses a timestamp given as epoch seconds or ISO-8601.
///
/// Accepted ISO forms: RFC 3339 (`2022-02-02T00:00:00Z`), naive
/// `YYYY-MM-DD[T ]HH:MM:SS` (taken as UTC) and a bare date.
pub fn parse_timestamp(raw: &str) -> Option<i64> {
    let s = raw.trim();
    if let Ok(v) = s.parse::<i64>() {
        return Some(v);
    }
    if let Ok(dt) = DateTime::parse_from_rfc3339(s) {
        return Some(dt.timestamp());
    }
    for fmt in [
        "%Y-%m-%dT%H:%M:%S",
        "%Y-%m-%d %H:%M:%S",
        "%Y-%m-%dT%H:%M",
        "%Y-%m-%d %H:%M",
    ] {
        if let Ok(dt) = NaiveDateTime::parse_from_str(s, fmt) {
            return Some(dt.and_utc().timestamp());
        }
    }
    NaiveDate::parse_from_str(s, "%Y-%m-%d")
        .ok()
        .and_then(|d| d.and_hms_opt(0, 0, 0))
        .map(|dt| dt.and_utc().timestamp())
}

pub(crate) fn column_index(
    headers: &csv::StringRecord,
    name: &str,
) -> Result<usize, MarketDataError> {
    headers
        .iter()
        .position(|h| h.trim() == name)
        .ok_or_else(|| MarketDataError::MissingColumn(name.to_string()))
}

pub(crate) fn parse_f64(raw: &str, row: usize, column: &str) -> Result<f64, MarketDataError> {
    raw.trim()
        .parse::<f64>()
        .map_err(|_| MarketDataError::Parse {
            row,
            column: column.to_string(),
            message: format!("not a number: {raw:?}"),
        })
}

/// Reads OHLCV bars from any CSV source. Row numbers in errors are 1-based
/// data rows (the header is row 0).
pub fn read_bars<R: Read>(
    reader: R,
    asset: &str,
    schema: &CsvSchema,
) -> Result<AssetSeries, MarketDataError> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .from_reader(reader);
    let headers = rdr.headers()?.clone();
    let cols = [
        column_index(&headers, &schema.timestamp)?,
        column_index(&headers, &schema.open)?,
        column_index(&headers, &schema.high)?,
        column_index(&headers, &schema.low)?,
        column_index(&headers, &schema.close)?,
        column_index(&headers, &schema.volume)?,
    ];
    let names = [
        &schema.timestamp,
        &schema.open,
        &schema.high,
        &schema.low,
        &schema.close,
        &schema.volume,
    ];

    let mut bars: Vec<Bar> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let row = i + 1;
        let record = record?;
        let field = |c: usize| -> Result<&str, MarketDataError> {
            record.get(cols[c]).ok_or_else(|| MarketDataError::Parse {
                row,
                column: names[c].to_string(),
                message: "missing field".into(),
            })
        };
        let ts_raw = field(0)?;
        let timestamp = parse_timestamp(ts_raw).ok_or_else(|| MarketDataError::Parse {
            row,
            column: schema.timestamp.clone(),
            message: format!("unrecognised timestamp {ts_raw:?}"),
        })?;
        let bar = Bar {
            timestamp,
            open: parse_f64(field(1)?, row, &schema.open)?,
            high: parse_f64(field(2)?, row, &schema.high)?,
            low: parse_f64(field(3)?, row, &schema.low)?,
            close: parse_f64(field(4)?, row, &schema.close)?,
            volume: parse_f64(field(5)?, row, &schema.volume)?,
        };
        if let Err((col, message)) = bar.check() {
            let column = match col {
                "open" => &schema.open,
                "high" => &schema.high,
                "low" => &schema.low,
                "close" => &schema.close,
                _ => &schema.volume,
            };
            return Err(MarketDataError::InvalidBar {
                row,
                column: column.clone(),
                message,
            });
        }
        if let Some(prev) = bars.last() {
            if timestamp == prev.timestamp {
                return Err(MarketDataError::DuplicateTimestamp { row, timestamp });
            }
            if timestamp < prev.timestamp {
                return Err(MarketDataError::NonMonotone {
                    row,
                    timestamp,
                    previous: prev.timestamp,
                });
            }
        }
        bars.push(bar);
    }
    Ok(AssetSeries {
        asset: asset.to_string(),
        bars,
    })
}

/// Loads one asset's bars from a CSV file.
pub fn load_csv(
    path: impl AsRef<Path>,
    asset: &str,
    schema: &CsvSchema,
) -> Result<AssetSeries, MarketDataError> {
    let path = path.as_ref();
    let file =
        File::open(path).map_err(|e| MarketDataError::Io(format!("{}: {e}", path.display())))?;
    read_bars(file, asset, schema)
}

/// Writes bars back out in the default schema.
pub fn write_bars<W: std::io::Write>(writer: W, bars: &[Bar]) -> Result<(), MarketDataError> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["timestamp", "open", "high", "low", "close", "volume"])?;
    for b in bars {
        w.write_record([
            b.timestamp.to_string(),
            b.open.to_string(),
            b.high.to_string(),
            b.low.to_string(),
            b.close.to_string(),
            b.volume.to_string(),
        ])?;
    }
    w.flush().map_err(|e| MarketDataError::Io(e.to_string()))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    const GOOD: &str = "timestamp,open,high,low,close,volume\n\
        300,10,11,9,10.5,100\n\
        600,10.5,12,10,11,50\n\
        900,11,11.5,10.8,11.2,0\n";

    #[test]
    fn loads_well_formed_rows_in_order() {
        let s = read_bars(GOOD.as_bytes(), "BTC", &CsvSchema::default()).unwrap();
        assert_eq!(s.bars.len(), 3);
        assert_eq!(
            s.bars.iter().map(|b| b.timestamp).collect::<Vec<_>>(),
            vec![300, 600, 900]
        );
        assert_eq!(s.bars[1].close, 11.0);
    }

    #[test]
    fn negative_volume_names_row_and_column() {
        let csv = "timestamp,open,high,low,close,volume\n300,10,11,9,10,5\n600,10,11,9,10,-1\n";
        let err = read_bars(csv.as_bytes(), "X", &CsvSchema::default()).unwrap_err();
        match err {
            MarketDataError::InvalidBar { row, column, .. } => {
                assert_eq!(row, 2);
                assert_eq!(column, "volume");
            }
            other => panic!("unexpected error {other:?}"),
        }
    }

    #[test]
    fn duplicate_timestamp_rejected() {
        let csv = "timestamp,open,high,low,close,volume\n300,10,11,9,10,5\n300,10,11,9,10,5\n";
        let err = read_bars(csv.as_bytes(), "X", &CsvSchema::default()).unwrap_err();
        assert!(matches!(
            err,
            MarketDataError::DuplicateTimestamp {
                row: 2,
                timestamp: 300
            }
        ));
    }

    #[test]
    fn decreasing_timestamp_rejected() {
        let csv = "timestamp,open,high,low,close,volume\n600,10,11,9,10,5\n300,10,11,9,10,5\n";
        let err = read_bars(csv.as_bytes(), "X", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, MarketDataError::NonMonotone { row: 2, .. }));
    }

    #[test]
    fn parse_failure_reports_column() {
        let csv = "timestamp,open,high,low,close,volume\n300,abc,11,9,10,5\n";
        let err = read_bars(csv.as_bytes(), "X", &CsvSchema::default()).unwrap_err();
        assert!(
            matches!(err, MarketDataError::Parse { row: 1, ref column, .. } if column == "open")
        );
    }

    #[test]
    fn custom_schema_and_iso_timestamps() {
        let csv = "date,o,h,l,c,v\n2022-02-02T00:00:00Z,1,1,1,1,1\n2022-02-02 00:05:00,1,1,1,1,1\n";
        let schema = CsvSchema {
            timestamp: "date".into(),
            open: "o".into(),
            high: "h".into(),
            low: "l".into(),
            close: "c".into(),
            volume: "v".into(),
        };
        let s = read_bars(csv.as_bytes(), "X", &schema).unwrap();
        assert_eq!(s.bars[0].timestamp, 1_643_760_000);
        assert_eq!(s.bars[1].timestamp - s.bars[0].timestamp, 300);
    }

    #[test]
    fn missing_column_is_reported() {
        let csv = "timestamp,open,high,low,close\n300,1,1,1,1\n";
        let err = read_bars(csv.as_bytes(), "X", &CsvSchema::default()).unwrap_err();
        assert!(matches!(err, MarketDataError::MissingColumn(c) if c == "volume"));
    }
}
