//! OHLCV ingestion, alignment, indicators and feature selection.

mod bar;
mod correlation;
mod features;
pub mod indicators;
mod panel;

pub use bar::{load_csv, parse_timestamp, read_bars, write_bars, AssetSeries, Bar, CsvSchema};
pub use correlation::{
    correlation_filter, pearson_matrix, CorrelationReport, DroppedFeature, FilterOutcome, Pooling,
    DEFAULT_THRESHOLD,
};
pub use features::{build_features, FeatureMatrix};
pub use indicators::{compute_indicator, IndicatorSeries, IndicatorSpec};
pub use panel::{align, read_value_series, AlignReport, Panel, ValueSeries, DEFAULT_MIN_BARS};

#[derive(Debug, thiserror::Error)]
pub enum MarketDataError {
    #[error("I/O error: {0}")]
    Io(String),
    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing column {0:?}")]
    MissingColumn(String),
    #[error("row {row}, column {column:?}: {message}")]
    Parse {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}, column {column:?}: {message}")]
    InvalidBar {
        row: usize,
        column: String,
        message: String,
    },
    #[error("row {row}: duplicate timestamp {timestamp}")]
    DuplicateTimestamp { row: usize, timestamp: i64 },
    #[error("row {row}: timestamp {timestamp} is earlier than previous {previous}")]
    NonMonotone {
        row: usize,
        timestamp: i64,
        previous: i64,
    },
    #[error("no series to align")]
    NoSeries,
    #[error("timestamp intersection is empty")]
    EmptyIntersection,
    #[error("aligned panel has {got} bars, need at least {min}")]
    TooShort { got: usize, min: usize },
    #[error("no value at timestamp {timestamp}")]
    MissingValue { timestamp: i64 },
    #[error("panel shape: {0}")]
    Shape(String),
    #[error("unknown indicator {0:?}")]
    UnknownIndicator(String),
    #[error("malformed indicator spec {0:?}")]
    BadIndicatorSpec(String),
    #[error("indicator periods must be >= 1: {0}")]
    InvalidPeriod(String),
    #[error("{spec} needs more than the {len} available bars")]
    PeriodTooLong { spec: String, len: usize },
    #[error("duplicate feature {0:?}")]
    DuplicateFeature(String),
    #[error("unknown feature {0:?}")]
    UnknownFeature(String),
    #[error("non-finite value in {column} at row {row} after warm-up")]
    NonFinite { column: String, row: usize },
    #[error("column {0} is constant; its correlations are undefined")]
    ConstantColumn(String),
    #[error("only {0} usable rows after warm-up, need at least 2")]
    TooFewRows(usize),
}
