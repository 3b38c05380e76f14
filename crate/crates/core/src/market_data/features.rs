use std::io::Write;

use super::indicators::{compute_indicator, IndicatorSpec};
use super::{MarketDataError, Panel};

/// Per-asset feature grid aligned to a panel.
///
/// Column `d * I + i` holds feature `i` of asset `d`, so a row is the
/// flattened `f_t` block of the environment state.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    assets: Vec<String>,
    timestamps: Vec<i64>,
    feature_names: Vec<String>,
    values: Vec<f64>,
    warmup: usize,
}

impl FeatureMatrix {
    /// Assembles a matrix from row-major values; non-finite values are only
    /// allowed in the first `warmup` rows.
    pub fn new(
        assets: Vec<String>,
        timestamps: Vec<i64>,
        feature_names: Vec<String>,
        values: Vec<f64>,
        warmup: usize,
    ) -> Result<Self, MarketDataError> {
        let width = assets.len() * feature_names.len();
        if values.len() != width * timestamps.len() {
            return Err(MarketDataError::Shape(format!(
                "{} values for a {}x{} feature grid",
                values.len(),
                timestamps.len(),
                width
            )));
        }
        let fm = Self {
            assets,
            timestamps,
            feature_names,
            values,
            warmup,
        };
        for t in fm.warmup.min(fm.len())..fm.len() {
            if let Some(c) = fm.row(t).iter().position(|v| !v.is_finite()) {
                return Err(MarketDataError::NonFinite {
                    column: fm.column_name(c),
                    row: t,
                });
            }
        }
        Ok(fm)
    }

    pub fn assets(&self) -> &[String] {
        &self.assets
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    /// Per-asset feature names (length `I`).
    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn n_features(&self) -> usize {
        self.feature_names.len()
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    /// Leading rows that are indicator warm-up.
    pub fn warmup(&self) -> usize {
        self.warmup
    }

    /// Row width `I * D`.
    pub fn width(&self) -> usize {
        self.assets.len() * self.feature_names.len()
    }

    pub fn row(&self, t: usize) -> &[f64] {
        let w = self.width();
        &self.values[t * w..(t + 1) * w]
    }

    /// Feature `feature` of asset `asset` over all rows.
    pub fn column(&self, asset: usize, feature: usize) -> Vec<f64> {
        let c = asset * self.n_features() + feature;
        (0..self.len()).map(|t| self.row(t)[c]).collect()
    }

    /// `<asset>.<feature>` label of flat column `c`.
    pub fn column_name(&self, c: usize) -> String {
        let i = self.n_features();
        format!("{}.{}", self.assets[c / i], self.feature_names[c % i])
    }

    /// Keeps only the named features, in the given order.
    pub fn select(&self, names: &[String]) -> Result<FeatureMatrix, MarketDataError> {
        let idx: Vec<usize> = names
            .iter()
            .map(|n| {
                self.feature_names
                    .iter()
                    .position(|f| f == n)
                    .ok_or_else(|| MarketDataError::UnknownFeature(n.clone()))
            })
            .collect::<Result<_, _>>()?;
        let i = self.n_features();
        let mut values = Vec::with_capacity(self.len() * idx.len() * self.assets.len());
        for t in 0..self.len() {
            let row = self.row(t);
            for d in 0..self.assets.len() {
                for &f in &idx {
                    values.push(row[d * i + f]);
                }
            }
        }
        FeatureMatrix::new(
            self.assets.clone(),
            self.timestamps.clone(),
            names.to_vec(),
            values,
            self.warmup,
        )
    }

    /// CSV with a `timestamp` column followed by `<asset>.<feature>` columns.
    /// Warm-up cells are written empty.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<(), MarketDataError> {
        let mut w = csv::Writer::from_writer(writer);
        let mut header = vec!["timestamp".to_string()];
        header.extend((0..self.width()).map(|c| self.column_name(c)));
        w.write_record(&header)?;
        for t in 0..self.len() {
            let mut rec = vec![self.timestamps[t].to_string()];
            rec.extend(self.row(t).iter().map(|v| {
                if v.is_finite() {
                    v.to_string()
                } else {
                    String::new()
                }
            }));
            w.write_record(&rec)?;
        }
        w.flush().map_err(|e| MarketDataError::Io(e.to_string()))?;
        Ok(())
    }
}

/// Computes every indicator in `specs` for every asset of `panel`.
///
/// Feature names must be unique; the matrix warm-up is the largest indicator warm-up.
pub fn build_features(
    panel: &Panel,
    specs: &[IndicatorSpec],
) -> Result<FeatureMatrix, MarketDataError> {
    let names: Vec<String> = specs.iter().map(|s| s.name().to_string()).collect();
    for (i, n) in names.iter().enumerate() {
        if names[..i].contains(n) {
            return Err(MarketDataError::DuplicateFeature(n.clone()));
        }
    }
    let series: Vec<_> = specs
        .iter()
        .map(|&s| compute_indicator(panel, s))
        .collect::<Result<_, _>>()?;
    let warmup = series
        .iter()
        .flat_map(|per_asset| per_asset.iter().map(|s| s.warmup))
        .max()
        .unwrap_or(0);
    let (t_len, d_len, i_len) = (panel.len(), panel.n_assets(), specs.len());
    let mut values = vec![0.0; t_len * d_len * i_len];
    for (i, per_asset) in series.iter().enumerate() {
        for (d, s) in per_asset.iter().enumerate() {
            for (t, &v) in s.values.iter().enumerate() {
                values[t * d_len * i_len + d * i_len + i] = v;
            }
        }
    }
    FeatureMatrix::new(
        panel.assets().to_vec(),
        panel.timestamps().to_vec(),
        names,
        values,
        warmup,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::market_data::Bar;

    fn panel(n: usize) -> Panel {
        let mk = |scale: f64| -> Vec<Bar> {
            (0..n)
                .map(|t| {
                    let c = 100.0 + scale * (t as f64 * 0.37).sin() + t as f64 * 0.1;
                    Bar {
                        timestamp: t as i64 * 300,
                        open: c,
                        high: c + 1.0,
                        low: c - 1.0,
                        close: c,
                        volume: 10.0 + t as f64,
                    }
                })
                .collect()
        };
        Panel::new(vec!["A".into(), "B".into()], vec![mk(3.0), mk(5.0)]).unwrap()
    }

    #[test]
    fn layout_and_warmup() {
        let p = panel(120);
        let fm = build_features(&p, &IndicatorSpec::canonical()).unwrap();
        assert_eq!(fm.n_features(), 10);
        assert_eq!(fm.width(), 20);
        assert_eq!(fm.warmup(), 32);
        assert_eq!(fm.column_name(11), "B.rsi");
        assert_eq!(fm.column(1, 0)[5], p.bar(1, 5).volume);
    }

    #[test]
    fn deterministic_bitwise() {
        let p = panel(150);
        let a = build_features(&p, &IndicatorSpec::canonical()).unwrap();
        let b = build_features(&p, &IndicatorSpec::canonical()).unwrap();
        let bits = |m: &FeatureMatrix| m.values.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&a), bits(&b));
    }

    #[test]
    fn select_reorders_and_checks_names() {
        let p = panel(80);
        let fm = build_features(&p, &IndicatorSpec::canonical()).unwrap();
        let sel = fm.select(&["obv".into(), "volume".into()]).unwrap();
        assert_eq!(sel.width(), 4);
        assert_eq!(sel.row(50)[1], fm.row(50)[0]);
        assert_eq!(sel.row(50)[2], fm.row(50)[18]);
        assert!(fm.select(&["nope".into()]).is_err());
    }

    #[test]
    fn period_longer_than_panel_rejected() {
        let p = panel(10);
        let err = build_features(&p, &[IndicatorSpec::Rsi { period: 14 }]).unwrap_err();
        assert!(matches!(err, MarketDataError::PeriodTooLong { .. }));
    }

    #[test]
    fn csv_export_header() {
        let p = panel(40);
        let fm = build_features(
            &p,
            &[IndicatorSpec::Volume, IndicatorSpec::Roc { period: 3 }],
        )
        .unwrap();
        let mut buf = Vec::new();
        fm.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "timestamp,A.volume,A.roc,B.volume,B.roc"
        );
        assert!(lines.next().unwrap().starts_with("0,10,,10,"));
    }
}
