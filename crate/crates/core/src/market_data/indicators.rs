//! Technical indicators.
//!
//! Every function returns a series as long as its input; entries before
//! the indicator's warm-up length are `NaN`. Defaults follow the usual
//! industry definitions (Wilder smoothing for RSI and DX, MACD 12/26/9,
//! CCI 20, ROC 10, ULTOSC 7/14/28, WILLR 14, OBV starting at 0, Ehlers'
//! homodyne Hilbert-transform dominant-cycle period).

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{MarketDataError, Panel};

/// Indicator together with its period parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum IndicatorSpec {
    /// Raw traded volume.
    Volume,
    Rsi {
        period: usize,
    },
    Macd {
        fast: usize,
        slow: usize,
        signal: usize,
    },
    Cci {
        period: usize,
    },
    Dx {
        period: usize,
    },
    Roc {
        period: usize,
    },
    UltOsc {
        short: usize,
        medium: usize,
        long: usize,
    },
    WillR {
        period: usize,
    },
    Obv,
    HtDcPeriod,
}

impl IndicatorSpec {
    /// All supported features, with default periods, in canonical order.
    pub fn canonical() -> Vec<IndicatorSpec> {
        use IndicatorSpec::*;
        vec![
            Volume,
            Rsi { period: 14 },
            Macd {
                fast: 12,
                slow: 26,
                signal: 9,
            },
            Cci { period: 20 },
            Dx { period: 14 },
            Roc { period: 10 },
            UltOsc {
                short: 7,
                medium: 14,
                long: 28,
            },
            WillR { period: 14 },
            Obv,
            HtDcPeriod,
        ]
    }

    /// Feature name used in matrices and exports.
    pub fn name(&self) -> &'static str {
        match self {
            IndicatorSpec::Volume => "volume",
            IndicatorSpec::Rsi { .. } => "rsi",
            IndicatorSpec::Macd { .. } => "macd",
            IndicatorSpec::Cci { .. } => "cci",
            IndicatorSpec::Dx { .. } => "dx",
            IndicatorSpec::Roc { .. } => "roc",
            IndicatorSpec::UltOsc { .. } => "ultosc",
            IndicatorSpec::WillR { .. } => "willr",
            IndicatorSpec::Obv => "obv",
            IndicatorSpec::HtDcPeriod => "ht",
        }
    }

    fn periods(&self) -> Vec<usize> {
        match *self {
            IndicatorSpec::Rsi { period }
            | IndicatorSpec::Cci { period }
            | IndicatorSpec::Dx { period }
            | IndicatorSpec::Roc { period }
            | IndicatorSpec::WillR { period } => vec![period],
            IndicatorSpec::Macd { fast, slow, signal } => vec![fast, slow, signal],
            IndicatorSpec::UltOsc {
                short,
                medium,
                long,
            } => vec![short, medium, long],
            IndicatorSpec::Volume | IndicatorSpec::Obv | IndicatorSpec::HtDcPeriod => vec![],
        }
    }

    /// Number of leading entries that are warm-up.
    pub fn warmup(&self) -> usize {
        match *self {
            IndicatorSpec::Volume | IndicatorSpec::Obv => 0,
            IndicatorSpec::Rsi { period }
            | IndicatorSpec::Dx { period }
            | IndicatorSpec::Roc { period } => period,
            IndicatorSpec::Cci { period } | IndicatorSpec::WillR { period } => period - 1,
            IndicatorSpec::Macd { fast, slow, .. } => fast.max(slow) - 1,
            IndicatorSpec::UltOsc {
                short,
                medium,
                long,
            } => short.max(medium).max(long),
            IndicatorSpec::HtDcPeriod => HT_WARMUP,
        }
    }
}

impl fmt::Display for IndicatorSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let periods = self.periods();
        if periods.is_empty() {
            f.write_str(self.name())
        } else {
            let joined: Vec<String> = periods.iter().map(|p| p.to_string()).collect();
            write!(f, "{}:{}", self.name(), joined.join(","))
        }
    }
}

impl FromStr for IndicatorSpec {
    type Err = MarketDataError;

    /// Parses `name` or `name:p1[,p2,...]`, e.g. `rsi:14` or `macd:12,26,9`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let (name, args) = match s.split_once(':') {
            Some((n, a)) => (n.trim().to_ascii_lowercase(), Some(a)),
            None => (s.to_ascii_lowercase(), None),
        };
        let params: Vec<usize> = match args {
            None => Vec::new(),
            Some(a) => a
                .split(',')
                .map(|p| p.trim().parse::<usize>())
                .collect::<Result<_, _>>()
                .map_err(|_| MarketDataError::BadIndicatorSpec(s.to_string()))?,
        };
        let arity = |n: usize| -> Result<(), MarketDataError> {
            if params.is_empty() || params.len() == n {
                Ok(())
            } else {
                Err(MarketDataError::BadIndicatorSpec(s.to_string()))
            }
        };
        let p = |i: usize, default: usize| params.get(i).copied().unwrap_or(default);
        let spec = match name.as_str() {
            "volume" => {
                arity(0)?;
                IndicatorSpec::Volume
            }
            "rsi" => {
                arity(1)?;
                IndicatorSpec::Rsi { period: p(0, 14) }
            }
            "macd" => {
                arity(3)?;
                IndicatorSpec::Macd {
                    fast: p(0, 12),
                    slow: p(1, 26),
                    signal: p(2, 9),
                }
            }
            "cci" => {
                arity(1)?;
                IndicatorSpec::Cci { period: p(0, 20) }
            }
            "dx" => {
                arity(1)?;
                IndicatorSpec::Dx { period: p(0, 14) }
            }
            "roc" => {
                arity(1)?;
                IndicatorSpec::Roc { period: p(0, 10) }
            }
            "ultosc" | "ultsoc" => {
                arity(3)?;
                IndicatorSpec::UltOsc {
                    short: p(0, 7),
                    medium: p(1, 14),
                    long: p(2, 28),
                }
            }
            "willr" => {
                arity(1)?;
                IndicatorSpec::WillR { period: p(0, 14) }
            }
            "obv" => {
                arity(0)?;
                IndicatorSpec::Obv
            }
            "ht" | "ht_dcperiod" => {
                arity(0)?;
                IndicatorSpec::HtDcPeriod
            }
            _ => return Err(MarketDataError::UnknownIndicator(name)),
        };
        if spec.periods().contains(&0) {
            return Err(MarketDataError::InvalidPeriod(s.to_string()));
        }
        Ok(spec)
    }
}

impl TryFrom<String> for IndicatorSpec {
    type Error = MarketDataError;
    fn try_from(s: String) -> Result<Self, Self::Error> {
        s.parse()
    }
}

impl From<IndicatorSpec> for String {
    fn from(s: IndicatorSpec) -> String {
        s.to_string()
    }
}

/// One asset's indicator values plus the number of warm-up entries.
#[derive(Debug, Clone, PartialEq)]
pub struct IndicatorSeries {
    pub values: Vec<f64>,
    pub warmup: usize,
}

/// Computes `spec` for every asset of `panel`, in asset order.
pub fn compute_indicator(
    panel: &Panel,
    spec: IndicatorSpec,
) -> Result<Vec<IndicatorSeries>, MarketDataError> {
    let t_len = panel.len();
    let periods = spec.periods();
    if periods.contains(&0) {
        return Err(MarketDataError::InvalidPeriod(spec.to_string()));
    }
    if let Some(&p) = periods.iter().max() {
        if p > t_len {
            return Err(MarketDataError::PeriodTooLong {
                spec: spec.to_string(),
                len: t_len,
            });
        }
    }
    let warmup = spec.warmup();
    if warmup >= t_len {
        return Err(MarketDataError::PeriodTooLong {
            spec: spec.to_string(),
            len: t_len,
        });
    }
    let out = (0..panel.n_assets())
        .map(|d| {
            let bars = panel.bars(d);
            let close: Vec<f64> = bars.iter().map(|b| b.close).collect();
            let high: Vec<f64> = bars.iter().map(|b| b.high).collect();
            let low: Vec<f64> = bars.iter().map(|b| b.low).collect();
            let volume: Vec<f64> = bars.iter().map(|b| b.volume).collect();
            let values = match spec {
                IndicatorSpec::Volume => volume,
                IndicatorSpec::Rsi { period } => rsi(&close, period),
                IndicatorSpec::Macd { fast, slow, signal } => macd(&close, fast, slow, signal).line,
                IndicatorSpec::Cci { period } => cci(&high, &low, &close, period),
                IndicatorSpec::Dx { period } => dx(&high, &low, &close, period),
                IndicatorSpec::Roc { period } => roc(&close, period),
                IndicatorSpec::UltOsc {
                    short,
                    medium,
                    long,
                } => ultosc(&high, &low, &close, short, medium, long),
                IndicatorSpec::WillR { period } => willr(&high, &low, &close, period),
                IndicatorSpec::Obv => obv(&close, &volume),
                IndicatorSpec::HtDcPeriod => ht_dcperiod(&close),
            };
            IndicatorSeries { values, warmup }
        })
        .collect();
    Ok(out)
}

fn nan_vec(n: usize) -> Vec<f64> {
    vec![f64::NAN; n]
}

/// Relative Strength Index with Wilder smoothing. First value at index `period`.
///
/// Zero average loss yields 100, zero average gain yields 0, and a flat
/// window (both zero) yields the neutral 50.
pub fn rsi(close: &[f64], period: usize) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    if period == 0 || n <= period {
        return out;
    }
    let (mut gain, mut loss) = (0.0, 0.0);
    for t in 1..=period {
        let d = close[t] - close[t - 1];
        if d > 0.0 {
            gain += d;
        } else {
            loss -= d;
        }
    }
    let p = period as f64;
    gain /= p;
    loss /= p;
    out[period] = rsi_value(gain, loss);
    for t in period + 1..n {
        let d = close[t] - close[t - 1];
        let (g, l) = if d > 0.0 { (d, 0.0) } else { (0.0, -d) };
        gain = (gain * (p - 1.0) + g) / p;
        loss = (loss * (p - 1.0) + l) / p;
        out[t] = rsi_value(gain, loss);
    }
    out
}

fn rsi_value(avg_gain: f64, avg_loss: f64) -> f64 {
    match (avg_gain == 0.0, avg_loss == 0.0) {
        (true, true) => 50.0,
        (false, true) => 100.0,
        (true, false) => 0.0,
        (false, false) => 100.0 - 100.0 / (1.0 + avg_gain / avg_loss),
    }
}

/// Exponential moving average seeded with the simple mean of the first `period` values.
pub fn ema(values: &[f64], period: usize) -> Vec<f64> {
    let n = values.len();
    let mut out = nan_vec(n);
    if period == 0 || n < period {
        return out;
    }
    let mut prev = values[..period].iter().sum::<f64>() / period as f64;
    out[period - 1] = prev;
    let k = 2.0 / (period as f64 + 1.0);
    for t in period..n {
        prev += k * (values[t] - prev);
        out[t] = prev;
    }
    out
}

/// MACD line, signal line and histogram.
#[derive(Debug, Clone, PartialEq)]
pub struct MacdComponents {
    pub line: Vec<f64>,
    pub signal: Vec<f64>,
    pub histogram: Vec<f64>,
}

pub fn macd(close: &[f64], fast: usize, slow: usize, signal: usize) -> MacdComponents {
    let n = close.len();
    let f = ema(close, fast);
    let s = ema(close, slow);
    let line: Vec<f64> = f.iter().zip(&s).map(|(a, b)| a - b).collect();
    let start = fast.max(slow).saturating_sub(1);
    let mut sig = nan_vec(n);
    if start < n {
        let tail = ema(&line[start..], signal);
        sig[start..].copy_from_slice(&tail);
    }
    let histogram = line.iter().zip(&sig).map(|(a, b)| a - b).collect();
    MacdComponents {
        line,
        signal: sig,
        histogram,
    }
}

/// Commodity Channel Index with the 0.015 constant. Zero mean deviation yields 0.
pub fn cci(high: &[f64], low: &[f64], close: &[f64], period: usize) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    if period == 0 || n < period {
        return out;
    }
    let tp: Vec<f64> = (0..n)
        .map(|t| (high[t] + low[t] + close[t]) / 3.0)
        .collect();
    for t in period - 1..n {
        let w = &tp[t + 1 - period..=t];
        let sma = w.iter().sum::<f64>() / period as f64;
        let md = w.iter().map(|x| (x - sma).abs()).sum::<f64>() / period as f64;
        out[t] = if md == 0.0 {
            0.0
        } else {
            (tp[t] - sma) / (0.015 * md)
        };
    }
    out
}

/// Directional Movement Index (DX) with Wilder smoothing. First value at index `period`.
pub fn dx(high: &[f64], low: &[f64], close: &[f64], period: usize) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    if period == 0 || n <= period {
        return out;
    }
    let mut pdm = vec![0.0; n];
    let mut mdm = vec![0.0; n];
    let mut tr = vec![0.0; n];
    for t in 1..n {
        let up = high[t] - high[t - 1];
        let down = low[t - 1] - low[t];
        if up > down && up > 0.0 {
            pdm[t] = up;
        }
        if down > up && down > 0.0 {
            mdm[t] = down;
        }
        tr[t] = (high[t] - low[t])
            .max((high[t] - close[t - 1]).abs())
            .max((low[t] - close[t - 1]).abs());
    }
    let p = period as f64;
    let mut sp: f64 = pdm[1..=period].iter().sum();
    let mut sm: f64 = mdm[1..=period].iter().sum();
    let mut st: f64 = tr[1..=period].iter().sum();
    out[period] = dx_value(sp, sm, st);
    for t in period + 1..n {
        sp = sp - sp / p + pdm[t];
        sm = sm - sm / p + mdm[t];
        st = st - st / p + tr[t];
        out[t] = dx_value(sp, sm, st);
    }
    out
}

fn dx_value(sp: f64, sm: f64, st: f64) -> f64 {
    if st == 0.0 {
        return 0.0;
    }
    let pdi = 100.0 * sp / st;
    let mdi = 100.0 * sm / st;
    if pdi + mdi == 0.0 {
        0.0
    } else {
        100.0 * (pdi - mdi).abs() / (pdi + mdi)
    }
}

/// Rate of change in percent over `period` bars.
pub fn roc(close: &[f64], period: usize) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    for t in period..n {
        out[t] = 100.0 * (close[t] - close[t - period]) / close[t - period];
    }
    out
}

/// Ultimate Oscillator with weights 4:2:1. A window with zero true range contributes 0.
pub fn ultosc(
    high: &[f64],
    low: &[f64],
    close: &[f64],
    short: usize,
    medium: usize,
    long: usize,
) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    let longest = short.max(medium).max(long);
    if longest == 0 || n <= longest {
        return out;
    }
    let mut bp = vec![0.0; n];
    let mut tr = vec![0.0; n];
    for t in 1..n {
        let lo = low[t].min(close[t - 1]);
        let hi = high[t].max(close[t - 1]);
        bp[t] = close[t] - lo;
        tr[t] = hi - lo;
    }
    let avg = |t: usize, p: usize| {
        let b: f64 = bp[t + 1 - p..=t].iter().sum();
        let r: f64 = tr[t + 1 - p..=t].iter().sum();
        if r == 0.0 {
            0.0
        } else {
            b / r
        }
    };
    for t in longest..n {
        out[t] = 100.0 * (4.0 * avg(t, short) + 2.0 * avg(t, medium) + avg(t, long)) / 7.0;
    }
    out
}

/// Williams %R in `[-100, 0]`. A flat window yields 0.
pub fn willr(high: &[f64], low: &[f64], close: &[f64], period: usize) -> Vec<f64> {
    let n = close.len();
    let mut out = nan_vec(n);
    if period == 0 || n < period {
        return out;
    }
    for t in period - 1..n {
        let hh = high[t + 1 - period..=t]
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let ll = low[t + 1 - period..=t]
            .iter()
            .copied()
            .fold(f64::INFINITY, f64::min);
        let range = hh - ll;
        out[t] = if range == 0.0 {
            0.0
        } else {
            -100.0 * (hh - close[t]) / range
        };
    }
    out
}

/// On-balance volume starting from 0.
pub fn obv(close: &[f64], volume: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(close.len());
    let mut acc = 0.0;
    for t in 0..close.len() {
        if t > 0 {
            if close[t] > close[t - 1] {
                acc += volume[t];
            } else if close[t] < close[t - 1] {
                acc -= volume[t];
            }
        }
        out.push(acc);
    }
    out
}

/// Warm-up length of [`ht_dcperiod`].
pub const HT_WARMUP: usize = 32;

/// Dominant cycle period from Ehlers' homodyne discriminator.
///
/// The price is smoothed with a 4-bar WMA, detrended with the
/// Hilbert-transform FIR, split into in-phase and quadrature components,
/// and the bar-to-bar phase advance gives the instantaneous period, which
/// is rate-limited, clamped to `[6, 50]` and twice exponentially smoothed.
pub fn ht_dcperiod(close: &[f64]) -> Vec<f64> {
    const A: f64 = 0.0962;
    const B: f64 = 0.5769;
    let n = close.len();
    let mut out = nan_vec(n);
    if n <= HT_WARMUP {
        return out;
    }
    let lag = |xs: &[f64], t: usize, k: usize| xs[t.saturating_sub(k)];
    let fir = |xs: &[f64], t: usize| {
        A * xs[t] + B * lag(xs, t, 2) - B * lag(xs, t, 4) - A * lag(xs, t, 6)
    };

    let smooth: Vec<f64> = (0..n)
        .map(|t| {
            if t < 3 {
                close[t]
            } else {
                (4.0 * close[t] + 3.0 * close[t - 1] + 2.0 * close[t - 2] + close[t - 3]) / 10.0
            }
        })
        .collect();

    let mut detrender = vec![0.0; n];
    let mut q1 = vec![0.0; n];
    let mut i1 = vec![0.0; n];
    let (mut i2_prev, mut q2_prev) = (0.0, 0.0);
    let (mut re_prev, mut im_prev) = (0.0, 0.0);
    let mut period = 0.0f64;
    let mut smooth_period = 0.0f64;

    for t in 0..n {
        let adj = 0.075 * period + 0.54;
        detrender[t] = fir(&smooth, t) * adj;
        q1[t] = fir(&detrender, t) * adj;
        i1[t] = lag(&detrender, t, 3);
        let ji = fir(&i1, t) * adj;
        let jq = fir(&q1, t) * adj;

        let i2 = 0.2 * (i1[t] - jq) + 0.8 * i2_prev;
        let q2 = 0.2 * (q1[t] + ji) + 0.8 * q2_prev;
        let re = 0.2 * (i2 * i2_prev + q2 * q2_prev) + 0.8 * re_prev;
        let im = 0.2 * (i2 * q2_prev - q2 * i2_prev) + 0.8 * im_prev;
        i2_prev = i2;
        q2_prev = q2;
        re_prev = re;
        im_prev = im;

        let prev = period;
        let mut p = prev;
        if im != 0.0 && re != 0.0 {
            p = 360.0 / (im / re).atan().to_degrees();
        }
        p = p.min(1.5 * prev).max(0.67 * prev).clamp(6.0, 50.0);
        period = 0.2 * p + 0.8 * prev;
        smooth_period = 0.33 * period + 0.67 * smooth_period;
        if t >= HT_WARMUP {
            out[t] = smooth_period;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn spec_round_trip_and_defaults() {
        for spec in IndicatorSpec::canonical() {
            let again: IndicatorSpec = spec.to_string().parse().unwrap();
            assert_eq!(spec, again);
        }
        assert_eq!(
            "rsi".parse::<IndicatorSpec>().unwrap(),
            IndicatorSpec::Rsi { period: 14 }
        );
        assert_eq!(
            "MACD:5,10,3".parse::<IndicatorSpec>().unwrap(),
            IndicatorSpec::Macd {
                fast: 5,
                slow: 10,
                signal: 3
            }
        );
    }

    #[test]
    fn bad_specs_rejected() {
        assert!(matches!(
            "foo".parse::<IndicatorSpec>(),
            Err(MarketDataError::UnknownIndicator(_))
        ));
        assert!(matches!(
            "rsi:0".parse::<IndicatorSpec>(),
            Err(MarketDataError::InvalidPeriod(_))
        ));
        assert!("rsi:1,2".parse::<IndicatorSpec>().is_err());
        assert!("rsi:x".parse::<IndicatorSpec>().is_err());
    }

    #[test]
    fn obv_hand_applied() {
        assert_eq!(
            obv(&[1.0, 2.0, 1.0], &[10.0, 5.0, 3.0]),
            vec![0.0, 5.0, 2.0]
        );
    }

    #[test]
    fn roc_constant_is_zero() {
        let c = vec![42.0; 30];
        let r = roc(&c, 10);
        assert!(r[..10].iter().all(|v| v.is_nan()));
        assert!(r[10..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn rsi_monotone_up_is_hundred_and_down_is_zero() {
        let up: Vec<f64> = (0..40).map(|i| 100.0 + i as f64).collect();
        let r = rsi(&up, 14);
        assert!(r[..14].iter().all(|v| v.is_nan()));
        assert!(r[14..].iter().all(|&v| v == 100.0));
        let down: Vec<f64> = up.iter().rev().copied().collect();
        assert!(rsi(&down, 14)[14..].iter().all(|&v| v == 0.0));
        assert!(rsi(&[5.0; 20], 14)[14..].iter().all(|&v| v == 50.0));
    }

    #[test]
    fn rsi_first_value_hand_computed() {
        // diffs over period 2: +2, -1 -> avg gain 1, avg loss 0.5 -> RS 2 -> 66.67
        let r = rsi(&[10.0, 12.0, 11.0], 2);
        assert!((r[2] - 200.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ema_seed_and_step() {
        let e = ema(&[1.0, 2.0, 3.0, 4.0], 2);
        assert!(e[0].is_nan());
        assert_eq!(e[1], 1.5);
        // k = 2/3
        assert!((e[2] - (1.5 + 2.0 / 3.0 * 1.5)).abs() < 1e-12);
    }

    #[test]
    fn macd_of_constant_is_zero() {
        let m = macd(&[7.0; 60], 12, 26, 9);
        assert!(m.line[25..].iter().all(|&v| v.abs() < 1e-12));
        assert!(m.signal[33..].iter().all(|&v| v.abs() < 1e-12));
        assert!(m.signal[32].is_nan());
    }

    #[test]
    fn willr_and_cci_bounds() {
        let h: Vec<f64> = (0..50).map(|i| 11.0 + (i as f64 * 0.3).sin()).collect();
        let l: Vec<f64> = h.iter().map(|x| x - 2.0).collect();
        let c: Vec<f64> = h.iter().map(|x| x - 0.5).collect();
        let w = willr(&h, &l, &c, 14);
        assert!(w[13..].iter().all(|&v| (-100.0..=0.0).contains(&v)));
        let u = ultosc(&h, &l, &c, 7, 14, 28);
        assert!(u[28..].iter().all(|&v| (0.0..=100.0).contains(&v)));
        let d = dx(&h, &l, &c, 14);
        assert!(d[14..].iter().all(|&v| (0.0..=100.0).contains(&v)));
        assert!(cci(&h, &l, &c, 20)[19..].iter().all(|v| v.is_finite()));
    }

    #[test]
    fn ht_dominant_cycle_tracks_sinusoid() {
        let c: Vec<f64> = (0..600)
            .map(|t| 100.0 + 5.0 * (2.0 * std::f64::consts::PI * t as f64 / 20.0).sin())
            .collect();
        let p = ht_dcperiod(&c);
        assert!(p[..HT_WARMUP].iter().all(|v| v.is_nan()));
        for &v in &p[300..] {
            assert!((v - 20.0).abs() <= 2.0, "period {v}");
        }
    }
}
