#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::market_data::read_value_series;

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = read_value_series(data) {
        assert_eq!(series.timestamps.len(), series.values.len());
        let _ = series.aligned_to(&series.timestamps);
    }
});
