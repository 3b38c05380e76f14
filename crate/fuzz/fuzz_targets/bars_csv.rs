#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::market_data::{read_bars, CsvSchema};

fuzz_target!(|data: &[u8]| {
    if let Ok(series) = read_bars(data, "X", &CsvSchema::default()) {
        assert!(series.bars.windows(2).all(|w| w[0].timestamp < w[1].timestamp));
        assert!(series.bars.iter().all(|b| b.check().is_ok()));
    }
});
