#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::market_data::IndicatorSpec;

fuzz_target!(|data: &str| {
    if let Ok(spec) = data.parse::<IndicatorSpec>() {
        assert_eq!(spec.to_string().parse::<IndicatorSpec>().unwrap(), spec);
    }
});
