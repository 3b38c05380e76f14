#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::splits::SplitPlan;

fuzz_target!(|data: &str| {
    if let Ok(plan) = SplitPlan::from_json(data) {
        assert!(plan.validate().is_ok());
        assert_eq!(SplitPlan::from_json(&plan.to_json()).unwrap(), plan);
    }
});
