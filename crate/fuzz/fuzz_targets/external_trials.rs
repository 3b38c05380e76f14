#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::agents::read_external_trials;
use overfit_core::pbo::build_trial_matrix;
use overfit_core::splits::make_combinatorial;

fuzz_target!(|data: &[u8]| {
    let Ok(trials) = read_external_trials(data) else { return };
    for t in &trials {
        assert_eq!(t.splits.len(), trials[0].splits.len());
    }
    // ragged or mismatched inputs must surface as errors, never panics
    if let Ok(plan) = make_combinatorial(5, 2) {
        let _ = build_trial_matrix(&trials, &plan);
    }
});
