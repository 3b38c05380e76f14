#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::agents::CemAgent;

fuzz_target!(|data: &str| {
    if let Ok(agent) = CemAgent::from_json(data) {
        let _ = CemAgent::from_json(&agent.to_json());
    }
});
