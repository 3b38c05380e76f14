#![no_main]

use libfuzzer_sys::fuzz_target;
use overfit_core::pbo::{estimate_pbo, PboConfig, TrialMatrix};

fuzz_target!(|data: &[u8]| {
    let Ok(m) = TrialMatrix::read_csv(data) else { return };
    let mut buf = Vec::new();
    m.write_csv(&mut buf).unwrap();
    assert_eq!(TrialMatrix::read_csv(buf.as_slice()).unwrap(), m);
    if let Ok(r) = estimate_pbo(&m, &PboConfig { s: 2, ..PboConfig::default() }) {
        assert!((0.0..=1.0).contains(&r.p));
    }
});
