#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(vs) = ghslab::initdata::parse_coeffs(text) {
        assert!(vs.iter().all(|v| v.is_finite()));
        // formatting and reparsing is the identity
        let again = vs.iter().map(|v| ghslab::output::fmt_f64(*v)).collect::<Vec<_>>().join(",");
        assert_eq!(ghslab::initdata::parse_coeffs(&again).unwrap(), vs);
    }
});
