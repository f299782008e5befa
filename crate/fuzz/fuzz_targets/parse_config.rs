#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    match ghslab::expcli::parse_config_str(text) {
        Ok(cfg) => {
            assert!(cfg.lambda != 0.0 && cfg.lambda.is_finite());
            assert!(cfg.p_list.iter().all(|&p| p >= 1.0));
        }
        Err(issues) => {
            assert!(!issues.is_empty());
            let lines = text.lines().count();
            assert!(issues.iter().all(|i| i.line <= lines));
        }
    }
});
