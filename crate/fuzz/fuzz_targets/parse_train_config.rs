#![no_main]

use libfuzzer_sys::fuzz_target;
use ssdm::train::TrainConfig;

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(cfg) = TrainConfig::parse(text) {
        let again = TrainConfig::parse(&cfg.to_text()).expect("serialized config parses");
        assert_eq!(again, cfg);
    }
});
