#![no_main]

use libfuzzer_sys::fuzz_target;
use ssdm::data::pgm;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = pgm::decode(data) {
        assert_eq!(img.samples.len(), img.width * img.height);
        // anything we accept must survive a round trip
        let again = pgm::decode(&pgm::encode(&img)).expect("re-decode");
        assert_eq!(again, img);
    }
});
