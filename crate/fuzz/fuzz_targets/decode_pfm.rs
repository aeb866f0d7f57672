#![no_main]

use libfuzzer_sys::fuzz_target;
use ssdm::data::pfm;

fuzz_target!(|data: &[u8]| {
    if let Ok(map) = pfm::decode(data) {
        assert_eq!(map.values.len(), map.width * map.height);
        let again = pfm::decode(&pfm::encode(&map)).expect("re-decode");
        assert_eq!(again.values.len(), map.values.len());
        for (a, b) in again.values.iter().zip(&map.values) {
            assert_eq!(a.to_bits(), b.to_bits());
        }
    }
});
