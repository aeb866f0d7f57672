#![no_main]

use libfuzzer_sys::fuzz_target;
use ssdm::checkpoint;

fuzz_target!(|data: &[u8]| {
    if let Ok(net) = checkpoint::decode(data) {
        assert_eq!(checkpoint::encode(&net), data);
    }
});
