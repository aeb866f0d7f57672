#![no_main]

use libfuzzer_sys::fuzz_target;

fuzz_target!(|data: &[u8]| {
    if let Ok(img) = ssdm::data::png_io::decode(data) {
        assert_eq!(img.samples.len(), img.width * img.height);
        assert!(img.samples.iter().all(|&s| s <= img.max_value));
    }
});
