#![no_main]

use libfuzzer_sys::fuzz_target;
use ssdm::data::ground_truth::decode_ground_truth;
use ssdm::data::GtFormat;

// First byte picks the format, the rest is the file.
fuzz_target!(|data: &[u8]| {
    let Some((&sel, body)) = data.split_first() else {
        return;
    };
    let format = if sel & 1 == 0 { GtFormat::Uint16PngX256 } else { GtFormat::Pfm };
    if let Ok(gt) = decode_ground_truth(body, format) {
        let n = gt.width * gt.height;
        assert_eq!(gt.values.len(), n);
        assert_eq!(gt.known.len(), n);
        for (v, &k) in gt.values.iter().zip(&gt.known) {
            assert!(!k || v.is_finite());
        }
    }
});
