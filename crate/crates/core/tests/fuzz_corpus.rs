//! Replays the checked-in fuzz seeds through the decoders on stable, so a
//! seed that starts crashing shows up without a libFuzzer toolchain.

use std::path::{Path, PathBuf};

use ssdm::checkpoint;
use ssdm::data::ground_truth::decode_ground_truth;
use ssdm::data::{decode_gray, pfm, pgm, png_io, GtFormat, Manifest};
use ssdm::train::TrainConfig;

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| e.unwrap().path())
        .map(|p: PathBuf| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    assert!(!out.is_empty(), "no seeds for {target}");
    out
}

/// Seeds named like a rejection case must fail; all others must decode.
fn expect<T, E: std::fmt::Display>(name: &str, r: Result<T, E>) -> Option<T> {
    let reject = ["truncated", "overflow", "zero_scale", "header_only", "rejected", "bad"]
        .iter()
        .any(|k| name.contains(k));
    match (r, reject) {
        (Ok(v), false) => Some(v),
        (Err(_), true) => None,
        (Ok(_), true) => panic!("{name}: accepted"),
        (Err(e), false) => panic!("{name}: {e}"),
    }
}

#[test]
fn raster_seeds() {
    for (name, bytes) in seeds("decode_pgm") {
        if let Some(img) = expect(&name, pgm::decode(&bytes)) {
            assert_eq!(pgm::decode(&pgm::encode(&img)).unwrap(), img);
        }
    }
    for (name, bytes) in seeds("decode_pfm") {
        if let Some(map) = expect(&name, pfm::decode(&bytes)) {
            assert_eq!(map.values.len(), map.width * map.height);
        }
    }
    for (name, bytes) in seeds("decode_png") {
        expect(&name, png_io::decode(&bytes));
    }
    for (name, bytes) in seeds("decode_gray") {
        expect(&name, decode_gray(&bytes));
    }
}

#[test]
fn ground_truth_seeds() {
    for (name, bytes) in seeds("decode_ground_truth") {
        let format = if bytes[0] & 1 == 0 { GtFormat::Uint16PngX256 } else { GtFormat::Pfm };
        expect(&name, decode_ground_truth(&bytes[1..], format));
    }
}

#[test]
fn checkpoint_seeds_round_trip() {
    for (name, bytes) in seeds("decode_checkpoint") {
        if let Some(net) = expect(&name, checkpoint::decode(&bytes)) {
            assert_eq!(checkpoint::encode(&net), bytes, "{name}");
        }
    }
}

#[test]
fn text_seeds() {
    for (name, bytes) in seeds("parse_manifest") {
        expect(&name, Manifest::parse(std::str::from_utf8(&bytes).unwrap(), Path::new("/data")));
    }
    for (name, bytes) in seeds("parse_train_config") {
        if let Some(cfg) = expect(&name, TrainConfig::parse(std::str::from_utf8(&bytes).unwrap())) {
            assert_eq!(TrainConfig::parse(&cfg.to_text()).unwrap(), cfg);
        }
    }
}
