//! Replays the checked-in fuzz seeds through the same entry points.

use std::fs;
use std::path::PathBuf;

use scenetext::io::{detections_from_json, detections_to_json, parse_icdar_gt_bytes, Tensor};

fn seeds(target: &str) -> Vec<(String, Vec<u8>)> {
    let dir = PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../fuzz/corpus").join(target);
    let mut out: Vec<(String, Vec<u8>)> = fs::read_dir(&dir)
        .unwrap_or_else(|e| panic!("{}: {e}", dir.display()))
        .map(|e| {
            let p = e.unwrap().path();
            (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap())
        })
        .collect();
    out.sort();
    assert!(!out.is_empty());
    out
}

#[test]
fn icdar_seeds() {
    for (name, bytes) in seeds("parse_icdar") {
        let parsed = parse_icdar_gt_bytes(&bytes);
        assert_eq!(parsed.is_err(), name.starts_with("bad_"), "{name}");
    }
}

#[test]
fn tensor_seeds() {
    for (name, bytes) in seeds("tensor_decode") {
        match Tensor::decode(&bytes) {
            Ok(t) => assert_eq!(t.encode(), bytes, "{name}"),
            Err(_) => assert!(name.starts_with("bad_") || name.starts_with("truncated"), "{name}"),
        }
    }
}

#[test]
fn detection_seeds() {
    for (name, bytes) in seeds("detections_json") {
        let boxes = detections_from_json(std::str::from_utf8(&bytes).unwrap()).unwrap_or_else(|e| panic!("{name}: {e}"));
        let again = detections_from_json(&detections_to_json(&boxes).unwrap()).unwrap();
        assert_eq!(again.len(), boxes.len());
    }
}
