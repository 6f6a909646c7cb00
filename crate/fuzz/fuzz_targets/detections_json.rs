#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetext::io::{detections_from_json, detections_to_json};

fuzz_target!(|data: &[u8]| {
    let Ok(text) = std::str::from_utf8(data) else {
        return;
    };
    if let Ok(boxes) = detections_from_json(text) {
        let again = detections_from_json(&detections_to_json(&boxes).unwrap()).unwrap();
        assert_eq!(again.len(), boxes.len());
    }
});
