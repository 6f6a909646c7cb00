#![no_main]

use libfuzzer_sys::fuzz_target;
use scenetext::io::parse_icdar_gt_bytes;

fuzz_target!(|data: &[u8]| {
    if let Ok(instances) = parse_icdar_gt_bytes(data) {
        for inst in instances {
            assert!(inst.quad.is_finite());
        }
    }
});
