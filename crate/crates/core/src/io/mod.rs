//! File formats: tensor containers, ICDAR ground truth, detection records and
//! SVG overlays.

pub mod detections;
pub mod icdar;
pub mod svg;
pub mod tensor;

pub use detections::{detections_from_json, detections_to_json, DetectionRecord};
pub use icdar::{parse_icdar_gt, parse_icdar_gt_bytes};
pub use svg::render_svg;
pub use tensor::{read_tensor, write_tensor, Tensor};
