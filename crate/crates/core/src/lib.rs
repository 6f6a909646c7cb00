//! Geometry, supervision and post-processing for multi-oriented scene-text
//! detection.
//!
//! The crate covers everything around a dense RBOX text detector except the
//! network itself: ground-truth map generation with position-sensitive maps,
//! box-aligned deformable sampling offsets, the training losses with analytic
//! gradients, locality-aware and position-aware NMS, a synthetic map renderer
//! that stands in for a trained model, ICDAR-style evaluation, and the file
//! formats used by the `scenetext` command-line tool.

pub mod error;
pub mod geometry;
pub mod grid;
pub mod io;
pub mod labelgen;
pub mod losses;
pub mod nms;
pub mod pipeline;
pub mod sampling;

pub use error::{Error, Result};
pub use geometry::{decode_rbox, min_area_rect, quad_iou, Geometry5, Point2, Quad, RotatedRect};
pub use grid::Grid;
pub use labelgen::{generate_maps, LabelMaps, PosSensParams, TextInstance};
pub use nms::{NmsParams, NmsVariant, QuadBox};
pub use pipeline::{detect, evaluate, render_oracle_maps, EvalResult, NoiseModel, PredictionMaps};

/// Output stride of every prediction map relative to the input image.
pub const DEFAULT_STRIDE: u32 = 4;
