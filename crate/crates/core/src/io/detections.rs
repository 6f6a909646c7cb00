//! Detection records as JSON: an array of
//! `{"points": [[x, y] × 4], "score": s, "weights": {"l", "r", "t", "b"}}`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point2, Quad};
use crate::labelgen::{BOTTOM, LEFT, RIGHT, TOP};
use crate::nms::QuadBox;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SideWeightRecord {
    pub l: f64,
    pub r: f64,
    pub t: f64,
    pub b: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DetectionRecord {
    pub points: [[f64; 2]; 4],
    pub score: f64,
    pub weights: SideWeightRecord,
}

impl From<&QuadBox> for DetectionRecord {
    fn from(b: &QuadBox) -> Self {
        let w = b.weights;
        Self {
            points: b.quad.points.map(|p| [p.x, p.y]),
            score: b.score,
            weights: SideWeightRecord {
                l: w[LEFT],
                r: w[RIGHT],
                t: w[TOP],
                b: w[BOTTOM],
            },
        }
    }
}

impl TryFrom<DetectionRecord> for QuadBox {
    type Error = Error;

    fn try_from(r: DetectionRecord) -> Result<Self> {
        let w = r.weights;
        let mut weights = [0.0; 4];
        weights[LEFT] = w.l;
        weights[RIGHT] = w.r;
        weights[TOP] = w.t;
        weights[BOTTOM] = w.b;
        let quad = Quad::new(r.points.map(|[x, y]| Point2::new(x, y)));
        if !quad.is_finite() || !r.score.is_finite() || weights.iter().any(|v| !v.is_finite()) {
            return Err(Error::Invalid("detection contains a non-finite value".into()));
        }
        Ok(QuadBox::new(quad, r.score, weights))
    }
}

pub fn detections_to_json(boxes: &[QuadBox]) -> Result<String> {
    let records: Vec<DetectionRecord> = boxes.iter().map(DetectionRecord::from).collect();
    Ok(serde_json::to_string_pretty(&records)?)
}

pub fn detections_from_json(text: &str) -> Result<Vec<QuadBox>> {
    let records: Vec<DetectionRecord> = serde_json::from_str(text)?;
    records.into_iter().map(QuadBox::try_from).collect()
}
