//! Non-maximum suppression for dense quad predictions.
//!
//! Three variants share one output type:
//!
//! * [`standard_nms`]: greedy suppression by descending score.
//! * [`locality_aware_nms`]: a single row-major pass that merges each candidate
//!   into the previous merged box when they overlap, weighting vertices by
//!   classification score, followed by standard NMS on the merged boxes.
//! * [`pa_nms`]: the same pass, but each box side is weighted by the
//!   position-sensitive value for that side, so pixels near the left edge
//!   decide where the left edge goes, and so on.
//!
//! The position-aware merge averages x coordinates of the left and right vertex
//! pairs and y coordinates of the top and bottom pairs in image space, also for
//! rotated boxes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::geometry::{quad_iou, Point2, Quad};

/// Position weights in left, right, top, bottom order.
pub type SideWeights = [f64; 4];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadBox {
    pub quad: Quad,
    /// Classification score; accumulated over merges.
    pub score: f64,
    pub weights: SideWeights,
    /// Feature-map `(row, col)` of the predicting pixel, when known.
    pub source: Option<(usize, usize)>,
    /// Number of raw candidates merged into this box.
    pub merged: usize,
}

impl QuadBox {
    pub fn new(quad: Quad, score: f64, weights: SideWeights) -> Self {
        Self {
            quad,
            score,
            weights,
            source: None,
            merged: 1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NmsParams {
    /// Overlap above which the scan merges a candidate into the previous box.
    pub merge_iou: f64,
    /// Overlap above which the final greedy pass suppresses a box.
    pub final_iou: f64,
    /// Minimum pixel score for a candidate to be decoded.
    pub score_thresh: f64,
    /// Side weight used when both merged boxes carry none.
    pub epsilon: f64,
}

impl Default for NmsParams {
    fn default() -> Self {
        Self {
            merge_iou: 0.2,
            final_iou: 0.2,
            score_thresh: 0.8,
            epsilon: 1e-6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum NmsVariant {
    Standard,
    Locality,
    PositionAware,
}

impl NmsVariant {
    pub const ALL: [NmsVariant; 3] = [NmsVariant::Standard, NmsVariant::Locality, NmsVariant::PositionAware];

    pub fn short_name(self) -> &'static str {
        match self {
            NmsVariant::Standard => "std",
            NmsVariant::Locality => "la",
            NmsVariant::PositionAware => "pa",
        }
    }
}

impl fmt::Display for NmsVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.short_name())
    }
}

impl FromStr for NmsVariant {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "std" | "standard" => Ok(NmsVariant::Standard),
            "la" | "locality" => Ok(NmsVariant::Locality),
            "pa" | "position_aware" | "position-aware" => Ok(NmsVariant::PositionAware),
            other => Err(format!("unknown NMS variant `{other}` (expected std, la or pa)")),
        }
    }
}

/// Score-weighted vertex average `(S(p)·p_i + S(q)·q_i) / (S(p) + S(q))`.
/// Side weights are averaged the same way.
pub fn weighted_merge(p: &QuadBox, q: &QuadBox) -> QuadBox {
    let total = p.score + q.score;
    let (sp, sq, norm) = if total > 0.0 {
        (p.score, q.score, total)
    } else {
        (1.0, 1.0, 2.0)
    };
    let avg = |a: f64, b: f64| (sp * a + sq * b) / norm;
    let points = std::array::from_fn(|i| {
        let (a, b) = (p.quad.points[i], q.quad.points[i]);
        Point2::new(avg(a.x, b.x), avg(a.y, b.y))
    });
    QuadBox {
        quad: Quad::new(points),
        score: total,
        weights: std::array::from_fn(|k| avg(p.weights[k], q.weights[k])),
        source: p.source,
        merged: p.merged + q.merged,
    }
}

/// Weighted mean of two coordinates; both weights fall back to `eps` when
/// neither is positive.
#[inline]
fn side_mean(a: f64, wa: f64, b: f64, wb: f64, eps: f64) -> f64 {
    let (wa, wb) = if wa <= 0.0 && wb <= 0.0 {
        (wa.max(eps), wb.max(eps))
    } else {
        (wa, wb)
    };
    (wa * a + wb * b) / (wa + wb)
}

/// Position-aware merge with the default weight floor.
pub fn position_aware_merge(p: &QuadBox, q: &QuadBox) -> QuadBox {
    position_aware_merge_with(p, q, NmsParams::default().epsilon)
}

pub fn position_aware_merge_with(p: &QuadBox, q: &QuadBox, eps: f64) -> QuadBox {
    let [pl, pr, pt, pb] = p.weights;
    let [ql, qr, qt, qb] = q.weights;
    let (a, b) = (&p.quad.points, &q.quad.points);
    let left = |i: usize| side_mean(a[i].x, pl, b[i].x, ql, eps);
    let right = |i: usize| side_mean(a[i].x, pr, b[i].x, qr, eps);
    let top = |i: usize| side_mean(a[i].y, pt, b[i].y, qt, eps);
    let bottom = |i: usize| side_mean(a[i].y, pb, b[i].y, qb, eps);
    let quad = Quad::new([
        Point2::new(left(0), top(0)),
        Point2::new(right(1), top(1)),
        Point2::new(right(2), bottom(2)),
        Point2::new(left(3), bottom(3)),
    ]);
    QuadBox {
        quad,
        score: p.score + q.score,
        weights: std::array::from_fn(|k| p.weights[k] + q.weights[k]),
        source: p.source,
        merged: p.merged + q.merged,
    }
}

/// Greedy NMS by descending score; equal scores keep input order.
pub fn standard_nms(boxes: &[QuadBox], iou_thresh: f64) -> Vec<QuadBox> {
    let mut order: Vec<usize> = (0..boxes.len()).collect();
    order.sort_by(|&a, &b| boxes[b].score.total_cmp(&boxes[a].score).then(a.cmp(&b)));
    let mut kept: Vec<QuadBox> = Vec::new();
    for i in order {
        let cand = &boxes[i];
        if kept.iter().all(|k| quad_iou(&k.quad, &cand.quad) <= iou_thresh) {
            kept.push(*cand);
        }
    }
    kept
}

/// Single pass over row-major candidates, merging each into the running box
/// while they overlap by more than `merge_iou`.
fn merge_scan(candidates: &[QuadBox], merge_iou: f64, merge: impl Fn(&QuadBox, &QuadBox) -> QuadBox) -> Vec<QuadBox> {
    let mut out = Vec::new();
    let mut last: Option<QuadBox> = None;
    for cand in candidates {
        last = Some(match last {
            Some(prev) if quad_iou(&cand.quad, &prev.quad) > merge_iou => merge(cand, &prev),
            Some(prev) => {
                out.push(prev);
                *cand
            }
            None => *cand,
        });
    }
    out.extend(last);
    out
}

/// Locality-aware NMS. `candidates` must be in row-major pixel order.
pub fn locality_aware_nms(candidates: &[QuadBox], params: &NmsParams) -> Vec<QuadBox> {
    let merged = merge_scan(candidates, params.merge_iou, weighted_merge);
    standard_nms(&merged, params.final_iou)
}

/// Position-aware NMS. `candidates` must be in row-major pixel order.
pub fn pa_nms(candidates: &[QuadBox], params: &NmsParams) -> Vec<QuadBox> {
    let eps = params.epsilon;
    let merged = merge_scan(candidates, params.merge_iou, |p, q| position_aware_merge_with(p, q, eps));
    standard_nms(&merged, params.final_iou)
}

pub fn run_nms(candidates: &[QuadBox], params: &NmsParams, variant: NmsVariant) -> Vec<QuadBox> {
    match variant {
        NmsVariant::Standard => standard_nms(candidates, params.final_iou),
        NmsVariant::Locality => locality_aware_nms(candidates, params),
        NmsVariant::PositionAware => pa_nms(candidates, params),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rect_box(x0: f64, y0: f64, x1: f64, y1: f64, score: f64, w: SideWeights) -> QuadBox {
        QuadBox::new(Quad::axis_aligned(x0, y0, x1, y1), score, w)
    }

    #[test]
    fn weighted_merge_examples() {
        let p = rect_box(0.0, 0.0, 10.0, 4.0, 0.7, [0.1, 0.2, 0.3, 0.4]);
        let m = weighted_merge(&p, &p);
        assert_eq!(m.quad, p.quad);
        assert!((m.score - 1.4).abs() < 1e-15);

        let q = rect_box(2.0, 2.0, 12.0, 6.0, 0.7, [0.0; 4]);
        let m = weighted_merge(&p, &q);
        assert_eq!(m.quad, Quad::axis_aligned(1.0, 1.0, 11.0, 5.0));

        let p = rect_box(0.0, 0.0, 10.0, 4.0, 3.0, [0.0; 4]);
        let q = rect_box(4.0, 0.0, 14.0, 4.0, 1.0, [0.0; 4]);
        assert!((weighted_merge(&p, &q).quad.points[0].x - 1.0).abs() < 1e-15);
    }

    #[test]
    fn position_aware_merge_example() {
        let p = rect_box(0.0, 0.0, 10.0, 4.0, 1.0, [0.9, 0.1, 0.5, 0.5]);
        let q = rect_box(1.0, 0.0, 11.0, 4.0, 1.0, [0.1, 0.9, 0.5, 0.5]);
        let m = position_aware_merge(&p, &q);
        let [tl, tr, br, bl] = m.quad.points;
        assert!((tl.x - 0.1).abs() < 1e-12 && (bl.x - 0.1).abs() < 1e-12);
        assert!((tr.x - 10.9).abs() < 1e-12 && (br.x - 10.9).abs() < 1e-12);
        assert_eq!((tl.y, tr.y, br.y, bl.y), (0.0, 0.0, 4.0, 4.0));
        for (w, e) in m.weights.iter().zip([1.0, 1.0, 1.0, 1.0]) {
            assert!((w - e).abs() < 1e-12);
        }
        assert_eq!(m.score, 2.0);
    }

    #[test]
    fn position_aware_uniform_weights_is_midpoint() {
        let p = rect_box(0.0, 0.0, 10.0, 4.0, 0.5, [0.5; 4]);
        let q = rect_box(2.0, 1.0, 12.0, 5.0, 0.5, [0.5; 4]);
        assert_eq!(position_aware_merge(&p, &q).quad, weighted_merge(&p, &q).quad);
        let m = position_aware_merge(&p, &p);
        assert_eq!(m.quad, p.quad);
        assert_eq!(m.weights, [1.0; 4]);
    }

    #[test]
    fn zero_weights_use_floor() {
        let p = rect_box(0.0, 0.0, 10.0, 4.0, 1.0, [0.0; 4]);
        let q = rect_box(2.0, 0.0, 12.0, 4.0, 1.0, [0.0; 4]);
        let m = position_aware_merge(&p, &q);
        assert!(m.quad.points.iter().all(|v| v.is_finite()));
        assert!((m.quad.points[0].x - 1.0).abs() < 1e-12);
        assert_eq!(m.weights, [0.0; 4]);
    }

    #[test]
    fn standard_nms_examples() {
        let a = rect_box(0.0, 0.0, 10.0, 10.0, 0.9, [0.0; 4]);
        let b = rect_box(1.0, 0.0, 11.0, 10.0, 0.8, [0.0; 4]);
        let far = rect_box(50.0, 50.0, 60.0, 60.0, 0.5, [0.0; 4]);
        let kept = standard_nms(&[b, a, far], 0.5);
        assert_eq!(kept, vec![a, far]);
    }

    #[test]
    fn standard_nms_chain() {
        // IoU(A,B) = IoU(B,C) = 0.6/1.4, IoU(A,C) = 0.2/1.8.
        let a = rect_box(0.0, 0.0, 1.0, 1.0, 0.9, [0.0; 4]);
        let b = rect_box(0.4, 0.0, 1.4, 1.0, 0.8, [0.0; 4]);
        let c = rect_box(0.8, 0.0, 1.8, 1.0, 0.7, [0.0; 4]);
        assert!(quad_iou(&a.quad, &b.quad) > 0.3 && quad_iou(&b.quad, &c.quad) > 0.3);
        assert!(quad_iou(&a.quad, &c.quad) < 0.3);
        assert_eq!(standard_nms(&[c, b, a], 0.3), vec![a, c]);
    }

    #[test]
    fn scan_edge_cases() {
        let params = NmsParams::default();
        assert!(locality_aware_nms(&[], &params).is_empty());
        assert!(pa_nms(&[], &params).is_empty());
        let a = rect_box(0.0, 0.0, 10.0, 10.0, 0.9, [0.4; 4]);
        assert_eq!(pa_nms(&[a], &params), vec![a]);
        assert_eq!(locality_aware_nms(&[a], &params), vec![a]);
        let b = rect_box(40.0, 0.0, 50.0, 10.0, 0.9, [0.4; 4]);
        assert_eq!(locality_aware_nms(&[a, b], &params).len(), 2);
        assert_eq!(pa_nms(&[a, b], &params).len(), 2);
    }

    #[test]
    fn identical_candidates_collapse() {
        let a = rect_box(3.0, 5.0, 30.0, 15.0, 0.85, [0.2, 0.3, 0.4, 0.5]);
        let out = locality_aware_nms(&[a; 7], &NmsParams::default());
        assert_eq!(out.len(), 1);
        assert!((out[0].score - 7.0 * 0.85).abs() < 1e-12);
        for (p, q) in out[0].quad.points.iter().zip(a.quad.points.iter()) {
            assert!((*p - *q).norm() < 1e-12);
        }
        assert_eq!(out[0].merged, 7);
    }

    #[test]
    fn variant_names() {
        for v in NmsVariant::ALL {
            assert_eq!(v.short_name().parse::<NmsVariant>().unwrap(), v);
        }
        assert!("soft".parse::<NmsVariant>().is_err());
    }
}
