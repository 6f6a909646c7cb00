//! Ground-truth map generation.
//!
//! Score and geometry maps follow the EAST recipe: a pixel is positive when its
//! image point falls inside the shrunk text quad, and its geometry is the
//! distance to each side of the quad's minimum-area rectangle plus the
//! rectangle's angle. On top of that every positive pixel gets four
//! position-sensitive values (left, right, top, bottom) that are 1 for the
//! pixels closest to that side and fall linearly to 0 at a cut-off distance.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{image_point, min_area_rect, signed_area, Geometry5, Point2, Quad};
use crate::grid::Grid;

/// Channel indices of the position-sensitive maps.
pub const LEFT: usize = 0;
pub const RIGHT: usize = 1;
pub const TOP: usize = 2;
pub const BOTTOM: usize = 3;

pub const DEFAULT_SHRINK_RATIO: f64 = 0.3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TextInstance {
    pub quad: Quad,
    /// Set for `###` annotations: never positive, masked out of training.
    pub dont_care: bool,
}

impl TextInstance {
    pub fn new(quad: Quad) -> Self {
        Self {
            quad,
            dont_care: false,
        }
    }

    pub fn dont_care(quad: Quad) -> Self {
        Self {
            quad,
            dont_care: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosSensParams {
    /// Fraction of the distance range over which the map decays to zero.
    pub alpha: f64,
}

impl Default for PosSensParams {
    fn default() -> Self {
        Self { alpha: 0.75 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ImageSize {
    pub height: u32,
    pub width: u32,
}

impl ImageSize {
    pub const fn new(height: u32, width: u32) -> Self {
        Self { height, width }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabelConfig {
    pub stride: u32,
    pub shrink_ratio: f64,
    pub possens: PosSensParams,
}

impl Default for LabelConfig {
    fn default() -> Self {
        Self {
            stride: crate::DEFAULT_STRIDE,
            shrink_ratio: DEFAULT_SHRINK_RATIO,
            possens: PosSensParams::default(),
        }
    }
}

/// Ground-truth tensors at feature resolution.
#[derive(Debug, Clone, PartialEq)]
pub struct LabelMaps {
    pub stride: u32,
    pub score: Grid<u8>,
    pub geometry: Grid<Geometry5>,
    /// Left, right, top, bottom.
    pub possens: Grid<[f64; 4]>,
    pub train_mask: Grid<u8>,
    /// 0 for background, otherwise the 1-based index of the owning instance.
    pub instance_id: Grid<u32>,
    /// Non-don't-care instances that ended up without a single positive pixel.
    pub skipped: usize,
}

impl LabelMaps {
    /// Pixels that contribute to geometry and position-sensitive losses.
    pub fn positives(&self) -> Grid<bool> {
        let data = self
            .score
            .as_slice()
            .iter()
            .zip(self.train_mask.as_slice())
            .map(|(&s, &m)| s == 1 && m == 1)
            .collect();
        Grid::from_vec(self.score.height(), self.score.width(), data).expect("same shape")
    }
}

/// Moves every vertex inward along both incident edges by `ratio · r_i`, where
/// `r_i` is the shorter of the two edges at vertex `i`. The longer pair of
/// opposite edges is shrunk first. Returns `None` when the result collapses.
pub fn shrink_quad(q: &Quad, ratio: f64) -> Option<Quad> {
    let p = q.points;
    let orient = signed_area(&p);
    if orient == 0.0 || !orient.is_finite() {
        return None;
    }
    let len = |a: usize, b: usize| (p[b] - p[a]).norm();
    let reference: [f64; 4] = std::array::from_fn(|i| len(i, (i + 1) % 4).min(len(i, (i + 3) % 4)));
    let mut pts = p;
    let mut move_along = |a: usize, b: usize| {
        let d = pts[b] - pts[a];
        let n = d.norm();
        if n == 0.0 {
            return;
        }
        let u = d * (1.0 / n);
        pts[a] = pts[a] + u * (ratio * reference[a]);
        pts[b] = pts[b] - u * (ratio * reference[b]);
    };
    if len(0, 1) + len(2, 3) > len(0, 3) + len(1, 2) {
        move_along(0, 1);
        move_along(3, 2);
        move_along(0, 3);
        move_along(1, 2);
    } else {
        move_along(0, 3);
        move_along(1, 2);
        move_along(0, 1);
        move_along(3, 2);
    }
    let shrunk = Quad::new(pts);
    (signed_area(&pts) * orient.signum() > 0.0).then_some(shrunk)
}

/// Position-sensitive value for a pixel at distance `dist` from one side,
/// given the smallest and largest such distance over the instance's positives.
pub fn position_sensitive_from_range(dist: f64, min: f64, max: f64, alpha: f64) -> f64 {
    if max <= min {
        return 1.0;
    }
    let cutoff = alpha * (max - min) + min;
    if dist < cutoff {
        (1.0 - (dist - min) / (cutoff - min)).clamp(0.0, 1.0)
    } else {
        0.0
    }
}

/// Same as [`position_sensitive_from_range`] with the range taken from `dists_all`.
pub fn position_sensitive_value(dist: f64, dists_all: &[f64], alpha: f64) -> f64 {
    let min = dists_all.iter().copied().fold(f64::INFINITY, f64::min);
    let max = dists_all.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    position_sensitive_from_range(dist, min, max, alpha)
}

/// Feature cells whose image point may fall inside `q`.
fn candidate_cells(q: &Quad, stride: u32, rows: usize, cols: usize) -> impl Iterator<Item = (usize, usize)> {
    let b = q.bounds();
    let s = f64::from(stride);
    let clamp = |v: f64, hi: usize| -> usize { (v.max(0.0) as usize).min(hi) };
    let (r0, r1) = (clamp((b.min.y / s).ceil(), rows), clamp((b.max.y / s).floor() + 1.0, rows));
    let (c0, c1) = (clamp((b.min.x / s).ceil(), cols), clamp((b.max.x / s).floor() + 1.0, cols));
    (r0..r1).flat_map(move |r| (c0..c1).map(move |c| (r, c)))
}

fn cell_point(row: usize, col: usize, stride: u32) -> Point2 {
    image_point(Point2::new(col as f64, row as f64), stride)
}

/// Builds every ground-truth map for one image.
///
/// Overlapping instances give a pixel to the one with the smaller quad area.
/// Pixels inside a don't-care quad are masked and never positive.
pub fn generate_maps(instances: &[TextInstance], size: ImageSize, cfg: &LabelConfig) -> Result<LabelMaps> {
    let stride = cfg.stride;
    if stride == 0 || !size.height.is_multiple_of(stride) || !size.width.is_multiple_of(stride) {
        return Err(Error::Invalid(format!(
            "image size {}x{} is not divisible by stride {}",
            size.height, size.width, stride
        )));
    }
    if !(0.0..0.5).contains(&cfg.shrink_ratio) {
        return Err(Error::Invalid(format!("shrink ratio {} outside [0, 0.5)", cfg.shrink_ratio)));
    }
    if !(cfg.possens.alpha > 0.0 && cfg.possens.alpha <= 1.0) {
        return Err(Error::Invalid(format!("alpha {} outside (0, 1]", cfg.possens.alpha)));
    }
    let rows = (size.height / stride) as usize;
    let cols = (size.width / stride) as usize;

    let mut score = Grid::<u8>::new(rows, cols);
    let mut geometry = Grid::<Geometry5>::new(rows, cols);
    let mut possens = Grid::<[f64; 4]>::new(rows, cols);
    let mut train_mask = Grid::filled(rows, cols, 1u8);
    let mut instance_id = Grid::<u32>::new(rows, cols);

    for inst in instances.iter().filter(|i| i.dont_care) {
        for (r, c) in candidate_cells(&inst.quad, stride, rows, cols) {
            if inst.quad.contains(cell_point(r, c, stride)) {
                train_mask[(r, c)] = 0;
            }
        }
    }

    let mut order: Vec<usize> = (0..instances.len()).filter(|&i| !instances[i].dont_care).collect();
    order.sort_by(|&a, &b| instances[a].quad.area().total_cmp(&instances[b].quad.area()).then(a.cmp(&b)));

    let mut skipped = 0;
    let mut claimed: Vec<(usize, usize)> = Vec::new();
    for &idx in &order {
        let quad = &instances[idx].quad;
        let (Some(shrunk), Ok(rect)) = (shrink_quad(quad, cfg.shrink_ratio), min_area_rect(quad)) else {
            skipped += 1;
            continue;
        };
        let id = idx as u32 + 1;
        claimed.clear();
        for (r, c) in candidate_cells(&shrunk, stride, rows, cols) {
            if instance_id[(r, c)] == 0 && train_mask[(r, c)] == 1 && shrunk.contains(cell_point(r, c, stride)) {
                instance_id[(r, c)] = id;
                score[(r, c)] = 1;
                geometry[(r, c)] = rect.distances_from(cell_point(r, c, stride));
                claimed.push((r, c));
            }
        }
        if claimed.is_empty() {
            skipped += 1;
            continue;
        }
        let side = |g: &Geometry5| [g.left, g.right, g.top, g.bottom];
        let mut lo = [f64::INFINITY; 4];
        let mut hi = [f64::NEG_INFINITY; 4];
        for &cell in &claimed {
            for (k, d) in side(&geometry[cell]).into_iter().enumerate() {
                lo[k] = lo[k].min(d);
                hi[k] = hi[k].max(d);
            }
        }
        for &cell in &claimed {
            let d = side(&geometry[cell]);
            possens[cell] =
                std::array::from_fn(|k| position_sensitive_from_range(d[k], lo[k], hi[k], cfg.possens.alpha));
        }
    }

    Ok(LabelMaps {
        stride,
        score,
        geometry,
        possens,
        train_mask,
        instance_id,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{decode_rbox, quad_iou, RotatedRect};

    fn assert_quad_eq(a: &Quad, b: &Quad, tol: f64) {
        for (p, q) in a.points.iter().zip(b.points.iter()) {
            assert!((*p - *q).norm() < tol, "{a:?} != {b:?}");
        }
    }

    #[test]
    fn shrink_identity_at_zero() {
        let q = Quad::from_coords([1.0, 2.0, 9.0, 1.0, 10.0, 6.0, 0.0, 7.0]);
        assert_quad_eq(&shrink_quad(&q, 0.0).unwrap(), &q, 1e-12);
    }

    #[test]
    fn shrink_square() {
        let q = Quad::axis_aligned(0.0, 0.0, 10.0, 10.0);
        assert_quad_eq(&shrink_quad(&q, 0.3).unwrap(), &Quad::axis_aligned(3.0, 3.0, 7.0, 7.0), 1e-12);
    }

    #[test]
    fn shrink_long_rectangle() {
        let q = Quad::axis_aligned(0.0, 0.0, 40.0, 4.0);
        let expect = Quad::axis_aligned(1.2, 1.2, 38.8, 2.8);
        assert_quad_eq(&shrink_quad(&q, 0.3).unwrap(), &expect, 1e-12);
    }

    #[test]
    fn shrink_collapse_is_none() {
        let p = Point2::new(3.0, 3.0);
        assert!(shrink_quad(&Quad::new([p; 4]), 0.3).is_none());
    }

    #[test]
    fn possens_formula() {
        let all: Vec<f64> = (0..10).map(f64::from).collect();
        assert_eq!(position_sensitive_value(0.0, &all, 0.75), 1.0);
        assert!((position_sensitive_value(3.0, &all, 0.75) - (1.0 - 3.0 / 6.75)).abs() < 1e-15);
        assert!((position_sensitive_value(3.0, &all, 0.75) - 0.5556).abs() < 1e-4);
        assert_eq!(position_sensitive_value(7.0, &all, 0.75), 0.0);
        assert_eq!(position_sensitive_value(6.75, &all, 0.75), 0.0);
        assert_eq!(position_sensitive_value(2.0, &[2.0, 2.0], 0.75), 1.0);
    }

    #[test]
    fn empty_instances() {
        let m = generate_maps(&[], ImageSize::new(32, 48), &LabelConfig::default()).unwrap();
        assert_eq!(m.score.shape(), (8, 12));
        assert!(m.score.as_slice().iter().all(|&s| s == 0));
        assert!(m.possens.as_slice().iter().all(|p| *p == [0.0; 4]));
        assert!(m.train_mask.as_slice().iter().all(|&v| v == 1));
        assert_eq!(m.skipped, 0);
    }

    #[test]
    fn rejects_indivisible_size() {
        assert!(generate_maps(&[], ImageSize::new(30, 48), &LabelConfig::default()).is_err());
    }

    #[test]
    fn axis_aligned_rect_geometry() {
        let inst = TextInstance::new(Quad::axis_aligned(10.0, 20.0, 90.0, 44.0));
        let m = generate_maps(&[inst], ImageSize::new(64, 128), &LabelConfig::default()).unwrap();
        let mut n = 0;
        for (i, g) in m.geometry.as_slice().iter().enumerate() {
            if m.score.as_slice()[i] == 1 {
                n += 1;
                assert!((g.top + g.bottom - 24.0).abs() < 1e-9);
                assert!((g.left + g.right - 80.0).abs() < 1e-9);
                assert_eq!(g.theta, 0.0);
                assert_eq!(m.instance_id.as_slice()[i], 1);
            }
        }
        assert!(n > 0);
    }

    #[test]
    fn left_channel_decreases_along_x() {
        let inst = TextInstance::new(Quad::axis_aligned(8.0, 8.0, 120.0, 40.0));
        let m = generate_maps(&[inst], ImageSize::new(48, 128), &LabelConfig::default()).unwrap();
        for r in 0..m.score.height() {
            let row: Vec<f64> = (0..m.score.width())
                .filter(|&c| m.score[(r, c)] == 1)
                .map(|c| m.possens[(r, c)][LEFT])
                .collect();
            if row.is_empty() {
                continue;
            }
            assert_eq!(row[0], 1.0);
            assert!(row.windows(2).all(|w| w[1] <= w[0]));
            assert_eq!(*row.last().unwrap(), 0.0);
        }
    }

    #[test]
    fn dont_care_masks_and_never_positive() {
        let dc = TextInstance::dont_care(Quad::axis_aligned(0.0, 0.0, 40.0, 40.0));
        let text = TextInstance::new(Quad::axis_aligned(20.0, 20.0, 100.0, 60.0));
        let m = generate_maps(&[dc, text], ImageSize::new(64, 128), &LabelConfig::default()).unwrap();
        for r in 0..m.score.height() {
            for c in 0..m.score.width() {
                let inside = dc.quad.contains(cell_point(r, c, 4));
                if inside {
                    assert_eq!(m.train_mask[(r, c)], 0);
                    assert_eq!(m.score[(r, c)], 0);
                }
                if m.score[(r, c)] == 1 {
                    assert_eq!(m.train_mask[(r, c)], 1);
                    assert_eq!(m.instance_id[(r, c)], 2);
                }
            }
        }
    }

    #[test]
    fn smaller_instance_wins_overlap() {
        let big = TextInstance::new(Quad::axis_aligned(0.0, 0.0, 120.0, 60.0));
        let small = TextInstance::new(Quad::axis_aligned(40.0, 16.0, 80.0, 40.0));
        let m = generate_maps(&[big, small], ImageSize::new(64, 128), &LabelConfig::default()).unwrap();
        // Centre of the small box lies in both shrunk quads.
        assert_eq!(m.instance_id[(7, 15)], 2);
    }

    #[test]
    fn tiny_instance_is_skipped() {
        let tiny = TextInstance::new(Quad::axis_aligned(1.0, 1.0, 3.0, 3.0));
        let m = generate_maps(&[tiny], ImageSize::new(16, 16), &LabelConfig::default()).unwrap();
        assert_eq!(m.skipped, 1);
        assert!(m.score.as_slice().iter().all(|&s| s == 0));
    }

    #[test]
    fn positives_decode_to_the_rectangle() {
        let rect = RotatedRect::new(Point2::new(90.0, 60.0), 120.0, 28.0, 0.3);
        let inst = TextInstance::new(rect.to_quad());
        let m = generate_maps(&[inst], ImageSize::new(128, 192), &LabelConfig::default()).unwrap();
        let target = min_area_rect(&inst.quad).unwrap().to_quad();
        let mut n = 0;
        for r in 0..m.score.height() {
            for c in 0..m.score.width() {
                if m.score[(r, c)] == 1 {
                    n += 1;
                    let q = decode_rbox(Point2::new(c as f64, r as f64), &m.geometry[(r, c)], 4);
                    assert!(quad_iou(&q, &target) >= 0.999);
                }
            }
        }
        assert!(n > 20);
    }
}
