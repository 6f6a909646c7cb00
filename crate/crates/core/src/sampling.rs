//! Box-aligned sampling offsets for a `k × k` deformable convolution.
//!
//! The coarse box predicted at `p0` is decoded, and a lattice of `k × k` points
//! is laid over it by bilinear interpolation of its corners, corners included.
//! The offset of each grid tap is the lattice point minus the regular tap
//! location `p0 + p_n`. Everything is expressed in feature-map units.

use crate::error::{Error, Result};
use crate::geometry::{decode_rbox, Geometry5, Point2, Quad};

/// Regular `k × k` sampling grid, ordered row-major from the top-left tap.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplingGrid {
    k: usize,
    taps: Vec<Point2>,
}

impl SamplingGrid {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 || k.is_multiple_of(2) {
            return Err(Error::Invalid(format!("sampling grid size {k} must be odd and positive")));
        }
        let half = (k / 2) as f64;
        let taps = (0..k)
            .flat_map(|row| (0..k).map(move |col| Point2::new(col as f64 - half, row as f64 - half)))
            .collect();
        Ok(Self { k, taps })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// The regular offsets `p_n`.
    pub fn taps(&self) -> &[Point2] {
        &self.taps
    }
}

impl Default for SamplingGrid {
    fn default() -> Self {
        Self::new(3).expect("3 is odd")
    }
}

/// Per-tap offsets `Δp_n`, same order as [`SamplingGrid::taps`].
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetField {
    pub offsets: Vec<Point2>,
}

impl OffsetField {
    pub fn zeros(grid: &SamplingGrid) -> Self {
        Self {
            offsets: vec![Point2::default(); grid.taps.len()],
        }
    }

    /// Mixes two offset fields tap by tap: `true` in `use_other` takes the tap
    /// from `other`. This is how externally predicted offsets (for instance
    /// from a learned layer) share a grid with box-aligned ones.
    pub fn combine(&self, other: &OffsetField, use_other: &[bool]) -> Result<OffsetField> {
        if self.offsets.len() != other.offsets.len() || use_other.len() != self.offsets.len() {
            return Err(Error::Invalid("offset fields differ in size".into()));
        }
        let offsets = self
            .offsets
            .iter()
            .zip(&other.offsets)
            .zip(use_other)
            .map(|((&a, &b), &pick)| if pick { b } else { a })
            .collect();
        Ok(OffsetField { offsets })
    }
}

/// Bilinear point over the quad's corners at fractions `(u, v)` along the top
/// and left edges.
fn bilinear(q: &Quad, u: f64, v: f64) -> Point2 {
    let [tl, tr, br, bl] = q.points;
    tl * ((1.0 - u) * (1.0 - v)) + tr * (u * (1.0 - v)) + br * (u * v) + bl * ((1.0 - u) * v)
}

/// The `k × k` lattice spanning `box_feat` (a quad in feature units).
pub fn box_lattice(box_feat: &Quad, k: usize) -> Vec<Point2> {
    if k == 1 {
        return vec![bilinear(box_feat, 0.5, 0.5)];
    }
    let step = 1.0 / (k - 1) as f64;
    (0..k)
        .flat_map(|row| (0..k).map(move |col| (col as f64 * step, row as f64 * step)))
        .map(|(u, v)| bilinear(box_feat, u, v))
        .collect()
}

/// Offsets that move the regular taps around `p0` onto the lattice spanning
/// the coarse box predicted at `p0`.
pub fn tfam_offsets(coarse: &Geometry5, p0: Point2, grid: &SamplingGrid, stride: u32) -> OffsetField {
    let img = decode_rbox(p0, coarse, stride);
    let inv = 1.0 / f64::from(stride);
    let feat = Quad::new(img.points.map(|p| p * inv));
    let offsets = box_lattice(&feat, grid.k)
        .into_iter()
        .zip(&grid.taps)
        .map(|(target, &tap)| target - (p0 + tap))
        .collect();
    OffsetField { offsets }
}

/// Sampling locations `p0 + p_n + Δp_n`.
pub fn sampled_points(p0: Point2, grid: &SamplingGrid, offsets: &OffsetField) -> Vec<Point2> {
    grid.taps
        .iter()
        .zip(&offsets.offsets)
        .map(|(&tap, &d)| p0 + tap + d)
        .collect()
}
