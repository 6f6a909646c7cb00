//! Independent oracles and generators shared by the integration tests.
#![allow(dead_code)]

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use scenetext::geometry::Bounds;
use scenetext::{Point2, Quad, QuadBox, RotatedRect};

/// Pixel-centre coverage of a polygon along the horizontal line `y`, as the
/// sorted list of crossing abscissae (even-odd rule).
fn crossings(q: &Quad, y: f64) -> Vec<f64> {
    let mut xs = Vec::new();
    for i in 0..4 {
        let a = q.points[i];
        let b = q.points[(i + 1) % 4];
        if (a.y <= y) != (b.y <= y) {
            xs.push(a.x + (y - a.y) / (b.y - a.y) * (b.x - a.x));
        }
    }
    xs.sort_by(f64::total_cmp);
    xs
}

fn inside(xs: &[f64], x: f64) -> bool {
    xs.iter().filter(|&&c| c <= x).count() % 2 == 1
}

/// IoU by counting pixel centres of a `res × res` raster laid over the joint
/// bounding box.
pub fn raster_iou(a: &Quad, b: &Quad, res: usize) -> f64 {
    let ba = a.bounds();
    let bb = b.bounds();
    let lo = Point2::new(ba.min.x.min(bb.min.x), ba.min.y.min(bb.min.y));
    let hi = Point2::new(ba.max.x.max(bb.max.x), ba.max.y.max(bb.max.y));
    let (dx, dy) = ((hi.x - lo.x) / res as f64, (hi.y - lo.y) / res as f64);
    let (mut inter, mut union) = (0usize, 0usize);
    for row in 0..res {
        let y = lo.y + (row as f64 + 0.5) * dy;
        let (ca, cb) = (crossings(a, y), crossings(b, y));
        if ca.is_empty() && cb.is_empty() {
            continue;
        }
        for col in 0..res {
            let x = lo.x + (col as f64 + 0.5) * dx;
            let (ia, ib) = (inside(&ca, x), inside(&cb, x));
            inter += (ia && ib) as usize;
            union += (ia || ib) as usize;
        }
    }
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

pub fn random_rect(rng: &mut ChaCha8Rng, extent: f64) -> RotatedRect {
    RotatedRect::new(
        Point2::new(rng.gen_range(0.3..0.7) * extent, rng.gen_range(0.3..0.7) * extent),
        rng.gen_range(0.1..0.6) * extent,
        rng.gen_range(0.1..0.6) * extent,
        rng.gen_range(-std::f64::consts::PI..std::f64::consts::PI),
    )
}

/// A convex quadrilateral: a rotated rectangle with jittered corners.
pub fn random_convex_quad(rng: &mut ChaCha8Rng, extent: f64) -> Quad {
    loop {
        let base = random_rect(rng, extent).to_quad();
        let j = 0.05 * extent;
        let q = Quad::new(base.points.map(|p| p + Point2::new(rng.gen_range(-j..j), rng.gen_range(-j..j))));
        if q.is_convex() && q.area() > 1e-3 * extent * extent {
            return q;
        }
    }
}

/// Overlapping candidate boxes clustered around a few centres, each with
/// side weights equal to its score.
pub fn random_candidates(rng: &mut ChaCha8Rng) -> Vec<QuadBox> {
    let clusters = rng.gen_range(1..=5);
    let mut out = Vec::new();
    for _ in 0..clusters {
        let centre = Point2::new(rng.gen_range(0.0..200.0), rng.gen_range(0.0..200.0));
        let (w, h, theta) = (rng.gen_range(10.0..80.0), rng.gen_range(5.0..20.0), rng.gen_range(-0.7..0.7));
        for _ in 0..rng.gen_range(1..=12) {
            let jitter = Point2::new(rng.gen_range(-3.0..3.0), rng.gen_range(-3.0..3.0));
            let r = RotatedRect::new(
                centre + jitter,
                w * rng.gen_range(0.85..1.15),
                h * rng.gen_range(0.85..1.15),
                theta + rng.gen_range(-0.05..0.05),
            );
            let score = rng.gen_range(0.05..1.0);
            out.push(QuadBox::new(r.to_quad(), score, [score; 4]));
        }
    }
    out
}

/// Largest vertex distance between two quads, minimised over cyclic shifts.
pub fn quad_distance(a: &Quad, b: &Quad) -> f64 {
    (0..4)
        .map(|s| (0..4).map(|i| (a.points[i] - b.points[(i + s) % 4]).norm()).fold(0.0, f64::max))
        .fold(f64::INFINITY, f64::min)
}

/// Whether `p` lies in the parallelogram `q` up to `tol`, by its coordinates
/// along the two edge directions from the first vertex.
pub fn in_parallelogram(q: &Quad, p: Point2, tol: f64) -> bool {
    let o = q.points[0];
    let u = q.points[1] - o;
    let v = q.points[3] - o;
    let det = u.x * v.y - u.y * v.x;
    let d = p - o;
    let s = (d.x * v.y - d.y * v.x) / det;
    let t = (u.x * d.y - u.y * d.x) / det;
    (-tol..=1.0 + tol).contains(&s) && (-tol..=1.0 + tol).contains(&t)
}

pub fn bounds_area(b: &Bounds) -> f64 {
    (b.max.x - b.min.x) * (b.max.y - b.min.y)
}

/// Spearman rank correlation (average ranks for ties).
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    fn ranks(v: &[f64]) -> Vec<f64> {
        let mut idx: Vec<usize> = (0..v.len()).collect();
        idx.sort_by(|&i, &j| v[i].total_cmp(&v[j]));
        let mut r = vec![0.0; v.len()];
        let mut i = 0;
        while i < idx.len() {
            let mut j = i;
            while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
                j += 1;
            }
            let avg = (i + j) as f64 / 2.0;
            for &k in &idx[i..=j] {
                r[k] = avg;
            }
            i = j + 1;
        }
        r
    }
    let (ra, rb) = (ranks(a), ranks(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}
