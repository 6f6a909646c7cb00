//! Points, oriented quadrangles and rotated rectangles.
//!
//! Coordinates are image pixels with `y` growing downward. A [`Quad`] lists its
//! vertices top-left, top-right, bottom-right, bottom-left, which is clockwise on
//! screen and gives a positive shoelace area.
//!
//! Rotations use `R(θ) = [[cos θ, −sin θ], [sin θ, cos θ]]` applied directly in
//! image coordinates, so a positive angle turns the top edge of a box clockwise on
//! screen. Decoded boxes are never clipped to the image.

use std::f64::consts::{FRAC_PI_2, FRAC_PI_4};
use std::ops::{Add, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Point2 {
    pub x: f64,
    pub y: f64,
}

impl Point2 {
    #[inline]
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    #[inline]
    pub fn dot(self, other: Self) -> f64 {
        self.x * other.x + self.y * other.y
    }

    /// z-component of the 3-D cross product.
    #[inline]
    pub fn cross(self, other: Self) -> f64 {
        self.x * other.y - self.y * other.x
    }

    #[inline]
    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// Applies `R(θ)`.
    #[inline]
    pub fn rotate(self, theta: f64) -> Self {
        let (s, c) = theta.sin_cos();
        Self::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl Add for Point2 {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Self::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point2 {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Self::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point2 {
    type Output = Self;
    #[inline]
    fn mul(self, k: f64) -> Self {
        Self::new(self.x * k, self.y * k)
    }
}

impl Neg for Point2 {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Self::new(-self.x, -self.y)
    }
}

/// Axis-aligned bounds, used to skip polygon clipping for far-apart boxes.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: Point2,
    pub max: Point2,
}

impl Bounds {
    pub fn of(points: &[Point2]) -> Self {
        let mut min = Point2::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point2::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        Self { min, max }
    }

    pub fn overlaps(&self, other: &Self) -> bool {
        self.min.x <= other.max.x
            && other.min.x <= self.max.x
            && self.min.y <= other.max.y
            && other.min.y <= self.max.y
    }
}

/// An oriented quadrangle: top-left, top-right, bottom-right, bottom-left.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Quad {
    pub points: [Point2; 4],
}

impl Quad {
    pub const fn new(points: [Point2; 4]) -> Self {
        Self { points }
    }

    pub fn from_coords(c: [f64; 8]) -> Self {
        Self::new([
            Point2::new(c[0], c[1]),
            Point2::new(c[2], c[3]),
            Point2::new(c[4], c[5]),
            Point2::new(c[6], c[7]),
        ])
    }

    /// Axis-aligned rectangle spanning `[x0, x1] × [y0, y1]`.
    pub fn axis_aligned(x0: f64, y0: f64, x1: f64, y1: f64) -> Self {
        Self::from_coords([x0, y0, x1, y0, x1, y1, x0, y1])
    }

    /// Reorders four arbitrary vertices into the canonical layout: clockwise on
    /// screen, starting at the vertex whose outgoing edge is closest to
    /// horizontal-pointing-right.
    pub fn canonical(points: [Point2; 4]) -> Self {
        let mut pts = points;
        if signed_area(&pts) < 0.0 {
            pts.reverse();
        }
        let mut best = 0;
        let mut best_key = f64::INFINITY;
        for i in 0..4 {
            let d = pts[(i + 1) % 4] - pts[i];
            let angle = d.y.atan2(d.x);
            // Angles in [-π/4, π/4) beat their mirror at +π/4.
            let key = angle.abs() + if angle >= FRAC_PI_4 { 1e-12 } else { 0.0 };
            if key < best_key {
                best_key = key;
                best = i;
            }
        }
        pts.rotate_left(best);
        Self::new(pts)
    }

    pub fn signed_area(&self) -> f64 {
        signed_area(&self.points)
    }

    pub fn area(&self) -> f64 {
        self.signed_area().abs()
    }

    pub fn bounds(&self) -> Bounds {
        Bounds::of(&self.points)
    }

    pub fn is_convex(&self) -> bool {
        is_convex(&self.points)
    }

    pub fn is_finite(&self) -> bool {
        self.points.iter().all(|p| p.is_finite())
    }

    pub fn centroid(&self) -> Point2 {
        let s = self.points.iter().fold(Point2::default(), |a, &p| a + p);
        s * 0.25
    }

    /// Boundary-inclusive point-in-polygon test by winding number.
    pub fn contains(&self, p: Point2) -> bool {
        let scale = self.scale();
        let tol = 1e-9 * scale.max(1.0);
        let mut winding = 0i32;
        for i in 0..4 {
            let a = self.points[i];
            let b = self.points[(i + 1) % 4];
            let edge = b - a;
            let len = edge.norm();
            // On-segment check first so boundary points count as inside.
            let cross = edge.cross(p - a);
            if len > 0.0 && (cross / len).abs() <= tol {
                let t = edge.dot(p - a) / (len * len);
                if (-1e-12..=1.0 + 1e-12).contains(&t) {
                    return true;
                }
            } else if len == 0.0 && (p - a).norm() <= tol {
                return true;
            }
            if a.y <= p.y {
                if b.y > p.y && cross > 0.0 {
                    winding += 1;
                }
            } else if b.y <= p.y && cross < 0.0 {
                winding -= 1;
            }
        }
        winding != 0
    }

    fn scale(&self) -> f64 {
        let b = self.bounds();
        (b.max.x - b.min.x).max(b.max.y - b.min.y)
    }
}

/// Shoelace signed area; positive for clockwise-on-screen (y down) ordering.
pub fn signed_area(points: &[Point2]) -> f64 {
    let n = points.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += points[i].cross(points[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn polygon_area(points: &[Point2]) -> f64 {
    signed_area(points).abs()
}

pub fn quad_area(q: &Quad) -> f64 {
    q.area()
}

fn is_convex(points: &[Point2]) -> bool {
    let n = points.len();
    if n < 3 {
        return true;
    }
    let b = Bounds::of(points);
    let scale = (b.max.x - b.min.x).max(b.max.y - b.min.y);
    let tol = 1e-12 * scale * scale;
    let (mut pos, mut neg) = (false, false);
    for i in 0..n {
        let a = points[i];
        let b = points[(i + 1) % n];
        let c = points[(i + 2) % n];
        let z = (b - a).cross(c - b);
        if z > tol {
            pos = true;
        } else if z < -tol {
            neg = true;
        }
    }
    if pos && neg {
        return false;
    }
    // A bow-tie has consistent turns but winds twice.
    let mut total = 0.0;
    for i in 0..n {
        let d0 = points[(i + 1) % n] - points[i];
        let d1 = points[(i + 2) % n] - points[(i + 1) % n];
        if d0.norm() > 0.0 && d1.norm() > 0.0 {
            total += d0.cross(d1).atan2(d0.dot(d1));
        }
    }
    total.abs() < 2.0 * std::f64::consts::TAU - 1e-6
}

/// Sutherland–Hodgman clipping of a polygon against a convex polygon.
/// The clip polygon may have either orientation.
fn clip_convex(subject: &[Point2], clip: &[Point2]) -> Vec<Point2> {
    let orient = signed_area(clip);
    if orient == 0.0 || subject.len() < 3 {
        return Vec::new();
    }
    let sign = orient.signum();
    let mut output: Vec<Point2> = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let a = clip[i];
        let b = clip[(i + 1) % m];
        let edge = b - a;
        let side = |p: Point2| sign * edge.cross(p - a);
        let input = std::mem::take(&mut output);
        let n = input.len();
        for j in 0..n {
            let cur = input[j];
            let prev = input[(j + n - 1) % n];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(intersect(prev, cur, sp, sc));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(intersect(prev, cur, sp, sc));
            }
        }
    }
    if output.len() < 3 {
        output.clear();
    }
    output
}

#[inline]
fn intersect(p: Point2, q: Point2, sp: f64, sq: f64) -> Point2 {
    let t = sp / (sp - sq);
    p + (q - p) * t
}

/// Intersection of two convex quadrangles as a convex polygon of at most eight
/// vertices, empty when they do not overlap.
pub fn polygon_clip(subject: &Quad, clip: &Quad) -> Result<Vec<Point2>> {
    if !subject.is_convex() || !clip.is_convex() {
        return Err(Error::NonConvex);
    }
    Ok(clip_convex(&subject.points, &clip.points))
}

/// Splits a simple quad into two triangles along the diagonal that keeps both
/// inside the quad.
fn triangulate(q: &Quad) -> [[Point2; 3]; 2] {
    let p = q.points;
    let s = q.signed_area().signum();
    let t0 = [[p[0], p[1], p[2]], [p[0], p[2], p[3]]];
    if signed_area(&t0[0]) * s >= 0.0 && signed_area(&t0[1]) * s >= 0.0 {
        t0
    } else {
        [[p[1], p[2], p[3]], [p[1], p[3], p[0]]]
    }
}

/// Area of `a ∩ b`. Non-convex (but simple) quads are triangulated first.
pub fn intersection_area(a: &Quad, b: &Quad) -> f64 {
    if !a.bounds().overlaps(&b.bounds()) {
        return 0.0;
    }
    match (a.is_convex(), b.is_convex()) {
        (true, true) => polygon_area(&clip_convex(&a.points, &b.points)),
        (false, true) => polygon_area(&clip_convex(&a.points, &b.points)),
        (true, false) => polygon_area(&clip_convex(&b.points, &a.points)),
        (false, false) => {
            let mut acc = 0.0;
            for ta in triangulate(a) {
                for tb in triangulate(b) {
                    acc += polygon_area(&clip_convex(&ta, &tb));
                }
            }
            acc
        }
    }
}

/// Intersection over union; zero when disjoint or when both areas vanish.
pub fn quad_iou(a: &Quad, b: &Quad) -> f64 {
    let inter = intersection_area(a, b);
    if inter <= 0.0 {
        return 0.0;
    }
    let union = a.area() + b.area() - inter;
    if union <= 0.0 {
        return 0.0;
    }
    (inter / union).clamp(0.0, 1.0)
}

/// A rectangle of `width × height` centered at `center`, rotated by `theta`.
/// The angle is kept in `[-π/4, π/4)`, swapping the sides when needed.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RotatedRect {
    pub center: Point2,
    pub width: f64,
    pub height: f64,
    pub theta: f64,
}

impl RotatedRect {
    pub fn new(center: Point2, width: f64, height: f64, theta: f64) -> Self {
        let (mut w, mut h) = (width, height);
        let turns = ((theta + FRAC_PI_4) / FRAC_PI_2).floor();
        let mut t = theta - turns * FRAC_PI_2;
        if (turns as i64).rem_euclid(2) == 1 {
            std::mem::swap(&mut w, &mut h);
        }
        // Rounding in the subtraction can land exactly on a range edge.
        if t >= FRAC_PI_4 {
            t -= FRAC_PI_2;
            std::mem::swap(&mut w, &mut h);
        } else if t < -FRAC_PI_4 {
            t += FRAC_PI_2;
            std::mem::swap(&mut w, &mut h);
        }
        Self {
            center,
            width: w,
            height: h,
            theta: t,
        }
    }

    pub fn area(&self) -> f64 {
        self.width * self.height
    }

    pub fn to_quad(&self) -> Quad {
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        let c = self.center;
        let t = self.theta;
        Quad::new([
            c + Point2::new(-hw, -hh).rotate(t),
            c + Point2::new(hw, -hh).rotate(t),
            c + Point2::new(hw, hh).rotate(t),
            c + Point2::new(-hw, hh).rotate(t),
        ])
    }

    /// Distances from `p` to the four sides, plus the rectangle's angle.
    /// Negative distances (points outside) are clamped to zero.
    pub fn distances_from(&self, p: Point2) -> Geometry5 {
        let local = (p - self.center).rotate(-self.theta);
        let (hw, hh) = (0.5 * self.width, 0.5 * self.height);
        Geometry5 {
            top: (local.y + hh).max(0.0),
            right: (hw - local.x).max(0.0),
            bottom: (hh - local.y).max(0.0),
            left: (local.x + hw).max(0.0),
            theta: self.theta,
        }
    }
}

/// Smallest-area rotated rectangle enclosing the quad, by rotating calipers
/// over the edges of its convex hull.
pub fn min_area_rect(q: &Quad) -> Result<RotatedRect> {
    if !q.is_finite() {
        return Err(Error::Degenerate);
    }
    let hull = convex_hull(&q.points);
    let scale = {
        let b = q.bounds();
        (b.max.x - b.min.x).max(b.max.y - b.min.y)
    };
    if hull.len() < 3 || polygon_area(&hull) <= 1e-12 * scale * scale || scale == 0.0 {
        return Err(Error::Degenerate);
    }
    let mut best: Option<(f64, RotatedRect)> = None;
    for i in 0..hull.len() {
        let edge = hull[(i + 1) % hull.len()] - hull[i];
        let len = edge.norm();
        if len == 0.0 {
            continue;
        }
        let u = edge * (1.0 / len);
        let v = Point2::new(-u.y, u.x);
        let (mut umin, mut umax, mut vmin, mut vmax) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for p in &hull {
            let a = p.dot(u);
            let b = p.dot(v);
            umin = umin.min(a);
            umax = umax.max(a);
            vmin = vmin.min(b);
            vmax = vmax.max(b);
        }
        let area = (umax - umin) * (vmax - vmin);
        let improves = match &best {
            None => true,
            Some((a, _)) => area < *a * (1.0 - 1e-12),
        };
        if improves {
            let center = u * (0.5 * (umin + umax)) + v * (0.5 * (vmin + vmax));
            let rect = RotatedRect::new(center, umax - umin, vmax - vmin, u.y.atan2(u.x));
            best = Some((area, rect));
        }
    }
    best.map(|(_, r)| r).ok_or(Error::Degenerate)
}

/// Andrew's monotone chain; returns the hull with positive orientation.
fn convex_hull(points: &[Point2]) -> Vec<Point2> {
    let mut pts = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup();
    if pts.len() < 3 {
        return pts;
    }
    let mut hull: Vec<Point2> = Vec::with_capacity(2 * pts.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &Point2>> = if pass == 0 {
            Box::new(pts.iter())
        } else {
            Box::new(pts.iter().rev())
        };
        for &p in iter {
            while hull.len() >= start + 2 {
                let a = hull[hull.len() - 2];
                let b = hull[hull.len() - 1];
                if (b - a).cross(p - a) <= 0.0 {
                    hull.pop();
                } else {
                    break;
                }
            }
            hull.push(p);
        }
        hull.pop();
    }
    hull
}

/// Per-pixel RBOX geometry: distances to the four sides and the box angle.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Geometry5 {
    pub top: f64,
    pub right: f64,
    pub bottom: f64,
    pub left: f64,
    pub theta: f64,
}

impl Geometry5 {
    pub const fn new(top: f64, right: f64, bottom: f64, left: f64, theta: f64) -> Self {
        Self {
            top,
            right,
            bottom,
            left,
            theta,
        }
    }

    /// Channel order used by tensor files: top, right, bottom, left, theta.
    pub fn to_array(self) -> [f64; 5] {
        [self.top, self.right, self.bottom, self.left, self.theta]
    }

    pub fn from_array(a: [f64; 5]) -> Self {
        Self::new(a[0], a[1], a[2], a[3], a[4])
    }
}

/// Image point of a feature-map location: `stride · pixel`, no half-pixel shift.
#[inline]
pub fn image_point(pixel: Point2, stride: u32) -> Point2 {
    pixel * f64::from(stride)
}

/// Decodes the box predicted at feature location `pixel` (x = column, y = row).
pub fn decode_rbox(pixel: Point2, g: &Geometry5, stride: u32) -> Quad {
    let p = image_point(pixel, stride);
    let t = g.theta;
    Quad::new([
        p + Point2::new(-g.left, -g.top).rotate(t),
        p + Point2::new(g.right, -g.top).rotate(t),
        p + Point2::new(g.right, g.bottom).rotate(t),
        p + Point2::new(-g.left, g.bottom).rotate(t),
    ])
}
