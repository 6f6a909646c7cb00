//! From prediction maps to scored detections, plus the synthetic stand-in for
//! a trained network and the evaluation protocol.

use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::geometry::{decode_rbox, intersection_area, quad_iou, Geometry5, Point2, RotatedRect};
use crate::grid::Grid;
use crate::labelgen::{generate_maps, ImageSize, LabelConfig, LabelMaps, TextInstance};
use crate::nms::{run_nms, NmsParams, NmsVariant, QuadBox};

/// Dense head outputs for one image.
#[derive(Debug, Clone, PartialEq)]
pub struct PredictionMaps {
    pub stride: u32,
    pub score: Grid<f64>,
    pub geometry_coarse: Grid<Geometry5>,
    /// Output of the refinement head; the coarse map is used when absent.
    pub geometry_refined: Option<Grid<Geometry5>>,
    pub possens: Grid<[f64; 4]>,
}

impl PredictionMaps {
    pub fn geometry(&self) -> &Grid<Geometry5> {
        self.geometry_refined.as_ref().unwrap_or(&self.geometry_coarse)
    }

    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::Invalid("stride must be positive".into()));
        }
        self.score.check_shape(&self.geometry_coarse)?;
        self.score.check_shape(&self.possens)?;
        if let Some(r) = &self.geometry_refined {
            self.score.check_shape(r)?;
        }
        Ok(())
    }

    /// Noise-free predictions equal to the ground truth.
    pub fn from_labels(labels: &LabelMaps) -> Self {
        Self {
            stride: labels.stride,
            score: labels.score.map(|&s| f64::from(s)),
            geometry_coarse: labels.geometry.clone(),
            geometry_refined: None,
            possens: labels.possens.clone(),
        }
    }
}

/// Candidates for every pixel scoring at least `score_thresh`, in row-major order.
pub fn decode_maps(maps: &PredictionMaps, score_thresh: f64) -> Result<Vec<QuadBox>> {
    maps.validate()?;
    let geometry = maps.geometry();
    let mut out = Vec::new();
    for (i, &s) in maps.score.as_slice().iter().enumerate() {
        if s >= score_thresh {
            let (row, col) = maps.score.coords(i);
            let quad = decode_rbox(Point2::new(col as f64, row as f64), &geometry.as_slice()[i], maps.stride);
            let mut b = QuadBox::new(quad, s, maps.possens.as_slice()[i]);
            b.source = Some((row, col));
            out.push(b);
        }
    }
    Ok(out)
}

pub fn detect(maps: &PredictionMaps, params: &NmsParams, variant: NmsVariant) -> Result<Vec<QuadBox>> {
    let candidates = decode_maps(maps, params.score_thresh)?;
    Ok(run_nms(&candidates, params, variant))
}

/// Gaussian perturbation of the oracle geometry whose spread grows with the
/// distance being predicted: `σ(d) = sigma0 + sigma1 · d`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub sigma0: f64,
    pub sigma1: f64,
    pub angle_sigma: f64,
    pub seed: u64,
}

impl NoiseModel {
    pub const fn noiseless() -> Self {
        Self {
            sigma0: 0.0,
            sigma1: 0.0,
            angle_sigma: 0.0,
            seed: 0,
        }
    }

    /// Same noise shape with the generator seed for image `index`.
    pub fn for_image(&self, index: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, index),
            ..*self
        }
    }

    fn validate(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite() && v >= 0.0;
        if ok(self.sigma0) && ok(self.sigma1) && ok(self.angle_sigma) {
            Ok(())
        } else {
            Err(Error::Invalid("noise sigmas must be finite and non-negative".into()))
        }
    }
}

/// SplitMix64 finaliser over `(seed, index)`.
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Applies `noise` to the geometry of every positive pixel of `labels`.
/// Pixels are visited row-major and each draws top, right, bottom, left, angle
/// in that order.
pub fn perturb_labels(labels: &LabelMaps, noise: &NoiseModel) -> Result<PredictionMaps> {
    noise.validate()?;
    let mut maps = PredictionMaps::from_labels(labels);
    let mut rng = ChaCha8Rng::seed_from_u64(noise.seed);
    let unit = Normal::new(0.0, 1.0).expect("unit normal");
    for (g, &s) in maps.geometry_coarse.as_mut_slice().iter_mut().zip(labels.score.as_slice()) {
        if s == 0 {
            continue;
        }
        let mut jitter = |d: f64| (d + (noise.sigma0 + noise.sigma1 * d) * unit.sample(&mut rng)).max(0.0);
        g.top = jitter(g.top);
        g.right = jitter(g.right);
        g.bottom = jitter(g.bottom);
        g.left = jitter(g.left);
        g.theta += noise.angle_sigma * unit.sample(&mut rng);
    }
    Ok(maps)
}

/// Ground-truth maps dressed up as network output, with distance-dependent
/// geometry noise. The score map stays binary and position-sensitive maps are
/// exact.
pub fn render_oracle_maps(
    instances: &[TextInstance],
    size: ImageSize,
    cfg: &LabelConfig,
    noise: &NoiseModel,
) -> Result<PredictionMaps> {
    let labels = generate_maps(instances, size, cfg)?;
    perturb_labels(&labels, noise)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match {
    pub detection: usize,
    pub ground_truth: usize,
    pub iou: f64,
}

/// Detection quality at one IoU threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub iou_threshold: f64,
    pub precision: f64,
    pub recall: f64,
    pub fmeasure: f64,
    pub num_matched: usize,
    pub num_detections: usize,
    pub num_ground_truth: usize,
    /// Mean IoU over matched pairs, 0 without matches.
    pub mean_iou: f64,
    pub matches: Vec<Match>,
}

/// Running totals across images; metrics are recomputed from the sums.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct EvalCounts {
    pub matched: usize,
    pub detections: usize,
    pub ground_truth: usize,
    pub iou_sum: f64,
}

impl EvalCounts {
    pub fn add(&mut self, r: &EvalResult) {
        self.matched += r.num_matched;
        self.detections += r.num_detections;
        self.ground_truth += r.num_ground_truth;
        self.iou_sum += r.matches.iter().map(|m| m.iou).sum::<f64>();
    }

    pub fn result(&self, iou_threshold: f64) -> EvalResult {
        let (precision, recall, fmeasure) = prf(self.matched, self.detections, self.ground_truth);
        EvalResult {
            iou_threshold,
            precision,
            recall,
            fmeasure,
            num_matched: self.matched,
            num_detections: self.detections,
            num_ground_truth: self.ground_truth,
            mean_iou: if self.matched > 0 {
                self.iou_sum / self.matched as f64
            } else {
                0.0
            },
            matches: Vec::new(),
        }
    }
}

fn prf(matched: usize, ndet: usize, ngt: usize) -> (f64, f64, f64) {
    if ndet == 0 && ngt == 0 {
        return (1.0, 1.0, 1.0);
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (p, r) = (ratio(matched, ndet), ratio(matched, ngt));
    let f = if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 };
    (p, r, f)
}

/// Fraction of a detection's area covered by a don't-care region above which
/// the detection is ignored.
pub const DONT_CARE_COVER: f64 = 0.5;

/// Greedy one-to-one matching at each threshold.
///
/// Detections mostly covered by a don't-care region are dropped first. The
/// remaining detections, by descending score, each take the unmatched
/// ground truth of highest IoU if it reaches the threshold.
pub fn evaluate(detections: &[QuadBox], gts: &[TextInstance], iou_thresholds: &[f64]) -> Vec<EvalResult> {
    let kept: Vec<usize> = (0..detections.len())
        .filter(|&d| {
            let q = &detections[d].quad;
            let area = q.area();
            !gts.iter().filter(|g| g.dont_care).any(|g| {
                area > 0.0 && intersection_area(q, &g.quad) / area > DONT_CARE_COVER
            })
        })
        .collect();
    let mut order = kept.clone();
    order.sort_by(|&a, &b| detections[b].score.total_cmp(&detections[a].score).then(a.cmp(&b)));
    let cared: Vec<usize> = (0..gts.len()).filter(|&g| !gts[g].dont_care).collect();
    let ious: Vec<Vec<f64>> = order
        .iter()
        .map(|&d| cared.iter().map(|&g| quad_iou(&detections[d].quad, &gts[g].quad)).collect())
        .collect();

    iou_thresholds
        .iter()
        .map(|&thr| {
            let mut taken = vec![false; cared.len()];
            let mut matches = Vec::new();
            for (row, &d) in order.iter().enumerate() {
                let mut best: Option<(usize, f64)> = None;
                for (k, &iou) in ious[row].iter().enumerate() {
                    if !taken[k] && best.is_none_or(|(_, b)| iou > b) {
                        best = Some((k, iou));
                    }
                }
                if let Some((k, iou)) = best {
                    if iou >= thr {
                        taken[k] = true;
                        matches.push(Match {
                            detection: d,
                            ground_truth: cared[k],
                            iou,
                        });
                    }
                }
            }
            let (precision, recall, fmeasure) = prf(matches.len(), kept.len(), cared.len());
            let mean_iou = if matches.is_empty() {
                0.0
            } else {
                matches.iter().map(|m| m.iou).sum::<f64>() / matches.len() as f64
            };
            EvalResult {
                iou_threshold: thr,
                precision,
                recall,
                fmeasure,
                num_matched: matches.len(),
                num_detections: kept.len(),
                num_ground_truth: cared.len(),
                mean_iou,
                matches,
            }
        })
        .collect()
}

/// Random layouts of non-overlapping rotated text rectangles.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SceneSpec {
    pub size: ImageSize,
    pub min_instances: usize,
    pub max_instances: usize,
    pub min_aspect: f64,
    pub max_aspect: f64,
    pub min_height: f64,
    pub max_height: f64,
    /// Largest absolute rotation, radians.
    pub max_angle: f64,
    /// When set, the first instance has at least this aspect ratio.
    pub require_aspect: Option<f64>,
    /// Clear space kept around every rectangle.
    pub gap: f64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        Self {
            size: ImageSize::new(512, 512),
            min_instances: 1,
            max_instances: 8,
            min_aspect: 1.0,
            max_aspect: 20.0,
            min_height: 16.0,
            max_height: 40.0,
            max_angle: std::f64::consts::FRAC_PI_4,
            require_aspect: None,
            gap: 8.0,
        }
    }
}

fn random_rect(rng: &mut ChaCha8Rng, spec: &SceneSpec, min_aspect: f64) -> RotatedRect {
    let (h_img, w_img) = (f64::from(spec.size.height), f64::from(spec.size.width));
    let height = rng.gen_range(spec.min_height..=spec.max_height);
    let aspect = rng.gen_range(min_aspect..=spec.max_aspect.max(min_aspect));
    let width = (height * aspect).min(0.9 * w_img);
    let theta = rng.gen_range(-spec.max_angle..spec.max_angle);
    let center = Point2::new(rng.gen_range(0.0..w_img), rng.gen_range(0.0..h_img));
    RotatedRect::new(center, width, height, theta)
}

fn fits(rect: &RotatedRect, spec: &SceneSpec) -> bool {
    let b = rect.to_quad().bounds();
    let m = spec.gap;
    b.min.x >= m && b.min.y >= m && b.max.x <= f64::from(spec.size.width) - m && b.max.y <= f64::from(spec.size.height) - m
}

fn padded(rect: &RotatedRect, gap: f64) -> RotatedRect {
    RotatedRect::new(rect.center, rect.width + gap, rect.height + gap, rect.theta)
}

/// Draws one scene. Every instance is guaranteed to produce positive pixels
/// under `cfg`.
pub fn random_scene(rng: &mut ChaCha8Rng, spec: &SceneSpec, cfg: &LabelConfig) -> Vec<TextInstance> {
    loop {
        let target = rng.gen_range(spec.min_instances..=spec.max_instances);
        let mut rects: Vec<RotatedRect> = Vec::with_capacity(target);
        let mut attempts = 0;
        while rects.len() < target && attempts < 2000 {
            attempts += 1;
            let min_aspect = match (rects.is_empty(), spec.require_aspect) {
                (true, Some(a)) => a,
                _ => spec.min_aspect,
            };
            let r = random_rect(rng, spec, min_aspect);
            if !fits(&r, spec) {
                continue;
            }
            let pr = padded(&r, spec.gap).to_quad();
            if rects.iter().all(|o| quad_iou(&pr, &o.to_quad()) == 0.0) {
                rects.push(r);
            }
        }
        if rects.len() < spec.min_instances {
            continue;
        }
        let scene: Vec<TextInstance> = rects.iter().map(|r| TextInstance::new(r.to_quad())).collect();
        match generate_maps(&scene, spec.size, cfg) {
            Ok(m) if m.skipped == 0 => return scene,
            _ => continue,
        }
    }
}

/// Candidates from a page of long horizontal text lines with distance noise,
/// truncated to `count`.
pub fn synthetic_candidates(count: usize, seed: u64) -> Vec<QuadBox> {
    let cfg = LabelConfig::default();
    let width = 1024u32;
    let line_h = 32.0;
    let pitch = 48.0;
    // Each 1000 px line yields roughly 750 positives.
    let lines = count.div_ceil(700).max(1);
    let height = ((lines as f64 * pitch + pitch) as u32).div_ceil(cfg.stride) * cfg.stride;
    let instances: Vec<TextInstance> = (0..lines)
        .map(|i| {
            let y0 = 16.0 + i as f64 * pitch;
            TextInstance::new(crate::geometry::Quad::axis_aligned(12.0, y0, 1012.0, y0 + line_h))
        })
        .collect();
    let noise = NoiseModel {
        sigma0: 0.5,
        sigma1: 0.05,
        angle_sigma: 0.0,
        seed,
    };
    let maps = render_oracle_maps(&instances, ImageSize::new(height, width), &cfg, &noise).expect("valid synthetic page");
    let mut cands = decode_maps(&maps, 0.5).expect("consistent maps");
    cands.truncate(count);
    cands
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchResult {
    pub candidates: usize,
    pub variant: NmsVariant,
    pub elapsed: Duration,
    pub output_boxes: usize,
}

/// Wall-clock time of each NMS variant on `count` synthetic candidates, best of `repeats`.
pub fn bench_nms(count: usize, seed: u64, repeats: usize) -> Vec<BenchResult> {
    let cands = synthetic_candidates(count, seed);
    let params = NmsParams::default();
    NmsVariant::ALL
        .iter()
        .map(|&variant| {
            let mut best = Duration::MAX;
            let mut output_boxes = 0;
            for _ in 0..repeats.max(1) {
                let start = Instant::now();
                let out = run_nms(&cands, &params, variant);
                best = best.min(start.elapsed());
                output_boxes = out.len();
            }
            BenchResult {
                candidates: cands.len(),
                variant,
                elapsed: best,
                output_boxes,
            }
        })
        .collect()
}
