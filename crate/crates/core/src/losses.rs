//! Training objectives with analytic gradients.
//!
//! Every loss returns its value together with the gradient with respect to the
//! prediction it consumes. Reductions run sequentially in row-major order so
//! repeated evaluations are bit-identical.

use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::geometry::Geometry5;
use crate::grid::Grid;
use crate::labelgen::LabelMaps;

pub mod gradcheck;

/// Added to both intersection and union inside the IoU log.
pub const IOU_SMOOTHING: f64 = 1.0;
/// Probabilities are clamped to `[BCE_EPS, 1 − BCE_EPS]` before the log.
pub const BCE_EPS: f64 = 1e-7;
pub const DEFAULT_NEG_POS_RATIO: usize = 3;
/// Hardest negatives kept when an image has no positive pixel.
pub const OHEM_FALLBACK_NEGATIVES: usize = 100;

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue<G> {
    pub value: f64,
    pub grad: G,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossWeights {
    pub lambda_gc: f64,
    pub lambda_gr: f64,
    pub lambda_p: f64,
    pub lambda_i: f64,
    pub lambda_theta: f64,
    /// Negatives kept per positive by OHEM in the score loss.
    pub neg_pos_ratio: usize,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self {
            lambda_gc: 1.0,
            lambda_gr: 1.0,
            lambda_p: 1.0,
            lambda_i: 1.0,
            lambda_theta: 20.0,
            neg_pos_ratio: DEFAULT_NEG_POS_RATIO,
        }
    }
}

/// Per-sample `−log((I + c) / (U + c))` in the box-local frame and its
/// gradient with respect to the four predicted distances. At `min` ties the
/// predicted branch is differentiated.
pub fn iou_term(pred: &Geometry5, gt: &Geometry5, smoothing: f64) -> (f64, Geometry5) {
    let pick = |p: f64, g: f64| if p <= g { (p, 1.0) } else { (g, 0.0) };
    let (mt, dt) = pick(pred.top, gt.top);
    let (mb, db) = pick(pred.bottom, gt.bottom);
    let (ml, dl) = pick(pred.left, gt.left);
    let (mr, dr) = pick(pred.right, gt.right);
    let inter_h = mt + mb;
    let inter_w = ml + mr;
    let inter = inter_h * inter_w;
    let pred_h = pred.top + pred.bottom;
    let pred_w = pred.left + pred.right;
    let area_pred = pred_h * pred_w;
    let area_gt = (gt.top + gt.bottom) * (gt.left + gt.right);
    let union = area_pred + area_gt - inter;
    let value = (union + smoothing).ln() - (inter + smoothing).ln();

    let (ku, ki) = (1.0 / (union + smoothing), 1.0 / (inter + smoothing));
    let d = |d_area: f64, d_inter: f64| (d_area - d_inter) * ku - d_inter * ki;
    let grad = Geometry5 {
        top: d(pred_w, dt * inter_w),
        bottom: d(pred_w, db * inter_w),
        left: d(pred_h, dl * inter_h),
        right: d(pred_h, dr * inter_h),
        theta: 0.0,
    };
    (value, grad)
}

fn check_shapes<A, B, C>(a: &Grid<A>, b: &Grid<B>, c: &Grid<C>) -> Result<()> {
    a.check_shape(b)?;
    a.check_shape(c)
}

pub fn iou_loss(pred: &Grid<Geometry5>, gt: &Grid<Geometry5>, positives: &Grid<bool>) -> Result<LossValue<Grid<Geometry5>>> {
    iou_loss_with_smoothing(pred, gt, positives, IOU_SMOOTHING)
}

/// Mean IoU loss over the positive set; `smoothing = 0` gives the unsmoothed form.
pub fn iou_loss_with_smoothing(
    pred: &Grid<Geometry5>,
    gt: &Grid<Geometry5>,
    positives: &Grid<bool>,
    smoothing: f64,
) -> Result<LossValue<Grid<Geometry5>>> {
    check_shapes(pred, gt, positives)?;
    let count = positives.as_slice().iter().filter(|&&p| p).count();
    let mut grad = Grid::<Geometry5>::new(pred.height(), pred.width());
    if count == 0 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let norm = 1.0 / count as f64;
    let mut total = 0.0;
    for (i, &pos) in positives.as_slice().iter().enumerate() {
        if pos {
            let (v, g) = iou_term(&pred.as_slice()[i], &gt.as_slice()[i], smoothing);
            total += v;
            grad.as_mut_slice()[i] = scale_geometry(g, norm);
        }
    }
    Ok(LossValue {
        value: total * norm,
        grad,
    })
}

fn scale_geometry(g: Geometry5, k: f64) -> Geometry5 {
    Geometry5::new(g.top * k, g.right * k, g.bottom * k, g.left * k, g.theta * k)
}

fn add_scaled(acc: &mut Grid<Geometry5>, g: &Grid<Geometry5>, k: f64) {
    for (a, b) in acc.as_mut_slice().iter_mut().zip(g.as_slice()) {
        a.top += k * b.top;
        a.right += k * b.right;
        a.bottom += k * b.bottom;
        a.left += k * b.left;
        a.theta += k * b.theta;
    }
}

pub fn instance_iou_loss(
    pred: &Grid<Geometry5>,
    gt: &Grid<Geometry5>,
    positives: &Grid<bool>,
    instance_id: &Grid<u32>,
) -> Result<LossValue<Grid<Geometry5>>> {
    instance_iou_loss_with_smoothing(pred, gt, positives, instance_id, IOU_SMOOTHING)
}

/// IoU loss averaged within each instance first, then across instances.
pub fn instance_iou_loss_with_smoothing(
    pred: &Grid<Geometry5>,
    gt: &Grid<Geometry5>,
    positives: &Grid<bool>,
    instance_id: &Grid<u32>,
    smoothing: f64,
) -> Result<LossValue<Grid<Geometry5>>> {
    check_shapes(pred, gt, positives)?;
    pred.check_shape(instance_id)?;
    let mut members: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, (&pos, &id)) in positives.as_slice().iter().zip(instance_id.as_slice()).enumerate() {
        match (pos, id) {
            (true, 0) | (false, 1..) => {
                let (r, c) = positives.coords(i);
                return Err(Error::Invalid(format!(
                    "instance id {id} at ({r}, {c}) disagrees with the positive mask"
                )));
            }
            (true, id) => members.entry(id).or_default().push(i),
            (false, 0) => {}
        }
    }
    let mut grad = Grid::<Geometry5>::new(pred.height(), pred.width());
    if members.is_empty() {
        return Ok(LossValue { value: 0.0, grad });
    }
    let per_instance = 1.0 / members.len() as f64;
    let mut total = 0.0;
    for pixels in members.values() {
        let norm = 1.0 / pixels.len() as f64;
        let mut sum = 0.0;
        for &i in pixels {
            let (v, g) = iou_term(&pred.as_slice()[i], &gt.as_slice()[i], smoothing);
            sum += v;
            grad.as_mut_slice()[i] = scale_geometry(g, norm * per_instance);
        }
        total += sum * norm;
    }
    Ok(LossValue {
        value: total * per_instance,
        grad,
    })
}

/// Mean of `1 − cos(θ̂ − θ*)` over the positive set.
pub fn angle_loss(pred_theta: &Grid<f64>, gt_theta: &Grid<f64>, positives: &Grid<bool>) -> Result<LossValue<Grid<f64>>> {
    check_shapes(pred_theta, gt_theta, positives)?;
    let count = positives.as_slice().iter().filter(|&&p| p).count();
    let mut grad = Grid::<f64>::new(pred_theta.height(), pred_theta.width());
    if count == 0 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let norm = 1.0 / count as f64;
    let mut total = 0.0;
    for (i, &pos) in positives.as_slice().iter().enumerate() {
        if pos {
            let delta = pred_theta.as_slice()[i] - gt_theta.as_slice()[i];
            total += 1.0 - delta.cos();
            grad.as_mut_slice()[i] = delta.sin() * norm;
        }
    }
    Ok(LossValue {
        value: total * norm,
        grad,
    })
}

/// `L_iou + λ_i · L_ins-iou + λ_θ · L_θ` for one geometry head.
pub fn geometry_loss(
    pred: &Grid<Geometry5>,
    gt: &Grid<Geometry5>,
    positives: &Grid<bool>,
    instance_id: &Grid<u32>,
    weights: &LossWeights,
) -> Result<LossValue<Grid<Geometry5>>> {
    let iou = iou_loss(pred, gt, positives)?;
    let ins = instance_iou_loss(pred, gt, positives, instance_id)?;
    let angle = angle_loss(&pred.map(|g| g.theta), &gt.map(|g| g.theta), positives)?;

    let mut grad = iou.grad;
    add_scaled(&mut grad, &ins.grad, weights.lambda_i);
    for (g, a) in grad.as_mut_slice().iter_mut().zip(angle.grad.as_slice()) {
        g.theta += weights.lambda_theta * a;
    }
    Ok(LossValue {
        value: iou.value + weights.lambda_i * ins.value + weights.lambda_theta * angle.value,
        grad,
    })
}

fn bce(p: f64, y: f64) -> (f64, f64) {
    let pc = p.clamp(BCE_EPS, 1.0 - BCE_EPS);
    let value = -(y * pc.ln() + (1.0 - y) * (1.0 - pc).ln());
    let d = if p > BCE_EPS && p < 1.0 - BCE_EPS {
        -y / pc + (1.0 - y) / (1.0 - pc)
    } else {
        0.0
    };
    (value, d)
}

/// Flat indices kept by OHEM: every unmasked positive plus the
/// `ratio · |positives|` unmasked negatives with the largest cross entropy
/// (the 100 hardest when there is no positive). Ties go to the lower index.
pub fn ohem_selection(pred: &Grid<f64>, gt: &Grid<u8>, train_mask: &Grid<u8>, neg_pos_ratio: usize) -> Result<Vec<usize>> {
    check_shapes(pred, gt, train_mask)?;
    let mut selected = Vec::new();
    let mut negatives = Vec::new();
    for (i, (&y, &m)) in gt.as_slice().iter().zip(train_mask.as_slice()).enumerate() {
        if m == 0 {
            continue;
        }
        if y > 0 {
            selected.push(i);
        } else {
            negatives.push((bce(pred.as_slice()[i], 0.0).0, i));
        }
    }
    let wanted = if selected.is_empty() {
        OHEM_FALLBACK_NEGATIVES
    } else {
        selected.len().saturating_mul(neg_pos_ratio)
    };
    let keep = wanted.min(negatives.len());
    negatives.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    selected.extend(negatives[..keep].iter().map(|&(_, i)| i));
    selected.sort_unstable();
    Ok(selected)
}

/// Binary cross entropy averaged over the OHEM selection.
pub fn score_loss_ohem(
    pred: &Grid<f64>,
    gt: &Grid<u8>,
    train_mask: &Grid<u8>,
    neg_pos_ratio: usize,
) -> Result<LossValue<Grid<f64>>> {
    let selected = ohem_selection(pred, gt, train_mask, neg_pos_ratio)?;
    let mut grad = Grid::<f64>::new(pred.height(), pred.width());
    if selected.is_empty() {
        return Ok(LossValue { value: 0.0, grad });
    }
    let norm = 1.0 / selected.len() as f64;
    let mut total = 0.0;
    for &i in &selected {
        let y = if gt.as_slice()[i] > 0 { 1.0 } else { 0.0 };
        let (v, d) = bce(pred.as_slice()[i], y);
        total += v;
        grad.as_mut_slice()[i] = d * norm;
    }
    Ok(LossValue {
        value: total * norm,
        grad,
    })
}

fn smooth_l1(x: f64) -> (f64, f64) {
    if x.abs() < 1.0 {
        (0.5 * x * x, x)
    } else {
        (x.abs() - 0.5, x.signum())
    }
}

/// Smoothed-L1 over the four position-sensitive channels, divided by `4 |Ω|`.
pub fn possens_loss(pred: &Grid<[f64; 4]>, gt: &Grid<[f64; 4]>, positives: &Grid<bool>) -> Result<LossValue<Grid<[f64; 4]>>> {
    check_shapes(pred, gt, positives)?;
    let count = positives.as_slice().iter().filter(|&&p| p).count();
    let mut grad = Grid::<[f64; 4]>::new(pred.height(), pred.width());
    if count == 0 {
        return Ok(LossValue { value: 0.0, grad });
    }
    let norm = 1.0 / (4.0 * count as f64);
    let mut total = 0.0;
    for (i, &pos) in positives.as_slice().iter().enumerate() {
        if !pos {
            continue;
        }
        let (p, g) = (pred.as_slice()[i], gt.as_slice()[i]);
        let mut d = [0.0; 4];
        for k in 0..4 {
            let (v, dv) = smooth_l1(p[k] - g[k]);
            total += v;
            d[k] = dv * norm;
        }
        grad.as_mut_slice()[i] = d;
    }
    Ok(LossValue {
        value: total * norm,
        grad,
    })
}

/// Every head the composite loss consumes.
#[derive(Debug, Clone, PartialEq)]
pub struct HeadOutputs {
    pub score: Grid<f64>,
    pub geometry_coarse: Grid<Geometry5>,
    pub geometry_refined: Grid<Geometry5>,
    pub possens: Grid<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadGradients {
    pub score: Grid<f64>,
    pub geometry_coarse: Grid<Geometry5>,
    pub geometry_refined: Grid<Geometry5>,
    pub possens: Grid<[f64; 4]>,
}

/// `L_s + λ_gc L_gc + λ_gr L_gr + λ_p L_p`.
pub fn total_loss(pred: &HeadOutputs, labels: &LabelMaps, weights: &LossWeights) -> Result<LossValue<HeadGradients>> {
    let positives = labels.positives();
    let score = score_loss_ohem(&pred.score, &labels.score, &labels.train_mask, weights.neg_pos_ratio)?;
    let coarse = geometry_loss(&pred.geometry_coarse, &labels.geometry, &positives, &labels.instance_id, weights)?;
    let refined = geometry_loss(&pred.geometry_refined, &labels.geometry, &positives, &labels.instance_id, weights)?;
    let possens = possens_loss(&pred.possens, &labels.possens, &positives)?;

    let scale_geo = |g: Grid<Geometry5>, k: f64| g.map(|v| scale_geometry(*v, k));
    Ok(LossValue {
        value: score.value
            + weights.lambda_gc * coarse.value
            + weights.lambda_gr * refined.value
            + weights.lambda_p * possens.value,
        grad: HeadGradients {
            score: score.grad,
            geometry_coarse: scale_geo(coarse.grad, weights.lambda_gc),
            geometry_refined: scale_geo(refined.grad, weights.lambda_gr),
            possens: possens.grad.map(|d| d.map(|v| v * weights.lambda_p)),
        },
    })
}
