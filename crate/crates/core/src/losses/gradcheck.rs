//! Central finite-difference checks for every loss.
//!
//! Each check builds a random problem away from kinks (no `min` ties, no
//! smoothed-L1 knee, no probabilities near the clamp), perturbs randomly chosen
//! prediction coordinates by `±FD_STEP` and compares the numeric slope of the
//! loss value against the analytic gradient.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::*;
use crate::geometry::Geometry5;
use crate::grid::Grid;

pub const FD_STEP: f64 = 1e-5;
pub const FD_REL_TOLERANCE: f64 = 1e-4;
/// Gradients smaller than this are compared on an absolute scale.
pub const FD_ABS_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub loss: &'static str,
    pub points: usize,
    pub max_rel_error: f64,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.max_rel_error < FD_REL_TOLERANCE
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FD_ABS_FLOOR)
}

/// Compares `analytic[i]` with the central difference of `value` at each of `coords`.
pub fn check_coordinates(
    loss: &'static str,
    params: &[f64],
    analytic: &[f64],
    coords: &[usize],
    mut value: impl FnMut(&[f64]) -> f64,
) -> GradCheckReport {
    let mut work = params.to_vec();
    let mut worst: f64 = 0.0;
    for &i in coords {
        let x = work[i];
        work[i] = x + FD_STEP;
        let up = value(&work);
        work[i] = x - FD_STEP;
        let down = value(&work);
        work[i] = x;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    GradCheckReport {
        loss,
        points: coords.len(),
        max_rel_error: worst,
    }
}

const ROWS: usize = 10;
const COLS: usize = 10;

fn flatten_geometry(g: &Grid<Geometry5>) -> Vec<f64> {
    g.as_slice().iter().flat_map(|v| v.to_array()).collect()
}

fn unflatten_geometry(v: &[f64], rows: usize, cols: usize) -> Grid<Geometry5> {
    let data = v
        .chunks_exact(5)
        .map(|c| Geometry5::from_array([c[0], c[1], c[2], c[3], c[4]]))
        .collect();
    Grid::from_vec(rows, cols, data).expect("shape")
}

fn flatten_possens(g: &Grid<[f64; 4]>) -> Vec<f64> {
    g.as_slice().iter().flat_map(|v| v.iter().copied()).collect()
}

fn unflatten_possens(v: &[f64], rows: usize, cols: usize) -> Grid<[f64; 4]> {
    let data = v.chunks_exact(4).map(|c| [c[0], c[1], c[2], c[3]]).collect();
    Grid::from_vec(rows, cols, data).expect("shape")
}

/// Random geometry pair with every predicted distance at least 0.05 from its target.
fn geometry_pair(rng: &mut ChaCha8Rng) -> (Geometry5, Geometry5) {
    let dist = |rng: &mut ChaCha8Rng| -> (f64, f64) {
        loop {
            let (p, g): (f64, f64) = (rng.gen_range(0.5..12.0), rng.gen_range(0.5..12.0));
            if (p - g).abs() > 0.05 {
                return (p, g);
            }
        }
    };
    let (t, tg) = dist(rng);
    let (r, rg) = dist(rng);
    let (b, bg) = dist(rng);
    let (l, lg) = dist(rng);
    let theta = rng.gen_range(-0.7..0.7);
    let theta_g = rng.gen_range(-0.7..0.7);
    (Geometry5::new(t, r, b, l, theta), Geometry5::new(tg, rg, bg, lg, theta_g))
}

struct GeometryProblem {
    pred: Grid<Geometry5>,
    gt: Grid<Geometry5>,
    positives: Grid<bool>,
    ids: Grid<u32>,
}

fn geometry_problem(rng: &mut ChaCha8Rng) -> GeometryProblem {
    let n = ROWS * COLS;
    let mut pred = Vec::with_capacity(n);
    let mut gt = Vec::with_capacity(n);
    let mut positives = Vec::with_capacity(n);
    let mut ids = Vec::with_capacity(n);
    for _ in 0..n {
        let (p, g) = geometry_pair(rng);
        pred.push(p);
        gt.push(g);
        let pos = rng.gen_bool(0.5);
        positives.push(pos);
        ids.push(if pos { rng.gen_range(1..=4) } else { 0 });
    }
    GeometryProblem {
        pred: Grid::from_vec(ROWS, COLS, pred).unwrap(),
        gt: Grid::from_vec(ROWS, COLS, gt).unwrap(),
        positives: Grid::from_vec(ROWS, COLS, positives).unwrap(),
        ids: Grid::from_vec(ROWS, COLS, ids).unwrap(),
    }
}

/// `points` flat coordinates drawn from pixels where `active` holds.
fn pick_coords(rng: &mut ChaCha8Rng, active: &[bool], channels: &[usize], stride: usize, offset: usize, points: usize) -> Vec<usize> {
    let pool: Vec<usize> = active
        .iter()
        .enumerate()
        .filter(|(_, &a)| a)
        .flat_map(|(i, _)| channels.iter().map(move |&c| offset + i * stride + c))
        .collect();
    if pool.is_empty() {
        return Vec::new();
    }
    (0..points).map(|_| *pool.choose(rng).expect("non-empty")).collect()
}

fn check_geometry(
    name: &'static str,
    rng: &mut ChaCha8Rng,
    points: usize,
    channels: &[usize],
    f: impl Fn(&Grid<Geometry5>, &GeometryProblem) -> LossValue<Grid<Geometry5>>,
) -> GradCheckReport {
    let prob = geometry_problem(rng);
    let params = flatten_geometry(&prob.pred);
    let analytic = flatten_geometry(&f(&prob.pred, &prob).grad);
    let coords = pick_coords(rng, prob.positives.as_slice(), channels, 5, 0, points);
    check_coordinates(name, &params, &analytic, &coords, |p| {
        f(&unflatten_geometry(p, ROWS, COLS), &prob).value
    })
}

fn random_labels(rng: &mut ChaCha8Rng) -> LabelMaps {
    let n = ROWS * COLS;
    let prob = geometry_problem(rng);
    let train_mask: Vec<u8> = (0..n)
        .map(|i| u8::from(prob.positives.as_slice()[i] || rng.gen_bool(0.9)))
        .collect();
    let score: Vec<u8> = prob.positives.as_slice().iter().map(|&p| u8::from(p)).collect();
    let possens: Vec<[f64; 4]> = (0..n).map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0))).collect();
    LabelMaps {
        stride: crate::DEFAULT_STRIDE,
        score: Grid::from_vec(ROWS, COLS, score).unwrap(),
        geometry: prob.gt,
        possens: Grid::from_vec(ROWS, COLS, possens).unwrap(),
        train_mask: Grid::from_vec(ROWS, COLS, train_mask).unwrap(),
        instance_id: prob.ids,
        skipped: 0,
    }
}

/// Prediction for a position-sensitive target, kept clear of the smoothed-L1 knee.
fn possens_prediction(rng: &mut ChaCha8Rng, target: f64) -> f64 {
    loop {
        let p = rng.gen_range(-0.8..1.8);
        if ((p - target).abs() - 1.0).abs() > 0.01 {
            return p;
        }
    }
}

fn random_score_problem(rng: &mut ChaCha8Rng) -> (Grid<f64>, Grid<u8>, Grid<u8>) {
    let n = 16 * 16;
    let pred = (0..n).map(|_| rng.gen_range(0.02..0.98)).collect();
    let gt = (0..n).map(|_| u8::from(rng.gen_bool(0.15))).collect();
    let mask = (0..n).map(|_| u8::from(rng.gen_bool(0.9))).collect();
    (
        Grid::from_vec(16, 16, pred).unwrap(),
        Grid::from_vec(16, 16, gt).unwrap(),
        Grid::from_vec(16, 16, mask).unwrap(),
    )
}

/// Runs the finite-difference suite with `points` coordinates per loss.
pub fn run_all(points: usize, seed: u64) -> Vec<GradCheckReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dists = [0, 1, 2, 3];
    let mut reports = Vec::new();

    reports.push(check_geometry("iou", &mut rng, points, &dists, |p, prob| {
        iou_loss(p, &prob.gt, &prob.positives).expect("shapes")
    }));
    reports.push(check_geometry("instance_iou", &mut rng, points, &dists, |p, prob| {
        instance_iou_loss(p, &prob.gt, &prob.positives, &prob.ids).expect("shapes")
    }));

    {
        let prob = geometry_problem(&mut rng);
        let pred = prob.pred.map(|g| g.theta);
        let gt = prob.gt.map(|g| g.theta);
        let analytic = angle_loss(&pred, &gt, &prob.positives).expect("shapes").grad;
        let coords = pick_coords(&mut rng, prob.positives.as_slice(), &[0], 1, 0, points);
        reports.push(check_coordinates("angle", pred.as_slice(), analytic.as_slice(), &coords, |p| {
            let g = Grid::from_vec(ROWS, COLS, p.to_vec()).unwrap();
            angle_loss(&g, &gt, &prob.positives).expect("shapes").value
        }));
    }

    let weights = LossWeights::default();
    reports.push(check_geometry("geometry", &mut rng, points, &[0, 1, 2, 3, 4], |p, prob| {
        geometry_loss(p, &prob.gt, &prob.positives, &prob.ids, &weights).expect("shapes")
    }));

    {
        let (pred, gt, mask) = random_score_problem(&mut rng);
        let analytic = score_loss_ohem(&pred, &gt, &mask, DEFAULT_NEG_POS_RATIO).expect("shapes").grad;
        let selected = ohem_selection(&pred, &gt, &mask, DEFAULT_NEG_POS_RATIO).expect("shapes");
        let mut active = vec![false; pred.len()];
        for i in selected {
            active[i] = true;
        }
        let coords = pick_coords(&mut rng, &active, &[0], 1, 0, points);
        reports.push(check_coordinates("score_ohem", pred.as_slice(), analytic.as_slice(), &coords, |p| {
            let g = Grid::from_vec(16, 16, p.to_vec()).unwrap();
            score_loss_ohem(&g, &gt, &mask, DEFAULT_NEG_POS_RATIO).expect("shapes").value
        }));
    }

    {
        let labels = random_labels(&mut rng);
        let positives = labels.positives();
        let pred = labels.possens.map(|t| t.map(|v| possens_prediction(&mut rng, v)));
        let analytic = flatten_possens(&possens_loss(&pred, &labels.possens, &positives).expect("shapes").grad);
        let coords = pick_coords(&mut rng, positives.as_slice(), &[0, 1, 2, 3], 4, 0, points);
        reports.push(check_coordinates("possens", &flatten_possens(&pred), &analytic, &coords, |p| {
            possens_loss(&unflatten_possens(p, ROWS, COLS), &labels.possens, &positives)
                .expect("shapes")
                .value
        }));
    }

    reports.push(check_total(&mut rng, points, &weights));
    reports
}

fn check_total(rng: &mut ChaCha8Rng, points: usize, weights: &LossWeights) -> GradCheckReport {
    let labels = random_labels(rng);
    let n = ROWS * COLS;
    let perturb = |rng: &mut ChaCha8Rng, g: &Geometry5| {
        let (mut p, _) = geometry_pair(rng);
        // Keep each predicted distance away from its own target.
        for (pv, gv) in [(&mut p.top, g.top), (&mut p.right, g.right), (&mut p.bottom, g.bottom), (&mut p.left, g.left)] {
            if (*pv - gv).abs() < 0.05 {
                *pv = gv + 0.5;
            }
        }
        p
    };
    let pred = HeadOutputs {
        score: Grid::from_vec(ROWS, COLS, (0..n).map(|_| rng.gen_range(0.02..0.98)).collect()).unwrap(),
        geometry_coarse: labels.geometry.map(|g| perturb(rng, g)),
        geometry_refined: labels.geometry.map(|g| perturb(rng, g)),
        possens: labels.possens.map(|t| t.map(|v| possens_prediction(rng, v))),
    };

    // Flat layout: score | coarse (5 per pixel) | refined (5) | possens (4).
    let (o_coarse, o_refined, o_possens) = (n, 6 * n, 11 * n);
    let flatten = |h: &HeadOutputs| -> Vec<f64> {
        let mut v = h.score.as_slice().to_vec();
        v.extend(flatten_geometry(&h.geometry_coarse));
        v.extend(flatten_geometry(&h.geometry_refined));
        v.extend(flatten_possens(&h.possens));
        v
    };
    let unflatten = |v: &[f64]| HeadOutputs {
        score: Grid::from_vec(ROWS, COLS, v[..o_coarse].to_vec()).unwrap(),
        geometry_coarse: unflatten_geometry(&v[o_coarse..o_refined], ROWS, COLS),
        geometry_refined: unflatten_geometry(&v[o_refined..o_possens], ROWS, COLS),
        possens: unflatten_possens(&v[o_possens..], ROWS, COLS),
    };
    let grads = total_loss(&pred, &labels, weights).expect("shapes").grad;
    let analytic = flatten(&HeadOutputs {
        score: grads.score,
        geometry_coarse: grads.geometry_coarse,
        geometry_refined: grads.geometry_refined,
        possens: grads.possens,
    });

    let positives = labels.positives();
    let selected = ohem_selection(&pred.score, &labels.score, &labels.train_mask, weights.neg_pos_ratio).expect("shapes");
    let mut active_score = vec![false; n];
    for i in selected {
        active_score[i] = true;
    }
    let per_head = points.div_ceil(4);
    let mut coords = pick_coords(rng, &active_score, &[0], 1, 0, per_head);
    coords.extend(pick_coords(rng, positives.as_slice(), &[0, 1, 2, 3, 4], 5, o_coarse, per_head));
    coords.extend(pick_coords(rng, positives.as_slice(), &[0, 1, 2, 3, 4], 5, o_refined, per_head));
    coords.extend(pick_coords(rng, positives.as_slice(), &[0, 1, 2, 3], 4, o_possens, per_head));
    coords.truncate(points.max(4));

    check_coordinates("total", &flatten(&pred), &analytic, &coords, |p| {
        total_loss(&unflatten(p), &labels, weights).expect("shapes").value
    })
}
