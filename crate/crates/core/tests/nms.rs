mod common;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use scenetext::labelgen::{BOTTOM, LEFT, RIGHT, TOP};
use scenetext::nms::{locality_aware_nms, pa_nms, position_aware_merge, standard_nms, weighted_merge};
use scenetext::{quad_iou, NmsParams, Quad, QuadBox};

use common::random_candidates;

fn weights(l: f64, r: f64, t: f64, b: f64) -> [f64; 4] {
    let mut w = [0.0; 4];
    w[LEFT] = l;
    w[RIGHT] = r;
    w[TOP] = t;
    w[BOTTOM] = b;
    w
}

#[test]
fn complementary_boxes_merge_closer_to_ground_truth() {
    let gt = Quad::axis_aligned(0.0, 0.0, 11.0, 4.0);
    let p = QuadBox::new(Quad::axis_aligned(0.0, 0.0, 10.0, 4.0), 0.9, weights(0.9, 0.1, 0.5, 0.5));
    let q = QuadBox::new(Quad::axis_aligned(1.0, 0.0, 11.0, 4.0), 0.9, weights(0.1, 0.9, 0.5, 0.5));
    let pa = position_aware_merge(&p, &q);
    let la = weighted_merge(&p, &q);
    assert!((pa.quad.points[0].x - 0.1).abs() < 1e-12);
    assert!((pa.quad.points[1].x - 10.9).abs() < 1e-12);
    // Score-weighted merge of equal scores lands on the midpoint box (0.5, 10.5).
    let (iou_pa, iou_la) = (quad_iou(&pa.quad, &gt), quad_iou(&la.quad, &gt));
    assert!((iou_pa - 10.8 / 11.0).abs() < 1e-12);
    assert!((iou_la - 10.0 / 11.0).abs() < 1e-12);
    assert!(iou_pa > iou_la);

    // The same pair through the full scan.
    let params = NmsParams::default();
    let out_pa = pa_nms(&[p, q], &params);
    let out_la = locality_aware_nms(&[p, q], &params);
    assert_eq!((out_pa.len(), out_la.len()), (1, 1));
    assert!(quad_iou(&out_pa[0].quad, &gt) > quad_iou(&out_la[0].quad, &gt));
}

#[test]
fn pa_equals_la_for_score_weights() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let params = NmsParams::default();
    for _ in 0..1000 {
        let cands = random_candidates(&mut rng);
        let la = locality_aware_nms(&cands, &params);
        let pa = pa_nms(&cands, &params);
        assert_eq!(la.len(), pa.len());
        for (a, b) in la.iter().zip(&pa) {
            for (x, y) in a.quad.points.iter().zip(&b.quad.points) {
                assert!((*x - *y).norm() <= 1e-9);
            }
        }
    }
}

fn candidates() -> impl Strategy<Value = Vec<QuadBox>> {
    any::<u64>().prop_map(|seed| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut c = random_candidates(&mut rng);
        // Decouple side weights from scores.
        for (k, b) in c.iter_mut().enumerate() {
            b.weights = std::array::from_fn(|s| ((k * 7 + s * 3) % 5) as f64 / 4.0);
        }
        c
    })
}

proptest! {
    #[test]
    fn merges_conserve_mass(c in candidates()) {
        let params = NmsParams { final_iou: 1.0, ..NmsParams::default() };
        // With a final threshold of 1 nothing is suppressed, so totals carry through.
        let out = pa_nms(&c, &params);
        let total = |boxes: &[QuadBox], f: &dyn Fn(&QuadBox) -> f64| boxes.iter().map(f).sum::<f64>();
        prop_assert!((total(&out, &|b| b.score) - total(&c, &|b| b.score)).abs() < 1e-9);
        for s in 0..4 {
            prop_assert!((total(&out, &|b| b.weights[s]) - total(&c, &|b| b.weights[s])).abs() < 1e-9);
        }
        prop_assert_eq!(out.iter().map(|b| b.merged).sum::<usize>(), c.len());
        let la = locality_aware_nms(&c, &params);
        prop_assert!((total(&la, &|b| b.score) - total(&c, &|b| b.score)).abs() < 1e-9);
    }

    #[test]
    fn outputs_are_bounded_and_stable(c in candidates()) {
        let params = NmsParams::default();
        for run in [pa_nms, locality_aware_nms] {
            let a = run(&c, &params);
            prop_assert!(a.len() <= c.len());
            prop_assert!(a.iter().all(|b| b.merged >= 1));
            prop_assert_eq!(&a, &run(&c, &params));
        }
        let kept = standard_nms(&c, 0.3);
        for (i, a) in kept.iter().enumerate() {
            for b in &kept[i + 1..] {
                prop_assert!(quad_iou(&a.quad, &b.quad) <= 0.3);
            }
        }
    }
}
