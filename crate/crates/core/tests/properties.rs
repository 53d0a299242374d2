mod common;

use common::*;
use num_complex::Complex32;
use proptest::prelude::*;
use radkit::augment::{
    apply_keep_mask, apply_phases, center_crop, cutout, draw_keep_mask, draw_phases, hflip, polar_rotate, threshold,
    vflip,
};
use radkit::eval::{average_precision, iou_thresholds, mean_ap, rotated_iou, Detection, GroundTruth};
use radkit::simulator::integrate_heatmap;
use radkit::{Heatmap, RngStream, RotatedBox, VirtualArrayTensor};

fn arb_box() -> impl Strategy<Value = RotatedBox> {
    (-10.0..10.0f64, 0.0..20.0f64, 0.2..6.0f64, 0.2..4.0f64, -4.0..4.0f64)
        .prop_map(|(cx, cy, l, w, yaw)| RotatedBox::new(cx, cy, l, w, yaw))
}

fn arb_heatmap() -> impl Strategy<Value = Heatmap> {
    (1usize..12, 1usize..12)
        .prop_flat_map(|(l, a)| (Just(l), Just(a), prop::collection::vec(0.0f32..50.0, l * a)))
        .prop_map(|(l, a, v)| Heatmap::from_vec(l, a, v).unwrap())
}

fn arb_tensor() -> impl Strategy<Value = VirtualArrayTensor> {
    (1usize..6, 1usize..6, 1usize..6)
        .prop_flat_map(|(k, l, a)| {
            (
                Just(k),
                Just(l),
                Just(a),
                prop::collection::vec((-5.0f32..5.0, -5.0f32..5.0), k * l * a),
            )
        })
        .prop_map(|(k, l, a, v)| {
            let data = v.into_iter().map(|(re, im)| Complex32::new(re, im)).collect();
            VirtualArrayTensor::from_vec(k, l, a, data).unwrap()
        })
}

proptest! {
    #[test]
    fn iou_is_symmetric_and_bounded(a in arb_box(), b in arb_box()) {
        let ab = rotated_iou(&a, &b).unwrap();
        let ba = rotated_iou(&b, &a).unwrap();
        prop_assert!((0.0..=1.0).contains(&ab));
        prop_assert!((ab - ba).abs() < 1e-9);
    }

    #[test]
    fn iou_matches_axis_aligned_closed_form(a in arb_box(), b in arb_box()) {
        let a = RotatedBox { yaw: 0.0, ..a };
        let b = RotatedBox { yaw: 0.0, ..b };
        // yaw 0: length runs along y, width along x
        let ox = ((a.cx + a.width / 2.0).min(b.cx + b.width / 2.0) - (a.cx - a.width / 2.0).max(b.cx - b.width / 2.0)).max(0.0);
        let oy = ((a.cy + a.length / 2.0).min(b.cy + b.length / 2.0) - (a.cy - a.length / 2.0).max(b.cy - b.length / 2.0)).max(0.0);
        let inter = ox * oy;
        let want = inter / (a.area() + b.area() - inter);
        prop_assert!((rotated_iou(&a, &b).unwrap() - want).abs() < 1e-9);
    }

    #[test]
    fn iou_is_invariant_under_rigid_motion(a in arb_box(), b in arb_box(), theta in -3.2..3.2f64, tx in -50.0..50.0f64, ty in -50.0..50.0f64) {
        let (s, c) = theta.sin_cos();
        let moved = |bx: &RotatedBox| RotatedBox {
            cx: c * bx.cx - s * bx.cy + tx,
            cy: s * bx.cx + c * bx.cy + ty,
            yaw: bx.yaw - theta,
            ..bx.clone()
        };
        let before = rotated_iou(&a, &b).unwrap();
        let after = rotated_iou(&moved(&a), &moved(&b)).unwrap();
        prop_assert!((before - after).abs() < 1e-9, "{before} vs {after}");
    }

    #[test]
    fn ap_ignores_monotone_score_transforms(
        outcomes in prop::collection::vec(any::<bool>(), 0..12),
        raw in prop::collection::vec(0.0..1.0f64, 12),
        extra_gt in 0usize..3,
    ) {
        let hits = outcomes.iter().filter(|h| **h).count();
        let num_gt = hits + extra_gt;
        prop_assume!(num_gt > 0);
        let scores = &raw[..outcomes.len()];
        let (dets, gts) = scripted_instance(&outcomes, scores, num_gt);
        let squashed: Vec<Detection> = dets
            .iter()
            .map(|d| Detection::new(d.frame_id.clone(), d.bbox.clone(), d.score().powi(3) * 0.5 + 0.1))
            .collect();
        prop_assert_eq!(
            average_precision(&dets, &gts, 0.5).unwrap(),
            average_precision(&squashed, &gts, 0.5).unwrap()
        );
    }

    #[test]
    fn map_never_exceeds_ap50(
        shifts in prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64, -0.5..0.5f64, 0.0..1.0f64), 1..8),
    ) {
        let gts: Vec<GroundTruth> = (0..shifts.len())
            .map(|i| GroundTruth::new(format!("f{i}"), RotatedBox::new(0.0, 10.0, 4.0, 2.0, 0.0)))
            .collect();
        let dets: Vec<Detection> = shifts
            .iter()
            .enumerate()
            .map(|(i, &(dx, dy, dyaw, s))| Detection::new(format!("f{i}"), RotatedBox::new(dx, 10.0 + dy, 4.0, 2.0, dyaw), s))
            .collect();
        let ap50 = average_precision(&dets, &gts, 0.5).unwrap();
        prop_assert!(mean_ap(&dets, &gts).unwrap() <= ap50 + 1e-15);
        let mut last = f64::INFINITY;
        for thr in iou_thresholds() {
            let ap = average_precision(&dets, &gts, thr).unwrap();
            prop_assert!(ap <= last + 1e-15);
            last = ap;
        }
    }

    #[test]
    fn dropout_and_phase_noise_commute(t in arb_tensor(), seed in any::<u64>(), p in 0.0..=1.0f64, alpha in 0.0..=1.0f64) {
        let mut rng = RngStream::new(seed, 0);
        let mask = draw_keep_mask(t.num_virtual(), p, &mut rng);
        let phases = draw_phases(t.num_virtual(), alpha, &mut rng);
        let a = integrate_heatmap(&apply_phases(&apply_keep_mask(&t, &mask), &phases));
        let b = integrate_heatmap(&apply_keep_mask(&apply_phases(&t, &phases), &mask));
        prop_assert_eq!(a, b);
    }

    #[test]
    fn phase_noise_preserves_modulus(t in arb_tensor(), seed in any::<u64>(), alpha in 0.0..=1.0f64) {
        let phases = draw_phases(t.num_virtual(), alpha, &mut RngStream::new(seed, 1));
        let out = apply_phases(&t, &phases);
        for (x, y) in t.data().iter().zip(out.data()) {
            prop_assert!((x.norm() - y.norm()).abs() <= 1e-6 * x.norm().max(1e-6));
        }
    }

    #[test]
    fn heatmap_ops_keep_shape_and_sign(h in arb_heatmap().prop_filter("2x2 or larger", |h| h.num_range() >= 2 && h.num_azimuth() >= 2), shift in -20i64..20, f in 0.05..=1.0f64, pct in 0.0..=100.0f64, seed in any::<u64>()) {
        let outs = [
            polar_rotate(&h, shift % h.num_azimuth() as i64).unwrap(),
            center_crop(&h, f.max(2.0 / h.num_range().min(h.num_azimuth()) as f64).min(1.0)).unwrap(),
            hflip(&h),
            vflip(&h),
            threshold(&h, pct, false),
            threshold(&h, pct, true),
            cutout(&h, 0.5, &mut RngStream::new(seed, 2)),
        ];
        for o in outs {
            prop_assert_eq!((o.num_range(), o.num_azimuth()), (h.num_range(), h.num_azimuth()));
            prop_assert!(o.data().iter().all(|v| *v >= 0.0 && v.is_finite()));
        }
    }

    #[test]
    fn flips_are_involutions(h in arb_heatmap()) {
        prop_assert_eq!(hflip(&hflip(&h)), h.clone());
        prop_assert_eq!(vflip(&vflip(&h)), h);
    }

    #[test]
    fn rng_streams_are_positional(seed in any::<u64>(), id in any::<u64>(), n in 1usize..50) {
        let mut a = RngStream::new(seed, id);
        let draws: Vec<u64> = (0..n).map(|_| a.next_u64()).collect();
        for (i, d) in draws.iter().enumerate() {
            prop_assert_eq!(*d, RngStream::draw_at(seed, id, i as u64));
        }
    }
}

#[test]
fn ap_matches_brute_force_on_every_small_instance() {
    // every outcome pattern of up to five detections, with one to five
    // ground truths and distinct, tied and reversed score orders
    for n in 0..=5usize {
        for pattern in 0u32..(1 << n) {
            let outcomes: Vec<bool> = (0..n).map(|i| pattern >> i & 1 == 1).collect();
            let hits = outcomes.iter().filter(|h| **h).count();
            for num_gt in hits.max(1)..=5 {
                for scores in [
                    (0..n).map(|i| 1.0 - i as f64 * 0.1).collect::<Vec<_>>(),
                    vec![0.5; n],
                    (0..n).map(|i| 0.1 + i as f64 * 0.1).collect(),
                ] {
                    let (dets, gts) = scripted_instance(&outcomes, &scores, num_gt);
                    let mut order: Vec<usize> = (0..n).collect();
                    order.sort_by(|&i, &j| scores[j].total_cmp(&scores[i]));
                    let sorted: Vec<bool> = order.iter().map(|&i| outcomes[i]).collect();
                    let want = brute_force_ap(&sorted, num_gt);
                    let got = average_precision(&dets, &gts, 0.5).unwrap();
                    assert_eq!(got, want, "outcomes {outcomes:?} scores {scores:?} gts {num_gt}");
                }
            }
        }
    }
}
