//! Randomized invariant checks over the numeric building blocks.

use cardioseg::eval::{bland_altman, dice, linear_regression, surface_distances};
use cardioseg::pointcloud::{chamfer, emd, farthest_point_sample, PointCloud};
use cardioseg::preprocess::{histogram_equalize, minmax_normalize};
use cardioseg::synth::DomainShiftConfig;
use proptest::prelude::*;

fn cloud_strategy(n: usize) -> impl Strategy<Value = PointCloud> {
    prop::collection::vec([0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0], n).prop_map(PointCloud::new)
}

fn paired_clouds() -> impl Strategy<Value = (PointCloud, PointCloud)> {
    (1usize..7).prop_flat_map(|n| (cloud_strategy(n), cloud_strategy(n)))
}

proptest! {
    #[test]
    fn emd_is_symmetric_and_zero_on_self((a, b) in paired_clouds()) {
        let ab = emd(&a, &b).unwrap().cost;
        let ba = emd(&b, &a).unwrap().cost;
        prop_assert!((ab - ba).abs() <= 1e-9 * (1.0 + ab.abs()));
        prop_assert!(ab >= 0.0);
        prop_assert!(emd(&a, &a).unwrap().cost <= 1e-12);
    }

    #[test]
    fn emd_is_translation_invariant(
        (a, b) in paired_clouds(),
        shift in [-2.0f64..2.0, -2.0f64..2.0, -2.0f64..2.0],
    ) {
        let translate = |c: &PointCloud| {
            PointCloud::new(
                c.points
                    .iter()
                    .map(|p| [p[0] + shift[0], p[1] + shift[1], p[2] + shift[2]])
                    .collect(),
            )
        };
        let base = emd(&a, &b).unwrap().cost;
        let moved = emd(&translate(&a), &translate(&b)).unwrap().cost;
        prop_assert!((base - moved).abs() <= 1e-9 * (1.0 + base.abs()));
    }

    #[test]
    fn emd_matching_is_a_permutation((a, b) in paired_clouds()) {
        let mut perm = emd(&a, &b).unwrap().perm;
        perm.sort_unstable();
        prop_assert_eq!(perm, (0..a.len()).collect::<Vec<_>>());
    }

    #[test]
    fn chamfer_is_nonnegative_and_zero_on_self((a, b) in paired_clouds()) {
        prop_assert!(chamfer(&a, &b).unwrap() >= 0.0);
        prop_assert!(chamfer(&a, &a).unwrap() <= 1e-12);
    }

    #[test]
    fn fps_returns_k_distinct_indices(
        points in prop::collection::vec([0.0f64..1.0, 0.0f64..1.0, 0.0f64..1.0], 1..40),
        k_frac in 0.0f64..1.0,
    ) {
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                prop_assume!(points[i] != points[j]);
            }
        }
        let n = points.len();
        let k = 1 + ((n - 1) as f64 * k_frac) as usize;
        let sel = farthest_point_sample(&points, k).unwrap();
        prop_assert_eq!(sel.len(), k);
        prop_assert_eq!(sel[0], 0);
        let mut sorted = sel.clone();
        sorted.sort_unstable();
        sorted.dedup();
        prop_assert_eq!(sorted.len(), k, "duplicate index selected");
        prop_assert!(sel.iter().all(|&i| i < n));
    }

    #[test]
    fn dice_is_bounded_symmetric_and_one_on_self(
        pred in prop::collection::vec(0u8..4, 1..200),
        gt_seed in prop::collection::vec(0u8..4, 1..200),
        class in 0u8..4,
    ) {
        let n = pred.len().min(gt_seed.len());
        let (pred, gt) = (&pred[..n], &gt_seed[..n]);
        let d = dice(pred, gt, class).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d.to_bits(), dice(gt, pred, class).unwrap().to_bits());
        prop_assert_eq!(dice(pred, pred, class).unwrap(), 1.0);
    }

    #[test]
    fn histogram_equalization_is_monotone_and_bounded(
        values in prop::collection::vec(0.0f32..=1.0, 1..400),
    ) {
        let out = histogram_equalize(&values);
        prop_assert_eq!(out.len(), values.len());
        for &v in &out {
            prop_assert!(v > 0.0 && v <= 1.0);
        }
        for i in 0..values.len() {
            for j in 0..values.len() {
                if values[i] <= values[j] {
                    prop_assert!(out[i] <= out[j]);
                }
            }
        }
    }

    #[test]
    fn minmax_normalisation_bounds_and_preserves_order(
        values in prop::collection::vec(-100.0f32..100.0, 1..400),
    ) {
        let out = minmax_normalize(&values);
        for &v in &out {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        for i in 1..values.len() {
            if values[i - 1] <= values[i] {
                prop_assert!(out[i - 1] <= out[i]);
            }
        }
    }

    #[test]
    fn identity_remap_is_identity(v in 0.0f64..=1.0) {
        let id = DomainShiftConfig::identity();
        prop_assert!((id.remap_at(v) - v).abs() <= 1e-12);
    }

    #[test]
    fn monotone_remap_stays_monotone(
        mut xs in prop::collection::vec(0.01f64..0.99, 0..3),
        mut ys in prop::collection::vec(0.0f64..=1.0, 2..6),
        probes in prop::collection::vec(0.0f64..=1.0, 2..10),
    ) {
        xs.sort_by(f64::total_cmp);
        xs.dedup();
        ys.sort_by(f64::total_cmp);
        ys.truncate(xs.len() + 2);
        prop_assume!(ys.len() == xs.len() + 2);
        let mut control = Vec::with_capacity(ys.len());
        control.push([0.0, ys[0]]);
        for (x, y) in xs.iter().zip(&ys[1..]) {
            control.push([*x, *y]);
        }
        control.push([1.0, *ys.last().unwrap()]);
        let cfg = DomainShiftConfig {
            gamma: 1.0,
            remap: control,
            blur_sigma: 0.0,
            noise_std: 0.0,
            seed: 0,
        };
        cfg.validate().unwrap();
        let lo = ys[0];
        let hi = *ys.last().unwrap();
        let mut sorted_probes = probes;
        sorted_probes.sort_by(f64::total_cmp);
        let outs: Vec<f64> = sorted_probes.iter().map(|&v| cfg.remap_at(v)).collect();
        for w in outs.windows(2) {
            prop_assert!(w[0] <= w[1] + 1e-12);
        }
        for &o in &outs {
            prop_assert!(o >= lo - 1e-12 && o <= hi + 1e-12);
        }
    }

    #[test]
    fn regression_recovers_exact_lines(
        xs in prop::collection::vec(-10.0f64..10.0, 3..20),
        slope in prop_oneof![-5.0f64..-1e-3, 1e-3f64..5.0],
        intercept in -5.0f64..5.0,
    ) {
        for i in 0..xs.len() {
            for j in (i + 1)..xs.len() {
                prop_assume!((xs[i] - xs[j]).abs() > 1e-6);
            }
        }
        let ys: Vec<f64> = xs.iter().map(|&x| slope * x + intercept).collect();
        let fit = linear_regression(&xs, &ys).unwrap();
        prop_assert!((fit.slope - slope).abs() <= 1e-6 * (1.0 + slope.abs()));
        prop_assert!((fit.intercept - intercept).abs() <= 1e-6 * (1.0 + intercept.abs()));
        prop_assert!(fit.r2 > 1.0 - 1e-9);
    }

    #[test]
    fn agreement_of_a_series_with_itself_is_exact(
        a in prop::collection::vec(-50.0f64..50.0, 2..20),
    ) {
        let ba = bland_altman(&a, &a).unwrap();
        prop_assert_eq!(ba.mean_diff, 0.0);
        prop_assert_eq!(ba.sd_diff, 0.0);
        prop_assert_eq!(ba.loa_low, 0.0);
        prop_assert_eq!(ba.loa_high, 0.0);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn surface_distance_invariants(
        pred in prop::collection::vec(0u8..2, 64..=64),
        gt in prop::collection::vec(0u8..2, 64..=64),
    ) {
        let dims = (4usize, 4usize, 4usize);
        let spacing = [1.3, 0.8, 1.1];
        prop_assume!(pred.contains(&1));
        prop_assume!(gt.contains(&1));
        let fwd = surface_distances(&pred, &gt, dims, spacing, 1).unwrap();
        let rev = surface_distances(&gt, &pred, dims, spacing, 1).unwrap();
        prop_assert!(fwd.asd >= 0.0);
        prop_assert!(fwd.hd >= fwd.asd);
        prop_assert!(fwd.hd95 <= fwd.hd);
        prop_assert_eq!(fwd.hd.to_bits(), rev.hd.to_bits());
        prop_assert_eq!(fwd.hd95.to_bits(), rev.hd95.to_bits());
        prop_assert!((fwd.asd - rev.asd).abs() <= 1e-12 * (1.0 + fwd.asd.abs()));
        let self_d = surface_distances(&gt, &gt, dims, spacing, 1).unwrap();
        prop_assert_eq!(self_d.hd, 0.0);
        prop_assert_eq!(self_d.asd, 0.0);
    }
}
