use proptest::prelude::*;

use usdl::dataio::{denormalize_final, normalize_final, segment_indices, SegmentStrategy};
use usdl::distgen::{kl_divergence, make_scale, target_distribution, DistributionSpec, ScoreDistribution};
use usdl::metrics::{average_ranks, fisher_z_average, spearman};
use usdl::multipath::{fuse_rule, sort_judges, FusionRule, JudgePanel, MultiplierSource};
use usdl::nethead::{forward_usdl, FeatureMatrix, HeadParams, Pooling};

fn spec_strategy() -> impl Strategy<Value = DistributionSpec> {
    prop_oneof![
        (0.05f64..30.0).prop_map(|sigma| DistributionSpec::Gaussian { sigma }),
        (0.05f64..30.0).prop_map(|half_width| DistributionSpec::Triangle { half_width }),
        (0.5f64..40.0).prop_map(|dof| DistributionSpec::ChiSquare { dof }),
    ]
}

fn scale_and_label() -> impl Strategy<Value = (f64, f64, usize, f64)> {
    (-100.0f64..100.0, 0.5f64..200.0, 2usize..200, 0.0f64..=1.0)
        .prop_map(|(lo, width, bins, t)| (lo, lo + width, bins, lo + t * width))
}

fn probs(n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.0f64..1.0, n).prop_map(|mut v| {
        v[0] += 1e-3;
        let s: f64 = v.iter().sum();
        v.iter_mut().for_each(|x| *x /= s);
        v
    })
}

proptest! {
    #[test]
    fn targets_are_distributions((lo, hi, bins, label) in scale_and_label(), spec in spec_strategy()) {
        let scale = make_scale(lo, hi, bins).unwrap();
        let d = target_distribution(&scale, label, &spec).unwrap();
        prop_assert_eq!(d.probs().len(), bins);
        prop_assert!(d.probs().iter().all(|&p| p >= 0.0));
        prop_assert!((d.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn out_of_range_labels_rejected((lo, hi, bins, _) in scale_and_label(), over in 1e-6f64..50.0) {
        let scale = make_scale(lo, hi, bins).unwrap();
        let spec = DistributionSpec::Gaussian { sigma: 1.0 };
        prop_assert!(target_distribution(&scale, hi + over, &spec).is_err());
        prop_assert!(target_distribution(&scale, lo - over, &spec).is_err());
    }

    #[test]
    fn gaussian_mirror_symmetry(bins in 2usize..120, t in 0.0f64..=1.0, sigma in 0.1f64..20.0) {
        let scale = make_scale(0.0, (bins - 1) as f64, bins).unwrap();
        let label = t * (bins - 1) as f64;
        let spec = DistributionSpec::Gaussian { sigma };
        let a = target_distribution(&scale, label, &spec).unwrap();
        let b = target_distribution(&scale, (bins - 1) as f64 - label, &spec).unwrap();
        for (x, y) in a.probs().iter().zip(b.probs().iter().rev()) {
            prop_assert!((x - y).abs() <= 1e-12);
        }
    }

    #[test]
    fn kl_nonnegative_and_zero_on_self(t in probs(12), q in probs(12)) {
        let scale = make_scale(0.0, 11.0, 12).unwrap();
        let t = ScoreDistribution::new(scale, t).unwrap();
        let q = ScoreDistribution::new(scale, q).unwrap();
        prop_assert!(kl_divergence(&t, &q).unwrap() >= 0.0);
        prop_assert!(kl_divergence(&t, &t).unwrap().abs() <= 1e-12);
    }

    #[test]
    fn spearman_invariant_under_monotone_maps(
        x in prop::collection::vec(-50i32..50, 3..40),
        y_seed in prop::collection::vec(-50i32..50, 40),
        a in 0.1f64..10.0,
        b in -20.0f64..20.0,
    ) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let y: Vec<f64> = y_seed[..x.len()].iter().map(|&v| f64::from(v)).collect();
        prop_assume!(x.iter().any(|&v| v != x[0]) && y.iter().any(|&v| v != y[0]));
        let rho = spearman(&x, &y).unwrap();
        prop_assert!((-1.0..=1.0).contains(&rho));
        let x2: Vec<f64> = x.iter().map(|v| a * v + b).collect();
        prop_assert!((spearman(&x2, &y).unwrap() - rho).abs() <= 1e-12);
        let x3: Vec<f64> = x.iter().map(|v| v.powi(3)).collect();
        prop_assert!((spearman(&x3, &y).unwrap() - rho).abs() <= 1e-12);
        prop_assert!((spearman(&y, &x).unwrap() - rho).abs() <= 1e-12);
        let neg: Vec<f64> = x.iter().map(|v| -v).collect();
        prop_assert!((spearman(&neg, &y).unwrap() + rho).abs() <= 1e-12);
    }

    #[test]
    fn ranks_sum_to_triangle(x in prop::collection::vec(-5i32..5, 1..60)) {
        let x: Vec<f64> = x.into_iter().map(f64::from).collect();
        let n = x.len() as f64;
        prop_assert!((average_ranks(&x).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() <= 1e-9);
    }

    #[test]
    fn fisher_average_lies_between_extremes(r in prop::collection::vec(-0.99f64..0.99, 1..10)) {
        let v = fisher_z_average(&r).unwrap();
        let lo = r.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = r.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        prop_assert!(v >= lo - 1e-12 && v <= hi + 1e-12);
    }

    #[test]
    fn fusion_permutation_invariant_and_linear_in_dd(
        halves in prop::collection::vec(0u32..=20, 7),
        shift in 0usize..7,
        dd in 1.0f64..4.0,
        k in 1.0f64..3.0,
    ) {
        let scores: Vec<f64> = halves.iter().map(|&h| f64::from(h) / 2.0).collect();
        let mut rotated = scores.clone();
        rotated.rotate_left(shift);
        let a = fuse_rule(&scores, &FusionRule::DIVING, dd).unwrap();
        prop_assert_eq!(a, fuse_rule(&rotated, &FusionRule::DIVING, dd).unwrap());
        let scaled = fuse_rule(&scores, &FusionRule::DIVING, k * dd).unwrap();
        prop_assert!((scaled - k * a).abs() <= 1e-9 * scaled.abs().max(1.0));
    }

    #[test]
    fn fusion_monotone_in_each_judge(
        halves in prop::collection::vec(0u32..20, 7),
        which in 0usize..7,
    ) {
        let scores: Vec<f64> = halves.iter().map(|&h| f64::from(h) / 2.0).collect();
        let mut raised = scores.clone();
        raised[which] += 0.5;
        let rule = FusionRule { drop_low: 2, drop_high: 2, multiplier_source: MultiplierSource::None };
        prop_assert!(fuse_rule(&raised, &rule, 1.0).unwrap() >= fuse_rule(&scores, &rule, 1.0).unwrap());
    }

    #[test]
    fn sorting_judges_keeps_the_multiset(halves in prop::collection::vec(0u32..=20, 1..12)) {
        let scores: Vec<f64> = halves.iter().map(|&h| f64::from(h) / 2.0).collect();
        let panel = JudgePanel::new(scores.clone(), Some(2.0)).unwrap();
        let sorted = sort_judges(&panel);
        prop_assert!(sorted.judge_scores.windows(2).all(|w| w[0] <= w[1]));
        let mut expected = scores;
        expected.sort_by(f64::total_cmp);
        prop_assert_eq!(sorted.judge_scores, expected);
        prop_assert_eq!(sorted.difficulty_degree, Some(2.0));
    }

    #[test]
    fn normalization_round_trips(lo in -100.0f64..100.0, width in 0.01f64..500.0, t in 0.0f64..=1.0) {
        let hi = lo + width;
        let s = lo + t * width;
        let n = normalize_final(s, lo, hi).unwrap();
        prop_assert!((0.0..=100.0).contains(&n));
        prop_assert!((denormalize_final(n, lo, hi).unwrap() - s).abs() <= 1e-9 * width.max(1.0));
    }

    #[test]
    fn segment_starts_fit_inside_the_video(video in 1usize..2000, clip in 1usize..64) {
        prop_assume!(video >= clip);
        for strategy in [SegmentStrategy::Seg6, SegmentStrategy::Seg10S1, SegmentStrategy::Seg10S2] {
            let starts = segment_indices(strategy, video, clip).unwrap();
            prop_assert_eq!(starts.len(), strategy.num_segments());
            prop_assert!(starts.windows(2).all(|w| w[0] <= w[1]));
            prop_assert!(starts.iter().all(|&s| s + clip <= video));
            prop_assert_eq!(starts[0], 0);
        }
    }

    #[test]
    fn forward_ignores_segment_order(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..6),
        seed in any::<u64>(),
        shift in 0usize..6,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = HeadParams::init(3, 6, 5, 9, &mut rng);
        let scale = make_scale(0.0, 8.0, 9).unwrap();
        let mut rotated = rows.clone();
        rotated.rotate_left(shift % rows.len());
        let a = FeatureMatrix::from_rows(&rows).unwrap();
        let b = FeatureMatrix::from_rows(&rotated).unwrap();
        for pooling in [Pooling::ScoreLevel, Pooling::FeatureLevel] {
            let pa = forward_usdl(&a, &params, &scale, pooling).unwrap();
            let pb = forward_usdl(&b, &params, &scale, pooling).unwrap();
            prop_assert!((pa.probs().iter().sum::<f64>() - 1.0).abs() <= 1e-12);
            for (x, y) in pa.probs().iter().zip(pb.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn softmax_ignores_a_uniform_logit_shift(
        rows in prop::collection::vec(prop::collection::vec(-2.0f64..2.0, 3), 1..5),
        seed in any::<u64>(),
        c in -50.0f64..50.0,
    ) {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let params = HeadParams::init(3, 6, 5, 9, &mut rng);
        let mut shifted = params.clone();
        shifted.layer3.bias.mapv_inplace(|b| b + c);
        let scale = make_scale(0.0, 8.0, 9).unwrap();
        let f = FeatureMatrix::from_rows(&rows).unwrap();
        for pooling in [Pooling::ScoreLevel, Pooling::FeatureLevel] {
            let a = forward_usdl(&f, &params, &scale, pooling).unwrap();
            let b = forward_usdl(&f, &shifted, &scale, pooling).unwrap();
            for (x, y) in a.probs().iter().zip(b.probs()) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }
    }
}
