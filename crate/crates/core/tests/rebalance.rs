use birdsong_core::rebalance::*;
use birdsong_core::{rebalance, seed};
use proptest::prelude::*;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

fn dist_to_segment(x: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab: Vec<f64> = a.iter().zip(b).map(|(p, q)| q - p).collect();
    let ax: Vec<f64> = a.iter().zip(x).map(|(p, q)| q - p).collect();
    let len2: f64 = ab.iter().map(|v| v * v).sum();
    let t = if len2 == 0.0 {
        0.0
    } else {
        (ab.iter().zip(&ax).map(|(u, v)| u * v).sum::<f64>() / len2).clamp(0.0, 1.0)
    };
    ax.iter()
        .zip(&ab)
        .map(|(u, v)| (u - t * v).powi(2))
        .sum::<f64>()
        .sqrt()
}

/// Random labeled points: class `c` has `counts[c]` items in `dim` dimensions.
fn random_set(counts: &[usize], dim: usize, s: u64) -> LabeledSet<Vec<f64>> {
    let mut rng = seed::rng(s);
    LabeledSet::new(counts.iter().enumerate().flat_map(|(c, &n)| {
        (0..n)
            .map(|_| ((0..dim).map(|_| rng.random_range(-5.0..5.0) + 3.0 * c as f64).collect(), c))
            .collect::<Vec<_>>()
    }))
}

#[test]
fn separated_blobs_have_no_tomek_links() {
    let mut rng = seed::rng(3);
    let mut pairs = Vec::new();
    for (c, centre) in [(0usize, -100.0), (1, 100.0)] {
        for _ in 0..40 {
            let p: Vec<f64> = (0..4)
                .map(|_| centre + 0.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            pairs.push((p, c));
        }
    }
    let set = LabeledSet::new(pairs);
    assert!(tomek_links(&set).is_empty());
    let out = smote_tomek(&set, 5, &mut seed::rng(1)).unwrap();
    assert!(out.removed_links.is_empty());
    assert_eq!(out.cleaned.len(), 80);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn smote_equalizes_and_stays_on_segments(
        counts in prop::collection::vec(2usize..15, 2..5),
        dim in 1usize..5,
        s in any::<u64>(),
        k in 1usize..7,
    ) {
        let set = random_set(&counts, dim, s);
        let out = smote(&set, k, &mut seed::rng(s)).unwrap();
        let max = *counts.iter().max().unwrap();
        for (_, n) in out.class_counts() {
            prop_assert_eq!(n, max);
        }
        for item in out.items.iter().filter(|it| it.synthetic) {
            let same: Vec<&Vec<f64>> = set.items.iter().filter(|o| o.label == item.label).map(|o| &o.value).collect();
            let best = same
                .iter()
                .flat_map(|a| same.iter().map(move |b| dist_to_segment(&item.value, a, b)))
                .fold(f64::INFINITY, f64::min);
            prop_assert!(best < 1e-9, "synthetic point {} from any segment", best);
        }
    }

    #[test]
    fn downsampling_only_keeps_inputs(counts in prop::collection::vec(1usize..30, 1..5), target in 1usize..20, s in any::<u64>()) {
        let set = random_set(&counts, 3, s);
        let out = random_downsample(&set, target, &mut seed::rng(s));
        for it in &out.items {
            prop_assert!(set.items.contains(it));
        }
        for (c, n) in out.class_counts() {
            prop_assert_eq!(n, counts[c].min(target));
        }
    }

    #[test]
    fn strategies_are_deterministic(counts in prop::collection::vec(2usize..12, 2..4), s in any::<u64>()) {
        let set = random_set(&counts, 2, s);
        for strategy in [rebalance::Strategy::Downsample, rebalance::Strategy::SmoteTomek, rebalance::Strategy::Custom] {
            let cfg = RebalanceConfig { strategy, low: 6, high: 8, k: 3 };
            let a = rebalance_features(&set, &cfg, &mut seed::rng(s)).unwrap();
            let b = rebalance_features(&set, &cfg, &mut seed::rng(s)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn custom_bounds_class_sizes(counts in prop::collection::vec(2usize..40, 2..5), s in any::<u64>()) {
        let set = random_set(&counts, 2, s);
        let out = custom_rebalance(&set, 8, 20, 5, &mut seed::rng(s)).unwrap();
        for (c, n) in out.class_counts() {
            prop_assert_eq!(n, counts[c].clamp(8, 20));
        }
    }
}
