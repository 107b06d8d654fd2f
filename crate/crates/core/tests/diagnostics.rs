use cae_core::diagnostics::{median, rank_components, spearman, DimensionReport};
use proptest::prelude::*;

fn norms() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(1e-8..10.0f64, 1..8)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn classification_partitions_the_latents(n in norms()) {
        let r = DimensionReport::from_norms(&n, vec![0.0; n.len()], 0.05).unwrap();
        let mut all: Vec<usize> = r.active.iter().chain(&r.collapsed).copied().collect();
        all.sort();
        prop_assert_eq!(all, (0..n.len()).collect::<Vec<_>>());
        prop_assert_eq!(r.inferred_dimension, r.active.len());
        prop_assert!(r.inferred_dimension >= 1);
        let max = n.iter().cloned().fold(0.0, f64::max);
        for &i in &r.active {
            prop_assert!(n[i] >= 0.05 * max);
        }
        for &i in &r.collapsed {
            prop_assert!(n[i] < 0.05 * max);
        }
    }

    #[test]
    fn classification_ignores_overall_scale(n in norms(), scale in prop::sample::select(vec![1e-6, 0.25, 2.0, 1024.0])) {
        let a = DimensionReport::from_norms(&n, vec![0.0; n.len()], 0.05).unwrap();
        let scaled: Vec<f64> = n.iter().map(|v| v * scale).collect();
        let b = DimensionReport::from_norms(&scaled, vec![0.0; n.len()], 0.05).unwrap();
        prop_assert_eq!(a.active, b.active);
    }

    #[test]
    fn ranking_is_a_descending_permutation(n in norms()) {
        let order = rank_components(&n);
        let mut sorted = order.clone();
        sorted.sort();
        prop_assert_eq!(sorted, (0..n.len()).collect::<Vec<_>>());
        prop_assert!(order.windows(2).all(|w| n[w[0]] >= n[w[1]]));
    }

    #[test]
    fn spearman_sees_only_order(x in prop::collection::vec(-5.0..5.0f64, 3..30)) {
        let y: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let z: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        prop_assume!(x.iter().any(|v| (v - x[0]).abs() > 1e-9));
        prop_assert!((spearman(&x, &y).unwrap() - 1.0).abs() < 1e-12);
        prop_assert!((spearman(&x, &z).unwrap() + 1.0).abs() < 1e-12);
    }

    #[test]
    fn median_splits_the_sample(x in prop::collection::vec(-5.0..5.0f64, 1..30)) {
        let m = median(&x).unwrap();
        let below = x.iter().filter(|&&v| v < m).count();
        let above = x.iter().filter(|&&v| v > m).count();
        prop_assert!(2 * below <= x.len() && 2 * above <= x.len());
    }
}
