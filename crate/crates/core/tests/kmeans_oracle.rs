//! k-means against exhaustive partition search on tiny binary corpora.

mod common;

use common::{brute_force_sse, distinct_rows as distinct, table2_rows};
use flipkv::ml::{kmeans_fit, sse, KMeansParams, Samples};
use proptest::prelude::*;

fn corpus() -> impl Strategy<Value = (Vec<Vec<f64>>, usize)> {
    (1usize..=8, 2usize..=12).prop_flat_map(|(bits, n)| {
        (
            proptest::collection::vec(proptest::collection::vec(prop_oneof![Just(0.0), Just(1.0)], bits), n),
            1usize..=3,
        )
    })
}

#[test]
fn table2_brute_force_is_two_and_a_half() {
    let rows: Vec<Vec<f64>> = table2_rows().iter().map(|b| b.to_features()).collect();
    assert!((brute_force_sse(&rows, 3) - 2.5).abs() < 1e-9);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn best_of_64_matches_exhaustive((rows, k) in corpus(), seed in any::<u64>()) {
        prop_assume!(distinct(&rows) >= k);
        let samples = Samples::from_rows(rows.clone());
        let params = KMeansParams { k, restarts: 64, max_iter: 100, tol: 0.0, seed };
        let fit = kmeans_fit(&samples, &params).unwrap();
        let oracle = brute_force_sse(&rows, k);
        prop_assert!((fit.sse - oracle).abs() < 1e-9, "fit {} oracle {}", fit.sse, oracle);
        prop_assert!((sse(&fit.centroids, &samples) - fit.sse).abs() < 1e-9);
    }

    #[test]
    fn lloyd_history_never_increases((rows, k) in corpus(), seed in any::<u64>()) {
        prop_assume!(distinct(&rows) >= k);
        let samples = Samples::from_rows(rows);
        let params = KMeansParams { k, restarts: 4, max_iter: 100, tol: 0.0, seed };
        let fit = kmeans_fit(&samples, &params).unwrap();
        for h in &fit.history {
            for w in h.windows(2) {
                prop_assert!(w[1] <= w[0] + 1e-9, "{:?}", h);
            }
        }
    }
}
