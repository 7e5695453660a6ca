use hftp::alignment::{aggregate_scores, ScoreTable};
use hftp::encoding::{
    aggregate_predictive, fit_split, predictive_score, ridge_fit, split_indices, EncodingConfig, PredictiveScore,
    Standardizer,
};
use hftp::ingest::{ChannelMeta, Hemisphere, RoiMap};
use hftp::stats;
use proptest::prelude::*;
use rand::SeedableRng;

fn design(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<[f64; 2]>, Vec<f64>)> {
    n.prop_flat_map(|n| {
        (
            prop::collection::vec([-10.0..10.0f64, -10.0..10.0f64], n),
            prop::collection::vec(-10.0..10.0f64, n),
        )
    })
}

fn small_cfg(seed: u64) -> EncodingConfig {
    EncodingConfig { n_splits: 3, seed, ..Default::default() }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn test_rows_never_leak((x, y) in design(12..60), seed in any::<u64>(), junk in -1e6..1e6f64) {
        let cfg = small_cfg(seed);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (train, test) = split_indices(x.len(), cfg.test_frac, &mut rng);
        let a = fit_split(&x, &y, &train, &test, &cfg).unwrap();
        let (mut x2, mut y2) = (x.clone(), y.clone());
        for &i in &test {
            x2[i] = [junk, -junk];
            y2[i] = junk * 0.5;
        }
        let b = fit_split(&x2, &y2, &train, &test, &cfg).unwrap();
        prop_assert_eq!(a.standardizer, b.standardizer);
        prop_assert_eq!(a.alpha, b.alpha);
        prop_assert_eq!(a.fit, b.fit);
    }

    #[test]
    fn standardized_ridge_ignores_affine_rescaling(
        (x, y) in design(6..40),
        scale in (0.01..100.0f64, 0.01..100.0f64),
        shift in (-50.0..50.0f64, -50.0..50.0f64),
        alpha in 0.001..100.0f64,
    ) {
        let fit_std = |rows: &[[f64; 2]]| {
            let s = Standardizer::fit(rows);
            let z: Vec<[f64; 2]> = rows.iter().map(|&r| s.apply(r)).collect();
            let f = ridge_fit(&z, &y, alpha).unwrap();
            z.iter().map(|&r| f.predict(r)).collect::<Vec<f64>>()
        };
        let moved: Vec<[f64; 2]> = x.iter().map(|r| [r[0] * scale.0 + shift.0, r[1] * scale.1 + shift.1]).collect();
        for (p, q) in fit_std(&x).iter().zip(fit_std(&moved)) {
            prop_assert!((p - q).abs() <= 1e-10 * (1.0 + p.abs()), "{p} vs {q}");
        }
    }

    #[test]
    fn monotone_target_of_the_features_scores_one(
        t in prop::collection::btree_set(-1000i32..1000, 12..50),
        seed in any::<u64>(),
    ) {
        // collinear columns so every fitted prediction is a positive multiple of t
        let ts: Vec<f64> = t.into_iter().map(|v| v as f64 / 10.0).collect();
        let x: Vec<[f64; 2]> = ts.iter().map(|&v| [v, 2.0 * v + 1.0]).collect();
        let y: Vec<f64> = ts.iter().map(|v| v.powi(3) + v).collect();
        let s = predictive_score(&x, &y, &small_cfg(seed), 0, 0).unwrap();
        prop_assert!((s.p_score - 1.0).abs() <= 1e-12, "{:?}", s.split_scores);
        prop_assert_eq!(s.p_score, stats::mean(&s.split_scores));
    }

    #[test]
    fn predictive_aggregation_matches_rsa_aggregation(
        grid in (1usize..4, 1usize..20).prop_flat_map(|(l, n)| {
            (prop::collection::vec(prop::collection::vec(-1.0..1.0f64, n), l), prop::collection::vec(prop::bool::ANY, n))
        }),
        k in 1usize..8,
    ) {
        let (scores, sides) = grid;
        let map = RoiMap::default_map();
        let channels: Vec<ChannelMeta> = sides
            .iter()
            .enumerate()
            .map(|(i, &left)| {
                let h = if left { Hemisphere::L } else { Hemisphere::R };
                ChannelMeta::resolve(i, h, "Temporal_Sup", &map).unwrap()
            })
            .collect();
        let flat: Vec<PredictiveScore> = scores
            .iter()
            .enumerate()
            .flat_map(|(layer, row)| {
                row.iter().enumerate().map(move |(channel, &p)| PredictiveScore {
                    layer,
                    channel,
                    p_score: p,
                    split_scores: vec![p],
                    alphas: vec![1.0],
                    degenerate_splits: 0,
                })
            })
            .collect();
        let table = ScoreTable::new((0..scores.len()).collect(), channels.clone(), scores.clone()).unwrap();
        prop_assert_eq!(
            aggregate_predictive(&flat, &channels, &map, k).unwrap(),
            aggregate_scores(&table, &map, k).unwrap()
        );
    }
}
