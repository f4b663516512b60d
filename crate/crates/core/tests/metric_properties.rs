use inferbias::metrics::PairIndex;
use inferbias::{
    evaluate, extremes, fraction_neutral, group_mean, net_neutral, score_builtin, score_mock, threshold_neutral,
    BuiltinParams, EmbeddingSet, EvaluateOptions, Label, PredictionTriple, ProbeKind, ScoredPair, SlotFilter,
    Slots, TemplatePair,
};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn mock_stream(n: usize, seed: u64) -> Vec<ScoredPair> {
    (0..n)
        .map(|i| {
            let id = format!("gender/occ{}|{}|verb{}|obj{}", i % 13, ["man", "woman"][i % 2], i % 5, i / 65);
            ScoredPair {
                triple: score_mock(&id, seed),
                pair_id: id,
                scorer_id: format!("mock:{seed}"),
            }
        })
        .collect()
}

fn in_pool<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap().install(f)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn metrics_ignore_stream_order(n in 1usize..20_000, seed in any::<u64>()) {
        let s = mock_stream(n, seed);
        let mut shuffled = s.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        prop_assert!((net_neutral(&s).unwrap() - net_neutral(&shuffled).unwrap()).abs() <= 1e-12);
        prop_assert_eq!(fraction_neutral(&s).unwrap(), fraction_neutral(&shuffled).unwrap());
        prop_assert_eq!(threshold_neutral(&s, 0.5).unwrap(), threshold_neutral(&shuffled, 0.5).unwrap());
        let index = PairIndex::from_ids();
        prop_assert_eq!(
            extremes(&s, &index, 5, Label::Entail).unwrap(),
            extremes(&shuffled, &index, 5, Label::Entail).unwrap()
        );
    }

    #[test]
    fn thresholds_are_monotone_and_bounded(n in 1usize..3000, seed in any::<u64>(), mut taus in prop::collection::vec(0.001f64..0.999, 2..8)) {
        let s = mock_stream(n, seed);
        taus.sort_by(f64::total_cmp);
        let values: Vec<f64> = taus.iter().map(|&t| threshold_neutral(&s, t).unwrap()).collect();
        prop_assert!(values.windows(2).all(|w| w[0] >= w[1]));
        let fn_value = fraction_neutral(&s).unwrap();
        // n > 1/2 forces n to be the largest label; n > 1/3 does not.
        for (&t, &v) in taus.iter().zip(&values) {
            if t >= 0.5 {
                prop_assert!(fn_value >= v);
            }
        }
    }

    #[test]
    fn builtin_triples_are_valid_and_symmetric(
        a in prop::collection::vec(-1.0f64..1.0, 4),
        b in prop::collection::vec(-1.0f64..1.0, 4),
        t in -1.0f64..1.0,
        scale in 0.1f64..20.0,
        w in 0.1f64..20.0,
    ) {
        let set = EmbeddingSet::from_entries(4, vec![("alpha".to_string(), a), ("beta".to_string(), b)]).unwrap();
        let pair = |p: &str, h: &str| TemplatePair {
            id: format!("gender/{p}|{h}|met|cat"),
            probe: ProbeKind::Gender,
            premise: format!("The {p} met a cat."),
            hypothesis: format!("The {h} met a cat."),
            slots: Slots {
                subject_premise: p.into(),
                subject_hypothesis: h.into(),
                verb: "met".into(),
                object: "cat".into(),
            },
        };
        let params = BuiltinParams { a: scale, t, neutral_weight: w };
        let ab = score_builtin(&pair("alpha", "beta"), &set, &params);
        let ba = score_builtin(&pair("beta", "alpha"), &set, &params);
        prop_assert!(PredictionTriple::new(ab.e, ab.n, ab.c).is_ok());
        prop_assert!((ab.e - ba.e).abs() <= 1e-12 && (ab.c - ba.c).abs() <= 1e-12);
    }
}

#[test]
fn thresholds_below_one_half_can_exceed_fraction_neutral() {
    let s = vec![ScoredPair {
        pair_id: "gender/a|man|met|cat".into(),
        triple: PredictionTriple::new(0.6, 0.35, 0.05).unwrap(),
        scorer_id: "test".into(),
    }];
    assert_eq!(fraction_neutral(&s).unwrap(), 0.0);
    assert_eq!(threshold_neutral(&s, 0.34).unwrap(), 1.0);
}

#[test]
fn worker_count_does_not_change_a_bit() {
    let s = mock_stream(50_000, 17);
    let index = PairIndex::from_ids();
    let filter: SlotFilter = "hypothesis=woman".parse().unwrap();
    let run = || {
        let report = evaluate(&s, ProbeKind::Gender, &EvaluateOptions::default()).unwrap();
        let group = group_mean(&s, &index, &filter, Label::Entail).unwrap();
        let top = extremes(&s, &index, 10, Label::Contradict).unwrap();
        (
            serde_json::to_string(&report).unwrap(),
            report.net_neutral.to_bits(),
            group.mean.to_bits(),
            top,
        )
    };
    let one = in_pool(1, run);
    for threads in [2, 3, 8] {
        assert_eq!(in_pool(threads, run), one, "{threads} workers");
    }
}
