use mawseo_core::{ObjectiveFlags, Revision};
use mawseo_eval::keyword::keyword_density;
use mawseo_eval::revenue::estimate_revenue;
use mawseo_eval::{compute_metrics, rank_level_report, Thresholds};
use proptest::prelude::*;

fn revision() -> impl Strategy<Value = Revision> {
    (
        proptest::option::weighted(0.9, 1usize..600),
        proptest::option::weighted(0.9, 1usize..600),
        any::<bool>(),
        -1.0f64..1.0,
        -1.0f64..1.0,
    )
        .prop_map(|(before, after, damaging, topic, neighbor)| Revision {
            method: "m".into(),
            query: "q".into(),
            article_id: "a".into(),
            promo: "P".into(),
            paragraph: "x".into(),
            insertion_index: 0,
            rank_before: before,
            rank_after: after,
            target_damaging: damaging,
            target_probability: if damaging { 0.9 } else { 0.1 },
            substitute_damaging: None,
            substitute_probability: None,
            topic_sim: topic,
            neighbor_sim: neighbor,
            objectives: ObjectiveFlags::default(),
        })
}

fn thresholds(topic: f64, consistency: f64) -> Thresholds {
    Thresholds { topic_threshold: topic, consistency_threshold: consistency, sample_size: 1, corpus_id: "p".into() }
}

proptest! {
    #[test]
    fn promotion_never_exceeds_any_component(log in prop::collection::vec(revision(), 1..80), t in -0.5f64..0.5, c in -0.5f64..0.5) {
        let m = compute_metrics(&log, &thresholds(t, c)).unwrap();
        let min = m.rank_boosting_rate.min(m.evasion_rate).min(m.topic_relevancy_rate).min(m.semantic_consistency_rate);
        prop_assert!(m.promotion_success_rate <= min);
        for r in [m.rank_boosting_rate, m.evasion_rate, m.topic_relevancy_rate, m.semantic_consistency_rate] {
            prop_assert!((0.0..=1.0).contains(&r));
        }
    }

    #[test]
    fn rates_are_recounts_of_the_log(log in prop::collection::vec(revision(), 1..80), t in -0.5f64..0.5, c in -0.5f64..0.5) {
        let m = compute_metrics(&log, &thresholds(t, c)).unwrap();
        let n = log.len() as f64;
        let evaded = log.iter().filter(|r| !r.target_damaging).count();
        let topical = log.iter().filter(|r| r.topic_sim >= t).count();
        let consistent = log.iter().filter(|r| r.neighbor_sim >= c).count();
        prop_assert_eq!(m.evasion_rate, evaded as f64 / n);
        prop_assert_eq!(m.topic_relevancy_rate, topical as f64 / n);
        prop_assert_eq!(m.semantic_consistency_rate, consistent as f64 / n);
        prop_assert_eq!(m.revisions, log.len());
    }

    #[test]
    fn rank_levels_partition_the_rankable_revisions(log in prop::collection::vec(revision(), 1..80)) {
        let rows = rank_level_report(&log);
        let rankable = log.iter().filter(|r| r.rank_before.is_some_and(|b| b >= 2)).count();
        prop_assert_eq!(rows.iter().map(|r| r.revisions).sum::<usize>(), rankable);
        for r in &rows {
            prop_assert!(r.boosted <= r.revisions);
            prop_assert!(r.first_rank >= 2 && r.first_rank <= r.last_rank);
            if r.boosted > 0 {
                prop_assert!(r.mean_margin >= 1.0);
            }
        }
    }

    #[test]
    fn revenue_is_the_product_of_its_inputs(v in 0.0f64..1e9, rv in 0.0f64..1.0, ra in 0.0f64..1e4) {
        prop_assert_eq!(estimate_revenue(v, rv, ra).unwrap().revenue, v * rv * ra);
    }

    #[test]
    fn keyword_density_scales_with_repeats(l in 1usize..5, f in 0usize..50, t in 1usize..5000) {
        let d = keyword_density(l, f, t);
        prop_assert!((d * t as f64 - (l * f) as f64).abs() < 1e-9 * (1 + l * f) as f64);
    }
}
