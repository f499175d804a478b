use std::sync::Arc;

use mawseo_core::vocab::fixture_word_vectors;
use mawseo_core::{synth_corpus, Lexicons, VocabularySpec};
use mawseo_defense::flagging::{decide, joint_scores};
use mawseo_defense::{
    foreign_insertions, hinge_loss, AnchorSide, ChunkOrigin, CoherenceConfig, CoherenceModel, EntityExtractor, JointScores, PairFeaturizer,
    Role, SentenceChunk,
};
use proptest::prelude::*;

const WORDS: &[&str] = &[
    "the", "dosage", "Zorvane", "treats", "of", "infection", "patients", "regulates", "London", "is", "and", "chronic", "liver", "in",
    "metabolism", "a", "Pharmaceuticals",
];

fn sentence() -> impl Strategy<Value = String> {
    prop::collection::vec(prop::sample::select(WORDS), 1..12).prop_map(|w| {
        let mut s = w.join(" ");
        s.replace_range(0..1, &s[0..1].to_uppercase());
        s + "."
    })
}

proptest! {
    #[test]
    fn hinge_is_nonnegative_and_zero_iff_margin_met(p in -5.0f64..5.0, n in -5.0f64..5.0) {
        let l = hinge_loss(p, n);
        prop_assert!(l >= 0.0);
        prop_assert_eq!(l == 0.0, p - n >= 1.0);
    }

    #[test]
    fn transitions_count_each_entity_once(a in prop::collection::vec(sentence(), 1..4), b in prop::collection::vec(sentence(), 1..4)) {
        let x = EntityExtractor::new(&Lexicons::default());
        let ca = SentenceChunk::from_text(&a.join(" "), ChunkOrigin::Last);
        let cb = SentenceChunk::from_text(&b.join(" "), ChunkOrigin::First);
        let g = x.grid(&ca, &cb);
        prop_assert_eq!(g.transitions().iter().sum::<u32>() as usize, g.entities.len());
        prop_assert!(g.roles.iter().all(|r| r != &[Role::Absent, Role::Absent]));
    }

    #[test]
    fn raising_the_margin_never_flags_fewer(
        scores in prop::collection::vec(prop::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 0..3), 1..40),
        m1 in -2.0f64..2.0,
        dm in 0.0f64..2.0,
    ) {
        let count = |m: f64| scores
            .iter()
            .filter(|js| decide(js.iter().map(|&(o, i)| JointScores { side: AnchorSide::Former, original: o, inserted: i }).collect(), m).flagged)
            .count();
        prop_assert!(count(m1 + dm) >= count(m1));
    }
}

#[test]
fn margin_monotonicity_on_real_joint_scores() {
    let corpus = synth_corpus(4, 40, &VocabularySpec::default());
    let model = CoherenceModel::new(PairFeaturizer::new(Arc::new(fixture_word_vectors()), &Lexicons::default()), CoherenceConfig::default());
    let joints: Vec<Vec<JointScores>> =
        foreign_insertions(&corpus, 60, 2).unwrap().iter().map(|(b, a)| joint_scores(&model, b, a).unwrap()).collect();
    let mut prev = 0;
    for k in -20..=20 {
        let m = k as f64 * 0.05;
        let n = joints.iter().filter(|j| decide((*j).clone(), m).flagged).count();
        assert!(n >= prev);
        prev = n;
    }
}
