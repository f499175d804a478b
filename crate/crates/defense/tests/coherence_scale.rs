//! Desk-scale coherence run on the default synthetic corpus.

use std::sync::Arc;

use mawseo_core::vocab::fixture_word_vectors;
use mawseo_core::{synth_corpus, Lexicons, VocabularySpec};
use mawseo_defense::{build_triplets, evaluate_flagging, foreign_insertions, legitimate_samples, train_coherence, CoherenceConfig, PairFeaturizer};

#[test]
fn twenty_thousand_triplets() {
    let corpus = synth_corpus(11, 2000, &VocabularySpec::default());
    let triplets = build_triplets(&corpus, 20_000, 5).unwrap();
    let featurizer = PairFeaturizer::new(Arc::new(fixture_word_vectors()), &Lexicons::default());
    let start = std::time::Instant::now();
    let trained = train_coherence(&triplets, featurizer, CoherenceConfig::default()).unwrap();
    let r = &trained.report;
    println!("train {:.4} held-out {:.4} curve {:?} in {:?}", r.train_accuracy, r.held_out_accuracy, r.curve, start.elapsed());
    assert!(r.held_out_accuracy >= 0.80);

    let inserted = foreign_insertions(&corpus, 500, 6).unwrap();
    let legit = legitimate_samples(&corpus, 500, 7).unwrap();
    let f = evaluate_flagging(&trained.model, &inserted, &legit, 0.0).unwrap();
    println!("foreign recall {:.4} legit accuracy {:.4}", f.recall, f.legitimate_accuracy);
    assert!(f.recall >= 0.70);
    assert!(f.legitimate_accuracy >= 0.80);
}
