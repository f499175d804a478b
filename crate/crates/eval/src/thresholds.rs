//! Objective thresholds derived from the active corpus.

use mawseo_core::similarity::{article_consistency_mean, article_topic_mean};
use mawseo_core::{Corpus, SentenceEncoder};
use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{contract, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Thresholds {
    pub topic_threshold: f64,
    pub consistency_threshold: f64,
    pub sample_size: usize,
    /// Leading hex digits of the corpus file's SHA-256.
    pub corpus_id: String,
}

pub fn corpus_id(corpus: &Corpus) -> String {
    hex::encode(Sha256::digest(corpus.to_jsonl().as_bytes()))[..16].to_string()
}

/// Averages, over `count` articles sampled without replacement, each
/// article's mean paragraph-to-lead cosine and mean paragraph-to-neighbour
/// cosine. Articles with a single paragraph have no body and are skipped.
pub fn compute_thresholds(corpus: &Corpus, enc: &dyn SentenceEncoder, count: usize, seed: u64) -> Result<Thresholds> {
    let eligible: Vec<_> = corpus.articles().filter(|a| a.paragraphs.len() >= 2).collect();
    if count == 0 || count > eligible.len() {
        return Err(contract(format!("threshold sample of {count} from {} eligible articles", eligible.len())));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut sample: Vec<_> = eligible.choose_multiple(&mut rng, count).copied().collect();
    sample.sort_by(|a, b| a.id.cmp(&b.id));
    let n = sample.len() as f64;
    Ok(Thresholds {
        topic_threshold: sample.iter().map(|a| article_topic_mean(enc, a)).sum::<f64>() / n,
        consistency_threshold: sample.iter().map(|a| article_consistency_mean(enc, a)).sum::<f64>() / n,
        sample_size: sample.len(),
        corpus_id: corpus_id(corpus),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mawseo_core::embeddings::cosine;
    use mawseo_core::vocab::fixture_word_vectors;
    use mawseo_core::{synth_corpus, Article, Paragraph, VocabularySpec, WordVectorTable};

    #[test]
    fn paragraphs_equal_to_the_lead_give_one() {
        let mut t = WordVectorTable::new(8).unwrap();
        t.insert("alpha", &[1.0, 0.0, 0.5, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        let p = || Paragraph::new("Alpha alpha.").unwrap();
        let arts: Vec<Article> = (0..3).map(|i| Article::new(format!("a{i}"), "A", vec![], vec![p(), p(), p()]).unwrap()).collect();
        let c = Corpus::new(arts, vec![]).unwrap();
        let th = compute_thresholds(&c, &t, 3, 1).unwrap();
        assert!((th.topic_threshold - 1.0).abs() < 1e-12);
        assert!((th.consistency_threshold - 1.0).abs() < 1e-12);
    }

    #[test]
    fn seeded_and_matches_a_two_pass_recount() {
        let c = synth_corpus(3, 80, &VocabularySpec::default());
        let t = fixture_word_vectors();
        let a = compute_thresholds(&c, &t, 80, 4).unwrap();
        assert_eq!(a, compute_thresholds(&c, &t, 80, 4).unwrap());
        let enc = |p: &Paragraph| t.embed_tokens(p.tokens()).values().to_vec();
        let mut topic = Vec::new();
        let mut cons = Vec::new();
        for art in c.articles() {
            let v: Vec<Vec<f64>> = art.paragraphs.iter().map(enc).collect();
            let body: Vec<f64> = v[1..].iter().map(|x| cosine(x, &v[0])).collect();
            topic.push(body.iter().sum::<f64>() / body.len() as f64);
            let mut per = 0.0;
            for i in 0..v.len() {
                let mut s = vec![];
                if i > 0 {
                    s.push(cosine(&v[i], &v[i - 1]));
                }
                if i + 1 < v.len() {
                    s.push(cosine(&v[i], &v[i + 1]));
                }
                per += s.iter().sum::<f64>() / s.len() as f64;
            }
            cons.push(per / v.len() as f64);
        }
        let mean = |x: &[f64]| x.iter().sum::<f64>() / x.len() as f64;
        assert!((a.topic_threshold - mean(&topic)).abs() < 1e-9);
        assert!((a.consistency_threshold - mean(&cons)).abs() < 1e-9);
        assert!(compute_thresholds(&c, &t, 81, 4).is_err());
    }
}
