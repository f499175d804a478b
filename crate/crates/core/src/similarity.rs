//! Topic and neighbour similarity of paragraphs, shared by revision
//! bookkeeping and the corpus-level thresholds so both use one definition.

use crate::corpus::{lead_paragraph, Article, Paragraph};
use crate::embeddings::{cosine, SentenceEncoder};

fn encode(enc: &dyn SentenceEncoder, p: &Paragraph) -> Vec<f64> {
    enc.encode_tokens(p.tokens()).values().to_vec()
}

/// Cosine between a paragraph and the article's lead.
pub fn topic_similarity(enc: &dyn SentenceEncoder, article: &Article, p: &Paragraph) -> f64 {
    cosine(&encode(enc, p), &encode(enc, lead_paragraph(article)))
}

/// Mean cosine between `p` and the two paragraphs it would sit between
/// when inserted after paragraph `index` of `before`.
pub fn neighbor_similarity(enc: &dyn SentenceEncoder, before: &Article, p: &Paragraph, index: usize) -> f64 {
    let v = encode(enc, p);
    let upper = &before.paragraphs[index];
    match before.paragraphs.get(index + 1) {
        Some(lower) => 0.5 * (cosine(&v, &encode(enc, upper)) + cosine(&v, &encode(enc, lower))),
        None => cosine(&v, &encode(enc, upper)),
    }
}

/// Mean topic similarity of an article's body paragraphs (the lead is not
/// compared with itself).
pub fn article_topic_mean(enc: &dyn SentenceEncoder, a: &Article) -> f64 {
    let lead = encode(enc, lead_paragraph(a));
    let body = &a.paragraphs[1..];
    body.iter().map(|p| cosine(&encode(enc, p), &lead)).sum::<f64>() / body.len() as f64
}

/// Mean over paragraphs of the mean cosine with their one or two
/// neighbours.
pub fn article_consistency_mean(enc: &dyn SentenceEncoder, a: &Article) -> f64 {
    let vs: Vec<Vec<f64>> = a.paragraphs.iter().map(|p| encode(enc, p)).collect();
    let n = vs.len();
    let per: f64 = (0..n)
        .map(|i| {
            let mut s = Vec::with_capacity(2);
            if i > 0 {
                s.push(cosine(&vs[i], &vs[i - 1]));
            }
            if i + 1 < n {
                s.push(cosine(&vs[i], &vs[i + 1]));
            }
            s.iter().sum::<f64>() / s.len() as f64
        })
        .sum();
    per / n as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::WordVectorTable;

    fn table() -> WordVectorTable {
        let mut t = WordVectorTable::new(8).unwrap();
        t.insert("alpha", &[1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        t.insert("beta", &[0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
        t
    }

    fn article(ps: &[&str]) -> Article {
        Article::new("a", "A", vec![], ps.iter().map(|p| Paragraph::new(*p).unwrap()).collect()).unwrap()
    }

    #[test]
    fn hand_values() {
        let t = table();
        let a = article(&["alpha", "alpha", "beta"]);
        assert!((article_topic_mean(&t, &a) - 0.5).abs() < 1e-12);
        // per-paragraph: 1, (1+0)/2, 0
        assert!((article_consistency_mean(&t, &a) - 0.5).abs() < 1e-12);
        let p = Paragraph::new("alpha").unwrap();
        assert!((topic_similarity(&t, &a, &p) - 1.0).abs() < 1e-12);
        assert!((neighbor_similarity(&t, &a, &p, 1) - 0.5).abs() < 1e-12);
        assert!((neighbor_similarity(&t, &a, &p, 2)).abs() < 1e-12);
    }
}
