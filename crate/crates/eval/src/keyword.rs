//! Keyword-stuffing baseline: repeat the query phrase inside the paragraph
//! until the revised article reaches a target keyword density.

use mawseo_core::text::tokenize;
use mawseo_core::{Article, Paragraph};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{contract, EvalError, Result};

pub const MAX_TARGET_DENSITY: f64 = 0.05;

/// `d = l·f / T`.
pub fn keyword_density(l: usize, f: usize, t: usize) -> f64 {
    if t == 0 {
        return 0.0;
    }
    (l * f) as f64 / t as f64
}

/// Non-overlapping occurrences of `phrase` in `tokens`.
pub fn count_phrase<S: AsRef<str>>(tokens: &[S], phrase: &[String]) -> usize {
    if phrase.is_empty() {
        return 0;
    }
    let (mut i, mut n) = (0, 0);
    while i + phrase.len() <= tokens.len() {
        if tokens[i..i + phrase.len()].iter().zip(phrase).all(|(a, b)| a.as_ref() == b) {
            n += 1;
            i += phrase.len();
        } else {
            i += 1;
        }
    }
    n
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StuffedParagraph {
    pub paragraph: String,
    pub repeats_added: usize,
    /// Query tokens `l`.
    pub phrase_tokens: usize,
    /// Occurrences `f` in the revised article.
    pub frequency: usize,
    /// Tokens `T` in the revised article.
    pub article_tokens: usize,
    pub density: f64,
}

/// Density of `query` in `article` once `paragraph` is added to it.
pub fn revised_density(article: &Article, paragraph: &str, query: &str) -> (usize, usize, f64) {
    let phrase = tokenize(query);
    let ptoks = tokenize(paragraph);
    let f = article.paragraphs.iter().map(|p| count_phrase(p.tokens(), &phrase)).sum::<usize>() + count_phrase(&ptoks, &phrase);
    let t = article.token_count() + ptoks.len();
    (f, t, keyword_density(phrase.len(), f, t))
}

/// Inserts the query at seeded word boundaries until the article that
/// receives the paragraph reaches `target` density. Fails as infeasible
/// when the paragraph would exceed `max_paragraph_tokens`.
pub fn keyword_stuff(
    paragraph: &Paragraph,
    query: &str,
    target: f64,
    article: &Article,
    max_paragraph_tokens: usize,
    seed: u64,
) -> Result<StuffedParagraph> {
    if !(target > 0.0 && target <= MAX_TARGET_DENSITY) {
        return Err(contract(format!("target density {target} outside (0, {MAX_TARGET_DENSITY}]")));
    }
    let phrase = tokenize(query);
    if phrase.is_empty() {
        return Err(contract("query has no tokens"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut words: Vec<String> = paragraph.text().split_whitespace().map(str::to_string).collect();
    let mut added = 0;
    loop {
        let text = words.join(" ");
        let (f, t, d) = revised_density(article, &text, query);
        if d >= target {
            return Ok(StuffedParagraph {
                paragraph: text,
                repeats_added: added,
                phrase_tokens: phrase.len(),
                frequency: f,
                article_tokens: t,
                density: d,
            });
        }
        if tokenize(&text).len() + phrase.len() > max_paragraph_tokens {
            return Err(EvalError::Infeasible(format!(
                "density {target} needs a paragraph longer than {max_paragraph_tokens} tokens (reached {d:.5})"
            )));
        }
        let at = rng.random_range(0..=words.len());
        words.insert(at, query.to_string());
        added += 1;
    }
}
