//! Revision entities and the promotional-content injection operation.
//!
//! A paragraph's tokens are labelled as places where a business name can be
//! grafted in grammatically: by replacing an organisation or place span, or
//! by adding an "in <promo>" phrase after a distribution verb or a query
//! term. [`heuristic_label`] produces the reference labels the tagger is
//! trained on.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mawseo_core::text::{tokenize, tokenize_with_spans};
use mawseo_core::{Lexicons, Paragraph};

use crate::error::{contract, AttackError, Result};

pub const MAX_PROMO_TOKENS: usize = 8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum RevisionEntity {
    Replacement,
    Insertion,
    Unsuitability,
}

impl RevisionEntity {
    pub const ALL: [RevisionEntity; 3] = [Self::Replacement, Self::Insertion, Self::Unsuitability];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::ALL.get(i).copied()
    }
}

/// A run of tokens that one injection acts on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EntitySpan {
    pub kind: RevisionEntity,
    pub start: usize,
    pub len: usize,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TagSequence(Vec<RevisionEntity>);

impl TagSequence {
    pub fn new(tags: Vec<RevisionEntity>) -> Self {
        Self(tags)
    }

    pub fn uniform(len: usize, tag: RevisionEntity) -> Self {
        Self(vec![tag; len])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[RevisionEntity] {
        &self.0
    }

    pub fn indices(&self) -> Vec<usize> {
        self.0.iter().map(|t| t.index()).collect()
    }

    pub fn from_indices(idx: &[usize]) -> Self {
        Self(idx.iter().map(|&i| RevisionEntity::from_index(i).expect("label index")).collect())
    }

    /// Injection sites: each maximal run of REPLACEMENT is one span, each
    /// INSERTION token is its own span.
    pub fn spans(&self) -> Vec<EntitySpan> {
        let mut out = Vec::new();
        let mut i = 0;
        while i < self.0.len() {
            match self.0[i] {
                RevisionEntity::Replacement => {
                    let start = i;
                    while i < self.0.len() && self.0[i] == RevisionEntity::Replacement {
                        i += 1;
                    }
                    out.push(EntitySpan { kind: RevisionEntity::Replacement, start, len: i - start });
                }
                RevisionEntity::Insertion => {
                    out.push(EntitySpan { kind: RevisionEntity::Insertion, start: i, len: 1 });
                    i += 1;
                }
                RevisionEntity::Unsuitability => i += 1,
            }
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionInputs {
    pub raw_paragraph: Paragraph,
    pub promotional_content: String,
    pub target_query: String,
}

impl InjectionInputs {
    pub fn new(raw_paragraph: Paragraph, promotional_content: &str, target_query: &str) -> Result<Self> {
        let promo = promotional_content.trim();
        let n = tokenize(promo).len();
        if n == 0 || n > MAX_PROMO_TOKENS {
            return Err(contract(format!("promotional content must have 1..={MAX_PROMO_TOKENS} tokens, got {n}")));
        }
        Ok(Self {
            raw_paragraph,
            promotional_content: promo.to_string(),
            target_query: target_query.trim().to_string(),
        })
    }

    pub fn promo_tokens(&self) -> Vec<String> {
        tokenize(&self.promotional_content)
    }

    pub fn query_tokens(&self) -> Vec<String> {
        tokenize(&self.target_query)
    }

    /// Promotional-content tokens followed by query tokens.
    pub fn outer_text(&self) -> String {
        format!("{} {}", self.promotional_content, self.target_query)
    }
}

fn is_capitalized(tok: &str) -> bool {
    tok.chars().next().is_some_and(char::is_uppercase)
}

pub fn heuristic_label(inputs: &InjectionInputs, lex: &Lexicons) -> TagSequence {
    let text = inputs.raw_paragraph.text();
    let spans = tokenize_with_spans(text);
    let lower: Vec<String> = spans.iter().map(|(t, _)| t.to_lowercase()).collect();
    let n = spans.len();
    let mut tags = vec![RevisionEntity::Unsuitability; n];

    // organisation names: a run of capitalised, whitespace-adjacent tokens
    // ending in an org suffix
    let mut i = 0;
    while i < n {
        if !is_capitalized(&spans[i].0) {
            i += 1;
            continue;
        }
        let start = i;
        i += 1;
        while i < n && is_capitalized(&spans[i].0) && text[spans[i - 1].1.end..spans[i].1.start].trim().is_empty() {
            i += 1;
        }
        let Some(last) = (start..i).rev().find(|&j| lex.is_org_suffix(&lower[j])) else { continue };
        let mut first = start;
        while first < last && lex.stopwords.contains(&lower[first]) {
            first += 1;
        }
        if last > first {
            tags[first..=last].iter_mut().for_each(|t| *t = RevisionEntity::Replacement);
        }
    }

    // places, longest gazetteer entry first
    let places = lex.gazetteer_tokens();
    let mut i = 0;
    while i < n {
        let hit = places.iter().find(|p| {
            i + p.len() <= n && is_capitalized(&spans[i].0) && lower[i..i + p.len()].iter().eq(p.iter())
        });
        match hit {
            Some(p) => {
                tags[i..i + p.len()].iter_mut().for_each(|t| *t = RevisionEntity::Replacement);
                i += p.len();
            }
            None => i += 1,
        }
    }

    let query: BTreeSet<String> = inputs.query_tokens().into_iter().collect();
    for (k, w) in lower.iter().enumerate() {
        if tags[k] == RevisionEntity::Unsuitability && (lex.promo_keywords.contains(w) || query.contains(w)) {
            tags[k] = RevisionEntity::Insertion;
        }
    }
    TagSequence(tags)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InjectionConfig {
    /// Adverb-phrase templates for INSERTION; `{promo}` is substituted and
    /// one template is drawn per injection.
    pub insertion_templates: Vec<String>,
}

impl Default for InjectionConfig {
    fn default() -> Self {
        Self { insertion_templates: vec!["in {promo}".to_string()] }
    }
}

fn count_occurrences(haystack: &str, needle: &str) -> usize {
    haystack.match_indices(needle).count()
}

pub fn inject(inputs: &InjectionInputs, tags: &TagSequence, seed: u64) -> Result<Paragraph> {
    inject_with(inputs, tags, seed, &InjectionConfig::default())
}

pub fn inject_with(inputs: &InjectionInputs, tags: &TagSequence, seed: u64, cfg: &InjectionConfig) -> Result<Paragraph> {
    let text = inputs.raw_paragraph.text();
    let spans = tokenize_with_spans(text);
    if tags.len() != spans.len() {
        return Err(contract(format!("{} tags for {} tokens", tags.len(), spans.len())));
    }
    let sites = tags.spans();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let Some(site) = sites.choose(&mut rng) else {
        return Err(AttackError::Infeasible("no replaceable or insertable position".into()));
    };
    let promo = &inputs.promotional_content;
    let out = match site.kind {
        RevisionEntity::Replacement => {
            let from = spans[site.start].1.start;
            let to = spans[site.start + site.len - 1].1.end;
            format!("{}{}{}", &text[..from], promo, &text[to..])
        }
        RevisionEntity::Insertion => {
            let template = cfg
                .insertion_templates
                .choose(&mut rng)
                .ok_or_else(|| contract("no insertion template configured"))?;
            let at = spans[site.start].1.end;
            format!("{} {}{}", &text[..at], template.replace("{promo}", promo), &text[at..])
        }
        RevisionEntity::Unsuitability => unreachable!("spans never yield UNSUITABILITY"),
    };
    if count_occurrences(&out, promo) != count_occurrences(text, promo) + 1 {
        return Err(AttackError::Infeasible("injection would merge with existing text".into()));
    }
    Ok(Paragraph::new(out)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use RevisionEntity::*;

    fn inputs(text: &str, query: &str) -> InjectionInputs {
        InjectionInputs::new(Paragraph::new(text).unwrap(), "ABC Pharmacy", query).unwrap()
    }

    fn lex() -> Lexicons {
        Lexicons::default()
    }

    #[test]
    fn org_span_is_replacement() {
        let i = inputs("Xifaxan is marketed by Salix Pharmaceuticals.", "rifaximin");
        let t = heuristic_label(&i, &lex());
        assert_eq!(t.as_slice(), &[Unsuitability, Unsuitability, Insertion, Unsuitability, Replacement, Replacement]);
        let p = inject(&i, &TagSequence::new(vec![Unsuitability, Unsuitability, Unsuitability, Unsuitability, Replacement, Replacement]), 1)
            .unwrap();
        assert_eq!(p.text(), "Xifaxan is marketed by ABC Pharmacy.");
    }

    #[test]
    fn promo_keyword_is_insertion() {
        let i = inputs("Sofosbuvir, sold under the brand name Sovaldi among others, treats hepatitis.", "hepatitis c");
        let t = heuristic_label(&i, &lex());
        assert_eq!(t.as_slice()[1], Insertion);
        let mut only_sold = vec![Unsuitability; t.len()];
        only_sold[1] = Insertion;
        let p = inject(&i, &TagSequence::new(only_sold), 9).unwrap();
        assert_eq!(p.text(), "Sofosbuvir, sold in ABC Pharmacy under the brand name Sovaldi among others, treats hepatitis.");
    }

    #[test]
    fn query_tokens_and_places() {
        let i = inputs("Trials of talvex forte ran in the United States and Kenya.", "talvex forte");
        let t = heuristic_label(&i, &lex());
        assert_eq!(
            t.as_slice(),
            &[Unsuitability, Unsuitability, Insertion, Insertion, Unsuitability, Unsuitability, Unsuitability, Replacement, Replacement, Unsuitability, Replacement]
        );
        let spans = t.spans();
        assert_eq!(spans.len(), 4);
        assert_eq!(spans[2], EntitySpan { kind: Replacement, start: 7, len: 2 });
    }

    #[test]
    fn plain_paragraph_is_unsuitable_and_infeasible() {
        let i = inputs("The cat sat on the mat.", "talvex");
        let t = heuristic_label(&i, &lex());
        assert!(t.as_slice().iter().all(|&x| x == Unsuitability));
        assert!(matches!(inject(&i, &t, 0), Err(AttackError::Infeasible(_))));
    }

    #[test]
    fn leading_stopword_is_not_part_of_org() {
        let i = inputs("The Gegrosri Biologics plant closed.", "x");
        let t = heuristic_label(&i, &lex());
        assert_eq!(&t.as_slice()[..3], &[Unsuitability, Replacement, Replacement]);
    }

    #[test]
    fn promo_validation() {
        let p = Paragraph::new("x y").unwrap();
        assert!(InjectionInputs::new(p.clone(), "  ", "q").is_err());
        assert!(InjectionInputs::new(p.clone(), "a b c d e f g h i", "q").is_err());
        assert!(InjectionInputs::new(p, "a b c d e f g h", "q").is_ok());
    }
}
