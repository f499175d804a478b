//! Word lists shared by the generator, the heuristic labeler, the victim's
//! edit features and the entity grid. Files hold one entry per line; blank
//! lines and lines starting with `#` are skipped.

use std::collections::BTreeSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    /// Lowercase promotional keywords ("sold", "marketed", ...).
    pub promo_keywords: BTreeSet<String>,
    /// Capitalised organisation suffixes ("Pharmaceuticals", "Inc", ...).
    pub org_suffixes: Vec<String>,
    /// Place names, possibly multi-word, in their display casing.
    pub gazetteer: Vec<String>,
    pub blocklist: BTreeSet<String>,
    pub stopwords: BTreeSet<String>,
    pub verbs: BTreeSet<String>,
    pub nouns: BTreeSet<String>,
    pub adjectives: BTreeSet<String>,
}

pub fn parse_list(text: &str) -> Vec<String> {
    text.lines()
        .map(str::trim)
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .map(str::to_string)
        .collect()
}

pub fn load_list(path: &Path) -> Result<Vec<String>> {
    Ok(parse_list(&std::fs::read_to_string(path)?))
}

fn lower_set(items: Vec<String>) -> BTreeSet<String> {
    items.into_iter().map(|s| s.to_lowercase()).collect()
}

impl Default for Lexicons {
    fn default() -> Self {
        Self {
            promo_keywords: lower_set(parse_list(include_str!("../data/promo_keywords.txt"))),
            org_suffixes: parse_list(include_str!("../data/org_suffixes.txt")),
            gazetteer: parse_list(include_str!("../data/gazetteer.txt")),
            blocklist: lower_set(parse_list(include_str!("../data/blocklist.txt"))),
            stopwords: lower_set(parse_list(include_str!("../data/stopwords.txt"))),
            verbs: lower_set(parse_list(include_str!("../data/verbs.txt"))),
            nouns: lower_set(parse_list(include_str!("../data/nouns.txt"))),
            adjectives: lower_set(parse_list(include_str!("../data/adjectives.txt"))),
        }
    }
}

impl Lexicons {
    /// Loads any of `promo_keywords.txt`, `org_suffixes.txt`,
    /// `gazetteer.txt`, `blocklist.txt`, ... found in `dir`, falling back to
    /// the built-in list for files that are absent.
    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut lex = Self::default();
        let read = |name: &str| -> Result<Option<Vec<String>>> {
            let p = dir.join(name);
            if p.exists() {
                load_list(&p).map(Some)
            } else {
                Ok(None)
            }
        };
        if let Some(v) = read("promo_keywords.txt")? {
            lex.promo_keywords = lower_set(v);
        }
        if let Some(v) = read("org_suffixes.txt")? {
            lex.org_suffixes = v;
        }
        if let Some(v) = read("gazetteer.txt")? {
            lex.gazetteer = v;
        }
        if let Some(v) = read("blocklist.txt")? {
            lex.blocklist = lower_set(v);
        }
        if let Some(v) = read("stopwords.txt")? {
            lex.stopwords = lower_set(v);
        }
        if let Some(v) = read("verbs.txt")? {
            lex.verbs = lower_set(v);
        }
        if let Some(v) = read("nouns.txt")? {
            lex.nouns = lower_set(v);
        }
        if let Some(v) = read("adjectives.txt")? {
            lex.adjectives = lower_set(v);
        }
        Ok(lex)
    }

    pub fn is_org_suffix(&self, token: &str) -> bool {
        self.org_suffixes.iter().any(|s| s.eq_ignore_ascii_case(token))
    }

    /// Gazetteer entries as lowercase token sequences, longest first so
    /// that greedy matching prefers "United States" over a shorter entry.
    pub fn gazetteer_tokens(&self) -> Vec<Vec<String>> {
        let mut v: Vec<Vec<String>> = self.gazetteer.iter().map(|g| crate::text::tokenize(g)).collect();
        v.sort_by(|a, b| b.len().cmp(&a.len()).then_with(|| a.cmp(b)));
        v.dedup();
        v
    }
}
