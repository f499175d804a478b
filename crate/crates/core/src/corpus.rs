//! Articles, paragraphs and the JSON-lines corpus format.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use indexmap::IndexMap;
use serde::{Deserialize, Serialize};

use crate::error::{contract, CoreError, Result};
use crate::text::{split_sentences, tokenize};

/// A paragraph with its derived sentence and token lists. Only the text is
/// serialized; the rest is recomputed on load.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub struct Paragraph {
    text: String,
    sentences: Vec<String>,
    tokens: Vec<String>,
}

impl Paragraph {
    /// Trims the text and derives sentences and tokens. Fails on text
    /// without any sentence content.
    pub fn new(text: impl Into<String>) -> Result<Self> {
        let text = text.into().trim().to_string();
        let sentences = split_sentences(&text);
        if text.is_empty() || sentences.is_empty() {
            return Err(CoreError::Integrity("empty paragraph".into()));
        }
        let tokens = tokenize(&text);
        Ok(Self { text, sentences, tokens })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn sentences(&self) -> &[String] {
        &self.sentences
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

impl TryFrom<String> for Paragraph {
    type Error = CoreError;

    fn try_from(s: String) -> Result<Self> {
        Paragraph::new(s)
    }
}

impl From<Paragraph> for String {
    fn from(p: Paragraph) -> String {
        p.text
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Article {
    pub id: String,
    pub title: String,
    pub category_tags: Vec<String>,
    pub paragraphs: Vec<Paragraph>,
}

impl Article {
    pub fn new(id: impl Into<String>, title: impl Into<String>, category_tags: Vec<String>, paragraphs: Vec<Paragraph>) -> Result<Self> {
        let a = Self { id: id.into(), title: title.into(), category_tags, paragraphs };
        a.validate()?;
        Ok(a)
    }

    pub fn validate(&self) -> Result<()> {
        if self.id.is_empty() {
            return Err(CoreError::Integrity("article with empty id".into()));
        }
        if self.paragraphs.len() < 2 {
            return Err(CoreError::Integrity(format!(
                "article `{}` has {} paragraph(s); at least 2 required",
                self.id,
                self.paragraphs.len()
            )));
        }
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.paragraphs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraphs.is_empty()
    }

    /// Tokens of all paragraphs in order.
    pub fn tokens(&self) -> impl Iterator<Item = &String> {
        self.paragraphs.iter().flat_map(|p| p.tokens().iter())
    }

    pub fn token_count(&self) -> usize {
        self.paragraphs.iter().map(|p| p.tokens().len()).sum()
    }
}

pub fn lead_paragraph(a: &Article) -> &Paragraph {
    &a.paragraphs[0]
}

/// Returns a copy of `a` with `p` placed between paragraphs `i` and `i + 1`.
pub fn apply_revision(a: &Article, p: &Paragraph, i: usize) -> Result<Article> {
    if i >= a.paragraphs.len() {
        return Err(contract(format!("insertion index {i} out of range for {} paragraphs", a.paragraphs.len())));
    }
    let mut out = a.clone();
    out.paragraphs.insert(i + 1, p.clone());
    Ok(out)
}

/// Inverse of [`apply_revision`]: drops paragraph `idx`.
pub fn remove_paragraph(a: &Article, idx: usize) -> Result<Article> {
    if idx >= a.paragraphs.len() {
        return Err(contract(format!("paragraph index {idx} out of range")));
    }
    let mut out = a.clone();
    out.paragraphs.remove(idx);
    Ok(out)
}

/// Where a single-paragraph insertion happened, seen from the revised
/// article.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct InsertionDiff {
    /// Index of the new paragraph in the revised article.
    pub inserted: usize,
}

impl InsertionDiff {
    /// Index (in the original article) of the paragraph preceding the
    /// insertion.
    pub fn upper(&self) -> Option<usize> {
        self.inserted.checked_sub(1)
    }

    /// Index (in the original article) of the displaced following
    /// paragraph, if the insertion was not at the end.
    pub fn lower(&self, before: &Article) -> Option<usize> {
        (self.inserted < before.paragraphs.len()).then_some(self.inserted)
    }
}

/// Checks that `after` equals `before` plus exactly one inserted paragraph
/// and locates it. When the inserted text duplicates a neighbour the first
/// consistent position from the front is reported.
pub fn single_insertion_diff(before: &Article, after: &Article) -> Result<InsertionDiff> {
    if after.paragraphs.len() != before.paragraphs.len() + 1 {
        return Err(contract(format!(
            "expected one inserted paragraph, got {} -> {} paragraphs",
            before.paragraphs.len(),
            after.paragraphs.len()
        )));
    }
    let k = before
        .paragraphs
        .iter()
        .zip(&after.paragraphs)
        .position(|(b, a)| b.text() != a.text())
        .unwrap_or(before.paragraphs.len());
    let tail_matches = before.paragraphs[k..].iter().zip(&after.paragraphs[k + 1..]).all(|(b, a)| b.text() == a.text());
    if !tail_matches {
        return Err(contract("revision is not a single paragraph insertion"));
    }
    Ok(InsertionDiff { inserted: k })
}

/// One corpus line. `raw_pool` marks articles that only feed the raw
/// paragraph pool and are never attack targets.
#[derive(Serialize, Deserialize)]
struct Record {
    id: String,
    title: String,
    #[serde(default)]
    category_tags: Vec<String>,
    paragraphs: Vec<Paragraph>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    raw_pool: bool,
}

/// A paragraph of the raw pool with its provenance.
#[derive(Clone, Copy, Debug)]
pub struct RawParagraph<'a> {
    pub source_id: &'a str,
    pub index: usize,
    pub paragraph: &'a Paragraph,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Corpus {
    articles: IndexMap<String, Article>,
    pool: Vec<Article>,
}

impl Corpus {
    /// Builds a corpus, rejecting duplicate ids across articles and pool.
    pub fn new(articles: Vec<Article>, pool: Vec<Article>) -> Result<Self> {
        let mut map = IndexMap::with_capacity(articles.len());
        let mut seen = std::collections::HashSet::new();
        for a in articles {
            a.validate()?;
            if !seen.insert(a.id.clone()) {
                return Err(CoreError::Integrity(format!("duplicate article id `{}`", a.id)));
            }
            map.insert(a.id.clone(), a);
        }
        for a in &pool {
            a.validate()?;
            if !seen.insert(a.id.clone()) {
                return Err(CoreError::Integrity(format!("duplicate article id `{}`", a.id)));
            }
        }
        Ok(Self { articles: map, pool })
    }

    pub fn len(&self) -> usize {
        self.articles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.articles.is_empty()
    }

    pub fn get(&self, id: &str) -> Option<&Article> {
        self.articles.get(id)
    }

    pub fn article(&self, id: &str) -> Result<&Article> {
        self.get(id).ok_or_else(|| CoreError::UnknownArticle(id.to_string()))
    }

    pub fn articles(&self) -> impl ExactSizeIterator<Item = &Article> {
        self.articles.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.articles.keys().map(String::as_str)
    }

    pub fn pool_articles(&self) -> &[Article] {
        &self.pool
    }

    pub fn raw_paragraphs(&self) -> Vec<RawParagraph<'_>> {
        self.pool
            .iter()
            .flat_map(|a| {
                a.paragraphs.iter().enumerate().map(move |(index, paragraph)| RawParagraph {
                    source_id: &a.id,
                    index,
                    paragraph,
                })
            })
            .collect()
    }

    /// Replaces an existing article in place, keeping its position.
    pub fn replace_article(&mut self, article: Article) -> Result<()> {
        article.validate()?;
        match self.articles.get_mut(&article.id) {
            Some(slot) => {
                *slot = article;
                Ok(())
            }
            None => Err(CoreError::UnknownArticle(article.id)),
        }
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        let rows = self.articles.values().map(|a| (a, false)).chain(self.pool.iter().map(|a| (a, true)));
        for (a, raw_pool) in rows {
            let rec = Record {
                id: a.id.clone(),
                title: a.title.clone(),
                category_tags: a.category_tags.clone(),
                paragraphs: a.paragraphs.clone(),
                raw_pool,
            };
            out.push_str(&serde_json::to_string(&rec).expect("record serializes"));
            out.push('\n');
        }
        out
    }

    pub fn from_reader(reader: impl BufRead, path: &Path) -> Result<Self> {
        let mut articles = Vec::new();
        let mut pool = Vec::new();
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let rec: Record = serde_json::from_str(&line).map_err(|e| CoreError::Parse {
                path: path.to_path_buf(),
                line: n + 1,
                message: e.to_string(),
            })?;
            let a = Article { id: rec.id, title: rec.title, category_tags: rec.category_tags, paragraphs: rec.paragraphs };
            if rec.raw_pool {
                pool.push(a);
            } else {
                articles.push(a);
            }
        }
        Self::new(articles, pool)
    }
}

pub fn load_corpus(path: &Path) -> Result<Corpus> {
    let f = std::fs::File::open(path)?;
    Corpus::from_reader(BufReader::new(f), path)
}

pub fn save_corpus(corpus: &Corpus, path: &Path) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    f.write_all(corpus.to_jsonl().as_bytes())?;
    f.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn para(t: &str) -> Paragraph {
        Paragraph::new(t).unwrap()
    }

    fn article(id: &str, ps: &[&str]) -> Article {
        Article::new(id, id.to_uppercase(), vec!["cat".into()], ps.iter().map(|t| para(t)).collect()).unwrap()
    }

    #[test]
    fn loads_two_articles() {
        let text = r#"{"id":"a","title":"A","category_tags":["x"],"paragraphs":["One. Two.","Three."]}
{"id":"b","title":"B","category_tags":[],"paragraphs":["Four.","Five six."]}
"#;
        let c = Corpus::from_reader(text.as_bytes(), Path::new("mem")).unwrap();
        assert_eq!(c.len(), 2);
        assert_eq!(c.get("a").unwrap().paragraphs[0].sentences(), ["One.", "Two."]);
        assert_eq!(lead_paragraph(c.get("b").unwrap()).text(), "Four.");
    }

    #[test]
    fn single_paragraph_article_is_rejected() {
        let text = r#"{"id":"a","title":"A","category_tags":[],"paragraphs":["Only one."]}"#;
        let err = Corpus::from_reader(text.as_bytes(), Path::new("mem")).unwrap_err();
        assert!(matches!(err, CoreError::Integrity(_)), "{err}");
    }

    #[test]
    fn malformed_line_names_its_line_number() {
        let text = "{\"id\":\"a\",\"title\":\"A\",\"paragraphs\":[\"x.\",\"y.\"]}\n\n{broken\n";
        match Corpus::from_reader(text.as_bytes(), Path::new("c.jsonl")).unwrap_err() {
            CoreError::Parse { line, .. } => assert_eq!(line, 3),
            e => panic!("unexpected {e}"),
        }
    }

    #[test]
    fn duplicate_ids_are_rejected_including_pool() {
        let a = article("a", &["x.", "y."]);
        assert!(matches!(Corpus::new(vec![a.clone(), a.clone()], vec![]), Err(CoreError::Integrity(_))));
        assert!(matches!(Corpus::new(vec![a.clone()], vec![a]), Err(CoreError::Integrity(_))));
    }

    #[test]
    fn revision_inserts_after_index_and_round_trips() {
        let a = article("a", &["A.", "B."]);
        let x = para("X.");
        let r = apply_revision(&a, &x, 0).unwrap();
        let texts: Vec<&str> = r.paragraphs.iter().map(|p| p.text()).collect();
        assert_eq!(texts, ["A.", "X.", "B."]);
        assert_eq!(remove_paragraph(&r, 1).unwrap(), a);
        assert_eq!(a.paragraphs.len(), 2);
        assert!(apply_revision(&a, &x, 2).is_err());
        assert_eq!(single_insertion_diff(&a, &r).unwrap().inserted, 1);
    }

    #[test]
    fn diff_rejects_non_insertions() {
        let a = article("a", &["A.", "B."]);
        let b = article("a", &["A.", "C.", "D."]);
        assert!(single_insertion_diff(&a, &b).is_err());
        assert!(single_insertion_diff(&a, &a).is_err());
    }

    #[test]
    fn paragraph_derivations() {
        assert!(Paragraph::new("   ").is_err());
        let p = para("  Hello world. Bye.  ");
        assert_eq!(p.text(), "Hello world. Bye.");
        assert_eq!(p.tokens(), ["hello", "world", "bye"]);
    }
}
