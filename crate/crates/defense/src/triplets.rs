//! Ranking triplets: an anchor chunk, the chunk that really borders it and
//! a chunk that does not.

use std::io::{BufRead, Write};
use std::path::Path;

use mawseo_core::corpus::single_insertion_diff;
use mawseo_core::{Article, Corpus, Paragraph};
use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::{extract_chunk, ChunkOrigin, SentenceChunk};
use crate::error::{contract, DefenseError, Result};

/// Where the anchor sits relative to the two candidates. Scores are always
/// taken on `(former, latter)` pairs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AnchorSide {
    /// Anchor is the last chunk of the upper paragraph.
    Former,
    /// Anchor is the first chunk of the lower paragraph.
    Latter,
}

/// `(article id, paragraph index)`; inserted paragraphs carry `None`.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChunkSource {
    pub article_id: String,
    pub paragraph: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoherenceTriplet {
    pub anchor: SentenceChunk,
    pub positive: SentenceChunk,
    pub negative: SentenceChunk,
    pub side: AnchorSide,
    pub sources: [ChunkSource; 3],
}

impl CoherenceTriplet {
    /// `(former, latter)` for the anchor paired with `other`.
    pub fn pair<'a>(&'a self, other: &'a SentenceChunk) -> (&'a SentenceChunk, &'a SentenceChunk) {
        match self.side {
            AnchorSide::Former => (&self.anchor, other),
            AnchorSide::Latter => (other, &self.anchor),
        }
    }

    pub fn positive_pair(&self) -> (&SentenceChunk, &SentenceChunk) {
        self.pair(&self.positive)
    }

    pub fn negative_pair(&self) -> (&SentenceChunk, &SentenceChunk) {
        self.pair(&self.negative)
    }
}

fn src(a: &Article, i: usize) -> ChunkSource {
    ChunkSource { article_id: a.id.clone(), paragraph: Some(i) }
}

/// Seeded training triplets: a random adjacent pair inside one article
/// against the first chunk of a paragraph from a different article.
pub fn build_triplets(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<CoherenceTriplet>> {
    let articles: Vec<&Article> = corpus.articles().filter(|a| a.paragraphs.len() >= 2).collect();
    if articles.len() < 2 {
        return Err(contract("triplets need at least two articles with two or more paragraphs"));
    }
    let foreign: Vec<&Article> = corpus.articles().chain(corpus.pool_articles()).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = *articles.choose(&mut rng).expect("non-empty");
        let j = rng.random_range(0..a.paragraphs.len() - 1);
        let b = *foreign.choose(&mut rng).expect("non-empty");
        if b.id == a.id {
            continue;
        }
        let k = rng.random_range(0..b.paragraphs.len());
        let positive = extract_chunk(&a.paragraphs[j + 1], ChunkOrigin::First);
        let negative = extract_chunk(&b.paragraphs[k], ChunkOrigin::First);
        if positive == negative {
            continue;
        }
        out.push(CoherenceTriplet {
            anchor: extract_chunk(&a.paragraphs[j], ChunkOrigin::Last),
            positive,
            negative,
            side: AnchorSide::Former,
            sources: [src(a, j), src(a, j + 1), src(b, k)],
        });
    }
    Ok(out)
}

/// The test triplets around an inserted paragraph: one per joint that has
/// an original paragraph on both sides. The positive is the pairing the
/// original article had; the negative goes through the inserted paragraph.
pub fn triplets_from_revision(before: &Article, after: &Article) -> Result<Vec<CoherenceTriplet>> {
    let diff = single_insertion_diff(before, after)?;
    let ins = diff.inserted;
    let inserted = &after.paragraphs[ins];
    let (Some(up), Some(down)) = (ins.checked_sub(1), (ins + 1 < after.paragraphs.len()).then_some(ins + 1)) else {
        return Ok(Vec::new());
    };
    let upper = &after.paragraphs[up];
    let lower = &after.paragraphs[down];
    let here = || ChunkSource { article_id: after.id.clone(), paragraph: None };
    Ok(vec![
        CoherenceTriplet {
            anchor: extract_chunk(upper, ChunkOrigin::Last),
            positive: extract_chunk(lower, ChunkOrigin::First),
            negative: extract_chunk(inserted, ChunkOrigin::First),
            side: AnchorSide::Former,
            sources: [src(before, up), src(before, ins), here()],
        },
        CoherenceTriplet {
            anchor: extract_chunk(lower, ChunkOrigin::First),
            positive: extract_chunk(upper, ChunkOrigin::Last),
            negative: extract_chunk(inserted, ChunkOrigin::Last),
            side: AnchorSide::Latter,
            sources: [src(before, ins), src(before, up), here()],
        },
    ])
}

/// A legitimate paragraph in its original place, framed as an insertion:
/// `before` lacks paragraph `j`, `after` is the article itself. Only
/// paragraphs with a neighbour on both sides are used so both joints exist.
pub fn legitimate_samples(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<(Article, Article)>> {
    let articles: Vec<&Article> = corpus.articles().filter(|a| a.paragraphs.len() >= 3).collect();
    if articles.is_empty() {
        return Err(contract("no article has an interior body paragraph"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    for _ in 0..n {
        let a = *articles.choose(&mut rng).expect("non-empty");
        let j = rng.random_range(1..a.paragraphs.len() - 1);
        out.push((mawseo_core::corpus::remove_paragraph(a, j)?, a.clone()));
    }
    Ok(out)
}

/// Inserts a paragraph taken from another article at a random interior
/// position; the negative class for detector tests.
pub fn foreign_insertions(corpus: &Corpus, n: usize, seed: u64) -> Result<Vec<(Article, Article)>> {
    let articles: Vec<&Article> = corpus.articles().filter(|a| a.paragraphs.len() >= 3).collect();
    let donors: Vec<&Article> = corpus.pool_articles().iter().chain(corpus.articles()).collect();
    if articles.is_empty() || donors.len() < 2 {
        return Err(contract("corpus too small for foreign insertions"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = *articles.choose(&mut rng).expect("non-empty");
        let d = *donors.choose(&mut rng).expect("non-empty");
        if d.id == a.id {
            continue;
        }
        let p: &Paragraph = d.paragraphs.choose(&mut rng).expect("articles are non-empty");
        let i = rng.random_range(0..a.paragraphs.len() - 1);
        out.push((a.clone(), mawseo_core::apply_revision(a, p, i)?));
    }
    Ok(out)
}

pub fn write_triplets(path: &Path, triplets: &[CoherenceTriplet]) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    for t in triplets {
        serde_json::to_writer(&mut w, t).map_err(|e| DefenseError::Checkpoint(e.to_string()))?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_triplets(path: &Path) -> Result<Vec<CoherenceTriplet>> {
    let r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (i, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| DefenseError::Parse { line: i + 1, message: e.to_string() })?);
    }
    Ok(out)
}
