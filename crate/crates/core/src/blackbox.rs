//! The only surface through which attack code may observe the victim wiki:
//! ranked search results with scores, and a per-edit damaging verdict.

use serde::{Deserialize, Serialize};

use crate::corpus::Article;
use crate::error::Result;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankedResult {
    pub article_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditVerdict {
    pub damaging_probability: f64,
    pub damaging: bool,
}

impl EditVerdict {
    pub fn from_probability(p: f64, threshold: f64) -> Self {
        Self { damaging_probability: p, damaging: p >= threshold }
    }
}

pub trait SearchEngine {
    /// Top-`k` results, score descending with ascending id as tiebreak.
    fn search(&self, query: &str, k: usize) -> Result<Vec<RankedResult>>;
    fn score(&self, query: &str, article_id: &str) -> Result<f64>;
    /// Rank in the full result list; `None` when the score is zero or the
    /// article is unknown.
    fn rank_of(&self, query: &str, article_id: &str) -> Option<usize>;
    fn num_articles(&self) -> usize;
}

pub trait VandalismDetector {
    /// Verdict on the edit turning `old` into `new`, which must differ by
    /// exactly one inserted paragraph.
    fn detect(&self, old: &Article, new: &Article) -> Result<EditVerdict>;
}

/// A wiki that can show how search would look once a revision is live.
pub trait Wiki: SearchEngine + VandalismDetector {
    fn with_revision<'a>(&'a self, revised: &Article) -> Result<Box<dyn SearchEngine + 'a>>;
}
