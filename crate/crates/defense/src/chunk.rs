//! Two-sentence chunks at the edges of a paragraph.

use mawseo_core::text::{normalize_whitespace, split_sentences};
use mawseo_core::Paragraph;
use serde::{Deserialize, Serialize};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ChunkOrigin {
    First,
    Last,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SentenceChunk {
    pub sentences: Vec<String>,
    pub origin: ChunkOrigin,
}

impl SentenceChunk {
    /// Splits free text and keeps the designated edge, as if it were a
    /// paragraph.
    pub fn from_text(text: &str, origin: ChunkOrigin) -> Self {
        Self::from_sentences(split_sentences(text), origin)
    }

    fn from_sentences(all: Vec<String>, origin: ChunkOrigin) -> Self {
        let n = all.len();
        let take = n.min(2);
        let range = match origin {
            ChunkOrigin::First => 0..take,
            ChunkOrigin::Last => n - take..n,
        };
        let sentences = all[range].iter().map(|s| normalize_whitespace(s)).filter(|s| !s.is_empty()).collect();
        Self { sentences, origin }
    }

    pub fn text(&self) -> String {
        self.sentences.join(" ")
    }
}

pub fn extract_chunk(p: &Paragraph, which: ChunkOrigin) -> SentenceChunk {
    SentenceChunk::from_sentences(p.sentences().to_vec(), which)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn para(n: usize) -> Paragraph {
        let text: Vec<String> = (1..=n).map(|i| format!("Sentence number {i} is here.")).collect();
        Paragraph::new(text.join(" ")).unwrap()
    }

    #[test]
    fn edges_of_a_five_sentence_paragraph() {
        let p = para(5);
        let last = extract_chunk(&p, ChunkOrigin::Last);
        assert_eq!(last.sentences, vec!["Sentence number 4 is here.", "Sentence number 5 is here."]);
        let first = extract_chunk(&p, ChunkOrigin::First);
        assert_eq!(first.sentences.len(), 2);
        assert!(p.text().starts_with(&first.text()));
    }

    #[test]
    fn single_sentence_paragraph() {
        let p = para(1);
        for o in [ChunkOrigin::First, ChunkOrigin::Last] {
            assert_eq!(extract_chunk(&p, o).sentences, vec!["Sentence number 1 is here."]);
        }
    }

    #[test]
    fn trailing_whitespace_is_dropped() {
        let a = SentenceChunk::from_text("Alpha beta gamma.  Delta epsilon.", ChunkOrigin::First);
        let b = SentenceChunk::from_text("Alpha beta gamma.  Delta epsilon. \n\t ", ChunkOrigin::First);
        assert_eq!(a, b);
    }
}
