//! Per-token input rows shared by the adversary's networks: the word
//! vector followed by a few surface-shape flags the vectors cannot carry.

use std::sync::Arc;

use mawseo_core::text::tokenize_with_spans;
use mawseo_core::WordVectorTable;
use mawseo_nn::Tensor;

/// capitalised, all caps, has a digit, sentence initial
pub const SHAPE_FEATURES: usize = 4;

#[derive(Clone, Debug)]
pub struct TokenFeatures {
    table: Arc<WordVectorTable>,
}

impl TokenFeatures {
    pub fn new(table: Arc<WordVectorTable>) -> Self {
        Self { table }
    }

    pub fn table(&self) -> &WordVectorTable {
        &self.table
    }

    pub fn shared_table(&self) -> Arc<WordVectorTable> {
        Arc::clone(&self.table)
    }

    pub fn word_dim(&self) -> usize {
        self.table.dim()
    }

    pub fn dim(&self) -> usize {
        self.table.dim() + SHAPE_FEATURES
    }

    /// One row per token of `text`, in the same segmentation as
    /// [`mawseo_core::text::tokenize`].
    pub fn text_rows(&self, text: &str) -> Vec<Vec<f64>> {
        let spans = tokenize_with_spans(text);
        let mut rows = Vec::with_capacity(spans.len());
        for (tok, range) in &spans {
            let lower = tok.to_lowercase();
            let mut row = self.table.vector(&lower).into_owned();
            let first_upper = tok.chars().next().is_some_and(char::is_uppercase);
            let all_caps = tok.chars().count() > 1 && tok.chars().any(char::is_uppercase) && !tok.chars().any(char::is_lowercase);
            let digit = tok.chars().any(|c| c.is_ascii_digit());
            let before = text[..range.start].trim_end();
            let initial = before.is_empty() || before.ends_with(['.', '!', '?']);
            row.extend([first_upper, all_caps, digit, initial].map(|b| if b { 1.0 } else { 0.0 }));
            rows.push(row);
        }
        rows
    }

    pub fn text_matrix(&self, text: &str) -> Tensor {
        to_matrix(&self.text_rows(text), self.dim())
    }

    /// Plain word vectors of already lowercased tokens.
    pub fn word_matrix<S: AsRef<str>>(&self, tokens: &[S]) -> Tensor {
        let rows: Vec<Vec<f64>> = tokens.iter().map(|t| self.table.vector(t.as_ref()).into_owned()).collect();
        to_matrix(&rows, self.word_dim())
    }
}

pub(crate) fn to_matrix(rows: &[Vec<f64>], cols: usize) -> Tensor {
    let mut data = Vec::with_capacity(rows.len() * cols);
    for r in rows {
        debug_assert_eq!(r.len(), cols);
        data.extend_from_slice(r);
    }
    Tensor::from_vec(rows.len(), cols, data)
}
