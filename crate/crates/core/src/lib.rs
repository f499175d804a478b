//! Shared data model for the testbed: text processing, the corpus format,
//! word vectors, the synthetic corpus generator and the black-box
//! interfaces of the victim wiki.

pub mod blackbox;
pub mod corpus;
pub mod embeddings;
pub mod error;
pub mod lexicon;
pub mod metrics;
pub mod revision;
pub mod similarity;
pub mod synth;
pub mod text;
pub mod vocab;

pub use blackbox::{EditVerdict, RankedResult, SearchEngine, VandalismDetector, Wiki};
pub use corpus::{apply_revision, lead_paragraph, load_corpus, save_corpus, Article, Corpus, Paragraph};
pub use embeddings::{cosine, load_word_vectors, SentenceEncoder, SentenceVector, WordVectorTable};
pub use error::{CoreError, Result};
pub use lexicon::Lexicons;
pub use metrics::{binary_report, BinaryReport};
pub use revision::{ObjectiveFlags, Revision};
pub use synth::{synth_corpus, SynthConfig};
pub use vocab::{Vocabulary, VocabularySpec};
