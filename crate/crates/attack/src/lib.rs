//! The adversary. Everything here sees the victim wiki only through the
//! black-box traits in `mawseo_core::blackbox`.

pub mod adversary;
pub mod detector;
pub mod error;
pub mod features;
pub mod injection;
pub mod losses;
pub mod mgda;
pub mod ranker;
pub mod retrieval;
pub mod tagger;

pub use error::{AttackError, Result};
pub use features::TokenFeatures;
pub use injection::{heuristic_label, inject, InjectionInputs, RevisionEntity, TagSequence};
pub use tagger::{train_tagger, TaggerConfig, TaggerModel};
