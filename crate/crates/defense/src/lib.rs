//! Countermeasures against inserted promotional paragraphs: a pairwise
//! coherence model that checks the two joints around an insertion, and
//! adversarial retraining of the vandalism detector.

pub mod chunk;
pub mod error;
pub mod flagging;
pub mod grid;
pub mod model;
pub mod retrain;
pub mod triplets;

pub use chunk::{extract_chunk, ChunkOrigin, SentenceChunk};
pub use error::{DefenseError, Result};
pub use flagging::{detect_revision, evaluate_flagging, FlaggingReport, JointScores, RevisionDecision};
pub use grid::{EntityExtractor, EntityGrid, Role};
pub use model::{hinge_loss, train_coherence, CoherenceConfig, CoherenceModel, CoherenceReport, PairFeaturizer, TrainedCoherence};
pub use retrain::{adversarial_retrain, compare_detectors, revision_features, score_detector, DetectorScore, RetrainingReport};
pub use triplets::{build_triplets, foreign_insertions, legitimate_samples, triplets_from_revision, AnchorSide, CoherenceTriplet};
