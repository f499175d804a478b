//! The run directory: every stage reads its inputs from and writes its
//! outputs to one directory, and records them in `manifest.json`.

use std::collections::BTreeMap;
use std::fmt;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::config::ExperimentConfig;
use crate::error::{EvalError, Result};

pub const MANIFEST: &str = "manifest.json";
pub const MANIFEST_VERSION: u32 = 1;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Stage {
    SynthCorpus,
    Index,
    TrainTargetDetector,
    DistillRanker,
    TrainSubstituteDetector,
    TrainTagger,
    TrainRetrieval,
    Attack,
    DefendCoherence,
    DefendAdvTrain,
    Eval,
    Report,
}

impl Stage {
    pub const ALL: [Stage; 12] = [
        Stage::SynthCorpus,
        Stage::Index,
        Stage::TrainTargetDetector,
        Stage::DistillRanker,
        Stage::TrainSubstituteDetector,
        Stage::TrainTagger,
        Stage::TrainRetrieval,
        Stage::Attack,
        Stage::DefendCoherence,
        Stage::DefendAdvTrain,
        Stage::Eval,
        Stage::Report,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::SynthCorpus => "synth-corpus",
            Stage::Index => "index",
            Stage::TrainTargetDetector => "train-target-detector",
            Stage::DistillRanker => "distill-ranker",
            Stage::TrainSubstituteDetector => "train-substitute-detector",
            Stage::TrainTagger => "train-tagger",
            Stage::TrainRetrieval => "train-retrieval",
            Stage::Attack => "attack",
            Stage::DefendCoherence => "defend-coherence",
            Stage::DefendAdvTrain => "defend-adv-train",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Artifact file names, relative to the run directory.
pub mod artifacts {
    pub const CONFIG: &str = "config.toml";
    pub const CORPUS: &str = "corpus.jsonl";
    pub const WORD_VECTORS: &str = "word_vectors.txt";
    pub const QUERIES: &str = "queries.json";
    pub const INDEX: &str = "index.json";
    pub const TARGET_DETECTOR: &str = "target_detector.json";
    pub const TARGET_EDITS: &str = "target_edits.json";
    pub const RANKER: &str = "ranker.json";
    pub const RANKER_REPORT: &str = "ranker_report.json";
    pub const SUBSTITUTE_DETECTOR: &str = "substitute_detector.json";
    pub const SUBSTITUTE_DETECTOR_REPORT: &str = "substitute_detector_report.json";
    pub const TAGGER: &str = "tagger.json";
    pub const TAGGER_REPORT: &str = "tagger_report.json";
    pub const POOLS: &str = "pools.json";
    pub const INSTANCES: &str = "instances.json";
    pub const RETRIEVAL: &str = "retrieval.json";
    pub const RETRIEVAL_REPORT: &str = "retrieval_report.json";
    pub const THRESHOLDS: &str = "thresholds.json";
    pub const MAWSEO_REVISIONS: &str = "revisions/mawseo.jsonl";
    pub const RANDOM_REVISIONS: &str = "revisions/random.jsonl";
    pub const KEYWORD_REVISIONS: &str = "revisions/keyword.jsonl";
    pub const TRAIN_REVISIONS: &str = "revisions/mawseo_train.jsonl";
    pub const KEYWORD_REPORT: &str = "keyword_report.json";
    pub const COHERENCE_MODEL: &str = "coherence.json";
    pub const COHERENCE_REPORT: &str = "coherence_report.json";
    pub const RETRAINED_DETECTOR: &str = "retrained_detector.json";
    pub const RETRAINING_REPORT: &str = "retraining_report.json";
    pub const EVALUATION: &str = "evaluation.json";
    pub const REPORT_JSON: &str = "report.json";
    pub const REPORT_MD: &str = "report.md";
    pub const TABLE_ATTACK: &str = "table_attack.tsv";
    pub const TABLE_RANK_LEVELS: &str = "table_rank_levels.tsv";
    pub const TABLE_DEFENSE: &str = "table_defense.tsv";
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub config_sha256: String,
    /// SHA-256 of each output file.
    pub outputs: BTreeMap<String, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub stages: BTreeMap<Stage, StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self { version: MANIFEST_VERSION, stages: BTreeMap::new() }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Clone, Debug)]
pub struct RunDir {
    root: PathBuf,
}

impl RunDir {
    pub fn create(root: impl Into<PathBuf>) -> Result<Self> {
        let root = root.into();
        std::fs::create_dir_all(&root)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    /// The path of an input artifact, or a missing-artifact error naming
    /// the stage that produces it.
    pub fn require(&self, name: &str, producer: Stage) -> Result<PathBuf> {
        let p = self.path(name);
        if p.is_file() {
            Ok(p)
        } else {
            Err(EvalError::MissingArtifact { name: name.to_string(), dir: self.root.clone(), producer: producer.name().to_string() })
        }
    }

    pub fn read_text(&self, name: &str, producer: Stage) -> Result<String> {
        Ok(std::fs::read_to_string(self.require(name, producer)?)?)
    }

    pub fn read_json<T: DeserializeOwned>(&self, name: &str, producer: Stage) -> Result<T> {
        Ok(serde_json::from_str(&self.read_text(name, producer)?)?)
    }

    pub fn write_text(&self, name: &str, text: &str) -> Result<()> {
        let p = self.path(name);
        if let Some(dir) = p.parent() {
            std::fs::create_dir_all(dir)?;
        }
        std::fs::write(p, text)?;
        Ok(())
    }

    pub fn write_json<T: Serialize>(&self, name: &str, value: &T) -> Result<()> {
        let mut s = serde_json::to_string_pretty(value)?;
        s.push('\n');
        self.write_text(name, &s)
    }

    pub fn manifest(&self) -> Result<Manifest> {
        let p = self.path(MANIFEST);
        if !p.is_file() {
            return Ok(Manifest::default());
        }
        let m: Manifest = serde_json::from_str(&std::fs::read_to_string(p)?)?;
        if m.version != MANIFEST_VERSION {
            return Err(EvalError::Config(format!("manifest version {} is not {MANIFEST_VERSION}", m.version)));
        }
        Ok(m)
    }

    /// Stores the resolved config and hashes `outputs` into the manifest
    /// entry of `stage`.
    pub fn record(&self, stage: Stage, config: &ExperimentConfig, outputs: &[&str]) -> Result<()> {
        let toml = config.to_toml();
        self.write_text(artifacts::CONFIG, &toml)?;
        let mut record = StageRecord { config_sha256: sha256_hex(toml.as_bytes()), outputs: BTreeMap::new() };
        for name in outputs {
            let bytes = std::fs::read(self.require(name, stage)?)?;
            record.outputs.insert(name.to_string(), sha256_hex(&bytes));
        }
        let mut m = self.manifest()?;
        m.stages.insert(stage, record);
        self.write_json(MANIFEST, &m)
    }
}
