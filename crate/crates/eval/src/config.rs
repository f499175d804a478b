//! Experiment configuration, read from TOML. Every field has a default, so
//! an empty file describes the desk-scale fixture run.

use std::path::{Path, PathBuf};

use mawseo_attack::adversary::AdversaryConfig;
use mawseo_attack::detector::DetectorConfig;
use mawseo_attack::ranker::RankerConfig;
use mawseo_attack::retrieval::RetrievalConfig;
use mawseo_attack::TaggerConfig;
use mawseo_core::embeddings::stable_hash;
use mawseo_core::SynthConfig;
use mawseo_defense::CoherenceConfig;
use mawseo_target::{Bm25Params, EditSynthConfig, GbdtConfig};
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub corpus: CorpusSection,
    pub queries: QuerySection,
    pub target: TargetSection,
    pub ranker: RankerConfig,
    pub tagger: TaggerSection,
    pub substitute_detector: DetectorSection,
    pub retrieval: RetrievalConfig,
    pub adversary: AdversaryConfig,
    pub attack: AttackSection,
    pub thresholds: ThresholdSection,
    pub defense: DefenseSection,
    pub revenue: RevenueSection,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSection {
    /// Existing corpus file; when absent the synthetic generator runs.
    pub path: Option<PathBuf>,
    pub synth: SynthConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct QuerySection {
    /// Explicit queries; when empty the first `count` vocabulary queries.
    pub list: Vec<String>,
    pub count: usize,
    /// Promotional names; when empty the vocabulary's pharmacies.
    pub promos: Vec<String>,
    /// Fraction of queries used to train the retrieval network and to
    /// produce revisions for adversarial retraining.
    pub attack_train_fraction: f64,
    pub split_seed: u64,
}

impl Default for QuerySection {
    fn default() -> Self {
        Self { list: Vec::new(), count: 100, promos: Vec::new(), attack_train_fraction: 0.6, split_seed: 3 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TargetSection {
    pub bm25: Bm25Params,
    pub edits: EditSynthConfig,
    pub gbdt: GbdtConfig,
    pub threshold: f64,
    pub holdout_fraction: f64,
}

impl Default for TargetSection {
    fn default() -> Self {
        Self {
            bm25: Bm25Params::default(),
            edits: EditSynthConfig::default(),
            gbdt: GbdtConfig::default(),
            threshold: mawseo_target::DEFAULT_THRESHOLD,
            holdout_fraction: 0.2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TaggerSection {
    pub examples: usize,
    pub data_seed: u64,
    pub model: TaggerConfig,
}

impl Default for TaggerSection {
    fn default() -> Self {
        Self { examples: 1000, data_seed: 3, model: TaggerConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DetectorSection {
    pub revisions: usize,
    pub data_seed: u64,
    pub model: DetectorConfig,
}

impl Default for DetectorSection {
    fn default() -> Self {
        Self { revisions: 2400, data_seed: 5, model: DetectorConfig::default() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AttackSection {
    /// Instances sampled per rank bucket of 100 for training queries.
    pub train_per_bucket: usize,
    /// Instances sampled per rank bucket for evaluation queries.
    pub test_per_bucket: usize,
    pub sample_seed: u64,
    pub pool_seed: u64,
    pub baseline_seed: u64,
    /// Boosted MAWSEO revisions replayed by the keyword-stuffing baseline.
    pub keyword_instances: usize,
    pub keyword_step: f64,
    pub keyword_max_paragraph_tokens: usize,
}

impl Default for AttackSection {
    fn default() -> Self {
        Self {
            train_per_bucket: 5,
            test_per_bucket: 10,
            sample_seed: 2,
            pool_seed: 1,
            baseline_seed: 9,
            keyword_instances: 100,
            keyword_step: 0.0025,
            keyword_max_paragraph_tokens: 400,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ThresholdSection {
    /// Articles sampled; capped at the number of eligible articles.
    pub sample: usize,
    pub seed: u64,
    pub topic_override: Option<f64>,
    pub consistency_override: Option<f64>,
}

impl Default for ThresholdSection {
    fn default() -> Self {
        Self { sample: 15_000, seed: 13, topic_override: None, consistency_override: None }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DefenseSection {
    pub triplets: usize,
    pub triplet_seed: u64,
    pub coherence: CoherenceConfig,
    pub margin: f64,
    pub legitimate_seed: u64,
}

impl Default for DefenseSection {
    fn default() -> Self {
        Self { triplets: 20_000, triplet_seed: 5, coherence: CoherenceConfig::default(), margin: 0.0, legitimate_seed: 7 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RevenueSection {
    pub view_through_rate: f64,
    pub revenue_per_action: f64,
    /// `rank,views` file; the bundled table when absent.
    pub view_table: Option<PathBuf>,
}

impl Default for RevenueSection {
    fn default() -> Self {
        Self { view_through_rate: 0.01, revenue_per_action: 200.0, view_table: None }
    }
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Self = toml::from_str(text).map_err(|e| EvalError::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| EvalError::Config(format!("{}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serialises")
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(EvalError::Config(m));
        let f = self.queries.attack_train_fraction;
        if !(0.0..1.0).contains(&f) || f == 0.0 {
            return bad(format!("queries.attack_train_fraction must lie in (0, 1), got {f}"));
        }
        if self.queries.list.is_empty() && self.queries.count < 2 {
            return bad("queries.count must be at least 2".into());
        }
        if self.corpus.path.is_none() && self.corpus.synth.n_articles < 10 {
            return bad("corpus.synth.n_articles must be at least 10".into());
        }
        if self.defense.triplets < mawseo_defense::model::MIN_TRAINING_TRIPLETS {
            return bad(format!("defense.triplets must be at least {}", mawseo_defense::model::MIN_TRAINING_TRIPLETS));
        }
        if !(self.attack.keyword_step > 0.0 && self.attack.keyword_step <= crate::keyword::MAX_TARGET_DENSITY) {
            return bad("attack.keyword_step must lie in (0, 0.05]".into());
        }
        Ok(())
    }

    /// Replaces every seed with one derived from `seed` and the field's
    /// name, so a single number reseeds the whole run.
    pub fn reseed(&mut self, seed: u64) {
        let d = |name: &str| stable_hash(&format!("{seed}/{name}"));
        self.corpus.synth.seed = d("corpus");
        self.queries.split_seed = d("split");
        self.target.edits.seed = d("edits");
        self.ranker.seed = d("ranker");
        self.tagger.data_seed = d("tagger-data");
        self.tagger.model.seed = d("tagger");
        self.substitute_detector.data_seed = d("detector-data");
        self.substitute_detector.model.seed = d("detector");
        self.retrieval.seed = d("retrieval");
        self.adversary.seed = d("adversary");
        self.attack.sample_seed = d("sample");
        self.attack.pool_seed = d("pool");
        self.attack.baseline_seed = d("baseline");
        self.thresholds.seed = d("thresholds");
        self.defense.triplet_seed = d("triplets");
        self.defense.coherence.seed = d("coherence");
        self.defense.legitimate_seed = d("legitimate");
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default_and_round_trips() {
        let c = ExperimentConfig::from_toml("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(ExperimentConfig::from_toml(&c.to_toml()).unwrap(), c);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        assert!(ExperimentConfig::from_toml("[queries]\nattack_train_fraction = 1.5\n").is_err());
        assert!(ExperimentConfig::from_toml("bogus = 1\n").is_err());
        assert!(ExperimentConfig::from_toml("[corpus]\nsynth = 3\n").is_err());
    }

    #[test]
    fn reseeding_is_deterministic() {
        let mut a = ExperimentConfig::default();
        let mut b = ExperimentConfig::default();
        a.reseed(42);
        b.reseed(42);
        assert_eq!(a, b);
        b.reseed(43);
        assert_ne!(a, b);
    }
}
