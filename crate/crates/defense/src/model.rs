//! Pairwise coherence scorer: an entity-grid branch and a sentence-vector
//! branch fused by a small feed-forward head, trained with a margin
//! ranking loss on triplets.

use std::sync::Arc;

use mawseo_core::{Lexicons, WordVectorTable};
use mawseo_nn::{Activation, Adam, AdamConfig, FeedForward, Graph, Init, Linear, ParamStore, Tensor, Var};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::chunk::SentenceChunk;
use crate::error::{contract, DefenseError, Result};
use crate::grid::{EntityExtractor, NUM_TRANSITIONS};
use crate::triplets::CoherenceTriplet;

pub const CHECKPOINT_VERSION: u32 = 1;
pub const MIN_TRAINING_TRIPLETS: usize = 500;

/// `max(0, 1 − f(s_i, s_next) + f(s_i, s'))`.
pub fn hinge_loss(positive: f64, negative: f64) -> f64 {
    (1.0 - positive + negative).max(0.0)
}

/// Turns a `(former, latter)` chunk pair into one feature row:
/// `ln(1 + transition counts)` followed by `[u, v, u⊙v, u−v]`.
#[derive(Clone, Debug)]
pub struct PairFeaturizer {
    extractor: EntityExtractor,
    table: Arc<WordVectorTable>,
}

impl PairFeaturizer {
    pub fn new(table: Arc<WordVectorTable>, lex: &Lexicons) -> Self {
        Self { extractor: EntityExtractor::new(lex), table }
    }

    pub fn extractor(&self) -> &EntityExtractor {
        &self.extractor
    }

    pub fn word_dim(&self) -> usize {
        self.table.dim()
    }

    pub fn row_dim(&self) -> usize {
        NUM_TRANSITIONS + 4 * self.word_dim()
    }

    pub fn features(&self, former: &SentenceChunk, latter: &SentenceChunk) -> Vec<f64> {
        let grid = self.extractor.grid(former, latter);
        let mut row: Vec<f64> = grid.transitions().iter().map(|&c| (c as f64).ln_1p()).collect();
        let u = self.table.embed_sentence(&former.text());
        let v = self.table.embed_sentence(&latter.text());
        let (u, v) = (u.values(), v.values());
        row.extend_from_slice(u);
        row.extend_from_slice(v);
        row.extend(u.iter().zip(v).map(|(a, b)| a * b));
        row.extend(u.iter().zip(v).map(|(a, b)| a - b));
        row
    }

    /// `(positive row, negative row)` for each triplet.
    pub fn encode(&self, triplets: &[CoherenceTriplet]) -> Vec<EncodedTriplet> {
        triplets
            .iter()
            .map(|t| {
                let (a, b) = t.positive_pair();
                let (c, d) = t.negative_pair();
                EncodedTriplet { positive: self.features(a, b), negative: self.features(c, d) }
            })
            .collect()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EncodedTriplet {
    pub positive: Vec<f64>,
    pub negative: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CoherenceConfig {
    pub grid_hidden: usize,
    pub hidden: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout: f64,
    pub seed: u64,
}

impl Default for CoherenceConfig {
    fn default() -> Self {
        Self { grid_hidden: 8, hidden: 32, epochs: 15, batch_size: 32, learning_rate: 0.003, holdout: 0.1, seed: 41 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    grid: Linear,
    semantic: Linear,
    head: FeedForward,
}

#[derive(Clone, Debug)]
pub struct CoherenceModel {
    config: CoherenceConfig,
    featurizer: PairFeaturizer,
    layers: Layers,
    store: ParamStore,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: CoherenceConfig,
    word_dim: usize,
    manifest: Vec<(String, usize, usize)>,
    layers: Layers,
    params: ParamStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceReport {
    pub train_triplets: usize,
    pub test_triplets: usize,
    /// Mean hinge loss per epoch.
    pub curve: Vec<f64>,
    pub train_accuracy: f64,
    pub held_out_accuracy: f64,
}

impl CoherenceModel {
    pub fn new(featurizer: PairFeaturizer, config: CoherenceConfig) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let d = featurizer.word_dim();
        let layers = Layers {
            grid: Linear::new(&mut store, &mut init, "coherence.grid", NUM_TRANSITIONS, config.grid_hidden),
            semantic: Linear::new(&mut store, &mut init, "coherence.semantic", 4 * d, config.hidden),
            head: FeedForward::new(
                &mut store,
                &mut init,
                "coherence.head",
                &[config.grid_hidden + config.hidden, config.hidden, 1],
                Activation::Tanh,
                Activation::Identity,
            ),
        };
        Self { config, featurizer, layers, store }
    }

    pub fn config(&self) -> &CoherenceConfig {
        &self.config
    }

    pub fn featurizer(&self) -> &PairFeaturizer {
        &self.featurizer
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Scores every row of a `B × row_dim` input; returns `B × 1`.
    pub fn forward(&self, g: &mut Graph<'_>, rows: Var) -> Var {
        let d = self.featurizer.word_dim();
        let grid_in = g.slice_cols(rows, 0, NUM_TRANSITIONS);
        let sem_in = g.slice_cols(rows, NUM_TRANSITIONS, 4 * d);
        let gh = self.layers.grid.forward(g, grid_in);
        let gh = g.tanh(gh);
        let sh = self.layers.semantic.forward(g, sem_in);
        let sh = g.tanh(sh);
        let h = g.concat_cols(&[gh, sh]);
        self.layers.head.forward(g, h)
    }

    /// Mean hinge loss over a batch of encoded triplets.
    pub fn batch_loss(&self, g: &mut Graph<'_>, batch: &[&EncodedTriplet]) -> Var {
        let dim = self.featurizer.row_dim();
        let pos = Tensor::from_rows(&batch.iter().map(|t| t.positive.clone()).collect::<Vec<_>>(), dim);
        let neg = Tensor::from_rows(&batch.iter().map(|t| t.negative.clone()).collect::<Vec<_>>(), dim);
        let pos = g.input(pos);
        let neg = g.input(neg);
        let fp = self.forward(g, pos);
        let fn_ = self.forward(g, neg);
        let d = g.sub(fn_, fp);
        let d = g.add_const(d, 1.0);
        let h = g.relu(d);
        g.mean(h)
    }

    pub fn score_row(&self, row: &[f64]) -> f64 {
        let mut g = Graph::with_params(&self.store);
        let x = g.input(Tensor::row_vector(row.to_vec()));
        let s = self.forward(&mut g, x);
        g.scalar(s)
    }

    /// Coherence of `latter` following `former`; higher is more coherent.
    pub fn score(&self, former: &SentenceChunk, latter: &SentenceChunk) -> f64 {
        self.score_row(&self.featurizer.features(former, latter))
    }

    /// Fraction of triplets whose positive pair outscores the negative.
    pub fn pairwise_accuracy(&self, encoded: &[EncodedTriplet]) -> f64 {
        if encoded.is_empty() {
            return 0.0;
        }
        let right = encoded.iter().filter(|t| self.score_row(&t.positive) > self.score_row(&t.negative)).count();
        right as f64 / encoded.len() as f64
    }

    /// Minibatch Adam over `encoded` for `epochs` passes; returns the mean
    /// loss of each epoch.
    pub fn fit(&mut self, encoded: &[EncodedTriplet], epochs: usize) -> Result<Vec<f64>> {
        if encoded.is_empty() {
            return Err(contract("no triplets to fit"));
        }
        let mut adam = Adam::new(&self.store, AdamConfig::with_learning_rate(self.config.learning_rate));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..encoded.len()).collect();
        let mut curve = Vec::with_capacity(epochs);
        for epoch in 0..epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size.max(1)) {
                let batch: Vec<&EncodedTriplet> = chunk.iter().map(|&i| &encoded[i]).collect();
                let (loss, grads) = {
                    let mut g = Graph::with_params(&self.store);
                    let l = self.batch_loss(&mut g, &batch);
                    let grads = g.backward(l);
                    (g.scalar(l), g.param_grads(&grads))
                };
                if !loss.is_finite() {
                    return Err(DefenseError::Training(format!("non-finite coherence loss in epoch {epoch}")));
                }
                total += loss * batch.len() as f64;
                adam.step(&mut self.store, &grads);
            }
            let mean = total / encoded.len() as f64;
            log::debug!("coherence epoch {epoch}: loss {mean:.4}");
            curve.push(mean);
        }
        Ok(curve)
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            word_dim: self.featurizer.word_dim(),
            manifest: self.store.shape_manifest(),
            layers: self.layers.clone(),
            params: self.store.clone(),
        })
        .map_err(|e| DefenseError::Checkpoint(e.to_string()))
    }

    pub fn from_json(s: &str, featurizer: PairFeaturizer) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s).map_err(|e| DefenseError::Checkpoint(e.to_string()))?;
        if c.version != CHECKPOINT_VERSION {
            return Err(DefenseError::Checkpoint(format!("coherence checkpoint version {}", c.version)));
        }
        if c.word_dim != featurizer.word_dim() {
            return Err(DefenseError::Checkpoint(format!("checkpoint expects {}-d word vectors", c.word_dim)));
        }
        let fresh = Self::new(featurizer.clone(), c.config.clone());
        if fresh.store.shape_manifest() != c.manifest || c.params.shape_manifest() != c.manifest {
            return Err(DefenseError::Checkpoint("coherence parameter shapes disagree with manifest".into()));
        }
        Ok(Self { config: c.config, featurizer, layers: c.layers, store: c.params })
    }
}

pub struct TrainedCoherence {
    pub model: CoherenceModel,
    pub report: CoherenceReport,
}

/// Seeded split, fit on the training part and report held-out pairwise
/// accuracy.
pub fn train_coherence(triplets: &[CoherenceTriplet], featurizer: PairFeaturizer, config: CoherenceConfig) -> Result<TrainedCoherence> {
    if triplets.len() < MIN_TRAINING_TRIPLETS {
        return Err(contract(format!("need at least {MIN_TRAINING_TRIPLETS} triplets, got {}", triplets.len())));
    }
    let encoded = featurizer.encode(triplets);
    let mut order: Vec<usize> = (0..encoded.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_test = ((encoded.len() as f64) * config.holdout).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    let train: Vec<EncodedTriplet> = train_idx.iter().map(|&i| encoded[i].clone()).collect();
    let test: Vec<EncodedTriplet> = test_idx.iter().map(|&i| encoded[i].clone()).collect();
    let mut model = CoherenceModel::new(featurizer, config.clone());
    let curve = model.fit(&train, config.epochs)?;
    let report = CoherenceReport {
        train_triplets: train.len(),
        test_triplets: test.len(),
        curve,
        train_accuracy: model.pairwise_accuracy(&train),
        held_out_accuracy: model.pairwise_accuracy(&test),
    };
    log::info!("coherence model: held-out pairwise accuracy {:.4}", report.held_out_accuracy);
    Ok(TrainedCoherence { model, report })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::triplets::build_triplets;
    use mawseo_core::vocab::fixture_word_vectors;
    use mawseo_core::{synth_corpus, VocabularySpec};
    use mawseo_nn::gradcheck::check_gradients;

    fn featurizer() -> PairFeaturizer {
        PairFeaturizer::new(Arc::new(fixture_word_vectors()), &Lexicons::default())
    }

    #[test]
    fn hinge_cases() {
        assert_eq!(hinge_loss(2.0, 0.5), 0.0);
        assert!((hinge_loss(0.2, 0.5) - 1.3).abs() < 1e-12);
    }

    #[test]
    fn gradient_check_on_two_triplets() {
        let corpus = synth_corpus(2, 30, &VocabularySpec::default());
        let f = featurizer();
        let enc = f.encode(&build_triplets(&corpus, 2, 3).unwrap());
        let model = CoherenceModel::new(f, CoherenceConfig { grid_hidden: 3, hidden: 4, ..CoherenceConfig::default() });
        let batch: Vec<&EncodedTriplet> = enc.iter().collect();
        let report = check_gradients(model.store(), 1e-6, |g| model.batch_loss(g, &batch));
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn overfits_five_triplets() {
        let corpus = synth_corpus(2, 30, &VocabularySpec::default());
        let f = featurizer();
        let ts = build_triplets(&corpus, 5, 8).unwrap();
        let enc = f.encode(&ts);
        let mut model = CoherenceModel::new(f, CoherenceConfig { batch_size: 5, learning_rate: 0.01, ..CoherenceConfig::default() });
        let curve = model.fit(&enc, 200).unwrap();
        assert!(curve.last().unwrap() < &1e-3, "{:?}", &curve[curve.len() - 3..]);
        for t in &ts {
            let (a, b) = t.positive_pair();
            let (c, d) = t.negative_pair();
            assert!(model.score(a, b) > model.score(c, d));
        }
    }

    #[test]
    fn deterministic_scores_and_checkpoint() {
        let f = featurizer();
        let model = CoherenceModel::new(f.clone(), CoherenceConfig::default());
        let a = SentenceChunk::from_text("The dosage of Zorvane treats the infection.", crate::chunk::ChunkOrigin::Last);
        let s = model.score(&a, &a);
        assert!(s.is_finite());
        assert_eq!(s, model.score(&a, &a));
        let b = CoherenceModel::from_json(&model.to_json().unwrap(), f).unwrap();
        assert_eq!(b.score(&a, &a), s);
        assert!(train_coherence(&[], featurizer(), CoherenceConfig::default()).is_err());
    }
}
