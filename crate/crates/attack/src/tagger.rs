//! Attention-augmented BiLSTM-CRF tagger for revision entities.
//!
//! Paragraph tokens and the outer tokens (promotional content, then the
//! query) go through one shared BiLSTM. Each paragraph position attends
//! over the outer tokens and over the paragraph itself; the two attended
//! vectors are concatenated with the token encoding and projected to
//! emission scores for a linear-chain CRF.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mawseo_core::embeddings::cosine;
use mawseo_core::{Corpus, Lexicons};
use mawseo_nn::{crf, Adam, AdamConfig, AttentionBlock, BiLstm, Graph, Init, Linear, ParamId, ParamStore, Tensor, Var};

use crate::error::{AttackError, Result};
use crate::features::{to_matrix, TokenFeatures};
use crate::injection::{heuristic_label, InjectionInputs, RevisionEntity, TagSequence};

pub const CHECKPOINT_VERSION: u32 = 1;
const LABELS: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TaggerConfig {
    pub hidden_dim: usize,
    pub attention_dim: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for TaggerConfig {
    fn default() -> Self {
        Self { hidden_dim: 16, attention_dim: 16, epochs: 6, batch_size: 8, learning_rate: 0.01, holdout_fraction: 0.2, seed: 11 }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    encoder: BiLstm,
    outer: AttentionBlock,
    context: AttentionBlock,
    output: Linear,
    transitions: ParamId,
    start: ParamId,
    end: ParamId,
}

/// Network inputs for one paragraph; build once, reuse across epochs.
#[derive(Clone, Debug)]
pub struct EncodedInputs {
    paragraph: Tensor,
    outer: Tensor,
}

impl EncodedInputs {
    pub fn len(&self) -> usize {
        self.paragraph.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.paragraph.rows() == 0
    }
}

/// Token rows plus one extra column: the best cosine between the token's
/// word vector and any outer token (0 on the outer side).
pub fn encode_inputs(features: &TokenFeatures, inputs: &InjectionInputs) -> EncodedInputs {
    let w = features.word_dim();
    let dim = features.dim() + 1;
    let mut outer = features.text_rows(&inputs.outer_text());
    let mut para = features.text_rows(inputs.raw_paragraph.text());
    for row in &mut para {
        let best = outer.iter().map(|o| cosine(&row[..w], &o[..w])).fold(0.0, f64::max);
        row.push(best);
    }
    for row in &mut outer {
        row.push(0.0);
    }
    EncodedInputs { paragraph: to_matrix(&para, dim), outer: to_matrix(&outer, dim) }
}

#[derive(Clone, Debug)]
pub struct TaggerModel {
    config: TaggerConfig,
    store: ParamStore,
    layers: Layers,
    features: TokenFeatures,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: TaggerConfig,
    manifest: Vec<(String, usize, usize)>,
    layers: Layers,
    params: ParamStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaggerReport {
    pub train_size: usize,
    pub test_size: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub token_accuracy: f64,
}

pub struct TrainedTagger {
    pub model: TaggerModel,
    pub report: TaggerReport,
}

impl TaggerModel {
    pub fn new(features: TokenFeatures, config: TaggerConfig) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let input = features.dim() + 1;
        let h = config.hidden_dim;
        let a = config.attention_dim;
        let encoder = BiLstm::new(&mut store, &mut init, "tagger.encoder", input, h);
        let outer = AttentionBlock::new(&mut store, &mut init, "tagger.outer", 2 * h, 2 * h, a);
        let context = AttentionBlock::new(&mut store, &mut init, "tagger.context", 2 * h, 2 * h, a);
        let output = Linear::new(&mut store, &mut init, "tagger.output", 2 * h + 2 * a, LABELS);
        let transitions = store.add("tagger.crf.transitions", init.zeros(LABELS, LABELS));
        let start = store.add("tagger.crf.start", init.zeros(1, LABELS));
        let end = store.add("tagger.crf.end", init.zeros(1, LABELS));
        let layers = Layers { encoder, outer, context, output, transitions, start, end };
        Self { config, store, layers, features }
    }

    pub fn config(&self) -> &TaggerConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn features(&self) -> &TokenFeatures {
        &self.features
    }

    pub fn encode(&self, inputs: &InjectionInputs) -> EncodedInputs {
        encode_inputs(&self.features, inputs)
    }

    fn emissions(&self, g: &mut Graph<'_>, x: &EncodedInputs) -> Var {
        let l = &self.layers;
        let para = g.input(x.paragraph.clone());
        let outer = g.input(x.outer.clone());
        let h = l.encoder.forward(g, para);
        let ho = l.encoder.forward(g, outer);
        let attended_outer = l.outer.forward(g, h, ho);
        let attended_self = l.context.forward(g, h, h);
        let joined = g.concat_cols(&[h, attended_outer, attended_self]);
        l.output.forward(g, joined)
    }

    /// Summed CRF negative log-likelihood over a batch.
    pub fn batch_loss(&self, g: &mut Graph<'_>, batch: &[(EncodedInputs, TagSequence)]) -> Var {
        let trans = g.param(self.layers.transitions);
        let start = g.param(self.layers.start);
        let end = g.param(self.layers.end);
        let losses: Vec<Var> = batch
            .iter()
            .map(|(x, tags)| {
                let e = self.emissions(g, x);
                g.crf_nll(e, trans, start, end, &tags.indices())
            })
            .collect();
        let stacked = g.concat_rows(&losses);
        g.sum(stacked)
    }

    fn emission_values(&self, x: &EncodedInputs) -> Tensor {
        let mut g = Graph::with_params(&self.store);
        let e = self.emissions(&mut g, x);
        g.value(e).clone()
    }

    fn crf_params(&self) -> (&Tensor, &Tensor, &Tensor) {
        (self.store.get(self.layers.transitions), self.store.get(self.layers.start), self.store.get(self.layers.end))
    }

    pub fn tag_encoded(&self, x: &EncodedInputs) -> TagSequence {
        if x.is_empty() {
            return TagSequence::new(Vec::new());
        }
        let e = self.emission_values(x);
        let (t, s, n) = self.crf_params();
        TagSequence::from_indices(&crf::viterbi(&e, t, s, n))
    }

    /// Highest-scoring label sequence under the CRF.
    pub fn tag(&self, inputs: &InjectionInputs) -> TagSequence {
        self.tag_encoded(&self.encode(inputs))
    }

    /// Per-token posterior label distribution (`T × 3`, rows sum to 1), in
    /// [`RevisionEntity::ALL`] order.
    pub fn marginals(&self, inputs: &InjectionInputs) -> Tensor {
        let x = self.encode(inputs);
        let e = self.emission_values(&x);
        let (t, s, n) = self.crf_params();
        crf::marginals(&e, t, s, n).unary
    }

    /// Mini-batch Adam over `examples` for the configured number of epochs.
    /// Returns the mean per-example loss of the last epoch.
    pub fn fit(&mut self, examples: &[(EncodedInputs, TagSequence)]) -> Result<f64> {
        let mut adam = Adam::new(&self.store, AdamConfig::with_learning_rate(self.config.learning_rate));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x7a66);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut last = f64::NAN;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size.max(1)) {
                let batch: Vec<(EncodedInputs, TagSequence)> = chunk.iter().map(|&i| examples[i].clone()).collect();
                let (loss, mut grads) = {
                    let mut g = Graph::with_params(&self.store);
                    let l = self.batch_loss(&mut g, &batch);
                    let gr = g.backward(l);
                    (g.scalar(l), g.param_grads(&gr))
                };
                if !loss.is_finite() {
                    return Err(AttackError::Numeric(format!("tagger loss diverged in epoch {epoch}")));
                }
                total += loss;
                mawseo_nn::optim::scale_grads(&mut grads, 1.0 / batch.len() as f64);
                adam.step(&mut self.store, &grads);
            }
            last = total / examples.len().max(1) as f64;
            log::debug!("tagger epoch {epoch}: mean nll {last:.4}");
        }
        Ok(last)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            manifest: self.store.shape_manifest(),
            layers: self.layers.clone(),
            params: self.store.clone(),
        })?)
    }

    pub fn from_json(s: &str, features: TokenFeatures) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(AttackError::Checkpoint(format!("tagger checkpoint version {}", c.version)));
        }
        if c.manifest != c.params.shape_manifest() {
            return Err(AttackError::Checkpoint("tagger parameter shapes disagree with manifest".into()));
        }
        let expected = Self::new(features.clone(), c.config.clone());
        if expected.store.shape_manifest() != c.manifest {
            return Err(AttackError::Checkpoint("tagger checkpoint does not match its configuration".into()));
        }
        Ok(Self { config: c.config, store: c.params, layers: c.layers, features })
    }
}

/// Token-level micro precision/recall/F1 over the two non-UNSUITABILITY
/// labels, plus plain token accuracy.
pub fn entity_scores(pred: &[TagSequence], gold: &[TagSequence]) -> (f64, f64, f64, f64) {
    let (mut tp, mut pp, mut gp, mut correct, mut total) = (0usize, 0usize, 0usize, 0usize, 0usize);
    for (p, g) in pred.iter().zip(gold) {
        for (&a, &b) in p.as_slice().iter().zip(g.as_slice()) {
            let pa = a != RevisionEntity::Unsuitability;
            let gb = b != RevisionEntity::Unsuitability;
            pp += pa as usize;
            gp += gb as usize;
            tp += (pa && a == b) as usize;
            correct += (a == b) as usize;
            total += 1;
        }
    }
    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let (p, r) = (ratio(tp, pp), ratio(tp, gp));
    let f1 = if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) };
    (p, r, f1, ratio(correct, total))
}

pub fn evaluate_tagger(model: &TaggerModel, examples: &[(EncodedInputs, TagSequence)], train_size: usize) -> TaggerReport {
    let pred: Vec<TagSequence> = examples.iter().map(|(x, _)| model.tag_encoded(x)).collect();
    let gold: Vec<TagSequence> = examples.iter().map(|(_, t)| t.clone()).collect();
    let (precision, recall, f1, token_accuracy) = entity_scores(&pred, &gold);
    TaggerReport { train_size, test_size: examples.len(), precision, recall, f1, token_accuracy }
}

/// Splits `labeled` into train and held-out parts, trains, and scores the
/// held-out part.
pub fn train_tagger(
    labeled: &[(InjectionInputs, TagSequence)],
    features: TokenFeatures,
    config: TaggerConfig,
) -> Result<TrainedTagger> {
    if labeled.len() < 50 {
        return Err(AttackError::Training(format!("tagger needs at least 50 labelled paragraphs, got {}", labeled.len())));
    }
    let present: BTreeSet<RevisionEntity> = labeled.iter().flat_map(|(_, t)| t.as_slice().iter().copied()).collect();
    if present.len() < RevisionEntity::ALL.len() {
        return Err(AttackError::Training(format!("tagger data is missing a label class (present: {present:?})")));
    }
    for (x, t) in labeled {
        if t.len() != x.raw_paragraph.tokens().len() {
            return Err(AttackError::Training("tag sequence length differs from token count".into()));
        }
    }
    let mut order: Vec<usize> = (0..labeled.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let n_test = ((labeled.len() as f64) * config.holdout_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);

    let mut model = TaggerModel::new(features, config);
    let enc = |idx: &[usize]| -> Vec<(EncodedInputs, TagSequence)> {
        idx.iter().map(|&i| (model.encode(&labeled[i].0), labeled[i].1.clone())).collect()
    };
    let (train, test) = (enc(train_idx), enc(test_idx));
    model.fit(&train)?;
    let report = evaluate_tagger(&model, &test, train.len());
    Ok(TrainedTagger { model, report })
}

/// Heuristically labelled tagger data from the raw paragraph pool. Half of
/// the examples use a query that actually occurs in the paragraph, as the
/// attack's pre-filtered pools do.
pub fn build_tagger_dataset(
    corpus: &Corpus,
    queries: &[String],
    promos: &[String],
    lex: &Lexicons,
    n: usize,
    seed: u64,
) -> Result<Vec<(InjectionInputs, TagSequence)>> {
    if queries.is_empty() || promos.is_empty() {
        return Err(AttackError::Contract("tagger dataset needs queries and promotional names".into()));
    }
    let pool = corpus.raw_paragraphs();
    if pool.is_empty() {
        return Err(AttackError::Contract("corpus has no raw paragraph pool".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..pool.len()).collect();
    idx.shuffle(&mut rng);
    let mut out = Vec::with_capacity(n);
    for &i in idx.iter().cycle().take(n) {
        let p = pool[i].paragraph;
        let tokens: BTreeSet<&str> = p.tokens().iter().map(String::as_str).collect();
        let occurring: Vec<&String> =
            queries.iter().filter(|q| mawseo_core::text::tokenize(q).iter().all(|t| tokens.contains(t.as_str()))).collect();
        let query = if !occurring.is_empty() && rng.random_bool(0.5) {
            occurring.choose(&mut rng).copied()
        } else {
            queries.choose(&mut rng)
        }
        .expect("non-empty query list");
        let promo = promos.choose(&mut rng).expect("non-empty promo list");
        let inputs = InjectionInputs::new(p.clone(), promo, query)?;
        let tags = heuristic_label(&inputs, lex);
        out.push((inputs, tags));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use mawseo_core::vocab::fixture_word_vectors;
    use mawseo_core::Paragraph;
    use mawseo_nn::check_gradients_sampled;
    use std::sync::Arc;

    fn features() -> TokenFeatures {
        TokenFeatures::new(Arc::new(fixture_word_vectors()))
    }

    fn example(text: &str, query: &str) -> (InjectionInputs, TagSequence) {
        let i = InjectionInputs::new(Paragraph::new(text).unwrap(), "Vexora Pharmacy", query).unwrap();
        let t = heuristic_label(&i, &Lexicons::default());
        (i, t)
    }

    fn small_config() -> TaggerConfig {
        TaggerConfig { hidden_dim: 3, attention_dim: 3, epochs: 60, batch_size: 5, learning_rate: 0.05, ..TaggerConfig::default() }
    }

    #[test]
    fn gradients_match_finite_differences_on_two_examples() {
        let model = TaggerModel::new(features(), small_config());
        let batch: Vec<(EncodedInputs, TagSequence)> = [
            example("It is sold by Gegrosri Biologics in Kenya.", "talvex"),
            example("Talvex extends the dose.", "talvex"),
        ]
        .iter()
        .map(|(i, t)| (model.encode(i), t.clone()))
        .collect();
        let report = check_gradients_sampled(model.store(), 1e-6, 8, |g| model.batch_loss(g, &batch));
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn overfits_five_examples_and_is_deterministic() {
        let data = [
            example("It is sold by Gegrosri Biologics in Kenya.", "talvex"),
            example("Talvex extends the dose in daily use.", "talvex"),
            example("The drug was first marketed in Japan in 1990.", "nexo"),
            example("Prulisfu Inc has supplied nexo in France since 2001.", "nexo"),
            example("The dose regulates the skin.", "talvex"),
        ];
        let mut model = TaggerModel::new(features(), small_config());
        let enc: Vec<(EncodedInputs, TagSequence)> = data.iter().map(|(i, t)| (model.encode(i), t.clone())).collect();
        model.fit(&enc).unwrap();
        for (i, t) in &data {
            assert_eq!(&model.tag(i), t);
            let m = model.marginals(i);
            for r in 0..m.rows() {
                assert!((m.row(r).iter().sum::<f64>() - 1.0).abs() < 1e-9);
            }
        }
        let again = TaggerModel::from_json(&model.to_json().unwrap(), features()).unwrap();
        for (i, _) in &data {
            assert_eq!(again.tag(i), model.tag(i));
        }
    }

    #[test]
    fn entity_scores_by_hand() {
        use RevisionEntity::*;
        let gold = vec![TagSequence::new(vec![Replacement, Replacement, Insertion, Unsuitability])];
        let pred = vec![TagSequence::new(vec![Replacement, Insertion, Insertion, Insertion])];
        // tp 2, predicted 4, gold 3
        let (p, r, f1, acc) = entity_scores(&pred, &gold);
        assert!((p - 0.5).abs() < 1e-12);
        assert!((r - 2.0 / 3.0).abs() < 1e-12);
        assert!((f1 - 4.0 / 7.0).abs() < 1e-12);
        assert!((acc - 0.5).abs() < 1e-12);
    }

    #[test]
    fn training_rejects_missing_classes_and_small_sets() {
        let one = example("The dose regulates the skin.", "talvex");
        let many: Vec<_> = (0..60).map(|_| one.clone()).collect();
        assert!(matches!(train_tagger(&many, features(), small_config()), Err(AttackError::Training(_))));
        assert!(matches!(train_tagger(&many[..10], features(), small_config()), Err(AttackError::Training(_))));
    }
}
