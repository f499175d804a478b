//! Substitute vandalism detector distilled from the victim's verdicts.
//!
//! The inserted paragraph's token rows are projected, passed through a
//! residual self-attention layer and matched against the article by
//! cross-attention. Matching features are pooled and combined with three
//! paragraph-level statistics in a two-way softmax head: `(d_true,
//! d_false)`, where `d_true` is the probability of a damaging edit.
//!
//! Training data comes from [`synthesize_revisions`], which only uses the
//! public lexicons, the raw pool and the victim's `detect` operation.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mawseo_core::text::tokenize;
use mawseo_core::{apply_revision, binary_report, cosine, lead_paragraph, Article, BinaryReport, Corpus, Lexicons, Paragraph, VandalismDetector};
use mawseo_nn::{Activation, Adam, AdamConfig, AttentionBlock, FeedForward, Graph, Init, Linear, ParamStore, Tensor, Var};

use crate::error::{contract, AttackError, Result};
use crate::features::{to_matrix, TokenFeatures};
use crate::injection::{heuristic_label, inject, InjectionInputs};

pub const CHECKPOINT_VERSION: u32 = 1;
/// Extra per-token columns after the shared token features: clipped
/// length, blocklist hit, out of vocabulary.
pub const DETECTOR_EXTRA: usize = 3;
/// Paragraph statistics: log length, repeated-token ratio, lead cosine.
pub const GLOBAL_FEATURES: usize = 3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DetectorConfig {
    pub hidden_dim: usize,
    /// Article tokens seen by the cross-attention.
    pub max_article_tokens: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for DetectorConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 16,
            max_article_tokens: 96,
            epochs: 10,
            batch_size: 16,
            learning_rate: 0.005,
            holdout_fraction: 0.2,
            seed: 31,
        }
    }
}

/// Token rows and statistics describing one inserted paragraph.
#[derive(Clone, Debug, PartialEq)]
pub struct ParagraphInput {
    pub rows: Tensor,
    pub globals: [f64; GLOBAL_FEATURES],
}

/// Everything the detector reads for one revision.
#[derive(Clone, Debug)]
pub struct DetectorExample {
    pub paragraph: ParagraphInput,
    pub article: Arc<Tensor>,
    /// Victim verdict: damaging.
    pub label: bool,
}

/// Builds detector inputs from text. Holds the word table and the public
/// blocklist.
#[derive(Clone, Debug)]
pub struct DetectorEncoder {
    features: TokenFeatures,
    blocklist: BTreeSet<String>,
}

impl DetectorEncoder {
    pub fn new(features: TokenFeatures, lexicons: &Lexicons) -> Self {
        Self { features, blocklist: lexicons.blocklist.clone() }
    }

    pub fn row_dim(&self) -> usize {
        self.features.dim() + DETECTOR_EXTRA
    }

    pub fn features(&self) -> &TokenFeatures {
        &self.features
    }

    fn rows(&self, text: &str) -> Tensor {
        let mut rows = self.features.text_rows(text);
        for (row, tok) in rows.iter_mut().zip(tokenize(text)) {
            row.push(tok.chars().count().min(20) as f64 / 10.0);
            row.push(if self.blocklist.contains(&tok) { 1.0 } else { 0.0 });
            row.push(if self.features.table().contains(&tok) { 0.0 } else { 1.0 });
        }
        to_matrix(&rows, self.row_dim())
    }

    /// `paragraph` as an insertion into an article whose lead is `lead`.
    pub fn paragraph(&self, paragraph: &str, lead: &str) -> ParagraphInput {
        let tokens = tokenize(paragraph);
        let n = tokens.len();
        let unique: BTreeSet<&String> = tokens.iter().collect();
        let repeated = if n == 0 { 0.0 } else { 1.0 - unique.len() as f64 / n as f64 };
        let table = self.features.table();
        let sim = cosine(table.embed_tokens(&tokens).values(), table.embed_sentence(lead).values());
        ParagraphInput { rows: self.rows(paragraph), globals: [((n + 1) as f64).ln() / 5.0, repeated, sim] }
    }

    /// Token rows of the article before the edit, truncated.
    pub fn article(&self, a: &Article, cap: usize) -> Tensor {
        let text: Vec<&str> = a.paragraphs.iter().map(Paragraph::text).collect();
        let rows = self.rows(&text.join(" "));
        let n = rows.rows().min(cap);
        Tensor::from_vec(n, rows.cols(), rows.data()[..n * rows.cols()].to_vec())
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    project: Linear,
    self_attention: AttentionBlock,
    cross_attention: AttentionBlock,
    compare: Linear,
    head: FeedForward,
}

#[derive(Clone, Debug)]
pub struct SubstituteDetector {
    config: DetectorConfig,
    row_dim: usize,
    store: ParamStore,
    layers: Layers,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: DetectorConfig,
    row_dim: usize,
    manifest: Vec<(String, usize, usize)>,
    layers: Layers,
    params: ParamStore,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorReport {
    pub train_size: usize,
    pub test_size: usize,
    pub damaging_fraction: f64,
    pub held_out: BinaryReport,
}

pub struct TrainedDetector {
    pub model: SubstituteDetector,
    pub report: DetectorReport,
    /// Held-out damaging probabilities, in example order.
    pub held_out_probabilities: Vec<f64>,
}

impl SubstituteDetector {
    pub fn new(row_dim: usize, config: DetectorConfig) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let h = config.hidden_dim;
        let project = Linear::new(&mut store, &mut init, "detector.project", row_dim, h);
        let self_attention = AttentionBlock::new(&mut store, &mut init, "detector.self", h, h, h);
        let cross_attention = AttentionBlock::new(&mut store, &mut init, "detector.cross", h, h, h);
        let compare = Linear::new(&mut store, &mut init, "detector.compare", 4 * h, h);
        let head = FeedForward::new(
            &mut store,
            &mut init,
            "detector.head",
            &[2 * h + GLOBAL_FEATURES, h, 2],
            Activation::Tanh,
            Activation::Identity,
        );
        Self { config, row_dim, store, layers: Layers { project, self_attention, cross_attention, compare, head } }
    }

    pub fn config(&self) -> &DetectorConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn row_dim(&self) -> usize {
        self.row_dim
    }

    /// `1×2` probabilities `(d_true, d_false)` on the tape. `rows` and
    /// `globals` may be differentiable mixtures.
    pub fn probabilities_var(&self, g: &mut Graph<'_>, rows: Var, globals: Var, article: &Tensor) -> Var {
        let l = &self.layers;
        let x = l.project.forward(g, rows);
        let x = g.tanh(x);
        let att = l.self_attention.forward(g, x, x);
        let s = g.add(x, att);
        let a_in = g.input(article.clone());
        let a = l.project.forward(g, a_in);
        let a = g.tanh(a);
        let m = l.cross_attention.forward(g, s, a);
        let diff = g.sub(s, m);
        let prod = g.mul(s, m);
        let cat = g.concat_cols(&[s, m, diff, prod]);
        let c = l.compare.forward(g, cat);
        let c = g.tanh(c);
        let mean = g.mean_rows(c);
        let ct = g.transpose(c);
        let mx = g.max_cols(ct);
        let mx = g.transpose(mx);
        let feats = g.concat_cols(&[mean, mx, globals]);
        let logits = l.head.forward(g, feats);
        g.softmax_rows(logits)
    }

    /// `(d_true, d_false)`.
    pub fn probabilities(&self, p: &ParagraphInput, article: &Tensor) -> (f64, f64) {
        let mut g = Graph::with_params(&self.store);
        let rows = g.input(p.rows.clone());
        let gl = g.input(Tensor::row_vector(p.globals.to_vec()));
        let out = self.probabilities_var(&mut g, rows, gl, article);
        let v = g.value(out);
        (v.get(0, 0), v.get(0, 1))
    }

    pub fn damaging_probability(&self, ex: &DetectorExample) -> f64 {
        self.probabilities(&ex.paragraph, &ex.article).0
    }

    /// Summed cross-entropy against the victim labels.
    pub fn batch_loss(&self, g: &mut Graph<'_>, batch: &[&DetectorExample]) -> Var {
        let terms: Vec<Var> = batch
            .iter()
            .map(|ex| {
                let rows = g.input(ex.paragraph.rows.clone());
                let gl = g.input(Tensor::row_vector(ex.paragraph.globals.to_vec()));
                let p = self.probabilities_var(g, rows, gl, &ex.article);
                let p = g.clamp(p, 1e-12, 1.0);
                let lp = g.log(p);
                let col = if ex.label { 0 } else { 1 };
                let pick = g.slice_cols(lp, col, 1);
                g.neg(pick)
            })
            .collect();
        let all = g.concat_rows(&terms);
        g.sum(all)
    }

    pub fn fit(&mut self, examples: &[DetectorExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(AttackError::Training("no detector examples".into()));
        }
        let mut adam = Adam::new(&self.store, AdamConfig::with_learning_rate(self.config.learning_rate));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0xde7);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut last = f64::NAN;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size.max(1)) {
                let batch: Vec<&DetectorExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let (loss, mut grads) = {
                    let mut g = Graph::with_params(&self.store);
                    let l = self.batch_loss(&mut g, &batch);
                    let gr = g.backward(l);
                    (g.scalar(l), g.param_grads(&gr))
                };
                if !loss.is_finite() {
                    return Err(AttackError::Numeric(format!("detector loss diverged in epoch {epoch}")));
                }
                total += loss;
                mawseo_nn::optim::scale_grads(&mut grads, 1.0 / batch.len() as f64);
                adam.step(&mut self.store, &grads);
            }
            last = total / examples.len() as f64;
            log::debug!("detector epoch {epoch}: cross-entropy {last:.4}");
        }
        Ok(last)
    }

    pub fn evaluate(&self, examples: &[DetectorExample]) -> BinaryReport {
        let pred: Vec<bool> = examples.iter().map(|e| self.damaging_probability(e) >= 0.5).collect();
        let truth: Vec<bool> = examples.iter().map(|e| e.label).collect();
        binary_report(&pred, &truth)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            row_dim: self.row_dim,
            manifest: self.store.shape_manifest(),
            layers: self.layers.clone(),
            params: self.store.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(AttackError::Checkpoint(format!("detector checkpoint version {}", c.version)));
        }
        let fresh = Self::new(c.row_dim, c.config.clone());
        if fresh.store.shape_manifest() != c.manifest || c.params.shape_manifest() != c.manifest {
            return Err(AttackError::Checkpoint("detector parameter shapes disagree with manifest".into()));
        }
        Ok(Self { config: c.config, row_dim: c.row_dim, store: c.params, layers: c.layers })
    }
}

/// How a synthesized revision's paragraph was made.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum RevisionSource {
    /// A raw pool paragraph, unchanged.
    Pool,
    /// The pool paragraph closest to the article's lead among a few draws.
    NearPool,
    /// A copy of one of the article's own body paragraphs.
    OwnParagraph,
    Shouting,
    Blocklist,
    Repetition,
    Gibberish,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SynthesizedRevision {
    pub article_id: String,
    pub insertion_index: usize,
    pub paragraph: String,
    pub source: RevisionSource,
    pub promo_injected: bool,
    pub damaging: bool,
}

fn random_word(rng: &mut ChaCha8Rng) -> String {
    let len = if rng.random_bool(0.2) { rng.random_range(12..=22) } else { rng.random_range(3..=8) };
    (0..len).map(|_| rng.random_range(b'a'..=b'z') as char).collect()
}

fn gibberish(rng: &mut ChaCha8Rng) -> String {
    let mut sentences = Vec::new();
    for _ in 0..rng.random_range(2..=4) {
        let mut s = (0..rng.random_range(5..=11)).map(|_| random_word(rng)).collect::<Vec<_>>().join(" ");
        s[..1].make_ascii_uppercase();
        s.push('.');
        sentences.push(s);
    }
    sentences.join(" ")
}

fn sprinkle(text: &str, words: &[&String], rng: &mut ChaCha8Rng) -> String {
    let mut parts: Vec<String> = text.split(' ').map(str::to_string).collect();
    for _ in 0..rng.random_range(1..=5) {
        let i = rng.random_range(0..parts.len());
        parts[i] = words.choose(rng).map(|w| w.to_string()).unwrap_or_default();
    }
    parts.join(" ")
}

/// Builds `n` single-paragraph revisions of random corpus articles and
/// labels each with the victim detector's verdict.
pub fn synthesize_revisions(
    corpus: &Corpus,
    lexicons: &Lexicons,
    promos: &[String],
    victim: &dyn VandalismDetector,
    n: usize,
    seed: u64,
) -> Result<Vec<SynthesizedRevision>> {
    let articles: Vec<&Article> = corpus.articles().filter(|a| a.paragraphs.len() >= 2).collect();
    let pool = corpus.raw_paragraphs();
    if articles.is_empty() || pool.is_empty() {
        return Err(contract("revision synthesis needs articles with two paragraphs and a raw pool"));
    }
    let blocklist: Vec<&String> = lexicons.blocklist.iter().collect();
    let table_free_sim = |a: &str, b: &str| -> f64 {
        // token overlap keeps the synthesizer independent of word vectors
        let x: BTreeSet<String> = tokenize(a).into_iter().collect();
        let y: BTreeSet<String> = tokenize(b).into_iter().collect();
        x.intersection(&y).count() as f64 / (x.len() + y.len()).max(1) as f64
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::with_capacity(n);
    while out.len() < n {
        let a = *articles.choose(&mut rng).expect("non-empty");
        let draw_pool = |rng: &mut ChaCha8Rng| pool[rng.random_range(0..pool.len())].paragraph.text().to_string();
        let source = *[
            RevisionSource::Pool,
            RevisionSource::NearPool,
            RevisionSource::NearPool,
            RevisionSource::OwnParagraph,
            RevisionSource::OwnParagraph,
            RevisionSource::Shouting,
            RevisionSource::Blocklist,
            RevisionSource::Repetition,
            RevisionSource::Gibberish,
        ]
        .choose(&mut rng)
        .expect("non-empty");
        let own = |rng: &mut ChaCha8Rng| a.paragraphs[rng.random_range(1..a.paragraphs.len())].text().to_string();
        let near = |rng: &mut ChaCha8Rng| {
            let lead = lead_paragraph(a).text();
            (0..12)
                .map(|_| draw_pool(rng))
                .max_by(|x, y| table_free_sim(x, lead).total_cmp(&table_free_sim(y, lead)))
                .expect("draws")
        };
        let mut text = match source {
            RevisionSource::Pool => draw_pool(&mut rng),
            RevisionSource::NearPool => near(&mut rng),
            RevisionSource::OwnParagraph => own(&mut rng),
            RevisionSource::Shouting => own(&mut rng).to_uppercase(),
            RevisionSource::Blocklist => sprinkle(&own(&mut rng), &blocklist, &mut rng),
            RevisionSource::Repetition => {
                let tokens = tokenize(&a.title);
                let phrase = if tokens.is_empty() { "buy".to_string() } else { tokens.join(" ") };
                format!("{}.", vec![phrase; rng.random_range(5..=14)].join(" "))
            }
            RevisionSource::Gibberish => gibberish(&mut rng),
        };
        let mut promo_injected = false;
        if !promos.is_empty() && rng.random_bool(0.4) {
            let promo = promos.choose(&mut rng).expect("non-empty");
            if let Ok(p) = Paragraph::new(text.clone()) {
                let inputs = InjectionInputs::new(p, promo, &a.title)?;
                let tags = heuristic_label(&inputs, lexicons);
                if let Ok(done) = inject(&inputs, &tags, rng.random()) {
                    text = done.text().to_string();
                    promo_injected = true;
                }
            }
        }
        let Ok(paragraph) = Paragraph::new(text) else { continue };
        if paragraph.tokens().is_empty() {
            continue;
        }
        let index = rng.random_range(0..a.paragraphs.len());
        let revised = apply_revision(a, &paragraph, index)?;
        let verdict = victim.detect(a, &revised)?;
        out.push(SynthesizedRevision {
            article_id: a.id.clone(),
            insertion_index: index,
            paragraph: paragraph.text().to_string(),
            source,
            promo_injected,
            damaging: verdict.damaging,
        });
    }
    Ok(out)
}

/// Encodes revisions for training, sharing article rows between revisions
/// of the same article.
pub fn encode_revisions(
    encoder: &DetectorEncoder,
    corpus: &Corpus,
    revisions: &[SynthesizedRevision],
    config: &DetectorConfig,
) -> Result<Vec<DetectorExample>> {
    let mut articles: BTreeMap<&str, Arc<Tensor>> = BTreeMap::new();
    let mut out = Vec::with_capacity(revisions.len());
    for r in revisions {
        let a = corpus.article(&r.article_id)?;
        let rows = articles
            .entry(r.article_id.as_str())
            .or_insert_with(|| Arc::new(encoder.article(a, config.max_article_tokens)))
            .clone();
        out.push(DetectorExample {
            paragraph: encoder.paragraph(&r.paragraph, lead_paragraph(a).text()),
            article: rows,
            label: r.damaging,
        });
    }
    Ok(out)
}

/// Holds out the last fraction of a seeded shuffle, trains on the rest.
pub fn train_substitute_detector(examples: &[DetectorExample], row_dim: usize, config: DetectorConfig) -> Result<TrainedDetector> {
    let positives = examples.iter().filter(|e| e.label).count();
    if positives == 0 || positives == examples.len() {
        return Err(AttackError::Training("detector training data has a single class".into()));
    }
    let mut order: Vec<usize> = (0..examples.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x5917));
    let n_test = ((examples.len() as f64) * config.holdout_fraction).round() as usize;
    let (test_idx, train_idx) = order.split_at(n_test);
    let train: Vec<DetectorExample> = train_idx.iter().map(|&i| examples[i].clone()).collect();
    let test: Vec<DetectorExample> = test_idx.iter().map(|&i| examples[i].clone()).collect();
    let mut model = SubstituteDetector::new(row_dim, config);
    model.fit(&train)?;
    let report = DetectorReport {
        train_size: train.len(),
        test_size: test.len(),
        damaging_fraction: positives as f64 / examples.len() as f64,
        held_out: model.evaluate(&test),
    };
    let held_out_probabilities = test.iter().map(|e| model.damaging_probability(e)).collect();
    Ok(TrainedDetector { model, report, held_out_probabilities })
}

#[cfg(test)]
mod tests {
    use super::*;
    use mawseo_nn::check_gradients_sampled;

    fn rand_rows(r: usize, c: usize, seed: u64) -> Tensor {
        Init::new(seed).uniform(r, c, 1.0)
    }

    fn ex(seed: u64, label: bool) -> DetectorExample {
        DetectorExample {
            paragraph: ParagraphInput { rows: rand_rows(4, 5, seed), globals: [0.3, 0.1, seed as f64 / 10.0] },
            article: Arc::new(rand_rows(6, 5, seed + 100)),
            label,
        }
    }

    fn small() -> SubstituteDetector {
        SubstituteDetector::new(5, DetectorConfig { hidden_dim: 3, ..DetectorConfig::default() })
    }

    #[test]
    fn gradients_match_finite_differences_on_two_examples() {
        let model = small();
        let batch = [ex(1, true), ex(2, false)];
        let refs: Vec<&DetectorExample> = batch.iter().collect();
        let report = check_gradients_sampled(model.store(), 1e-6, 12, |g| model.batch_loss(g, &refs));
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn probabilities_sum_to_one() {
        let model = small();
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for i in 0..1000 {
            let n = rng.random_range(1..8);
            let m = rng.random_range(1..8);
            let p = ParagraphInput {
                rows: Init::new(i).uniform(n, 5, 3.0),
                globals: [rng.random_range(-2.0..2.0), rng.random_range(0.0..1.0), rng.random_range(-1.0..1.0)],
            };
            let (t, f) = model.probabilities(&p, &Init::new(i + 7).uniform(m, 5, 3.0));
            assert!(t > 0.0 && f > 0.0 && t < 1.0 && f < 1.0);
            assert!((t + f - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn single_class_is_a_training_error() {
        let data: Vec<DetectorExample> = (0..10).map(|i| ex(i, true)).collect();
        assert!(matches!(train_substitute_detector(&data, 5, DetectorConfig::default()), Err(AttackError::Training(_))));
    }

    #[test]
    fn learns_a_separable_toy_problem_and_round_trips() {
        // damaging iff the lead-cosine statistic is negative; token rows repeat
        // so they carry no label information
        let data: Vec<DetectorExample> = (0..80)
            .map(|i| {
                let mut e = ex(i % 4, i % 2 == 0);
                e.paragraph.globals[2] = if i % 2 == 0 { -0.8 } else { 0.8 };
                e
            })
            .collect();
        let cfg = DetectorConfig { hidden_dim: 4, epochs: 30, ..DetectorConfig::default() };
        let trained = train_substitute_detector(&data, 5, cfg).unwrap();
        assert!(trained.report.held_out.f1 > 0.95, "{:?}", trained.report);
        let back = SubstituteDetector::from_json(&trained.model.to_json().unwrap()).unwrap();
        assert_eq!(back.damaging_probability(&data[3]), trained.model.damaging_probability(&data[3]));
    }
}
