//! Pointwise substitute ranker distilled from the black-box search engine.
//!
//! Query and document word rows share one BiLSTM. Two interaction
//! matrices (raw word cosines and hidden-state cosines) are pooled per
//! query word; a small head scores each query word and the document score
//! is the sum.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mawseo_core::text::tokenize;
use mawseo_core::{Article, Corpus, SearchEngine, WordVectorTable};
use mawseo_nn::{Activation, Adam, AdamConfig, BiLstm, FeedForward, Graph, Init, ParamStore, Tensor, Var};

use crate::error::{AttackError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;
const ENGINEERED: usize = 7;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RankerConfig {
    pub hidden_dim: usize,
    pub head_hidden: usize,
    pub kmax: usize,
    /// Cosine above which a document word counts as an exact match.
    pub match_threshold: f64,
    pub max_doc_tokens: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Articles sampled per query for distillation.
    pub per_query: usize,
    pub holdout_fraction: f64,
    pub seed: u64,
}

impl Default for RankerConfig {
    fn default() -> Self {
        Self {
            hidden_dim: 8,
            head_hidden: 16,
            kmax: 5,
            match_threshold: 0.95,
            max_doc_tokens: 512,
            epochs: 20,
            batch_size: 16,
            learning_rate: 0.005,
            per_query: 40,
            holdout_fraction: 0.2,
            seed: 29,
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    encoder: BiLstm,
    head: FeedForward,
}

#[derive(Clone, Debug)]
pub struct SubstituteRanker {
    config: RankerConfig,
    word_dim: usize,
    /// Targets are standardised for training: `score = mean + scale * net`.
    target_mean: f64,
    target_scale: f64,
    store: ParamStore,
    layers: Layers,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: RankerConfig,
    word_dim: usize,
    target_mean: f64,
    target_scale: f64,
    manifest: Vec<(String, usize, usize)>,
    layers: Layers,
    params: ParamStore,
}

/// One distillation triple with its inputs pre-built.
#[derive(Clone, Debug)]
pub struct RankExample {
    pub query: String,
    pub article_id: String,
    pub query_rows: Tensor,
    pub doc_rows: Tensor,
    pub target: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankerReport {
    pub train_queries: usize,
    pub test_queries: usize,
    pub train_examples: usize,
    pub test_examples: usize,
    pub train_mse: f64,
    pub test_mse: f64,
    pub ndcg_at_20: f64,
    pub ndcg_at_200: f64,
}

pub struct DistilledRanker {
    pub model: SubstituteRanker,
    pub report: RankerReport,
    pub train_queries: Vec<String>,
    pub test_queries: Vec<String>,
}

pub fn word_rows<S: AsRef<str>>(table: &WordVectorTable, tokens: &[S]) -> Tensor {
    let mut data = Vec::with_capacity(tokens.len() * table.dim());
    for t in tokens {
        data.extend_from_slice(&table.vector(t.as_ref()));
    }
    Tensor::from_vec(tokens.len(), table.dim(), data)
}

/// Word rows of an article, truncated to the first `cap` tokens.
pub fn article_rows(table: &WordVectorTable, a: &Article, cap: usize) -> Tensor {
    let tokens: Vec<&String> = a.tokens().take(cap).collect();
    word_rows(table, &tokens)
}

impl SubstituteRanker {
    pub fn new(word_dim: usize, config: RankerConfig) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let encoder = BiLstm::new(&mut store, &mut init, "ranker.encoder", word_dim, config.hidden_dim);
        let head = FeedForward::new(
            &mut store,
            &mut init,
            "ranker.head",
            &[ENGINEERED + 2 * config.hidden_dim, config.head_hidden, 1],
            Activation::Tanh,
            Activation::Identity,
        );
        // a zero output layer starts every prediction at the target mean
        let last = head.layers.last().expect("head has layers").weight;
        store.get_mut(last).data_mut().iter_mut().for_each(|w| *w = 0.0);
        Self { config, word_dim, target_mean: 0.0, target_scale: 1.0, store, layers: Layers { encoder, head } }
    }

    pub fn config(&self) -> &RankerConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    /// Standardised score of a query against document rows given as a
    /// tape variable, so callers can splice differentiable rows in.
    pub fn raw_score(&self, g: &mut Graph<'_>, query: &Tensor, doc: Var) -> Var {
        let k = self.config.kmax;
        let thr = self.config.match_threshold;
        let n = g.shape(doc).0 as f64;
        let q = g.input(query.clone());
        let hq = self.layers.encoder.forward(g, q);
        let hd = self.layers.encoder.forward(g, doc);

        let c1 = g.cosine_rows(q, doc);
        let c2 = g.cosine_rows(hq, hd);
        let max1 = g.max_cols(c1);
        let kmax1 = g.kmax_mean_cols(c1, k);
        let exact = g.add_const(c1, -thr);
        let exact = g.relu(exact);
        let exact = g.scale(exact, 1.0 / (1.0 - thr));
        let count = g.sum_cols(exact);
        let count = g.add_const(count, 1.0);
        let log_count = g.log(count);
        let max2 = g.max_cols(c2);
        let kmax2 = g.kmax_mean_cols(c2, k);
        let mean2 = g.sum_cols(c2);
        let mean2 = g.scale(mean2, 1.0 / n);
        let m = g.shape(q).0;
        let len = g.input(Tensor::filled(m, 1, (n + 1.0).ln() / 6.0));
        let feats = g.concat_cols(&[max1, kmax1, log_count, max2, kmax2, mean2, len, hq]);
        let per_word = self.layers.head.forward(g, feats);
        g.sum(per_word)
    }

    /// Score in the engine's units.
    pub fn score_var(&self, g: &mut Graph<'_>, query: &Tensor, doc: Var) -> Var {
        let s = self.raw_score(g, query, doc);
        let s = g.scale(s, self.target_scale);
        g.add_const(s, self.target_mean)
    }

    pub fn score_rows(&self, query: &Tensor, doc: &Tensor) -> f64 {
        let mut g = Graph::with_params(&self.store);
        let d = g.input(doc.clone());
        let s = self.score_var(&mut g, query, d);
        g.scalar(s)
    }

    pub fn score_article(&self, table: &WordVectorTable, query: &str, a: &Article) -> f64 {
        let q = word_rows(table, &tokenize(query));
        self.score_rows(&q, &article_rows(table, a, self.config.max_doc_tokens))
    }

    /// Summed squared error in standardised units.
    pub fn batch_loss(&self, g: &mut Graph<'_>, batch: &[&RankExample]) -> Var {
        let errs: Vec<Var> = batch
            .iter()
            .map(|ex| {
                let d = g.input(ex.doc_rows.clone());
                let s = self.raw_score(g, &ex.query_rows, d);
                let t = (ex.target - self.target_mean) / self.target_scale;
                let e = g.add_const(s, -t);
                g.square(e)
            })
            .collect();
        let all = g.concat_rows(&errs);
        g.sum(all)
    }

    pub fn fit(&mut self, examples: &[RankExample]) -> Result<f64> {
        if examples.is_empty() {
            return Err(AttackError::Training("no ranking examples".into()));
        }
        let n = examples.len() as f64;
        self.target_mean = examples.iter().map(|e| e.target).sum::<f64>() / n;
        let var = examples.iter().map(|e| (e.target - self.target_mean).powi(2)).sum::<f64>() / n;
        self.target_scale = if var.sqrt() > 1e-9 { var.sqrt() } else { 1.0 };

        let mut adam = Adam::new(&self.store, AdamConfig::with_learning_rate(self.config.learning_rate));
        let mut rng = ChaCha8Rng::seed_from_u64(self.config.seed ^ 0x5eed);
        let mut order: Vec<usize> = (0..examples.len()).collect();
        let mut last = f64::NAN;
        for epoch in 0..self.config.epochs {
            order.shuffle(&mut rng);
            let mut total = 0.0;
            for chunk in order.chunks(self.config.batch_size.max(1)) {
                let batch: Vec<&RankExample> = chunk.iter().map(|&i| &examples[i]).collect();
                let (loss, mut grads) = {
                    let mut g = Graph::with_params(&self.store);
                    let l = self.batch_loss(&mut g, &batch);
                    let gr = g.backward(l);
                    (g.scalar(l), g.param_grads(&gr))
                };
                if !loss.is_finite() {
                    return Err(AttackError::Numeric(format!("ranker loss diverged in epoch {epoch}")));
                }
                total += loss;
                mawseo_nn::optim::scale_grads(&mut grads, 1.0 / batch.len() as f64);
                adam.step(&mut self.store, &grads);
            }
            last = total / n;
            log::debug!("ranker epoch {epoch}: standardised mse {last:.4}");
        }
        Ok(last)
    }

    /// Mean squared error in engine units.
    pub fn mse(&self, examples: &[RankExample]) -> f64 {
        if examples.is_empty() {
            return 0.0;
        }
        examples.iter().map(|e| (self.score_rows(&e.query_rows, &e.doc_rows) - e.target).powi(2)).sum::<f64>()
            / examples.len() as f64
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            word_dim: self.word_dim,
            target_mean: self.target_mean,
            target_scale: self.target_scale,
            manifest: self.store.shape_manifest(),
            layers: self.layers.clone(),
            params: self.store.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(AttackError::Checkpoint(format!("ranker checkpoint version {}", c.version)));
        }
        let fresh = Self::new(c.word_dim, c.config.clone());
        if fresh.store.shape_manifest() != c.manifest || c.params.shape_manifest() != c.manifest {
            return Err(AttackError::Checkpoint("ranker parameter shapes disagree with manifest".into()));
        }
        Ok(Self {
            config: c.config,
            word_dim: c.word_dim,
            target_mean: c.target_mean,
            target_scale: c.target_scale,
            store: c.params,
            layers: c.layers,
        })
    }
}

/// NDCG@k with log2 discounting and raw scores as gains. Items are ordered
/// by `predicted` descending, ties by position. `None` when no item has a
/// positive gain.
pub fn ndcg_at(truth: &[f64], predicted: &[f64], k: usize) -> Option<f64> {
    let dcg = |order: &[usize]| -> f64 {
        order.iter().take(k).enumerate().map(|(r, &i)| truth[i] / ((r + 2) as f64).log2()).sum()
    };
    let mut by_pred: Vec<usize> = (0..truth.len()).collect();
    by_pred.sort_by(|&a, &b| predicted[b].total_cmp(&predicted[a]).then(a.cmp(&b)));
    let mut ideal: Vec<usize> = (0..truth.len()).collect();
    ideal.sort_by(|&a, &b| truth[b].total_cmp(&truth[a]).then(a.cmp(&b)));
    let best = dcg(&ideal);
    (best > 0.0).then(|| dcg(&by_pred) / best)
}

/// Mean per-query NDCG@k over the examples, grouped by query.
pub fn mean_ndcg(model: &SubstituteRanker, examples: &[RankExample], k: usize) -> f64 {
    let queries: BTreeSet<&str> = examples.iter().map(|e| e.query.as_str()).collect();
    let mut vals = Vec::new();
    for q in queries {
        let group: Vec<&RankExample> = examples.iter().filter(|e| e.query == q).collect();
        let truth: Vec<f64> = group.iter().map(|e| e.target).collect();
        let pred: Vec<f64> = group.iter().map(|e| model.score_rows(&e.query_rows, &e.doc_rows)).collect();
        if let Some(v) = ndcg_at(&truth, &pred, k) {
            vals.push(v);
        }
    }
    if vals.is_empty() {
        0.0
    } else {
        vals.iter().sum::<f64>() / vals.len() as f64
    }
}

/// Queries the engine for each query and samples up to `per_query`
/// articles: the ten best, more scored ones at random, and unscored
/// articles to fill a quarter of the list. Targets come from `score`.
pub fn collect_rank_examples(
    engine: &dyn SearchEngine,
    corpus: &Corpus,
    table: &WordVectorTable,
    queries: &[String],
    config: &RankerConfig,
) -> Result<Vec<RankExample>> {
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let ids: Vec<&str> = corpus.ids().collect();
    let mut out = Vec::new();
    let mut usable = 0;
    for q in queries {
        let results = engine.search(q, engine.num_articles())?;
        let scored: Vec<&str> = results.iter().filter(|r| r.score > 0.0).map(|r| r.article_id.as_str()).collect();
        if scored.len() >= 2 {
            usable += 1;
        }
        let n_zero = config.per_query / 4;
        let n_scored = config.per_query - n_zero;
        let mut pick: Vec<&str> = scored.iter().take(10.min(n_scored)).copied().collect();
        let mut rest: Vec<&str> = scored.iter().skip(pick.len()).copied().collect();
        rest.shuffle(&mut rng);
        pick.extend(rest.into_iter().take(n_scored - pick.len()));
        let scored_set: BTreeSet<&str> = scored.iter().copied().collect();
        let mut zeros = Vec::new();
        let mut tries = 0;
        while zeros.len() < n_zero && tries < 50 * n_zero.max(1) {
            tries += 1;
            let id = *ids.choose(&mut rng).expect("corpus has articles");
            if !scored_set.contains(id) && !zeros.contains(&id) {
                zeros.push(id);
            }
        }
        pick.extend(zeros);
        let q_rows = word_rows(table, &tokenize(q));
        for id in pick {
            let target = engine.score(q, id)?;
            let a = corpus.article(id)?;
            out.push(RankExample {
                query: q.clone(),
                article_id: id.to_string(),
                query_rows: q_rows.clone(),
                doc_rows: article_rows(table, a, config.max_doc_tokens),
                target,
            });
        }
    }
    if usable == 0 {
        return Err(AttackError::Training("no query returned at least two scored results".into()));
    }
    Ok(out)
}

/// Splits queries, collects examples from the engine, trains and reports
/// held-out MSE and NDCG.
pub fn distill_ranker(
    engine: &dyn SearchEngine,
    corpus: &Corpus,
    table: &WordVectorTable,
    queries: &[String],
    config: RankerConfig,
) -> Result<DistilledRanker> {
    let mut qs = queries.to_vec();
    qs.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e));
    let n_test = ((qs.len() as f64) * config.holdout_fraction).round() as usize;
    let test_queries = qs[..n_test].to_vec();
    let train_queries = qs[n_test..].to_vec();
    let train = collect_rank_examples(engine, corpus, table, &train_queries, &config)?;
    let test = if test_queries.is_empty() {
        Vec::new()
    } else {
        collect_rank_examples(engine, corpus, table, &test_queries, &config)?
    };
    let mut model = SubstituteRanker::new(table.dim(), config);
    model.fit(&train)?;
    let report = RankerReport {
        train_queries: train_queries.len(),
        test_queries: test_queries.len(),
        train_examples: train.len(),
        test_examples: test.len(),
        train_mse: model.mse(&train),
        test_mse: model.mse(&test),
        ndcg_at_20: mean_ndcg(&model, &test, 20),
        ndcg_at_200: mean_ndcg(&model, &test, 200),
    };
    Ok(DistilledRanker { model, report, train_queries, test_queries })
}
