//! Twin-tower passage retrieval.
//!
//! The article tower compares the article with each candidate paragraph
//! (`Sim^a`). The query tower multiplies a semantic similarity by a
//! word-density score built from max and k-max pooled word cosines
//! (`Sim^q`). A candidate's relevance is `softmax(Sim^q) + softmax(Sim^a)`.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use mawseo_core::embeddings::cosine;
use mawseo_core::{Article, Paragraph, WordVectorTable};
use mawseo_nn::graph::{softmax_rows, top_k_indices};
use mawseo_nn::{Activation, FeedForward, Graph, Init, ParamStore, Tensor, Var};

use crate::error::{contract, AttackError, Result};

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetrievalConfig {
    pub tower_hidden: usize,
    pub latent_dim: usize,
    pub word_latent_dim: usize,
    /// k of the k-max word pooling.
    pub kmax: usize,
    /// Candidates mixed into the soft training representation.
    pub soft_top_k: usize,
    /// Raw paragraphs kept per query after the word-density pre-filter.
    pub pool_cap: usize,
    pub seed: u64,
}

impl Default for RetrievalConfig {
    fn default() -> Self {
        Self { tower_hidden: 64, latent_dim: 32, word_latent_dim: 32, kmax: 3, soft_top_k: 5, pool_cap: 256, seed: 23 }
    }
}

/// Sentence vector plus word-vector rows of one text.
#[derive(Clone, Debug)]
pub struct TextInput {
    pub sentence: Vec<f64>,
    pub words: Tensor,
}

impl TextInput {
    pub fn from_tokens<S: AsRef<str>>(table: &WordVectorTable, tokens: &[S]) -> Self {
        let sentence = table.embed_tokens(tokens).values().to_vec();
        let mut data = Vec::with_capacity(tokens.len() * table.dim());
        for t in tokens {
            data.extend_from_slice(&table.vector(t.as_ref()));
        }
        Self { sentence, words: Tensor::from_vec(tokens.len(), table.dim(), data) }
    }

    pub fn from_paragraph(table: &WordVectorTable, p: &Paragraph) -> Self {
        Self::from_tokens(table, p.tokens())
    }

    pub fn from_query(table: &WordVectorTable, query: &str) -> Self {
        Self::from_tokens(table, &mawseo_core::text::tokenize(query))
    }

    pub fn len(&self) -> usize {
        self.words.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.words.rows() == 0
    }
}

/// Sentence vector of a whole article.
pub fn article_sentence(table: &WordVectorTable, a: &Article) -> Vec<f64> {
    let tokens: Vec<&String> = a.tokens().collect();
    table.embed_tokens(&tokens).values().to_vec()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SemanticTower {
    pub net: FeedForward,
}

impl SemanticTower {
    fn new(store: &mut ParamStore, init: &mut Init, name: &str, input: usize, hidden: usize, out: usize) -> Self {
        Self { net: FeedForward::new(store, init, name, &[input, hidden, out], Activation::Tanh, Activation::Tanh) }
    }

    pub fn forward(&self, g: &mut Graph<'_>, x: Var) -> Var {
        self.net.forward(g, x)
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TermPoolTower {
    pub semantic: SemanticTower,
    pub word_encoder: FeedForward,
    pub k: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalOutput {
    /// One value per candidate, each in (0, 2), summing to 2.
    pub probabilities: Vec<f64>,
    pub argmax_index: usize,
    /// Training only: normalised top-k weights and the mixed representation.
    pub soft_weights: Option<Vec<(usize, f64)>>,
    pub soft_representation: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq)]
pub struct InsertionChoice {
    /// The new paragraph goes between paragraphs `index` and `index + 1`.
    pub index: usize,
    pub probabilities: Vec<f64>,
}

/// Graph handles produced by one selector forward pass.
#[derive(Clone, Copy, Debug)]
pub struct SelectorVars {
    pub sim_q: Var,
    pub sim_a: Var,
    /// `1 × n` two-softmax relevance vector.
    pub probabilities: Var,
    /// `n × (d + w)` candidate representations: sentence vector followed by
    /// the mean encoded word vector.
    pub representations: Var,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct Layers {
    article_tower: SemanticTower,
    query_tower: TermPoolTower,
}

#[derive(Clone, Debug)]
pub struct RetrievalNetwork {
    config: RetrievalConfig,
    word_dim: usize,
    store: ParamStore,
    layers: Layers,
}

#[derive(Serialize, Deserialize)]
struct Checkpoint {
    version: u32,
    config: RetrievalConfig,
    word_dim: usize,
    manifest: Vec<(String, usize, usize)>,
    layers: Layers,
    params: ParamStore,
}

/// `softmax(sim_q) + softmax(sim_a)`.
pub fn selection_probabilities(sim_q: &[f64], sim_a: &[f64]) -> Vec<f64> {
    let sq = softmax_rows(&Tensor::row_vector(sim_q.to_vec()));
    let sa = softmax_rows(&Tensor::row_vector(sim_a.to_vec()));
    sq.data().iter().zip(sa.data()).map(|(a, b)| a + b).collect()
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax_lowest(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate() {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

/// Word-density score of already encoded word rows: for each query row,
/// the mean of its best cosine and its top-`k` mean cosine over paragraph
/// rows, summed over query rows.
pub fn word_density_from_encoded(query: &Tensor, paragraph: &Tensor, k: usize) -> Result<f64> {
    if query.rows() == 0 || paragraph.rows() == 0 {
        return Err(contract("word density needs non-empty query and paragraph"));
    }
    if k == 0 {
        return Err(contract("k-max pooling needs k >= 1"));
    }
    let mut total = 0.0;
    for i in 0..query.rows() {
        let sims: Vec<f64> = (0..paragraph.rows()).map(|j| cosine(query.row(i), paragraph.row(j))).collect();
        let top = top_k_indices(&sims, k);
        let s_max = sims[top[0]];
        let s_kmax = top.iter().map(|&j| sims[j]).sum::<f64>() / top.len() as f64;
        total += 0.5 * (s_max + s_kmax);
    }
    Ok(total)
}

/// Normalised top-`k` weights over `probabilities` and the weighted sum of
/// the matching `representations`.
pub fn soft_representation(representations: &[Vec<f64>], probabilities: &[f64], k: usize) -> Result<(Vec<f64>, Vec<(usize, f64)>)> {
    if representations.len() != probabilities.len() || representations.is_empty() {
        return Err(contract("soft representation needs one probability per candidate"));
    }
    if k == 0 || k > representations.len() {
        return Err(contract(format!("soft top-k of {k} over {} candidates", representations.len())));
    }
    let top = top_k_indices(probabilities, k);
    let z: f64 = top.iter().map(|&i| probabilities[i]).sum();
    let weights: Vec<(usize, f64)> = top.iter().map(|&i| (i, probabilities[i] / z)).collect();
    let mut out = vec![0.0; representations[0].len()];
    for &(i, w) in &weights {
        for (o, x) in out.iter_mut().zip(&representations[i]) {
            *o += w * x;
        }
    }
    Ok((out, weights))
}

/// Gap scores `½[cos(p, p_i) + cos(p, p_{i+1})]`, softmaxed; the argmax gap
/// (lowest on ties) is the insertion index.
pub fn insertion_position_from(paragraphs: &[Vec<f64>], p: &[f64]) -> Result<InsertionChoice> {
    if paragraphs.len() < 2 {
        return Err(contract("insertion needs an article with at least two paragraphs"));
    }
    let gaps: Vec<f64> = paragraphs.windows(2).map(|w| 0.5 * (cosine(p, &w[0]) + cosine(p, &w[1]))).collect();
    let index = argmax_lowest(&gaps);
    let probabilities = softmax_rows(&Tensor::row_vector(gaps)).into_vec();
    Ok(InsertionChoice { index, probabilities })
}

impl RetrievalNetwork {
    pub fn new(word_dim: usize, config: RetrievalConfig) -> Self {
        let mut store = ParamStore::new();
        let mut init = Init::new(config.seed);
        let (h, l) = (config.tower_hidden, config.latent_dim);
        let article_tower = SemanticTower::new(&mut store, &mut init, "retrieval.article", word_dim, h, l);
        let semantic = SemanticTower::new(&mut store, &mut init, "retrieval.query", word_dim, h, l);
        let word_encoder = FeedForward::new(
            &mut store,
            &mut init,
            "retrieval.words",
            &[word_dim, config.word_latent_dim],
            Activation::Tanh,
            Activation::Tanh,
        );
        let query_tower = TermPoolTower { semantic, word_encoder, k: config.kmax };
        Self { config, word_dim, store, layers: Layers { article_tower, query_tower } }
    }

    pub fn config(&self) -> &RetrievalConfig {
        &self.config
    }

    pub fn store(&self) -> &ParamStore {
        &self.store
    }

    pub fn store_mut(&mut self) -> &mut ParamStore {
        &mut self.store
    }

    pub fn representation_dim(&self) -> usize {
        self.word_dim + self.config.word_latent_dim
    }

    fn latent(&self, tower: &SemanticTower, x: &[f64]) -> Vec<f64> {
        let mut g = Graph::with_params(&self.store);
        let xi = g.input(Tensor::row_vector(x.to_vec()));
        let y = tower.forward(&mut g, xi);
        g.value(y).data().to_vec()
    }

    fn encode_words(&self, words: &Tensor) -> Tensor {
        let mut g = Graph::with_params(&self.store);
        let x = g.input(words.clone());
        let y = self.layers.query_tower.word_encoder.forward(&mut g, x);
        g.value(y).clone()
    }

    /// Article-tower cosine between an article and a paragraph.
    pub fn semantic_similarity(&self, a_repr: &[f64], p_repr: &[f64]) -> f64 {
        let t = &self.layers.article_tower;
        cosine(&self.latent(t, a_repr), &self.latent(t, p_repr))
    }

    /// Query-tower semantic cosine.
    pub fn query_semantic_similarity(&self, q_repr: &[f64], p_repr: &[f64]) -> f64 {
        let t = &self.layers.query_tower.semantic;
        cosine(&self.latent(t, q_repr), &self.latent(t, p_repr))
    }

    pub fn word_density_similarity(&self, q: &TextInput, p: &TextInput) -> Result<f64> {
        if q.is_empty() || p.is_empty() {
            return Err(contract("word density needs non-empty query and paragraph"));
        }
        word_density_from_encoded(&self.encode_words(&q.words), &self.encode_words(&p.words), self.config.kmax)
    }

    /// `Sim^q`: semantic similarity times word density.
    pub fn query_similarity(&self, q: &TextInput, p: &TextInput) -> Result<f64> {
        Ok(self.query_semantic_similarity(&q.sentence, &p.sentence) * self.word_density_similarity(q, p)?)
    }

    /// Sentence vector followed by the mean encoded word vector.
    pub fn candidate_representation(&self, p: &TextInput) -> Vec<f64> {
        let mut out = p.sentence.clone();
        let enc = self.encode_words(&p.words);
        let n = enc.rows().max(1) as f64;
        let mut mean = vec![0.0; enc.cols()];
        for r in 0..enc.rows() {
            for (m, x) in mean.iter_mut().zip(enc.row(r)) {
                *m += x / n;
            }
        }
        out.extend(mean);
        out
    }

    /// [`Self::candidate_representation`] on the tape.
    pub fn representation_var(&self, g: &mut Graph<'_>, p: &TextInput) -> Result<Var> {
        if p.is_empty() {
            return Err(contract("representation of an empty text"));
        }
        let sent = g.input(Tensor::row_vector(p.sentence.clone()));
        let words = g.input(p.words.clone());
        let enc = self.layers.query_tower.word_encoder.forward(g, words);
        let mean = g.mean_rows(enc);
        Ok(g.concat_cols(&[sent, mean]))
    }

    /// The selector on the tape. Candidate word rows are encoded in one
    /// batch; every candidate must have at least one token.
    pub fn forward(&self, g: &mut Graph<'_>, query: &TextInput, article: &[f64], candidates: &[&TextInput]) -> Result<SelectorVars> {
        if candidates.is_empty() {
            return Err(contract("passage selection needs at least one candidate"));
        }
        if query.is_empty() || candidates.iter().any(|c| c.is_empty()) {
            return Err(contract("query and candidates must have tokens"));
        }
        let d = self.word_dim;
        let tower = &self.layers.query_tower;
        let n = candidates.len();

        let mut sent = Vec::with_capacity(n * d);
        let mut words = Vec::new();
        let mut lens = Vec::with_capacity(n);
        for c in candidates {
            sent.extend_from_slice(&c.sentence);
            words.extend_from_slice(c.words.data());
            lens.push(c.len());
        }
        let sent = g.input(Tensor::from_vec(n, d, sent));
        let total: usize = lens.iter().sum();
        let words = g.input(Tensor::from_vec(total, d, words));

        let q_sent = g.input(Tensor::row_vector(query.sentence.clone()));
        let q_lat = tower.semantic.forward(g, q_sent);
        let p_lat = tower.semantic.forward(g, sent);
        let sem_q = g.cosine_rows(q_lat, p_lat);

        let q_words = g.input(query.words.clone());
        let q_enc = tower.word_encoder.forward(g, q_words);
        let p_enc = tower.word_encoder.forward(g, words);
        let sims = g.cosine_rows(q_enc, p_enc);
        let mut density = Vec::with_capacity(n);
        let mut means = Vec::with_capacity(n);
        let mut off = 0;
        for &len in &lens {
            let block = g.slice_cols(sims, off, len);
            let mx = g.max_cols(block);
            let km = g.kmax_mean_cols(block, tower.k);
            let both = g.add(mx, km);
            let s = g.sum(both);
            density.push(g.scale(s, 0.5));
            let rows = g.slice_rows(p_enc, off, len);
            means.push(g.mean_rows(rows));
            off += len;
        }
        let density = g.concat_cols(&density);
        let sim_q = g.mul(sem_q, density);

        let a_in = g.input(Tensor::row_vector(article.to_vec()));
        let a_lat = self.layers.article_tower.forward(g, a_in);
        let p_lat_a = self.layers.article_tower.forward(g, sent);
        let sim_a = g.cosine_rows(a_lat, p_lat_a);

        let pq = g.softmax_rows(sim_q);
        let pa = g.softmax_rows(sim_a);
        let probabilities = g.add(pq, pa);
        let means = g.concat_rows(&means);
        let representations = g.concat_cols(&[sent, means]);
        Ok(SelectorVars { sim_q, sim_a, probabilities, representations })
    }

    /// Inference: selection probabilities over the candidates, argmax with lowest-index ties.
    pub fn select_passage(&self, query: &TextInput, article: &[f64], candidates: &[&TextInput]) -> Result<RetrievalOutput> {
        let mut g = Graph::with_params(&self.store);
        let v = self.forward(&mut g, query, article, candidates)?;
        let probabilities = g.value(v.probabilities).data().to_vec();
        let argmax_index = argmax_lowest(&probabilities);
        Ok(RetrievalOutput { probabilities, argmax_index, soft_weights: None, soft_representation: None })
    }

    /// Training-mode selection: also returns the soft top-k mixture.
    pub fn select_passage_soft(&self, query: &TextInput, article: &[f64], candidates: &[&TextInput]) -> Result<RetrievalOutput> {
        let mut g = Graph::with_params(&self.store);
        let v = self.forward(&mut g, query, article, candidates)?;
        let probabilities = g.value(v.probabilities).data().to_vec();
        let reps = g.value(v.representations);
        let reps: Vec<Vec<f64>> = (0..reps.rows()).map(|r| reps.row(r).to_vec()).collect();
        let k = self.config.soft_top_k.min(candidates.len());
        let (soft, weights) = soft_representation(&reps, &probabilities, k)?;
        let argmax_index = argmax_lowest(&probabilities);
        Ok(RetrievalOutput { probabilities, argmax_index, soft_weights: Some(weights), soft_representation: Some(soft) })
    }

    pub fn insertion_position(&self, article: &Article, table: &WordVectorTable, p_repr: &[f64]) -> Result<InsertionChoice> {
        let reps: Vec<Vec<f64>> = article
            .paragraphs
            .iter()
            .map(|q| self.candidate_representation(&TextInput::from_paragraph(table, q)))
            .collect();
        insertion_position_from(&reps, p_repr)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(&Checkpoint {
            version: CHECKPOINT_VERSION,
            config: self.config.clone(),
            word_dim: self.word_dim,
            manifest: self.store.shape_manifest(),
            layers: self.layers.clone(),
            params: self.store.clone(),
        })?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let c: Checkpoint = serde_json::from_str(s)?;
        if c.version != CHECKPOINT_VERSION {
            return Err(AttackError::Checkpoint(format!("retrieval checkpoint version {}", c.version)));
        }
        let fresh = Self::new(c.word_dim, c.config.clone());
        if fresh.store.shape_manifest() != c.manifest || c.params.shape_manifest() != c.manifest {
            return Err(AttackError::Checkpoint("retrieval parameter shapes disagree with manifest".into()));
        }
        Ok(Self { config: c.config, word_dim: c.word_dim, store: c.params, layers: c.layers })
    }
}

/// Raw word-vector density used to shortlist pool paragraphs for a query
/// before any network runs. Returns pool indices, best first, ties by
/// index.
pub fn prefilter_pool(table: &WordVectorTable, query: &str, pool: &[&Paragraph], cap: usize, k: usize) -> Vec<usize> {
    let q = TextInput::from_query(table, query);
    let mut scored: Vec<(usize, f64)> = pool
        .iter()
        .enumerate()
        .filter(|(_, p)| !p.tokens().is_empty())
        .map(|(i, p)| {
            let words = TextInput::from_paragraph(table, p).words;
            (i, word_density_from_encoded(&q.words, &words, k).unwrap_or(0.0))
        })
        .collect();
    scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    scored.truncate(cap);
    scored.into_iter().map(|(i, _)| i).collect()
}

/// Uniformly samples up to `n` candidates, always keeping the order of
/// the input; used to keep training instances small.
pub fn subsample<T: Clone>(items: &[T], n: usize, rng: &mut impl rand::Rng) -> Vec<T> {
    if items.len() <= n {
        return items.to_vec();
    }
    let mut idx: Vec<usize> = (0..items.len()).collect();
    idx.shuffle(rng);
    idx.truncate(n);
    idx.sort_unstable();
    idx.into_iter().map(|i| items[i].clone()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use mawseo_nn::check_gradients_sampled;

    fn rows(r: usize, c: usize, seed: u64) -> Tensor {
        let mut init = Init::new(seed);
        init.uniform(r, c, 1.0)
    }

    fn text(words: Tensor) -> TextInput {
        let mut s = vec![0.0; words.cols()];
        for r in 0..words.rows() {
            for (a, x) in s.iter_mut().zip(words.row(r)) {
                *a += x;
            }
        }
        let n = mawseo_core::embeddings::norm(&s);
        TextInput { sentence: s.iter().map(|x| x / n).collect(), words }
    }

    fn small() -> RetrievalNetwork {
        RetrievalNetwork::new(
            6,
            RetrievalConfig { tower_hidden: 5, latent_dim: 4, word_latent_dim: 3, kmax: 2, soft_top_k: 2, ..RetrievalConfig::default() },
        )
    }

    #[test]
    fn orthogonal_match_density_is_two_thirds() {
        let mut p = Tensor::zeros(4, 4);
        for i in 0..4 {
            p.set(i, i, 1.0);
        }
        let q = Tensor::row_vector(vec![1.0, 0.0, 0.0, 0.0]);
        assert!((word_density_from_encoded(&q, &p, 3).unwrap() - 2.0 / 3.0).abs() < 1e-9);
        assert!((word_density_from_encoded(&q, &p, 1).unwrap() - 1.0).abs() < 1e-9);
        assert!(word_density_from_encoded(&Tensor::zeros(0, 4), &p, 3).is_err());
    }

    #[test]
    fn gradients_match_finite_differences_on_two_candidates() {
        let net = small();
        let q = text(rows(2, 6, 1));
        let c1 = text(rows(3, 6, 2));
        let c2 = text(rows(4, 6, 3));
        let article = text(rows(5, 6, 4)).sentence;
        let weights = Tensor::row_vector(vec![0.7, -0.4]);
        let proj = rows(9, 1, 5);
        let report = check_gradients_sampled(net.store(), 1e-6, 10, |g| {
            let v = net.forward(g, &q, &article, &[&c1, &c2]).unwrap();
            let w = g.input(weights.clone());
            let a = g.mul(v.probabilities, w);
            let a = g.sum(a);
            let p = g.input(proj.clone());
            let r = g.matmul(v.representations, p);
            let r = g.tanh(r);
            let r = g.sum(r);
            g.add(a, r)
        });
        assert!(report.passes(1e-3), "{report:?}");
    }

    #[test]
    fn selector_probabilities_sum_to_two() {
        let net = small();
        let q = text(rows(2, 6, 1));
        let cands: Vec<TextInput> = (0..5).map(|i| text(rows(3 + i, 6, 10 + i as u64))).collect();
        let refs: Vec<&TextInput> = cands.iter().collect();
        let out = net.select_passage(&q, &text(rows(5, 6, 4)).sentence, &refs).unwrap();
        assert!((out.probabilities.iter().sum::<f64>() - 2.0).abs() < 1e-9);
        assert!(out.probabilities.iter().all(|&p| p > 0.0 && p < 2.0));
        let single = net.select_passage(&q, &text(rows(5, 6, 4)).sentence, &refs[..1]).unwrap();
        assert_eq!(single.probabilities, vec![2.0]);
        assert!(net.select_passage(&q, &[0.0; 6], &[]).is_err());
    }

    #[test]
    fn soft_representation_cases() {
        let reps = vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![5.0, 5.0]];
        let (top, w) = soft_representation(&reps, &[0.2, 1.5, 0.3], 1).unwrap();
        assert_eq!(top, reps[1]);
        assert_eq!(w, vec![(1, 1.0)]);
        let (mean, _) = soft_representation(&reps[..2], &[1.0, 1.0], 2).unwrap();
        assert_eq!(mean, vec![0.5, 0.5]);
        assert!(soft_representation(&reps, &[0.2, 1.5, 0.3], 4).is_err());
    }

    #[test]
    fn insertion_position_cases() {
        let e = |i: usize| {
            let mut v = vec![0.0; 6];
            v[i] = 1.0;
            v
        };
        let paras = vec![e(0), e(1), e(2), e(5), e(5), e(3)];
        let c = insertion_position_from(&paras, &e(5)).unwrap();
        assert_eq!(c.index, 3);
        assert!((c.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        let same = insertion_position_from(&vec![e(1); 4], &e(2)).unwrap();
        assert_eq!(same.index, 0);
        assert!(same.probabilities.iter().all(|p| (p - 1.0 / 3.0).abs() < 1e-12));
        assert!(insertion_position_from(&[e(0)], &e(0)).is_err());
    }

    #[test]
    fn checkpoint_round_trip() {
        let net = small();
        let back = RetrievalNetwork::from_json(&net.to_json().unwrap()).unwrap();
        assert_eq!(back.store(), net.store());
    }
}
