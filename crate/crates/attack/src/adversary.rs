//! Joint training of the retrieval network against the frozen substitute
//! discriminators, and the end-to-end attack.
//!
//! Per training instance the selector's top-k probabilities are
//! renormalised into weights `w`. The soft paragraph is `w · R_topk` for
//! the representation losses and a `w`-weighted blend of the candidates'
//! token rows for the ranker and detector. The discriminators run on their
//! own tapes; their gradient with respect to `w` is pulled back through the
//! selector tape. Task weights come from the min-norm solver applied to the
//! gradients with respect to `(w, R_topk)`.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use mawseo_core::corpus::RawParagraph;
use mawseo_core::embeddings::stable_hash;
use mawseo_core::similarity::{neighbor_similarity, topic_similarity};
use mawseo_core::{apply_revision, lead_paragraph, Article, ObjectiveFlags, Paragraph, Revision, SearchEngine, Wiki, WordVectorTable};
use mawseo_nn::graph::top_k_indices;
use mawseo_nn::{Adam, AdamConfig, Graph, Tensor, Var};

use crate::detector::{DetectorEncoder, SubstituteDetector};
use crate::error::{contract, AttackError, Result};
use crate::injection::{inject, InjectionInputs};
use crate::losses::{consistency_loss, detect_loss, rank_loss, topic_loss};
use crate::mgda::min_norm_weights;
use crate::ranker::{word_rows, SubstituteRanker};
use crate::retrieval::{article_sentence, insertion_position_from, prefilter_pool, RetrievalNetwork, TextInput};
use crate::tagger::TaggerModel;

pub const TASKS: [&str; 4] = ["rank", "detect", "topic", "sem"];

/// What the min-norm solver sees.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MgdaMode {
    /// Gradients with respect to the soft weights and the top-k
    /// representations.
    SharedRepresentation,
    /// Gradients with respect to every retrieval parameter.
    FullParameters,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AdversaryConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// Candidates drawn from an instance's pool per training step.
    pub train_candidates: usize,
    pub mgda_mode: MgdaMode,
    /// Ranker input cap; the soft block itself is never cut.
    pub max_doc_tokens: usize,
    pub detector_article_tokens: usize,
    pub seed: u64,
}

impl Default for AdversaryConfig {
    fn default() -> Self {
        Self {
            epochs: 4,
            batch_size: 8,
            learning_rate: 0.003,
            train_candidates: 48,
            mgda_mode: MgdaMode::SharedRepresentation,
            max_doc_tokens: 512,
            detector_article_tokens: 96,
            seed: 37,
        }
    }
}

/// A promotion paragraph: a raw pool paragraph with the promo injected.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source_id: String,
    pub source_index: usize,
    pub paragraph: Paragraph,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub query: String,
    pub promo: String,
    pub candidates: Vec<Candidate>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct AttackInstance {
    pub query: String,
    pub article_id: String,
    pub rank_before: usize,
}

/// Per-bucket availability recorded by the instance sampler.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct BucketCoverage {
    pub query: String,
    /// 1-based bucket number: bucket `b` covers ranks `100(b-1)+1 ..= 100b`
    /// (rank 1 excluded).
    pub bucket: usize,
    pub available: usize,
    pub sampled: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveThresholds {
    pub topic: f64,
    pub consistency: f64,
}

/// Frozen models the retrieval network is trained against.
#[derive(Clone, Copy)]
pub struct Discriminators<'a> {
    pub ranker: &'a SubstituteRanker,
    pub detector: &'a SubstituteDetector,
    pub encoder: &'a DetectorEncoder,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-instance losses, in [`TASKS`] order.
    pub losses: [f64; 4],
    /// Mean task weights over the epoch's batches.
    pub weights: [f64; 4],
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrainingReport {
    pub instances: usize,
    pub curve: Vec<EpochStats>,
}

/// Everything needed to mount attacks.
pub struct Adversary<'a> {
    pub table: &'a WordVectorTable,
    pub tagger: &'a TaggerModel,
    pub retrieval: &'a RetrievalNetwork,
    pub detector: &'a SubstituteDetector,
    pub encoder: &'a DetectorEncoder,
    pub detector_article_tokens: usize,
}

fn mix(seed: u64, a: u64) -> u64 {
    seed ^ a.wrapping_mul(0x9e37_79b9_7f4a_7c15).rotate_left(17)
}

/// Promotional content assigned to `query`.
pub fn promo_for(query: &str, promos: &[String], seed: u64) -> Result<String> {
    if promos.is_empty() {
        return Err(contract("no promotional content configured"));
    }
    Ok(promos[(mix(seed, stable_hash(query)) % promos.len() as u64) as usize].clone())
}

/// Tags and injects one raw paragraph.
pub fn inject_raw(tagger: &TaggerModel, raw: &Paragraph, promo: &str, query: &str, seed: u64) -> Result<Paragraph> {
    let inputs = InjectionInputs::new(raw.clone(), promo, query)?;
    let tags = tagger.tag(&inputs);
    inject(&inputs, &tags, seed)
}

/// Shortlists the raw pool by word density, then keeps every paragraph the
/// tagger finds a site in.
pub fn build_candidate_pool(
    tagger: &TaggerModel,
    table: &WordVectorTable,
    raw: &[RawParagraph<'_>],
    query: &str,
    promo: &str,
    pool_cap: usize,
    kmax: usize,
    seed: u64,
) -> Result<CandidatePool> {
    let paragraphs: Vec<&Paragraph> = raw.iter().map(|r| r.paragraph).collect();
    let mut candidates = Vec::new();
    for i in prefilter_pool(table, query, &paragraphs, pool_cap, kmax) {
        match inject_raw(tagger, raw[i].paragraph, promo, query, mix(seed, i as u64)) {
            Ok(paragraph) => candidates.push(Candidate {
                source_id: raw[i].source_id.to_string(),
                source_index: raw[i].index,
                paragraph,
            }),
            Err(AttackError::Infeasible(_)) => {}
            Err(e) => return Err(e),
        }
    }
    Ok(CandidatePool { query: query.to_string(), promo: promo.to_string(), candidates })
}

/// Samples up to `per_bucket` articles from each 100-rank bucket of each
/// query's results. Rank 1 cannot be boosted and is skipped.
pub fn sample_instances(
    engine: &dyn SearchEngine,
    queries: &[String],
    per_bucket: usize,
    seed: u64,
) -> Result<(Vec<AttackInstance>, Vec<BucketCoverage>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = Vec::new();
    let mut coverage = Vec::new();
    for q in queries {
        let results = engine.search(q, engine.num_articles())?;
        let mut buckets: BTreeMap<usize, Vec<(String, usize)>> = BTreeMap::new();
        for r in results.iter().filter(|r| r.rank >= 2 && r.score > 0.0) {
            buckets.entry((r.rank - 1) / 100 + 1).or_default().push((r.article_id.clone(), r.rank));
        }
        for (bucket, mut items) in buckets {
            let available = items.len();
            items.shuffle(&mut rng);
            items.truncate(per_bucket);
            items.sort_by_key(|(_, rank)| *rank);
            coverage.push(BucketCoverage { query: q.clone(), bucket, available, sampled: items.len() });
            out.extend(items.into_iter().map(|(article_id, rank_before)| AttackInstance {
                query: q.clone(),
                article_id,
                rank_before,
            }));
        }
    }
    Ok((out, coverage))
}

/// Per-article inputs reused across training steps.
struct ArticleInputs {
    sentence: Vec<f64>,
    rows: Tensor,
    /// Token offset where each paragraph ends.
    ends: Vec<usize>,
    paragraphs: Vec<TextInput>,
    detector_rows: Tensor,
    lead: String,
}

impl ArticleInputs {
    fn new(table: &WordVectorTable, encoder: &DetectorEncoder, a: &Article, detector_tokens: usize) -> Self {
        let tokens: Vec<&String> = a.tokens().collect();
        let mut ends = Vec::with_capacity(a.paragraphs.len());
        let mut acc = 0;
        for p in &a.paragraphs {
            acc += p.tokens().len();
            ends.push(acc);
        }
        Self {
            sentence: article_sentence(table, a),
            rows: word_rows(table, &tokens),
            ends,
            paragraphs: a.paragraphs.iter().map(|p| TextInput::from_paragraph(table, p)).collect(),
            detector_rows: encoder.article(a, detector_tokens),
            lead: lead_paragraph(a).text().to_string(),
        }
    }

    fn slice(&self, from: usize, to: usize) -> Tensor {
        let c = self.rows.cols();
        Tensor::from_vec(to - from, c, self.rows.data()[from * c..to * c].to_vec())
    }
}

fn padded(rows: &Tensor, len: usize) -> Tensor {
    let mut data = rows.data().to_vec();
    data.resize(len * rows.cols(), 0.0);
    Tensor::from_vec(len, rows.cols(), data)
}

/// `Σ wᵢ · rowsᵢ`, each block zero-padded to the longest.
fn soft_block(g: &mut Graph<'_>, w: Var, blocks: &[Tensor]) -> Var {
    let len = blocks.iter().map(Tensor::rows).max().unwrap_or(0);
    let mut acc: Option<Var> = None;
    for (i, b) in blocks.iter().enumerate() {
        let wi = g.slice_cols(w, i, 1);
        let x = g.input(padded(b, len));
        let term = g.scale_by(x, wi);
        acc = Some(match acc {
            Some(a) => g.add(a, term),
            None => term,
        });
    }
    acc.expect("at least one block")
}

struct InstanceGrads {
    losses: [f64; 4],
    shared: [Vec<f64>; 4],
    params: [Vec<Tensor>; 4],
    joint: Option<Vec<Tensor>>,
}

fn flatten(ts: &[Tensor]) -> Vec<f64> {
    ts.iter().flat_map(|t| t.data().iter().copied()).collect()
}

fn compute_instance(
    net: &RetrievalNetwork,
    disc: Discriminators<'_>,
    query: &TextInput,
    art: &ArticleInputs,
    candidates: &[&Candidate],
    max_doc_tokens: usize,
    joint_alpha: Option<[f64; 4]>,
) -> Result<InstanceGrads> {
    let table = disc.encoder.features().table();
    let inputs: Vec<TextInput> = candidates.iter().map(|c| TextInput::from_paragraph(table, &c.paragraph)).collect();
    let refs: Vec<&TextInput> = inputs.iter().collect();
    let mut g = Graph::with_params(net.store());
    let v = net.forward(&mut g, query, &art.sentence, &refs)?;
    let probs = g.value(v.probabilities).data().to_vec();
    let k = net.config().soft_top_k.min(candidates.len()).max(1);
    let top = top_k_indices(&probs, k);
    let p_top = g.gather(v.probabilities, &top);
    let z = g.sum(p_top);
    let w = g.div_by(p_top, z);
    let d = net.representation_dim();
    let flat: Vec<usize> = top.iter().flat_map(|&i| (0..d).map(move |c| i * d + c)).collect();
    let r = g.gather(v.representations, &flat);
    let r = g.reshape(r, k, d);
    let p_soft = g.matmul(w, r);
    let w_val = g.value(w).clone();

    let para_reps: Vec<Vec<f64>> = art.paragraphs.iter().map(|p| net.candidate_representation(p)).collect();
    let ins = insertion_position_from(&para_reps, g.value(p_soft).data())?.index;

    let lead = net.representation_var(&mut g, &art.paragraphs[0])?;
    let l_topic = topic_loss(&mut g, p_soft, lead);
    let upper = net.representation_var(&mut g, &art.paragraphs[ins])?;
    let lower = net.representation_var(&mut g, &art.paragraphs[ins + 1])?;
    let l_sem = consistency_loss(&mut g, p_soft, upper, lower);

    // ranker on its own tape, the soft block spliced in after paragraph `ins`
    let (l_rank, dw_rank) = {
        let mut gr = Graph::with_params(disc.ranker.store());
        let wi = gr.input(w_val.clone());
        let blocks: Vec<Tensor> = top.iter().map(|&i| inputs[i].words.clone()).collect();
        let block = soft_block(&mut gr, wi, &blocks);
        let cut = art.ends[ins];
        let room = max_doc_tokens.saturating_sub(cut + gr.shape(block).0);
        let end = art.rows.rows().min(cut + room);
        let mut parts = Vec::new();
        if cut > 0 {
            parts.push(gr.input(art.slice(0, cut)));
        }
        parts.push(block);
        if end > cut {
            parts.push(gr.input(art.slice(cut, end)));
        }
        let doc = gr.concat_rows(&parts);
        let q = &query.words;
        let l = rank_loss(&mut gr, disc.ranker, q, doc);
        let grads = gr.backward(l);
        (gr.scalar(l), grads.wrt(wi).cloned().unwrap_or_else(|| Tensor::zeros(1, k)))
    };

    let (l_detect, dw_detect) = {
        let mut gd = Graph::with_params(disc.detector.store());
        let wi = gd.input(w_val.clone());
        let mut blocks = Vec::with_capacity(k);
        let mut globals = Vec::with_capacity(k);
        for &i in &top {
            let p = disc.encoder.paragraph(candidates[i].paragraph.text(), &art.lead);
            blocks.push(p.rows);
            globals.push(p.globals.to_vec());
        }
        let rows = soft_block(&mut gd, wi, &blocks);
        let gl = gd.input(Tensor::from_rows(&globals, globals[0].len()));
        let gl = gd.matmul(wi, gl);
        let probs = disc.detector.probabilities_var(&mut gd, rows, gl, &art.detector_rows);
        let l = detect_loss(&mut gd, probs);
        let grads = gd.backward(l);
        (gd.scalar(l), grads.wrt(wi).cloned().unwrap_or_else(|| Tensor::zeros(1, k)))
    };

    let shared_of = |grads: &mawseo_nn::graph::Gradients| -> Vec<f64> {
        let mut out = grads.wrt(w).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; k]);
        out.extend(grads.wrt(r).map(|t| t.data().to_vec()).unwrap_or_else(|| vec![0.0; k * d]));
        out
    };
    let rank_grads = g.backward_with(w, dw_rank.clone());
    let detect_grads = g.backward_with(w, dw_detect.clone());
    let topic_grads = g.backward(l_topic);
    let sem_grads = g.backward(l_sem);
    // one backward pass through Σ αᵢ Lᵢ, with the discriminator losses
    // entering through their linearisation in `w`
    let joint = joint_alpha.map(|a| {
        let seed = dw_rank.zip_map(&dw_detect, |x, y| a[0] * x + a[1] * y);
        let c = g.input(seed);
        let lin = g.mul(w, c);
        let lin = g.sum(lin);
        let t = g.scale(l_topic, a[2]);
        let s = g.scale(l_sem, a[3]);
        let j = g.add(lin, t);
        let j = g.add(j, s);
        let grads = g.backward(j);
        g.param_grads(&grads)
    });
    let mut rank_shared = dw_rank.data().to_vec();
    rank_shared.extend(std::iter::repeat_n(0.0, k * d));
    let mut detect_shared = dw_detect.data().to_vec();
    detect_shared.extend(std::iter::repeat_n(0.0, k * d));
    Ok(InstanceGrads {
        losses: [l_rank, l_detect, g.scalar(l_topic), g.scalar(l_sem)],
        shared: [rank_shared, detect_shared, shared_of(&topic_grads), shared_of(&sem_grads)],
        params: [
            g.param_grads(&rank_grads),
            g.param_grads(&detect_grads),
            g.param_grads(&topic_grads),
            g.param_grads(&sem_grads),
        ],
        joint,
    })
}

/// `Σ αᵢ · per_task[i]`.
pub fn combined_gradients(per_task: &[Vec<Tensor>; 4], alpha: [f64; 4]) -> Vec<Tensor> {
    let mut out: Vec<Tensor> = per_task[0].iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
    for (task, a) in per_task.iter().zip(alpha) {
        for (o, t) in out.iter_mut().zip(task) {
            o.scaled_add_assign(a, t);
        }
    }
    out
}

/// Per-task losses, shared-representation gradients and parameter
/// gradients for one instance; exposed for inspection and tests.
pub struct TaskBreakdown {
    pub losses: [f64; 4],
    pub shared: [Vec<f64>; 4],
    pub params: [Vec<Tensor>; 4],
    /// Parameter gradients of `Σ αᵢ Lᵢ` from a single backward pass, when
    /// weights were supplied.
    pub joint: Option<Vec<Tensor>>,
}

pub fn task_breakdown(
    net: &RetrievalNetwork,
    disc: Discriminators<'_>,
    query: &str,
    article: &Article,
    candidates: &[&Candidate],
    cfg: &AdversaryConfig,
    joint_alpha: Option<[f64; 4]>,
) -> Result<TaskBreakdown> {
    let table = disc.encoder.features().table();
    let art = ArticleInputs::new(table, disc.encoder, article, cfg.detector_article_tokens);
    let q = TextInput::from_query(table, query);
    let r = compute_instance(net, disc, &q, &art, candidates, cfg.max_doc_tokens, joint_alpha)?;
    Ok(TaskBreakdown { losses: r.losses, shared: r.shared, params: r.params, joint: r.joint })
}

/// Trains `net` in place. Discriminators stay frozen. On a non-finite loss
/// the network is left at its last finite state and a
/// [`AttackError::Diverged`] carrying that state is returned.
pub fn train_retrieval(
    net: &mut RetrievalNetwork,
    disc: Discriminators<'_>,
    articles: &BTreeMap<String, Article>,
    pools: &BTreeMap<String, CandidatePool>,
    instances: &[AttackInstance],
    cfg: &AdversaryConfig,
) -> Result<RetrievalTrainingReport> {
    let table = disc.encoder.features().table();
    let mut usable = Vec::new();
    for inst in instances {
        let Some(pool) = pools.get(&inst.query) else { continue };
        let Some(a) = articles.get(&inst.article_id) else { continue };
        if pool.candidates.is_empty() || a.paragraphs.len() < 2 {
            continue;
        }
        usable.push((inst, pool, a));
    }
    if usable.is_empty() {
        return Err(AttackError::Training("no usable training instances".into()));
    }
    let mut cache: BTreeMap<&str, ArticleInputs> = BTreeMap::new();
    for (_, _, a) in &usable {
        cache.entry(a.id.as_str()).or_insert_with(|| ArticleInputs::new(table, disc.encoder, a, cfg.detector_article_tokens));
    }
    let queries: BTreeMap<&str, TextInput> =
        usable.iter().map(|(i, _, _)| (i.query.as_str(), TextInput::from_query(table, &i.query))).collect();

    let mut adam = Adam::new(net.store(), AdamConfig::with_learning_rate(cfg.learning_rate));
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..usable.len()).collect();
    let mut curve = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = [0.0; 4];
        let mut weight_sum = [0.0; 4];
        let mut batches = 0;
        for chunk in order.chunks(cfg.batch_size.max(1)) {
            let mut shared: [Vec<f64>; 4] = Default::default();
            let mut per_task: Option<[Vec<Tensor>; 4]> = None;
            for &i in chunk {
                let (inst, pool, a) = usable[i];
                let mut cands: Vec<&Candidate> = pool.candidates.iter().collect();
                if cands.len() > cfg.train_candidates {
                    cands.shuffle(&mut rng);
                    cands.truncate(cfg.train_candidates);
                }
                let r = compute_instance(net, disc, &queries[inst.query.as_str()], &cache[a.id.as_str()], &cands, cfg.max_doc_tokens, None)?;
                if r.losses.iter().any(|l| !l.is_finite()) {
                    return Err(AttackError::Diverged {
                        message: format!("non-finite loss in epoch {epoch} on {}/{}", inst.query, inst.article_id),
                        checkpoint: net.to_json()?,
                    });
                }
                for t in 0..4 {
                    loss_sum[t] += r.losses[t];
                    shared[t].extend_from_slice(&r.shared[t]);
                }
                per_task = Some(match per_task {
                    None => r.params,
                    Some(mut acc) => {
                        for t in 0..4 {
                            for (x, y) in acc[t].iter_mut().zip(&r.params[t]) {
                                x.add_assign(y);
                            }
                        }
                        acc
                    }
                });
            }
            let per_task = per_task.expect("non-empty batch");
            let solve_on = match cfg.mgda_mode {
                MgdaMode::SharedRepresentation => shared.to_vec(),
                MgdaMode::FullParameters => per_task.iter().map(|p| flatten(p)).collect(),
            };
            let alpha = min_norm_weights(&solve_on)?.weights;
            let alpha = [alpha[0], alpha[1], alpha[2], alpha[3]];
            let mut grads = combined_gradients(&per_task, alpha);
            mawseo_nn::optim::scale_grads(&mut grads, 1.0 / chunk.len() as f64);
            if grads.iter().any(|t| !t.is_finite()) {
                return Err(AttackError::Diverged {
                    message: format!("non-finite gradient in epoch {epoch}"),
                    checkpoint: net.to_json()?,
                });
            }
            adam.step(net.store_mut(), &grads);
            for t in 0..4 {
                weight_sum[t] += alpha[t];
            }
            batches += 1;
        }
        let n = usable.len() as f64;
        let stats = EpochStats {
            epoch,
            losses: loss_sum.map(|x| x / n),
            weights: weight_sum.map(|x| x / batches as f64),
        };
        log::info!(
            "retrieval epoch {epoch}: rank {:.4} detect {:.4} topic {:.4} sem {:.4} | weights {:.3?}",
            stats.losses[0],
            stats.losses[1],
            stats.losses[2],
            stats.losses[3],
            stats.weights
        );
        curve.push(stats);
    }
    Ok(RetrievalTrainingReport { instances: usable.len(), curve })
}

/// Mean topic loss of the hard inference choice on each instance, a
/// before/after yardstick for training.
pub fn mean_topic_loss(
    net: &RetrievalNetwork,
    table: &WordVectorTable,
    articles: &BTreeMap<String, Article>,
    pools: &BTreeMap<String, CandidatePool>,
    instances: &[AttackInstance],
) -> Result<f64> {
    let mut total = 0.0;
    let mut n = 0;
    for inst in instances {
        let (Some(pool), Some(a)) = (pools.get(&inst.query), articles.get(&inst.article_id)) else { continue };
        if pool.candidates.is_empty() {
            continue;
        }
        let inputs: Vec<TextInput> = pool.candidates.iter().map(|c| TextInput::from_paragraph(table, &c.paragraph)).collect();
        let refs: Vec<&TextInput> = inputs.iter().collect();
        let out = net.select_passage_soft(&TextInput::from_query(table, &inst.query), &article_sentence(table, a), &refs)?;
        let lead = net.candidate_representation(&TextInput::from_paragraph(table, lead_paragraph(a)));
        total += crate::losses::topic_loss_value(out.soft_representation.as_deref().expect("soft mode"), &lead);
        n += 1;
    }
    if n == 0 {
        return Err(contract("no instance to evaluate"));
    }
    Ok(total / n as f64)
}

impl Adversary<'_> {
    /// Places `paragraph` where the retrieval network would and records
    /// ranks, verdicts and similarities for the revised article.
    #[allow(clippy::too_many_arguments)]
    pub fn measure(
        &self,
        wiki: &dyn Wiki,
        method: &str,
        query: &str,
        article: &Article,
        promo: &str,
        paragraph: &Paragraph,
        thresholds: ObjectiveThresholds,
    ) -> Result<Revision> {
        let rank_before = wiki.rank_of(query, &article.id);
        let reps: Vec<Vec<f64>> = article
            .paragraphs
            .iter()
            .map(|p| self.retrieval.candidate_representation(&TextInput::from_paragraph(self.table, p)))
            .collect();
        let p_repr = self.retrieval.candidate_representation(&TextInput::from_paragraph(self.table, paragraph));
        let index = insertion_position_from(&reps, &p_repr)?.index;
        let revised = apply_revision(article, paragraph, index)?;
        let rank_after = wiki.with_revision(&revised)?.rank_of(query, &article.id);
        let verdict = wiki.detect(article, &revised)?;
        let det_in = self.encoder.paragraph(paragraph.text(), lead_paragraph(article).text());
        let det_article = self.encoder.article(article, self.detector_article_tokens);
        let sub = self.detector.probabilities(&det_in, &det_article).0;
        let mut rev = Revision {
            method: method.to_string(),
            query: query.to_string(),
            article_id: article.id.clone(),
            promo: promo.to_string(),
            paragraph: paragraph.text().to_string(),
            insertion_index: index,
            rank_before,
            rank_after,
            target_damaging: verdict.damaging,
            target_probability: verdict.damaging_probability,
            substitute_damaging: Some(sub >= 0.5),
            substitute_probability: Some(sub),
            topic_sim: topic_similarity(self.table, article, paragraph),
            neighbor_sim: neighbor_similarity(self.table, article, paragraph, index),
            objectives: ObjectiveFlags::default(),
        };
        rev.objectives = rev.evaluate(thresholds.topic, thresholds.consistency);
        Ok(rev)
    }

    fn check_target(&self, wiki: &dyn Wiki, query: &str, article: &Article) -> Result<()> {
        if wiki.rank_of(query, &article.id).is_none() {
            return Err(AttackError::Infeasible(format!("{} is not in the results for {query:?}", article.id)));
        }
        if article.paragraphs.len() < 2 {
            return Err(AttackError::Infeasible(format!("{} has a single paragraph", article.id)));
        }
        Ok(())
    }

    /// The hard inference path: select, position, insert, measure.
    pub fn attack(&self, wiki: &dyn Wiki, query: &str, article: &Article, pool: &CandidatePool, thresholds: ObjectiveThresholds) -> Result<Revision> {
        self.check_target(wiki, query, article)?;
        if pool.candidates.is_empty() {
            return Err(AttackError::Infeasible(format!("no injectable paragraph for {query:?}")));
        }
        let inputs: Vec<TextInput> = pool.candidates.iter().map(|c| TextInput::from_paragraph(self.table, &c.paragraph)).collect();
        let refs: Vec<&TextInput> = inputs.iter().collect();
        let out = self.retrieval.select_passage(&TextInput::from_query(self.table, query), &article_sentence(self.table, article), &refs)?;
        let chosen = &pool.candidates[out.argmax_index].paragraph;
        self.measure(wiki, "mawseo", query, article, &pool.promo, chosen, thresholds)
    }

    /// Ablation: the paragraph is drawn uniformly from the raw pool and
    /// injected the same way; everything else follows [`Self::attack`].
    pub fn random_baseline(
        &self,
        wiki: &dyn Wiki,
        query: &str,
        article: &Article,
        raw: &[RawParagraph<'_>],
        promo: &str,
        thresholds: ObjectiveThresholds,
        seed: u64,
    ) -> Result<Revision> {
        self.check_target(wiki, query, article)?;
        let mut rng = ChaCha8Rng::seed_from_u64(mix(seed, stable_hash(&article.id)));
        for _ in 0..100 {
            if raw.is_empty() {
                break;
            }
            let i = rng.random_range(0..raw.len());
            match inject_raw(self.tagger, raw[i].paragraph, promo, query, rng.random()) {
                Ok(p) => return self.measure(wiki, "random", query, article, promo, &p, thresholds),
                Err(AttackError::Infeasible(_)) => continue,
                Err(e) => return Err(e),
            }
        }
        Err(AttackError::Infeasible(format!("no injectable random paragraph for {query:?}")))
    }
}
