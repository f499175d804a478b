//! The experiment stages. Each one reads its inputs from the run
//! directory, writes its outputs there and records them in the manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::Arc;

use mawseo_attack::adversary::{
    build_candidate_pool, mean_topic_loss, promo_for, sample_instances, train_retrieval, Adversary, AttackInstance, BucketCoverage,
    CandidatePool, Discriminators, ObjectiveThresholds, RetrievalTrainingReport,
};
use mawseo_attack::detector::{encode_revisions, synthesize_revisions, train_substitute_detector, DetectorEncoder, DetectorReport, SubstituteDetector};
use mawseo_attack::ranker::{distill_ranker, RankerReport, SubstituteRanker};
use mawseo_attack::retrieval::RetrievalNetwork;
use mawseo_attack::tagger::{build_tagger_dataset, TaggerReport};
use mawseo_attack::{train_tagger, AttackError, TaggerModel, TokenFeatures};
use mawseo_core::embeddings::stable_hash;
use mawseo_core::revision::{read_revisions, write_revisions};
use mawseo_core::synth::synth_corpus_with;
use mawseo_core::text::tokenize;
use mawseo_core::{apply_revision, load_corpus, load_word_vectors, save_corpus, Article, BinaryReport, Corpus, Paragraph, Revision, Vocabulary, WordVectorTable};
use mawseo_defense::{
    adversarial_retrain, build_triplets, compare_detectors, evaluate_flagging, legitimate_samples, revision_features, train_coherence, CoherenceReport,
    FlaggingReport, PairFeaturizer, RetrainingReport,
};
use mawseo_target::{synthesize_edits, train_target_detector, EditFeatureVector, FeatureExtractor, LocalWiki, SearchIndex, TargetDetector};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::error::{contract, EvalError, Result};
use crate::keyword::{count_phrase, keyword_density, keyword_stuff, MAX_TARGET_DENSITY};
use crate::metrics::{compute_metrics, MetricsReport};
use crate::report::{render_report, Report};
use crate::revenue::{estimate_revenue, revision_views, RevenueEstimate, ViewSummary, ViewTable};
use crate::run::{artifacts as a, RunDir, Stage};
use crate::thresholds::{compute_thresholds, Thresholds};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuerySplit {
    pub queries: Vec<String>,
    /// Queries whose instances train the retrieval network and feed
    /// adversarial retraining.
    pub train: Vec<String>,
    /// Queries whose instances are attacked and evaluated.
    pub test: Vec<String>,
    pub promos: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TargetEdits {
    pub train: Vec<(EditFeatureVector, bool)>,
    pub held_out: Vec<(EditFeatureVector, bool)>,
    pub held_out_report: BinaryReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankerArtifactReport {
    pub report: RankerReport,
    pub train_queries: Vec<String>,
    pub test_queries: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Instances {
    pub train: Vec<AttackInstance>,
    pub test: Vec<AttackInstance>,
    pub train_coverage: Vec<BucketCoverage>,
    pub test_coverage: Vec<BucketCoverage>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalArtifactReport {
    pub training: RetrievalTrainingReport,
    /// Mean topic loss of the soft selection on the test instances.
    pub topic_loss_before: f64,
    pub topic_loss_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordCase {
    pub query: String,
    pub article_id: String,
    pub mawseo_rank_after: usize,
    pub keyword_rank_after: Option<usize>,
    pub density_before: f64,
    pub density_after: f64,
    pub repeats_added: usize,
    /// The stuffed revision reached MAWSEO's rank.
    pub matched: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KeywordReport {
    pub cases: Vec<KeywordCase>,
    pub matched: usize,
    pub mean_density_before: f64,
    pub mean_density_after: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoherenceArtifactReport {
    pub training: CoherenceReport,
    pub flagging: FlaggingReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodMetrics {
    pub method: String,
    pub metrics: MetricsReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Evaluation {
    pub thresholds: Thresholds,
    pub methods: Vec<MethodMetrics>,
    /// Views of the MAWSEO revisions meeting every objective, at their
    /// boosted ranks.
    pub successful_views: ViewSummary,
    pub revenue: RevenueEstimate,
}

pub const MAWSEO_ON_KEYWORD_SUBSET: &str = "mawseo-keyword-subset";

pub struct Pipeline {
    run: RunDir,
    config: ExperimentConfig,
    vocab: Vocabulary,
}

fn skip_infeasible<T>(r: std::result::Result<T, AttackError>, what: &str) -> Result<Option<T>> {
    match r {
        Ok(x) => Ok(Some(x)),
        Err(AttackError::Infeasible(m)) => {
            log::debug!("{what}: {m}");
            Ok(None)
        }
        Err(e) => Err(e.into()),
    }
}

impl Pipeline {
    pub fn new(run: RunDir, config: ExperimentConfig) -> Result<Self> {
        config.validate()?;
        let vocab = Vocabulary::generate(&config.corpus.synth.vocabulary);
        Ok(Self { run, config, vocab })
    }

    pub fn run_dir(&self) -> &RunDir {
        &self.run
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.config
    }

    pub fn run_all(&self) -> Result<()> {
        Stage::ALL.iter().try_for_each(|&s| self.run_stage(s))
    }

    pub fn run_stage(&self, stage: Stage) -> Result<()> {
        log::info!("stage {stage}");
        let outputs = match stage {
            Stage::SynthCorpus => self.synth_corpus()?,
            Stage::Index => self.index()?,
            Stage::TrainTargetDetector => self.train_target_detector()?,
            Stage::DistillRanker => self.distill_ranker()?,
            Stage::TrainSubstituteDetector => self.train_substitute_detector()?,
            Stage::TrainTagger => self.train_tagger()?,
            Stage::TrainRetrieval => self.train_retrieval()?,
            Stage::Attack => self.attack()?,
            Stage::DefendCoherence => self.defend_coherence()?,
            Stage::DefendAdvTrain => self.defend_adv_train()?,
            Stage::Eval => self.eval()?,
            Stage::Report => self.report()?,
        };
        self.run.record(stage, &self.config, &outputs)
    }

    fn corpus(&self) -> Result<Arc<Corpus>> {
        Ok(Arc::new(load_corpus(&self.run.require(a::CORPUS, Stage::SynthCorpus)?)?))
    }

    fn table(&self) -> Result<Arc<WordVectorTable>> {
        Ok(Arc::new(load_word_vectors(&self.run.require(a::WORD_VECTORS, Stage::SynthCorpus)?)?))
    }

    pub fn queries(&self) -> Result<QuerySplit> {
        self.run.read_json(a::QUERIES, Stage::SynthCorpus)
    }

    fn extractor(&self, table: &Arc<WordVectorTable>) -> FeatureExtractor {
        FeatureExtractor::new(table.clone(), &self.vocab.lexicons)
    }

    fn wiki(&self, corpus: &Arc<Corpus>, table: &Arc<WordVectorTable>) -> Result<LocalWiki> {
        let index = SearchIndex::from_json(&self.run.read_text(a::INDEX, Stage::Index)?)?;
        let detector = TargetDetector::from_json(&self.run.read_text(a::TARGET_DETECTOR, Stage::TrainTargetDetector)?, self.extractor(table))?;
        Ok(LocalWiki::new(corpus.clone(), index, detector))
    }

    fn tagger(&self, table: &Arc<WordVectorTable>) -> Result<TaggerModel> {
        Ok(TaggerModel::from_json(&self.run.read_text(a::TAGGER, Stage::TrainTagger)?, TokenFeatures::new(table.clone()))?)
    }

    fn ranker(&self) -> Result<SubstituteRanker> {
        Ok(SubstituteRanker::from_json(&self.run.read_text(a::RANKER, Stage::DistillRanker)?)?)
    }

    fn substitute_detector(&self) -> Result<SubstituteDetector> {
        Ok(SubstituteDetector::from_json(&self.run.read_text(a::SUBSTITUTE_DETECTOR, Stage::TrainSubstituteDetector)?)?)
    }

    fn encoder(&self, table: &Arc<WordVectorTable>) -> DetectorEncoder {
        DetectorEncoder::new(TokenFeatures::new(table.clone()), &self.vocab.lexicons)
    }

    fn revisions(&self, name: &str) -> Result<Vec<Revision>> {
        Ok(read_revisions(&self.run.require(name, Stage::Attack)?)?)
    }

    fn synth_corpus(&self) -> Result<Vec<&'static str>> {
        let c = &self.config;
        let corpus = match &c.corpus.path {
            Some(p) => load_corpus(p)?,
            None => synth_corpus_with(&c.corpus.synth, &self.vocab),
        };
        save_corpus(&corpus, &self.run.path(a::CORPUS))?;
        self.vocab.word_vectors().save(&self.run.path(a::WORD_VECTORS))?;
        let queries = if c.queries.list.is_empty() {
            let all = self.vocab.queries();
            if c.queries.count > all.len() {
                return Err(EvalError::Config(format!("queries.count {} exceeds the {} vocabulary queries", c.queries.count, all.len())));
            }
            all[..c.queries.count].to_vec()
        } else {
            c.queries.list.clone()
        };
        let promos = if c.queries.promos.is_empty() { self.vocab.pharmacies.clone() } else { c.queries.promos.clone() };
        let mut shuffled = queries.clone();
        shuffled.shuffle(&mut ChaCha8Rng::seed_from_u64(c.queries.split_seed));
        let n_train = ((queries.len() as f64 * c.queries.attack_train_fraction).round() as usize).clamp(1, queries.len() - 1);
        let (train, test) = shuffled.split_at(n_train);
        self.run.write_json(a::QUERIES, &QuerySplit { queries, train: train.to_vec(), test: test.to_vec(), promos })?;
        log::info!("corpus: {} articles, {} pool articles", corpus.len(), corpus.pool_articles().len());
        Ok(vec![a::CORPUS, a::WORD_VECTORS, a::QUERIES])
    }

    fn index(&self) -> Result<Vec<&'static str>> {
        let index = SearchIndex::build(&*self.corpus()?, self.config.target.bm25)?;
        self.run.write_text(a::INDEX, &index.to_json())?;
        Ok(vec![a::INDEX])
    }

    fn train_target_detector(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let fx = self.extractor(&table);
        let t = &self.config.target;
        let edits = synthesize_edits(&corpus, &self.vocab, &t.edits);
        let mut labeled = edits.iter().map(|e| Ok((e.features(&corpus, &fx)?, e.damaging))).collect::<Result<Vec<_>>>()?;
        labeled.shuffle(&mut ChaCha8Rng::seed_from_u64(t.edits.seed ^ 0x7a26));
        let n_held = (labeled.len() as f64 * t.holdout_fraction).round() as usize;
        let held_out = labeled.split_off(labeled.len() - n_held);
        let model = train_target_detector(&labeled, &t.gbdt)?;
        let detector = TargetDetector::new(fx, model, t.threshold);
        let held_out_report = detector.evaluate(&held_out);
        log::info!("target detector: held-out accuracy {:.4}", held_out_report.accuracy);
        self.run.write_text(a::TARGET_DETECTOR, &detector.to_json())?;
        self.run.write_json(a::TARGET_EDITS, &TargetEdits { train: labeled, held_out, held_out_report })?;
        Ok(vec![a::TARGET_DETECTOR, a::TARGET_EDITS])
    }

    fn distill_ranker(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let wiki = self.wiki(&corpus, &table)?;
        let q = self.queries()?;
        let d = distill_ranker(&wiki, &corpus, &table, &q.queries, self.config.ranker.clone())?;
        log::info!("ranker: held-out NDCG@20 {:.4}", d.report.ndcg_at_20);
        self.run.write_text(a::RANKER, &d.model.to_json()?)?;
        self.run.write_json(a::RANKER_REPORT, &RankerArtifactReport { report: d.report, train_queries: d.train_queries, test_queries: d.test_queries })?;
        Ok(vec![a::RANKER, a::RANKER_REPORT])
    }

    fn train_substitute_detector(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let wiki = self.wiki(&corpus, &table)?;
        let q = self.queries()?;
        let s = &self.config.substitute_detector;
        let enc = self.encoder(&table);
        let revisions = synthesize_revisions(&corpus, &self.vocab.lexicons, &q.promos, &wiki, s.revisions, s.data_seed)?;
        let examples = encode_revisions(&enc, &corpus, &revisions, &s.model)?;
        let trained = train_substitute_detector(&examples, enc.row_dim(), s.model.clone())?;
        log::info!("substitute detector: held-out accuracy {:.4}", trained.report.held_out.accuracy);
        self.run.write_text(a::SUBSTITUTE_DETECTOR, &trained.model.to_json()?)?;
        self.run.write_json::<DetectorReport>(a::SUBSTITUTE_DETECTOR_REPORT, &trained.report)?;
        Ok(vec![a::SUBSTITUTE_DETECTOR, a::SUBSTITUTE_DETECTOR_REPORT])
    }

    fn train_tagger(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let q = self.queries()?;
        let t = &self.config.tagger;
        let data = build_tagger_dataset(&corpus, &q.queries, &q.promos, &self.vocab.lexicons, t.examples, t.data_seed)?;
        let trained = train_tagger(&data, TokenFeatures::new(table), t.model.clone())?;
        log::info!("tagger: held-out entity F1 {:.4}", trained.report.f1);
        self.run.write_text(a::TAGGER, &trained.model.to_json()?)?;
        self.run.write_json::<TaggerReport>(a::TAGGER_REPORT, &trained.report)?;
        Ok(vec![a::TAGGER, a::TAGGER_REPORT])
    }

    fn train_retrieval(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let wiki = self.wiki(&corpus, &table)?;
        let q = self.queries()?;
        let tagger = self.tagger(&table)?;
        let ranker = self.ranker()?;
        let detector = self.substitute_detector()?;
        let encoder = self.encoder(&table);
        let (rc, at) = (&self.config.retrieval, &self.config.attack);

        let raw = corpus.raw_paragraphs();
        let mut pools = BTreeMap::new();
        for query in &q.queries {
            let promo = promo_for(query, &q.promos, at.pool_seed)?;
            pools.insert(query.clone(), build_candidate_pool(&tagger, &table, &raw, query, &promo, rc.pool_cap, rc.kmax, at.pool_seed)?);
        }
        let (train, train_coverage) = sample_instances(&wiki, &q.train, at.train_per_bucket, at.sample_seed)?;
        let (test, test_coverage) = sample_instances(&wiki, &q.test, at.test_per_bucket, at.sample_seed ^ 0x7e57)?;
        log::info!("instances: {} train, {} test", train.len(), test.len());

        let articles: BTreeMap<String, Article> = corpus.articles().map(|x| (x.id.clone(), x.clone())).collect();
        let mut net = RetrievalNetwork::new(table.dim(), rc.clone());
        let topic_loss_before = mean_topic_loss(&net, &table, &articles, &pools, &test)?;
        let disc = Discriminators { ranker: &ranker, detector: &detector, encoder: &encoder };
        let training = train_retrieval(&mut net, disc, &articles, &pools, &train, &self.config.adversary)?;
        let topic_loss_after = mean_topic_loss(&net, &table, &articles, &pools, &test)?;

        self.run.write_json::<BTreeMap<String, CandidatePool>>(a::POOLS, &pools)?;
        self.run.write_json(a::INSTANCES, &Instances { train, test, train_coverage, test_coverage })?;
        self.run.write_text(a::RETRIEVAL, &net.to_json()?)?;
        self.run.write_json(a::RETRIEVAL_REPORT, &RetrievalArtifactReport { training, topic_loss_before, topic_loss_after })?;
        Ok(vec![a::POOLS, a::INSTANCES, a::RETRIEVAL, a::RETRIEVAL_REPORT])
    }

    fn thresholds(&self, corpus: &Corpus, table: &WordVectorTable) -> Result<Thresholds> {
        let t = &self.config.thresholds;
        let eligible = corpus.articles().filter(|x| x.paragraphs.len() >= 2).count();
        let mut th = compute_thresholds(corpus, table, t.sample.min(eligible), t.seed)?;
        if let Some(v) = t.topic_override {
            th.topic_threshold = v;
        }
        if let Some(v) = t.consistency_override {
            th.consistency_threshold = v;
        }
        Ok(th)
    }

    fn attack(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let wiki = self.wiki(&corpus, &table)?;
        let tagger = self.tagger(&table)?;
        let detector = self.substitute_detector()?;
        let encoder = self.encoder(&table);
        let retrieval = RetrievalNetwork::from_json(&self.run.read_text(a::RETRIEVAL, Stage::TrainRetrieval)?)?;
        let pools: BTreeMap<String, CandidatePool> = self.run.read_json(a::POOLS, Stage::TrainRetrieval)?;
        let instances: Instances = self.run.read_json(a::INSTANCES, Stage::TrainRetrieval)?;
        let at = &self.config.attack;

        let th = self.thresholds(&corpus, &table)?;
        self.run.write_json(a::THRESHOLDS, &th)?;
        let objective = ObjectiveThresholds { topic: th.topic_threshold, consistency: th.consistency_threshold };
        let adv = Adversary {
            table: &table,
            tagger: &tagger,
            retrieval: &retrieval,
            detector: &detector,
            encoder: &encoder,
            detector_article_tokens: self.config.adversary.detector_article_tokens,
        };
        let raw = corpus.raw_paragraphs();
        let pool_of = |q: &str| pools.get(q).ok_or_else(|| contract(format!("no candidate pool for {q:?}")));

        let mut mawseo = Vec::new();
        let mut random = Vec::new();
        for inst in &instances.test {
            let article = corpus.article(&inst.article_id)?;
            let pool = pool_of(&inst.query)?;
            let what = format!("{} / {}", inst.query, inst.article_id);
            mawseo.extend(skip_infeasible(adv.attack(&wiki, &inst.query, article, pool, objective), &what)?);
            random.extend(skip_infeasible(
                adv.random_baseline(&wiki, &inst.query, article, &raw, &pool.promo, objective, at.baseline_seed),
                &what,
            )?);
        }
        let mut train = Vec::new();
        for inst in &instances.train {
            let article = corpus.article(&inst.article_id)?;
            let what = format!("{} / {}", inst.query, inst.article_id);
            train.extend(skip_infeasible(adv.attack(&wiki, &inst.query, article, pool_of(&inst.query)?, objective), &what)?);
        }
        log::info!("attack: {} mawseo, {} random, {} training revisions", mawseo.len(), random.len(), train.len());

        let (keyword, report) = self.keyword_baseline(&adv, &wiki, &corpus, &mawseo, objective)?;
        std::fs::create_dir_all(self.run.path("revisions"))?;
        for (name, revs) in [(a::MAWSEO_REVISIONS, &mawseo), (a::RANDOM_REVISIONS, &random), (a::KEYWORD_REVISIONS, &keyword), (a::TRAIN_REVISIONS, &train)] {
            write_revisions(&self.run.path(name), revs)?;
        }
        self.run.write_json(a::KEYWORD_REPORT, &report)?;
        Ok(vec![a::THRESHOLDS, a::MAWSEO_REVISIONS, a::RANDOM_REVISIONS, a::KEYWORD_REVISIONS, a::TRAIN_REVISIONS, a::KEYWORD_REPORT])
    }

    /// Replays boosted MAWSEO revisions with the query stuffed into the
    /// chosen paragraph, raising the article's keyword density one grid
    /// step at a time until the stuffed revision reaches MAWSEO's rank.
    fn keyword_baseline(
        &self,
        adv: &Adversary<'_>,
        wiki: &LocalWiki,
        corpus: &Corpus,
        mawseo: &[Revision],
        objective: ObjectiveThresholds,
    ) -> Result<(Vec<Revision>, KeywordReport)> {
        let at = &self.config.attack;
        let mut revisions = Vec::new();
        let mut cases = Vec::new();
        for m in mawseo.iter().filter(|r| r.rank_improved()).take(at.keyword_instances) {
            let article = corpus.article(&m.article_id)?;
            let target_rank = m.rank_after.expect("boosted revisions have a rank");
            let phrase = tokenize(&m.query);
            let f0: usize = article.paragraphs.iter().map(|p| count_phrase(p.tokens(), &phrase)).sum();
            let density_before = keyword_density(phrase.len(), f0, article.token_count());
            let base = Paragraph::new(m.paragraph.clone())?;
            let seed = at.baseline_seed ^ stable_hash(&format!("{}/{}", m.query, m.article_id));
            let mut best = None;
            let mut k = 1;
            loop {
                let target = density_before + k as f64 * at.keyword_step;
                if target > MAX_TARGET_DENSITY {
                    break;
                }
                let stuffed = match keyword_stuff(&base, &m.query, target, article, at.keyword_max_paragraph_tokens, seed) {
                    Ok(s) => s,
                    Err(EvalError::Infeasible(_)) => break,
                    Err(e) => return Err(e),
                };
                let rev = adv.measure(wiki, "keyword", &m.query, article, &m.promo, &Paragraph::new(stuffed.paragraph.clone())?, objective)?;
                let reached = rev.rank_after.is_some_and(|r| r <= target_rank);
                best = Some((rev, stuffed, reached));
                if reached {
                    break;
                }
                k += 1;
            }
            let Some((rev, stuffed, matched)) = best else { continue };
            cases.push(KeywordCase {
                query: m.query.clone(),
                article_id: m.article_id.clone(),
                mawseo_rank_after: target_rank,
                keyword_rank_after: rev.rank_after,
                density_before,
                density_after: stuffed.density,
                repeats_added: stuffed.repeats_added,
                matched,
            });
            revisions.push(rev);
        }
        let n = cases.len().max(1) as f64;
        let report = KeywordReport {
            matched: cases.iter().filter(|c| c.matched).count(),
            mean_density_before: cases.iter().map(|c| c.density_before).sum::<f64>() / n,
            mean_density_after: cases.iter().map(|c| c.density_after).sum::<f64>() / n,
            cases,
        };
        Ok((revisions, report))
    }

    fn defend_coherence(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let d = &self.config.defense;
        let mawseo = self.revisions(a::MAWSEO_REVISIONS)?;
        let featurizer = PairFeaturizer::new(table, &self.vocab.lexicons);
        let triplets = build_triplets(&corpus, d.triplets, d.triplet_seed)?;
        let trained = train_coherence(&triplets, featurizer, d.coherence.clone())?;
        let revised = revision_pairs(&corpus, &mawseo)?;
        let legitimate = legitimate_samples(&corpus, revised.len(), d.legitimate_seed)?;
        let flagging = evaluate_flagging(&trained.model, &revised, &legitimate, d.margin)?;
        log::info!("coherence defense: recall {:.4}, legitimate accuracy {:.4}", flagging.recall, flagging.legitimate_accuracy);
        self.run.write_text(a::COHERENCE_MODEL, &trained.model.to_json()?)?;
        self.run.write_json(a::COHERENCE_REPORT, &CoherenceArtifactReport { training: trained.report, flagging })?;
        Ok(vec![a::COHERENCE_MODEL, a::COHERENCE_REPORT])
    }

    fn defend_adv_train(&self) -> Result<Vec<&'static str>> {
        let (corpus, table) = (self.corpus()?, self.table()?);
        let fx = self.extractor(&table);
        let original = TargetDetector::from_json(&self.run.read_text(a::TARGET_DETECTOR, Stage::TrainTargetDetector)?, fx.clone())?;
        let edits: TargetEdits = self.run.read_json(a::TARGET_EDITS, Stage::TrainTargetDetector)?;
        let train = revision_features(&corpus, &fx, &self.revisions(a::TRAIN_REVISIONS)?)?;
        let test = revision_features(&corpus, &fx, &self.revisions(a::MAWSEO_REVISIONS)?)?;
        let legitimate: Vec<EditFeatureVector> = edits.held_out.iter().filter(|(_, damaging)| !damaging).map(|(f, _)| *f).collect();
        let threshold = self.config.target.threshold;
        let retrained = adversarial_retrain(&edits.train, &train, &self.config.target.gbdt)?;
        let report = compare_detectors(original.model(), &retrained, threshold, &test, &legitimate)?;
        log::info!("adversarial retraining: recall {:.4} -> {:.4}", report.original.recall, report.retrained.recall);
        self.run.write_text(a::RETRAINED_DETECTOR, &TargetDetector::new(fx, retrained, threshold).to_json())?;
        self.run.write_json::<RetrainingReport>(a::RETRAINING_REPORT, &report)?;
        Ok(vec![a::RETRAINED_DETECTOR, a::RETRAINING_REPORT])
    }

    fn eval(&self) -> Result<Vec<&'static str>> {
        let thresholds: Thresholds = self.run.read_json(a::THRESHOLDS, Stage::Attack)?;
        let mawseo = self.revisions(a::MAWSEO_REVISIONS)?;
        let random = self.revisions(a::RANDOM_REVISIONS)?;
        let keyword = self.revisions(a::KEYWORD_REVISIONS)?;
        let views = match &self.config.revenue.view_table {
            Some(p) => ViewTable::load(p)?,
            None => ViewTable::default(),
        };
        let evaluation = evaluate(&thresholds, &mawseo, &random, &keyword, &views, self.config.revenue.view_through_rate, self.config.revenue.revenue_per_action)?;
        self.run.write_json(a::EVALUATION, &evaluation)?;
        Ok(vec![a::EVALUATION])
    }

    fn report(&self) -> Result<Vec<&'static str>> {
        let ranker: RankerArtifactReport = self.run.read_json(a::RANKER_REPORT, Stage::DistillRanker)?;
        let report = Report {
            evaluation: self.run.read_json(a::EVALUATION, Stage::Eval)?,
            ranker: ranker.report,
            keyword: self.run.read_json(a::KEYWORD_REPORT, Stage::Attack)?,
            coherence: self.run.read_json(a::COHERENCE_REPORT, Stage::DefendCoherence)?,
            retraining: self.run.read_json(a::RETRAINING_REPORT, Stage::DefendAdvTrain)?,
        };
        let rendered = render_report(&report);
        self.run.write_json(a::REPORT_JSON, &report.summary())?;
        self.run.write_text(a::REPORT_MD, &rendered.markdown)?;
        self.run.write_text(a::TABLE_ATTACK, &rendered.attack_tsv)?;
        self.run.write_text(a::TABLE_RANK_LEVELS, &rendered.rank_levels_tsv)?;
        self.run.write_text(a::TABLE_DEFENSE, &rendered.defense_tsv)?;
        Ok(vec![a::REPORT_JSON, a::REPORT_MD, a::TABLE_ATTACK, a::TABLE_RANK_LEVELS, a::TABLE_DEFENSE])
    }
}

/// `(original, revised)` article pairs for logged revisions.
pub fn revision_pairs(corpus: &Corpus, revisions: &[Revision]) -> Result<Vec<(Article, Article)>> {
    revisions
        .iter()
        .map(|r| {
            let before = corpus.article(&r.article_id)?;
            let after = apply_revision(before, &Paragraph::new(r.paragraph.clone())?, r.insertion_index)?;
            Ok((before.clone(), after))
        })
        .collect()
}

/// Metrics per method and the revenue of the successful MAWSEO revisions;
/// a pure function of the revision logs and the thresholds.
pub fn evaluate(
    thresholds: &Thresholds,
    mawseo: &[Revision],
    random: &[Revision],
    keyword: &[Revision],
    views: &ViewTable,
    view_through_rate: f64,
    revenue_per_action: f64,
) -> Result<Evaluation> {
    let mut methods = vec![
        MethodMetrics { method: "mawseo".into(), metrics: compute_metrics(mawseo, thresholds)? },
        MethodMetrics { method: "random".into(), metrics: compute_metrics(random, thresholds)? },
    ];
    if !keyword.is_empty() {
        let keys: BTreeSet<(&str, &str)> = keyword.iter().map(|r| (r.query.as_str(), r.article_id.as_str())).collect();
        let subset: Vec<Revision> = mawseo.iter().filter(|r| keys.contains(&(r.query.as_str(), r.article_id.as_str()))).cloned().collect();
        methods.push(MethodMetrics { method: "keyword".into(), metrics: compute_metrics(keyword, thresholds)? });
        methods.push(MethodMetrics { method: MAWSEO_ON_KEYWORD_SUBSET.into(), metrics: compute_metrics(&subset, thresholds)? });
    }
    let successful: Vec<Revision> =
        mawseo.iter().filter(|r| r.evaluate(thresholds.topic_threshold, thresholds.consistency_threshold).all()).cloned().collect();
    let successful_views = revision_views(views, &successful);
    let revenue = estimate_revenue(successful_views.views_after, view_through_rate, revenue_per_action)?;
    Ok(Evaluation { thresholds: thresholds.clone(), methods, successful_views, revenue })
}
