//! Acceptance suite: one PASS/FAIL line per criterion, at the stated
//! tolerance. Runs the full fixture pipeline twice (once for the scaled
//! benchmarks, once more for byte-level reproducibility).

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;
use std::time::{Duration, Instant};

use mawseo_attack::detector::{DetectorConfig, DetectorExample, ParagraphInput, SubstituteDetector};
use mawseo_attack::mgda::min_norm_weights;
use mawseo_attack::ranker::{RankExample, RankerConfig, SubstituteRanker};
use mawseo_attack::retrieval::{argmax_lowest, selection_probabilities, word_density_from_encoded, RetrievalConfig, RetrievalNetwork, TextInput};
use mawseo_attack::{heuristic_label, InjectionInputs, TaggerConfig, TaggerModel, TokenFeatures};
use mawseo_core::vocab::fixture_word_vectors;
use mawseo_core::{synth_corpus, Article, Corpus, Lexicons, ObjectiveFlags, Paragraph, Revision, VocabularySpec};
use mawseo_defense::{build_triplets, hinge_loss, CoherenceConfig, CoherenceModel, PairFeaturizer};
use mawseo_eval::keyword::keyword_density;
use mawseo_eval::pipeline::{CoherenceArtifactReport, Evaluation, RankerArtifactReport};
use mawseo_eval::revenue::estimate_revenue;
use mawseo_eval::run::artifacts as a;
use mawseo_eval::{compute_metrics, rank_level_report, ExperimentConfig, Pipeline, RunDir, Stage, Thresholds};
use mawseo_defense::RetrainingReport;
use mawseo_nn::{check_gradients_sampled, GradCheckReport, Init, Tensor};
use mawseo_target::{Bm25Params, SearchIndex};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome { pass, detail: detail.into() }
}

// ---------------------------------------------------------------- MGDA

fn norm_sq(grads: &[Vec<f64>], w: &[f64]) -> f64 {
    let dim = grads[0].len();
    (0..dim).map(|j| grads.iter().zip(w).map(|(g, wi)| wi * g[j]).sum::<f64>().powi(2)).sum()
}

/// Minimum of `‖Σ wᵢ gᵢ‖²` over a simplex lattice with `steps` divisions.
fn grid_min(grads: &[Vec<f64>], steps: usize) -> f64 {
    fn rec(grads: &[Vec<f64>], steps: usize, left: usize, w: &mut Vec<f64>, best: &mut f64) {
        if w.len() + 1 == grads.len() {
            w.push(left as f64 / steps as f64);
            *best = best.min(norm_sq(grads, w));
            w.pop();
            return;
        }
        for k in 0..=left {
            w.push(k as f64 / steps as f64);
            rec(grads, steps, left - k, w, best);
            w.pop();
        }
    }
    let mut best = f64::INFINITY;
    rec(grads, steps, steps, &mut Vec::new(), &mut best);
    best
}

fn mgda_vs_grid() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst = f64::NEG_INFINITY;
    for _ in 0..200 {
        let tasks = rng.random_range(2..=4);
        let dim = rng.random_range(1..=50);
        let grads: Vec<Vec<f64>> = (0..tasks).map(|_| (0..dim).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let fw = min_norm_weights(&grads).expect("finite gradients");
        let steps = if tasks == 2 { 1000 } else { 50 };
        let grid = grid_min(&grads, steps);
        // the lattice only bounds the optimum from above
        worst = worst.max(fw.objective - grid);
    }
    let secs = start.elapsed().as_secs_f64();
    outcome(worst <= 1e-4 && secs < 60.0, format!("max(FW − grid) = {worst:.2e} over 200 sets, {secs:.1} s"))
}

// ------------------------------------------------------------ TermPool

fn single_row(t: &TextInput, r: usize) -> TextInput {
    TextInput { sentence: t.words.row(r).to_vec(), words: Tensor::row_vector(t.words.row(r).to_vec()) }
}

fn random_text(rows: usize, dim: usize, seed: u64) -> TextInput {
    let words = Init::new(seed).uniform(rows, dim, 1.0);
    let mut sentence = vec![0.0; dim];
    for r in 0..rows {
        for (s, x) in sentence.iter_mut().zip(words.row(r)) {
            *s += x / rows as f64;
        }
    }
    TextInput { sentence, words }
}

fn termpool() -> Outcome {
    let mut p = Tensor::zeros(4, 4);
    for i in 0..4 {
        p.set(i, i, 1.0);
    }
    let q = Tensor::row_vector(vec![1.0, 0.0, 0.0, 0.0]);
    let two_thirds = word_density_from_encoded(&q, &p, 3).unwrap();
    let k1 = word_density_from_encoded(&q, &p, 1).unwrap();
    let mut collapse = 0.0f64;
    let mut additivity = 0.0f64;
    let net = RetrievalNetwork::new(6, RetrievalConfig { tower_hidden: 8, latent_dim: 5, word_latent_dim: 4, ..RetrievalConfig::default() });
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for i in 0..100 {
        let (qn, pn) = (rng.random_range(1..5), rng.random_range(1..12));
        let q = random_text(qn, 6, 1000 + i);
        let p = random_text(pn, 6, 2000 + i);
        let whole = net.word_density_similarity(&q, &p).unwrap();
        let parts: f64 = (0..qn).map(|r| net.word_density_similarity(&single_row(&q, r), &p).unwrap()).sum();
        additivity = additivity.max((whole - parts).abs());
        // with k = 1 the k-max mean is the max, so the score is Σ max cosine
        let qe = Init::new(3000 + i).uniform(qn, 5, 1.0);
        let pe = Init::new(4000 + i).uniform(pn, 5, 1.0);
        let direct: f64 = (0..qn)
            .map(|r| (0..pn).map(|c| mawseo_core::cosine(qe.row(r), pe.row(c))).fold(f64::NEG_INFINITY, f64::max))
            .sum();
        collapse = collapse.max((word_density_from_encoded(&qe, &pe, 1).unwrap() - direct).abs());
    }
    let pass = (two_thirds - 2.0 / 3.0).abs() <= 1e-9 && (k1 - 1.0).abs() <= 1e-9 && collapse <= 1e-9 && additivity <= 1e-9;
    outcome(pass, format!("2/3 case {two_thirds:.12}, k=1 case {k1:.12}, k=1 max error {collapse:.1e}, additivity error {additivity:.1e}"))
}

// ----------------------------------------------------------- selector

fn softmax(x: &[f64]) -> Vec<f64> {
    let m = x.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = x.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.into_iter().map(|v| v / s).collect()
}

fn selector() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut sum_err, mut oracle_miss, mut shift_miss) = (0.0f64, 0, 0);
    for _ in 0..50 {
        let n = rng.random_range(1..40);
        let sq: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let sa: Vec<f64> = (0..n).map(|_| rng.random_range(-3.0..3.0)).collect();
        let p = selection_probabilities(&sq, &sa);
        sum_err = sum_err.max((p.iter().sum::<f64>() - 2.0).abs());
        let oracle: Vec<f64> = softmax(&sq).iter().zip(softmax(&sa)).map(|(a, b)| a + b).collect();
        let best = (0..n).fold(0, |b, i| if oracle[i] > oracle[b] { i } else { b });
        if best != argmax_lowest(&p) {
            oracle_miss += 1;
        }
        let (dq, da) = (rng.random_range(-100.0..100.0), rng.random_range(-100.0..100.0));
        let shifted = selection_probabilities(&sq.iter().map(|x| x + dq).collect::<Vec<_>>(), &sa.iter().map(|x| x + da).collect::<Vec<_>>());
        if argmax_lowest(&shifted) != argmax_lowest(&p) {
            shift_miss += 1;
        }
    }
    outcome(
        sum_err <= 1e-9 && oracle_miss == 0 && shift_miss == 0,
        format!("max |Σp − 2| = {sum_err:.1e}, oracle mismatches {oracle_miss}/50, shift mismatches {shift_miss}/50"),
    )
}

// -------------------------------------------------------------- BM25

fn article(id: &str, paragraphs: &[&str]) -> Article {
    Article::new(id, id, vec![], paragraphs.iter().map(|p| Paragraph::new(*p).unwrap()).collect()).unwrap()
}

fn bm25() -> Outcome {
    let corpus = Corpus::new(
        vec![
            article("d1", &["Fentanyl is an opioid.", "Fentanyl patches."]),
            article("d2", &["Morphine is an opioid analgesic.", "It is strong."]),
            article("d3", &["Fentanyl analogues are potent.", "Handle with care."]),
        ],
        vec![],
    )
    .unwrap();
    let idx = SearchIndex::build(&corpus, Bm25Params { k1: 1.2, b: 0.75 }).unwrap();
    // N = 3, df = 2, avgdl = 7, idf = ln(1 + 1.5/2.5)
    let idf = 1.6f64.ln();
    let w = |tf: f64, len: f64| idf * tf * 2.2 / (tf + 1.2 * (0.25 + 0.75 * len / 7.0));
    let hand = [("d1", w(2.0, 6.0)), ("d2", 0.0), ("d3", w(1.0, 7.0))];
    let six = hand.iter().all(|(id, want)| format!("{:.6}", idx.score("fentanyl", id).unwrap()) == format!("{want:.6}"));

    let big = synth_corpus(4, 300, &VocabularySpec::default());
    let idx2 = SearchIndex::build(&big, Bm25Params::default()).unwrap();
    let mut brute_ok = true;
    for q in mawseo_core::Vocabulary::generate(&VocabularySpec::default()).queries().iter().take(20) {
        let mut brute: Vec<(String, f64)> =
            big.articles().map(|x| (x.id.clone(), idx2.score(q, &x.id).unwrap())).collect();
        brute.sort_by(|x, y| y.1.total_cmp(&x.1).then_with(|| x.0.cmp(&y.0)));
        // zero scores tie, and ties break by id
        let got = idx2.search(q, big.len()).unwrap();
        brute_ok &= got.len() == brute.len() && got.iter().zip(&brute).all(|(r, (id, s))| &r.article_id == id && r.score == *s);
    }
    outcome(six && brute_ok, format!("hand scores {:.6}/{:.6}/{:.6}; brute-force search agrees on 20 queries: {brute_ok}", hand[0].1, hand[1].1, hand[2].1))
}

// --------------------------------------------------- gradient checks

fn text_unit(words: Tensor) -> TextInput {
    let mut s = vec![0.0; words.cols()];
    for r in 0..words.rows() {
        for (a, x) in s.iter_mut().zip(words.row(r)) {
            *a += x;
        }
    }
    let n = mawseo_core::embeddings::norm(&s);
    TextInput { sentence: s.iter().map(|x| x / n).collect(), words }
}

fn gradient_checks() -> Outcome {
    let rows = |r: usize, c: usize, seed: u64| Init::new(seed).uniform(r, c, 1.0);
    let mut reports: Vec<(&str, GradCheckReport)> = Vec::new();

    let net = RetrievalNetwork::new(
        6,
        RetrievalConfig { tower_hidden: 5, latent_dim: 4, word_latent_dim: 3, kmax: 2, soft_top_k: 2, ..RetrievalConfig::default() },
    );
    let (q, c1, c2) = (text_unit(rows(2, 6, 1)), text_unit(rows(3, 6, 2)), text_unit(rows(4, 6, 3)));
    let art = text_unit(rows(5, 6, 4)).sentence;
    let (weights, proj) = (Tensor::row_vector(vec![0.7, -0.4]), rows(9, 1, 5));
    reports.push((
        "retrieval",
        check_gradients_sampled(net.store(), 1e-6, 10, |g| {
            let v = net.forward(g, &q, &art, &[&c1, &c2]).unwrap();
            let w = g.input(weights.clone());
            let x = g.mul(v.probabilities, w);
            let x = g.sum(x);
            let p = g.input(proj.clone());
            let r = g.matmul(v.representations, p);
            let r = g.tanh(r);
            let r = g.sum(r);
            g.add(x, r)
        }),
    ));

    let ranker = SubstituteRanker::new(6, RankerConfig { hidden_dim: 3, head_hidden: 4, kmax: 2, ..RankerConfig::default() });
    let ex = |qs: u64, d: u64, target: f64| RankExample {
        query: "q".into(),
        article_id: format!("a{d}"),
        query_rows: rows(2, 6, qs),
        doc_rows: rows(5, 6, d),
        target,
    };
    let batch = [ex(1, 2, 3.0), ex(3, 4, 0.5)];
    let refs: Vec<&RankExample> = batch.iter().collect();
    reports.push(("ranker", check_gradients_sampled(ranker.store(), 1e-6, 10, |g| ranker.batch_loss(g, &refs))));

    let det = SubstituteDetector::new(5, DetectorConfig { hidden_dim: 3, ..DetectorConfig::default() });
    let dex = |seed: u64, label: bool| DetectorExample {
        paragraph: ParagraphInput { rows: rows(4, 5, seed), globals: [0.3, 0.1, seed as f64 / 10.0] },
        article: Arc::new(rows(6, 5, seed + 100)),
        label,
    };
    let batch = [dex(1, true), dex(2, false)];
    let refs: Vec<&DetectorExample> = batch.iter().collect();
    reports.push(("detector", check_gradients_sampled(det.store(), 1e-6, 12, |g| det.batch_loss(g, &refs))));

    let table = Arc::new(fixture_word_vectors());
    let tagger = TaggerModel::new(TokenFeatures::new(table.clone()), TaggerConfig { hidden_dim: 3, attention_dim: 3, ..TaggerConfig::default() });
    let batch: Vec<_> = [("It is sold by Gegrosri Biologics in Kenya.", "talvex"), ("Talvex extends the dose.", "talvex")]
        .iter()
        .map(|(t, q)| {
            let i = InjectionInputs::new(Paragraph::new(*t).unwrap(), "Vexora Pharmacy", q).unwrap();
            let tags = heuristic_label(&i, &Lexicons::default());
            (tagger.encode(&i), tags)
        })
        .collect();
    reports.push(("tagger", check_gradients_sampled(tagger.store(), 1e-6, 8, |g| tagger.batch_loss(g, &batch))));

    let corpus = synth_corpus(2, 30, &VocabularySpec::default());
    let f = PairFeaturizer::new(table, &Lexicons::default());
    let enc = f.encode(&build_triplets(&corpus, 2, 3).unwrap());
    let model = CoherenceModel::new(f, CoherenceConfig { grid_hidden: 3, hidden: 4, ..CoherenceConfig::default() });
    let batch: Vec<_> = enc.iter().collect();
    reports.push(("coherence", check_gradients_sampled(model.store(), 1e-6, 10, |g| model.batch_loss(g, &batch))));

    let pass = reports.iter().all(|(_, r)| r.passes(1e-3));
    let detail = reports.iter().map(|(n, r)| format!("{n} {:.1e}", r.max_relative_error)).collect::<Vec<_>>().join(", ");
    outcome(pass, format!("max relative error: {detail}"))
}

// ------------------------------------------------------------ metrics

fn hand_log() -> Vec<Revision> {
    (0..50)
        .map(|i: usize| {
            let before = if i % 10 == 9 { None } else { Some(2 + 37 * i % 480) };
            let after = match i % 4 {
                0 => before.map(|b| b - 1),
                1 => before.map(|b| b + 3),
                2 => before.map(|b| (b / 2).max(1)),
                _ => Some(5),
            };
            Revision {
                method: "mawseo".into(),
                query: format!("q{}", i % 3),
                article_id: format!("a{i}"),
                promo: "P".into(),
                paragraph: "x".into(),
                insertion_index: 0,
                rank_before: before,
                rank_after: after,
                target_damaging: i % 5 == 0,
                target_probability: if i % 5 == 0 { 0.8 } else { 0.2 },
                substitute_damaging: None,
                substitute_probability: None,
                topic_sim: (i % 7) as f64 / 10.0,
                neighbor_sim: (i % 9) as f64 / 10.0,
                objectives: ObjectiveFlags::default(),
            }
        })
        .collect()
}

fn metric_formulas() -> Outcome {
    let log = hand_log();
    let th = Thresholds { topic_threshold: 0.3, consistency_threshold: 0.4, sample_size: 1, corpus_id: "hand".into() };
    let m = compute_metrics(&log, &th).unwrap();
    let mut counts = [0usize; 5];
    for r in &log {
        let boosted = match (r.rank_before, r.rank_after) {
            (Some(b), Some(x)) => x < b,
            (None, Some(_)) => true,
            _ => false,
        };
        let flags = [boosted, !r.target_damaging, r.topic_sim >= 0.3, r.neighbor_sim >= 0.4];
        for (c, f) in counts.iter_mut().zip(flags) {
            *c += f as usize;
        }
        counts[4] += flags.iter().all(|f| *f) as usize;
    }
    let rates = [m.rank_boosting_rate, m.evasion_rate, m.topic_relevancy_rate, m.semantic_consistency_rate, m.promotion_success_rate];
    let rates_ok = rates.iter().zip(counts).all(|(r, c)| *r == c as f64 / 50.0);

    let mut buckets: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for r in &log {
        if let Some(b) = r.rank_before.filter(|b| *b >= 2) {
            let e = buckets.entry((b - 1) / 100).or_default();
            e.0 += 1;
            if let Some(x) = r.rank_after.filter(|x| *x < b) {
                e.1 += 1;
                e.2 += b - x;
            }
        }
    }
    let levels = rank_level_report(&log);
    let levels_ok = levels.len() == buckets.len()
        && levels.iter().zip(&buckets).all(|(row, (_, (n, k, margin)))| {
            row.revisions == *n && row.boosted == *k && row.boosting_rate == *k as f64 / *n as f64 && row.mean_margin == *margin as f64 / *k as f64
        });

    let d = keyword_density(2, 3, 1200);
    let (d0, d1) = (keyword_density(1, 1, 2000), keyword_density(1, 6, 2222));
    let kw_ok = (d - 0.005).abs() < 1e-15 && (d0 - 0.0005).abs() < 1e-15 && (d1 - 0.0027).abs() < 1e-6;
    outcome(
        rates_ok && levels_ok && kw_ok,
        format!(
            "rates {:?} vs recount {:?}; {} rank levels agree: {levels_ok}; d(2,3,1200) = {:.4}%, 0.05% -> {:.4}%",
            rates,
            counts,
            levels.len(),
            100.0 * d,
            100.0 * d1
        ),
    )
}

fn revenue() -> Outcome {
    let r = estimate_revenue(55_479_625.0, 0.01, 200.0).unwrap();
    outcome(r.revenue == 55_479_625.0 * 0.01 * 200.0 && (r.revenue / 1e6 * 100.0).round() / 100.0 == 110.96, format!("R = ${:.2}", r.revenue))
}

fn hinge() -> Outcome {
    let (a, b) = (hinge_loss(2.0, 0.5), hinge_loss(0.2, 0.5));
    outcome(a == 0.0 && (b - 1.3).abs() < 1e-12, format!("hinge(2.0, 0.5) = {a}, hinge(0.2, 0.5) = {b:.12}"))
}

// ------------------------------------------------------------ pipeline

fn files(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for e in std::fs::read_dir(&dir).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.insert(p.strip_prefix(root).unwrap().display().to_string(), std::fs::read(&p).unwrap());
            }
        }
    }
    out
}

/// Runs every stage and returns the total and the distillation time.
fn run_pipeline(dir: &Path) -> (Pipeline, Duration, Duration) {
    let p = Pipeline::new(RunDir::create(dir).unwrap(), ExperimentConfig::default()).unwrap();
    let (mut total, mut distill) = (Duration::ZERO, Duration::ZERO);
    for stage in Stage::ALL {
        let start = Instant::now();
        p.run_stage(stage).unwrap_or_else(|e| panic!("{stage} failed: {e}"));
        let took = start.elapsed();
        total += took;
        if stage == Stage::DistillRanker {
            distill = took;
        }
    }
    (p, total, distill)
}

fn main() {
    let mut results: Vec<(&str, Outcome)> = vec![
        ("MGDA min-norm weights vs simplex grid (1e-4)", mgda_vs_grid()),
        ("TermPool 2/3 case, k=1 collapse, additivity (1e-9)", termpool()),
        ("Selector probability sum, oracle argmax, shift invariance", selector()),
        ("BM25 hand scores (6 decimals) and brute-force search", bm25()),
        ("Gradient checks: retrieval, ranker, detector, tagger, coherence (1e-3)", gradient_checks()),
        ("Metric formulas on a 50-revision log; keyword density", metric_formulas()),
        ("Revenue model $110.96M", revenue()),
    ];
    let hinge_outcome = hinge();

    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    let (pa, first, distill) = run_pipeline(dir_a.path());
    let run = pa.run_dir();

    let ranker: RankerArtifactReport = run.read_json(a::RANKER_REPORT, Stage::DistillRanker).unwrap();
    let queries = pa.queries().unwrap().queries.len();
    let articles = mawseo_core::load_corpus(&run.path(a::CORPUS)).unwrap().len();
    results.push((
        "Distillation NDCG@20 >= 0.85 (2,000 articles, 100 queries), <= 30 min",
        outcome(
            ranker.report.ndcg_at_20 >= 0.85 && queries == 100 && articles == 2000 && distill <= Duration::from_secs(1800),
            format!("NDCG@20 = {:.4} on {} held-out queries; distillation took {:.0} s", ranker.report.ndcg_at_20, ranker.test_queries.len(), distill.as_secs_f64()),
        ),
    ));

    let ev: Evaluation = run.read_json(a::EVALUATION, Stage::Eval).unwrap();
    let method = |name: &str| ev.methods.iter().find(|m| m.method == name).unwrap().metrics.clone();
    let (m, r) = (method("mawseo"), method("random"));
    results.push((
        "End-to-end: >= 300 instances, boosting +10 pp over random, promotion above random",
        outcome(
            m.revisions >= 300 && m.rank_boosting_rate - r.rank_boosting_rate >= 0.10 && m.promotion_success_rate > r.promotion_success_rate,
            format!(
                "{} instances; boosting {:.2}% vs {:.2}%; promotion {:.2}% vs {:.2}%",
                m.revisions,
                100.0 * m.rank_boosting_rate,
                100.0 * r.rank_boosting_rate,
                100.0 * m.promotion_success_rate,
                100.0 * r.promotion_success_rate
            ),
        ),
    ));

    let coh: CoherenceArtifactReport = run.read_json(a::COHERENCE_REPORT, Stage::DefendCoherence).unwrap();
    let (t, f) = (&coh.training, &coh.flagging);
    let n_triplets = t.train_triplets + t.test_triplets;
    results.push((
        "Coherence: held-out >= 0.80 on 20k triplets, recall >= 0.70, legitimate >= 0.80, hinge 0.0/1.3",
        outcome(
            n_triplets == 20_000 && t.held_out_accuracy >= 0.80 && f.recall >= 0.70 && f.legitimate_accuracy >= 0.80 && hinge_outcome.pass,
            format!(
                "held-out {:.4} on {n_triplets}; recall {:.4} on {} revisions; legitimate {:.4}; {}",
                t.held_out_accuracy, f.recall, f.revisions, f.legitimate_accuracy, hinge_outcome.detail
            ),
        ),
    ));

    let rt: RetrainingReport = run.read_json(a::RETRAINING_REPORT, Stage::DefendAdvTrain).unwrap();
    results.push((
        "Adversarial retraining: recall strictly up, legitimate >= 0.80",
        outcome(
            rt.retrained.recall > rt.original.recall && rt.retrained.legitimate_accuracy >= 0.80,
            format!(
                "recall {:.4} -> {:.4}; legitimate {:.4} -> {:.4} ({} revisions, {} legitimate)",
                rt.original.recall, rt.retrained.recall, rt.original.legitimate_accuracy, rt.retrained.legitimate_accuracy, rt.revisions, rt.legitimate
            ),
        ),
    ));

    let report_before = files(run.root());
    pa.run_stage(Stage::Eval).unwrap();
    pa.run_stage(Stage::Report).unwrap();
    let rerun_same = files(run.root()) == report_before;
    let (pb, second, _) = run_pipeline(dir_b.path());
    let other = files(pb.run_dir().root());
    let differing: Vec<&String> = report_before.keys().filter(|k| other.get(*k) != report_before.get(*k)).collect();
    results.push((
        "Reproducibility: byte-identical pipeline under a fixed seed, <= 2 h",
        outcome(
            rerun_same && differing.is_empty() && other.len() == report_before.len() && first.max(second) <= Duration::from_secs(7200),
            format!(
                "{} files, differing {:?}; eval rerun identical: {rerun_same}; runs took {:.0} s and {:.0} s",
                report_before.len(),
                differing,
                first.as_secs_f64(),
                second.as_secs_f64()
            ),
        ),
    ));

    let mut failed = 0;
    for (name, o) in &results {
        println!("{} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
        failed += !o.pass as usize;
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
