use std::collections::{BTreeMap, BTreeSet};

use mawseo_core::corpus::{remove_paragraph, single_insertion_diff};
use mawseo_core::text::{normalize_whitespace, split_sentences, tokenize};
use mawseo_core::vocab::fixture_word_vectors;
use mawseo_core::{apply_revision, lead_paragraph, load_corpus, save_corpus, synth_corpus, Paragraph, VocabularySpec};
use proptest::prelude::*;

#[test]
fn five_hundred_article_corpus_round_trips() {
    let c = synth_corpus(11, 500, &VocabularySpec::default());
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("corpus.jsonl");
    save_corpus(&c, &path).unwrap();
    let bytes = std::fs::read(&path).unwrap();
    let back = load_corpus(&path).unwrap();
    assert_eq!(back, c);
    save_corpus(&back, &path).unwrap();
    assert_eq!(std::fs::read(&path).unwrap(), bytes);
}

#[test]
fn lead_paragraph_is_first_record_paragraph() {
    let c = synth_corpus(3, 50, &VocabularySpec::default());
    let text = c.to_jsonl();
    for (line, a) in text.lines().zip(c.articles()) {
        let raw: serde_json::Value = serde_json::from_str(line).unwrap();
        assert_eq!(raw["id"], a.id.as_str());
        assert_eq!(raw["paragraphs"][0].as_str().unwrap(), lead_paragraph(a).text());
    }
}

fn jaccard(a: &BTreeSet<String>, b: &BTreeSet<String>) -> f64 {
    a.intersection(b).count() as f64 / a.union(b).count() as f64
}

#[test]
fn same_category_articles_overlap_more() {
    let c = synth_corpus(7, 200, &VocabularySpec::default());
    let stop = mawseo_core::Lexicons::default().stopwords;
    let sets: Vec<(String, BTreeSet<String>)> = c
        .articles()
        .map(|a| (a.category_tags[0].clone(), a.tokens().filter(|t| !stop.contains(*t)).cloned().collect()))
        .collect();
    let (mut within, mut across) = ((0.0, 0usize), (0.0, 0usize));
    for i in 0..sets.len() {
        for j in i + 1..sets.len() {
            let s = jaccard(&sets[i].1, &sets[j].1);
            let slot = if sets[i].0 == sets[j].0 { &mut within } else { &mut across };
            slot.0 += s;
            slot.1 += 1;
        }
    }
    let (w, x) = (within.0 / within.1 as f64, across.0 / across.1 as f64);
    assert!(w > x, "within {w} across {x}");
}

#[test]
fn fixture_vectors_round_trip_and_cover_corpus() {
    let t = fixture_word_vectors();
    let text = t.to_text();
    let again = mawseo_core::WordVectorTable::parse(&text, std::path::Path::new("x")).unwrap();
    assert_eq!(again.to_text(), text);
    let c = synth_corpus(7, 100, &VocabularySpec::default());
    let mut counts: BTreeMap<bool, usize> = BTreeMap::new();
    for tok in c.articles().flat_map(|a| a.tokens()) {
        *counts.entry(t.contains(tok)).or_default() += 1;
    }
    // everything except numbers and the odd multi-word name is in-vocabulary
    assert!(counts.get(&false).copied().unwrap_or(0) * 100 < counts[&true]);
}

fn word() -> impl Strategy<Value = String> {
    "[A-Za-z]{1,8}"
}

fn paragraph_text() -> impl Strategy<Value = String> {
    prop::collection::vec((prop::collection::vec(word(), 1..6), prop::sample::select(vec![".", "!", "?"])), 1..4)
        .prop_map(|ss| {
            ss.into_iter()
                .map(|(ws, p)| {
                    let mut s = ws.join(" ");
                    s.push_str(p);
                    s
                })
                .collect::<Vec<_>>()
                .join(" ")
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn revision_fuzz(texts in prop::collection::vec(paragraph_text(), 2..7), new in paragraph_text(), i in 0usize..6) {
        let paragraphs: Vec<Paragraph> = texts.iter().map(|t| Paragraph::new(t.clone()).unwrap()).collect();
        let a = mawseo_core::Article::new("x", "X", vec![], paragraphs).unwrap();
        let p = Paragraph::new(new).unwrap();
        let i = i % a.paragraphs.len();
        let before = a.clone();
        let r = apply_revision(&a, &p, i).unwrap();
        prop_assert_eq!(&a, &before);
        prop_assert_eq!(r.paragraphs.len(), a.paragraphs.len() + 1);
        prop_assert_eq!(&r.paragraphs[..=i], &a.paragraphs[..=i]);
        prop_assert_eq!(&r.paragraphs[i + 1], &p);
        prop_assert_eq!(&r.paragraphs[i + 2..], &a.paragraphs[i + 1..]);
        prop_assert_eq!(remove_paragraph(&r, i + 1).unwrap(), a.clone());
        let d = single_insertion_diff(&a, &r).unwrap();
        // a duplicate of a neighbour may be located at a neighbouring slot
        prop_assert_eq!(remove_paragraph(&r, d.inserted).unwrap(), a);
    }

    #[test]
    fn text_functions_are_pure_and_cover_text(t in paragraph_text()) {
        prop_assert_eq!(tokenize(&t), tokenize(&t));
        let s = split_sentences(&t);
        prop_assert_eq!(&s, &split_sentences(&t));
        prop_assert_eq!(normalize_whitespace(&s.join(" ")), normalize_whitespace(&t));
    }

    #[test]
    fn embed_sentence_norm_is_zero_or_one(t in "[a-z ]{0,40}") {
        let table = fixture_word_vectors();
        let v = table.embed_sentence(&t);
        let n = mawseo_core::embeddings::norm(v.values());
        prop_assert!(v.is_empty() && n == 0.0 || (n - 1.0).abs() < 1e-6);
    }

    #[test]
    fn cosine_properties(u in prop::collection::vec(-5.0f64..5.0, 8), v in prop::collection::vec(-5.0f64..5.0, 8), alpha in 0.01f64..100.0) {
        let c = mawseo_core::cosine(&u, &v);
        prop_assert!((-1.0..=1.0).contains(&c));
        prop_assert!((c - mawseo_core::cosine(&v, &u)).abs() < 1e-12);
        let su: Vec<f64> = u.iter().map(|x| x * alpha).collect();
        prop_assert!((c - mawseo_core::cosine(&su, &v)).abs() < 1e-9);
        if mawseo_core::embeddings::norm(&u) > 1e-6 {
            prop_assert!((mawseo_core::cosine(&u, &u) - 1.0).abs() < 1e-12);
        }
    }
}
