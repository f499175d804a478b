//! Synthetic vocabulary: categories with their drugs, keywords and aspect
//! words, organisations, brands, and a matching word-vector table.

use std::collections::BTreeSet;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::embeddings::WordVectorTable;
use crate::lexicon::Lexicons;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VocabularySpec {
    pub seed: u64,
    pub n_categories: usize,
    pub drugs_per_category: usize,
    pub keywords_per_category: usize,
    pub aspects_per_category: usize,
    pub background_words: usize,
    pub n_organizations: usize,
    pub n_pharmacies: usize,
    /// Share of drugs whose name is two words, e.g. "talvex forte".
    pub two_word_drug_fraction: f64,
    pub dim: usize,
}

impl Default for VocabularySpec {
    fn default() -> Self {
        Self {
            seed: 2024,
            n_categories: 20,
            drugs_per_category: 5,
            keywords_per_category: 24,
            aspects_per_category: 30,
            background_words: 150,
            n_organizations: 40,
            n_pharmacies: 24,
            two_word_drug_fraction: 0.1,
            dim: 50,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Drug {
    /// Lowercase display name; one or two words.
    pub name: String,
    pub brand: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Category {
    pub name: String,
    pub keywords: Vec<String>,
    pub aspects: Vec<String>,
    pub drugs: Vec<Drug>,
}

/// Template words that are neither lexicon entries nor generated words.
pub const FUNCTION_WORDS: &[&str] = &[
    "used", "treatment", "brand", "name", "first", "since", "studies", "show", "studied", "several", "known",
    "forte", "retard", "plus", "depot", "form", "type", "class", "group", "case", "cases", "part", "found",
    "reported", "noted", "based", "associated", "called",
];

const DRUG_SUFFIXES: &[&str] = &[
    "mab", "pril", "olol", "vir", "statin", "azole", "cillin", "oxin", "afil", "tinib", "sartan", "dronate",
    "parin", "triptan", "setron", "lukast", "zepam", "floxacin", "profen", "caine",
];
const SECOND_WORDS: &[&str] = &["forte", "retard", "plus", "depot"];
const PHARMACY_SUFFIXES: &[&str] = &["Pharmacy", "Drugstore", "Meds", "Chemist", "Apothecary", "Rx"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub spec: VocabularySpec,
    pub lexicons: Lexicons,
    pub categories: Vec<Category>,
    /// Generated content words shared by every category.
    pub background: Vec<String>,
    /// Capitalised organisation stems; a full name adds an org suffix.
    pub organizations: Vec<String>,
    /// Promotional business names, e.g. "Vexora Pharmacy".
    pub pharmacies: Vec<String>,
}

struct WordMaker {
    used: BTreeSet<String>,
}

impl WordMaker {
    const ONSETS: &'static [&'static str] = &[
        "b", "c", "d", "f", "g", "k", "l", "m", "n", "p", "r", "s", "t", "v", "z", "br", "cl", "dr", "fl", "gr",
        "pr", "st", "tr", "ph", "th", "ch",
    ];
    const VOWELS: &'static [&'static str] = &["a", "e", "i", "o", "u"];
    const CODAS: &'static [&'static str] = &["n", "r", "l", "s", "x"];

    fn new(lex: &Lexicons) -> Self {
        let mut used = BTreeSet::new();
        for set in [&lex.promo_keywords, &lex.blocklist, &lex.stopwords, &lex.verbs, &lex.nouns, &lex.adjectives] {
            used.extend(set.iter().cloned());
        }
        for g in &lex.gazetteer {
            used.extend(crate::text::tokenize(g));
        }
        for s in &lex.org_suffixes {
            used.insert(s.to_lowercase());
        }
        used.extend(FUNCTION_WORDS.iter().map(|s| s.to_string()));
        Self { used }
    }

    fn stem(&self, rng: &mut ChaCha8Rng, syllables: usize) -> String {
        let mut w = String::new();
        for _ in 0..syllables {
            w.push_str(Self::ONSETS.choose(rng).unwrap());
            w.push_str(Self::VOWELS.choose(rng).unwrap());
            if rng.random_bool(0.3) {
                w.push_str(Self::CODAS.choose(rng).unwrap());
            }
        }
        w
    }

    fn fresh(&mut self, rng: &mut ChaCha8Rng, min_syl: usize, max_syl: usize, suffix: &str) -> String {
        loop {
            let n = rng.random_range(min_syl..=max_syl);
            let w = format!("{}{}", self.stem(rng, n), suffix);
            if w.len() >= 4 && self.used.insert(w.clone()) {
                return w;
            }
        }
    }
}

pub fn capitalize(s: &str) -> String {
    let mut c = s.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

/// Capitalises every word, e.g. "talvex forte" -> "Talvex Forte".
pub fn title_case(s: &str) -> String {
    s.split(' ').map(capitalize).collect::<Vec<_>>().join(" ")
}

impl Vocabulary {
    pub fn generate(spec: &VocabularySpec) -> Self {
        Self::generate_with(spec, Lexicons::default())
    }

    pub fn generate_with(spec: &VocabularySpec, lexicons: Lexicons) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
        let mut maker = WordMaker::new(&lexicons);
        let mut categories = Vec::with_capacity(spec.n_categories);
        for _ in 0..spec.n_categories {
            let name = maker.fresh(&mut rng, 2, 2, "ology");
            let keywords = (0..spec.keywords_per_category).map(|_| maker.fresh(&mut rng, 2, 3, "")).collect();
            let aspects = (0..spec.aspects_per_category).map(|_| maker.fresh(&mut rng, 2, 3, "")).collect();
            let drugs = (0..spec.drugs_per_category)
                .map(|_| {
                    let suffix = DRUG_SUFFIXES.choose(&mut rng).unwrap();
                    let mut name = maker.fresh(&mut rng, 1, 2, suffix);
                    if rng.random_bool(spec.two_word_drug_fraction) {
                        name = format!("{name} {}", SECOND_WORDS.choose(&mut rng).unwrap());
                    }
                    let brand = capitalize(&maker.fresh(&mut rng, 2, 3, ""));
                    Drug { name, brand }
                })
                .collect();
            categories.push(Category { name, keywords, aspects, drugs });
        }
        let background = (0..spec.background_words).map(|_| maker.fresh(&mut rng, 2, 3, "")).collect();
        let organizations =
            (0..spec.n_organizations).map(|_| capitalize(&maker.fresh(&mut rng, 2, 3, ""))).collect();
        let pharmacies = (0..spec.n_pharmacies)
            .map(|_| {
                let stem = capitalize(&maker.fresh(&mut rng, 2, 3, ""));
                format!("{stem} {}", PHARMACY_SUFFIXES.choose(&mut rng).unwrap())
            })
            .collect();
        Self { spec: spec.clone(), lexicons, categories, background, organizations, pharmacies }
    }

    /// Search queries: every drug name, in category order.
    pub fn queries(&self) -> Vec<String> {
        self.categories.iter().flat_map(|c| c.drugs.iter().map(|d| d.name.clone())).collect()
    }

    pub fn category_index(&self, name: &str) -> Option<usize> {
        self.categories.iter().position(|c| c.name == name)
    }

    pub fn find_drug(&self, name: &str) -> Option<(usize, &Drug)> {
        let lower = name.to_lowercase();
        self.categories
            .iter()
            .enumerate()
            .find_map(|(i, c)| c.drugs.iter().find(|d| d.name == lower).map(|d| (i, d)))
    }

    /// A deterministic 50-ish dimensional table with cluster structure:
    /// words of one category share a centroid, closed-class words are
    /// short vectors, and lexicon groups (places, organisations, promo
    /// verbs, blocklist) each share their own direction.
    pub fn word_vectors(&self) -> WordVectorTable {
        let dim = self.spec.dim;
        let mut rng = ChaCha8Rng::seed_from_u64(self.spec.seed ^ 0x5eed_fec7);
        let unit = |rng: &mut ChaCha8Rng| -> Vec<f64> {
            let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut *rng)).collect();
            let n = crate::embeddings::norm(&v);
            v.into_iter().map(|x| x / n).collect()
        };
        let mix = |a: &[f64], wa: f64, b: &[f64], wb: f64, scale: f64| -> Vec<f64> {
            let v: Vec<f64> = a.iter().zip(b).map(|(x, y)| wa * x + wb * y).collect();
            let n = crate::embeddings::norm(&v);
            v.into_iter().map(|x| scale * x / n).collect()
        };
        let mut table = WordVectorTable::new(dim).expect("dimension >= 8");
        let put = |t: &mut WordVectorTable, w: &str, v: Vec<f64>| {
            if !t.contains(w) {
                t.insert(w, &v).expect("dimension");
            }
        };

        let verb_dir = unit(&mut rng);
        let promo_dir = unit(&mut rng);
        let org_dir = unit(&mut rng);
        let place_dir = unit(&mut rng);
        let block_dir = unit(&mut rng);

        for c in &self.categories {
            let centroid = unit(&mut rng);
            put(&mut table, &c.name, centroid.clone());
            for k in &c.keywords {
                let u = unit(&mut rng);
                put(&mut table, k, mix(&centroid, 0.8, &u, 0.6, 1.0));
            }
            for a in &c.aspects {
                let u = unit(&mut rng);
                put(&mut table, a, mix(&centroid, 0.55, &u, 0.85, 1.0));
            }
            for d in &c.drugs {
                let u = unit(&mut rng);
                let dv = mix(&centroid, 0.7, &u, 0.7, 1.0);
                let head = d.name.split(' ').next().unwrap();
                put(&mut table, head, dv.clone());
                let u = unit(&mut rng);
                put(&mut table, &d.brand.to_lowercase(), mix(&dv, 0.6, &u, 0.8, 1.0));
            }
        }
        for w in self.background.iter().chain(&self.lexicons.nouns).chain(&self.lexicons.adjectives) {
            let u = unit(&mut rng);
            put(&mut table, w, u.into_iter().map(|x| 0.8 * x).collect());
        }
        for w in &self.lexicons.verbs {
            let u = unit(&mut rng);
            put(&mut table, w, mix(&verb_dir, 0.5, &u, 0.85, 0.6));
        }
        for w in self.lexicons.stopwords.iter().map(String::as_str).chain(FUNCTION_WORDS.iter().copied()) {
            let u = unit(&mut rng);
            put(&mut table, w, u.into_iter().map(|x| 0.25 * x).collect());
        }
        for w in &self.lexicons.promo_keywords {
            let u = unit(&mut rng);
            put(&mut table, w, mix(&promo_dir, 0.7, &u, 0.7, 1.0));
        }
        for w in self.organizations.iter().chain(&self.lexicons.org_suffixes) {
            let u = unit(&mut rng);
            put(&mut table, &w.to_lowercase(), mix(&org_dir, 0.6, &u, 0.8, 1.0));
        }
        for g in &self.lexicons.gazetteer {
            for w in crate::text::tokenize(g) {
                let u = unit(&mut rng);
                put(&mut table, &w, mix(&place_dir, 0.7, &u, 0.7, 1.0));
            }
        }
        for w in &self.lexicons.blocklist {
            let u = unit(&mut rng);
            put(&mut table, w, mix(&block_dir, 0.8, &u, 0.6, 1.0));
        }
        for year in 1960..=2023 {
            let u = unit(&mut rng);
            put(&mut table, &year.to_string(), u.into_iter().map(|x| 0.25 * x).collect());
        }
        table
    }
}

/// The shipped fixture: word vectors of the default vocabulary.
pub const FIXTURE_WORD_VECTORS: &str = include_str!("../data/word_vectors_50d.txt");

pub fn fixture_word_vectors() -> WordVectorTable {
    WordVectorTable::parse(FIXTURE_WORD_VECTORS, std::path::Path::new("data/word_vectors_50d.txt"))
        .expect("shipped fixture parses")
}
