//! Deterministic synthetic wiki corpus.
//!
//! Each article has a category and a subject (a drug or a category
//! keyword). Every body paragraph opens on its own aspect word, and the
//! paragraph before it closes by mentioning that aspect, so adjacent
//! paragraphs are linked the way real prose is.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{Article, Corpus, Paragraph};
use crate::vocab::{capitalize, title_case, Category, Vocabulary, VocabularySpec};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub n_articles: usize,
    /// Articles generated only for the raw paragraph pool.
    pub n_pool_articles: usize,
    pub min_paragraphs: usize,
    pub max_paragraphs: usize,
    /// Body sentences between the opening and closing sentence.
    pub min_body_sentences: usize,
    pub max_body_sentences: usize,
    pub commerce_rate: f64,
    pub drug_subject_rate: f64,
    pub vocabulary: VocabularySpec,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 7,
            n_articles: 2000,
            n_pool_articles: 600,
            min_paragraphs: 3,
            max_paragraphs: 6,
            min_body_sentences: 1,
            max_body_sentences: 2,
            commerce_rate: 0.4,
            drug_subject_rate: 0.6,
            vocabulary: VocabularySpec::default(),
        }
    }
}

/// Corpus with default shape parameters and a pool of 30% of `n_articles`.
pub fn synth_corpus(seed: u64, n_articles: usize, vocabulary: &VocabularySpec) -> Corpus {
    let cfg = SynthConfig {
        seed,
        n_articles,
        n_pool_articles: (n_articles * 3 / 10).max(10),
        vocabulary: vocabulary.clone(),
        ..SynthConfig::default()
    };
    synth_corpus_with(&cfg, &Vocabulary::generate(vocabulary))
}

pub fn synth_corpus_with(cfg: &SynthConfig, vocab: &Vocabulary) -> Corpus {
    assert!(cfg.n_articles >= 10, "synthetic corpus needs at least 10 articles");
    let mut g = Generator::new(vocab, cfg.clone(), cfg.seed);
    let articles: Vec<Article> = (0..cfg.n_articles).map(|i| g.article(format!("art-{i:05}"))).collect();
    let pool: Vec<Article> = (0..cfg.n_pool_articles).map(|i| g.article(format!("pool-{i:05}"))).collect();
    Corpus::new(articles, pool).expect("generated corpus is valid")
}

/// What an article is about; enough to write more paragraphs for it.
#[derive(Clone, Debug)]
pub struct Profile {
    pub category: usize,
    /// Lowercase subject as it appears mid-sentence.
    pub subject: String,
    pub subject_is_drug: bool,
}

pub struct Generator<'v> {
    vocab: &'v Vocabulary,
    cfg: SynthConfig,
    rng: ChaCha8Rng,
}

fn pick<'a, T>(rng: &mut ChaCha8Rng, xs: &'a [T]) -> &'a T {
    xs.choose(rng).expect("non-empty word list")
}

impl<'v> Generator<'v> {
    pub fn new(vocab: &'v Vocabulary, cfg: SynthConfig, seed: u64) -> Self {
        Self { vocab, cfg, rng: ChaCha8Rng::seed_from_u64(seed) }
    }

    pub fn vocabulary(&self) -> &'v Vocabulary {
        self.vocab
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn cat(&self, p: &Profile) -> &'v Category {
        &self.vocab.categories[p.category]
    }

    pub fn random_profile(&mut self) -> Profile {
        let category = self.rng.random_range(0..self.vocab.categories.len());
        let c = &self.vocab.categories[category];
        if self.rng.random_bool(self.cfg.drug_subject_rate) {
            Profile { category, subject: pick(&mut self.rng, &c.drugs).name.clone(), subject_is_drug: true }
        } else {
            Profile { category, subject: pick(&mut self.rng, &c.keywords).clone(), subject_is_drug: false }
        }
    }

    /// Recovers the profile of an article written by this generator.
    pub fn profile_of(&self, a: &Article) -> Option<Profile> {
        let category = a.category_tags.iter().find_map(|t| self.vocab.category_index(t))?;
        let subject = a.title.to_lowercase();
        let subject_is_drug = self.vocab.find_drug(&subject).is_some();
        Some(Profile { category, subject, subject_is_drug })
    }

    pub fn article(&mut self, id: String) -> Article {
        let profile = self.random_profile();
        self.article_for(id, &profile)
    }

    pub fn article_for(&mut self, id: String, p: &Profile) -> Article {
        let c = self.cat(p);
        let n = self.rng.random_range(self.cfg.min_paragraphs..=self.cfg.max_paragraphs);
        let mut aspects: Vec<&String> = c.aspects.iter().collect();
        aspects.shuffle(&mut self.rng);
        // aspects[j] belongs to paragraph j; the lead has none
        let mut paragraphs = Vec::with_capacity(n);
        for j in 0..n {
            let own = (j > 0).then(|| aspects[j].as_str());
            let next = (j + 1 < n).then(|| aspects[j + 1].as_str());
            let mut sentences = Vec::new();
            match own {
                None => sentences.push(self.lead_intro(p)),
                Some(a) => sentences.push(self.aspect_open(p, a)),
            }
            let body = self.rng.random_range(self.cfg.min_body_sentences..=self.cfg.max_body_sentences);
            for _ in 0..body {
                let s = self.general(p, own);
                sentences.push(s);
            }
            if self.rng.random_bool(self.cfg.commerce_rate) {
                let s = self.commerce(p);
                sentences.push(s);
            }
            match next {
                Some(a) => sentences.push(self.thread_close(p, a)),
                None => sentences.push(self.general(p, own)),
            }
            paragraphs.push(Paragraph::new(sentences.join(" ")).expect("generated paragraph"));
        }
        Article {
            id,
            title: title_case(&p.subject),
            category_tags: vec![c.name.clone()],
            paragraphs,
        }
    }

    /// A fresh body paragraph about the article's subject, not linked to
    /// its neighbours.
    pub fn on_topic_paragraph(&mut self, p: &Profile) -> Paragraph {
        let c = self.cat(p);
        let aspect = pick(&mut self.rng, &c.aspects).clone();
        let mut sentences = vec![self.aspect_open(p, &aspect)];
        let body = self.rng.random_range(self.cfg.min_body_sentences..=self.cfg.max_body_sentences) + 1;
        for _ in 0..body {
            let s = self.general(p, Some(&aspect));
            sentences.push(s);
        }
        if self.rng.random_bool(self.cfg.commerce_rate) {
            let s = self.commerce(p);
            let at = self.rng.random_range(1..=sentences.len());
            sentences.insert(at, s);
        }
        Paragraph::new(sentences.join(" ")).expect("generated paragraph")
    }

    /// A body paragraph about a random subject from another category.
    pub fn off_topic_paragraph(&mut self, p: &Profile) -> Paragraph {
        let mut other = self.random_profile();
        while other.category == p.category && self.vocab.categories.len() > 1 {
            other = self.random_profile();
        }
        self.on_topic_paragraph(&other)
    }

    fn drug_of(&mut self, p: &Profile) -> String {
        if p.subject_is_drug && self.rng.random_bool(0.6) {
            p.subject.clone()
        } else {
            pick(&mut self.rng, &self.vocab.categories[p.category].drugs).name.clone()
        }
    }

    fn mention(&mut self, p: &Profile) -> String {
        let r: f64 = self.rng.random();
        if r < 0.03 {
            let c = pick(&mut self.rng, &self.vocab.categories);
            return pick(&mut self.rng, &c.drugs).name.clone();
        }
        if p.subject_is_drug {
            if r < 0.55 {
                p.subject.clone()
            } else if r < 0.8 {
                pick(&mut self.rng, &self.vocab.categories[p.category].drugs).name.clone()
            } else {
                format!("the {}", self.np(p))
            }
        } else if r < 0.4 {
            format!("{} {}", p.subject, self.noun())
        } else if r < 0.75 {
            pick(&mut self.rng, &self.vocab.categories[p.category].drugs).name.clone()
        } else {
            format!("the {}", self.np(p))
        }
    }

    fn noun(&mut self) -> String {
        if self.rng.random_bool(0.5) {
            let nouns: Vec<&String> = self.vocab.lexicons.nouns.iter().collect();
            pick(&mut self.rng, &nouns).to_string()
        } else {
            pick(&mut self.rng, &self.vocab.background).clone()
        }
    }

    fn adjective(&mut self) -> String {
        let adjs: Vec<&String> = self.vocab.lexicons.adjectives.iter().collect();
        pick(&mut self.rng, &adjs).to_string()
    }

    fn verb(&mut self) -> String {
        let verbs: Vec<&String> =
            self.vocab.lexicons.verbs.iter().filter(|v| !matches!(v.as_str(), "is" | "are" | "was" | "were")).collect();
        pick(&mut self.rng, &verbs).to_string()
    }

    fn keyword(&mut self, p: &Profile) -> String {
        pick(&mut self.rng, &self.vocab.categories[p.category].keywords).clone()
    }

    /// `[adjective] keyword noun`, with the aspect standing in for the
    /// keyword when given.
    fn np_with(&mut self, p: &Profile, aspect: Option<&str>) -> String {
        let head = match aspect {
            Some(a) if self.rng.random_bool(0.35) => a.to_string(),
            _ => self.keyword(p),
        };
        let noun = self.noun();
        if self.rng.random_bool(0.4) {
            format!("{} {head} {noun}", self.adjective())
        } else {
            format!("{head} {noun}")
        }
    }

    fn np(&mut self, p: &Profile) -> String {
        self.np_with(p, None)
    }

    fn lead_intro(&mut self, p: &Profile) -> String {
        let subject = title_case(&p.subject);
        if p.subject_is_drug {
            let (a, b) = (self.np(p), self.np(p));
            let k = self.keyword(p);
            format!("{subject} is a {k} {} used in the treatment of {a} and {b}.", self.noun())
        } else {
            let cat = self.cat(p).name.clone();
            let adj = self.adjective();
            let noun = self.noun();
            let b = self.np(p);
            format!("{subject} is a {adj} {noun} studied in {cat} and {b}.")
        }
    }

    fn aspect_open(&mut self, p: &Profile, aspect: &str) -> String {
        let v = self.verb();
        let obj = self.np(p);
        if self.rng.random_bool(0.5) {
            let m = self.mention(p);
            format!("The {aspect} of {m} {v} the {obj}.")
        } else {
            let np = self.np(p);
            format!("{} {v} {obj} in {np}.", capitalize(aspect))
        }
    }

    fn thread_close(&mut self, p: &Profile, next: &str) -> String {
        let v = self.verb();
        let np = self.np(p);
        match self.rng.random_range(0..3) {
            0 => format!("This {v} the {next} of {np}."),
            1 => format!("It also {v} the {next} in {np}."),
            _ => {
                let m = self.mention(p);
                format!("{} {v} the {next} and {np}.", capitalize(&m))
            }
        }
    }

    fn general(&mut self, p: &Profile, aspect: Option<&str>) -> String {
        let m = self.mention(p);
        let v = self.verb();
        let obj = self.np_with(p, aspect);
        let np2 = self.np(p);
        match self.rng.random_range(0..6) {
            0 => format!("{} {v} the {obj} in {np2}.", capitalize(&m)),
            1 => {
                let adj = self.adjective();
                let noun = self.noun();
                format!("In {adj} {noun}, {m} {v} {obj}.")
            }
            2 => {
                let noun = self.noun();
                format!("The {noun} of {m} {v} {obj} and {np2}.")
            }
            3 => {
                let other = pick(&mut self.rng, &self.vocab.categories[p.category].drugs).name.clone();
                format!("{} and {other} {v} {obj} during {np2}.", capitalize(&m))
            }
            4 => format!("Studies show that {m} {v} {obj} with {np2}."),
            _ => {
                let k = self.keyword(p);
                format!("{} {k} {v} the {obj} of {m}.", capitalize(&self.adjective()))
            }
        }
    }

    fn commerce(&mut self, p: &Profile) -> String {
        let drug = self.drug_of(p);
        let brand = self
            .vocab
            .find_drug(&drug)
            .map(|(_, d)| d.brand.clone())
            .unwrap_or_else(|| capitalize(&self.vocab.background[0]));
        let promo: Vec<&String> = self.vocab.lexicons.promo_keywords.iter().collect();
        let kw = pick(&mut self.rng, &promo).to_string();
        let org = format!(
            "{} {}",
            pick(&mut self.rng, &self.vocab.organizations),
            pick(&mut self.rng, &self.vocab.lexicons.org_suffixes)
        );
        let place = pick(&mut self.rng, &self.vocab.lexicons.gazetteer).clone();
        let year = self.rng.random_range(1965..=2020);
        let noun = self.noun();
        match self.rng.random_range(0..5) {
            0 => format!("{} is {kw} by {org}.", capitalize(&drug)),
            1 => format!("It is {kw} under the brand name {brand} in {place}."),
            2 => format!("The {noun} was first {kw} in {place} in {year}."),
            3 => format!("{org} has {kw} {drug} in {place} since {year}."),
            _ => format!("{} is {kw} in {place} by {org}.", capitalize(&drug)),
        }
    }
}
