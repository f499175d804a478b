//! Word-vector table, mean-pooled sentence vectors and cosine similarity.

use std::borrow::Cow;
use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{contract, CoreError, Result};
use crate::text::tokenize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum OovPolicy {
    /// A random unit vector seeded from a stable hash of the token.
    HashSeededUnit,
}

#[derive(Clone, Debug, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    index: HashMap<String, usize>,
    order: Vec<String>,
    data: Vec<f64>,
    oov: OovPolicy,
}

/// 64-bit FNV-1a; stable across platforms and releases, unlike `DefaultHasher`.
pub fn stable_hash(s: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in s.as_bytes() {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

pub fn random_unit_vector(seed: u64, dim: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    loop {
        let v: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        let n = norm(&v);
        if n > 1e-9 {
            return v.into_iter().map(|x| x / n).collect();
        }
    }
}

impl WordVectorTable {
    pub fn new(dim: usize) -> Result<Self> {
        if dim < 8 {
            return Err(contract(format!("word vector dimension {dim} < 8")));
        }
        Ok(Self { dim, index: HashMap::new(), order: Vec::new(), data: Vec::new(), oov: OovPolicy::HashSeededUnit })
    }

    /// Adds or overwrites the vector for `token`.
    pub fn insert(&mut self, token: impl Into<String>, vector: &[f64]) -> Result<()> {
        if vector.len() != self.dim {
            return Err(contract(format!("vector of dimension {} in a {}-d table", vector.len(), self.dim)));
        }
        let token = token.into();
        match self.index.get(&token) {
            Some(&i) => self.data[i * self.dim..(i + 1) * self.dim].copy_from_slice(vector),
            None => {
                self.index.insert(token.clone(), self.order.len());
                self.order.push(token);
                self.data.extend_from_slice(vector);
            }
        }
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.order.len()
    }

    pub fn is_empty(&self) -> bool {
        self.order.is_empty()
    }

    pub fn oov_policy(&self) -> OovPolicy {
        self.oov
    }

    pub fn tokens(&self) -> &[String] {
        &self.order
    }

    pub fn contains(&self, token: &str) -> bool {
        self.index.contains_key(token)
    }

    pub fn get(&self, token: &str) -> Option<&[f64]> {
        self.index.get(token).map(|&i| &self.data[i * self.dim..(i + 1) * self.dim])
    }

    /// Vector for any token; out-of-vocabulary tokens map to a
    /// deterministic pseudo-random unit vector.
    pub fn vector(&self, token: &str) -> Cow<'_, [f64]> {
        match self.get(token) {
            Some(v) => Cow::Borrowed(v),
            None => Cow::Owned(random_unit_vector(stable_hash(token), self.dim)),
        }
    }

    /// Parses `token v1 ... vd` lines.
    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut table: Option<Self> = None;
        for (n, line) in text.lines().enumerate() {
            let mut parts = line.split_whitespace();
            let Some(token) = parts.next() else { continue };
            let values = parts
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| CoreError::Parse { path: path.to_path_buf(), line: n + 1, message: e.to_string() })?;
            let t = match &mut table {
                Some(t) => t,
                None => table.insert(Self::new(values.len()).map_err(|e| CoreError::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: e.to_string(),
                })?),
            };
            if values.len() != t.dim {
                return Err(CoreError::Parse {
                    path: path.to_path_buf(),
                    line: n + 1,
                    message: format!("ragged dimensions: expected {}, found {}", t.dim, values.len()),
                });
            }
            t.insert(token, &values)?;
        }
        table.ok_or_else(|| CoreError::Parse { path: path.to_path_buf(), line: 0, message: "no vectors".into() })
    }

    /// Serializes with six decimals, one token per line, insertion order.
    pub fn to_text(&self) -> String {
        let mut out = String::with_capacity(self.order.len() * self.dim * 10);
        for (i, tok) in self.order.iter().enumerate() {
            out.push_str(tok);
            for x in &self.data[i * self.dim..(i + 1) * self.dim] {
                let x = if x.abs() < 5e-7 { 0.0 } else { *x };
                write!(out, " {x:.6}").unwrap();
            }
            out.push('\n');
        }
        out
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    /// Sum of token vectors, before normalisation.
    fn sum_vectors<'a>(&self, tokens: impl IntoIterator<Item = &'a str>) -> (Vec<f64>, usize) {
        let mut acc = vec![0.0; self.dim];
        let mut n = 0;
        for t in tokens {
            for (a, x) in acc.iter_mut().zip(self.vector(t).iter()) {
                *a += x;
            }
            n += 1;
        }
        (acc, n)
    }

    pub fn embed_tokens<S: AsRef<str>>(&self, tokens: &[S]) -> SentenceVector {
        let (sum, n) = self.sum_vectors(tokens.iter().map(|t| t.as_ref()));
        if n == 0 {
            return SentenceVector::empty(self.dim);
        }
        SentenceVector::normalized(sum)
    }

    pub fn embed_sentence(&self, text: &str) -> SentenceVector {
        self.embed_tokens(&tokenize(text))
    }
}

pub fn load_word_vectors(path: &Path) -> Result<WordVectorTable> {
    WordVectorTable::parse(&std::fs::read_to_string(path)?, path)
}

/// A unit-norm vector, or the zero vector flagged as empty.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SentenceVector {
    values: Vec<f64>,
    empty: bool,
}

impl SentenceVector {
    pub fn empty(dim: usize) -> Self {
        Self { values: vec![0.0; dim], empty: true }
    }

    /// Normalises `v`; vectors with (numerically) zero norm become empty.
    pub fn normalized(v: Vec<f64>) -> Self {
        let n = norm(&v);
        if n < 1e-10 {
            return Self::empty(v.len());
        }
        Self { values: v.into_iter().map(|x| x / n).collect(), empty: false }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn is_empty(&self) -> bool {
        self.empty
    }

    pub fn dim(&self) -> usize {
        self.values.len()
    }
}

/// Pluggable text encoder; the mean-pooled word-vector table is the
/// built-in provider.
pub trait SentenceEncoder {
    fn dim(&self) -> usize;
    fn encode_tokens(&self, tokens: &[String]) -> SentenceVector;
    fn encode(&self, text: &str) -> SentenceVector {
        self.encode_tokens(&tokenize(text))
    }
}

impl SentenceEncoder for WordVectorTable {
    fn dim(&self) -> usize {
        self.dim
    }

    fn encode_tokens(&self, tokens: &[String]) -> SentenceVector {
        self.embed_tokens(tokens)
    }
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

pub fn dot(u: &[f64], v: &[f64]) -> f64 {
    u.iter().zip(v).map(|(a, b)| a * b).sum()
}

/// Cosine similarity, 0 when either side is the zero vector. Fails on a
/// dimension mismatch.
pub fn try_cosine(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(contract(format!("cosine of {}-d and {}-d vectors", u.len(), v.len())));
    }
    let (nu, nv) = (norm(u), norm(v));
    if nu == 0.0 || nv == 0.0 {
        return Ok(0.0);
    }
    Ok((dot(u, v) / (nu * nv)).clamp(-1.0, 1.0))
}

/// [`try_cosine`] for callers that already guarantee equal dimensions.
pub fn cosine(u: &[f64], v: &[f64]) -> f64 {
    try_cosine(u, v).expect("cosine dimension mismatch")
}
