//! Heuristic entity grid over a pair of chunks.
//!
//! Entities are capitalised tokens inside a sentence, lexicon nouns and
//! other content words. A token's role is subject-like before the first
//! verb of its sentence, object-like after it and `Other` when the
//! sentence has no lexicon verb.

use std::collections::BTreeSet;

use mawseo_core::text::tokenize_with_spans;
use mawseo_core::Lexicons;
use serde::{Deserialize, Serialize};

use crate::chunk::SentenceChunk;

pub const NUM_ROLES: usize = 4;
pub const NUM_TRANSITIONS: usize = NUM_ROLES * NUM_ROLES;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Role {
    Subject,
    Object,
    Other,
    Absent,
}

impl Role {
    pub fn index(self) -> usize {
        self as usize
    }
}

/// `entities[i]` has role `roles[i][0]` in the first chunk and
/// `roles[i][1]` in the second.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct EntityGrid {
    pub entities: Vec<String>,
    pub roles: Vec<[Role; 2]>,
}

impl EntityGrid {
    /// Counts of role bigrams, indexed `from * 4 + to`.
    pub fn transitions(&self) -> [u32; NUM_TRANSITIONS] {
        let mut t = [0; NUM_TRANSITIONS];
        for [a, b] in &self.roles {
            t[a.index() * NUM_ROLES + b.index()] += 1;
        }
        t
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EntityExtractor {
    nouns: BTreeSet<String>,
    verbs: BTreeSet<String>,
    /// Function and descriptive words that never count as entities.
    excluded: BTreeSet<String>,
}

impl EntityExtractor {
    pub fn new(lex: &Lexicons) -> Self {
        let excluded = lex.stopwords.iter().chain(&lex.adjectives).chain(&lex.verbs).cloned().collect();
        Self { nouns: lex.nouns.clone(), verbs: lex.verbs.clone(), excluded }
    }

    fn is_entity(&self, token: &str, lower: &str, position: usize) -> bool {
        if self.nouns.contains(lower) {
            return true;
        }
        if self.excluded.contains(lower) || !lower.chars().all(|c| c.is_alphabetic() || c == '-') {
            return false;
        }
        let capitalised = token.chars().next().is_some_and(char::is_uppercase);
        (capitalised && position > 0) || lower.chars().count() >= 3
    }

    /// Entities of one sentence with their roles, in order of first
    /// occurrence; a repeated entity keeps its most salient role.
    pub fn sentence_roles(&self, sentence: &str) -> Vec<(String, Role)> {
        let tokens = tokenize_with_spans(sentence);
        let lowers: Vec<String> = tokens.iter().map(|(t, _)| t.to_lowercase()).collect();
        let verb = lowers.iter().position(|t| self.verbs.contains(t));
        let mut out: Vec<(String, Role)> = Vec::new();
        for (i, ((tok, _), lower)) in tokens.iter().zip(&lowers).enumerate() {
            if !self.is_entity(tok, lower, i) {
                continue;
            }
            let role = match verb {
                Some(v) if i < v => Role::Subject,
                Some(_) => Role::Object,
                None => Role::Other,
            };
            merge(&mut out, lower, role);
        }
        out
    }

    pub fn chunk_roles(&self, chunk: &SentenceChunk) -> Vec<(String, Role)> {
        let mut out = Vec::new();
        for s in &chunk.sentences {
            for (e, r) in self.sentence_roles(s) {
                merge(&mut out, &e, r);
            }
        }
        out
    }

    pub fn grid(&self, a: &SentenceChunk, b: &SentenceChunk) -> EntityGrid {
        let ra = self.chunk_roles(a);
        let rb = self.chunk_roles(b);
        let mut entities: Vec<String> = ra.iter().map(|(e, _)| e.clone()).collect();
        for (e, _) in &rb {
            if !entities.contains(e) {
                entities.push(e.clone());
            }
        }
        let lookup = |side: &[(String, Role)], e: &str| side.iter().find(|(x, _)| x == e).map_or(Role::Absent, |(_, r)| *r);
        let roles = entities.iter().map(|e| [lookup(&ra, e), lookup(&rb, e)]).collect();
        EntityGrid { entities, roles }
    }
}

fn merge(out: &mut Vec<(String, Role)>, entity: &str, role: Role) {
    match out.iter_mut().find(|(e, _)| e == entity) {
        Some((_, r)) => *r = (*r).min(role),
        None => out.push((entity.to_string(), role)),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chunk::ChunkOrigin;

    fn chunk(s: &str) -> SentenceChunk {
        SentenceChunk::from_text(s, ChunkOrigin::First)
    }

    #[test]
    fn roles_follow_the_first_verb() {
        let x = EntityExtractor::new(&Lexicons::default());
        let roles = x.sentence_roles("The dosage of Zorvane treats the chronic infection.");
        let get = |e: &str| roles.iter().find(|(x, _)| x == e).map(|(_, r)| *r);
        assert_eq!(get("dosage"), Some(Role::Subject));
        assert_eq!(get("zorvane"), Some(Role::Subject));
        assert_eq!(get("infection"), Some(Role::Object));
        assert_eq!(get("the"), None);
        let none = x.sentence_roles("Zorvane and the dosage in Paris.");
        assert!(none.iter().all(|(_, r)| *r == Role::Other));
    }

    #[test]
    fn grid_shape_and_transition_sum() {
        let x = EntityExtractor::new(&Lexicons::default());
        let g = x.grid(
            &chunk("The dosage of Zorvane treats the infection. It also affects the metabolism of patients."),
            &chunk("The metabolism of Zorvane regulates the liver."),
        );
        assert_eq!(g.roles.len(), g.entities.len());
        let t = g.transitions();
        assert_eq!(t.iter().sum::<u32>() as usize, g.entities.len());
        assert_eq!(t[Role::Absent.index() * NUM_ROLES + Role::Absent.index()], 0);
        let shared = g.roles.iter().filter(|[a, b]| *a != Role::Absent && *b != Role::Absent).count();
        assert!(shared >= 2, "{g:?}");
    }
}
