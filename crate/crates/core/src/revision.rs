//! The revision record shared by the attack, the metrics and the defenses,
//! plus its JSON-lines log format.

use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{CoreError, Result};

/// Which of the four attack objectives a revision meets.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ObjectiveFlags {
    pub rank_boosted: bool,
    pub evaded: bool,
    pub topic_relevant: bool,
    pub consistent: bool,
}

impl ObjectiveFlags {
    pub fn all(&self) -> bool {
        self.rank_boosted && self.evaded && self.topic_relevant && self.consistent
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Revision {
    /// Producer of the revision, e.g. `mawseo` or `random`.
    pub method: String,
    pub query: String,
    pub article_id: String,
    pub promo: String,
    pub paragraph: String,
    /// The paragraph was inserted between paragraphs `insertion_index` and
    /// `insertion_index + 1`.
    pub insertion_index: usize,
    pub rank_before: Option<usize>,
    pub rank_after: Option<usize>,
    pub target_damaging: bool,
    pub target_probability: f64,
    pub substitute_damaging: Option<bool>,
    pub substitute_probability: Option<f64>,
    pub topic_sim: f64,
    pub neighbor_sim: f64,
    pub objectives: ObjectiveFlags,
}

impl Revision {
    /// Strict improvement; an article that drops out of the results counts
    /// as not boosted.
    pub fn rank_improved(&self) -> bool {
        matches!((self.rank_before, self.rank_after), (Some(b), Some(a)) if a < b)
            || (self.rank_before.is_none() && self.rank_after.is_some())
    }

    /// Recomputes the objective flags from the stored measurements.
    pub fn evaluate(&self, topic_threshold: f64, consistency_threshold: f64) -> ObjectiveFlags {
        ObjectiveFlags {
            rank_boosted: self.rank_improved(),
            evaded: !self.target_damaging,
            topic_relevant: self.topic_sim >= topic_threshold,
            consistent: self.neighbor_sim >= consistency_threshold,
        }
    }
}

pub fn write_revisions(path: &Path, revisions: &[Revision]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for r in revisions {
        serde_json::to_writer(&mut f, r).map_err(std::io::Error::other)?;
        f.write_all(b"\n")?;
    }
    f.flush()?;
    Ok(())
}

pub fn read_revisions(path: &Path) -> Result<Vec<Revision>> {
    let f = BufReader::new(std::fs::File::open(path)?);
    let mut out = Vec::new();
    for (n, line) in f.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| CoreError::Parse {
            path: path.to_path_buf(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn sample() -> Revision {
        Revision {
            method: "mawseo".into(),
            query: "q".into(),
            article_id: "a1".into(),
            promo: "ABC Pharmacy".into(),
            paragraph: "It is sold in ABC Pharmacy.".into(),
            insertion_index: 1,
            rank_before: Some(10),
            rank_after: Some(3),
            target_damaging: false,
            target_probability: 0.1,
            substitute_damaging: Some(false),
            substitute_probability: Some(0.2),
            topic_sim: 0.5,
            neighbor_sim: 0.4,
            objectives: ObjectiveFlags::default(),
        }
    }

    #[test]
    fn evaluate_uses_inclusive_thresholds() {
        let r = sample();
        let f = r.evaluate(0.5, 0.4);
        assert!(f.all());
        assert!(!r.evaluate(0.51, 0.4).topic_relevant);
        let mut worse = r.clone();
        worse.rank_after = Some(10);
        assert!(!worse.rank_improved());
        worse.rank_after = None;
        assert!(!worse.rank_improved());
    }

    #[test]
    fn log_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("r.jsonl");
        let rs = vec![sample(), Revision { rank_after: None, ..sample() }];
        write_revisions(&p, &rs).unwrap();
        assert_eq!(read_revisions(&p).unwrap(), rs);
    }
}
