//! Flags an inserted paragraph when it reads less coherently at a joint
//! than the pairing it displaced.

use mawseo_core::Article;
use serde::{Deserialize, Serialize};

use crate::model::CoherenceModel;
use crate::triplets::{triplets_from_revision, AnchorSide};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointScores {
    pub side: AnchorSide,
    /// Score of the pairing the original article had.
    pub original: f64,
    /// Score of the pairing through the inserted paragraph.
    pub inserted: f64,
}

impl JointScores {
    /// `inserted < original + margin`; a larger margin flags more.
    pub fn flags(&self, margin: f64) -> bool {
        self.inserted < self.original + margin
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevisionDecision {
    pub flagged: bool,
    pub joints: Vec<JointScores>,
    /// The inserted paragraph repeats its neighbour verbatim.
    pub duplicate: bool,
}

/// Joint scores of a single-paragraph insertion. Fails with a contract
/// error when `after` is not `before` plus one paragraph.
pub fn joint_scores(model: &CoherenceModel, before: &Article, after: &Article) -> crate::Result<Vec<JointScores>> {
    Ok(triplets_from_revision(before, after)?
        .iter()
        .map(|t| {
            let (a, b) = t.positive_pair();
            let (c, d) = t.negative_pair();
            JointScores { side: t.side, original: model.score(a, b), inserted: model.score(c, d) }
        })
        .collect())
}

pub fn decide(joints: Vec<JointScores>, margin: f64) -> RevisionDecision {
    RevisionDecision { flagged: joints.iter().any(|j| j.flags(margin)), joints, duplicate: false }
}

/// A copied neighbour adds no foreign text; the diff cannot even say which
/// copy is new, so it is never flagged.
pub fn detect_revision(model: &CoherenceModel, before: &Article, after: &Article, margin: f64) -> crate::Result<RevisionDecision> {
    let diff = mawseo_core::corpus::single_insertion_diff(before, after)?;
    let i = diff.inserted;
    let text = after.paragraphs[i].text();
    let is_copy = |j: Option<usize>| j.and_then(|j| after.paragraphs.get(j)).is_some_and(|p| p.text() == text);
    if is_copy(i.checked_sub(1)) || is_copy(Some(i + 1)) {
        return Ok(RevisionDecision { flagged: false, joints: Vec::new(), duplicate: true });
    }
    Ok(decide(joint_scores(model, before, after)?, margin))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FlaggingReport {
    pub margin: f64,
    pub revisions: usize,
    pub flagged_revisions: usize,
    pub legitimate: usize,
    pub flagged_legitimate: usize,
    /// Flagged fraction of the inserted revisions.
    pub recall: f64,
    /// Unflagged fraction of the legitimate samples.
    pub legitimate_accuracy: f64,
    pub revision_decisions: Vec<RevisionDecision>,
    pub legitimate_decisions: Vec<RevisionDecision>,
}

pub fn evaluate_flagging(
    model: &CoherenceModel,
    revisions: &[(Article, Article)],
    legitimate: &[(Article, Article)],
    margin: f64,
) -> crate::Result<FlaggingReport> {
    let run = |set: &[(Article, Article)]| -> crate::Result<Vec<RevisionDecision>> {
        set.iter().map(|(b, a)| detect_revision(model, b, a, margin)).collect()
    };
    let revision_decisions = run(revisions)?;
    let legitimate_decisions = run(legitimate)?;
    let flagged_revisions = revision_decisions.iter().filter(|d| d.flagged).count();
    let flagged_legitimate = legitimate_decisions.iter().filter(|d| d.flagged).count();
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    Ok(FlaggingReport {
        margin,
        revisions: revisions.len(),
        flagged_revisions,
        legitimate: legitimate.len(),
        flagged_legitimate,
        recall: frac(flagged_revisions, revisions.len()),
        legitimate_accuracy: frac(legitimate.len() - flagged_legitimate, legitimate.len()),
        revision_decisions,
        legitimate_decisions,
    })
}
