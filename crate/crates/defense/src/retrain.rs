//! Adversarial retraining of the gradient-boosted vandalism detector with
//! attack revisions added as damaging examples.

use mawseo_core::{apply_revision, Corpus, Paragraph, Revision};
use mawseo_target::{train_target_detector, EditFeatureVector, FeatureExtractor, GbdtConfig, GbdtModel};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};

/// Edit features of each revision against its original article.
pub fn revision_features(corpus: &Corpus, fx: &FeatureExtractor, revisions: &[Revision]) -> Result<Vec<EditFeatureVector>> {
    revisions
        .iter()
        .map(|r| {
            let a = corpus.article(&r.article_id)?;
            let revised = apply_revision(a, &Paragraph::new(r.paragraph.clone())?, r.insertion_index)?;
            Ok(fx.edit_features(a, &revised)?)
        })
        .collect()
}

/// Refits the detector on the original labelled edits plus `revisions`
/// labelled damaging. The revisions must come from training queries only.
pub fn adversarial_retrain(base: &[(EditFeatureVector, bool)], revisions: &[EditFeatureVector], cfg: &GbdtConfig) -> Result<GbdtModel> {
    if revisions.is_empty() {
        return Err(contract("adversarial retraining needs at least one attack revision"));
    }
    let mut data = base.to_vec();
    data.extend(revisions.iter().map(|f| (*f, true)));
    Ok(train_target_detector(&data, cfg)?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectorScore {
    /// Fraction of held-out attack revisions judged damaging.
    pub recall: f64,
    /// Fraction of legitimate edits judged benign.
    pub legitimate_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrainingReport {
    pub revisions: usize,
    pub legitimate: usize,
    pub original: DetectorScore,
    pub retrained: DetectorScore,
}

pub fn score_detector(model: &GbdtModel, threshold: f64, revisions: &[EditFeatureVector], legitimate: &[EditFeatureVector]) -> DetectorScore {
    let damaging = |f: &EditFeatureVector| model.predict_proba(f.values()) >= threshold;
    let frac = |k: usize, n: usize| if n == 0 { 0.0 } else { k as f64 / n as f64 };
    DetectorScore {
        recall: frac(revisions.iter().filter(|f| damaging(f)).count(), revisions.len()),
        legitimate_accuracy: frac(legitimate.iter().filter(|f| !damaging(f)).count(), legitimate.len()),
    }
}

/// Paired evaluation on held-out revisions and an equal number of
/// legitimate edits (the first `revisions.len()` of `legitimate`).
pub fn compare_detectors(
    original: &GbdtModel,
    retrained: &GbdtModel,
    threshold: f64,
    revisions: &[EditFeatureVector],
    legitimate: &[EditFeatureVector],
) -> Result<RetrainingReport> {
    if revisions.is_empty() {
        return Err(contract("no held-out revisions to evaluate"));
    }
    let legit = &legitimate[..legitimate.len().min(revisions.len())];
    Ok(RetrainingReport {
        revisions: revisions.len(),
        legitimate: legit.len(),
        original: score_detector(original, threshold, revisions, legit),
        retrained: score_detector(retrained, threshold, revisions, legit),
    })
}
