use serde::{Deserialize, Serialize};

/// Confusion counts and derived scores for a binary task where `true` is
/// the positive class. Undefined ratios are reported as 0.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub true_positives: usize,
    pub false_positives: usize,
    pub true_negatives: usize,
    pub false_negatives: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(a: usize, b: usize) -> f64 {
    if b == 0 {
        0.0
    } else {
        a as f64 / b as f64
    }
}

pub fn binary_report(predicted: &[bool], truth: &[bool]) -> BinaryReport {
    assert_eq!(predicted.len(), truth.len(), "prediction/label length mismatch");
    let mut r = BinaryReport::default();
    for (&p, &t) in predicted.iter().zip(truth) {
        match (p, t) {
            (true, true) => r.true_positives += 1,
            (true, false) => r.false_positives += 1,
            (false, false) => r.true_negatives += 1,
            (false, true) => r.false_negatives += 1,
        }
    }
    r.precision = ratio(r.true_positives, r.true_positives + r.false_positives);
    r.recall = ratio(r.true_positives, r.true_positives + r.false_negatives);
    r.f1 = if r.precision + r.recall > 0.0 { 2.0 * r.precision * r.recall / (r.precision + r.recall) } else { 0.0 };
    r.accuracy = ratio(r.true_positives + r.true_negatives, truth.len());
    r
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_and_scores() {
        let r = binary_report(&[true, true, false, false, true], &[true, false, false, true, true]);
        assert_eq!((r.true_positives, r.false_positives, r.true_negatives, r.false_negatives), (2, 1, 1, 1));
        assert!((r.precision - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.recall - 2.0 / 3.0).abs() < 1e-12);
        assert!((r.accuracy - 0.6).abs() < 1e-12);
        assert_eq!(binary_report(&[false], &[false]).f1, 0.0);
    }
}
