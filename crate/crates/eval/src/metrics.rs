//! Attack success rates and the rank-level breakdown, recomputed from the
//! revision log and the thresholds alone.

use std::collections::BTreeMap;

use mawseo_core::{ObjectiveFlags, Revision};
use serde::{Deserialize, Serialize};

use crate::error::{contract, Result};
use crate::thresholds::Thresholds;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub revisions: usize,
    pub rank_boosted: usize,
    pub evaded: usize,
    pub topic_relevant: usize,
    pub consistent: usize,
    pub all_objectives: usize,
    pub rank_boosting_rate: f64,
    pub evasion_rate: f64,
    pub topic_relevancy_rate: f64,
    pub semantic_consistency_rate: f64,
    pub promotion_success_rate: f64,
    pub rank_levels: Vec<RankLevelRow>,
}

/// One row per bucket of `rank_before`: `[2, 100]`, `[101, 200]`, ...
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RankLevelRow {
    pub first_rank: usize,
    pub last_rank: usize,
    pub revisions: usize,
    pub boosted: usize,
    pub boosting_rate: f64,
    /// Mean `rank_before − rank_after` over the boosted revisions.
    pub mean_margin: f64,
}

pub const RANK_LEVEL_WIDTH: usize = 100;

fn flags(r: &Revision, t: &Thresholds) -> ObjectiveFlags {
    r.evaluate(t.topic_threshold, t.consistency_threshold)
}

pub fn compute_metrics(revisions: &[Revision], thresholds: &Thresholds) -> Result<MetricsReport> {
    if revisions.is_empty() {
        return Err(contract("no revisions to score"));
    }
    let f: Vec<ObjectiveFlags> = revisions.iter().map(|r| flags(r, thresholds)).collect();
    let count = |p: fn(&ObjectiveFlags) -> bool| f.iter().filter(|x| p(x)).count();
    let n = revisions.len();
    let rate = |k: usize| k as f64 / n as f64;
    let (rb, ev, tr, co, all) =
        (count(|x| x.rank_boosted), count(|x| x.evaded), count(|x| x.topic_relevant), count(|x| x.consistent), count(ObjectiveFlags::all));
    Ok(MetricsReport {
        revisions: n,
        rank_boosted: rb,
        evaded: ev,
        topic_relevant: tr,
        consistent: co,
        all_objectives: all,
        rank_boosting_rate: rate(rb),
        evasion_rate: rate(ev),
        topic_relevancy_rate: rate(tr),
        semantic_consistency_rate: rate(co),
        promotion_success_rate: rate(all),
        rank_levels: rank_level_report(revisions),
    })
}

/// Revisions without a starting rank, or starting at rank 1, fall outside
/// every bucket.
pub fn rank_level_report(revisions: &[Revision]) -> Vec<RankLevelRow> {
    let mut buckets: BTreeMap<usize, (usize, usize, usize)> = BTreeMap::new();
    for r in revisions {
        let Some(before) = r.rank_before.filter(|&b| b >= 2) else { continue };
        let b = (before - 1) / RANK_LEVEL_WIDTH;
        let e = buckets.entry(b).or_default();
        e.0 += 1;
        if let (true, Some(after)) = (r.rank_improved(), r.rank_after) {
            e.1 += 1;
            e.2 += before - after;
        }
    }
    buckets
        .into_iter()
        .map(|(b, (n, boosted, margin))| RankLevelRow {
            first_rank: (b * RANK_LEVEL_WIDTH + 1).max(2),
            last_rank: (b + 1) * RANK_LEVEL_WIDTH,
            revisions: n,
            boosted,
            boosting_rate: boosted as f64 / n as f64,
            mean_margin: if boosted == 0 { 0.0 } else { margin as f64 / boosted as f64 },
        })
        .collect()
}
