//! Views and revenue attributable to boosted ranks: `R = V × r_v × R_a`.

use std::path::Path;

use mawseo_core::Revision;
use serde::{Deserialize, Serialize};

use crate::error::{EvalError, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RevenueEstimate {
    pub total_views: f64,
    pub view_through_rate: f64,
    pub revenue_per_action: f64,
    pub revenue: f64,
}

pub fn estimate_revenue(total_views: f64, view_through_rate: f64, revenue_per_action: f64) -> Result<RevenueEstimate> {
    if [total_views, view_through_rate, revenue_per_action].iter().any(|x| !(x.is_finite() && *x >= 0.0)) {
        return Err(EvalError::Contract("revenue inputs must be finite and non-negative".into()));
    }
    Ok(RevenueEstimate {
        total_views,
        view_through_rate,
        revenue_per_action,
        revenue: total_views * view_through_rate * revenue_per_action,
    })
}

/// Mean views of an article at each search rank; `views[0]` is rank 1.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewTable {
    views: Vec<f64>,
}

impl Default for ViewTable {
    fn default() -> Self {
        Self::parse(include_str!("../data/view_volumes.csv")).expect("bundled view table parses")
    }
}

impl ViewTable {
    /// `rank,views` lines with ranks 1..=n in order; `#` comments and a
    /// header line are allowed.
    pub fn parse(text: &str) -> Result<Self> {
        let mut views = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || line.starts_with("rank") {
                continue;
            }
            let bad = |m: &str| EvalError::Config(format!("view table line {}: {m}", i + 1));
            let (r, v) = line.split_once(',').ok_or_else(|| bad("expected `rank,views`"))?;
            let r: usize = r.trim().parse().map_err(|_| bad("rank is not an integer"))?;
            let v: f64 = v.trim().parse().map_err(|_| bad("views is not a number"))?;
            if r != views.len() + 1 || !(v >= 0.0) {
                return Err(bad("ranks must run 1, 2, 3, ... with non-negative views"));
            }
            views.push(v);
        }
        if views.is_empty() {
            return Err(EvalError::Config("empty view table".into()));
        }
        Ok(Self { views })
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Views at `rank`; ranks past the table get none.
    pub fn views_at(&self, rank: usize) -> f64 {
        rank.checked_sub(1).and_then(|i| self.views.get(i)).copied().unwrap_or(0.0)
    }

    pub fn max_rank(&self) -> usize {
        self.views.len()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ViewSummary {
    pub views_before: f64,
    pub views_after: f64,
}

/// Total views of the revised articles at their ranks before and after.
pub fn revision_views(table: &ViewTable, revisions: &[Revision]) -> ViewSummary {
    let at = |r: Option<usize>| r.map_or(0.0, |r| table.views_at(r));
    ViewSummary {
        views_before: revisions.iter().map(|r| at(r.rank_before)).sum(),
        views_after: revisions.iter().map(|r| at(r.rank_after)).sum(),
    }
}
