//! Human-readable and tab-separated renderings of a finished run. Every
//! number is formatted with a fixed precision so reruns are byte-identical.

use std::fmt::Write;

use mawseo_attack::ranker::RankerReport;
use mawseo_defense::RetrainingReport;
use serde::{Deserialize, Serialize};

use crate::metrics::{MetricsReport, RankLevelRow};
use crate::pipeline::{CoherenceArtifactReport, Evaluation, KeywordReport};

pub struct Report {
    pub evaluation: Evaluation,
    pub ranker: RankerReport,
    pub keyword: KeywordReport,
    pub coherence: CoherenceArtifactReport,
    pub retraining: RetrainingReport,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DefenseRow {
    pub defense: String,
    pub revisions: usize,
    pub recall: f64,
    pub legitimate: usize,
    pub legitimate_accuracy: f64,
}

/// The report without per-revision detail.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub evaluation: Evaluation,
    pub ranker: RankerReport,
    pub keyword_cases: usize,
    pub keyword_matched: usize,
    pub keyword_mean_density_before: f64,
    pub keyword_mean_density_after: f64,
    pub coherence_held_out_accuracy: f64,
    pub defenses: Vec<DefenseRow>,
}

pub struct Rendered {
    pub markdown: String,
    pub attack_tsv: String,
    pub rank_levels_tsv: String,
    pub defense_tsv: String,
}

impl Report {
    pub fn defenses(&self) -> Vec<DefenseRow> {
        let f = &self.coherence.flagging;
        let r = &self.retraining;
        let row = |name: &str, s: &mawseo_defense::DetectorScore| DefenseRow {
            defense: name.into(),
            revisions: r.revisions,
            recall: s.recall,
            legitimate: r.legitimate,
            legitimate_accuracy: s.legitimate_accuracy,
        };
        vec![
            DefenseRow {
                defense: "coherence".into(),
                revisions: f.revisions,
                recall: f.recall,
                legitimate: f.legitimate,
                legitimate_accuracy: f.legitimate_accuracy,
            },
            row("detector", &r.original),
            row("detector-retrained", &r.retrained),
        ]
    }

    pub fn summary(&self) -> ReportSummary {
        ReportSummary {
            evaluation: self.evaluation.clone(),
            ranker: self.ranker.clone(),
            keyword_cases: self.keyword.cases.len(),
            keyword_matched: self.keyword.matched,
            keyword_mean_density_before: self.keyword.mean_density_before,
            keyword_mean_density_after: self.keyword.mean_density_after,
            coherence_held_out_accuracy: self.coherence.training.held_out_accuracy,
            defenses: self.defenses(),
        }
    }
}

fn pct(x: f64) -> String {
    format!("{:.2}", 100.0 * x)
}

pub fn attack_rows(methods: &[(String, MetricsReport)]) -> Vec<Vec<String>> {
    methods
        .iter()
        .map(|(name, m)| {
            vec![
                name.clone(),
                m.revisions.to_string(),
                pct(m.rank_boosting_rate),
                pct(m.evasion_rate),
                pct(m.topic_relevancy_rate),
                pct(m.semantic_consistency_rate),
                pct(m.promotion_success_rate),
            ]
        })
        .collect()
}

pub fn rank_level_rows(rows: &[RankLevelRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|r| {
            vec![
                format!("{}-{}", r.first_rank, r.last_rank),
                r.revisions.to_string(),
                r.boosted.to_string(),
                pct(r.boosting_rate),
                format!("{:.2}", r.mean_margin),
            ]
        })
        .collect()
}

pub fn defense_rows(rows: &[DefenseRow]) -> Vec<Vec<String>> {
    rows.iter()
        .map(|d| vec![d.defense.clone(), d.revisions.to_string(), pct(d.recall), d.legitimate.to_string(), pct(d.legitimate_accuracy)])
        .collect()
}

pub fn tsv(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = header.join("\t");
    out.push('\n');
    for r in rows {
        out.push_str(&r.join("\t"));
        out.push('\n');
    }
    out
}

pub fn markdown_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let mut out = format!("| {} |\n|{}\n", header.join(" | "), "---|".repeat(header.len()));
    for r in rows {
        let _ = writeln!(out, "| {} |", r.join(" | "));
    }
    out
}

const ATTACK_HEADER: [&str; 7] = ["method", "revisions", "rank_boosting_%", "evasion_%", "topic_relevancy_%", "semantic_consistency_%", "promotion_success_%"];
const RANK_HEADER: [&str; 5] = ["rank_level", "revisions", "boosted", "boosting_rate_%", "mean_margin"];
const DEFENSE_HEADER: [&str; 5] = ["defense", "revisions", "detection_%", "legitimate", "legitimate_accuracy_%"];

pub fn render_report(report: &Report) -> Rendered {
    let e = &report.evaluation;
    let methods: Vec<(String, MetricsReport)> = e.methods.iter().map(|m| (m.method.clone(), m.metrics.clone())).collect();
    let attack = attack_rows(&methods);
    let mawseo_levels = e.methods.iter().find(|m| m.method == "mawseo").map(|m| m.metrics.rank_levels.clone()).unwrap_or_default();
    let levels = rank_level_rows(&mawseo_levels);
    let defenses = defense_rows(&report.defenses());

    let mut md = String::from("# Attack and defense report\n\n");
    let _ = writeln!(
        md,
        "Thresholds: topic {:.4}, consistency {:.4} (sample of {} articles, corpus {}).\n",
        e.thresholds.topic_threshold, e.thresholds.consistency_threshold, e.thresholds.sample_size, e.thresholds.corpus_id
    );
    md.push_str("## Attack success\n\n");
    md.push_str(&markdown_table(&ATTACK_HEADER, &attack));
    md.push_str("\n## MAWSEO rank levels\n\n");
    md.push_str(&markdown_table(&RANK_HEADER, &levels));
    md.push_str("\n## Defenses\n\n");
    md.push_str(&markdown_table(&DEFENSE_HEADER, &defenses));
    let _ = writeln!(md, "\nCoherence model held-out pairwise accuracy: {}%.", pct(report.coherence.training.held_out_accuracy));
    let _ = writeln!(
        md,
        "\nSubstitute ranker held-out NDCG@20 {:.4}, NDCG@200 {:.4}.",
        report.ranker.ndcg_at_20, report.ranker.ndcg_at_200
    );
    let k = &report.keyword;
    let _ = writeln!(
        md,
        "\nKeyword stuffing: {} of {} revisions reached MAWSEO's rank; mean density {}% -> {}%.",
        k.matched,
        k.cases.len(),
        pct(k.mean_density_before),
        pct(k.mean_density_after)
    );
    let _ = writeln!(
        md,
        "\nRevenue: {:.1} views x {} x ${:.2} = ${:.2}.",
        e.revenue.total_views, e.revenue.view_through_rate, e.revenue.revenue_per_action, e.revenue.revenue
    );

    Rendered {
        markdown: md,
        attack_tsv: tsv(&ATTACK_HEADER, &attack),
        rank_levels_tsv: tsv(&RANK_HEADER, &levels),
        defense_tsv: tsv(&DEFENSE_HEADER, &defenses),
    }
}
