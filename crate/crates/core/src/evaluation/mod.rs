//! Metrics, evaluation protocols, and report exports.

mod benchmark;
mod metrics;
mod protocol;

pub use benchmark::{
    benchmark, benchmark_settings, benchmark_synth, Benchmark, BENCH_SEED, BENCH_TRAIN_DISPLAYS,
};

pub use metrics::{
    accuracy, auroc, average_precision, group_metrics, metrics, ranked, GroupMetrics, Metrics,
    ScoredSample,
};
pub use protocol::{
    ablation_suite, build_report, check_leakage, cluster_separation, confusion_by_taxonomy,
    cross_domain_reports, display_ids, export_features_2d, moire_scaling, partition, run_protocol,
    score_samples, scaling_order, AblationReport, ConfusionMatrix, EvalReport, FeatureExport,
    Partition, ProjectionRow, ProtocolMode, ProtocolRun, RunSettings, ScalingPoint, Taxonomy,
};

use std::fmt::Write;

fn opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}

/// `sample_id,label,display_id,u,v`
pub fn projection_csv(rows: &[ProjectionRow]) -> String {
    let mut out = String::from("sample_id,label,display_id,u,v\n");
    for r in rows {
        let _ = writeln!(out, "{},{},{},{},{}", r.sample_id, r.label, r.display_id, r.u, r.v);
    }
    out
}

/// One row per point: `k,accuracy,auroc,ap,train_displays` (ids joined by `;`).
pub fn scaling_csv(points: &[ScalingPoint]) -> String {
    let mut out = String::from("k,accuracy,auroc,ap,train_displays\n");
    for p in points {
        let m = p.report.metrics;
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p.k,
            m.accuracy,
            m.auroc,
            m.ap,
            p.report.train_display_ids.join(";")
        );
    }
    out
}

/// Header row of test groups; each line starts with its training group.
/// Missing cells stay empty.
pub fn confusion_csv(m: &ConfusionMatrix) -> String {
    let mut out = format!("train\\test,{}\n", m.groups.join(","));
    for (g, row) in m.groups.iter().zip(&m.cells) {
        let cells: Vec<String> = row.iter().map(|&c| opt(c)).collect();
        let _ = writeln!(out, "{g},{}", cells.join(","));
    }
    out
}

/// Per-sample scores: `sample_id,label,score,predicted,display_id,display_type,device_type`.
pub fn scores_csv(scores: &[ScoredSample]) -> String {
    let mut out = String::from("sample_id,label,score,predicted,display_id,display_type,device_type\n");
    for s in scores {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            s.sample_id, s.label, s.score, s.predicted, s.display_id, s.display_type, s.device_type
        );
    }
    out
}
