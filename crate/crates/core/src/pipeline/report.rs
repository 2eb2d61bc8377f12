//! Plain-text and JSON-lines renderings of metric, ablation and clinical
//! results. Output depends only on the values, never on timing.

use std::fmt::Write as _;

use serde::Serialize;
use serde_json::json;

use super::AblationRow;
use crate::clinical::{ClinicalSummary, CohortStats, Grade};
use crate::metrics::{fmt_metric, ClassRates, SixMetrics};

const METRIC_HEADER: &str = "arousal_auroc arousal_auprc apnea_auroc apnea_auprc sleep_auroc sleep_auprc";

fn six_columns(m: &SixMetrics, mark_auxiliary: bool) -> String {
    let aux = |v: Option<f64>| {
        let s = fmt_metric(v);
        if mark_auxiliary {
            format!("{s}*")
        } else {
            s
        }
    };
    format!(
        "{:>13} {:>13} {:>11} {:>11} {:>11} {:>11}",
        fmt_metric(m.arousal.auroc),
        fmt_metric(m.arousal.auprc),
        aux(m.apnea.auroc),
        aux(m.apnea.auprc),
        aux(m.sleep.auroc),
        aux(m.sleep.auprc),
    )
}

fn header(first: &str, width: usize) -> String {
    let cols: Vec<String> = METRIC_HEADER
        .split(' ')
        .enumerate()
        .map(|(i, c)| if i < 2 { format!("{c:>13}") } else { format!("{c:>11}") })
        .collect();
    format!("{first:<width$} {}", cols.join(" "))
}

/// One line per named model with the six metrics.
pub fn metrics_table(title: &str, rows: &[(String, SixMetrics)]) -> String {
    let width = rows.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(5);
    let mut out = format!("# {title}\n{}\n", header("model", width));
    for (name, m) in rows {
        let _ = writeln!(out, "{name:<width$} {}", six_columns(m, false));
    }
    out
}

pub fn json_line(value: &impl Serialize) -> String {
    let mut s = serde_json::to_string(value).expect("report values serialize");
    s.push('\n');
    s
}

pub fn metrics_jsonl(kind: &str, rows: &[(String, SixMetrics)]) -> String {
    rows.iter()
        .map(|(name, m)| json_line(&json!({ "kind": kind, "model": name, "metrics": m })))
        .collect()
}

/// Validation and testing tables with one row per experiment, the training
/// summary, and the running-best validation AUPRC per epoch.
pub fn ablation_report(rows: &[AblationRow]) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# ablation experiments");
    for r in rows {
        let _ = writeln!(out, "exp {:>2}  {}", r.experiment, r.description);
    }
    for (title, pick) in [
        ("fold-1 validation records", 0usize),
        ("testing records, single fold-1 model", 1),
    ] {
        let _ = writeln!(out, "\n# {title}\n{}", header("exp", 6));
        for r in rows {
            match &r.outcome {
                Ok(o) => {
                    let m = if pick == 0 { &o.validation } else { &o.testing };
                    let _ = writeln!(out, "exp {:>2} {}", r.experiment, six_columns(m, !o.auxiliary_valid));
                }
                Err(e) => {
                    let _ = writeln!(out, "exp {:>2} failed: {e}", r.experiment);
                }
            }
        }
    }
    if rows.iter().any(|r| matches!(&r.outcome, Ok(o) if !o.auxiliary_valid)) {
        let _ = writeln!(out, "* not valid: the model was trained for arousal only");
    }
    let _ = writeln!(out, "\n# training\nexp    best_epoch epochs training_arousal_auprc");
    for r in rows {
        if let Ok(o) = &r.outcome {
            let _ = writeln!(
                out,
                "exp {:>2} {:>10} {:>6} {:>23}",
                r.experiment,
                o.best_epoch,
                o.epochs_run,
                fmt_metric(o.training_arousal_auprc)
            );
        }
    }
    let _ = writeln!(out, "\n# best validation AUPRC so far, per epoch\nexp    epoch arousal  apnea    sleep");
    for r in rows {
        let Ok(o) = &r.outcome else { continue };
        let mut best = [None::<f64>; 3];
        for (i, p) in o.progress.iter().enumerate() {
            for (b, v) in best.iter_mut().zip(p) {
                if let Some(v) = *v {
                    *b = Some(b.map_or(v, |x: f64| x.max(v)));
                }
            }
            let _ = writeln!(
                out,
                "exp {:>2} {:>5} {:<8} {:<8} {:<8}",
                r.experiment,
                i + 1,
                fmt_metric(best[0]),
                fmt_metric(best[1]),
                fmt_metric(best[2])
            );
        }
    }
    out
}

pub fn ablation_jsonl(rows: &[AblationRow]) -> String {
    rows.iter().map(json_line).collect()
}

/// Reference and predicted summaries of one record.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ClinicalEntry {
    pub record_id: String,
    pub reference: ClinicalSummary,
    /// From predicted sleep, arousal and apnea tracks.
    pub predicted: ClinicalSummary,
    /// Predicted events over annotated sleep time.
    pub predicted_reference_sleep: ClinicalSummary,
}

fn opt(v: Option<f64>, digits: usize) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.digits$}"))
}

fn grade_name(g: Option<Grade>) -> &'static str {
    g.map_or("n/a", Grade::name)
}

/// Per-record summaries, error block, grade confusion matrix, OSR/USR and
/// per-grade sensitivity and specificity.
pub fn clinical_report(entries: &[ClinicalEntry], stats: &CohortStats, stats_reference_sleep: &CohortStats) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "# per-record summaries (reference / predicted)");
    let _ = writeln!(
        out,
        "{:<12} {:>7} {:>15} {:>15} {:>15} {:>19} {:>9}",
        "record", "trt_min", "se", "ai", "ahi", "grade", "ahi_rs"
    );
    for e in entries {
        let (r, p, q) = (&e.reference, &e.predicted, &e.predicted_reference_sleep);
        let _ = writeln!(
            out,
            "{:<12} {:>7.2} {:>15} {:>15} {:>15} {:>19} {:>9}",
            e.record_id,
            r.trt_min,
            format!("{:.3}/{:.3}", r.se, p.se),
            format!("{}/{}", opt(r.ai, 2), opt(p.ai, 2)),
            format!("{}/{}", opt(r.ahi, 2), opt(p.ahi, 2)),
            format!("{}/{}", grade_name(r.grade), grade_name(p.grade)),
            opt(q.ahi, 2),
        );
    }
    let _ = writeln!(out, "(ahi_rs: predicted events over annotated sleep time)");
    for (title, s) in [
        ("predicted sleep", stats),
        ("annotated sleep", stats_reference_sleep),
    ] {
        let _ = writeln!(out, "\n# cohort statistics, TST from {title} ({} subjects)", s.subjects);
        let _ = writeln!(
            out,
            "mae se {:.4} ai {} ahi {}",
            s.mae_se,
            opt(s.mae_ai, 4),
            opt(s.mae_ahi, 4)
        );
        let _ = writeln!(
            out,
            "mean ahi reference {} predicted {}",
            opt(s.mean_true_ahi, 4),
            opt(s.mean_pred_ahi, 4)
        );
        let g = &s.grades;
        let _ = writeln!(out, "grade confusion (rows reference, columns predicted)");
        let _ = writeln!(out, "{:<10} {:>8} {:>8} {:>8} {:>8}", "", "normal", "mild", "moderate", "severe");
        for grade in Grade::ALL {
            let row = &g.confusion[grade.index()];
            let _ = writeln!(
                out,
                "{:<10} {:>8} {:>8} {:>8} {:>8}",
                grade.name(),
                row[0],
                row[1],
                row[2],
                row[3]
            );
        }
        let _ = writeln!(out, "accuracy {}", opt(g.accuracy, 4));
        let _ = writeln!(
            out,
            "normal osr {} | mild usr {} | moderate usr {} | severe usr {}",
            opt(g.normal_osr, 4),
            opt(g.usr[0], 4),
            opt(g.usr[1], 4),
            opt(g.usr[2], 4)
        );
        let _ = writeln!(out, "{:<10} {:>11} {:>11}", "grade", "sensitivity", "specificity");
        for (grade, ClassRates { sensitivity, specificity }) in Grade::ALL.iter().zip(&g.rates) {
            let _ = writeln!(
                out,
                "{:<10} {:>11} {:>11}",
                grade.name(),
                opt(*sensitivity, 4),
                opt(*specificity, 4)
            );
        }
    }
    out
}

pub fn clinical_jsonl(entries: &[ClinicalEntry], stats: &CohortStats, stats_reference_sleep: &CohortStats) -> String {
    let mut out: String = entries.iter().map(|e| json_line(&json!({ "kind": "record", "entry": e }))).collect();
    out.push_str(&json_line(&json!({ "kind": "cohort", "tst_from": "predicted_sleep", "stats": stats })));
    out.push_str(&json_line(
        &json!({ "kind": "cohort", "tst_from": "annotated_sleep", "stats": stats_reference_sleep }),
    ));
    out
}
