//! Experiment reports: JSON documents carrying the config hash, plus
//! aligned plain-text tables.

use memrag_core::pipeline::{AblationRow, EntityReport, QaReport, WeekReport};
use memrag_core::policy::PgStep;
use serde::{Deserialize, Serialize};

use crate::config::RunConfig;

pub const CODE_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config_hash: String,
    pub code_version: String,
}

impl Provenance {
    pub fn of(cfg: &RunConfig) -> Self {
        Provenance { config_hash: cfg.hash(), code_version: CODE_VERSION.into() }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodEval {
    pub method: String,
    pub qa: QaReport,
    pub entities: EntityReport,
    /// Median wall-clock seconds per QA query.
    pub median_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub provenance: Provenance,
    pub test_users: usize,
    pub methods: Vec<MethodEval>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSummary {
    pub provenance: Provenance,
    pub train_users: usize,
    pub ws_samples: usize,
    pub ws_final_loss: Option<f64>,
    pub ws_accuracy: Option<f64>,
    pub pg_episodes: usize,
    /// Mean first-step return over the first and the last ten PG episodes.
    pub pg_first10_return: Option<f64>,
    pub pg_last10_return: Option<f64>,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainCurves {
    pub ws_samples: usize,
    pub ws_accuracy: Option<f64>,
    pub ws_losses: Vec<f64>,
    pub pg: Vec<PgStep>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EditsReport {
    pub provenance: Provenance,
    pub methods: Vec<(String, Vec<WeekReport>)>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AblationReport {
    pub provenance: Provenance,
    pub naive: QaReport,
    pub rows: Vec<AblationRow>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct KRow {
    pub k: usize,
    pub recall: f64,
    pub rouge_l: f64,
    pub mean_decisions: f64,
    pub median_seconds: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamKReport {
    pub provenance: Provenance,
    pub rows: Vec<KRow>,
}

/// Left-aligned first column, right-aligned others.
pub fn table(headers: &[&str], rows: &[Vec<String>]) -> String {
    let n = headers.len();
    let mut widths: Vec<usize> = headers.iter().map(|h| h.len()).collect();
    for r in rows {
        for (i, c) in r.iter().enumerate().take(n) {
            widths[i] = widths[i].max(c.chars().count());
        }
    }
    let line = |cells: Vec<&str>| {
        let parts: Vec<String> = cells
            .iter()
            .enumerate()
            .map(|(i, c)| if i == 0 { format!("{c:<w$}", w = widths[i]) } else { format!("{c:>w$}", w = widths[i]) })
            .collect();
        parts.join("  ").trim_end().to_string()
    };
    let mut out = line(headers.to_vec());
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("  "));
    out.push('\n');
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
        out.push('\n');
    }
    out
}

pub fn f2(x: f64) -> String {
    format!("{x:.2}")
}

pub fn opt2(x: Option<f64>) -> String {
    x.map(f2).unwrap_or_else(|| "-".into())
}

fn qa_cells(q: &QaReport) -> Vec<String> {
    vec![f2(q.scores.rouge1), f2(q.scores.rouge2), f2(q.scores.rouge_l), f2(q.scores.bleu), f2(q.recall), f2(q.precision)]
}

impl EvalReport {
    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .methods
            .iter()
            .map(|m| {
                let mut r = vec![m.method.clone()];
                r.extend(qa_cells(&m.qa));
                r.extend([
                    opt2(m.entities.af),
                    opt2(m.entities.us_reminder),
                    opt2(m.entities.us_travel),
                    opt2(m.entities.us_mean),
                    format!("{:.6}", m.median_seconds),
                ]);
                r
            })
            .collect();
        let head = ["method", "R-1", "R-2", "R-L", "BLEU", "recall", "precision", "AF EM", "US rem", "US trav", "US mean", "sec/query"];
        format!("config {}  version {}\n{}", self.provenance.config_hash, self.provenance.code_version, table(&head, &rows))
    }
}

impl AblationReport {
    pub fn to_table(&self) -> String {
        let mut rows = Vec::new();
        for r in &self.rows {
            let mut cells = vec![r.label.clone()];
            cells.extend(qa_cells(&r.report));
            rows.push(cells);
        }
        let mut naive = vec!["naive top-k".to_string()];
        naive.extend(qa_cells(&self.naive));
        rows.push(naive);
        let head = ["variant", "R-1", "R-2", "R-L", "BLEU", "recall", "precision"];
        format!("config {}\n{}", self.provenance.config_hash, table(&head, &rows))
    }
}

type WeekCell = (&'static str, fn(&WeekReport) -> String);

impl EditsReport {
    /// One row per (method, metric), one column per week.
    pub fn to_table(&self) -> String {
        let weeks = self.methods.first().map(|(_, w)| w.len()).unwrap_or(0);
        let mut head: Vec<String> = vec!["method / metric".into()];
        head.extend((0..weeks).map(|w| if w == 0 { "start".to_string() } else { format!("week {w}") }));
        let mut rows = Vec::new();
        for (name, ws) in &self.methods {
            let metric_rows: [WeekCell; 6] = [
                ("QA R-L", |w| f2(w.qa.scores.rouge_l)),
                ("QA recall", |w| f2(w.qa.recall)),
                ("AF EM", |w| opt2(w.entities.af)),
                ("US EM", |w| opt2(w.entities.us_mean)),
                ("superseded %", |w| f2(w.superseded_share)),
                ("edits applied", |w| w.applied.to_string()),
            ];
            for (label, f) in metric_rows.iter() {
                let mut r = vec![format!("{name} {label}")];
                r.extend(ws.iter().map(f));
                rows.push(r);
            }
        }
        let head_refs: Vec<&str> = head.iter().map(String::as_str).collect();
        format!("config {}\n{}", self.provenance.config_hash, table(&head_refs, &rows))
    }
}

impl ParamKReport {
    pub fn to_table(&self) -> String {
        let rows: Vec<Vec<String>> = self
            .rows
            .iter()
            .map(|r| vec![r.k.to_string(), f2(r.recall), f2(r.rouge_l), f2(r.mean_decisions), format!("{:.6}", r.median_seconds)])
            .collect();
        format!("config {}\n{}", self.provenance.config_hash, table(&["K", "recall", "R-L", "decisions", "median sec"], &rows))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn tables_align() {
        let t = table(&["a", "bb"], &[vec!["xyz".into(), "1".into()], vec!["q".into(), "22.5".into()]]);
        let lines: Vec<&str> = t.lines().collect();
        assert_eq!(lines[0], "a      bb");
        assert_eq!(lines[1], "---  ----");
        assert_eq!(lines[2], "xyz     1");
        assert_eq!(lines[3], "q    22.5");
    }
}
