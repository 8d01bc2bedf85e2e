//! Tabular rendering of metric reports.

use serde::{Deserialize, Serialize};

use super::{MetricReport, MetricsError, REPORT_SCHEMA_VERSION};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Markdown,
    Csv,
    Json,
}

impl ReportFormat {
    pub const ALL: [ReportFormat; 3] = [ReportFormat::Markdown, ReportFormat::Csv, ReportFormat::Json];

    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Markdown => "md",
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            "csv" => Ok(ReportFormat::Csv),
            "json" => Ok(ReportFormat::Json),
            other => Err(format!("unknown report format '{other}'")),
        }
    }
}

const MISSING: &str = "—";

const MARKDOWN_HEADER: [&str; 9] = [
    "Run",
    "Prec.",
    "Rec.",
    "F1",
    "Updown",
    "Human vs. Rand",
    "Human vs. Machine",
    "Final (avg)",
    "Final (best)",
];

const CSV_HEADER: [&str; 12] = [
    "run_id",
    "label",
    "precision",
    "recall",
    "f1",
    "updown",
    "human_vs_rand",
    "human_vs_machine",
    "final_avg",
    "final_best",
    "n_scored",
    "n_skipped",
];

fn metric_columns(r: &MetricReport) -> [Option<f64>; 8] {
    [
        r.bert_precision,
        r.bert_recall,
        r.bert_f1,
        r.updown_avg,
        r.human_vs_rand_avg,
        r.human_vs_machine_avg,
        r.final_avg,
        r.final_best,
    ]
}

/// Renders one row per report. Markdown uses three decimals and `—` for
/// missing values; CSV keeps full precision with empty cells for missing
/// values; JSON carries complete reports including per-sample scores.
pub fn render_report(reports: &[MetricReport], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = format!("| {} |\n", MARKDOWN_HEADER.join(" | "));
            out.push_str(&format!("|{}\n", "---|".repeat(MARKDOWN_HEADER.len())));
            for r in reports {
                let cells: Vec<String> = metric_columns(r)
                    .iter()
                    .map(|v| v.map_or_else(|| MISSING.to_string(), |v| format!("{v:.3}")))
                    .collect();
                let label = if r.label.is_empty() { &r.run_id } else { &r.label };
                out.push_str(&format!("| {} | {} |\n", label.replace('|', "\\|"), cells.join(" | ")));
            }
            out
        }
        ReportFormat::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER).expect("in-memory csv");
            for r in reports {
                let mut row = vec![r.run_id.clone(), r.label.clone()];
                row.extend(
                    metric_columns(r)
                        .iter()
                        .map(|v| v.map_or_else(String::new, |v| v.to_string())),
                );
                row.push(r.n_scored.to_string());
                row.push(r.n_skipped.to_string());
                w.write_record(&row).expect("in-memory csv");
            }
            String::from_utf8(w.into_inner().expect("in-memory csv")).expect("csv is utf-8")
        }
        ReportFormat::Json => {
            #[derive(Serialize)]
            struct Doc<'a> {
                schema_version: u32,
                reports: &'a [MetricReport],
            }
            let mut s = serde_json::to_string_pretty(&Doc {
                schema_version: REPORT_SCHEMA_VERSION,
                reports,
            })
            .expect("report serializes");
            s.push('\n');
            s
        }
    }
}

/// One parsed CSV report row.
#[derive(Debug, Clone, PartialEq)]
pub struct ReportRow {
    pub run_id: String,
    pub label: String,
    pub metrics: [Option<f64>; 8],
    pub n_scored: usize,
    pub n_skipped: usize,
}

impl ReportRow {
    pub fn from_report(r: &MetricReport) -> Self {
        Self {
            run_id: r.run_id.clone(),
            label: r.label.clone(),
            metrics: metric_columns(r),
            n_scored: r.n_scored,
            n_skipped: r.n_skipped,
        }
    }
}

pub fn parse_csv_report(text: &str) -> Result<Vec<ReportRow>, MetricsError> {
    let bad = |m: String| MetricsError::MalformedReport(m);
    let mut reader = csv::Reader::from_reader(text.as_bytes());
    let mut rows = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| bad(e.to_string()))?;
        if record.len() != CSV_HEADER.len() {
            return Err(bad(format!("expected {} columns, got {}", CSV_HEADER.len(), record.len())));
        }
        let mut metrics = [None; 8];
        for (slot, cell) in metrics.iter_mut().zip(record.iter().skip(2)) {
            *slot = if cell.is_empty() {
                None
            } else {
                Some(cell.parse::<f64>().map_err(|e| bad(e.to_string()))?)
            };
        }
        let int = |i: usize| record[i].parse::<usize>().map_err(|e| bad(e.to_string()));
        rows.push(ReportRow {
            run_id: record[0].to_string(),
            label: record[1].to_string(),
            metrics,
            n_scored: int(10)?,
            n_skipped: int(11)?,
        });
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::metrics::EnsembleWeights;

    fn report(p: f64, r: f64, f: f64, ranker: bool) -> MetricReport {
        let some = |v: f64| ranker.then_some(v);
        MetricReport {
            schema_version: REPORT_SCHEMA_VERSION,
            run_id: "abc123".into(),
            label: "Few-Shot davinci-003".into(),
            embedding_provider: "mock".into(),
            ranker: ranker.then(|| "mock".to_string()),
            ensemble: EnsembleWeights::product(),
            bert_precision: Some(p),
            bert_recall: Some(r),
            bert_f1: Some(f),
            updown_avg: some(0.375),
            human_vs_rand_avg: some(0.98),
            human_vs_machine_avg: some(0.994),
            final_avg: some(0.352),
            final_best: some(0.716),
            n_scored: 50,
            n_skipped: 0,
            samples: vec![],
        }
    }

    #[test]
    fn markdown_row_uses_three_decimals() {
        let md = render_report(&[report(0.840, 0.844, 0.842, true)], ReportFormat::Markdown);
        let lines: Vec<&str> = md.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[0].contains("Prec. | Rec. | F1 | Updown"));
        assert!(lines[2].contains("0.840 | 0.844 | 0.842 | 0.375 | 0.980 | 0.994 | 0.352 | 0.716"));
    }

    #[test]
    fn missing_ranker_columns_render_as_dash() {
        let md = render_report(&[report(0.8, 0.8, 0.8, false)], ReportFormat::Markdown);
        assert!(md.lines().nth(2).unwrap().ends_with("| — | — | — | — | — |"));
    }

    #[test]
    fn csv_round_trip() {
        let reports = vec![report(0.8401234567, 0.844, 0.842, true), report(0.1, 0.2, 0.3, false)];
        let csv = render_report(&reports, ReportFormat::Csv);
        let rows = parse_csv_report(&csv).unwrap();
        let expected: Vec<ReportRow> = reports.iter().map(ReportRow::from_report).collect();
        assert_eq!(rows, expected);
    }

    #[test]
    fn json_parses_back() {
        let reports = vec![report(0.8, 0.7, 0.75, true)];
        let json = render_report(&reports, ReportFormat::Json);
        let v: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(v["schema_version"], 1);
        let back: Vec<MetricReport> = serde_json::from_value(v["reports"].clone()).unwrap();
        assert_eq!(back, reports);
    }
}
