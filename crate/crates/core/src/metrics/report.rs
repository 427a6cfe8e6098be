//! Text renderings of [`MetricReport`]: flat JSON, markdown and CSV rows.
//!
//! Table columns follow the usual benchmark order: Acc., AURC, UOSR, OSR,
//! InC/InW, InC/OoD, InW/OoD. AUROCs print as percentages, AURC in ×10³
//! units, both with two decimals. Absent values print as `-` (markdown),
//! an empty cell (CSV) or `null` (JSON).

use std::str::FromStr;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use super::MetricReport;
use crate::error::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Json,
    Markdown,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self, Error> {
        match s.to_ascii_lowercase().as_str() {
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            "csv" => Ok(Self::Csv),
            other => Err(Error::BadSpec(format!("unknown format `{other}`"))),
        }
    }
}

pub const TABLE_COLUMNS: [&str; 7] = ["Acc.", "AURC", "UOSR", "OSR", "InC/InW", "InC/OoD", "InW/OoD"];

fn cells(r: &MetricReport) -> [Option<f64>; 7] {
    let pct = |v: Option<f64>| v.map(|x| 100.0 * x);
    [
        r.accuracy,
        r.aurc_uosr,
        pct(r.auroc_uosr),
        pct(r.auroc_osr),
        pct(r.auroc_inc_inw),
        pct(r.auroc_inc_ood),
        pct(r.auroc_inw_ood),
    ]
}

fn fmt_cell(v: Option<f64>, absent: &str) -> String {
    v.map_or_else(|| absent.to_string(), |x| format!("{x:.2}"))
}

pub fn markdown_header(label: &str) -> String {
    let mut head = format!("| {label} |");
    let mut rule = String::from("|---|");
    for c in TABLE_COLUMNS {
        head.push_str(&format!(" {c} |"));
        rule.push_str("---:|");
    }
    format!("{head}\n{rule}")
}

pub fn markdown_row(label: &str, r: &MetricReport) -> String {
    let mut row = format!("| {label} |");
    for v in cells(r) {
        row.push_str(&format!(" {} |", fmt_cell(v, "-")));
    }
    row
}

pub fn csv_header(label: &str) -> String {
    let mut cols = vec![label.to_string()];
    cols.extend(TABLE_COLUMNS.iter().map(|c| c.to_string()));
    cols.join(",")
}

pub fn csv_row(label: &str, r: &MetricReport) -> String {
    let mut cols = vec![label.to_string()];
    cols.extend(cells(r).iter().map(|v| fmt_cell(*v, "")));
    cols.join(",")
}

/// Flat key-value object; parameters appear as `param.<name>`.
pub fn to_flat_json(r: &MetricReport) -> Value {
    let mut m = Map::new();
    m.insert("scorer_id".into(), Value::from(r.scorer_id.clone()));
    for (k, v) in &r.params {
        m.insert(format!("param.{k}"), Value::from(*v));
    }
    for name in [
        "accuracy",
        "auroc_uosr",
        "auroc_osr",
        "auroc_sp",
        "auroc_inc_inw",
        "auroc_inc_ood",
        "auroc_inw_ood",
        "aupr_uosr",
        "aurc_uosr",
        "ece",
    ] {
        m.insert(name.into(), r.field(name).map_or(Value::Null, Value::from));
    }
    m.insert("n_inc".into(), Value::from(r.n_inc));
    m.insert("n_inw".into(), Value::from(r.n_inw));
    m.insert("n_ood".into(), Value::from(r.n_ood));
    Value::Object(m)
}

/// Labelled reports rendered as one document in `format`.
pub fn render_table(rows: &[(String, MetricReport)], format: ReportFormat) -> String {
    match format {
        ReportFormat::Markdown => {
            let mut out = markdown_header("Method");
            for (label, r) in rows {
                out.push('\n');
                out.push_str(&markdown_row(label, r));
            }
            out.push('\n');
            out
        }
        ReportFormat::Csv => {
            let mut out = csv_header("method");
            for (label, r) in rows {
                out.push('\n');
                out.push_str(&csv_row(label, r));
            }
            out.push('\n');
            out
        }
        ReportFormat::Json => {
            let arr: Vec<Value> = rows
                .iter()
                .map(|(label, r)| {
                    let mut v = to_flat_json(r);
                    v.as_object_mut()
                        .expect("flat report is an object")
                        .insert("method".into(), Value::from(label.clone()));
                    v
                })
                .collect();
            let mut s = serde_json::to_string_pretty(&arr).expect("json values serialize");
            s.push('\n');
            s
        }
    }
}

/// Stable one-line summary used on standard output.
pub fn summary_line(r: &MetricReport) -> String {
    TABLE_COLUMNS
        .iter()
        .zip(cells(r))
        .map(|(c, v)| format!("{c}={}", fmt_cell(v, "-")))
        .collect::<Vec<_>>()
        .join(" ")
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn sample() -> MetricReport {
        MetricReport {
            scorer_id: "msp".into(),
            params: BTreeMap::from([("temperature".to_string(), 1.0)]),
            accuracy: Some(75.0),
            auroc_uosr: Some(0.849),
            auroc_osr: Some(0.75591),
            auroc_sp: Some(0.8),
            auroc_inc_inw: Some(0.8),
            auroc_inc_ood: Some(0.9),
            auroc_inw_ood: None,
            aupr_uosr: Some(0.7),
            aurc_uosr: Some(277.7777),
            ece: None,
            n_inc: 3,
            n_inw: 1,
            n_ood: 0,
        }
    }

    #[test]
    fn markdown_has_seven_columns() {
        let row = markdown_row("MSP", &sample());
        assert_eq!(row, "| MSP | 75.00 | 277.78 | 84.90 | 75.59 | 80.00 | 90.00 | - |");
        assert_eq!(row.matches('|').count(), 9);
        assert!(markdown_header("Method").starts_with("| Method | Acc. | AURC | UOSR | OSR |"));
    }

    #[test]
    fn csv_empty_for_absent() {
        assert_eq!(csv_row("MSP", &sample()), "MSP,75.00,277.78,84.90,75.59,80.00,90.00,");
    }

    #[test]
    fn json_is_flat_with_nulls() {
        let v = to_flat_json(&sample());
        let o = v.as_object().unwrap();
        assert_eq!(o["ece"], Value::Null);
        assert_eq!(o["param.temperature"], Value::from(1.0));
        assert!(o.values().all(|x| !x.is_object() && !x.is_array()));
    }

    #[test]
    fn format_parsing() {
        assert_eq!("md".parse::<ReportFormat>().unwrap(), ReportFormat::Markdown);
        assert!("xml".parse::<ReportFormat>().is_err());
    }
}
