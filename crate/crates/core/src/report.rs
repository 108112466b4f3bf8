//! Human-facing wide tables: one row per (variable, lead time), one column per model.

use std::path::Path;

use crate::error::{Error, Result};
use crate::fairness::FairnessReport;
use crate::format::fmt_fixed4;

#[derive(Debug, Clone, PartialEq)]
pub struct WideRow {
    pub variable: String,
    pub lead_time_h: u32,
    pub values: Vec<Option<f64>>,
    /// Model with the smallest full-precision value; first wins ties.
    pub best_model: Option<String>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct WideTable {
    pub models: Vec<String>,
    pub rows: Vec<WideRow>,
}

const LEAD_HEADER: &str = "Lead time (h)";

impl WideTable {
    /// Pivots one attribute and metric of a fairness report.
    ///
    /// Rows follow variable first-appearance order, then ascending lead time.
    pub fn from_report(report: &FairnessReport, attribute: &str, metric: &str, models: &[String]) -> Self {
        let mut keys: Vec<(String, u32)> = Vec::new();
        for r in report.rows.iter().filter(|r| r.attribute == attribute) {
            let key = (r.variable.clone(), r.lead_time_h);
            if !keys.contains(&key) {
                keys.push(key);
            }
        }
        let var_order: Vec<String> = keys.iter().fold(Vec::new(), |mut acc, (v, _)| {
            if !acc.contains(v) {
                acc.push(v.clone());
            }
            acc
        });
        keys.sort_by_key(|(v, l)| (var_order.iter().position(|x| x == v), *l));

        let rows = keys
            .into_iter()
            .map(|(variable, lead_time_h)| {
                let values: Vec<Option<f64>> = models
                    .iter()
                    .map(|m| {
                        report
                            .rows
                            .iter()
                            .find(|r| {
                                r.attribute == attribute && &r.model == m && r.variable == variable && r.lead_time_h == lead_time_h
                            })
                            .and_then(|r| r.metric(metric))
                    })
                    .collect();
                let best_model = best_of(&values).map(|i| models[i].clone());
                WideRow {
                    variable,
                    lead_time_h,
                    values,
                    best_model,
                }
            })
            .collect();
        Self {
            models: models.to_vec(),
            rows,
        }
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header = vec!["Variable".to_string(), LEAD_HEADER.to_string()];
        header.extend(self.models.iter().cloned());
        header.push("best_model".into());
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec = vec![r.variable.clone(), format!("{}h", r.lead_time_h)];
            rec.extend(r.values.iter().map(|v| v.map(fmt_fixed4).unwrap_or_default()));
            rec.push(r.best_model.clone().unwrap_or_default());
            w.write_record(&rec).expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(origin, e.to_string()))?.clone();
        let n = headers.len();
        if n < 4 || &headers[0] != "Variable" || &headers[1] != LEAD_HEADER || &headers[n - 1] != "best_model" {
            return Err(Error::Schema(format!("{}: not a wide table header", origin.display())));
        }
        let models: Vec<String> = headers.iter().skip(2).take(n - 3).map(str::to_string).collect();
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
            let bad = |what: &str| Error::parse(origin, format!("row {}: bad {what}", i + 2));
            let lead_time_h = rec[1]
                .strip_suffix('h')
                .and_then(|s| s.parse().ok())
                .ok_or_else(|| bad("lead time"))?;
            let values = (2..n - 1)
                .map(|k| match &rec[k] {
                    "" => Ok(None),
                    s => s.parse().map(Some).map_err(|_| bad("value")),
                })
                .collect::<Result<Vec<_>>>()?;
            let best = &rec[n - 1];
            if !best.is_empty() && !models.iter().any(|m| m == best) {
                return Err(bad("best_model"));
            }
            rows.push(WideRow {
                variable: rec[0].to_string(),
                lead_time_h,
                values,
                best_model: (!best.is_empty()).then(|| best.to_string()),
            });
        }
        Ok(Self { models, rows })
    }
}

fn best_of(values: &[Option<f64>]) -> Option<usize> {
    let mut best: Option<(usize, f64)> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = *v {
            if best.is_none_or(|(_, b)| v < b) {
                best = Some((i, v));
            }
        }
    }
    best.map(|(i, _)| i)
}
