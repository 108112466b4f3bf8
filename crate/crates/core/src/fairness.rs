//! Disparity statistics over per-stratum RMSEs, with LOF outlier filtering.

use std::collections::HashMap;

use log::info;

use crate::boundaries::ATTR_LANDCOVER;
use crate::format::{fmt_g17, fmt_opt_g17};
use crate::metrics::ScoreTable;
use crate::sum::NeumaierSum;

pub const DEFAULT_LOF_K: usize = 20;
pub const LOF_THRESHOLD: f64 = 1.5;

#[derive(Debug, Clone, PartialEq)]
pub struct OutlierFlags {
    pub scores: Vec<f64>,
    pub flagged: Vec<bool>,
}

/// Local outlier factor of each value among 1-D `values`.
///
/// `k` is clamped to `len - 1`. Neighborhoods include every point tied at
/// the k-distance. A point whose neighbors all sit at distance zero has
/// infinite density and LOF 1; a finite-density point with such a neighbor
/// gets LOF infinity.
pub fn lof_scores(values: &[f64], k: usize) -> OutlierFlags {
    let n = values.len();
    let distinct = {
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        v.dedup();
        v.len()
    };
    if n < 2 || distinct < 2 || k == 0 {
        return OutlierFlags {
            scores: vec![1.0; n],
            flagged: vec![false; n],
        };
    }
    let k = k.min(n - 1);

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let sorted: Vec<f64> = order.iter().map(|&i| values[i]).collect();

    // k-distance and neighborhood (as a sorted-position range) per position
    let mut kdist = vec![0.0; n];
    let mut hood = vec![(0usize, 0usize); n];
    for p in 0..n {
        let x = sorted[p];
        let (mut lo, mut hi) = (p, p); // inclusive window containing p
        for _ in 0..k {
            let left = (lo > 0).then(|| x - sorted[lo - 1]);
            let right = (hi + 1 < n).then(|| sorted[hi + 1] - x);
            match (left, right) {
                (Some(a), Some(b)) if a <= b => lo -= 1,
                (Some(_), None) => lo -= 1,
                _ => hi += 1,
            }
        }
        let kd = (x - sorted[lo]).max(sorted[hi] - x);
        while lo > 0 && x - sorted[lo - 1] <= kd {
            lo -= 1;
        }
        while hi + 1 < n && sorted[hi + 1] - x <= kd {
            hi += 1;
        }
        kdist[p] = kd;
        hood[p] = (lo, hi);
    }

    let neighbors = |p: usize| (hood[p].0..=hood[p].1).filter(move |&o| o != p);
    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let mut reach = NeumaierSum::new();
            let mut count = 0usize;
            for o in neighbors(p) {
                reach.add(kdist[o].max((sorted[p] - sorted[o]).abs()));
                count += 1;
            }
            let total = reach.total();
            if total == 0.0 {
                f64::INFINITY
            } else {
                count as f64 / total
            }
        })
        .collect();

    let mut scores = vec![0.0; n];
    for p in 0..n {
        let score = if lrd[p].is_infinite() {
            1.0
        } else if neighbors(p).any(|o| lrd[o].is_infinite()) {
            f64::INFINITY
        } else {
            let mut sum = NeumaierSum::new();
            let mut count = 0usize;
            for o in neighbors(p) {
                sum.add(lrd[o]);
                count += 1;
            }
            sum.total() / (count as f64 * lrd[p])
        };
        scores[order[p]] = score;
    }
    let flagged = scores.iter().map(|&s| s > LOF_THRESHOLD).collect();
    OutlierFlags { scores, flagged }
}

#[derive(Debug, Clone, PartialEq)]
pub struct FairnessRow {
    pub model: String,
    pub variable: String,
    pub attribute: String,
    pub lead_time_h: u32,
    pub gad: Option<f64>,
    pub variance: Option<f64>,
    pub percent_ratio: Option<f64>,
    pub n_strata: usize,
    pub outliers_removed: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FairnessReport {
    pub rows: Vec<FairnessRow>,
}

pub const METRICS: [&str; 3] = ["gad", "variance", "percent_ratio"];

impl FairnessRow {
    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "gad" => self.gad,
            "variance" => self.variance,
            "percent_ratio" => self.percent_ratio,
            _ => None,
        }
    }
}

/// (gad, population variance, percent ratio) of a set with at least two values.
pub fn disparity(values: &[f64]) -> Option<(f64, f64, f64)> {
    if values.len() < 2 {
        return None;
    }
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let n = values.len() as f64;
    let mean = values.iter().copied().collect::<NeumaierSum>().total() / n;
    let variance = values.iter().map(|v| (v - mean).powi(2)).collect::<NeumaierSum>().total() / n;
    Some((max - min, variance, 100.0 * max / min))
}

/// Disparity statistics per (model, variable, attribute, lead time) group.
///
/// Strata without an RMSE are left out. With `filter_outliers`, strata
/// flagged by LOF within their group are excluded; landcover and groups
/// of two strata are never filtered.
pub fn measure_fairness(scores: &ScoreTable, filter_outliers: bool) -> FairnessReport {
    let mut groups: Vec<((String, String, String, u32), Vec<(String, f64)>)> = Vec::new();
    let mut index: HashMap<(String, String, String, u32), usize> = HashMap::new();
    for r in &scores.rows {
        let key = (r.model.clone(), r.variable.clone(), r.attribute.clone(), r.lead_time_h);
        let g = *index.entry(key.clone()).or_insert_with(|| {
            groups.push((key, Vec::new()));
            groups.len() - 1
        });
        if let Some(v) = r.rmse {
            groups[g].1.push((r.stratum.clone(), v));
        }
    }

    let mut notified = std::collections::BTreeSet::new();
    let rows = groups
        .into_iter()
        .map(|((model, variable, attribute, lead_time_h), strata)| {
            let mut outliers_removed = Vec::new();
            let mut kept: Vec<f64> = strata.iter().map(|s| s.1).collect();
            if filter_outliers {
                if attribute == ATTR_LANDCOVER || strata.len() <= 2 {
                    if notified.insert(attribute.clone()) {
                        info!("outlier filtering skipped for `{attribute}`: too few strata");
                    }
                } else {
                    let flags = lof_scores(&kept, DEFAULT_LOF_K);
                    kept = Vec::new();
                    for ((name, v), flagged) in strata.iter().zip(&flags.flagged) {
                        if *flagged {
                            outliers_removed.push(name.clone());
                        } else {
                            kept.push(*v);
                        }
                    }
                }
            }
            let stats = disparity(&kept);
            if stats.is_none() {
                info!("{model}/{variable}/{attribute}@{lead_time_h}h: fewer than two strata, metrics absent");
            }
            FairnessRow {
                model,
                variable,
                attribute,
                lead_time_h,
                gad: stats.map(|s| s.0),
                variance: stats.map(|s| s.1),
                percent_ratio: stats.map(|s| s.2),
                n_strata: kept.len(),
                outliers_removed,
            }
        })
        .collect();
    FairnessReport { rows }
}

impl FairnessReport {
    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record([
            "model",
            "variable",
            "attribute",
            "lead_time_h",
            "gad",
            "variance",
            "percent_ratio",
            "n_strata",
            "outliers_removed",
        ])
        .expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.model.as_str(),
                &r.variable,
                &r.attribute,
                &r.lead_time_h.to_string(),
                &fmt_opt_g17(r.gad),
                &fmt_opt_g17(r.variance),
                &fmt_opt_g17(r.percent_ratio),
                &r.n_strata.to_string(),
                &r.outliers_removed.join(";"),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }
}

/// Long-form plotting table: one row per group and metric, lead-time sorted.
pub fn fairness_curves(report: &FairnessReport) -> String {
    let mut rows: Vec<&FairnessRow> = report.rows.iter().collect();
    rows.sort_by_key(|r| r.lead_time_h);
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["model", "variable", "attribute", "lead_time_h", "metric", "value"])
        .expect("in-memory write");
    for r in rows {
        for m in METRICS {
            w.write_record([
                r.model.as_str(),
                &r.variable,
                &r.attribute,
                &r.lead_time_h.to_string(),
                m,
                &r.metric(m).map(fmt_g17).unwrap_or_default(),
            ])
            .expect("in-memory write");
        }
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
