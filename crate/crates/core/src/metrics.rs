//! Latitude-weighted RMSE, per stratum and per gridpoint.

use std::path::Path;

use chrono::{DateTime, Utc};
use log::warn;
use rayon::prelude::*;

use crate::datastore::{fmt_time, Bundle, Dtype, ForecastBundle, TruthBundle};
use crate::error::{Error, Result};
use crate::format::fmt_opt_g17;
use crate::geodesy::WeightGrid;
use crate::grid::EquiangularGrid;
use crate::stratify::{MaskSet, StrataMask};
use crate::sum::NeumaierSum;

/// How to treat (init, lead) pairs whose valid time has no truth slice.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum TruthPolicy {
    /// Any missing slice is an error.
    #[default]
    Strict,
    /// Missing pairs are left out and counted in `n_times`.
    SkipMissing,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScoreRow {
    pub model: String,
    pub variable: String,
    pub attribute: String,
    pub stratum: String,
    pub lead_time_h: u32,
    /// `None` when the stratum had no valid samples.
    pub rmse: Option<f64>,
    pub n_gridpoints: usize,
    pub n_times: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable {
    pub rows: Vec<ScoreRow>,
}

const SCORE_HEADER: [&str; 8] = [
    "model",
    "variable",
    "attribute",
    "stratum",
    "lead_time_h",
    "rmse",
    "n_gridpoints",
    "n_times",
];

impl ScoreTable {
    pub fn extend(&mut self, other: ScoreTable) {
        self.rows.extend(other.rows);
    }

    pub fn to_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        w.write_record(SCORE_HEADER).expect("in-memory write");
        for r in &self.rows {
            w.write_record([
                r.model.as_str(),
                &r.variable,
                &r.attribute,
                &r.stratum,
                &r.lead_time_h.to_string(),
                &fmt_opt_g17(r.rmse),
                &r.n_gridpoints.to_string(),
                &r.n_times.to_string(),
            ])
            .expect("in-memory write");
        }
        String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
    }

    pub fn from_csv(text: &str, origin: &Path) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(text.as_bytes());
        let headers = reader.headers().map_err(|e| Error::parse(origin, e.to_string()))?;
        if headers.iter().ne(SCORE_HEADER) {
            return Err(Error::Schema(format!("{}: unexpected score header", origin.display())));
        }
        let mut rows = Vec::new();
        for (i, rec) in reader.records().enumerate() {
            let rec = rec.map_err(|e| Error::parse(origin, e.to_string()))?;
            let bad = |field: &str| Error::parse(origin, format!("row {}: bad {field}", i + 2));
            rows.push(ScoreRow {
                model: rec[0].to_string(),
                variable: rec[1].to_string(),
                attribute: rec[2].to_string(),
                stratum: rec[3].to_string(),
                lead_time_h: rec[4].parse().map_err(|_| bad("lead_time_h"))?,
                rmse: if rec[5].is_empty() {
                    None
                } else {
                    Some(rec[5].parse().map_err(|_| bad("rmse"))?)
                },
                n_gridpoints: rec[6].parse().map_err(|_| bad("n_gridpoints"))?,
                n_times: rec[7].parse().map_err(|_| bad("n_times"))?,
            });
        }
        Ok(Self { rows })
    }
}

/// Weighted RMSE over the masked cells of one slice; `None` with no valid samples.
pub fn weighted_rmse(pred: &[f64], truth: &[f64], weights: &WeightGrid, mask: &StrataMask) -> Option<f64> {
    let (mut num, mut den) = (NeumaierSum::new(), NeumaierSum::new());
    for flat in mask.indices() {
        let e = pred[flat] - truth[flat];
        if e.is_nan() {
            continue;
        }
        let w = weights.weight_flat(flat);
        num.add(w * e * e);
        den.add(w);
    }
    ratio_root(num.total(), den.total())
}

fn ratio_root(num: f64, den: f64) -> Option<f64> {
    (den > 0.0).then(|| (num / den).sqrt())
}

fn check_inputs(pred: &ForecastBundle, truth: &TruthBundle, masks: Option<&MaskSet>, weights: Option<&WeightGrid>) -> Result<()> {
    let fp = pred.grid.fingerprint();
    if truth.grid.fingerprint() != fp {
        return Err(Error::Fingerprint("forecast and truth grids differ".into()));
    }
    if let Some(m) = masks {
        m.check_grid(&pred.grid)?;
    }
    if let Some(w) = weights {
        if w.shape() != pred.grid.shape() {
            return Err(Error::Fingerprint("weight grid shape differs from forecast grid".into()));
        }
    }
    if pred.variable != truth.variable {
        warn!("forecast variable `{}` scored against truth `{}`", pred.variable, truth.variable);
    }
    Ok(())
}

/// For each lead, the (init index, truth index) pairs to score.
fn pair_table(pred: &ForecastBundle, truth: &TruthBundle, policy: TruthPolicy) -> Result<Vec<Vec<(usize, usize)>>> {
    let mut missing: Vec<DateTime<Utc>> = Vec::new();
    let mut table = Vec::with_capacity(pred.lead_times_h.len());
    for l in 0..pred.lead_times_h.len() {
        let mut pairs = Vec::new();
        for i in 0..pred.init_times.len() {
            let vt = pred.valid_time(i, l);
            match truth.time_index(&vt) {
                Some(t) => pairs.push((i, t)),
                None => missing.push(vt),
            }
        }
        table.push(pairs);
    }
    if !missing.is_empty() {
        missing.sort();
        missing.dedup();
        let listed: Vec<String> = missing.iter().take(10).map(fmt_time).collect();
        let more = if missing.len() > 10 { format!(" (+{} more)", missing.len() - 10) } else { String::new() };
        match policy {
            TruthPolicy::Strict => {
                return Err(Error::MissingTruth(format!("{}{more}", listed.join(", "))))
            }
            TruthPolicy::SkipMissing => {
                warn!("skipping pairs without truth at {}{more}", listed.join(", "))
            }
        }
    }
    Ok(table)
}

/// Per-(stratum, lead) RMSE, pooling weighted squared errors over init times
/// before the square root.
pub fn stratified_rmse(
    model: &str,
    pred: &ForecastBundle,
    truth: &TruthBundle,
    masks: &MaskSet,
    weights: &WeightGrid,
    policy: TruthPolicy,
) -> Result<ScoreTable> {
    check_inputs(pred, truth, Some(masks), Some(weights))?;
    let pairs = pair_table(pred, truth, policy)?;
    let members: Vec<Vec<usize>> = masks.masks.par_iter().map(StrataMask::indices).collect();
    let n_leads = pred.lead_times_h.len();

    let rows = (0..masks.masks.len() * n_leads)
        .into_par_iter()
        .map(|item| {
            let (s, l) = (item / n_leads, item % n_leads);
            let (mut num, mut den) = (NeumaierSum::new(), NeumaierSum::new());
            for &(i, t) in &pairs[l] {
                let (p, y) = (pred.slice(i, l), truth.slice(t));
                for &g in &members[s] {
                    let e = p[g] - y[g];
                    if e.is_nan() {
                        continue;
                    }
                    let w = weights.weight_flat(g);
                    num.add(w * e * e);
                    den.add(w);
                }
            }
            let mask = &masks.masks[s];
            ScoreRow {
                model: model.to_string(),
                variable: pred.variable.clone(),
                attribute: mask.attribute.clone(),
                stratum: mask.stratum.clone(),
                lead_time_h: pred.lead_times_h[l],
                rmse: ratio_root(num.total(), den.total()),
                n_gridpoints: members[s].len(),
                n_times: pairs[l].len(),
            }
        })
        .collect();
    Ok(ScoreTable { rows })
}

/// Per-gridpoint RMSE over init times at one lead time.
#[derive(Debug, Clone, PartialEq)]
pub struct ErrorRaster {
    pub variable: String,
    pub lead_time_h: u32,
    pub grid: EquiangularGrid,
    pub reference_time: DateTime<Utc>,
    pub values: Vec<f64>,
}

impl ErrorRaster {
    pub fn grid_shape(&self) -> (usize, usize) {
        self.grid.shape()
    }

    /// Single-slice forecast bundle: first init time, this lead time.
    pub fn to_bundle(&self) -> Bundle {
        Bundle::Forecast(ForecastBundle {
            variable: format!("{}_rmse", self.variable),
            units: String::new(),
            init_times: vec![self.reference_time],
            lead_times_h: vec![self.lead_time_h],
            grid: self.grid.clone(),
            dtype: Dtype::Float64,
            values: self.values.clone(),
        })
    }
}

pub fn gridpoint_rmse(pred: &ForecastBundle, truth: &TruthBundle, lead_time_h: u32, policy: TruthPolicy) -> Result<ErrorRaster> {
    check_inputs(pred, truth, None, None)?;
    let l = pred.lead_index(lead_time_h)?;
    let pairs = pair_table(pred, truth, policy)?.swap_remove(l);
    let n = pred.grid.len();
    let values = (0..n)
        .into_par_iter()
        .map(|g| {
            let mut sum = NeumaierSum::new();
            let mut count = 0usize;
            for &(i, t) in &pairs {
                let e = pred.slice(i, l)[g] - truth.slice(t)[g];
                if !e.is_nan() {
                    sum.add(e * e);
                    count += 1;
                }
            }
            if count == 0 {
                f64::NAN
            } else {
                (sum.total() / count as f64).sqrt()
            }
        })
        .collect();
    Ok(ErrorRaster {
        variable: pred.variable.clone(),
        lead_time_h,
        grid: pred.grid.clone(),
        reference_time: pred.init_times[0],
        values,
    })
}
