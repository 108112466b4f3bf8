//! Forecast and truth bundles: `manifest.json` plus a little-endian `data.bin`.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use chrono::{DateTime, Duration, NaiveDateTime, Utc};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::EquiangularGrid;
use crate::fsio::write_atomic;
use crate::stratify::MaskSet;

const FORECAST_LAYOUT: &str = "C:init,lead,lat,lon";
const TRUTH_LAYOUT: &str = "C:time,lat,lon";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    Float32,
    Float64,
}

impl Dtype {
    fn size(self) -> usize {
        match self {
            Dtype::Float32 => 4,
            Dtype::Float64 => 8,
        }
    }

    fn parse(s: &str) -> Result<Self> {
        match s {
            "float32" => Ok(Dtype::Float32),
            "float64" => Ok(Dtype::Float64),
            other => Err(Error::Schema(format!("unknown dtype `{other}`"))),
        }
    }

    fn as_str(self) -> &'static str {
        match self {
            Dtype::Float32 => "float32",
            Dtype::Float64 => "float64",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct Manifest {
    variable: String,
    units: String,
    init_times: Vec<String>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    lead_times_h: Option<Vec<u32>>,
    lat: Vec<f64>,
    lon: Vec<f64>,
    dtype: String,
    layout: String,
    grid_fingerprint: String,
}

/// Predictions indexed `[init, lead, lat, lon]` on the canonical grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecastBundle {
    pub variable: String,
    pub units: String,
    pub init_times: Vec<DateTime<Utc>>,
    pub lead_times_h: Vec<u32>,
    pub grid: EquiangularGrid,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

/// Ground truth indexed `[valid_time, lat, lon]`.
#[derive(Debug, Clone, PartialEq)]
pub struct TruthBundle {
    pub variable: String,
    pub units: String,
    pub valid_times: Vec<DateTime<Utc>>,
    pub grid: EquiangularGrid,
    pub dtype: Dtype,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Bundle {
    Forecast(ForecastBundle),
    Truth(TruthBundle),
}

impl ForecastBundle {
    pub fn slice(&self, init_idx: usize, lead_idx: usize) -> &[f64] {
        let n = self.grid.len();
        let start = (init_idx * self.lead_times_h.len() + lead_idx) * n;
        &self.values[start..start + n]
    }

    pub fn lead_index(&self, lead_h: u32) -> Result<usize> {
        self.lead_times_h
            .iter()
            .position(|&l| l == lead_h)
            .ok_or(Error::UnknownLead(lead_h))
    }

    pub fn valid_time(&self, init_idx: usize, lead_idx: usize) -> DateTime<Utc> {
        self.init_times[init_idx] + Duration::hours(self.lead_times_h[lead_idx] as i64)
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.init_times.len() * self.lead_times_h.len() * self.grid.len();
        if self.values.len() != expect {
            return Err(Error::Size(format!("{} values, axes imply {expect}", self.values.len())));
        }
        check_increasing(&self.init_times, "init_times")?;
        check_increasing(&self.lead_times_h, "lead_times_h")?;
        for i in 0..self.init_times.len() {
            for l in 0..self.lead_times_h.len() {
                if self.slice(i, l).iter().all(|v| v.is_nan()) {
                    return Err(Error::Schema(format!(
                        "slice (init {}, lead {}h) is entirely NaN",
                        fmt_time(&self.init_times[i]),
                        self.lead_times_h[l]
                    )));
                }
            }
        }
        Ok(())
    }
}

impl TruthBundle {
    pub fn slice(&self, t: usize) -> &[f64] {
        let n = self.grid.len();
        &self.values[t * n..(t + 1) * n]
    }

    pub fn time_index(&self, t: &DateTime<Utc>) -> Option<usize> {
        self.valid_times.binary_search(t).ok()
    }

    pub fn validate(&self) -> Result<()> {
        let expect = self.valid_times.len() * self.grid.len();
        if self.values.len() != expect {
            return Err(Error::Size(format!("{} values, axes imply {expect}", self.values.len())));
        }
        check_increasing(&self.valid_times, "valid times")?;
        for t in 0..self.valid_times.len() {
            if self.slice(t).iter().all(|v| v.is_nan()) {
                return Err(Error::Schema(format!(
                    "truth slice {} is entirely NaN",
                    fmt_time(&self.valid_times[t])
                )));
            }
        }
        Ok(())
    }
}

fn check_increasing<T: PartialOrd>(xs: &[T], what: &str) -> Result<()> {
    if xs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Schema(format!("{what} not strictly increasing")));
    }
    Ok(())
}

pub fn fmt_time(t: &DateTime<Utc>) -> String {
    t.format("%Y-%m-%dT%H:%M:%SZ").to_string()
}

pub fn parse_time(s: &str) -> Result<DateTime<Utc>> {
    if let Ok(t) = DateTime::parse_from_rfc3339(s) {
        return Ok(t.with_timezone(&Utc));
    }
    NaiveDateTime::parse_from_str(s, "%Y-%m-%dT%H:%M:%S")
        .map(|n| n.and_utc())
        .map_err(|_| Error::Schema(format!("bad timestamp `{s}`")))
}

/// Infers the grid from the manifest axes and returns, for every stored
/// (lat, lon) position, its flat index on the canonical grid.
fn canonical_positions(lat: &[f64], lon: &[f64]) -> Result<(EquiangularGrid, Vec<usize>)> {
    if lat.len() < 2 || lon.len() < 2 {
        return Err(Error::Schema("lat/lon axes need at least two values".into()));
    }
    let ascending = lat[1] > lat[0];
    let monotonic = lat
        .windows(2)
        .all(|w| if ascending { w[1] > w[0] } else { w[1] < w[0] });
    if !monotonic {
        return Err(Error::Schema("lat axis not monotonic".into()));
    }
    let res = (lat[1] - lat[0]).abs();
    // eastward steps of one cell, allowing a single wrap at the seam
    if lon.windows(2).any(|w| ((w[1] - w[0]).rem_euclid(360.0) - res).abs() > 1e-6) {
        return Err(Error::Schema("lon axis not monotonic".into()));
    }
    let grid = EquiangularGrid::new(res)?;
    if grid.n_lat() != lat.len() || grid.n_lon() != lon.len() {
        return Err(Error::Schema(format!(
            "axes of length {}x{} do not form a {res}° global grid",
            lat.len(),
            lon.len()
        )));
    }
    let rows: Vec<usize> = lat
        .iter()
        .map(|&v| grid.lat_index(v).ok_or_else(|| Error::Schema(format!("latitude {v} off grid"))))
        .collect::<Result<_>>()?;
    let cols: Vec<usize> = lon
        .iter()
        .map(|&v| grid.lon_index(v).ok_or_else(|| Error::Schema(format!("longitude {v} off grid"))))
        .collect::<Result<_>>()?;
    let mut seen = vec![false; grid.n_lon()];
    for &c in &cols {
        if std::mem::replace(&mut seen[c], true) {
            return Err(Error::Schema("lon axis repeats a column".into()));
        }
    }
    let mut positions = Vec::with_capacity(grid.len());
    for &r in &rows {
        for &c in &cols {
            positions.push(grid.flat_index(r, c));
        }
    }
    Ok((grid, positions))
}

fn decode(bytes: &[u8], dtype: Dtype) -> Vec<f64> {
    match dtype {
        Dtype::Float32 => bytes
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect(),
        Dtype::Float64 => bytes
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .collect(),
    }
}

fn encode(values: &[f64], dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(values.len() * dtype.size());
    for &v in values {
        match dtype {
            Dtype::Float32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::Float64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

/// Reads a bundle directory, normalizing axes to the canonical grid order.
pub fn read_bundle(path: &Path) -> Result<Bundle> {
    let manifest_path = path.join("manifest.json");
    let text = fs::read_to_string(&manifest_path).map_err(|e| Error::io(&manifest_path, e))?;
    let m: Manifest = serde_json::from_str(&text).map_err(|e| Error::parse(&manifest_path, e.to_string()))?;
    let dtype = Dtype::parse(&m.dtype)?;
    let expected_layout = if m.lead_times_h.is_some() { FORECAST_LAYOUT } else { TRUTH_LAYOUT };
    if m.layout != expected_layout {
        return Err(Error::Schema(format!("layout `{}`, expected `{expected_layout}`", m.layout)));
    }
    let (grid, positions) = canonical_positions(&m.lat, &m.lon)?;
    if m.grid_fingerprint != grid.fingerprint() {
        return Err(Error::Fingerprint(format!(
            "{}: manifest fingerprint does not match its {}° grid",
            path.display(),
            grid.resolution_deg()
        )));
    }
    let times = m.init_times.iter().map(|s| parse_time(s)).collect::<Result<Vec<_>>>()?;
    let n_slices = times.len() * m.lead_times_h.as_ref().map_or(1, Vec::len);

    let data_path = path.join("data.bin");
    let bytes = fs::read(&data_path).map_err(|e| Error::io(&data_path, e))?;
    let expect = n_slices * grid.len() * dtype.size();
    if bytes.len() != expect {
        return Err(Error::Size(format!(
            "{}: {} bytes, manifest implies {expect}",
            data_path.display(),
            bytes.len()
        )));
    }
    let stored = decode(&bytes, dtype);
    let n = grid.len();
    let mut values = vec![0.0; stored.len()];
    for (dst, src) in values.chunks_exact_mut(n).zip(stored.chunks_exact(n)) {
        for (k, &v) in src.iter().enumerate() {
            dst[positions[k]] = v;
        }
    }

    let bundle = match m.lead_times_h {
        Some(lead_times_h) => {
            let b = ForecastBundle {
                variable: m.variable,
                units: m.units,
                init_times: times,
                lead_times_h,
                grid,
                dtype,
                values,
            };
            b.validate()?;
            Bundle::Forecast(b)
        }
        None => {
            let b = TruthBundle {
                variable: m.variable,
                units: m.units,
                valid_times: times,
                grid,
                dtype,
                values,
            };
            b.validate()?;
            Bundle::Truth(b)
        }
    };
    Ok(bundle)
}

pub fn read_forecast(path: &Path) -> Result<ForecastBundle> {
    match read_bundle(path)? {
        Bundle::Forecast(b) => Ok(b),
        Bundle::Truth(_) => Err(Error::Schema(format!("{} is a truth bundle", path.display()))),
    }
}

pub fn read_truth(path: &Path) -> Result<TruthBundle> {
    match read_bundle(path)? {
        Bundle::Truth(b) => Ok(b),
        Bundle::Forecast(_) => Err(Error::Schema(format!("{} is a forecast bundle", path.display()))),
    }
}

/// Writes a bundle in canonical axis order.
pub fn write_bundle(bundle: &Bundle, path: &Path) -> Result<()> {
    let (variable, units, times, leads, grid, dtype, values, layout) = match bundle {
        Bundle::Forecast(b) => (
            &b.variable,
            &b.units,
            &b.init_times,
            Some(b.lead_times_h.clone()),
            &b.grid,
            b.dtype,
            &b.values,
            FORECAST_LAYOUT,
        ),
        Bundle::Truth(b) => (&b.variable, &b.units, &b.valid_times, None, &b.grid, b.dtype, &b.values, TRUTH_LAYOUT),
    };
    let manifest = Manifest {
        variable: variable.clone(),
        units: units.clone(),
        init_times: times.iter().map(fmt_time).collect(),
        lead_times_h: leads,
        lat: grid.lat_values().to_vec(),
        lon: grid.lon_values().to_vec(),
        dtype: dtype.as_str().into(),
        layout: layout.into(),
        grid_fingerprint: grid.fingerprint(),
    };
    fs::create_dir_all(path).map_err(|e| Error::io(path, e))?;
    write_atomic(&path.join("data.bin"), &encode(values, dtype))?;
    let mut json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    json.push('\n');
    write_atomic(&path.join("manifest.json"), json.as_bytes())
}

/// Region receiving a planted additive error.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ErrorTarget {
    Stratum { attribute: String, stratum: String },
    LatBand { lat_min: f64, lat_max: f64 },
    Everywhere { everywhere: bool },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedError {
    #[serde(flatten)]
    pub target: ErrorTarget,
    pub value: f64,
}

/// Synthetic truth field plus additive prediction errors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub variable: String,
    pub units: String,
    pub start: String,
    pub n_init: usize,
    pub init_step_h: u32,
    pub lead_times_h: Vec<u32>,
    /// Truth = base + amplitude·cos(lat) + uniform noise in ±noise.
    pub base: f64,
    pub amplitude: f64,
    pub noise: f64,
    pub dtype: Dtype,
    /// Later entries override earlier ones where regions overlap.
    pub errors: Vec<PlantedError>,
}

pub fn default_lead_times() -> Vec<u32> {
    (1..=20).map(|i| i * 12).collect()
}

impl Default for SynthSpec {
    fn default() -> Self {
        Self {
            variable: "T850".into(),
            units: "K".into(),
            start: "2020-01-01T00:00:00Z".into(),
            n_init: 10,
            init_step_h: 12,
            lead_times_h: default_lead_times(),
            base: 260.0,
            amplitude: 30.0,
            noise: 5.0,
            dtype: Dtype::Float64,
            errors: Vec::new(),
        }
    }
}

/// Per-cell additive error implied by `spec`.
pub fn planted_error_field(grid: &EquiangularGrid, spec: &SynthSpec, masks: Option<&MaskSet>) -> Result<Vec<f64>> {
    let mut field = vec![0.0; grid.len()];
    let n_lon = grid.n_lon();
    for e in &spec.errors {
        match &e.target {
            ErrorTarget::Everywhere { everywhere } => {
                if *everywhere {
                    field.iter_mut().for_each(|v| *v = e.value);
                }
            }
            ErrorTarget::LatBand { lat_min, lat_max } => {
                for (flat, v) in field.iter_mut().enumerate() {
                    let lat = grid.lat_values()[flat / n_lon];
                    if lat >= *lat_min && lat <= *lat_max {
                        *v = e.value;
                    }
                }
            }
            ErrorTarget::Stratum { attribute, stratum } => {
                let mask = masks
                    .and_then(|m| m.get(attribute, stratum))
                    .ok_or_else(|| Error::UnknownStratum(format!("{attribute}/{stratum}")))?;
                for flat in mask.indices() {
                    field[flat] = e.value;
                }
            }
        }
    }
    Ok(field)
}

/// Deterministic synthetic forecast/truth pair.
pub fn synth_bundle(
    grid: &EquiangularGrid,
    spec: &SynthSpec,
    masks: Option<&MaskSet>,
    seed: u64,
) -> Result<(ForecastBundle, TruthBundle)> {
    if let Some(m) = masks {
        m.check_grid(grid)?;
    }
    if spec.n_init == 0 || spec.lead_times_h.is_empty() {
        return Err(Error::Config("synth needs at least one init time and one lead time".into()));
    }
    let start = parse_time(&spec.start)?;
    let init_times: Vec<DateTime<Utc>> = (0..spec.n_init)
        .map(|i| start + Duration::hours(i as i64 * spec.init_step_h as i64))
        .collect();
    let mut lead_times_h = spec.lead_times_h.clone();
    lead_times_h.sort_unstable();
    lead_times_h.dedup();

    let mut valid: Vec<DateTime<Utc>> = init_times
        .iter()
        .flat_map(|t| lead_times_h.iter().map(move |&l| *t + Duration::hours(l as i64)))
        .collect();
    valid.sort();
    valid.dedup();

    let n = grid.len();
    let n_lon = grid.n_lon();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut truth_values = Vec::with_capacity(valid.len() * n);
    for _ in &valid {
        for flat in 0..n {
            let lat = grid.lat_values()[flat / n_lon].to_radians();
            let noise = if spec.noise > 0.0 { rng.gen_range(-spec.noise..spec.noise) } else { 0.0 };
            truth_values.push(quantize(spec.base + spec.amplitude * lat.cos() + noise, spec.dtype));
        }
    }
    let truth = TruthBundle {
        variable: spec.variable.clone(),
        units: spec.units.clone(),
        valid_times: valid,
        grid: grid.clone(),
        dtype: spec.dtype,
        values: truth_values,
    };

    let errors = planted_error_field(grid, spec, masks)?;
    let index: BTreeMap<DateTime<Utc>, usize> = truth.valid_times.iter().enumerate().map(|(i, t)| (*t, i)).collect();
    let mut pred = Vec::with_capacity(init_times.len() * lead_times_h.len() * n);
    for t0 in &init_times {
        for &l in &lead_times_h {
            let slice = truth.slice(index[&(*t0 + Duration::hours(l as i64))]);
            pred.extend(slice.iter().zip(&errors).map(|(y, e)| quantize(y + e, spec.dtype)));
        }
    }
    let forecast = ForecastBundle {
        variable: spec.variable.clone(),
        units: spec.units.clone(),
        init_times,
        lead_times_h,
        grid: grid.clone(),
        dtype: spec.dtype,
        values: pred,
    };
    Ok((forecast, truth))
}

fn quantize(v: f64, dtype: Dtype) -> f64 {
    match dtype {
        Dtype::Float32 => v as f32 as f64,
        Dtype::Float64 => v,
    }
}
