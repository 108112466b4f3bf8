//! Browser bindings: latitude weight profiles and fairness of a set of RMSEs.
//!
//! Each export returns a JSON string. The `*_json` functions hold the logic
//! so they can be exercised without a JavaScript host.

use earthstrata::fairness::{disparity, lof_scores, DEFAULT_LOF_K};
use earthstrata::geodesy::{band_area, latitude_weights, polar_overestimate, EarthModel, LatitudeBand, SpheroidParams};
use earthstrata::grid::EquiangularGrid;
use serde_json::json;
use wasm_bindgen::prelude::*;

fn model_of(name: &str) -> Result<EarthModel, String> {
    match name {
        "oblate" => Ok(EarthModel::Oblate),
        "sphere" => Ok(EarthModel::Sphere),
        other => Err(format!("unknown earth model `{other}`")),
    }
}

/// Per-row weights for a grid, plus the polar overestimate of a sphere.
pub fn weight_profile_json(resolution_deg: f64, model: &str) -> Result<String, String> {
    let grid = EquiangularGrid::new(resolution_deg).map_err(|e| e.to_string())?;
    let earth = SpheroidParams::earth();
    let weights = latitude_weights(&grid, &earth, model_of(model)?);
    let overestimate = polar_overestimate(resolution_deg, &earth).map_err(|e| e.to_string())?;
    Ok(json!({
        "resolution_deg": resolution_deg,
        "n_lat": grid.n_lat(),
        "n_lon": grid.n_lon(),
        "lat": grid.lat_values(),
        "weight": weights.row_weights(),
        "polar_overestimate_pct": overestimate,
    })
    .to_string())
}

/// Area of the zone between two latitudes on the reference spheroid, m².
pub fn band_area_json(lat_min: f64, lat_max: f64) -> Result<String, String> {
    let band = LatitudeBand::new(lat_min, lat_max).map_err(|e| e.to_string())?;
    let area = band_area(&SpheroidParams::earth(), &band);
    let sphere = band_area(&SpheroidParams::earth().to_sphere(), &band);
    Ok(json!({ "oblate_m2": area, "sphere_m2": sphere }).to_string())
}

/// Disparity metrics of per-stratum RMSEs, before and after LOF filtering.
///
/// `text` holds numbers separated by commas, spaces or newlines.
pub fn fairness_json(text: &str, k: usize) -> Result<String, String> {
    let values = text
        .split(|c: char| c == ',' || c.is_whitespace())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| format!("not a number: `{s}`")))
        .collect::<Result<Vec<f64>, String>>()?;
    if values.iter().any(|v| !v.is_finite() || *v <= 0.0) {
        return Err("RMSEs must be positive and finite".into());
    }
    let k = if k == 0 { DEFAULT_LOF_K } else { k };
    let flags = lof_scores(&values, k);
    let kept: Vec<f64> = values.iter().zip(&flags.flagged).filter(|(_, f)| !**f).map(|(v, _)| *v).collect();
    let stats = |v: &[f64]| {
        disparity(v).map(|(gad, variance, percent_ratio)| json!({ "gad": gad, "variance": variance, "percent_ratio": percent_ratio }))
    };
    // LOF may be infinite; JSON has no such number
    let lof: Vec<Option<f64>> = flags.scores.iter().map(|s| s.is_finite().then_some(*s)).collect();
    Ok(json!({
        "values": values,
        "lof": lof,
        "flagged": flags.flagged,
        "all": stats(&values),
        "filtered": stats(&kept),
    })
    .to_string())
}

#[wasm_bindgen]
pub fn weight_profile(resolution_deg: f64, model: &str) -> Result<String, JsError> {
    weight_profile_json(resolution_deg, model).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn zone_area(lat_min: f64, lat_max: f64) -> Result<String, JsError> {
    band_area_json(lat_min, lat_max).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn fairness(text: &str, k: usize) -> Result<String, JsError> {
    fairness_json(text, k).map_err(|e| JsError::new(&e))
}
