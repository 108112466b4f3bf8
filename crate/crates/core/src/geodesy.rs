//! Exact zone and cell areas on an oblate spheroid, and the latitude weights
//! derived from them.
//!
//! Grid latitudes are geodetic. The zone integral is evaluated in terms of
//! `u = sin(beta)`, where `beta` is the parametric latitude
//! (`tan beta = (c/a) tan phi`):
//!
//! ```text
//! dA = 2*pi*a^2 * sqrt(1 - e^2 + e^2 u^2) du
//! ```
//!
//! whose antiderivative is closed form, so a cap (everything poleward of a
//! latitude) has an exact area and a band is the difference of two caps.

use std::f64::consts::PI;
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format::fmt_g17;
use crate::grid::EquiangularGrid;

pub const EARTH_EQUATORIAL_RADIUS_M: f64 = 6_378_137.0;
pub const EARTH_POLAR_RADIUS_M: f64 = 6_356_752.0;

/// Two-parameter oblate spheroid (or sphere when both radii agree).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpheroidParams {
    equatorial_radius_m: f64,
    polar_radius_m: f64,
}

impl Default for SpheroidParams {
    fn default() -> Self {
        Self::earth()
    }
}

impl SpheroidParams {
    pub fn new(equatorial_radius_m: f64, polar_radius_m: f64) -> Result<Self> {
        if !(polar_radius_m.is_finite() && equatorial_radius_m.is_finite()) {
            return Err(Error::Spheroid("radii must be finite".into()));
        }
        if polar_radius_m <= 0.0 {
            return Err(Error::Spheroid(format!("polar radius {polar_radius_m} must be positive")));
        }
        if equatorial_radius_m < polar_radius_m {
            return Err(Error::Spheroid(format!(
                "equatorial radius {equatorial_radius_m} is smaller than polar radius {polar_radius_m} (prolate)"
            )));
        }
        Ok(Self {
            equatorial_radius_m,
            polar_radius_m,
        })
    }

    pub const fn earth() -> Self {
        Self {
            equatorial_radius_m: EARTH_EQUATORIAL_RADIUS_M,
            polar_radius_m: EARTH_POLAR_RADIUS_M,
        }
    }

    pub fn sphere(radius_m: f64) -> Result<Self> {
        Self::new(radius_m, radius_m)
    }

    pub fn equatorial_radius_m(&self) -> f64 {
        self.equatorial_radius_m
    }

    pub fn polar_radius_m(&self) -> f64 {
        self.polar_radius_m
    }

    pub fn is_sphere(&self) -> bool {
        self.equatorial_radius_m == self.polar_radius_m
    }

    /// First eccentricity squared.
    pub fn e2(&self) -> f64 {
        let r = self.polar_radius_m / self.equatorial_radius_m;
        1.0 - r * r
    }

    /// The sphere sharing this spheroid's equatorial radius.
    pub fn to_sphere(&self) -> Self {
        Self {
            equatorial_radius_m: self.equatorial_radius_m,
            polar_radius_m: self.equatorial_radius_m,
        }
    }

    /// `sin` of the parametric latitude corresponding to geodetic `lat_deg`.
    fn sin_parametric(&self, lat_deg: f64) -> f64 {
        if lat_deg >= 90.0 {
            return 1.0;
        }
        if lat_deg <= -90.0 {
            return -1.0;
        }
        let phi = lat_deg.to_radians();
        let ratio = self.polar_radius_m / self.equatorial_radius_m;
        let (s, c) = phi.sin_cos();
        let y = ratio * s;
        y / (c * c + y * y).sqrt()
    }

    /// Antiderivative of `sqrt(1 - e^2 + e^2 u^2)` in `u`.
    fn zone_antiderivative(&self, u: f64) -> f64 {
        let e2 = self.e2();
        if e2 < 1e-16 {
            return u;
        }
        let e = e2.sqrt();
        let q = 1.0 - e2;
        let root = (q + e2 * u * u).sqrt();
        0.5 * u * root + q / (2.0 * e) * (e * u / q.sqrt()).asinh()
    }

    /// Area poleward of geodetic latitude `lat_deg` in the northern sense:
    /// the zone from `lat_deg` up to +90.
    pub fn cap_area(&self, lat_deg: f64) -> f64 {
        let a = self.equatorial_radius_m;
        let u = self.sin_parametric(lat_deg);
        2.0 * PI * a * a * (self.zone_antiderivative(1.0) - self.zone_antiderivative(u))
    }
}

/// Geodetic latitude interval, `lat_lo_deg < lat_hi_deg`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatitudeBand {
    lat_lo_deg: f64,
    lat_hi_deg: f64,
}

impl LatitudeBand {
    pub fn new(lat_lo_deg: f64, lat_hi_deg: f64) -> Result<Self> {
        let in_range = |v: f64| (-90.0..=90.0).contains(&v);
        if !(in_range(lat_lo_deg) && in_range(lat_hi_deg)) || lat_lo_deg >= lat_hi_deg {
            return Err(Error::Band {
                lo: lat_lo_deg,
                hi: lat_hi_deg,
            });
        }
        Ok(Self { lat_lo_deg, lat_hi_deg })
    }

    pub fn lat_lo_deg(&self) -> f64 {
        self.lat_lo_deg
    }

    pub fn lat_hi_deg(&self) -> f64 {
        self.lat_hi_deg
    }
}

/// Closed-form surface area of the whole spheroid.
pub fn total_surface_area(params: &SpheroidParams) -> f64 {
    let a = params.equatorial_radius_m;
    let e2 = params.e2();
    if e2 < 1e-16 {
        return 4.0 * PI * a * a;
    }
    let e = e2.sqrt();
    2.0 * PI * a * a * (1.0 + (1.0 - e2) / e * e.atanh())
}

/// Area of the full-longitude zone between two geodetic latitudes.
pub fn band_area(params: &SpheroidParams, band: &LatitudeBand) -> f64 {
    params.cap_area(band.lat_lo_deg) - params.cap_area(band.lat_hi_deg)
}

/// Area of one cell of a band spanning `lon_width_deg` of longitude.
pub fn cell_area(params: &SpheroidParams, band: &LatitudeBand, lon_width_deg: f64) -> Result<f64> {
    if !(lon_width_deg > 0.0 && lon_width_deg <= 360.0) {
        return Err(Error::Config(format!("longitude width {lon_width_deg} outside (0, 360]")));
    }
    Ok(band_area(params, band) * (lon_width_deg / 360.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EarthModel {
    Oblate,
    Sphere,
}

impl std::fmt::Display for EarthModel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EarthModel::Oblate => "oblate",
            EarthModel::Sphere => "sphere",
        })
    }
}

/// Per-cell area weights normalized so that their mean over the grid is 1.
/// Weights depend only on latitude, so one value is stored per row.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightGrid {
    n_lat: usize,
    n_lon: usize,
    lat_values: Vec<f64>,
    row_weights: Vec<f64>,
    model: EarthModel,
}

impl WeightGrid {
    /// Uniform weights, mostly for tests and unweighted diagnostics.
    pub fn uniform(n_lat: usize, n_lon: usize) -> Self {
        Self {
            n_lat,
            n_lon,
            lat_values: vec![f64::NAN; n_lat],
            row_weights: vec![1.0; n_lat],
            model: EarthModel::Sphere,
        }
    }

    /// Weights from explicit per-row values (no normalization applied).
    pub fn from_rows(n_lon: usize, row_weights: Vec<f64>) -> Self {
        Self {
            n_lat: row_weights.len(),
            n_lon,
            lat_values: vec![f64::NAN; row_weights.len()],
            row_weights,
            model: EarthModel::Sphere,
        }
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn model(&self) -> EarthModel {
        self.model
    }

    pub fn row_weights(&self) -> &[f64] {
        &self.row_weights
    }

    #[inline]
    pub fn weight(&self, lat_idx: usize, _lon_idx: usize) -> f64 {
        self.row_weights[lat_idx]
    }

    /// Weight of a row-major flat gridpoint index.
    #[inline]
    pub fn weight_flat(&self, flat: usize) -> f64 {
        self.row_weights[flat / self.n_lon]
    }

    pub fn mean(&self) -> f64 {
        crate::sum::neumaier_sum(self.row_weights.iter().copied()) / self.n_lat as f64
    }

    /// CSV with header `lat,weight`, one row per latitude.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lat,weight\n");
        for (lat, w) in self.lat_values.iter().zip(&self.row_weights) {
            let _ = writeln!(out, "{},{}", fmt_g17(*lat), fmt_g17(*w));
        }
        out
    }
}

/// Raw cell area for every latitude row of `grid`.
pub fn row_cell_areas(grid: &EquiangularGrid, params: &SpheroidParams) -> Vec<f64> {
    let width = grid.resolution_deg();
    (0..grid.n_lat())
        .map(|i| {
            let (lo, hi) = grid.lat_bounds(i);
            let band = LatitudeBand { lat_lo_deg: lo, lat_hi_deg: hi };
            band_area(params, &band) * (width / 360.0)
        })
        .collect()
}

pub fn latitude_weights(grid: &EquiangularGrid, params: &SpheroidParams, model: EarthModel) -> WeightGrid {
    let effective = match model {
        EarthModel::Oblate => *params,
        EarthModel::Sphere => params.to_sphere(),
    };
    let areas = row_cell_areas(grid, &effective);
    // every row has the same number of cells, so the row mean is the cell mean
    let mean = crate::sum::neumaier_sum(areas.iter().copied()) / areas.len() as f64;
    WeightGrid {
        n_lat: grid.n_lat(),
        n_lon: grid.n_lon(),
        lat_values: grid.lat_values().to_vec(),
        row_weights: areas.iter().map(|a| a / mean).collect(),
        model,
    }
}

/// Percentage by which a spherical model overstates the normalized weight of
/// the most poleward cell relative to `params`.
pub fn polar_overestimate(resolution_deg: f64, params: &SpheroidParams) -> Result<f64> {
    let grid = EquiangularGrid::new(resolution_deg)?;
    let oblate = latitude_weights(&grid, params, EarthModel::Oblate);
    let sphere = latitude_weights(&grid, params, EarthModel::Sphere);
    let last = grid.n_lat() - 1;
    Ok(100.0 * (sphere.row_weights[last] / oblate.row_weights[last] - 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::build_grid;
    use approx::assert_relative_eq;

    #[test]
    fn earth_total_area() {
        let s = total_surface_area(&SpheroidParams::earth());
        assert_relative_eq!(s, 510_065_604_944_206.145, max_relative = 1e-9);
    }

    #[test]
    fn unit_sphere_area() {
        let p = SpheroidParams::sphere(1.0).unwrap();
        assert_relative_eq!(total_surface_area(&p), 4.0 * PI, max_relative = 1e-15);
    }

    #[test]
    fn rejects_invalid_params() {
        assert!(SpheroidParams::new(1.0, 2.0).is_err());
        assert!(SpheroidParams::new(1.0, 0.0).is_err());
        assert!(SpheroidParams::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn band_validation() {
        assert!(LatitudeBand::new(10.0, 10.0).is_err());
        assert!(LatitudeBand::new(20.0, 10.0).is_err());
        assert!(LatitudeBand::new(-91.0, 10.0).is_err());
        assert!(LatitudeBand::new(-90.0, 90.0).is_ok());
    }

    #[test]
    fn full_and_half_zones() {
        let p = SpheroidParams::earth();
        let total = total_surface_area(&p);
        let full = band_area(&p, &LatitudeBand::new(-90.0, 90.0).unwrap());
        assert_relative_eq!(full, total, max_relative = 1e-14);
        let south = band_area(&p, &LatitudeBand::new(-90.0, 0.0).unwrap());
        assert_relative_eq!(south, total / 2.0, max_relative = 1e-14);
    }

    #[test]
    fn cell_area_proportional() {
        let p = SpheroidParams::earth();
        let band = LatitudeBand::new(-0.75, 0.75).unwrap();
        let b = band_area(&p, &band);
        assert_eq!(cell_area(&p, &band, 360.0).unwrap(), b);
        assert_relative_eq!(cell_area(&p, &band, 1.5).unwrap(), b * 1.5 / 360.0, max_relative = 1e-15);
        let total: f64 = (0..240).map(|_| cell_area(&p, &band, 1.5).unwrap()).sum();
        assert_relative_eq!(total, b, max_relative = 1e-12);
        assert!(cell_area(&p, &band, 0.0).is_err());
        assert!(cell_area(&p, &band, 361.0).is_err());
    }

    #[test]
    fn sphere_matches_spherical_formula() {
        let r = 6_371_000.0;
        let p = SpheroidParams::sphere(r).unwrap();
        for (lo, hi) in [(-90.0, -89.25), (-10.0, 35.5), (60.0, 90.0), (0.0, 0.25)] {
            let band = LatitudeBand::new(lo, hi).unwrap();
            let dlon = 1.5_f64.to_radians();
            let expected = r * r * dlon * (f64::sin(hi.to_radians()) - f64::sin(lo.to_radians()));
            assert_relative_eq!(cell_area(&p, &band, 1.5).unwrap(), expected, max_relative = 1e-12);
        }
    }

    #[test]
    fn weights_have_unit_mean() {
        for res in [90.0, 15.0, 1.5, 0.25] {
            let g = build_grid(res).unwrap();
            for model in [EarthModel::Oblate, EarthModel::Sphere] {
                let w = latitude_weights(&g, &SpheroidParams::earth(), model);
                assert_relative_eq!(w.mean(), 1.0, max_relative = 1e-12);
                assert!(w.row_weights().iter().all(|&x| x > 0.0));
            }
        }
    }

    #[test]
    fn sphere_vs_sphere_has_no_overestimate() {
        let p = SpheroidParams::sphere(EARTH_EQUATORIAL_RADIUS_M).unwrap();
        assert_eq!(polar_overestimate(1.5, &p).unwrap(), 0.0);
    }

    #[test]
    fn weights_csv_format() {
        let g = build_grid(90.0).unwrap();
        let w = latitude_weights(&g, &SpheroidParams::sphere(1.0).unwrap(), EarthModel::Sphere);
        let csv = w.to_csv();
        let lines: Vec<_> = csv.lines().collect();
        assert_eq!(lines[0], "lat,weight");
        assert_eq!(lines.len(), 4);
        assert!(lines[1].starts_with("-90,"));
        // pole rows: (1 - sin 45°) / mean, equator row: 2 sin 45° / mean
        let eq: f64 = lines[2].split(',').nth(1).unwrap().parse().unwrap();
        let mean = 2.0 / 3.0;
        assert_relative_eq!(eq, 2.0 * (0.5f64).sqrt() / mean, max_relative = 1e-15);
    }
}
