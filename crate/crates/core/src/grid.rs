//! Equiangular lon/lat lattice and per-gridpoint cell polygons.
//!
//! Latitudes run from -90 to +90 inclusive (index 0 at the south pole).
//! Longitudes start at 0 at index 0, increase eastward, and wrap from +180
//! to -180 half way through the array, so every stored longitude lies in
//! [-180, 180).

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::geodesy::LatitudeBand;
use crate::geometry::Rect;

const DIVISOR_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct EquiangularGrid {
    resolution_deg: f64,
    n_lat: usize,
    n_lon: usize,
    lat_values: Vec<f64>,
    lon_values: Vec<f64>,
}

/// A gridpoint's cell, extended half a resolution step toward each neighbour.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellPolygon {
    /// Western edge. Greater than `lon_hi` when the cell wraps the antimeridian.
    pub lon_lo: f64,
    pub lon_hi: f64,
    pub lat_lo: f64,
    pub lat_hi: f64,
    pub wraps_antimeridian: bool,
}

impl CellPolygon {
    /// The cell as one or two planar rectangles (two when it straddles ±180).
    pub fn rects(&self) -> Vec<Rect> {
        if self.wraps_antimeridian {
            vec![
                Rect::new(self.lon_lo, self.lat_lo, 180.0, self.lat_hi),
                Rect::new(-180.0, self.lat_lo, self.lon_hi, self.lat_hi),
            ]
        } else {
            vec![Rect::new(self.lon_lo, self.lat_lo, self.lon_hi, self.lat_hi)]
        }
    }
}

fn whole_divisions(span: f64, resolution: f64) -> Option<usize> {
    let n = (span / resolution).round();
    if n >= 1.0 && (n * resolution - span).abs() <= DIVISOR_TOL * span {
        Some(n as usize)
    } else {
        None
    }
}

impl EquiangularGrid {
    pub fn new(resolution_deg: f64) -> Result<Self> {
        if !resolution_deg.is_finite() || resolution_deg <= 0.0 {
            return Err(Error::Resolution(resolution_deg));
        }
        let lat_steps = whole_divisions(180.0, resolution_deg).ok_or(Error::Resolution(resolution_deg))?;
        let n_lon = whole_divisions(360.0, resolution_deg).ok_or(Error::Resolution(resolution_deg))?;
        let n_lat = lat_steps + 1;

        let lat_values = (0..n_lat)
            .map(|i| {
                if i == lat_steps {
                    90.0
                } else {
                    -90.0 + i as f64 * resolution_deg
                }
            })
            .collect();
        let lon_values = (0..n_lon)
            .map(|j| {
                let lon = j as f64 * resolution_deg;
                if lon >= 180.0 - DIVISOR_TOL {
                    lon - 360.0
                } else {
                    lon
                }
            })
            .collect();

        Ok(Self {
            resolution_deg,
            n_lat,
            n_lon,
            lat_values,
            lon_values,
        })
    }

    pub fn resolution_deg(&self) -> f64 {
        self.resolution_deg
    }

    pub fn n_lat(&self) -> usize {
        self.n_lat
    }

    pub fn n_lon(&self) -> usize {
        self.n_lon
    }

    pub fn len(&self) -> usize {
        self.n_lat * self.n_lon
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.n_lat, self.n_lon)
    }

    pub fn lat_values(&self) -> &[f64] {
        &self.lat_values
    }

    pub fn lon_values(&self) -> &[f64] {
        &self.lon_values
    }

    /// Row-major flat index of a gridpoint.
    #[inline]
    pub fn flat_index(&self, lat_idx: usize, lon_idx: usize) -> usize {
        lat_idx * self.n_lon + lon_idx
    }

    fn check_lat(&self, lat_idx: usize) -> Result<()> {
        if lat_idx >= self.n_lat {
            return Err(Error::Index(format!("lat index {lat_idx} >= {}", self.n_lat)));
        }
        Ok(())
    }

    fn check_lon(&self, lon_idx: usize) -> Result<()> {
        if lon_idx >= self.n_lon {
            return Err(Error::Index(format!("lon index {lon_idx} >= {}", self.n_lon)));
        }
        Ok(())
    }

    /// Column index of a longitude that lies exactly on the lattice. Accepts
    /// any real longitude (180 and -180 name the same column).
    pub fn lon_index(&self, lon_deg: f64) -> Option<usize> {
        let x = lon_deg.rem_euclid(360.0) / self.resolution_deg;
        let j = x.round();
        if (x - j).abs() > 1e-6 {
            return None;
        }
        Some(j as usize % self.n_lon)
    }

    pub fn lat_index(&self, lat_deg: f64) -> Option<usize> {
        let x = (lat_deg + 90.0) / self.resolution_deg;
        let i = x.round();
        if (x - i).abs() > 1e-6 || i < 0.0 || i as usize >= self.n_lat {
            return None;
        }
        Some(i as usize)
    }

    pub fn band_of(&self, lat_idx: usize) -> Result<LatitudeBand> {
        self.check_lat(lat_idx)?;
        let (lo, hi) = self.lat_bounds(lat_idx);
        LatitudeBand::new(lo, hi)
    }

    pub(crate) fn lat_bounds(&self, lat_idx: usize) -> (f64, f64) {
        let half = self.resolution_deg / 2.0;
        let center = self.lat_values[lat_idx];
        let lo = if lat_idx == 0 { -90.0 } else { center - half };
        let hi = if lat_idx + 1 == self.n_lat { 90.0 } else { center + half };
        (lo, hi)
    }

    pub fn cell_polygon(&self, lat_idx: usize, lon_idx: usize) -> Result<CellPolygon> {
        self.check_lat(lat_idx)?;
        self.check_lon(lon_idx)?;
        Ok(self.cell_unchecked(lat_idx, lon_idx))
    }

    pub(crate) fn cell_unchecked(&self, lat_idx: usize, lon_idx: usize) -> CellPolygon {
        let half = self.resolution_deg / 2.0;
        let (lat_lo, lat_hi) = self.lat_bounds(lat_idx);
        let center = self.lon_values[lon_idx];
        let mut lon_lo = center - half;
        let mut lon_hi = center + half;
        let mut wraps = false;
        if lon_lo < -180.0 {
            lon_lo += 360.0;
            wraps = true;
        }
        if lon_hi > 180.0 {
            lon_hi -= 360.0;
            wraps = true;
        }
        CellPolygon {
            lon_lo,
            lon_hi,
            lat_lo,
            lat_hi,
            wraps_antimeridian: wraps,
        }
    }

    /// Hex SHA-256 over the resolution and both coordinate axes.
    pub fn fingerprint(&self) -> String {
        let mut h = Sha256::new();
        h.update(b"equiangular-v1");
        h.update(self.resolution_deg.to_le_bytes());
        h.update((self.n_lat as u64).to_le_bytes());
        h.update((self.n_lon as u64).to_le_bytes());
        for v in self.lat_values.iter().chain(&self.lon_values) {
            h.update(v.to_le_bytes());
        }
        hex(&h.finalize())
    }
}

pub fn build_grid(resolution_deg: f64) -> Result<EquiangularGrid> {
    EquiangularGrid::new(resolution_deg)
}

pub(crate) fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}
