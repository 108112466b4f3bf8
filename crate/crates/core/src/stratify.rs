//! Grid-cell membership masks for every stratum of a catalog.

use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::boundaries::{AttributeCatalog, StratumMembers, ATTR_LANDCOVER, ATTR_TERRITORY, STRATUM_LAND, STRATUM_WATER};
use crate::error::{Error, Result};
use crate::fsio::write_atomic;
use crate::geometry::{rect_covered_by, Polygon, Rect};
use crate::grid::EquiangularGrid;

const MAGIC: &[u8] = b"SAFEMASK1\n";

/// Bitset over the flattened (row-major) grid.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct StrataMask {
    pub attribute: String,
    pub stratum: String,
    len: usize,
    bits: Vec<u8>,
}

impl StrataMask {
    pub fn empty(attribute: impl Into<String>, stratum: impl Into<String>, len: usize) -> Self {
        Self {
            attribute: attribute.into(),
            stratum: stratum.into(),
            len,
            bits: vec![0; len.div_ceil(8)],
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, flat: usize) -> bool {
        self.bits[flat / 8] >> (flat % 8) & 1 == 1
    }

    pub fn set(&mut self, flat: usize, on: bool) {
        let bit = 1u8 << (flat % 8);
        if on {
            self.bits[flat / 8] |= bit;
        } else {
            self.bits[flat / 8] &= !bit;
        }
    }

    pub fn count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    pub fn indices(&self) -> Vec<usize> {
        (0..self.len).filter(|&i| self.get(i)).collect()
    }

    fn or_assign(&mut self, other: &StrataMask) {
        for (a, b) in self.bits.iter_mut().zip(&other.bits) {
            *a |= b;
        }
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bits
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
struct MaskHeader {
    format: String,
    version: u32,
    grid_fingerprint: String,
    catalog_fingerprint: String,
    resolution_deg: f64,
    n_lat: usize,
    n_lon: usize,
    strata: Vec<(String, String)>,
}

/// All strata masks for one grid and catalog.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskSet {
    pub grid_fingerprint: String,
    pub catalog_fingerprint: String,
    pub resolution_deg: f64,
    pub n_lat: usize,
    pub n_lon: usize,
    pub masks: Vec<StrataMask>,
}

impl MaskSet {
    pub fn get(&self, attribute: &str, stratum: &str) -> Option<&StrataMask> {
        self.masks.iter().find(|m| m.attribute == attribute && m.stratum == stratum)
    }

    pub fn check_grid(&self, grid: &EquiangularGrid) -> Result<()> {
        let fp = grid.fingerprint();
        if self.grid_fingerprint != fp {
            return Err(Error::Fingerprint(format!(
                "masks built for grid {} but evaluation grid is {}",
                short(&self.grid_fingerprint),
                short(&fp)
            )));
        }
        Ok(())
    }
}

fn short(fp: &str) -> &str {
    &fp[..fp.len().min(12)]
}

/// Polygon bounding box → candidate cells, wrapping in longitude.
fn candidate_cells(grid: &EquiangularGrid, bbox: &Rect) -> Vec<usize> {
    let res = grid.resolution_deg();
    let (n_lat, n_lon) = grid.shape();
    let row_lo = (((bbox.min_y + 90.0) / res - 0.5).floor() as i64 - 1).max(0);
    let row_hi = (((bbox.max_y + 90.0) / res + 0.5).ceil() as i64 + 1).min(n_lat as i64 - 1);
    let k_lo = (bbox.min_x / res - 0.5).floor() as i64 - 1;
    let k_hi = (bbox.max_x / res + 0.5).ceil() as i64 + 1;
    let mut cols: Vec<usize> = (k_lo..=k_hi).map(|k| k.rem_euclid(n_lon as i64) as usize).collect();
    cols.sort_unstable();
    cols.dedup();

    let mut out = Vec::new();
    for i in row_lo..=row_hi {
        let i = i as usize;
        for &j in &cols {
            let cell = grid.cell_unchecked(i, j);
            if cell.rects().iter().any(|r| r.overlaps(bbox)) {
                out.push(grid.flat_index(i, j));
            }
        }
    }
    out
}

/// Computes every catalog stratum's mask on `grid`.
///
/// A territory owns every cell whose closed footprint touches its geometry.
/// Land is the union of territories; water is every cell not entirely
/// covered by land, so coastal cells belong to both.
pub fn assign_strata(grid: &EquiangularGrid, catalog: &AttributeCatalog) -> MaskSet {
    let n = grid.len();
    let territories = catalog.territories();

    // (territory index, polygon) pairs with their candidate cells
    let polys: Vec<(usize, &Polygon)> = territories
        .iter()
        .enumerate()
        .flat_map(|(t, r)| r.geometry.polygons().iter().map(move |p| (t, p)))
        .collect();

    let n_lon = grid.n_lon();
    let hits: Vec<Vec<usize>> = polys
        .par_iter()
        .map(|&(_, poly)| {
            candidate_cells(grid, &poly.bbox())
                .into_iter()
                .filter(|&flat| {
                    let cell = grid.cell_unchecked(flat / n_lon, flat % n_lon);
                    cell.rects().iter().any(|r| poly.intersects_rect(r))
                })
                .collect()
        })
        .collect();

    let mut territory_masks: Vec<StrataMask> = territories
        .iter()
        .map(|r| StrataMask::empty(ATTR_TERRITORY, r.territory_id.clone(), n))
        .collect();
    // (cell, polygon) pairs for the coverage test
    let mut cell_polys: Vec<(usize, usize)> = Vec::new();
    for (pi, touched) in hits.iter().enumerate() {
        let t = polys[pi].0;
        for &flat in touched {
            territory_masks[t].set(flat, true);
            cell_polys.push((flat, pi));
        }
    }
    cell_polys.sort_unstable();

    let mut land = StrataMask::empty(ATTR_LANDCOVER, STRATUM_LAND, n);
    for m in &territory_masks {
        land.or_assign(m);
    }

    // group polygon lists per land cell and test full coverage in parallel
    let mut groups: Vec<(usize, Vec<usize>)> = Vec::new();
    for &(flat, pi) in &cell_polys {
        match groups.last_mut() {
            Some((f, list)) if *f == flat => list.push(pi),
            _ => groups.push((flat, vec![pi])),
        }
    }
    let covered: Vec<usize> = groups
        .par_iter()
        .filter(|(flat, list)| {
            let subset: Vec<&Polygon> = list.iter().map(|&pi| polys[pi].1).collect();
            let cell = grid.cell_unchecked(flat / n_lon, flat % n_lon);
            cell.rects().iter().all(|r| rect_covered_by(r, &subset))
        })
        .map(|(flat, _)| *flat)
        .collect();
    let mut water = StrataMask::empty(ATTR_LANDCOVER, STRATUM_WATER, n);
    water.bits.iter_mut().for_each(|b| *b = 0xFF);
    for flat in covered {
        water.set(flat, false);
    }
    clear_tail(&mut water);

    let mut masks = Vec::new();
    for attr in catalog.attributes() {
        for stratum in &attr.strata {
            let mask = match &stratum.members {
                StratumMembers::Territories { territories: ids } => {
                    if attr.name == ATTR_TERRITORY {
                        let i = catalog.territory_index(&ids[0]).expect("catalog member");
                        let mut m = territory_masks[i].clone();
                        m.stratum = stratum.name.clone();
                        m
                    } else if attr.name == ATTR_LANDCOVER && stratum.name == STRATUM_LAND {
                        land.clone()
                    } else {
                        let mut m = StrataMask::empty(attr.name.clone(), stratum.name.clone(), n);
                        for id in ids {
                            if let Some(i) = catalog.territory_index(id) {
                                m.or_assign(&territory_masks[i]);
                            }
                        }
                        m
                    }
                }
                StratumMembers::Complement { .. } => {
                    let mut m = water.clone();
                    m.attribute = attr.name.clone();
                    m.stratum = stratum.name.clone();
                    m
                }
            };
            if mask.count() == 0 {
                warn!("stratum {}/{} covers no grid cells", attr.name, stratum.name);
            }
            masks.push(mask);
        }
    }

    MaskSet {
        grid_fingerprint: grid.fingerprint(),
        catalog_fingerprint: catalog.fingerprint(),
        resolution_deg: grid.resolution_deg(),
        n_lat: grid.n_lat(),
        n_lon: grid.n_lon(),
        masks,
    }
}

fn clear_tail(m: &mut StrataMask) {
    let extra = m.bits.len() * 8 - m.len;
    if extra > 0 {
        if let Some(last) = m.bits.last_mut() {
            *last &= 0xFF >> extra;
        }
    }
}

/// Serializes masks: magic line, JSON header line, then packed bitsets.
pub fn encode_masks(set: &MaskSet) -> Vec<u8> {
    let header = MaskHeader {
        format: "safemask".into(),
        version: 1,
        grid_fingerprint: set.grid_fingerprint.clone(),
        catalog_fingerprint: set.catalog_fingerprint.clone(),
        resolution_deg: set.resolution_deg,
        n_lat: set.n_lat,
        n_lon: set.n_lon,
        strata: set.masks.iter().map(|m| (m.attribute.clone(), m.stratum.clone())).collect(),
    };
    let mut out = MAGIC.to_vec();
    out.extend(serde_json::to_vec(&header).expect("header serializes"));
    out.push(b'\n');
    for m in &set.masks {
        out.extend_from_slice(&m.bits);
    }
    out
}

pub fn decode_masks(bytes: &[u8], origin: &Path) -> Result<MaskSet> {
    let corrupt = |msg: &str| Error::Corrupt {
        path: origin.to_path_buf(),
        msg: msg.to_string(),
    };
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| corrupt("bad magic"))?;
    let nl = rest.iter().position(|&b| b == b'\n').ok_or_else(|| corrupt("missing header"))?;
    let header: MaskHeader = serde_json::from_slice(&rest[..nl]).map_err(|e| corrupt(&format!("header: {e}")))?;
    let payload = &rest[nl + 1..];
    let len = header.n_lat * header.n_lon;
    let stride = len.div_ceil(8);
    if payload.len() != stride * header.strata.len() {
        return Err(corrupt("payload length does not match header"));
    }
    let masks = header
        .strata
        .iter()
        .zip(payload.chunks(stride.max(1)))
        .map(|((attribute, stratum), chunk)| StrataMask {
            attribute: attribute.clone(),
            stratum: stratum.clone(),
            len,
            bits: chunk.to_vec(),
        })
        .collect();
    Ok(MaskSet {
        grid_fingerprint: header.grid_fingerprint,
        catalog_fingerprint: header.catalog_fingerprint,
        resolution_deg: header.resolution_deg,
        n_lat: header.n_lat,
        n_lon: header.n_lon,
        masks,
    })
}

pub fn save_masks(set: &MaskSet, path: &Path) -> Result<()> {
    write_atomic(path, &encode_masks(set))
}

/// Reads masks and checks they were built for `grid`.
pub fn load_masks(path: &Path, grid: &EquiangularGrid) -> Result<MaskSet> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    let set = decode_masks(&bytes, path)?;
    set.check_grid(grid)?;
    Ok(set)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MembershipCount {
    pub attribute: String,
    pub stratum: String,
    pub n_gridpoints: usize,
}

pub fn membership_counts(set: &MaskSet) -> Vec<MembershipCount> {
    set.masks
        .iter()
        .map(|m| MembershipCount {
            attribute: m.attribute.clone(),
            stratum: m.stratum.clone(),
            n_gridpoints: m.count(),
        })
        .collect()
}

pub fn membership_counts_csv(counts: &[MembershipCount]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["attribute", "stratum", "n_gridpoints"]).expect("in-memory write");
    for c in counts {
        w.write_record([c.attribute.as_str(), c.stratum.as_str(), &c.n_gridpoints.to_string()])
            .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf8")
}
