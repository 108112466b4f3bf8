//! Independent reference implementations and fixture generators shared by
//! the integration tests.
#![allow(dead_code)]

use earthstrata::boundaries::{AttributeCatalog, TerritoryRecord};
use earthstrata::geometry::{MultiPolygon, Point, Polygon, Ring};
use earthstrata::grid::EquiangularGrid;
use rand::Rng;

// ---------------------------------------------------------------- geodesy

/// Zone area between two latitudes on an oblate spheroid by Gauss–Legendre
/// quadrature of dA = 2πa²(1−e²)cosφ / (1−e² sin²φ)² dφ.
pub fn quadrature_band_area(a: f64, c: f64, lat_lo: f64, lat_hi: f64) -> f64 {
    let e2 = 1.0 - (c * c) / (a * a);
    let f = |phi: f64| {
        let s = phi.sin();
        2.0 * std::f64::consts::PI * a * a * (1.0 - e2) * phi.cos() / (1.0 - e2 * s * s).powi(2)
    };
    let (lo, hi) = (lat_lo.to_radians(), lat_hi.to_radians());
    // composite 5-point Gauss–Legendre
    let nodes = [
        (0.0, 0.568_888_888_888_888_9),
        (-0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (0.538_469_310_105_683_1, 0.478_628_670_499_366_5),
        (-0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
        (0.906_179_845_938_664_0, 0.236_926_885_056_189_1),
    ];
    let pieces = 2000;
    let h = (hi - lo) / pieces as f64;
    let mut total = 0.0;
    for k in 0..pieces {
        let x0 = lo + k as f64 * h;
        let mid = x0 + 0.5 * h;
        let mut s = 0.0;
        for (x, w) in nodes {
            s += w * f(mid + 0.5 * h * x);
        }
        total += 0.5 * h * s;
    }
    total
}

// ---------------------------------------------------------------- planar geometry

fn point_on_segment(p: Point, a: Point, b: Point) -> bool {
    let cross = (b[0] - a[0]) * (p[1] - a[1]) - (b[1] - a[1]) * (p[0] - a[0]);
    cross == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Winding number of a closed ring around `p` (0 = outside).
fn winding(p: Point, ring: &[Point]) -> i32 {
    let n = ring.len();
    let mut w = 0;
    for i in 0..n {
        let (a, b) = (ring[i], ring[(i + 1) % n]);
        let is_left = (b[0] - a[0]) * (p[1] - a[1]) - (p[0] - a[0]) * (b[1] - a[1]);
        if a[1] <= p[1] {
            if b[1] > p[1] && is_left > 0.0 {
                w += 1;
            }
        } else if b[1] <= p[1] && is_left < 0.0 {
            w -= 1;
        }
    }
    w
}

/// Closed point-in-polygon for simple rings: boundary counts as inside.
pub fn oracle_point_in_polygon(p: Point, poly: &Polygon) -> bool {
    for ring in poly.rings() {
        let pts = ring.points();
        for i in 0..pts.len() {
            if point_on_segment(p, pts[i], pts[(i + 1) % pts.len()]) {
                return true;
            }
        }
    }
    if winding(p, poly.exterior.points()) == 0 {
        return false;
    }
    poly.holes.iter().all(|h| winding(p, h.points()) == 0)
}

/// Closed segment vs closed box by Liang–Barsky clipping.
fn segment_hits_box(a: Point, b: Point, r: [f64; 4]) -> bool {
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let (mut t0, mut t1) = (0.0f64, 1.0f64);
    for (p, q) in [(-dx, a[0] - r[0]), (dx, r[2] - a[0]), (-dy, a[1] - r[1]), (dy, r[3] - a[1])] {
        if p == 0.0 {
            if q < 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                if t > t1 {
                    return false;
                }
                t0 = t0.max(t);
            } else {
                if t < t0 {
                    return false;
                }
                t1 = t1.min(t);
            }
        }
    }
    t0 <= t1
}

/// Closed box `[min_x, min_y, max_x, max_y]` meets the closed polygon.
pub fn oracle_box_intersects(r: [f64; 4], poly: &Polygon) -> bool {
    for ring in poly.rings() {
        let pts = ring.points();
        for i in 0..pts.len() {
            if segment_hits_box(pts[i], pts[(i + 1) % pts.len()], r) {
                return true;
            }
        }
    }
    // no boundary contact: either the box is strictly inside or disjoint
    oracle_point_in_polygon([r[0], r[1]], poly)
}

/// Area of a ring clipped to a box (Sutherland–Hodgman), signed.
fn clipped_ring_area(ring: &[Point], r: [f64; 4]) -> f64 {
    let mut pts: Vec<Point> = ring.to_vec();
    let edges: [(usize, f64, bool); 4] = [(0, r[0], true), (0, r[2], false), (1, r[1], true), (1, r[3], false)];
    for (axis, bound, keep_greater) in edges {
        if pts.is_empty() {
            break;
        }
        let inside = |p: &Point| if keep_greater { p[axis] >= bound } else { p[axis] <= bound };
        let mut out = Vec::new();
        for i in 0..pts.len() {
            let cur = pts[i];
            let prev = pts[(i + pts.len() - 1) % pts.len()];
            let cross = |a: Point, b: Point| {
                let t = (bound - a[axis]) / (b[axis] - a[axis]);
                [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])]
            };
            match (inside(&prev), inside(&cur)) {
                (true, true) => out.push(cur),
                (true, false) => out.push(cross(prev, cur)),
                (false, true) => {
                    out.push(cross(prev, cur));
                    out.push(cur);
                }
                (false, false) => {}
            }
        }
        pts = out;
    }
    let n = pts.len();
    (0..n)
        .map(|i| {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            a[0] * b[1] - b[0] * a[1]
        })
        .sum::<f64>()
        * 0.5
}

/// Area of polygon ∩ box.
pub fn oracle_clipped_area(poly: &Polygon, r: [f64; 4]) -> f64 {
    let ext = clipped_ring_area(poly.exterior.points(), r).abs();
    let holes: f64 = poly.holes.iter().map(|h| clipped_ring_area(h.points(), r).abs()).sum();
    ext - holes
}

/// Cell footprint(s) computed from first principles: ±res/2 around the
/// centre, clamped at the poles, split at the antimeridian.
pub fn oracle_cell_boxes(res: f64, lat: f64, lon: f64) -> Vec<[f64; 4]> {
    let h = res / 2.0;
    let (y0, y1) = ((lat - h).max(-90.0), (lat + h).min(90.0));
    let (x0, x1) = (lon - h, lon + h);
    if x0 < -180.0 {
        vec![[-180.0, y0, x1, y1], [x0 + 360.0, y0, 180.0, y1]]
    } else if x1 > 180.0 {
        vec![[x0, y0, 180.0, y1], [-180.0, y0, x1 - 360.0, y1]]
    } else {
        vec![[x0, y0, x1, y1]]
    }
}

/// Brute-force masks: (territory membership per territory, land, water),
/// each a Vec<bool> over the flattened grid. Assumes territories have
/// pairwise disjoint interiors, so land coverage can be decided by area.
pub fn oracle_masks(grid: &EquiangularGrid, territories: &[TerritoryRecord]) -> (Vec<Vec<bool>>, Vec<bool>, Vec<bool>) {
    let res = grid.resolution_deg();
    let mut member = vec![vec![false; grid.len()]; territories.len()];
    let mut land = vec![false; grid.len()];
    let mut water = vec![false; grid.len()];
    for (i, &lat) in grid.lat_values().iter().enumerate() {
        for (j, &lon) in grid.lon_values().iter().enumerate() {
            let flat = i * grid.n_lon() + j;
            let boxes = oracle_cell_boxes(res, lat, lon);
            for (t, terr) in territories.iter().enumerate() {
                member[t][flat] = terr
                    .geometry
                    .polygons()
                    .iter()
                    .any(|p| boxes.iter().any(|b| oracle_box_intersects(*b, p)));
            }
            land[flat] = member.iter().any(|m| m[flat]);
            let covered = boxes.iter().all(|b| {
                let area = (b[2] - b[0]) * (b[3] - b[1]);
                let got: f64 = territories
                    .iter()
                    .flat_map(|t| t.geometry.polygons())
                    .map(|p| oracle_clipped_area(p, *b))
                    .sum();
                got >= area * (1.0 - 1e-12)
            });
            water[flat] = !covered;
        }
    }
    (member, land, water)
}

fn snap(v: f64) -> f64 {
    (v * 2.0).round() / 2.0
}

/// Up to five territories with disjoint interiors, each inside its own
/// longitude strip: rectangles (optionally holed, optionally spanning the
/// strip so neighbours share an edge) or star-shaped polygons.
pub fn random_territories<R: Rng>(rng: &mut R, n: usize) -> Vec<TerritoryRecord> {
    let mut cuts: Vec<f64> = (0..n - 1).map(|_| (rng.gen_range(-35..35) * 5) as f64).collect();
    cuts.sort_by(f64::total_cmp);
    cuts.dedup();
    let mut bounds = vec![-180.0];
    bounds.extend(cuts);
    bounds.push(180.0);

    let mut out = Vec::new();
    for (t, w) in bounds.windows(2).enumerate() {
        let (sx0, sx1) = (w[0], w[1]);
        if sx1 - sx0 < 2.0 {
            continue;
        }
        let (y0, y1) = {
            let a = snap(rng.gen_range(-90.0..90.0));
            let b = snap(rng.gen_range(-90.0..90.0));
            let (lo, hi) = if a < b { (a, b) } else { (b, a) };
            if hi - lo < 2.0 {
                (lo.min(80.0), lo.min(80.0) + 10.0)
            } else {
                (lo, hi)
            }
        };
        let poly = match rng.gen_range(0..4) {
            0 => rect(sx0, y0, sx1, y1, None),
            1 => {
                let x0 = snap(rng.gen_range(sx0..sx1 - 1.0));
                let x1 = snap(rng.gen_range(x0 + 0.5..sx1)).max(x0 + 0.5).min(sx1);
                rect(x0, y0, x1, y1, None)
            }
            2 => {
                let (cx, cy) = (snap(0.5 * (sx0 + sx1)), snap(0.5 * (y0 + y1)));
                let hx = snap(0.25 * (sx1 - sx0)).max(0.5);
                let hy = snap(0.25 * (y1 - y0)).max(0.5);
                rect(sx0, y0, sx1, y1, Some([cx - hx / 2.0, cy - hy / 2.0, cx + hx / 2.0, cy + hy / 2.0]))
            }
            _ => star(rng, sx0, y0, sx1, y1),
        };
        let mut rec = TerritoryRecord::new(format!("T{t}"), format!("Territory {t}"), MultiPolygon(vec![poly]));
        rec.subregion = Some(if t % 2 == 0 { "Even".into() } else { "Odd".into() });
        out.push(rec);
    }
    out
}

fn rect(x0: f64, y0: f64, x1: f64, y1: f64, hole: Option<[f64; 4]>) -> Polygon {
    let ring = Ring::new(vec![[x0, y0], [x1, y0], [x1, y1], [x0, y1]]);
    let holes = hole
        .map(|h| vec![Ring::new(vec![[h[0], h[1]], [h[0], h[3]], [h[2], h[3]], [h[2], h[1]]])])
        .unwrap_or_default();
    Polygon::new(ring, holes)
}

fn star<R: Rng>(rng: &mut R, x0: f64, y0: f64, x1: f64, y1: f64) -> Polygon {
    let (cx, cy) = (0.5 * (x0 + x1), 0.5 * (y0 + y1));
    let (rx, ry) = (0.5 * (x1 - x0), 0.5 * (y1 - y0));
    let k = rng.gen_range(3..9);
    let mut pts: Vec<Point> = Vec::new();
    for i in 0..k {
        let ang = std::f64::consts::TAU * (i as f64 + rng.gen_range(0.0..0.8)) / k as f64;
        let f = rng.gen_range(0.2..1.0);
        let p = [snap(cx + f * rx * ang.cos()).clamp(x0, x1), snap(cy + f * ry * ang.sin()).clamp(y0, y1)];
        if pts.last() != Some(&p) {
            pts.push(p);
        }
    }
    let ring = Ring::new(pts);
    if ring.is_degenerate() || ring.self_intersects() {
        return rect(x0, y0, x1, y1, None);
    }
    Polygon::new(ring, vec![])
}

pub fn catalog_of(territories: Vec<TerritoryRecord>) -> AttributeCatalog {
    AttributeCatalog::from_records(territories).expect("valid fixture catalog")
}

// ---------------------------------------------------------------- metrics

/// Triple loop over (init, gridpoint) for one stratum and lead.
pub fn oracle_stratum_rmse(
    pred: &[Vec<f64>],
    truth: &[Vec<f64>],
    weights: &[f64],
    member: &[bool],
) -> Option<f64> {
    let mut num = 0.0;
    let mut den = 0.0;
    for t in 0..pred.len() {
        for g in 0..member.len() {
            if !member[g] {
                continue;
            }
            let (p, y) = (pred[t][g], truth[t][g]);
            if p.is_nan() || y.is_nan() {
                continue;
            }
            num += weights[g] * (p - y) * (p - y);
            den += weights[g];
        }
    }
    if den > 0.0 {
        Some((num / den).sqrt())
    } else {
        None
    }
}

// ---------------------------------------------------------------- LOF

/// Breunig et al. local outlier factor, computed straight from the
/// definitions with O(n²) distance scans.
pub fn oracle_lof(values: &[f64], k: usize) -> Vec<f64> {
    let n = values.len();
    let mut distinct = values.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if n < 2 || distinct.len() < 2 {
        return vec![1.0; n];
    }
    let k = k.min(n - 1);
    let d = |a: usize, b: usize| (values[a] - values[b]).abs();
    let kdist: Vec<f64> = (0..n)
        .map(|p| {
            let mut ds: Vec<f64> = (0..n).filter(|&o| o != p).map(|o| d(p, o)).collect();
            ds.sort_by(f64::total_cmp);
            ds[k - 1]
        })
        .collect();
    let hood: Vec<Vec<usize>> = (0..n)
        .map(|p| (0..n).filter(|&o| o != p && d(p, o) <= kdist[p]).collect())
        .collect();
    let lrd: Vec<f64> = (0..n)
        .map(|p| {
            let s: f64 = hood[p].iter().map(|&o| kdist[o].max(d(p, o))).sum();
            if s == 0.0 {
                f64::INFINITY
            } else {
                hood[p].len() as f64 / s
            }
        })
        .collect();
    (0..n)
        .map(|p| {
            if lrd[p].is_infinite() {
                1.0
            } else {
                hood[p].iter().map(|&o| lrd[o]).sum::<f64>() / (hood[p].len() as f64 * lrd[p])
            }
        })
        .collect()
}

pub fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    if a == b {
        return true;
    }
    if a.is_infinite() || b.is_infinite() || a.is_nan() || b.is_nan() {
        return false;
    }
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(f64::MIN_POSITIVE)
}

// ---------------------------------------------------------------- fixture checks

use earthstrata::datastore::{Dtype, ForecastBundle, TruthBundle};
use earthstrata::fairness::lof_scores;
use earthstrata::geodesy::WeightGrid;
use earthstrata::metrics::{stratified_rmse, TruthPolicy};
use earthstrata::stratify::{assign_strata, MaskSet, StrataMask};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub const STRATIFY_RESOLUTIONS: [f64; 4] = [15.0, 20.0, 30.0, 45.0];

/// Random stratification fixture compared against the brute-force oracle.
pub fn check_stratify_fixture(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let res = STRATIFY_RESOLUTIONS[rng.gen_range(0..STRATIFY_RESOLUTIONS.len())];
    let grid = EquiangularGrid::new(res).unwrap();
    let n = rng.gen_range(1..=5);
    let territories = random_territories(&mut rng, n);
    let catalog = catalog_of(territories.clone());
    let set = assign_strata(&grid, &catalog);
    let (member, land, water) = oracle_masks(&grid, &territories);

    for (t, terr) in territories.iter().enumerate() {
        let m = set.get("territory", &terr.territory_id).ok_or("missing territory mask")?;
        for g in 0..grid.len() {
            if m.get(g) != member[t][g] {
                return Err(format!("seed {seed}: territory {} cell {g} differs (oracle {})", terr.territory_id, member[t][g]));
            }
        }
    }
    let got_land = set.get("landcover", "land").ok_or("missing land")?;
    let got_water = set.get("landcover", "water").ok_or("missing water")?;
    for g in 0..grid.len() {
        if got_land.get(g) != land[g] {
            return Err(format!("seed {seed}: land cell {g} differs"));
        }
        if got_water.get(g) != water[g] {
            return Err(format!("seed {seed}: water cell {g} differs (oracle {}) at {res}°", water[g]));
        }
        if !(got_land.get(g) || got_water.get(g)) {
            return Err(format!("seed {seed}: cell {g} in neither land nor water"));
        }
    }
    for attr in ["subregion"] {
        for name in ["Even", "Odd"] {
            if let Some(m) = set.get(attr, name) {
                for g in 0..grid.len() {
                    let expect = territories
                        .iter()
                        .enumerate()
                        .any(|(t, r)| r.subregion.as_deref() == Some(name) && member[t][g]);
                    if m.get(g) != expect {
                        return Err(format!("seed {seed}: subregion {name} cell {g} differs"));
                    }
                }
            }
        }
    }
    Ok(())
}

pub fn mask_set_from(grid: &EquiangularGrid, members: &[Vec<bool>]) -> MaskSet {
    let masks = members
        .iter()
        .enumerate()
        .map(|(s, m)| {
            let mut mask = StrataMask::empty("attr", format!("s{s}"), grid.len());
            for (g, &on) in m.iter().enumerate() {
                mask.set(g, on);
            }
            mask
        })
        .collect();
    MaskSet {
        grid_fingerprint: grid.fingerprint(),
        catalog_fingerprint: String::new(),
        resolution_deg: grid.resolution_deg(),
        n_lat: grid.n_lat(),
        n_lon: grid.n_lon(),
        masks,
    }
}

/// Random metrics fixture (with NaNs when `with_nan`) against the triple loop.
pub fn check_metrics_fixture(seed: u64, with_nan: bool) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // grids no larger than 12 x 8
    let res = [30.0, 45.0, 60.0, 90.0][rng.gen_range(0..4)];
    let grid = EquiangularGrid::new(res).unwrap();
    let n = grid.len();
    let n_init = rng.gen_range(1..=3);
    let leads = vec![6u32, 12];
    let n_strata = rng.gen_range(1..=4);
    let members: Vec<Vec<bool>> = (0..n_strata)
        .map(|_| {
            let p = rng.gen_range(0.0..1.0);
            (0..n).map(|_| rng.gen_bool(p)).collect()
        })
        .collect();
    let rows: Vec<f64> = (0..grid.n_lat()).map(|_| rng.gen_range(0.01..3.0)).collect();
    let weights = WeightGrid::from_rows(grid.n_lon(), rows.clone());
    let flat_w: Vec<f64> = (0..n).map(|g| rows[g / grid.n_lon()]).collect();

    let init_times: Vec<_> = (0..n_init)
        .map(|i| chrono::DateTime::from_timestamp(i as i64 * 6 * 3600, 0).unwrap())
        .collect();
    let mut valid = Vec::new();
    for t in &init_times {
        for &l in &leads {
            valid.push(*t + chrono::Duration::hours(l as i64));
        }
    }
    valid.sort();
    valid.dedup();
    let nan_p = if with_nan { 0.2 } else { 0.0 };
    let field = |rng: &mut ChaCha8Rng| -> Vec<f64> {
        let mut v: Vec<f64> = (0..n)
            .map(|_| if rng.gen_bool(nan_p) { f64::NAN } else { rng.gen_range(-50.0..50.0) })
            .collect();
        if v.iter().all(|x| x.is_nan()) {
            v[0] = 1.0;
        }
        v
    };
    let truth_slices: Vec<Vec<f64>> = valid.iter().map(|_| field(&mut rng)).collect();
    let mut pred_values = Vec::new();
    let mut pred_slices = vec![vec![Vec::new(); n_init]; leads.len()];
    for i in 0..n_init {
        for (l, _) in leads.iter().enumerate() {
            let s = field(&mut rng);
            pred_values.extend_from_slice(&s);
            pred_slices[l][i] = s;
        }
    }
    let pred = ForecastBundle {
        variable: "X".into(),
        units: String::new(),
        init_times: init_times.clone(),
        lead_times_h: leads.clone(),
        grid: grid.clone(),
        dtype: Dtype::Float64,
        values: pred_values,
    };
    let truth = TruthBundle {
        variable: "X".into(),
        units: String::new(),
        valid_times: valid.clone(),
        grid: grid.clone(),
        dtype: Dtype::Float64,
        values: truth_slices.concat(),
    };
    let masks = mask_set_from(&grid, &members);
    let table = stratified_rmse("m", &pred, &truth, &masks, &weights, TruthPolicy::Strict).map_err(|e| e.to_string())?;
    for row in &table.rows {
        let s: usize = row.stratum[1..].parse().unwrap();
        let l = leads.iter().position(|&x| x == row.lead_time_h).unwrap();
        let truth_for: Vec<Vec<f64>> = (0..n_init)
            .map(|i| {
                let vt = init_times[i] + chrono::Duration::hours(leads[l] as i64);
                truth_slices[valid.iter().position(|t| *t == vt).unwrap()].clone()
            })
            .collect();
        let expect = oracle_stratum_rmse(&pred_slices[l], &truth_for, &flat_w, &members[s]);
        let ok = match (row.rmse, expect) {
            (Some(a), Some(b)) => rel_close(a, b, 1e-12),
            (None, None) => true,
            _ => false,
        };
        if !ok {
            return Err(format!("seed {seed}: stratum {s} lead {}: {:?} vs oracle {:?}", leads[l], row.rmse, expect));
        }
    }
    Ok(())
}

/// Random LOF fixture against the direct definition.
pub fn check_lof_fixture(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.gen_range(2..=25);
    let k = rng.gen_range(1..=20);
    let values: Vec<f64> = match rng.gen_range(0..3) {
        0 => (0..n).map(|_| rng.gen_range(0.0..10.0)).collect(),
        1 => (0..n).map(|_| (rng.gen_range(0..6) as f64) * 0.5).collect(),
        _ => {
            let mut v: Vec<f64> = (0..n).map(|_| rng.gen_range(1.0..1.5)).collect();
            v[0] = rng.gen_range(5.0..20.0);
            v
        }
    };
    let got = lof_scores(&values, k);
    let expect = oracle_lof(&values, k);
    for i in 0..n {
        if !rel_close(got.scores[i], expect[i], 1e-9) {
            return Err(format!("seed {seed}: LOF[{i}] {} vs oracle {} for {values:?}, k={k}", got.scores[i], expect[i]));
        }
        if got.flagged[i] != (expect[i] > 1.5) {
            return Err(format!("seed {seed}: flag mismatch at {i}"));
        }
    }
    Ok(())
}

/// Every value repeated at least k+1 times.
pub fn check_duplicate_heavy(seed: u64) -> Result<(), String> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let k = rng.gen_range(1..=5);
    let distinct = rng.gen_range(1..=4);
    let mut values = Vec::new();
    for _ in 0..distinct {
        let v = rng.gen_range(0.0..10.0);
        for _ in 0..rng.gen_range(k + 1..=k + 3) {
            values.push(v);
        }
    }
    let flags = lof_scores(&values, k);
    if flags.flagged.iter().any(|&f| f) {
        return Err(format!("seed {seed}: duplicate-heavy set {values:?} (k={k}) flagged"));
    }
    Ok(())
}
