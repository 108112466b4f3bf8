//! Planar lon/lat geometry: the handful of predicates stratification needs.
//!
//! Polygons are closed point sets. Every ring of a polygon contributes to an
//! even-odd fill, which gives holes their usual meaning and gives
//! self-intersecting rings a well-defined interior.

use serde::{Deserialize, Serialize};

pub type Point = [f64; 2];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub min_x: f64,
    pub min_y: f64,
    pub max_x: f64,
    pub max_y: f64,
}

impl Rect {
    pub fn new(min_x: f64, min_y: f64, max_x: f64, max_y: f64) -> Self {
        Self { min_x, min_y, max_x, max_y }
    }

    pub fn empty() -> Self {
        Self::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY)
    }

    pub fn is_empty(&self) -> bool {
        self.min_x > self.max_x || self.min_y > self.max_y
    }

    pub fn expand(&mut self, p: Point) {
        self.min_x = self.min_x.min(p[0]);
        self.min_y = self.min_y.min(p[1]);
        self.max_x = self.max_x.max(p[0]);
        self.max_y = self.max_y.max(p[1]);
    }

    /// Closed-box overlap (touching counts).
    pub fn overlaps(&self, other: &Rect) -> bool {
        self.min_x <= other.max_x && other.min_x <= self.max_x && self.min_y <= other.max_y && other.min_y <= self.max_y
    }

    pub fn contains_point(&self, p: Point) -> bool {
        p[0] >= self.min_x && p[0] <= self.max_x && p[1] >= self.min_y && p[1] <= self.max_y
    }

    pub fn area(&self) -> f64 {
        (self.max_x - self.min_x) * (self.max_y - self.min_y)
    }

    pub fn corners(&self) -> [Point; 4] {
        [
            [self.min_x, self.min_y],
            [self.max_x, self.min_y],
            [self.max_x, self.max_y],
            [self.min_x, self.max_y],
        ]
    }
}

/// A ring stored without the repeated closing vertex.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ring(pub Vec<Point>);

impl Ring {
    /// Builds a ring, dropping a repeated closing vertex and consecutive duplicates.
    pub fn new(mut points: Vec<Point>) -> Self {
        points.dedup();
        while points.len() > 1 && points.first() == points.last() {
            points.pop();
        }
        Ring(points)
    }

    pub fn points(&self) -> &[Point] {
        &self.0
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.0.len();
        (0..n).map(move |i| (self.0[i], self.0[(i + 1) % n]))
    }

    pub fn signed_area(&self) -> f64 {
        let mut s = crate::sum::NeumaierSum::new();
        for (a, b) in self.edges() {
            s += a[0] * b[1] - b[0] * a[1];
        }
        0.5 * s.total()
    }

    /// Fewer than three vertices, or all vertices collinear.
    pub fn is_degenerate(&self) -> bool {
        if self.0.len() < 3 {
            return true;
        }
        let a = self.0[0];
        let Some(&b) = self.0.iter().find(|&&p| p != a) else { return true };
        self.0.iter().all(|&p| orient(a, b, p) == 0.0)
    }

    /// True if any two non-adjacent edges touch or any two adjacent edges overlap.
    pub fn self_intersects(&self) -> bool {
        let n = self.0.len();
        if n < 4 {
            return false;
        }
        // sort-and-sweep on edge x extents
        let mut order: Vec<usize> = (0..n).collect();
        let min_x = |i: usize| self.0[i][0].min(self.0[(i + 1) % n][0]);
        let max_x = |i: usize| self.0[i][0].max(self.0[(i + 1) % n][0]);
        order.sort_by(|&a, &b| min_x(a).total_cmp(&min_x(b)));
        let mut active: Vec<usize> = Vec::new();
        for &i in &order {
            let lo = min_x(i);
            active.retain(|&j| max_x(j) >= lo);
            let (a, b) = (self.0[i], self.0[(i + 1) % n]);
            for &j in &active {
                let (c, d) = (self.0[j], self.0[(j + 1) % n]);
                let adjacent = (i + 1) % n == j || (j + 1) % n == i;
                if adjacent {
                    // shared vertex only; a collinear fold-back is an overlap
                    let shared = if (i + 1) % n == j { b } else { a };
                    let other_i = if shared == a { b } else { a };
                    let other_j = if shared == c { d } else { c };
                    if orient(shared, other_i, other_j) == 0.0 && dot(sub(other_i, shared), sub(other_j, shared)) > 0.0 {
                        return true;
                    }
                } else if segments_intersect(a, b, c, d) {
                    return true;
                }
            }
            active.push(i);
        }
        false
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Polygon {
    pub exterior: Ring,
    pub holes: Vec<Ring>,
}

impl Polygon {
    pub fn new(exterior: Ring, holes: Vec<Ring>) -> Self {
        Self { exterior, holes }
    }

    pub fn from_rect(r: &Rect) -> Self {
        Self::new(Ring::new(r.corners().to_vec()), vec![])
    }

    pub fn rings(&self) -> impl Iterator<Item = &Ring> {
        std::iter::once(&self.exterior).chain(&self.holes)
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        self.rings().flat_map(|r| r.edges())
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::empty();
        for p in self.exterior.points() {
            r.expand(*p);
        }
        r
    }

    /// Even-odd area (holes subtract).
    pub fn area(&self) -> f64 {
        self.exterior.signed_area().abs() - self.holes.iter().map(|h| h.signed_area().abs()).sum::<f64>()
    }

    pub fn locate(&self, p: Point) -> Location {
        locate_point(p, self)
    }

    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        rect_intersects_polygon(rect, self)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct MultiPolygon(pub Vec<Polygon>);

impl MultiPolygon {
    pub fn polygons(&self) -> &[Polygon] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn bbox(&self) -> Rect {
        let mut r = Rect::empty();
        for p in &self.0 {
            let b = p.bbox();
            if !b.is_empty() {
                r.expand([b.min_x, b.min_y]);
                r.expand([b.max_x, b.max_y]);
            }
        }
        r
    }

    pub fn intersects_rect(&self, rect: &Rect) -> bool {
        self.0.iter().any(|p| p.intersects_rect(rect))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Location {
    Inside,
    Boundary,
    Outside,
}

#[inline]
fn sub(a: Point, b: Point) -> Point {
    [a[0] - b[0], a[1] - b[1]]
}

#[inline]
fn dot(a: Point, b: Point) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}

/// Twice the signed area of triangle `abc`.
#[inline]
pub fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])
}

#[inline]
fn on_segment(p: Point, a: Point, b: Point) -> bool {
    orient(a, b, p) == 0.0
        && p[0] >= a[0].min(b[0])
        && p[0] <= a[0].max(b[0])
        && p[1] >= a[1].min(b[1])
        && p[1] <= a[1].max(b[1])
}

/// Closed-segment intersection test.
pub fn segments_intersect(a: Point, b: Point, c: Point, d: Point) -> bool {
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    on_segment(a, c, d) || on_segment(b, c, d) || on_segment(c, a, b) || on_segment(d, a, b)
}

/// Even-odd point location across all rings of `poly`.
pub fn locate_point(p: Point, poly: &Polygon) -> Location {
    let mut inside = false;
    for (a, b) in poly.edges() {
        if on_segment(p, a, b) {
            return Location::Boundary;
        }
        if (a[1] > p[1]) != (b[1] > p[1]) {
            let x = a[0] + (p[1] - a[1]) * (b[0] - a[0]) / (b[1] - a[1]);
            if p[0] < x {
                inside = !inside;
            }
        }
    }
    if inside {
        Location::Inside
    } else {
        Location::Outside
    }
}

const LEFT: u8 = 1;
const RIGHT: u8 = 2;
const BOTTOM: u8 = 4;
const TOP: u8 = 8;

#[inline]
fn outcode(p: Point, r: &Rect) -> u8 {
    let mut c = 0;
    if p[0] < r.min_x {
        c |= LEFT;
    } else if p[0] > r.max_x {
        c |= RIGHT;
    }
    if p[1] < r.min_y {
        c |= BOTTOM;
    } else if p[1] > r.max_y {
        c |= TOP;
    }
    c
}

/// Closed segment vs closed rectangle.
pub fn segment_intersects_rect(a: Point, b: Point, r: &Rect) -> bool {
    let (ca, cb) = (outcode(a, r), outcode(b, r));
    if ca == 0 || cb == 0 {
        return true;
    }
    if ca & cb != 0 {
        return false;
    }
    let [p0, p1, p2, p3] = r.corners();
    segments_intersect(a, b, p0, p1)
        || segments_intersect(a, b, p1, p2)
        || segments_intersect(a, b, p2, p3)
        || segments_intersect(a, b, p3, p0)
}

/// Closed rectangle vs closed polygon. Touching boundaries count.
pub fn rect_intersects_polygon(rect: &Rect, poly: &Polygon) -> bool {
    if !rect.overlaps(&poly.bbox()) {
        return false;
    }
    if poly.edges().any(|(a, b)| segment_intersects_rect(a, b, rect)) {
        return true;
    }
    // no boundary contact: either the rectangle sits inside the filled
    // region or the two are disjoint
    locate_point([rect.min_x, rect.min_y], poly) != Location::Outside
}

/// True when `rect` is entirely covered by the union of `polys`.
///
/// Sweeps vertical slabs bounded by every vertex abscissa and every pairwise
/// edge crossing inside the rectangle. Inside a slab the edges are ordered
/// and non-crossing, so coverage along the slab's midline decides coverage
/// of the whole slab.
pub fn rect_covered_by(rect: &Rect, polys: &[&Polygon]) -> bool {
    if rect.is_empty() || polys.is_empty() {
        return false;
    }
    // one polygon containing the rectangle with no edge entering its interior
    for poly in polys {
        if locate_point(rect_center(rect), poly) == Location::Inside
            && !poly.edges().any(|(a, b)| segment_enters_interior(a, b, rect))
        {
            return true;
        }
    }

    // every non-vertical edge spanning the rectangle's x-range takes part in
    // the parity count; only edges touching the rectangle create slab breaks
    let mut span: Vec<(usize, Point, Point)> = Vec::new();
    let mut near: Vec<usize> = Vec::new();
    let mut walls: Vec<f64> = Vec::new();
    for (k, poly) in polys.iter().enumerate() {
        for (a, b) in poly.edges() {
            if a[0].max(b[0]) < rect.min_x || a[0].min(b[0]) > rect.max_x {
                continue;
            }
            if a[0] == b[0] {
                if segment_intersects_rect(a, b, rect) {
                    walls.push(a[0]);
                }
                continue;
            }
            // canonical orientation so shared edges give identical crossings
            let (p, q) = if (a[0], a[1]) <= (b[0], b[1]) { (a, b) } else { (b, a) };
            if segment_intersects_rect(p, q, rect) {
                near.push(span.len());
            }
            span.push((k, p, q));
        }
    }

    let mut xs = vec![rect.min_x, rect.max_x];
    let mut push_x = |x: f64| {
        if x > rect.min_x && x < rect.max_x {
            xs.push(x);
        }
    };
    for &x in &walls {
        push_x(x);
    }
    for &i in &near {
        let (_, p, q) = span[i];
        push_x(p[0]);
        push_x(q[0]);
        for y in [rect.min_y, rect.max_y] {
            if p[1] != q[1] && (p[1] - y) * (q[1] - y) <= 0.0 {
                push_x(p[0] + (y - p[1]) * (q[0] - p[0]) / (q[1] - p[1]));
            }
        }
    }
    for (n, &i) in near.iter().enumerate() {
        for &j in &near[n + 1..] {
            if let Some(x) = crossing_x(span[i].1, span[i].2, span[j].1, span[j].2) {
                push_x(x);
            }
        }
    }
    xs.sort_by(f64::total_cmp);
    xs.dedup();

    let mut crossings: Vec<Vec<f64>> = vec![Vec::new(); polys.len()];
    let mut intervals: Vec<(f64, f64)> = Vec::new();
    for w in xs.windows(2) {
        let xm = 0.5 * (w[0] + w[1]);
        if xm <= w[0] || xm >= w[1] {
            continue;
        }
        for c in crossings.iter_mut() {
            c.clear();
        }
        for &(k, p, q) in &span {
            // half-open in x so a ring passing through a vertex counts once
            if p[0] < xm && xm <= q[0] {
                crossings[k].push(p[1] + (xm - p[0]) * (q[1] - p[1]) / (q[0] - p[0]));
            }
        }
        intervals.clear();
        for c in crossings.iter_mut() {
            c.sort_by(f64::total_cmp);
            for pair in c.chunks_exact(2) {
                intervals.push((pair[0], pair[1]));
            }
        }
        if !covers(&mut intervals, rect.min_y, rect.max_y) {
            return false;
        }
    }
    true
}

fn rect_center(r: &Rect) -> Point {
    [0.5 * (r.min_x + r.max_x), 0.5 * (r.min_y + r.max_y)]
}

/// Segment passes through the open interior of `r`.
fn segment_enters_interior(a: Point, b: Point, r: &Rect) -> bool {
    // Liang–Barsky clip against the open box; positive-length overlap means entry
    let (dx, dy) = (b[0] - a[0], b[1] - a[1]);
    let mut t0: f64 = 0.0;
    let mut t1: f64 = 1.0;
    for (p, q) in [
        (-dx, a[0] - r.min_x),
        (dx, r.max_x - a[0]),
        (-dy, a[1] - r.min_y),
        (dy, r.max_y - a[1]),
    ] {
        if p == 0.0 {
            if q <= 0.0 {
                return false;
            }
        } else {
            let t = q / p;
            if p < 0.0 {
                t0 = t0.max(t);
            } else {
                t1 = t1.min(t);
            }
        }
    }
    t0 < t1
}

/// Abscissa of a single crossing point of two segments, if they cross at one point.
fn crossing_x(a: Point, b: Point, c: Point, d: Point) -> Option<f64> {
    let r = sub(b, a);
    let s = sub(d, c);
    let denom = r[0] * s[1] - r[1] * s[0];
    if denom == 0.0 {
        return None;
    }
    let ca = sub(c, a);
    let t = (ca[0] * s[1] - ca[1] * s[0]) / denom;
    let u = (ca[0] * r[1] - ca[1] * r[0]) / denom;
    if (0.0..=1.0).contains(&t) && (0.0..=1.0).contains(&u) {
        Some(a[0] + t * r[0])
    } else {
        None
    }
}

fn covers(intervals: &mut [(f64, f64)], lo: f64, hi: f64) -> bool {
    intervals.sort_by(|a, b| a.0.total_cmp(&b.0));
    let mut reach = lo;
    for &(s, e) in intervals.iter() {
        if s > reach {
            break;
        }
        reach = reach.max(e);
        if reach >= hi {
            return true;
        }
    }
    reach >= hi
}
