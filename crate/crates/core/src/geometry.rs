//! Planar geometry for relay planning.
//!
//! Everything works in double precision with an absolute predicate tolerance
//! of [`GEOM_TOL`] metres. Region decompositions are built by splitting the
//! hull polygon along perpendicular bisectors (relay side) or by intersecting
//! it with concentric radial bands around the source (source side).

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::hypergraph::NodeId;

/// Absolute tolerance used by every geometric predicate.
pub const GEOM_TOL: f64 = 1e-9;

/// Default half-width used to inflate a zero-area hull.
pub const DEFAULT_HULL_MARGIN: f64 = 1e-6;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("coincident points have no perpendicular bisector")]
    DegeneratePair,
    #[error("point ({x}, {y}) lies outside the hull")]
    OutOfHull { x: f64, y: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }

    pub fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }

    pub fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }

    pub fn scale(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }

    pub fn dot(self, o: Point) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: Point) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    /// `self + t (other - self)`
    pub fn lerp(self, other: Point, t: f64) -> Point {
        Point::new(self.x + t * (other.x - self.x), self.y + t * (other.y - self.y))
    }
}

/// Euclidean distance.
pub fn distance(p: Point, q: Point) -> f64 {
    (p.x - q.x).hypot(p.y - q.y)
}

fn cross3(o: Point, a: Point, b: Point) -> f64 {
    a.sub(o).cross(b.sub(o))
}

/// Closed half-plane `{p : normal · p <= offset}` with a unit normal.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HalfPlane {
    pub normal: [f64; 2],
    pub offset: f64,
}

impl HalfPlane {
    /// Builds a half-plane from an arbitrary (non-zero) normal, normalizing it.
    pub fn new(nx: f64, ny: f64, offset: f64) -> Self {
        let len = nx.hypot(ny);
        debug_assert!(len > 0.0);
        Self {
            normal: [nx / len, ny / len],
            offset: offset / len,
        }
    }

    /// `normal · p - offset`; negative inside.
    pub fn signed_distance(&self, p: Point) -> f64 {
        self.normal[0] * p.x + self.normal[1] * p.y - self.offset
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.signed_distance(p) <= tol
    }

    pub fn complement(&self) -> HalfPlane {
        HalfPlane {
            normal: [-self.normal[0], -self.normal[1]],
            offset: -self.offset,
        }
    }
}

/// Half-plane of points at least as close to `a` as to `b`.
pub fn perpendicular_bisector(a: Point, b: Point) -> Result<HalfPlane, GeometryError> {
    let d = b.sub(a);
    if d.norm() <= GEOM_TOL {
        return Err(GeometryError::DegeneratePair);
    }
    let mid = a.lerp(b, 0.5);
    Ok(HalfPlane::new(d.x, d.y, d.dot(mid)))
}

/// Convex polygon stored as a counter-clockwise vertex list.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexPolygon {
    pub vertices: Vec<Point>,
}

impl ConvexPolygon {
    pub fn area(&self) -> f64 {
        let v = &self.vertices;
        if v.len() < 3 {
            return 0.0;
        }
        let mut a = 0.0;
        for i in 0..v.len() {
            a += v[i].cross(v[(i + 1) % v.len()]);
        }
        0.5 * a
    }

    /// Area centroid, falling back to the vertex mean for degenerate polygons.
    pub fn centroid(&self) -> Point {
        let v = &self.vertices;
        let area = self.area();
        if v.len() >= 3 && area.abs() > 0.0 {
            // shift to the first vertex for conditioning
            let o = v[0];
            let (mut cx, mut cy, mut a2) = (0.0, 0.0, 0.0);
            for i in 0..v.len() {
                let p = v[i].sub(o);
                let q = v[(i + 1) % v.len()].sub(o);
                let c = p.cross(q);
                a2 += c;
                cx += (p.x + q.x) * c;
                cy += (p.y + q.y) * c;
            }
            if a2.abs() > 0.0 {
                return Point::new(o.x + cx / (3.0 * a2), o.y + cy / (3.0 * a2));
            }
        }
        let n = v.len().max(1) as f64;
        let s = v.iter().fold(Point::default(), |acc, p| acc.add(*p));
        s.scale(1.0 / n)
    }

    /// Outward half-planes of the edges (requires at least 3 vertices).
    pub fn halfplanes(&self) -> Vec<HalfPlane> {
        let v = &self.vertices;
        let mut out = Vec::with_capacity(v.len());
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let e = b.sub(a);
            if e.norm() <= 0.0 {
                continue;
            }
            // interior is on the left of a->b
            out.push(HalfPlane::new(e.y, -e.x, e.y * a.x - e.x * a.y));
        }
        out
    }

    pub fn bounding_box(&self) -> (Point, Point) {
        let mut lo = Point::new(f64::INFINITY, f64::INFINITY);
        let mut hi = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in &self.vertices {
            lo.x = lo.x.min(p.x);
            lo.y = lo.y.min(p.y);
            hi.x = hi.x.max(p.x);
            hi.y = hi.y.max(p.y);
        }
        (lo, hi)
    }

    /// Intersection with a half-plane (Sutherland-Hodgman on a single edge).
    pub fn clip(&self, hp: &HalfPlane) -> ConvexPolygon {
        let v = &self.vertices;
        let mut out = Vec::with_capacity(v.len() + 1);
        if v.is_empty() {
            return ConvexPolygon { vertices: out };
        }
        for i in 0..v.len() {
            let a = v[i];
            let b = v[(i + 1) % v.len()];
            let da = hp.signed_distance(a);
            let db = hp.signed_distance(b);
            if da <= 0.0 {
                out.push(a);
            }
            if (da < 0.0 && db > 0.0) || (da > 0.0 && db < 0.0) {
                let t = da / (da - db);
                out.push(a.lerp(b, t));
            }
        }
        out.dedup_by(|a, b| distance(*a, *b) <= GEOM_TOL * 1e-3);
        if out.len() > 1 && distance(out[0], out[out.len() - 1]) <= GEOM_TOL * 1e-3 {
            out.pop();
        }
        ConvexPolygon { vertices: out }
    }
}

/// Convex hull by Andrew's monotone chain. Returns a minimal CCW vertex list
/// starting at the lexicographically smallest point; collinear input yields
/// the two extreme points.
pub fn convex_hull(points: &[Point]) -> Result<ConvexPolygon, GeometryError> {
    if points.len() < 2 {
        return Err(GeometryError::InvalidInput(
            "convex hull needs at least 2 points".into(),
        ));
    }
    if points.iter().any(|p| !p.is_finite()) {
        return Err(GeometryError::InvalidInput("non-finite coordinate".into()));
    }
    let mut pts: Vec<Point> = points.to_vec();
    pts.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    pts.dedup_by(|a, b| distance(*a, *b) <= GEOM_TOL);
    if pts.len() < 2 {
        return Err(GeometryError::InvalidInput(
            "convex hull needs at least 2 distinct points".into(),
        ));
    }

    // a turn counts as strictly left only beyond the tolerance scaled by edge length
    let left = |o: Point, a: Point, b: Point| {
        let scale = distance(o, a).max(distance(o, b)).max(1.0);
        cross3(o, a, b) > GEOM_TOL * scale
    };

    let mut lower: Vec<Point> = Vec::new();
    for &p in &pts {
        while lower.len() >= 2 && !left(lower[lower.len() - 2], lower[lower.len() - 1], p) {
            lower.pop();
        }
        lower.push(p);
    }
    let mut upper: Vec<Point> = Vec::new();
    for &p in pts.iter().rev() {
        while upper.len() >= 2 && !left(upper[upper.len() - 2], upper[upper.len() - 1], p) {
            upper.pop();
        }
        upper.push(p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    if lower.len() < 3 {
        // collinear: keep the two extremes
        let first = pts[0];
        let last = pts[pts.len() - 1];
        return Ok(ConvexPolygon {
            vertices: vec![first, last],
        });
    }
    Ok(ConvexPolygon { vertices: lower })
}

/// The feasible relay region: the node hull, inflated when it has no area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Hull {
    /// Minimal hull of the nodes (may be a 2-vertex segment).
    pub nodes_hull: ConvexPolygon,
    /// Polygon with positive area used for containment and decompositions.
    pub polygon: ConvexPolygon,
    pub halfplanes: Vec<HalfPlane>,
    pub inflated: bool,
}

impl Hull {
    pub fn from_points(points: &[Point], margin: f64) -> Result<Self, GeometryError> {
        let nodes_hull = convex_hull(points)?;
        Self::from_polygon_inner(nodes_hull, margin)
    }

    /// Wraps an arbitrary convex CCW polygon (used for custom domains).
    pub fn from_polygon(polygon: ConvexPolygon) -> Result<Self, GeometryError> {
        Self::from_polygon_inner(polygon, DEFAULT_HULL_MARGIN)
    }

    fn from_polygon_inner(nodes_hull: ConvexPolygon, margin: f64) -> Result<Self, GeometryError> {
        let (lo, hi) = nodes_hull.bounding_box();
        let extent = distance(lo, hi).max(1.0);
        let degenerate =
            nodes_hull.vertices.len() < 3 || nodes_hull.area() <= GEOM_TOL * extent;
        let polygon = if degenerate {
            if !(margin > 0.0) {
                return Err(GeometryError::InvalidInput(
                    "zero-area hull needs a positive inflation margin".into(),
                ));
            }
            let a = nodes_hull.vertices[0];
            let b = *nodes_hull.vertices.last().unwrap();
            let d = b.sub(a);
            let len = d.norm();
            if len <= GEOM_TOL {
                return Err(GeometryError::InvalidInput("hull collapsed to a point".into()));
            }
            let nrm = Point::new(-d.y / len, d.x / len).scale(margin);
            ConvexPolygon {
                vertices: vec![a.sub(nrm), b.sub(nrm), b.add(nrm), a.add(nrm)],
            }
        } else {
            nodes_hull.clone()
        };
        let halfplanes = polygon.halfplanes();
        Ok(Self {
            nodes_hull,
            polygon,
            halfplanes,
            inflated: degenerate,
        })
    }

    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.halfplanes.iter().all(|h| h.contains(p, tol))
    }

    /// Distance to the boundary for interior points, negative outside.
    pub fn clearance(&self, p: Point) -> f64 {
        self.halfplanes
            .iter()
            .map(|h| -h.signed_distance(p))
            .fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self) -> Point {
        if self.inflated {
            let v = &self.nodes_hull.vertices;
            v[0].lerp(v[v.len() - 1], 0.5)
        } else {
            self.polygon.centroid()
        }
    }

    /// Euclidean projection onto the (inflated) hull polygon.
    pub fn project(&self, p: Point) -> Point {
        if self.contains(p, 0.0) {
            return p;
        }
        let v = &self.polygon.vertices;
        let mut best = v[0];
        let mut best_d = f64::INFINITY;
        for i in 0..v.len() {
            let q = closest_on_segment(p, v[i], v[(i + 1) % v.len()]);
            let d = distance(p, q);
            if d < best_d {
                best_d = d;
                best = q;
            }
        }
        best
    }
}

fn closest_on_segment(p: Point, a: Point, b: Point) -> Point {
    let ab = b.sub(a);
    let l2 = ab.dot(ab);
    if l2 <= 0.0 {
        return a;
    }
    let t = (p.sub(a).dot(ab) / l2).clamp(0.0, 1.0);
    a.lerp(b, t)
}

/// Annulus `r_lo <= |p - center| <= r_hi` (`r_hi = None` means unbounded).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialBand {
    pub center: Point,
    pub r_lo: f64,
    pub r_hi: Option<f64>,
}

impl RadialBand {
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        let d = distance(self.center, p);
        d >= self.r_lo - tol && self.r_hi.is_none_or(|h| d <= h + tol)
    }

    /// Signed distance to the band boundary, positive inside.
    pub fn clearance(&self, p: Point) -> f64 {
        let d = distance(self.center, p);
        let lo = if self.r_lo > 0.0 { d - self.r_lo } else { f64::INFINITY };
        let hi = self.r_hi.map_or(f64::INFINITY, |h| h - d);
        lo.min(hi)
    }
}

/// A convex region: half-plane constraints, an optional radial band and a
/// witness point strictly inside all of them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvexCell {
    pub halfplanes: Vec<HalfPlane>,
    pub radial: Option<RadialBand>,
    /// Polygonal boundary when the cell has no radial constraint.
    pub polygon: Option<ConvexPolygon>,
    pub witness: Point,
}

impl ConvexCell {
    pub fn contains(&self, p: Point, tol: f64) -> bool {
        self.halfplanes.iter().all(|h| h.contains(p, tol))
            && self.radial.is_none_or(|r| r.contains(p, tol))
    }

    pub fn clearance(&self, p: Point) -> f64 {
        let hp = self
            .halfplanes
            .iter()
            .map(|h| -h.signed_distance(p))
            .fold(f64::INFINITY, f64::min);
        hp.min(self.radial.map_or(f64::INFINITY, |r| r.clearance(p)))
    }

    /// Largest violation of any constraint at `p` (zero or negative inside).
    fn violation(&self, p: Point) -> f64 {
        -self.clearance(p)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub cell: ConvexCell,
    /// Nodes by increasing distance from the reference transmitter.
    pub ordering: Vec<NodeId>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionDecomposition {
    pub reference: NodeId,
    pub hull: Hull,
    pub cells: Vec<Region>,
}

impl RegionDecomposition {
    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

/// Sorts the indices of `sites` by distance from `from`, ties by index.
pub fn distance_order(from: Point, sites: &[Point]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..sites.len()).collect();
    let d: Vec<f64> = sites.iter().map(|s| distance(from, *s)).collect();
    idx.sort_by(|&a, &b| d[a].total_cmp(&d[b]).then(a.cmp(&b)));
    idx
}

/// Superimposed order-k Voronoi cells of the destinations, restricted to the hull.
///
/// The hull polygon is split successively by every pairwise bisector; a piece
/// is kept only if both sides have positive area. Each surviving cell carries
/// the exact destination ordering at its centroid.
pub fn relay_order_regions(destinations: &[Point], hull: &Hull) -> RegionDecomposition {
    let area_tol = hull.polygon.area().abs() * 1e-12;
    let mut cells: Vec<(ConvexPolygon, Vec<HalfPlane>)> =
        vec![(hull.polygon.clone(), hull.halfplanes.clone())];

    for i in 0..destinations.len() {
        for j in (i + 1)..destinations.len() {
            let Ok(bis) = perpendicular_bisector(destinations[i], destinations[j]) else {
                // coincident sites share every ordering slot
                continue;
            };
            let other = bis.complement();
            let mut next = Vec::with_capacity(cells.len() * 2);
            for (poly, hps) in cells {
                let a = poly.clip(&bis);
                let b = poly.clip(&other);
                if a.area() > area_tol && b.area() > area_tol {
                    let mut ha = hps.clone();
                    ha.push(bis);
                    let mut hb = hps;
                    hb.push(other);
                    next.push((a, ha));
                    next.push((b, hb));
                } else {
                    next.push((poly, hps));
                }
            }
            cells = next;
        }
    }

    let cells = cells
        .into_iter()
        .map(|(poly, halfplanes)| {
            let witness = poly.centroid();
            let ordering = distance_order(witness, destinations)
                .into_iter()
                .map(NodeId::Dest)
                .collect();
            Region {
                cell: ConvexCell {
                    halfplanes,
                    radial: None,
                    polygon: Some(poly),
                    witness,
                },
                ordering,
            }
        })
        .collect();

    RegionDecomposition {
        reference: NodeId::Relay,
        hull: hull.clone(),
        cells,
    }
}

/// Candidate interior points used to certify a cell inside a polygon.
fn witness_candidates(poly: &ConvexPolygon, anchor: Point, radii: &[f64]) -> Vec<Point> {
    let mut out = Vec::new();
    let c = poly.centroid();
    out.push(c);
    let (lo, hi) = poly.bounding_box();
    const G: usize = 48;
    for i in 0..G {
        for j in 0..G {
            let fx = (i as f64 + 0.5) / G as f64;
            let fy = (j as f64 + 0.5) / G as f64;
            out.push(Point::new(lo.x + fx * (hi.x - lo.x), lo.y + fy * (hi.y - lo.y)));
        }
    }
    // cells can be thin caps at a corner of the polygon
    for v in &poly.vertices {
        let mut t = 0.5;
        for _ in 0..30 {
            out.push(v.lerp(c, t));
            t *= 0.5;
        }
    }
    // points on rays from the anchor, at the requested radii
    let mut targets: Vec<Point> = poly
        .vertices
        .iter()
        .map(|v| v.lerp(c, 0.05))
        .collect();
    targets.push(c);
    for w in targets {
        let dir = w.sub(anchor);
        let len = dir.norm();
        if len <= GEOM_TOL {
            continue;
        }
        for &r in radii {
            if r > 0.0 && r.is_finite() {
                out.push(anchor.add(dir.scale(r / len)));
            }
        }
    }
    out
}

/// Finds the candidate with the largest clearance inside `cell`; `None` if
/// no candidate is strictly inside.
fn best_witness(cell: &ConvexCell, candidates: &[Point]) -> Option<Point> {
    let mut best: Option<(f64, Point)> = None;
    for &p in candidates {
        let c = cell.clearance(p);
        if c > GEOM_TOL && best.is_none_or(|(bc, _)| c > bc) {
            best = Some((c, p));
        }
    }
    best.map(|(_, p)| p)
}

/// Distinct source-destination radii (within [`GEOM_TOL`]), ascending.
pub fn distinct_radii(source: Point, destinations: &[Point]) -> Vec<f64> {
    let mut r: Vec<f64> = destinations.iter().map(|d| distance(source, *d)).collect();
    r.sort_by(f64::total_cmp);
    r.dedup_by(|a, b| (*a - *b).abs() <= GEOM_TOL);
    r
}

/// Concentric radial cells around the source (disc, rings, outer ring),
/// clipped to the hull. Bands with no interior inside the hull are dropped.
pub fn source_order_regions(
    source: Point,
    destinations: &[Point],
    hull: &Hull,
) -> RegionDecomposition {
    let radii = distinct_radii(source, destinations);
    let mut bands = Vec::with_capacity(radii.len() + 1);
    let mut lo = 0.0;
    for &r in &radii {
        bands.push((lo, Some(r)));
        lo = r;
    }
    bands.push((lo, None));

    let far = hull
        .polygon
        .vertices
        .iter()
        .map(|v| distance(source, *v))
        .fold(0.0, f64::max);

    let mut cells = Vec::new();
    for (r_lo, r_hi) in bands {
        let top = r_hi.unwrap_or(far);
        if top <= r_lo + GEOM_TOL {
            continue;
        }
        let mids = [0.5 * (r_lo + top), r_lo + 0.25 * (top - r_lo), r_lo + 0.75 * (top - r_lo)];
        let mut cell = ConvexCell {
            halfplanes: hull.halfplanes.clone(),
            radial: Some(RadialBand {
                center: source,
                r_lo,
                r_hi,
            }),
            polygon: None,
            witness: source,
        };
        let cands = witness_candidates(&hull.polygon, source, &mids);
        let Some(w) = best_witness(&cell, &cands) else {
            continue;
        };
        cell.witness = w;
        cells.push(Region {
            ordering: source_ordering(source, destinations, w),
            cell,
        });
    }

    RegionDecomposition {
        reference: NodeId::Source,
        hull: hull.clone(),
        cells,
    }
}

/// Ordering of the relay and destinations by distance from the source, with
/// the relay at `relay`; ties are broken by node id (relay first).
pub fn source_ordering(source: Point, destinations: &[Point], relay: Point) -> Vec<NodeId> {
    let mut nodes: Vec<(f64, NodeId)> = destinations
        .iter()
        .enumerate()
        .map(|(i, d)| (distance(source, *d), NodeId::Dest(i)))
        .collect();
    nodes.push((distance(source, relay), NodeId::Relay));
    nodes.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    nodes.into_iter().map(|(_, n)| n).collect()
}

/// Index of the cell containing `p`; boundary ties go to the lowest index.
pub fn locate(decomposition: &RegionDecomposition, p: Point) -> Result<usize, GeometryError> {
    if !decomposition.hull.contains(p, GEOM_TOL) {
        return Err(GeometryError::OutOfHull { x: p.x, y: p.y });
    }
    if let Some(i) = decomposition
        .cells
        .iter()
        .position(|r| r.cell.contains(p, GEOM_TOL))
    {
        return Ok(i);
    }
    // numerical gap between cells: least-violated cell
    decomposition
        .cells
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.cell.violation(p).total_cmp(&b.1.cell.violation(p)))
        .map(|(i, _)| i)
        .ok_or(GeometryError::OutOfHull { x: p.x, y: p.y })
}

/// Interior points of every non-empty intersection of a relay cell with a
/// source band.
pub fn superimposed_witnesses(
    relay: &RegionDecomposition,
    source: &RegionDecomposition,
) -> Vec<Point> {
    let mut out = Vec::new();
    for rc in &relay.cells {
        let Some(poly) = rc.cell.polygon.as_ref() else {
            continue;
        };
        for sc in &source.cells {
            let Some(band) = sc.cell.radial else {
                continue;
            };
            let cell = ConvexCell {
                halfplanes: rc.cell.halfplanes.clone(),
                radial: Some(band),
                polygon: None,
                witness: rc.cell.witness,
            };
            let top = band.r_hi.unwrap_or_else(|| {
                poly.vertices
                    .iter()
                    .map(|v| distance(band.center, *v))
                    .fold(0.0, f64::max)
            });
            let mids = [
                0.5 * (band.r_lo + top),
                band.r_lo + 0.25 * (top - band.r_lo),
                band.r_lo + 0.75 * (top - band.r_lo),
            ];
            let cands = witness_candidates(poly, band.center, &mids);
            if let Some(w) = best_witness(&cell, &cands) {
                out.push(w);
            }
        }
    }
    out
}
