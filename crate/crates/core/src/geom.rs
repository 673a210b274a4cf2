//! Planar polygon geometry.
//!
//! Everything here works in double precision with explicit tolerances. Tiles
//! with irrational coordinates (30-60-90 triangles, hexagons) are handled by
//! tolerance-based predicates rather than exact arithmetic.
//!
//! Intersection areas use Sutherland-Hodgman clipping against a convex clip
//! window. When both operands are non-convex one of them is ear-clipped into
//! triangles first; the clipped area of a concave subject against a convex
//! window is exact even though the clipped outline may contain zero-width
//! bridges.

use std::f64::consts::TAU;
use std::fmt;
use std::ops::{Add, Mul, Neg, Sub};
use std::sync::OnceLock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeomError {
    #[error("polygon needs at least 3 vertices, got {0}")]
    TooFewVertices(usize),
    #[error("degenerate polygon (area {0:e})")]
    DegeneratePolygon(f64),
    #[error("non-finite vertex coordinate")]
    NonFinite,
    #[error("vertices {0} and {1} coincide")]
    DuplicateVertex(usize, usize),
    #[error("polygon is self-intersecting (edges {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("hole {0} is not strictly inside the outer boundary")]
    HoleOutside(usize),
    #[error("holes {0} and {1} overlap")]
    HolesOverlap(usize, usize),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "[f64; 2]", into = "[f64; 2]")]
pub struct Point {
    pub x: f64,
    pub y: f64,
}

impl Point {
    pub const ORIGIN: Point = Point { x: 0.0, y: 0.0 };

    pub const fn new(x: f64, y: f64) -> Self {
        Point { x, y }
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

    pub fn dist(self, o: Point) -> f64 {
        (self - o).norm()
    }

    pub fn angle(self) -> f64 {
        self.y.atan2(self.x)
    }

    pub fn rotate(self, angle: f64) -> Point {
        let (s, c) = angle.sin_cos();
        Point::new(c * self.x - s * self.y, s * self.x + c * self.y)
    }
}

impl From<[f64; 2]> for Point {
    fn from(v: [f64; 2]) -> Self {
        Point::new(v[0], v[1])
    }
}

impl From<Point> for [f64; 2] {
    fn from(p: Point) -> Self {
        [p.x, p.y]
    }
}

impl Add for Point {
    type Output = Point;
    fn add(self, o: Point) -> Point {
        Point::new(self.x + o.x, self.y + o.y)
    }
}

impl Sub for Point {
    type Output = Point;
    fn sub(self, o: Point) -> Point {
        Point::new(self.x - o.x, self.y - o.y)
    }
}

impl Mul<f64> for Point {
    type Output = Point;
    fn mul(self, s: f64) -> Point {
        Point::new(self.x * s, self.y * s)
    }
}

impl Neg for Point {
    type Output = Point;
    fn neg(self) -> Point {
        Point::new(-self.x, -self.y)
    }
}

impl fmt::Display for Point {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {})", self.x, self.y)
    }
}

/// Axis-aligned bounding box.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BBox {
    pub min: Point,
    pub max: Point,
}

impl BBox {
    pub fn from_points(points: &[Point]) -> BBox {
        let mut min = Point::new(f64::INFINITY, f64::INFINITY);
        let mut max = Point::new(f64::NEG_INFINITY, f64::NEG_INFINITY);
        for p in points {
            min.x = min.x.min(p.x);
            min.y = min.y.min(p.y);
            max.x = max.x.max(p.x);
            max.y = max.y.max(p.y);
        }
        BBox { min, max }
    }

    pub fn union(&self, o: &BBox) -> BBox {
        BBox {
            min: Point::new(self.min.x.min(o.min.x), self.min.y.min(o.min.y)),
            max: Point::new(self.max.x.max(o.max.x), self.max.y.max(o.max.y)),
        }
    }

    pub fn expand(&self, d: f64) -> BBox {
        BBox {
            min: Point::new(self.min.x - d, self.min.y - d),
            max: Point::new(self.max.x + d, self.max.y + d),
        }
    }

    pub fn intersects(&self, o: &BBox) -> bool {
        self.min.x <= o.max.x && o.min.x <= self.max.x && self.min.y <= o.max.y && o.min.y <= self.max.y
    }

    pub fn contains_box(&self, o: &BBox) -> bool {
        self.min.x <= o.min.x && self.min.y <= o.min.y && self.max.x >= o.max.x && self.max.y >= o.max.y
    }

    pub fn width(&self) -> f64 {
        self.max.x - self.min.x
    }

    pub fn height(&self) -> f64 {
        self.max.y - self.min.y
    }

    pub fn center(&self) -> Point {
        (self.min + self.max) * 0.5
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }
}

/// Tolerances derived from the shortest prototile edge `u` of a tile set.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    /// Shortest prototile edge length.
    pub unit: f64,
    /// Length tolerance for contact and containment predicates.
    pub length: f64,
    /// Area below which an intersection counts as empty.
    pub area: f64,
    /// Snap resolution for canonical keys and relative poses.
    pub snap: f64,
    /// Snap resolution for relative rotations (radians).
    pub angle: f64,
    /// Minimum shared boundary length for two placements to be neighbors.
    pub min_contact: f64,
}

impl Tolerances {
    pub fn for_unit(unit: f64) -> Tolerances {
        Tolerances {
            unit,
            length: 1e-6 * unit,
            area: 1e-8 * unit * unit,
            snap: 1e-4 * unit,
            angle: 1e-4,
            min_contact: 0.5 * unit,
        }
    }
}

/// Signed shoelace area; positive for counterclockwise order.
pub fn signed_area(vertices: &[Point]) -> f64 {
    let n = vertices.len();
    if n < 3 {
        return 0.0;
    }
    let mut acc = 0.0;
    for i in 0..n {
        acc += vertices[i].cross(vertices[(i + 1) % n]);
    }
    0.5 * acc
}

/// Unsigned area of a vertex ring. Fails when the area falls below `eps_area`.
pub fn polygon_area(vertices: &[Point], eps_area: f64) -> Result<f64, GeomError> {
    if vertices.len() < 3 {
        return Err(GeomError::TooFewVertices(vertices.len()));
    }
    let a = signed_area(vertices).abs();
    if a < eps_area {
        return Err(GeomError::DegeneratePolygon(a));
    }
    Ok(a)
}

/// A simple polygon with counterclockwise vertex order.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(try_from = "Vec<Point>", into = "Vec<Point>")]
pub struct Polygon {
    vertices: Vec<Point>,
    area: f64,
    bbox: BBox,
    convex: bool,
    triangles: OnceLock<Vec<[Point; 3]>>,
}

impl PartialEq for Polygon {
    fn eq(&self, other: &Self) -> bool {
        self.vertices == other.vertices
    }
}

impl TryFrom<Vec<Point>> for Polygon {
    type Error = GeomError;
    fn try_from(v: Vec<Point>) -> Result<Self, GeomError> {
        Polygon::new(v)
    }
}

impl From<Polygon> for Vec<Point> {
    fn from(p: Polygon) -> Self {
        p.vertices
    }
}

impl Polygon {
    /// Validates a vertex ring and normalizes it to counterclockwise order.
    ///
    /// Tolerances scale with the ring's bounding-box diagonal.
    pub fn new(mut vertices: Vec<Point>) -> Result<Polygon, GeomError> {
        let n = vertices.len();
        if n < 3 {
            return Err(GeomError::TooFewVertices(n));
        }
        if vertices.iter().any(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeomError::NonFinite);
        }
        let bbox = BBox::from_points(&vertices);
        let scale = bbox.diagonal();
        let eps_len = 1e-9 * scale;
        polygon_area(&vertices, 1e-12 * scale * scale)?;
        for i in 0..n {
            let j = (i + 1) % n;
            if vertices[i].dist(vertices[j]) <= eps_len {
                return Err(GeomError::DuplicateVertex(i, j));
            }
        }
        if let Some((i, j)) = find_self_intersection(&vertices, eps_len) {
            return Err(GeomError::SelfIntersecting(i, j));
        }
        if signed_area(&vertices) < 0.0 {
            vertices.reverse();
        }
        Ok(Polygon::from_valid(vertices))
    }

    /// Builds a polygon from a ring already known to be simple and CCW.
    fn from_valid(vertices: Vec<Point>) -> Polygon {
        let area = signed_area(&vertices);
        let bbox = BBox::from_points(&vertices);
        let eps = 1e-12 * bbox.diagonal().powi(2);
        let convex = is_convex(&vertices, eps);
        Polygon {
            vertices,
            area,
            bbox,
            convex,
            triangles: OnceLock::new(),
        }
    }

    /// Axis-aligned rectangle with lower-left corner `min`.
    pub fn rect(min: Point, width: f64, height: f64) -> Polygon {
        Polygon::new(vec![
            min,
            Point::new(min.x + width, min.y),
            Point::new(min.x + width, min.y + height),
            Point::new(min.x, min.y + height),
        ])
        .expect("rectangle with positive extent")
    }

    pub fn vertices(&self) -> &[Point] {
        &self.vertices
    }

    pub fn len(&self) -> usize {
        self.vertices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vertices.is_empty()
    }

    pub fn area(&self) -> f64 {
        self.area
    }

    pub fn bbox(&self) -> BBox {
        self.bbox
    }

    pub fn is_convex(&self) -> bool {
        self.convex
    }

    pub fn edges(&self) -> impl Iterator<Item = (Point, Point)> + '_ {
        let n = self.vertices.len();
        (0..n).map(move |i| (self.vertices[i], self.vertices[(i + 1) % n]))
    }

    pub fn perimeter(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).sum()
    }

    pub fn shortest_edge(&self) -> f64 {
        self.edges().map(|(a, b)| a.dist(b)).fold(f64::INFINITY, f64::min)
    }

    pub fn centroid(&self) -> Point {
        let n = self.vertices.len();
        let (mut cx, mut cy) = (0.0, 0.0);
        for i in 0..n {
            let p = self.vertices[i];
            let q = self.vertices[(i + 1) % n];
            let c = p.cross(q);
            cx += (p.x + q.x) * c;
            cy += (p.y + q.y) * c;
        }
        let k = 1.0 / (6.0 * self.area);
        Point::new(cx * k, cy * k)
    }

    /// Ear-clipping triangulation, computed once and cached.
    pub fn triangles(&self) -> &[[Point; 3]] {
        self.triangles.get_or_init(|| triangulate(&self.vertices))
    }

    /// Largest distance between any two vertices.
    pub fn diameter(&self) -> f64 {
        let mut d: f64 = 0.0;
        for (i, a) in self.vertices.iter().enumerate() {
            for b in &self.vertices[i + 1..] {
                d = d.max(a.dist(*b));
            }
        }
        d
    }

    /// True when `p` is inside or on the boundary.
    pub fn contains_point(&self, p: Point, tol: f64) -> bool {
        point_in_ring(&self.vertices, p) || distance_to_ring(&self.vertices, p) <= tol
    }
}

fn is_convex(v: &[Point], eps: f64) -> bool {
    let n = v.len();
    (0..n).all(|i| {
        let a = v[i];
        let b = v[(i + 1) % n];
        let c = v[(i + 2) % n];
        (b - a).cross(c - b) >= -eps
    })
}

fn orient(a: Point, b: Point, c: Point) -> f64 {
    (b - a).cross(c - a)
}

fn on_segment(a: Point, b: Point, p: Point, eps: f64) -> bool {
    distance_to_segment(a, b, p) <= eps
}

fn segments_touch(a: Point, b: Point, c: Point, d: Point, eps: f64) -> bool {
    let scale = (b - a).norm().max((d - c).norm());
    let e = eps * scale;
    let d1 = orient(c, d, a);
    let d2 = orient(c, d, b);
    let d3 = orient(a, b, c);
    let d4 = orient(a, b, d);
    if ((d1 > e && d2 < -e) || (d1 < -e && d2 > e)) && ((d3 > e && d4 < -e) || (d3 < -e && d4 > e)) {
        return true;
    }
    on_segment(c, d, a, eps) || on_segment(c, d, b, eps) || on_segment(a, b, c, eps) || on_segment(a, b, d, eps)
}

fn find_self_intersection(v: &[Point], eps: f64) -> Option<(usize, usize)> {
    let n = v.len();
    for i in 0..n {
        let (a, b) = (v[i], v[(i + 1) % n]);
        // adjacent edge folding back onto this one
        let c = v[(i + 2) % n];
        let (e1, e2) = (b - a, c - b);
        if e1.cross(e2).abs() <= eps * e1.norm().max(e2.norm()) && e1.dot(e2) < 0.0 {
            return Some((i, (i + 1) % n));
        }
        for j in i + 2..n {
            if i == 0 && j == n - 1 {
                continue;
            }
            if segments_touch(a, b, v[j], v[(j + 1) % n], eps) {
                return Some((i, j));
            }
        }
    }
    None
}

/// Checks a ring for simplicity without building a polygon.
pub fn is_simple(vertices: &[Point]) -> bool {
    Polygon::new(vertices.to_vec()).is_ok()
}

pub fn distance_to_segment(a: Point, b: Point, p: Point) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab * t)
}

pub fn distance_to_ring(ring: &[Point], p: Point) -> f64 {
    let n = ring.len();
    (0..n)
        .map(|i| distance_to_segment(ring[i], ring[(i + 1) % n], p))
        .fold(f64::INFINITY, f64::min)
}

/// Crossing-number point-in-polygon test. Boundary points are unspecified.
pub fn point_in_ring(ring: &[Point], p: Point) -> bool {
    let n = ring.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (ring[i], ring[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// Ear-clipping triangulation of a simple CCW ring.
pub fn triangulate(ring: &[Point]) -> Vec<[Point; 3]> {
    let scale = BBox::from_points(ring).diagonal();
    let eps = 1e-12 * scale * scale;
    let mut idx: Vec<usize> = (0..ring.len()).collect();
    let mut out = Vec::with_capacity(ring.len().saturating_sub(2));
    let mut guard = 0usize;
    while idx.len() > 3 {
        let m = idx.len();
        let mut clipped = false;
        for k in 0..m {
            let (ip, ic, inx) = (idx[(k + m - 1) % m], idx[k], idx[(k + 1) % m]);
            let (p, c, nx) = (ring[ip], ring[ic], ring[inx]);
            let turn = (c - p).cross(nx - c);
            if turn.abs() <= eps && (c - p).dot(nx - c) > 0.0 {
                // collinear vertex, drop without emitting a sliver
                idx.remove(k);
                clipped = true;
                break;
            }
            if turn <= eps {
                continue;
            }
            let blocked = idx.iter().any(|&o| {
                if o == ip || o == ic || o == inx {
                    return false;
                }
                let q = ring[o];
                if q == p || q == c || q == nx {
                    return false;
                }
                orient(p, c, q) >= -eps && orient(c, nx, q) >= -eps && orient(nx, p, q) >= -eps
            });
            if !blocked {
                out.push([p, c, nx]);
                idx.remove(k);
                clipped = true;
                break;
            }
        }
        if !clipped {
            // numerically stuck: clip the most convex vertex
            let k = (0..m)
                .max_by(|&a, &b| {
                    let t = |k: usize| {
                        let (p, c, nx) = (ring[idx[(k + m - 1) % m]], ring[idx[k]], ring[idx[(k + 1) % m]]);
                        (c - p).cross(nx - c)
                    };
                    t(a).total_cmp(&t(b))
                })
                .unwrap_or(0);
            out.push([ring[idx[(k + m - 1) % m]], ring[idx[k]], ring[idx[(k + 1) % m]]]);
            idx.remove(k);
        }
        guard += 1;
        if guard > 4 * ring.len() * ring.len() + 16 {
            break;
        }
    }
    if idx.len() == 3 {
        let t = [ring[idx[0]], ring[idx[1]], ring[idx[2]]];
        if signed_area(&t) > eps {
            out.push(t);
        }
    }
    out
}

/// Sutherland-Hodgman clip of `subject` against the convex CCW window `clip`.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let mut output = subject.to_vec();
    let m = clip.len();
    for i in 0..m {
        if output.is_empty() {
            break;
        }
        let (c0, c1) = (clip[i], clip[(i + 1) % m]);
        let dir = c1 - c0;
        let side = |p: Point| dir.cross(p - c0);
        let input = std::mem::take(&mut output);
        let k = input.len();
        for j in 0..k {
            let cur = input[j];
            let prev = input[(j + k - 1) % k];
            let (sc, sp) = (side(cur), side(prev));
            if sc >= 0.0 {
                if sp < 0.0 {
                    output.push(prev + (cur - prev) * (sp / (sp - sc)));
                }
                output.push(cur);
            } else if sp >= 0.0 {
                output.push(prev + (cur - prev) * (sp / (sp - sc)));
            }
        }
    }
    output
}

fn clipped_area(subject: &[Point], clip: &[Point]) -> f64 {
    signed_area(&clip_convex(subject, clip)).max(0.0)
}

/// Area of the interior intersection of two polygons.
pub fn overlap_area(a: &Polygon, b: &Polygon) -> f64 {
    if !a.bbox.intersects(&b.bbox) {
        return 0.0;
    }
    let raw = if b.convex {
        clipped_area(&a.vertices, &b.vertices)
    } else if a.convex {
        clipped_area(&b.vertices, &a.vertices)
    } else {
        let (small, big) = if a.len() <= b.len() { (a, b) } else { (b, a) };
        small
            .triangles()
            .iter()
            .filter(|t| BBox::from_points(&t[..]).intersects(&big.bbox))
            .map(|t| clipped_area(&big.vertices, &t[..]))
            .sum()
    };
    raw.clamp(0.0, a.area.min(b.area))
}

/// Total length of collinear boundary overlap between two polygons.
///
/// Edges count as collinear when both endpoints of one lie within `eps` of
/// the other's supporting line; isolated point contacts contribute nothing.
pub fn shared_boundary_length(a: &Polygon, b: &Polygon, eps: f64) -> f64 {
    if !a.bbox.expand(eps).intersects(&b.bbox) {
        return 0.0;
    }
    ring_contact_length(&a.vertices, &b.vertices, eps)
}

/// Collinear overlap length between two vertex rings.
pub fn ring_contact_length(a: &[Point], b: &[Point], eps: f64) -> f64 {
    let (na, nb) = (a.len(), b.len());
    let mut total = 0.0;
    for i in 0..na {
        let (a0, a1) = (a[i], a[(i + 1) % na]);
        let len_a = a0.dist(a1);
        if len_a == 0.0 {
            continue;
        }
        let dir = (a1 - a0) * (1.0 / len_a);
        for j in 0..nb {
            let (b0, b1) = (b[j], b[(j + 1) % nb]);
            if dir.cross(b0 - a0).abs() > eps || dir.cross(b1 - a0).abs() > eps {
                continue;
            }
            let (t0, t1) = (dir.dot(b0 - a0), dir.dot(b1 - a0));
            let lo = t0.min(t1).max(0.0);
            let hi = t0.max(t1).min(len_a);
            if hi > lo {
                total += hi - lo;
            }
        }
    }
    total
}

/// Rotation (radians, normalized to [0, 2π)) followed by translation.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RigidTransform {
    pub rotation: f64,
    pub translation: Point,
}

impl Default for RigidTransform {
    fn default() -> Self {
        RigidTransform::IDENTITY
    }
}

/// Wraps an angle into [0, 2π).
pub fn normalize_angle(a: f64) -> f64 {
    let r = a.rem_euclid(TAU);
    if r >= TAU {
        0.0
    } else {
        r
    }
}

impl RigidTransform {
    pub const IDENTITY: RigidTransform = RigidTransform {
        rotation: 0.0,
        translation: Point::ORIGIN,
    };

    pub fn new(rotation: f64, translation: Point) -> Self {
        RigidTransform {
            rotation: normalize_angle(rotation),
            translation,
        }
    }

    pub fn translation(t: Point) -> Self {
        RigidTransform::new(0.0, t)
    }

    /// Rotation by `angle` about `center`.
    pub fn rotation_about(angle: f64, center: Point) -> Self {
        RigidTransform::new(angle, center - center.rotate(angle))
    }

    pub fn apply(&self, p: Point) -> Point {
        p.rotate(self.rotation) + self.translation
    }

    /// `self ∘ other`: apply `other` first.
    pub fn compose(&self, other: &RigidTransform) -> RigidTransform {
        RigidTransform::new(
            self.rotation + other.rotation,
            other.translation.rotate(self.rotation) + self.translation,
        )
    }

    pub fn inverse(&self) -> RigidTransform {
        RigidTransform::new(-self.rotation, (-self.translation).rotate(-self.rotation))
    }
}

/// Rotates then translates every vertex. Area and orientation are preserved.
pub fn apply_transform(p: &Polygon, t: &RigidTransform) -> Polygon {
    let vertices: Vec<Point> = p.vertices.iter().map(|&v| t.apply(v)).collect();
    let triangles = OnceLock::new();
    if let Some(tris) = p.triangles.get() {
        let _ = triangles.set(tris.iter().map(|tri| tri.map(|v| t.apply(v))).collect());
    }
    Polygon {
        area: p.area,
        bbox: BBox::from_points(&vertices),
        convex: p.convex,
        vertices,
        triangles,
    }
}

/// A polygonal region with optional holes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RegionRepr", into = "RegionRepr")]
pub struct Region {
    outer: Polygon,
    holes: Vec<Polygon>,
}

#[derive(Serialize, Deserialize)]
struct RegionRepr {
    outer: Vec<Point>,
    #[serde(default)]
    holes: Vec<Vec<Point>>,
}

impl TryFrom<RegionRepr> for Region {
    type Error = GeomError;
    fn try_from(r: RegionRepr) -> Result<Self, GeomError> {
        let outer = Polygon::new(r.outer)?;
        let holes = r.holes.into_iter().map(Polygon::new).collect::<Result<Vec<_>, _>>()?;
        Region::new(outer, holes)
    }
}

impl From<Region> for RegionRepr {
    fn from(r: Region) -> Self {
        RegionRepr {
            outer: r.outer.vertices,
            // holes are written clockwise
            holes: r
                .holes
                .into_iter()
                .map(|h| {
                    let mut v = h.vertices;
                    v.reverse();
                    v
                })
                .collect(),
        }
    }
}

impl From<Polygon> for Region {
    fn from(outer: Polygon) -> Self {
        Region { outer, holes: Vec::new() }
    }
}

impl Region {
    /// Holes must lie inside `outer` and be pairwise disjoint. They are stored
    /// counterclockwise like any other polygon.
    pub fn new(outer: Polygon, holes: Vec<Polygon>) -> Result<Region, GeomError> {
        let eps = 1e-9 * outer.area();
        for (i, h) in holes.iter().enumerate() {
            let inside = outer.bbox.contains_box(&h.bbox) && (h.area - overlap_area(h, &outer)).abs() <= eps;
            if !inside {
                return Err(GeomError::HoleOutside(i));
            }
            for (j, g) in holes.iter().enumerate().skip(i + 1) {
                if overlap_area(h, g) > eps {
                    return Err(GeomError::HolesOverlap(i, j));
                }
            }
        }
        Ok(Region { outer, holes })
    }

    pub fn outer(&self) -> &Polygon {
        &self.outer
    }

    pub fn holes(&self) -> &[Polygon] {
        &self.holes
    }

    pub fn area(&self) -> f64 {
        self.outer.area - self.holes.iter().map(Polygon::area).sum::<f64>()
    }

    pub fn bbox(&self) -> BBox {
        self.outer.bbox
    }

    pub fn transformed(&self, t: &RigidTransform) -> Region {
        Region {
            outer: apply_transform(&self.outer, t),
            holes: self.holes.iter().map(|h| apply_transform(h, t)).collect(),
        }
    }

    /// Length of `p`'s boundary lying on the region boundary.
    pub fn boundary_contact(&self, p: &Polygon, eps: f64) -> f64 {
        shared_boundary_length(p, &self.outer, eps)
            + self.holes.iter().map(|h| shared_boundary_length(p, h, eps)).sum::<f64>()
    }
}

/// True iff `p` lies inside the outer boundary and outside every hole,
/// allowing boundary contact within `tol`.
pub fn region_contains(r: &Region, p: &Polygon, tol: f64) -> bool {
    if !r.outer.bbox.expand(tol).contains_box(&p.bbox) {
        return false;
    }
    let outside = |v: &Point| !point_in_ring(&r.outer.vertices, *v) && distance_to_ring(&r.outer.vertices, *v) > tol;
    if p.vertices.iter().any(outside) {
        return false;
    }
    for h in &r.holes {
        if !h.bbox.intersects(&p.bbox) {
            continue;
        }
        if p.vertices
            .iter()
            .any(|v| point_in_ring(&h.vertices, *v) && distance_to_ring(&h.vertices, *v) > tol)
        {
            return false;
        }
    }
    let area_tol = tol * p.perimeter();
    if p.area - overlap_area(p, &r.outer) > area_tol {
        return false;
    }
    r.holes.iter().all(|h| overlap_area(p, h) <= area_tol)
}

/// Rotation- and noise-insensitive identity of a vertex ring.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CanonicalKey(pub Vec<(i64, i64)>);

/// Snaps every vertex to a `tau` grid and picks the lexicographically
/// smallest rotation of the vertex list.
pub fn canonical_key(p: &Polygon, tau: f64) -> CanonicalKey {
    let snapped: Vec<(i64, i64)> = p
        .vertices
        .iter()
        .map(|v| ((v.x / tau).round() as i64, (v.y / tau).round() as i64))
        .collect();
    let n = snapped.len();
    let best = (0..n)
        .min_by(|&a, &b| {
            (0..n)
                .map(|k| snapped[(a + k) % n])
                .cmp((0..n).map(|k| snapped[(b + k) % n]))
        })
        .unwrap_or(0);
    CanonicalKey((0..n).map(|k| snapped[(best + k) % n]).collect())
}
