//! Tile sets, the edge-contact neighbor rule, and superset growth.

use std::collections::HashMap;
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{
    apply_transform, canonical_key, normalize_angle, overlap_area, shared_boundary_length, BBox, CanonicalKey,
    GeomError, Point, Polygon, RigidTransform, Tolerances,
};
use crate::spatial::candidate_pairs;

pub const DEFAULT_SUPERSET_CAP: usize = 20_000;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TilesetError {
    #[error("tile set has no prototiles")]
    NoPrototiles,
    #[error("prototile {index}: {source}")]
    InvalidPrototile { index: usize, source: GeomError },
    #[error("invalid symmetry parameters: {0}")]
    InvalidSymmetry(String),
    #[error("superset exceeds the cap of {cap} placements")]
    SupersetTooLarge { cap: usize },
    #[error("placements do not share a boundary segment")]
    NotNeighbors,
    #[error("contacting pair matches no entry of the pose table")]
    UnknownPose,
    #[error("superset is not closed under the declared symmetry ({0})")]
    NotClosedUnderSymmetry(String),
}

/// Periodicity of a tile set's candidate grid.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Symmetry {
    pub theta: f64,
    pub dx: f64,
    pub dy: f64,
}

/// Hand-editable tile-set document body.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileSetDescriptor {
    pub name: String,
    pub prototiles: Vec<PrototileDescriptor>,
    pub symmetry: Symmetry,
    pub default_rings: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrototileDescriptor {
    pub vertices: Vec<Point>,
    pub color: String,
}

#[derive(Clone, Debug)]
pub struct Prototile {
    pub polygon: Polygon,
    pub color: String,
    centroid: Point,
    symmetry_order: usize,
}

impl Prototile {
    pub fn centroid(&self) -> Point {
        self.centroid
    }

    /// Order of the polygon's rotational symmetry group about its centroid.
    pub fn symmetry_order(&self) -> usize {
        self.symmetry_order
    }
}

#[derive(Clone, Debug)]
pub struct TileSet {
    pub name: String,
    pub prototiles: Vec<Prototile>,
    pub symmetry: Symmetry,
    pub default_rings: u32,
    tol: Tolerances,
    max_area: f64,
    max_perimeter: f64,
    max_diameter: f64,
}

fn rotational_symmetry_order(p: &Polygon, centroid: Point) -> usize {
    let v = p.vertices();
    let n = v.len();
    let tol = 1e-7 * p.bbox().diagonal();
    for k in 1..n {
        if n % k != 0 {
            continue;
        }
        let angle = (v[k] - centroid).angle() - (v[0] - centroid).angle();
        let maps = (0..n).all(|i| (v[i] - centroid).rotate(angle).dist(v[(i + k) % n] - centroid) <= tol);
        if maps {
            return n / k;
        }
    }
    1
}

impl TileSet {
    pub fn from_descriptor(d: &TileSetDescriptor) -> Result<TileSet, TilesetError> {
        if d.prototiles.is_empty() {
            return Err(TilesetError::NoPrototiles);
        }
        let s = d.symmetry;
        if !(s.theta > 0.0 && s.theta <= TAU + 1e-12) {
            return Err(TilesetError::InvalidSymmetry(format!("theta {} outside (0, 2π]", s.theta)));
        }
        if !(s.dx > 0.0 && s.dy > 0.0) {
            return Err(TilesetError::InvalidSymmetry(format!("dx {} and dy {} must be positive", s.dx, s.dy)));
        }
        let mut prototiles = Vec::with_capacity(d.prototiles.len());
        for (index, pd) in d.prototiles.iter().enumerate() {
            let polygon =
                Polygon::new(pd.vertices.clone()).map_err(|source| TilesetError::InvalidPrototile { index, source })?;
            let centroid = polygon.centroid();
            let symmetry_order = rotational_symmetry_order(&polygon, centroid);
            // placements inherit the cached triangulation
            polygon.triangles();
            prototiles.push(Prototile {
                polygon,
                color: pd.color.clone(),
                centroid,
                symmetry_order,
            });
        }
        let unit = prototiles.iter().map(|p| p.polygon.shortest_edge()).fold(f64::INFINITY, f64::min);
        let max_area = prototiles.iter().map(|p| p.polygon.area()).fold(0.0, f64::max);
        let max_perimeter = prototiles.iter().map(|p| p.polygon.perimeter()).fold(0.0, f64::max);
        let max_diameter = prototiles.iter().map(|p| p.polygon.diameter()).fold(0.0, f64::max);
        Ok(TileSet {
            name: d.name.clone(),
            prototiles,
            symmetry: s,
            default_rings: d.default_rings,
            tol: Tolerances::for_unit(unit),
            max_area,
            max_perimeter,
            max_diameter,
        })
    }

    pub fn descriptor(&self) -> TileSetDescriptor {
        TileSetDescriptor {
            name: self.name.clone(),
            prototiles: self
                .prototiles
                .iter()
                .map(|p| PrototileDescriptor {
                    vertices: p.polygon.vertices().to_vec(),
                    color: p.color.clone(),
                })
                .collect(),
            symmetry: self.symmetry,
            default_rings: self.default_rings,
        }
    }

    /// Shortest prototile edge.
    pub fn unit(&self) -> f64 {
        self.tol.unit
    }

    pub fn tolerances(&self) -> &Tolerances {
        &self.tol
    }

    pub fn len(&self) -> usize {
        self.prototiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.prototiles.is_empty()
    }

    /// Largest prototile perimeter (`L_max`).
    pub fn max_perimeter(&self) -> f64 {
        self.max_perimeter
    }

    pub fn max_area(&self) -> f64 {
        self.max_area
    }

    pub fn max_diameter(&self) -> f64 {
        self.max_diameter
    }

    /// Reduces a transform modulo the prototile's rotational symmetry so that
    /// every geometric placement has exactly one transform.
    pub fn canonical_transform(&self, prototile: usize, t: &RigidTransform) -> RigidTransform {
        let proto = &self.prototiles[prototile];
        let step = TAU / proto.symmetry_order as f64;
        let mut rot = t.rotation.rem_euclid(step);
        if rot < 1e-9 || step - rot < 1e-9 {
            rot = 0.0;
        }
        let world_centroid = t.apply(proto.centroid);
        RigidTransform::new(rot, world_centroid - proto.centroid.rotate(rot))
    }

    pub fn place(&self, prototile: usize, t: &RigidTransform) -> Placement {
        let transform = self.canonical_transform(prototile, t);
        let proto = &self.prototiles[prototile];
        Placement {
            prototile,
            transform,
            polygon: apply_transform(&proto.polygon, &transform),
            area: proto.polygon.area() / self.max_area,
        }
    }

    /// True when two placements touch along an edge segment of at least
    /// `u_min_contact` without overlapping interiors.
    pub fn in_contact(&self, a: &Placement, b: &Placement) -> bool {
        overlap_area(&a.polygon, &b.polygon) < self.tol.area
            && shared_boundary_length(&a.polygon, &b.polygon, self.tol.length) >= self.tol.min_contact
    }
}

/// One posed instance of a prototile.
#[derive(Clone, Debug, PartialEq)]
pub struct Placement {
    pub prototile: usize,
    pub transform: RigidTransform,
    pub polygon: Polygon,
    /// Area normalized by the largest prototile area.
    pub area: f64,
}

impl Placement {
    pub fn centroid_world(&self, ts: &TileSet) -> Point {
        self.transform.apply(ts.prototiles[self.prototile].centroid)
    }

    pub fn key(&self, tau: f64) -> CanonicalKey {
        canonical_key(&self.polygon, tau)
    }
}

/// Shorter-edge start offsets along a longer edge, at multiples of `u` from
/// either endpoint.
fn slide_offsets(la: f64, lb: f64, u: f64, eps: f64) -> Vec<f64> {
    let mut out = Vec::new();
    if la + eps >= lb {
        let span = la - lb;
        let mut k = 0.0;
        while k * u <= span + eps {
            out.push(k * u);
            out.push(span - k * u);
            k += 1.0;
        }
    } else {
        // seed edge lies inside the neighbor edge; offsets are negative
        let span = lb - la;
        let mut k = 0.0;
        while k * u <= span + eps {
            out.push(-k * u);
            out.push(-(span - k * u));
            k += 1.0;
        }
    }
    out.sort_by(f64::total_cmp);
    out.dedup_by(|a, b| (*a - *b).abs() <= eps);
    out
}

/// Index over placements for tolerance-aware deduplication.
#[derive(Default, Clone, Debug)]
struct PlacementIndex {
    cell: f64,
    grid: HashMap<(i64, i64), Vec<usize>>,
}

impl PlacementIndex {
    fn new(cell: f64) -> Self {
        PlacementIndex {
            cell,
            grid: HashMap::new(),
        }
    }

    fn cell_of(&self, p: Point) -> (i64, i64) {
        ((p.x / self.cell).floor() as i64, (p.y / self.cell).floor() as i64)
    }

    fn find(&self, ts: &TileSet, all: &[Placement], cand: &Placement) -> Option<usize> {
        let c = cand.centroid_world(ts);
        let (cx, cy) = self.cell_of(c);
        let tau = ts.tol.snap;
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(bucket) = self.grid.get(&(cx + dx, cy + dy)) else { continue };
                for &i in bucket {
                    if same_placement(ts, &all[i], cand, tau) {
                        return Some(i);
                    }
                }
            }
        }
        None
    }

    fn insert(&mut self, ts: &TileSet, idx: usize, p: &Placement) {
        let cell = self.cell_of(p.centroid_world(ts));
        self.grid.entry(cell).or_default().push(idx);
    }
}

fn same_placement(ts: &TileSet, a: &Placement, b: &Placement, tau: f64) -> bool {
    if a.polygon.len() != b.polygon.len() || a.centroid_world(ts).dist(b.centroid_world(ts)) > tau {
        return false;
    }
    a.polygon
        .vertices()
        .iter()
        .all(|v| b.polygon.vertices().iter().any(|w| v.dist(*w) <= tau))
}

/// All placements that share an edge segment with `seed` under the quantized
/// slide rule, deduplicated.
pub fn enumerate_neighbors(seed: &Placement, ts: &TileSet) -> Vec<Placement> {
    let tol = &ts.tol;
    let mut out: Vec<Placement> = Vec::new();
    for (a0, a1) in seed.polygon.edges() {
        let la = a0.dist(a1);
        let dir = (a1 - a0) * (1.0 / la);
        for (pi, proto) in ts.prototiles.iter().enumerate() {
            for (b0, b1) in proto.polygon.edges() {
                let lb = b0.dist(b1);
                let rot = dir.angle() + PI - (b1 - b0).angle();
                let b1r = b1.rotate(rot);
                for s in slide_offsets(la, lb, tol.unit, tol.length) {
                    let t = RigidTransform::new(rot, a0 + dir * s - b1r);
                    let cand = ts.place(pi, &t);
                    if !ts.in_contact(seed, &cand) {
                        continue;
                    }
                    if out.iter().any(|o| o.prototile == pi && same_placement(ts, o, &cand, tol.snap)) {
                        continue;
                    }
                    out.push(cand);
                }
            }
        }
    }
    out
}

/// Relative pose of an ordered contacting pair, expressed in the first
/// placement's frame.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PoseKey {
    pub from: usize,
    pub to: usize,
    pub rotation: f64,
    pub offset: Point,
    pub shared: f64,
}

impl PoseKey {
    pub fn between(ts: &TileSet, a: &Placement, b: &Placement) -> PoseKey {
        let mut rotation = normalize_angle(b.transform.rotation - a.transform.rotation);
        if TAU - rotation <= ts.tol.angle {
            rotation = 0.0;
        }
        let offset = (b.centroid_world(ts) - a.centroid_world(ts)).rotate(-a.transform.rotation);
        PoseKey {
            from: a.prototile,
            to: b.prototile,
            rotation,
            offset,
            shared: shared_boundary_length(&a.polygon, &b.polygon, ts.tol.length),
        }
    }

    pub fn matches(&self, o: &PoseKey, tol: &Tolerances) -> bool {
        let d = (self.rotation - o.rotation).abs();
        self.from == o.from
            && self.to == o.to
            && d.min(TAU - d) <= tol.angle
            && self.offset.dist(o.offset) <= tol.snap
            && (self.shared - o.shared).abs() <= tol.snap
    }

    fn sort_key(&self, tol: &Tolerances) -> (usize, usize, i64, i64, i64, i64) {
        let s = |v: f64, r: f64| (v / r).round() as i64;
        (
            self.from,
            self.to,
            s(self.rotation, tol.angle),
            s(self.offset.x, tol.snap),
            s(self.offset.y, tol.snap),
            s(self.shared, tol.snap),
        )
    }
}

/// The finite set of candidate placements plus the table of relative poses
/// between contacting candidates.
#[derive(Clone, Debug)]
pub struct Superset {
    pub tileset: std::sync::Arc<TileSet>,
    pub placements: Vec<Placement>,
    /// Growth generation of each placement (0 for the seed).
    pub generations: Vec<u32>,
    pub poses: Vec<PoseKey>,
}

/// Frontier processing order during growth. Results do not depend on it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GrowthOrder {
    Forward,
    Reverse,
    Shuffled(u64),
}

pub fn build_superset(ts: std::sync::Arc<TileSet>, rings: u32) -> Result<Superset, TilesetError> {
    build_superset_with(ts, rings, DEFAULT_SUPERSET_CAP, GrowthOrder::Forward)
}

pub fn build_superset_with(
    ts: std::sync::Arc<TileSet>,
    rings: u32,
    cap: usize,
    order: GrowthOrder,
) -> Result<Superset, TilesetError> {
    let seed = ts.place(0, &RigidTransform::IDENTITY);
    let mut index = PlacementIndex::new(ts.max_diameter.max(ts.unit()));
    let mut placements = vec![seed];
    let mut generations = vec![0u32];
    index.insert(&ts, 0, &placements[0]);
    let mut frontier = vec![0usize];
    for g in 1..=rings {
        match order {
            GrowthOrder::Forward => {}
            GrowthOrder::Reverse => frontier.reverse(),
            GrowthOrder::Shuffled(s) => {
                use rand::seq::SliceRandom;
                use rand::SeedableRng;
                let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(s ^ g as u64);
                frontier.shuffle(&mut rng);
            }
        }
        let mut next = Vec::new();
        for &f in &frontier {
            for n in enumerate_neighbors(&placements[f], &ts) {
                if index.find(&ts, &placements, &n).is_some() {
                    continue;
                }
                let idx = placements.len();
                if idx >= cap {
                    return Err(TilesetError::SupersetTooLarge { cap });
                }
                index.insert(&ts, idx, &n);
                placements.push(n);
                generations.push(g);
                next.push(idx);
            }
        }
        if next.is_empty() {
            break;
        }
        frontier = next;
    }
    log::debug!("superset '{}': {} placements after {} rings", ts.name, placements.len(), rings);
    Ok(Superset::from_placements(ts, placements, generations))
}

/// Placements of every prototile at rotations `k·θ` and grid translations
/// `(i·dx, j·dy)` whose bounding boxes lie inside `window`.
pub fn sweep_superset(ts: std::sync::Arc<TileSet>, window: BBox) -> Superset {
    let tol = ts.tol;
    let turns = (TAU / ts.symmetry.theta).round().max(1.0) as usize;
    let reach = window.width().max(window.height()) + ts.max_diameter;
    let (ni, nj) = ((reach / ts.symmetry.dx).ceil() as i64 + 1, (reach / ts.symmetry.dy).ceil() as i64 + 1);
    let center = window.center();
    let inner = window.expand(tol.length);
    let mut index = PlacementIndex::new(ts.max_diameter.max(ts.unit()));
    let mut placements = Vec::new();
    for pi in 0..ts.len() {
        for k in 0..turns {
            let rot = k as f64 * ts.symmetry.theta;
            for i in -ni..=ni {
                for j in -nj..=nj {
                    let t = Point::new(
                        (center.x / ts.symmetry.dx).round() * ts.symmetry.dx + i as f64 * ts.symmetry.dx,
                        (center.y / ts.symmetry.dy).round() * ts.symmetry.dy + j as f64 * ts.symmetry.dy,
                    );
                    let p = ts.place(pi, &RigidTransform::new(rot, t));
                    if !inner.contains_box(&p.polygon.bbox()) || index.find(&ts, &placements, &p).is_some() {
                        continue;
                    }
                    index.insert(&ts, placements.len(), &p);
                    placements.push(p);
                }
            }
        }
    }
    let generations = vec![0; placements.len()];
    Superset::from_placements(ts, placements, generations)
}

impl Superset {
    /// Assembles a superset and derives its pose table from every contacting pair.
    pub fn from_placements(ts: std::sync::Arc<TileSet>, placements: Vec<Placement>, generations: Vec<u32>) -> Superset {
        let tol = ts.tol;
        let boxes: Vec<BBox> = placements.iter().map(|p| p.polygon.bbox().expand(tol.length)).collect();
        let mut poses: Vec<PoseKey> = Vec::new();
        for (i, j) in candidate_pairs(&boxes, ts.max_diameter.max(ts.unit())) {
            let (a, b) = (&placements[i], &placements[j]);
            if !ts.in_contact(a, b) {
                continue;
            }
            for key in [PoseKey::between(&ts, a, b), PoseKey::between(&ts, b, a)] {
                if !poses.iter().any(|p| p.matches(&key, &tol)) {
                    poses.push(key);
                }
            }
        }
        poses.sort_by_key(|p| p.sort_key(&tol));
        Superset {
            tileset: ts,
            placements,
            generations,
            poses,
        }
    }

    pub fn len(&self) -> usize {
        self.placements.len()
    }

    pub fn is_empty(&self) -> bool {
        self.placements.is_empty()
    }

    pub fn bbox(&self) -> BBox {
        self.placements
            .iter()
            .map(|p| p.polygon.bbox())
            .reduce(|a, b| a.union(&b))
            .expect("superset is never empty")
    }

    /// Pose table index of an ordered pair, without checking contact.
    pub fn lookup_pose(&self, a: &Placement, b: &Placement) -> Option<usize> {
        let key = PoseKey::between(&self.tileset, a, b);
        let tol = self.tileset.tolerances();
        self.poses.iter().position(|p| p.matches(&key, tol))
    }

    pub fn pose_index(&self, a: &Placement, b: &Placement) -> Result<usize, TilesetError> {
        if !self.tileset.in_contact(a, b) {
            return Err(TilesetError::NotNeighbors);
        }
        self.lookup_pose(a, b).ok_or(TilesetError::UnknownPose)
    }

    /// Sorted canonical keys of all placements.
    pub fn canonical_keys(&self) -> Vec<CanonicalKey> {
        let tau = self.tileset.tolerances().snap;
        let mut keys: Vec<CanonicalKey> = self.placements.iter().map(|p| p.key(tau)).collect();
        keys.sort();
        keys
    }

    /// Index of the placement geometrically equal to `p`, if any.
    pub fn find(&self, p: &Placement) -> Option<usize> {
        let ts = &self.tileset;
        let c = p.centroid_world(ts);
        let r = ts.tolerances().snap;
        self.placements
            .iter()
            .position(|q| q.prototile == p.prototile && q.centroid_world(ts).dist(c) <= r && same_placement(ts, q, p, r))
    }

    /// Checks that translating by `(dx, 0)`, `(0, dy)` and rotating by `θ`
    /// about the seed's first vertex maps interior placements onto placements.
    ///
    /// Interior placements are those whose centroid lies within `radius` of
    /// the seed centroid. The first vertex is used as the rotation center
    /// because a tile centroid is generally not a center of the grid's
    /// rotational symmetry (a domino centroid is only a 2-fold center).
    pub fn check_symmetry(&self, radius: f64) -> Result<(), TilesetError> {
        let ts = &self.tileset;
        let origin = self.placements[0].centroid_world(ts);
        let pivot = self.placements[0].transform.apply(ts.prototiles[0].polygon.vertices()[0]);
        let moves = [
            ("translation dx", RigidTransform::translation(Point::new(ts.symmetry.dx, 0.0))),
            ("translation dy", RigidTransform::translation(Point::new(0.0, ts.symmetry.dy))),
            ("rotation theta", RigidTransform::rotation_about(ts.symmetry.theta, pivot)),
        ];
        let mut lookup = PlacementIndex::new(ts.max_diameter.max(ts.unit()));
        for (i, p) in self.placements.iter().enumerate() {
            lookup.insert(ts, i, p);
        }
        for p in &self.placements {
            if p.centroid_world(ts).dist(origin) > radius {
                continue;
            }
            for (name, m) in &moves {
                let moved = ts.place(p.prototile, &m.compose(&p.transform));
                if lookup.find(ts, &self.placements, &moved).is_none() {
                    return Err(TilesetError::NotClosedUnderSymmetry((*name).to_string()));
                }
            }
        }
        Ok(())
    }

    /// Largest radius around the seed centroid that growth fully covers,
    /// estimated from the nearest last-generation placement.
    pub fn interior_radius(&self) -> f64 {
        let ts = &self.tileset;
        let origin = self.placements[0].centroid_world(ts);
        let last = *self.generations.iter().max().unwrap_or(&0);
        self.placements
            .iter()
            .zip(&self.generations)
            .filter(|(_, &g)| g == last)
            .map(|(p, _)| p.centroid_world(ts).dist(origin))
            .fold(f64::INFINITY, f64::min)
    }
}

impl Superset {
    /// Axis-aligned square around the seed inside which every placement the
    /// grid admits is present.
    pub fn interior_box(&self) -> BBox {
        let c = self.placements[0].centroid_world(&self.tileset);
        let half = ((self.interior_radius() - self.tileset.max_diameter()) / std::f64::consts::SQRT_2).max(0.0);
        BBox::from_points(&[c - Point::new(half, half), c + Point::new(half, half)])
    }
}

/// Tile sets used throughout tests, examples, and the CLI.
pub mod builtin {
    use super::*;

    fn poly(pts: &[(f64, f64)]) -> Vec<Point> {
        pts.iter().map(|&(x, y)| Point::new(x, y)).collect()
    }

    fn lattice_symmetry() -> Symmetry {
        Symmetry {
            theta: PI / 2.0,
            dx: 1.0,
            dy: 1.0,
        }
    }

    pub fn square() -> TileSetDescriptor {
        TileSetDescriptor {
            name: "square".into(),
            prototiles: vec![PrototileDescriptor {
                vertices: poly(&[(0., 0.), (1., 0.), (1., 1.), (0., 1.)]),
                color: "#f2c14e".into(),
            }],
            symmetry: lattice_symmetry(),
            default_rings: 12,
        }
    }

    pub fn domino() -> TileSetDescriptor {
        TileSetDescriptor {
            name: "domino".into(),
            prototiles: vec![PrototileDescriptor {
                vertices: poly(&[(0., 0.), (2., 0.), (2., 1.), (0., 1.)]),
                color: "#5b8e7d".into(),
            }],
            symmetry: lattice_symmetry(),
            default_rings: 10,
        }
    }

    pub fn square_domino() -> TileSetDescriptor {
        TileSetDescriptor {
            name: "square-domino".into(),
            prototiles: vec![square().prototiles[0].clone(), domino().prototiles[0].clone()],
            symmetry: lattice_symmetry(),
            default_rings: 8,
        }
    }

    pub fn trominoes() -> TileSetDescriptor {
        TileSetDescriptor {
            name: "trominoes".into(),
            prototiles: vec![
                PrototileDescriptor {
                    vertices: poly(&[(0., 0.), (3., 0.), (3., 1.), (0., 1.)]),
                    color: "#d1495b".into(),
                },
                PrototileDescriptor {
                    vertices: poly(&[(0., 0.), (2., 0.), (2., 1.), (1., 1.), (1., 2.), (0., 2.)]),
                    color: "#00798c".into(),
                },
            ],
            symmetry: lattice_symmetry(),
            default_rings: 6,
        }
    }

    pub fn triangles() -> TileSetDescriptor {
        let h = 3f64.sqrt() / 2.0;
        TileSetDescriptor {
            name: "triangles".into(),
            prototiles: vec![PrototileDescriptor {
                vertices: poly(&[(0., 0.), (1., 0.), (0.5, h)]),
                color: "#edae49".into(),
            }],
            symmetry: Symmetry {
                theta: PI / 3.0,
                dx: 1.0,
                dy: 2.0 * h,
            },
            default_rings: 24,
        }
    }

    pub fn all() -> Vec<TileSetDescriptor> {
        vec![square(), domino(), square_domino(), trominoes(), triangles()]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    fn load(d: TileSetDescriptor) -> Arc<TileSet> {
        Arc::new(TileSet::from_descriptor(&d).unwrap())
    }

    #[test]
    fn unit_of_square_and_right_triangle() {
        assert_eq!(load(builtin::square()).unit(), 1.0);
        let mut d = builtin::square();
        d.prototiles[0].vertices = vec![Point::new(0., 0.), Point::new(3f64.sqrt(), 0.), Point::new(0., 1.)];
        assert!((load(d).unit() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rejects_self_intersecting_prototile() {
        let mut d = builtin::square();
        d.prototiles[0].vertices = vec![Point::new(0., 0.), Point::new(2., 2.), Point::new(2., 0.), Point::new(0., 1.)];
        assert!(matches!(
            TileSet::from_descriptor(&d),
            Err(TilesetError::InvalidPrototile { index: 0, .. })
        ));
    }

    #[test]
    fn symmetry_orders() {
        let ts = load(builtin::trominoes());
        assert_eq!(ts.prototiles[0].symmetry_order(), 2);
        assert_eq!(ts.prototiles[1].symmetry_order(), 1);
        assert_eq!(load(builtin::square()).prototiles[0].symmetry_order(), 4);
        assert_eq!(load(builtin::triangles()).prototiles[0].symmetry_order(), 3);
    }

    #[test]
    fn canonical_transform_identifies_symmetric_poses() {
        let ts = load(builtin::square());
        let a = ts.place(0, &RigidTransform::IDENTITY);
        let b = ts.place(0, &RigidTransform::new(PI / 2.0, Point::new(1.0, 0.0)));
        assert_eq!(a.transform.rotation, 0.0);
        assert!(b.transform.rotation.abs() < 1e-12);
        assert!(same_placement(&ts, &a, &b, 1e-6));
    }

    #[test]
    fn square_has_four_neighbors() {
        let ts = load(builtin::square());
        let seed = ts.place(0, &RigidTransform::IDENTITY);
        assert_eq!(enumerate_neighbors(&seed, &ts).len(), 4);
    }

    #[test]
    fn square_ring_counts() {
        let ts = load(builtin::square());
        for r in 0..=4u32 {
            let ss = build_superset(ts.clone(), r).unwrap();
            let r = r as usize;
            assert_eq!(ss.len(), 2 * r * r + 2 * r + 1);
        }
    }

    #[test]
    fn square_pose_table_has_one_entry_per_side() {
        let ss = build_superset(load(builtin::square()), 1).unwrap();
        assert_eq!(ss.poses.len(), 4);
    }

    #[test]
    fn cap_is_enforced() {
        let err = build_superset_with(load(builtin::square()), 5, 10, GrowthOrder::Forward).unwrap_err();
        assert_eq!(err, TilesetError::SupersetTooLarge { cap: 10 });
    }

    #[test]
    fn pose_index_rejects_overlap() {
        let ts = load(builtin::square());
        let ss = build_superset(ts.clone(), 1).unwrap();
        let a = ts.place(0, &RigidTransform::IDENTITY);
        let b = ts.place(0, &RigidTransform::translation(Point::new(0.5, 0.0)));
        assert_eq!(ss.pose_index(&a, &b), Err(TilesetError::NotNeighbors));
    }

    #[test]
    fn pose_index_is_translation_invariant() {
        let ts = load(builtin::square_domino());
        let ss = build_superset(ts.clone(), 3).unwrap();
        let shift = |p: &Placement, d: Point| ts.place(p.prototile, &RigidTransform::translation(d).compose(&p.transform));
        let a = ts.place(0, &RigidTransform::IDENTITY);
        let b = ts.place(1, &RigidTransform::translation(Point::new(1.0, 0.0)));
        let i = ss.pose_index(&a, &b).unwrap();
        for d in [Point::new(5.0, -3.0), Point::new(-17.0, 40.0)] {
            assert_eq!(ss.pose_index(&shift(&a, d), &shift(&b, d)).unwrap(), i);
        }
    }

    #[test]
    fn slide_offsets_cover_flush_and_quantized() {
        assert_eq!(slide_offsets(3.0, 1.0, 1.0, 1e-9), vec![0.0, 1.0, 2.0]);
        assert_eq!(slide_offsets(1.0, 2.0, 1.0, 1e-9), vec![-1.0, 0.0]);
        assert_eq!(slide_offsets(2.5, 1.0, 1.0, 1e-9), vec![0.0, 0.5, 1.0, 1.5]);
    }
}
