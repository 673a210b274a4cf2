//! Documents and rendering: versioned JSON for tile sets, graphs and
//! solutions, a binary superset cache, weights files, and SVG output.

use std::fmt::Write as _;
use std::io::{Read, Write};
use std::path::Path;
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use geo::MultiPolygon;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{BBox, Point, Polygon, Region, RigidTransform};
use crate::graph::{AdjacencyGraph, NeighborEdge};
use crate::nn::{Model, NnError};
use crate::solve::{Policy, Solution, SolutionMetrics, TileRequest};
use crate::tileset::{Superset, TileSet, TileSetDescriptor, TilesetError};

pub const DOC_VERSION: u32 = 1;
pub const SUPERSET_MAGIC: &[u8; 4] = b"TSUP";
pub const SUPERSET_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("{what}: parse error at {location}: {message}")]
    Parse {
        what: &'static str,
        location: String,
        message: String,
    },
    #[error("{what}: version {found} is newer than supported version {supported}")]
    Version { what: &'static str, found: u32, supported: u32 },
    #[error(transparent)]
    Tileset(#[from] TilesetError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

fn json_error(what: &'static str, e: serde_json::Error) -> DocError {
    DocError::Parse {
        what,
        location: format!("line {} column {}", e.line(), e.column()),
        message: e.to_string(),
    }
}

#[derive(Serialize)]
struct Envelope<'a, T> {
    format: &'a str,
    version: u32,
    #[serde(flatten)]
    body: &'a T,
}

fn to_doc<T: Serialize>(format: &str, body: &T) -> String {
    let env = Envelope {
        format,
        version: DOC_VERSION,
        body,
    };
    let mut s = serde_json::to_string_pretty(&env).expect("documents serialize");
    s.push('\n');
    s
}

fn from_doc<T: DeserializeOwned>(what: &'static str, text: &str) -> Result<T, DocError> {
    let mut v: Value = serde_json::from_str(text).map_err(|e| json_error(what, e))?;
    let obj = v.as_object_mut().ok_or_else(|| DocError::Parse {
        what,
        location: "line 1 column 1".into(),
        message: "expected a JSON object".into(),
    })?;
    let header = |m: String| DocError::Parse {
        what,
        location: "document header".into(),
        message: m,
    };
    match obj.remove("format") {
        Some(Value::String(f)) if f == what => {}
        Some(f) => return Err(header(format!("format is {f}, expected \"{what}\""))),
        None => return Err(header("missing \"format\" field".into())),
    }
    let version = obj
        .remove("version")
        .and_then(|v| v.as_u64())
        .ok_or_else(|| header("missing or non-integer \"version\" field".into()))?;
    if version > DOC_VERSION as u64 {
        return Err(DocError::Version {
            what,
            found: version.min(u32::MAX as u64) as u32,
            supported: DOC_VERSION,
        });
    }
    serde_json::from_value(v).map_err(|e| {
        // body errors carry no position; reparse the text to locate them
        #[derive(Deserialize)]
        struct Located<T> {
            #[serde(flatten)]
            _body: T,
        }
        match serde_json::from_str::<Located<T>>(text) {
            Err(located) => json_error(what, located),
            Ok(_) => DocError::Parse {
                what,
                location: "document body".into(),
                message: e.to_string(),
            },
        }
    })
}

pub fn tileset_to_string(d: &TileSetDescriptor) -> String {
    to_doc("tileset", d)
}

pub fn tileset_from_str(text: &str) -> Result<TileSetDescriptor, DocError> {
    let d: TileSetDescriptor = from_doc("tileset", text)?;
    TileSet::from_descriptor(&d)?;
    Ok(d)
}

pub fn read_tileset(path: &Path) -> Result<TileSet, DocError> {
    let d = tileset_from_str(&std::fs::read_to_string(path)?)?;
    Ok(TileSet::from_descriptor(&d)?)
}

struct CountingReader<R> {
    inner: R,
    offset: u64,
}

impl<R: Read> Read for CountingReader<R> {
    fn read(&mut self, buf: &mut [u8]) -> std::io::Result<usize> {
        let n = self.inner.read(buf)?;
        self.offset += n as u64;
        Ok(n)
    }
}

/// Binary superset cache: magic, version, tile-set document, then one
/// record per placement (prototile, rotation, translation, generation).
pub fn write_superset<W: Write>(mut w: W, ss: &Superset) -> Result<(), DocError> {
    w.write_all(SUPERSET_MAGIC)?;
    w.write_u32::<LittleEndian>(SUPERSET_VERSION)?;
    let ts = tileset_to_string(&ss.tileset.descriptor());
    w.write_u32::<LittleEndian>(ts.len() as u32)?;
    w.write_all(ts.as_bytes())?;
    w.write_u32::<LittleEndian>(ss.len() as u32)?;
    for (p, &g) in ss.placements.iter().zip(&ss.generations) {
        w.write_u32::<LittleEndian>(p.prototile as u32)?;
        w.write_f64::<LittleEndian>(p.transform.rotation)?;
        w.write_f64::<LittleEndian>(p.transform.translation.x)?;
        w.write_f64::<LittleEndian>(p.transform.translation.y)?;
        w.write_u32::<LittleEndian>(g)?;
    }
    Ok(())
}

pub fn read_superset<R: Read>(r: R) -> Result<Superset, DocError> {
    let mut r = CountingReader { inner: r, offset: 0 };
    let what = "superset";
    let at = |offset: u64, m: &str| DocError::Parse {
        what,
        location: format!("byte offset {offset}"),
        message: m.into(),
    };
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic).map_err(|_| at(r.offset, "truncated header"))?;
    if &magic != SUPERSET_MAGIC {
        return Err(at(0, "bad magic bytes"));
    }
    let version = r.read_u32::<LittleEndian>().map_err(|_| at(r.offset, "truncated header"))?;
    if version > SUPERSET_VERSION {
        return Err(DocError::Version {
            what,
            found: version,
            supported: SUPERSET_VERSION,
        });
    }
    if version == 0 {
        return Err(at(4, "version 0 is not a valid version"));
    }
    let len = r.read_u32::<LittleEndian>().map_err(|_| at(r.offset, "truncated header"))? as usize;
    let start = r.offset;
    let mut text = vec![0u8; len];
    r.read_exact(&mut text).map_err(|_| at(r.offset, "truncated tile-set document"))?;
    let text = String::from_utf8(text).map_err(|_| at(start, "tile-set document is not UTF-8"))?;
    let ts = Arc::new(TileSet::from_descriptor(&tileset_from_str(&text)?)?);
    let count = r.read_u32::<LittleEndian>().map_err(|_| at(r.offset, "truncated placement count"))? as usize;
    let mut placements = Vec::with_capacity(count.min(1 << 20));
    let mut generations = Vec::with_capacity(count.min(1 << 20));
    for _ in 0..count {
        let rec = r.offset;
        let mut read = || -> std::io::Result<(u32, f64, f64, f64, u32)> {
            Ok((
                r.read_u32::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
                r.read_f64::<LittleEndian>()?,
                r.read_u32::<LittleEndian>()?,
            ))
        };
        let (proto, rot, x, y, g) = read().map_err(|_| at(rec, "truncated placement record"))?;
        if proto as usize >= ts.len() {
            return Err(at(rec, "placement names an unknown prototile"));
        }
        if !(rot.is_finite() && x.is_finite() && y.is_finite()) {
            return Err(at(rec, "non-finite placement transform"));
        }
        placements.push(ts.place(proto as usize, &RigidTransform::new(rot, Point::new(x, y))));
        generations.push(g);
    }
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(at(r.offset - 1, "trailing bytes after last placement"));
    }
    if placements.is_empty() {
        return Err(at(r.offset, "superset has no placements"));
    }
    Ok(Superset::from_placements(ts, placements, generations))
}

pub fn save_superset(path: &Path, ss: &Superset) -> Result<(), DocError> {
    let mut buf = Vec::new();
    write_superset(&mut buf, ss)?;
    std::fs::write(path, buf)?;
    Ok(())
}

pub fn load_superset(path: &Path) -> Result<Superset, DocError> {
    read_superset(std::io::BufReader::new(std::fs::File::open(path)?))
}

pub fn save_weights(path: &Path, m: &Model) -> Result<(), DocError> {
    std::fs::write(path, m.to_bytes())?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<Model, DocError> {
    Ok(Model::load(std::io::BufReader::new(std::fs::File::open(path)?))?)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct NodeDoc {
    prototile: usize,
    transform: RigidTransform,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
struct GraphDoc {
    nodes: Vec<NodeDoc>,
    overlap_edges: Vec<(usize, usize)>,
    neighbor_edges: Vec<NeighborEdge>,
    n_types: usize,
    n_poses: usize,
    l_max: f64,
}

pub fn graph_to_string(g: &AdjacencyGraph) -> String {
    let doc = GraphDoc {
        nodes: g
            .nodes
            .iter()
            .map(|p| NodeDoc {
                prototile: p.prototile,
                transform: p.transform,
            })
            .collect(),
        overlap_edges: g.overlap_edges.clone(),
        neighbor_edges: g.neighbor_edges.clone(),
        n_types: g.n_types,
        n_poses: g.n_poses,
        l_max: g.l_max,
    };
    to_doc("graph", &doc)
}

/// Reads a graph document; placements are rebuilt from `ts`.
pub fn graph_from_str(text: &str, ts: &TileSet) -> Result<AdjacencyGraph, DocError> {
    let doc: GraphDoc = from_doc("graph", text)?;
    let bad = |m: String| DocError::Parse {
        what: "graph",
        location: "document body".into(),
        message: m,
    };
    let n = doc.nodes.len();
    if doc.nodes.iter().any(|d| d.prototile >= ts.len()) {
        return Err(bad("node names an unknown prototile".into()));
    }
    let in_range = |a: usize, b: usize| a < b && b < n;
    if !doc.overlap_edges.iter().all(|&(a, b)| in_range(a, b)) || !doc.neighbor_edges.iter().all(|e| in_range(e.a, e.b)) {
        return Err(bad("edge endpoints must satisfy a < b < node count".into()));
    }
    if doc.neighbor_edges.iter().any(|e| e.pose >= doc.n_poses) {
        return Err(bad("neighbor edge names an unknown pose".into()));
    }
    let nodes = doc.nodes.iter().map(|d| ts.place(d.prototile, &d.transform)).collect();
    Ok(AdjacencyGraph::from_parts(nodes, doc.overlap_edges, doc.neighbor_edges, doc.n_types, doc.n_poses, doc.l_max))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TileDoc {
    pub prototile: usize,
    pub transform: RigidTransform,
    pub vertices: Vec<Point>,
    pub color: String,
}

/// Serializable solution. Wall time is left out so equal runs give equal
/// documents.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionDoc {
    pub tileset: String,
    pub policy: String,
    pub seed: u64,
    pub config_digest: String,
    pub crop_index: usize,
    pub run_index: usize,
    pub pose: RigidTransform,
    pub region: Region,
    pub tiles: Vec<TileDoc>,
    pub metrics: SolutionMetrics,
}

impl SolutionDoc {
    pub fn new(sol: &Solution, ts: &TileSet, policy: &Policy, req: &TileRequest) -> SolutionDoc {
        SolutionDoc {
            tileset: ts.name.clone(),
            policy: policy.name().into(),
            seed: sol.seed,
            config_digest: config_digest(ts, policy, req),
            crop_index: sol.crop_index,
            run_index: sol.run_index,
            pose: sol.pose,
            region: sol.region.clone(),
            tiles: sol
                .selected
                .iter()
                .map(|p| TileDoc {
                    prototile: p.prototile,
                    transform: p.transform,
                    vertices: p.polygon.vertices().to_vec(),
                    color: ts.prototiles[p.prototile].color.clone(),
                })
                .collect(),
            metrics: SolutionMetrics {
                wall_ms: 0.0,
                ..sol.metrics
            },
        }
    }

    pub fn to_json(&self) -> String {
        to_doc("solution", self)
    }

    pub fn from_json(text: &str) -> Result<SolutionDoc, DocError> {
        from_doc("solution", text)
    }

    /// Hex SHA-256 of the document text.
    pub fn digest(&self) -> String {
        hex::encode(Sha256::digest(self.to_json().as_bytes()))
    }
}

/// Hex SHA-256 over the tile set, policy, weights and request settings.
pub fn config_digest(ts: &TileSet, policy: &Policy, req: &TileRequest) -> String {
    let mut h = Sha256::new();
    h.update(tileset_to_string(&ts.descriptor()).as_bytes());
    h.update(policy.name().as_bytes());
    if let Policy::Gnn(m) = policy {
        h.update(m.to_bytes());
    }
    h.update((req.k as u64).to_le_bytes());
    h.update((req.runs as u64).to_le_bytes());
    h.update(serde_json::to_vec(&req.options).expect("options serialize"));
    h.update(serde_json::to_vec(&req.fixed_pose).expect("pose serializes"));
    hex::encode(h.finalize())
}

const REGION_FILL: &str = "#c8c8c8";
const CANDIDATE_FILL: &str = "#9ec5ff";
const PX_PER_UNIT: f64 = 24.0;

fn ring_path(out: &mut String, ring: &[Point]) {
    for (i, p) in ring.iter().enumerate() {
        let _ = write!(out, "{}{:.4} {:.4} ", if i == 0 { "M" } else { "L" }, p.x, -p.y);
    }
    out.push('Z');
}

fn geo_ring_points(ls: &geo::LineString<f64>) -> Vec<Point> {
    let mut pts: Vec<Point> = ls.coords().map(|c| Point::new(c.x, c.y)).collect();
    if pts.len() > 1 && pts.first() == pts.last() {
        pts.pop();
    }
    pts
}

/// Renders the region in gray, the candidate union in blue, then one filled
/// path per tile colored by prototile. Output bytes depend only on inputs.
pub fn render_svg(tiles: &[TileDoc], candidates: &MultiPolygon<f64>, region: &Region) -> String {
    let mut bbox = region.bbox();
    for t in tiles {
        bbox = bbox.union(&BBox::from_points(&t.vertices));
    }
    for p in &candidates.0 {
        let pts = geo_ring_points(p.exterior());
        if !pts.is_empty() {
            bbox = bbox.union(&BBox::from_points(&pts));
        }
    }
    let pad = 0.02 * bbox.width().max(bbox.height()).max(1e-9);
    let b = bbox.expand(pad);
    let (w, h) = (b.width(), b.height());
    let mut s = String::new();
    let _ = writeln!(s, r#"<?xml version="1.0" encoding="UTF-8"?>"#);
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{:.0}" height="{:.0}" viewBox="{:.4} {:.4} {:.4} {:.4}">"#,
        (w * PX_PER_UNIT).ceil(),
        (h * PX_PER_UNIT).ceil(),
        b.min.x,
        -b.max.y,
        w,
        h
    );
    let stroke = 0.02 * w.max(h) / 20.0;
    let mut d = String::new();
    ring_path(&mut d, region.outer().vertices());
    for hole in region.holes() {
        d.push(' ');
        ring_path(&mut d, hole.vertices());
    }
    let _ = writeln!(s, r#"<path class="region" d="{d}" fill="{REGION_FILL}" fill-rule="evenodd" stroke="none"/>"#);
    let mut d = String::new();
    for p in &candidates.0 {
        ring_path(&mut d, &geo_ring_points(p.exterior()));
        for hole in p.interiors() {
            d.push(' ');
            ring_path(&mut d, &geo_ring_points(hole));
        }
        d.push(' ');
    }
    let _ = writeln!(
        s,
        r#"<path class="candidates" d="{}" fill="{CANDIDATE_FILL}" fill-rule="evenodd" stroke="none"/>"#,
        d.trim_end()
    );
    for t in tiles {
        let mut d = String::new();
        ring_path(&mut d, &t.vertices);
        let _ = writeln!(
            s,
            r##"<path class="tile" d="{d}" fill="{}" stroke="#222222" stroke-width="{stroke:.4}" stroke-linejoin="round"/>"##,
            t.color
        );
    }
    s.push_str("</svg>\n");
    s
}

/// SVG of a solution over its crop's candidate union.
pub fn render_solution(doc: &SolutionDoc, candidates: &[&Polygon]) -> String {
    render_svg(&doc.tiles, &crate::solve::union_of(candidates), &doc.region)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::build_graph;
    use crate::solve::{tile_region, Crop};
    use crate::tileset::{build_superset, builtin};

    fn superset(d: TileSetDescriptor, rings: u32) -> Superset {
        build_superset(Arc::new(TileSet::from_descriptor(&d).unwrap()), rings).unwrap()
    }

    #[test]
    fn tileset_round_trip_and_versions() {
        for d in builtin::all() {
            assert_eq!(tileset_from_str(&tileset_to_string(&d)).unwrap(), d);
        }
        let text = tileset_to_string(&builtin::square()).replace("\"version\": 1", "\"version\": 7");
        assert!(matches!(tileset_from_str(&text), Err(DocError::Version { found: 7, .. })));
        let broken = tileset_to_string(&builtin::square()).replace("\"theta\"", "\"thet\"");
        match tileset_from_str(&broken) {
            Err(DocError::Parse { location, .. }) => assert!(location.contains("line"), "{location}"),
            other => panic!("{other:?}"),
        }
        assert!(matches!(tileset_from_str("{\"format\": \"graph\", \"version\": 1}"), Err(DocError::Parse { .. })));
    }

    #[test]
    fn superset_round_trip() {
        let ss = superset(builtin::trominoes(), 2);
        let mut buf = Vec::new();
        write_superset(&mut buf, &ss).unwrap();
        let back = read_superset(&buf[..]).unwrap();
        assert_eq!(back.canonical_keys(), ss.canonical_keys());
        assert_eq!(back.poses, ss.poses);
        assert_eq!(back.generations, ss.generations);
    }

    #[test]
    fn superset_corruption_is_located() {
        let ss = superset(builtin::square(), 2);
        let mut buf = Vec::new();
        write_superset(&mut buf, &ss).unwrap();
        let mut bad = buf.clone();
        bad[0] = b'X';
        match read_superset(&bad[..]) {
            Err(DocError::Parse { location, .. }) => assert_eq!(location, "byte offset 0"),
            other => panic!("{other:?}"),
        }
        let mut future = buf.clone();
        future[4] = 9;
        assert!(matches!(read_superset(&future[..]), Err(DocError::Version { found: 9, .. })));
        let cut = &buf[..buf.len() - 3];
        match read_superset(cut) {
            Err(DocError::Parse { location, message, .. }) => {
                assert!(location.starts_with("byte offset"));
                assert!(message.contains("placement"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn graph_round_trip() {
        let ss = superset(builtin::square_domino(), 3);
        let c = Crop::posed(&ss, &Region::from(Polygon::rect(Point::new(-2.0, -2.0), 4.0, 3.0)), RigidTransform::IDENTITY);
        let g = build_graph(&c.placements(&ss), &ss).unwrap();
        let back = graph_from_str(&graph_to_string(&g), &ss.tileset).unwrap();
        assert_eq!(back, g);
    }

    fn sample_solution() -> (Superset, SolutionDoc, Vec<Polygon>) {
        let ss = superset(builtin::domino(), 4);
        let region = Region::from(Polygon::rect(Point::new(0.0, 0.0), 4.0, 2.0));
        let req = TileRequest {
            fixed_pose: Some(RigidTransform::IDENTITY),
            seed: 3,
            ..Default::default()
        };
        let sol = tile_region(&Policy::Greedy, &ss, &region, &req).unwrap();
        let doc = SolutionDoc::new(&sol, &ss.tileset, &Policy::Greedy, &req);
        let c = Crop::posed(&ss, &region, RigidTransform::IDENTITY);
        let cands = c.placements(&ss).into_iter().map(|p| p.polygon).collect();
        (ss, doc, cands)
    }

    #[test]
    fn solution_round_trip() {
        let (_, doc, _) = sample_solution();
        assert_eq!(doc.tiles.len(), 4);
        let back = SolutionDoc::from_json(&doc.to_json()).unwrap();
        assert_eq!(back, doc);
        assert_eq!(back.digest(), doc.digest());
    }

    #[test]
    fn svg_layers_and_determinism() {
        let (_, doc, cands) = sample_solution();
        let refs: Vec<&Polygon> = cands.iter().collect();
        let a = render_solution(&doc, &refs);
        assert_eq!(a, render_solution(&doc, &refs));
        let classes: Vec<&str> = a.lines().filter_map(|l| l.split("class=\"").nth(1)).map(|r| r.split('"').next().unwrap()).collect();
        assert_eq!(classes[..2], ["region", "candidates"]);
        assert_eq!(classes.iter().filter(|&&c| c == "tile").count(), 4);
        let two = SolutionDoc {
            tiles: doc.tiles[..2].to_vec(),
            ..doc.clone()
        };
        let b = render_solution(&two, &refs);
        assert_eq!(b.matches("class=\"tile\"").count(), 2);
        let empty = SolutionDoc { tiles: vec![], ..doc };
        let e = render_solution(&empty, &refs);
        assert_eq!(e.matches("<path").count(), 2);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(64))]
            #[test]
            fn tileset_documents_round_trip(
                w in 0.5..3.0f64, h in 0.5..3.0f64, theta in 0.1..3.2f64,
                dx in 0.5..4.0f64, dy in 0.5..4.0f64, rings in 0u32..20,
                name in "[a-z]{1,12}", color in "#[0-9a-f]{6}",
            ) {
                let d = TileSetDescriptor {
                    name,
                    prototiles: vec![crate::tileset::PrototileDescriptor {
                        vertices: Polygon::rect(Point::ORIGIN, w, h).vertices().to_vec(),
                        color,
                    }],
                    symmetry: crate::tileset::Symmetry { theta, dx, dy },
                    default_rings: rings,
                };
                prop_assert_eq!(tileset_from_str(&tileset_to_string(&d)).unwrap(), d);
            }

            #[test]
            fn solution_documents_round_trip(
                coverage in 0.0..1.0f64, holes in 0usize..50, contact in 0.0..100.0f64,
                loss in 1.0..100.0f64, rounds in 0usize..50, limit: bool, seed: u64,
                rot in 0.0..6.28f64, tx in -10.0..10.0f64, ty in -10.0..10.0f64,
            ) {
                let (_, mut doc, _) = sample_solution();
                doc.seed = seed;
                doc.pose = RigidTransform::new(rot, Point::new(tx, ty));
                doc.metrics = SolutionMetrics { coverage, holes, contact_length: contact, loss, rounds, round_limit: limit, wall_ms: 0.0 };
                prop_assert_eq!(SolutionDoc::from_json(&doc.to_json()).unwrap(), doc);
            }
        }
    }
}
