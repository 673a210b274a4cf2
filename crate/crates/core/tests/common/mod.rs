#![allow(dead_code)]

use std::sync::Arc;

use rand::Rng;
use tiling_core::geom::{overlap_area, region_contains, BBox, Point, Polygon, Region, RigidTransform};
use tiling_core::graph::{crop_superset, AdjacencyGraph};
use tiling_core::tileset::{build_superset, Placement, Superset, TileSet, TileSetDescriptor};
use tiling_core::train::{random_shape, TrainConfig};

pub fn tileset(d: TileSetDescriptor) -> Arc<TileSet> {
    Arc::new(TileSet::from_descriptor(&d).unwrap())
}

pub fn superset(d: TileSetDescriptor, rings: u32) -> Superset {
    build_superset(tileset(d), rings).unwrap()
}

/// Superset grown to the tile set's default ring count.
pub fn default_superset(d: TileSetDescriptor) -> Superset {
    let rings = d.default_rings;
    superset(d, rings)
}

pub fn rect(x: f64, y: f64, w: f64, h: f64) -> Region {
    Region::from(Polygon::rect(Point::new(x, y), w, h))
}

/// Random simple polygon inside the superset interior, sized to `size` of it.
pub fn shape(ss: &Superset, rng: &mut impl Rng, size: (f64, f64)) -> Polygon {
    let cfg = TrainConfig { min_size: size.0, max_size: size.1, ..TrainConfig::default() };
    random_shape(rng, &ss.interior_box(), &cfg).unwrap()
}

/// Random shape whose identity crop keeps at least `min_nodes` candidates.
pub fn tileable_shape(ss: &Superset, rng: &mut impl Rng, size: (f64, f64), min_nodes: usize) -> Region {
    loop {
        let r = Region::from(shape(ss, rng, size));
        if crop_superset(ss, &r, &RigidTransform::IDENTITY).len() >= min_nodes {
            return r;
        }
    }
}

/// Random shape scaled to a box of side `side` centered in the interior.
pub fn shape_in(ss: &Superset, rng: &mut impl Rng, side: f64) -> Polygon {
    let c = ss.interior_box().center();
    let bounds = BBox::from_points(&[c - Point::new(side / 2.0, side / 2.0), c + Point::new(side / 2.0, side / 2.0)]);
    let cfg = TrainConfig { min_size: 1.0, max_size: 1.0, ..TrainConfig::default() };
    random_shape(rng, &bounds, &cfg).unwrap()
}

/// Pairs of selected placements that overlap, by all-pairs check.
pub fn overlapping_pairs(sel: &[Placement], eps_area: f64) -> usize {
    let mut n = 0;
    for i in 0..sel.len() {
        for j in i + 1..sel.len() {
            if overlap_area(&sel[i].polygon, &sel[j].polygon) >= eps_area {
                n += 1;
            }
        }
    }
    n
}

/// Selected placements not inside the region.
pub fn outside(sel: &[Placement], region: &Region, tol: f64) -> usize {
    sel.iter().filter(|p| !region_contains(region, &p.polygon, tol)).count()
}

/// Best objective over all independent subsets, enumerating every bitmask.
pub fn enumerate_best(g: &AdjacencyGraph, lambda: f64) -> f64 {
    let n = g.len();
    assert!(n <= 24);
    let areas = g.areas();
    let mut conflict = vec![0u32; n];
    for &(a, b) in &g.overlap_edges {
        conflict[a] |= 1 << b;
        conflict[b] |= 1 << a;
    }
    let mut best = 0.0f64;
    for mask in 0u32..(1u32 << n) {
        if (0..n).any(|i| mask & (1 << i) != 0 && mask & conflict[i] != 0) {
            continue;
        }
        let mut v: f64 = (0..n).filter(|&i| mask & (1 << i) != 0).map(|i| areas[i]).sum();
        for e in &g.neighbor_edges {
            if mask & (1 << e.a) != 0 && mask & (1 << e.b) != 0 {
                v += lambda * e.length / g.l_max;
            }
        }
        best = best.max(v);
    }
    best
}
