mod common;

use std::collections::BTreeSet;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiling_core::geom::{canonical_key, overlap_area, shared_boundary_length, BBox, Point, RigidTransform};
use tiling_core::tileset::{
    build_superset, build_superset_with, builtin, enumerate_neighbors, sweep_superset, GrowthOrder, DEFAULT_SUPERSET_CAP,
};

use common::{superset, tileset};

/// Lattice points with L1 norm at most `r`, counted directly.
fn l1_ball(r: i64) -> usize {
    (-r..=r).flat_map(|x| (-r..=r).map(move |y| (x, y))).filter(|(x, y)| x.abs() + y.abs() <= r).count()
}

#[test]
fn square_ring_counts_match_l1_ball() {
    let ts = tileset(builtin::square());
    for r in 0..=6u32 {
        let ss = build_superset(ts.clone(), r).unwrap();
        assert_eq!(ss.len(), l1_ball(r as i64), "rings {r}");
    }
}

#[test]
fn growth_is_order_independent() {
    for d in [builtin::square_domino(), builtin::trominoes(), builtin::triangles()] {
        let ts = tileset(d);
        let rings = 4;
        let fwd = build_superset_with(ts.clone(), rings, DEFAULT_SUPERSET_CAP, GrowthOrder::Forward).unwrap();
        for order in [GrowthOrder::Reverse, GrowthOrder::Shuffled(1), GrowthOrder::Shuffled(99)] {
            let other = build_superset_with(ts.clone(), rings, DEFAULT_SUPERSET_CAP, order).unwrap();
            assert_eq!(fwd.canonical_keys(), other.canonical_keys(), "{} {order:?}", ts.name);
        }
    }
}

#[test]
fn tromino_sweep_equals_growth() {
    let ts = tileset(builtin::trominoes());
    let window = BBox::from_points(&[Point::new(-3.0, -3.0), Point::new(3.0, 3.0)]);
    let swept = sweep_superset(ts.clone(), window);
    let grown = build_superset(ts.clone(), 8).unwrap();
    let tau = ts.tolerances().snap;
    let inner = window.expand(ts.tolerances().length);
    let grown_keys: BTreeSet<_> = grown
        .placements
        .iter()
        .filter(|p| inner.contains_box(&p.polygon.bbox()))
        .map(|p| p.key(tau))
        .collect();
    let swept_keys: BTreeSet<_> = swept.placements.iter().map(|p| p.key(tau)).collect();
    assert!(!swept_keys.is_empty());
    assert_eq!(swept_keys, grown_keys);
}

/// Slides the square along each long edge of a domino seed in multiples of
/// the unit and keeps offsets that touch without overlapping.
#[test]
fn square_beside_domino_long_edge_matches_brute_force() {
    let ts = tileset(builtin::square_domino());
    let tol = ts.tolerances();
    let seed = ts.place(1, &RigidTransform::IDENTITY);
    let mut expected = BTreeSet::new();
    for y in [-1.0, 1.0] {
        for k in -4..=4 {
            let p = ts.place(0, &RigidTransform::translation(Point::new(k as f64 * ts.unit(), y)));
            if overlap_area(&seed.polygon, &p.polygon) < tol.area
                && shared_boundary_length(&seed.polygon, &p.polygon, tol.length) >= tol.min_contact
            {
                expected.insert(canonical_key(&p.polygon, tol.snap));
            }
        }
    }
    let found: BTreeSet<_> = enumerate_neighbors(&seed, &ts)
        .into_iter()
        .filter(|n| {
            let b = n.polygon.bbox();
            n.prototile == 0 && ((b.min.y - 1.0).abs() < tol.length || (b.max.y).abs() < tol.length)
        })
        .map(|n| canonical_key(&n.polygon, tol.snap))
        .collect();
    assert_eq!(expected.len(), 4);
    assert_eq!(found, expected);
}

#[test]
fn neighbors_never_overlap_seed() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sets: Vec<_> = builtin::all().into_iter().map(tileset).collect();
    for _ in 0..1000 {
        let ts = &sets[rng.gen_range(0..sets.len())];
        let t = RigidTransform::new(rng.gen_range(0.0..std::f64::consts::TAU), Point::new(rng.gen_range(-5.0..5.0), rng.gen_range(-5.0..5.0)));
        let seed = ts.place(rng.gen_range(0..ts.len()), &t);
        let tol = ts.tolerances();
        for n in enumerate_neighbors(&seed, ts) {
            assert!(overlap_area(&seed.polygon, &n.polygon) < tol.area);
            assert!(shared_boundary_length(&seed.polygon, &n.polygon, tol.length) >= tol.min_contact);
        }
    }
}

#[test]
fn supersets_are_closed_under_symmetry() {
    for d in builtin::all() {
        let ss = superset(d, 5);
        let r = ss.interior_radius() - ss.tileset.max_diameter() * 1.5;
        ss.check_symmetry(r.max(0.0)).unwrap();
    }
}

#[test]
fn every_contacting_pair_has_one_pose() {
    let ss = superset(builtin::square_domino(), 3);
    let ts = &ss.tileset;
    for a in &ss.placements {
        for b in &ss.placements {
            if std::ptr::eq(a, b) || !ts.in_contact(a, b) {
                continue;
            }
            let key = tiling_core::tileset::PoseKey::between(ts, a, b);
            let hits = ss.poses.iter().filter(|p| p.matches(&key, ts.tolerances())).count();
            assert_eq!(hits, 1);
        }
    }
}
