mod common;

use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tiling_core::geom::{Region, RigidTransform};
use tiling_core::graph::{build_graph, crop_superset, AdjacencyGraph};
use tiling_core::nn::{Model, ModelConfig};
use tiling_core::solve::{exact_solve, objective, run_algorithm1, tile_region, Policy, SolveOptions, TileRequest};
use tiling_core::tileset::{builtin, Superset};

use common::{default_superset, enumerate_best, outside, overlapping_pairs, shape, superset, tileable_shape};

fn policies(ss: &Superset) -> Vec<Policy> {
    let model = Model::new(ModelConfig::new(ss.tileset.len(), ss.poses.len()));
    vec![Policy::Gnn(Arc::new(model)), Policy::Greedy, Policy::Random]
}

fn small_graph(ss: &Superset, rng: &mut ChaCha8Rng, max_nodes: usize) -> (AdjacencyGraph, Region) {
    loop {
        let region = Region::from(shape(ss, rng, (0.1, 0.3)));
        let idx = crop_superset(ss, &region, &RigidTransform::IDENTITY);
        if (1..=max_nodes).contains(&idx.len()) {
            let nodes: Vec<_> = idx.iter().map(|&i| ss.placements[i].clone()).collect();
            return (build_graph(&nodes, ss).unwrap(), region);
        }
    }
}

#[test]
fn solutions_never_overlap_or_leave_the_region() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for d in [builtin::square_domino(), builtin::trominoes(), builtin::triangles()] {
        let ss = default_superset(d);
        let tol = *ss.tileset.tolerances();
        for policy in policies(&ss) {
            for s in 0..5 {
                let region = tileable_shape(&ss, &mut rng, (0.3, 0.8), 5);
                let req = TileRequest { k: 2, runs: 2, seed: s, ..TileRequest::default() };
                let sol = tile_region(&policy, &ss, &region, &req).unwrap();
                assert_eq!(overlapping_pairs(&sol.selected, tol.area), 0);
                assert_eq!(outside(&sol.selected, &sol.region, tol.length), 0);
            }
        }
    }
}

#[test]
fn exact_matches_enumeration_and_dominates_policies() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    let lambda = 0.02;
    for d in [builtin::square_domino(), builtin::trominoes(), builtin::triangles()] {
        let ss = default_superset(d);
        let policies = policies(&ss);
        for _ in 0..4 {
            let (g, region) = small_graph(&ss, &mut rng, 16);
            let ex = exact_solve(&g, lambda, None).unwrap();
            assert!(ex.optimal);
            let oracle = enumerate_best(&g, lambda);
            assert!((ex.objective - oracle).abs() <= 1e-9, "{} vs {oracle}", ex.objective);
            assert!((objective(&g, &ex.selected, lambda) - ex.objective).abs() <= 1e-9);
            for p in &policies {
                let out = run_algorithm1(p, &g, &region, &SolveOptions::default(), &mut rng, &mut |_| {}).unwrap();
                assert!(objective(&g, &out.selected, lambda) <= ex.objective + 1e-9);
            }
        }
    }
}

/// One-sided sign test on paired differences, ties dropped.
fn sign_test_p(wins: usize, losses: usize) -> f64 {
    let n = wins + losses;
    let mut tail = 0.0;
    let mut c = 1.0f64;
    for k in 0..=n {
        if k >= wins {
            tail += c;
        }
        c = c * (n - k) as f64 / (k + 1) as f64;
    }
    tail / 2f64.powi(n as i32)
}

#[test]
fn sign_test_tail_matches_hand_values() {
    assert!((sign_test_p(5, 0) - 1.0 / 32.0).abs() < 1e-12);
    assert!((sign_test_p(0, 0) - 1.0).abs() < 1e-12);
    assert!((sign_test_p(2, 1) - 0.5).abs() < 1e-12);
}

#[test]
fn more_runs_do_not_lose_coverage() {
    let ss = default_superset(builtin::trominoes());
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let (mut wins, mut losses) = (0, 0);
    for seed in 0..50 {
        let region = tileable_shape(&ss, &mut rng, (0.4, 0.8), 5);
        let one = tile_region(&Policy::Random, &ss, &region, &TileRequest { seed, ..TileRequest::default() }).unwrap();
        let many = tile_region(&Policy::Random, &ss, &region, &TileRequest { seed, runs: 20, ..TileRequest::default() }).unwrap();
        let d = many.metrics.coverage - one.metrics.coverage;
        assert!(d >= 0.0);
        if d > 0.0 {
            wins += 1;
        } else if d < 0.0 {
            losses += 1;
        }
    }
    assert!(sign_test_p(wins, losses) < 0.05, "wins {wins} losses {losses}");
}

#[test]
fn rounds_stay_few_on_most_runs() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    let (mut runs, mut few) = (0, 0);
    for d in [builtin::square_domino(), builtin::trominoes(), builtin::triangles()] {
        let ss = default_superset(d);
        for policy in policies(&ss) {
            for seed in 0..5 {
                let region = tileable_shape(&ss, &mut rng, (0.3, 0.8), 5);
                let sol = tile_region(&policy, &ss, &region, &TileRequest { seed, ..TileRequest::default() }).unwrap();
                runs += 1;
                if sol.metrics.rounds <= 10 {
                    few += 1;
                }
            }
        }
    }
    assert!(few as f64 >= 0.95 * runs as f64, "{few}/{runs}");
}

#[test]
fn greedy_tiles_domino_strip_completely() {
    let ss = superset(builtin::domino(), 8);
    for n in 2..=8 {
        let region = common::rect(0.0, 0.0, n as f64, 2.0);
        let req = TileRequest { fixed_pose: Some(RigidTransform::IDENTITY), ..TileRequest::default() };
        let sol = tile_region(&Policy::Greedy, &ss, &region, &req).unwrap();
        assert!((sol.metrics.coverage - 1.0).abs() < 1e-9, "n {n}: {}", sol.metrics.coverage);
        assert_eq!(sol.metrics.holes, 0);
    }
}
