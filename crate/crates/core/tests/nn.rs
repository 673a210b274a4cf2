use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tiling_core::geom::{Point, Polygon, Region, RigidTransform};
use tiling_core::graph::{build_graph, crop_superset, AdjacencyGraph};
use tiling_core::loss::{LossInputs, LossWeights};
use tiling_core::nn::{GraphInputs, Model, ModelConfig};
use tiling_core::tileset::{build_superset, builtin, Superset, TileSet};

fn superset() -> Superset {
    let ts = Arc::new(TileSet::from_descriptor(&builtin::square_domino()).unwrap());
    build_superset(ts, 5).unwrap()
}

/// Crop of a random small rectangle, at most `max_nodes` nodes.
fn random_graph(ss: &Superset, rng: &mut ChaCha8Rng, max_nodes: usize) -> AdjacencyGraph {
    loop {
        let w = rng.gen_range(1.5..4.0);
        let h = rng.gen_range(1.5..4.0);
        let min = Point::new(rng.gen_range(-3.0..0.0), rng.gen_range(-3.0..0.0));
        let region = Region::from(Polygon::rect(min, w, h));
        let pose = RigidTransform::rotation_about(rng.gen_range(0.0..0.3), region.outer().centroid());
        let idx = crop_superset(ss, &region, &pose);
        if idx.len() >= 3 && idx.len() <= max_nodes {
            let nodes: Vec<_> = idx.iter().map(|&i| ss.placements[i].clone()).collect();
            return build_graph(&nodes, ss).unwrap();
        }
    }
}

#[test]
fn gradients_match_small_step_differences() {
    let ss = superset();
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let weights = LossWeights::default();
    let (mut probed, mut passed) = (0usize, 0usize);
    for gi in 0..20 {
        let g = random_graph(&ss, &mut rng, 30);
        let cfg = ModelConfig { seed: gi, ..ModelConfig::new(g.n_types, g.n_poses) };
        let model = Model::new(cfg);
        let li = LossInputs::from_graph(&g);
        let eval = model.loss_and_gradients(&model.inputs(&g).unwrap(), &li, &weights).unwrap();
        let m64: Model<f64> = model.cast();
        let inp64: GraphInputs<f64> = m64.inputs(&g).unwrap();
        let eval64 = m64.loss_and_gradients(&inp64, &li, &weights).unwrap();
        for _ in 0..25 {
            let p = rng.gen_range(0..model.params.len());
            let j = rng.gen_range(0..model.params[p].data.len());
            let h = 1e-6;
            let mut plus = m64.clone();
            plus.params[p].data[j] += h;
            let mut minus = m64.clone();
            minus.params[p].data[j] -= h;
            let fd = (plus.loss(&inp64, &li, &weights).unwrap().total - minus.loss(&inp64, &li, &weights).unwrap().total) / (2.0 * h);
            let an = eval64.grads[p].data[j];
            let single = eval.grads[p].data[j] as f64;
            probed += 1;
            if (an - fd).abs() <= 1e-4 * an.abs() + 1e-8 && (single - an).abs() <= 1e-3 * an.abs() + 1e-9 {
                passed += 1;
            } else {
                eprintln!("graph {gi} param {p}[{j}]: analytic {an:e} single {single:e} fd {fd:e}");
            }
        }
    }
    let rate = passed as f64 / probed as f64;
    println!("gradient check: {passed}/{probed} = {rate:.4}");
    assert!(rate >= 0.995, "pass rate {rate}");
}

#[test]
fn forward_is_permutation_equivariant() {
    let ss = superset();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..5 {
        let g = random_graph(&ss, &mut rng, 60);
        let model = Model::new(ModelConfig::new(g.n_types, g.n_poses));
        let x = model.forward_graph(&g).unwrap();
        let mut perm: Vec<usize> = (0..g.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(&mut rng);
        let pg = g.relabel(&perm);
        let px = model.forward_graph(&pg).unwrap();
        for (new, &old) in perm.iter().enumerate() {
            assert_eq!(px[new].to_bits(), x[old].to_bits());
        }
    }
}

#[test]
fn lone_node_output_is_finite() {
    let ss = superset();
    let g = build_graph(&ss.placements[..1], &ss).unwrap();
    let model = Model::new(ModelConfig::new(g.n_types, g.n_poses));
    let x = model.forward_graph(&g).unwrap();
    assert_eq!(x.len(), 1);
    assert!(x[0].is_finite() && x[0] > 0.0 && x[0] < 1.0);
}
