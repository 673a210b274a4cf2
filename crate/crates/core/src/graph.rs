//! Cropping a superset against a region and building the overlap/neighbor
//! graph with its feature matrices.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{overlap_area, region_contains, shared_boundary_length, BBox, Region, RigidTransform};
use crate::spatial::candidate_pairs;
use crate::tileset::{Placement, Superset};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GraphError {
    #[error("graph has no nodes")]
    EmptyGraph,
    #[error("nodes {0} and {1} touch but their relative pose is not in the pose table")]
    PoseTableIncomplete(usize, usize),
}

/// Superset indices of placements lying fully inside `region` after posing
/// the region by `pose` over the superset.
pub fn crop_superset(ss: &Superset, region: &Region, pose: &RigidTransform) -> Vec<usize> {
    let posed = region.transformed(pose);
    crop_posed(ss, &posed)
}

/// Like [`crop_superset`] for a region already in superset coordinates.
pub fn crop_posed(ss: &Superset, region: &Region) -> Vec<usize> {
    let tol = ss.tileset.tolerances().length;
    let window = region.bbox().expand(tol);
    ss.placements
        .iter()
        .enumerate()
        .filter(|(_, p)| window.contains_box(&p.polygon.bbox()) && region_contains(region, &p.polygon, tol))
        .map(|(i, _)| i)
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NeighborEdge {
    pub a: usize,
    pub b: usize,
    /// Shared boundary length.
    pub length: f64,
    /// Pose-table index of the ordered pair `(a, b)` with `a < b`.
    pub pose: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct AdjacencyGraph {
    pub nodes: Vec<Placement>,
    pub overlap_edges: Vec<(usize, usize)>,
    pub neighbor_edges: Vec<NeighborEdge>,
    /// Row-major `N × (N_t + 1)`: `[A_i | one-hot prototile]`.
    pub node_features: Vec<f32>,
    /// Row-major `|E_nbr| × (N_p + 1)`: `[L / L_max | one-hot pose]`.
    pub edge_features: Vec<f32>,
    pub n_types: usize,
    pub n_poses: usize,
    pub l_max: f64,
}

enum PairKind {
    Overlap,
    Neighbor(f64),
    Unrelated,
}

fn classify(ss: &Superset, a: &Placement, b: &Placement) -> PairKind {
    let tol = ss.tileset.tolerances();
    if overlap_area(&a.polygon, &b.polygon) >= tol.area {
        return PairKind::Overlap;
    }
    let shared = shared_boundary_length(&a.polygon, &b.polygon, tol.length);
    if shared >= tol.min_contact {
        PairKind::Neighbor(shared)
    } else {
        PairKind::Unrelated
    }
}

/// Builds the graph using a spatial hash to find candidate pairs.
pub fn build_graph(placements: &[Placement], ss: &Superset) -> Result<AdjacencyGraph, GraphError> {
    let tol = ss.tileset.tolerances().length;
    let boxes: Vec<BBox> = placements.iter().map(|p| p.polygon.bbox().expand(tol)).collect();
    let cell = ss.tileset.max_diameter().max(ss.tileset.unit());
    assemble(placements, ss, candidate_pairs(&boxes, cell))
}

/// All-pairs construction; slow, kept as a reference for tests.
pub fn build_graph_bruteforce(placements: &[Placement], ss: &Superset) -> Result<AdjacencyGraph, GraphError> {
    let n = placements.len();
    let pairs = (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).collect();
    assemble(placements, ss, pairs)
}

fn assemble(placements: &[Placement], ss: &Superset, pairs: Vec<(usize, usize)>) -> Result<AdjacencyGraph, GraphError> {
    let mut overlap_edges = Vec::new();
    let mut neighbor_edges = Vec::new();
    for (i, j) in pairs {
        match classify(ss, &placements[i], &placements[j]) {
            PairKind::Overlap => overlap_edges.push((i, j)),
            PairKind::Neighbor(length) => {
                let pose = ss
                    .lookup_pose(&placements[i], &placements[j])
                    .ok_or(GraphError::PoseTableIncomplete(i, j))?;
                neighbor_edges.push(NeighborEdge { a: i, b: j, length, pose });
            }
            PairKind::Unrelated => {}
        }
    }
    Ok(AdjacencyGraph::from_parts(
        placements.to_vec(),
        overlap_edges,
        neighbor_edges,
        ss.tileset.len(),
        ss.poses.len(),
        ss.tileset.max_perimeter(),
    ))
}

impl AdjacencyGraph {
    /// Assembles a graph and computes its feature matrices.
    pub fn from_parts(
        nodes: Vec<Placement>,
        overlap_edges: Vec<(usize, usize)>,
        neighbor_edges: Vec<NeighborEdge>,
        n_types: usize,
        n_poses: usize,
        l_max: f64,
    ) -> AdjacencyGraph {
        let vw = n_types + 1;
        let mut node_features = vec![0f32; nodes.len() * vw];
        for (i, p) in nodes.iter().enumerate() {
            node_features[i * vw] = p.area as f32;
            node_features[i * vw + 1 + p.prototile] = 1.0;
        }
        let ew = n_poses + 1;
        let mut edge_features = vec![0f32; neighbor_edges.len() * ew];
        for (k, e) in neighbor_edges.iter().enumerate() {
            edge_features[k * ew] = (e.length / l_max) as f32;
            edge_features[k * ew + 1 + e.pose] = 1.0;
        }
        AdjacencyGraph {
            nodes,
            overlap_edges,
            neighbor_edges,
            node_features,
            edge_features,
            n_types,
            n_poses,
            l_max,
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn node_dim(&self) -> usize {
        self.n_types + 1
    }

    pub fn edge_dim(&self) -> usize {
        self.n_poses + 1
    }

    pub fn mean_degree(&self) -> Result<f64, GraphError> {
        if self.nodes.is_empty() {
            return Err(GraphError::EmptyGraph);
        }
        Ok(2.0 * (self.overlap_edges.len() + self.neighbor_edges.len()) as f64 / self.nodes.len() as f64)
    }

    /// Normalized node areas `A_i`.
    pub fn areas(&self) -> Vec<f64> {
        self.nodes.iter().map(|p| p.area).collect()
    }

    pub fn overlap_adjacency(&self) -> Vec<Vec<usize>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for &(i, j) in &self.overlap_edges {
            adj[i].push(j);
            adj[j].push(i);
        }
        adj
    }

    /// Per node: `(other, shared length)` for every neighbor edge.
    pub fn neighbor_adjacency(&self) -> Vec<Vec<(usize, f64)>> {
        let mut adj = vec![Vec::new(); self.nodes.len()];
        for e in &self.neighbor_edges {
            adj[e.a].push((e.b, e.length));
            adj[e.b].push((e.a, e.length));
        }
        adj
    }

    /// The same graph with node `k` taken from old node `order[k]`. Edge
    /// lengths and pose labels are carried over unchanged.
    pub fn relabel(&self, order: &[usize]) -> AdjacencyGraph {
        assert_eq!(order.len(), self.nodes.len(), "relabel needs a permutation");
        let mut inv = vec![0usize; order.len()];
        for (new, &old) in order.iter().enumerate() {
            inv[old] = new;
        }
        let overlap_edges = self
            .overlap_edges
            .iter()
            .map(|&(i, j)| (inv[i].min(inv[j]), inv[i].max(inv[j])))
            .collect();
        let neighbor_edges = self
            .neighbor_edges
            .iter()
            .map(|e| NeighborEdge {
                a: inv[e.a].min(inv[e.b]),
                b: inv[e.a].max(inv[e.b]),
                ..*e
            })
            .collect();
        AdjacencyGraph::from_parts(
            order.iter().map(|&i| self.nodes[i].clone()).collect(),
            overlap_edges,
            neighbor_edges,
            self.n_types,
            self.n_poses,
            self.l_max,
        )
    }

    /// Subgraph on the nodes in `keep` (ascending), reusing computed edges.
    pub fn induced(&self, keep: &[usize]) -> AdjacencyGraph {
        let mut map = vec![usize::MAX; self.nodes.len()];
        for (new, &old) in keep.iter().enumerate() {
            map[old] = new;
        }
        let remap = |i: usize, j: usize| {
            let (a, b) = (map[i], map[j]);
            (a != usize::MAX && b != usize::MAX).then(|| (a.min(b), a.max(b)))
        };
        let overlap_edges = self.overlap_edges.iter().filter_map(|&(i, j)| remap(i, j)).collect();
        let neighbor_edges = self
            .neighbor_edges
            .iter()
            .filter_map(|e| {
                remap(e.a, e.b).map(|(a, b)| NeighborEdge {
                    a,
                    b,
                    length: e.length,
                    pose: e.pose,
                })
            })
            .collect();
        AdjacencyGraph::from_parts(
            keep.iter().map(|&i| self.nodes[i].clone()).collect(),
            overlap_edges,
            neighbor_edges,
            self.n_types,
            self.n_poses,
            self.l_max,
        )
    }
}
