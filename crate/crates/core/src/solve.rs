//! Turning candidate graphs into tilings: crop search, the probabilistic
//! round-based selection loop, baseline policies, an exact branch-and-bound
//! oracle, and solution metrics.

use std::cmp::Ordering;
use std::sync::Arc;
use std::time::Instant;

use geo::{Area, BooleanOps, LineString, MultiPolygon};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::geom::{Point, Polygon, Region, RigidTransform};
use crate::graph::{build_graph, crop_posed, AdjacencyGraph, GraphError};
use crate::loss::{evaluate, LossInputs, LossWeights};
use crate::nn::{Model, NnError};
use crate::tileset::{Placement, Superset};

pub const DEFAULT_ROUND_CAP: usize = 50;
pub const DEFAULT_EXACT_CAP: usize = 40;
pub const CROP_ROTATIONS: usize = 6;
pub const CROP_TRANSLATIONS: usize = 9;

#[derive(Debug, Error)]
pub enum SolveError {
    #[error("no crop pose leaves any candidate inside the region")]
    NoCandidates,
    #[error("K must lie in 1..=54, got {0}")]
    BadCropCount(usize),
    #[error("runs must be at least 1")]
    NoRuns,
    #[error("graph has {0} nodes, above the exact-solver cap {1}")]
    TooLargeForExact(usize, usize),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Nn(#[from] NnError),
}

/// Where node probabilities come from.
#[derive(Clone, Debug)]
pub enum Policy {
    Gnn(Arc<Model>),
    Random,
    Greedy,
}

impl Policy {
    pub fn name(&self) -> &'static str {
        match self {
            Policy::Gnn(_) => "gnn",
            Policy::Random => "random",
            Policy::Greedy => "greedy",
        }
    }
}

/// How scanned candidates are accepted.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Acceptance {
    /// Accept when `e^(p − 1)` exceeds a uniform draw.
    #[default]
    Stochastic,
    /// Accept every scanned candidate.
    Always,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SolveOptions {
    pub round_cap: usize,
    pub acceptance: Acceptance,
    pub weights: LossWeights,
}

impl Default for SolveOptions {
    fn default() -> Self {
        SolveOptions {
            round_cap: DEFAULT_ROUND_CAP,
            acceptance: Acceptance::Stochastic,
            weights: LossWeights::default(),
        }
    }
}

/// One posed placement of the region over the superset and the candidates
/// it keeps.
#[derive(Clone, Debug)]
pub struct Crop {
    pub pose: RigidTransform,
    /// The region in superset coordinates.
    pub region: Region,
    /// Superset indices, ascending.
    pub indices: Vec<usize>,
    pub area: f64,
}

impl Crop {
    pub fn posed(ss: &Superset, region: &Region, pose: RigidTransform) -> Crop {
        let posed = region.transformed(&pose);
        let indices = crop_posed(ss, &posed);
        let area = indices.iter().map(|&i| ss.placements[i].polygon.area()).sum();
        Crop {
            pose,
            region: posed,
            indices,
            area,
        }
    }

    pub fn placements(&self, ss: &Superset) -> Vec<Placement> {
        self.indices.iter().map(|&i| ss.placements[i].clone()).collect()
    }
}

/// Samples 6 rotations in `[0, θ)` and 9 translations in `[0, Δx) × [0, Δy)`,
/// crops all 54 combinations and returns the `k` with the largest total tile
/// area. The first rotation and translation are fixed at zero so the region
/// as given is always among the candidates.
pub fn find_crops(ss: &Superset, region: &Region, k: usize, rng: &mut impl Rng) -> Result<Vec<Crop>, SolveError> {
    if !(1..=CROP_ROTATIONS * CROP_TRANSLATIONS).contains(&k) {
        return Err(SolveError::BadCropCount(k));
    }
    let sym = ss.tileset.symmetry;
    let mut rotations = vec![0.0];
    rotations.extend((1..CROP_ROTATIONS).map(|_| rng.gen::<f64>() * sym.theta));
    let mut shifts = vec![Point::ORIGIN];
    shifts.extend((1..CROP_TRANSLATIONS).map(|_| Point::new(rng.gen::<f64>() * sym.dx, rng.gen::<f64>() * sym.dy)));
    let center = region.outer().centroid();
    let poses: Vec<RigidTransform> = rotations
        .iter()
        .flat_map(|&r| {
            shifts
                .iter()
                .map(move |&t| RigidTransform::translation(t).compose(&RigidTransform::rotation_about(r, center)))
        })
        .collect();
    let mut crops: Vec<Crop> = poses.par_iter().map(|&p| Crop::posed(ss, region, p)).collect();
    if crops.iter().all(|c| c.indices.is_empty()) {
        return Err(SolveError::NoCandidates);
    }
    // stable sort keeps sampling order among equal areas
    crops.sort_by(|a, b| b.area.total_cmp(&a.area));
    crops.truncate(k);
    Ok(crops)
}

/// Outcome of one selection run on one crop graph.
#[derive(Clone, Debug, PartialEq)]
pub struct RunOutcome {
    /// Graph node indices, in selection order.
    pub selected: Vec<usize>,
    pub rounds: usize,
    pub round_limit: bool,
}

fn overlaps_any(adj: &[Vec<usize>], chosen: &[bool], i: usize) -> bool {
    chosen[i] || adj[i].iter().any(|&k| chosen[k])
}

/// Round-based selection: score the remaining graph, fold the scores into a
/// running geometric mean, scan in descending order until the first
/// candidate that overlaps the partial solution, accept each scanned
/// candidate with probability `e^(p − 1)`, prune, repeat.
///
/// `on_round` receives the round number after each round.
pub fn run_algorithm1(
    policy: &Policy,
    g: &AdjacencyGraph,
    region: &Region,
    opts: &SolveOptions,
    rng: &mut impl Rng,
    on_round: &mut dyn FnMut(usize),
) -> Result<RunOutcome, SolveError> {
    if g.is_empty() {
        return Err(GraphError::EmptyGraph.into());
    }
    if let Policy::Greedy = policy {
        let selected = run_greedy(g, region);
        on_round(1);
        return Ok(RunOutcome {
            selected,
            rounds: 1,
            round_limit: false,
        });
    }
    let n = g.len();
    let adj = g.overlap_adjacency();
    let mut chosen = vec![false; n];
    let mut selected = Vec::new();
    let mut log_p = vec![0.0f64; n];
    let mut alive: Vec<usize> = (0..n).collect();
    let mut k = 0;
    while !alive.is_empty() {
        if k == opts.round_cap {
            return Ok(RunOutcome {
                selected,
                rounds: k,
                round_limit: true,
            });
        }
        k += 1;
        let sub = g.induced(&alive);
        let x: Vec<f64> = match policy {
            Policy::Gnn(model) => model.forward_graph(&sub)?.into_iter().map(f64::from).collect(),
            Policy::Random => (0..alive.len()).map(|_| rng.gen::<f64>()).collect(),
            Policy::Greedy => unreachable!(),
        };
        let kf = k as f64;
        for (&i, &xi) in alive.iter().zip(&x) {
            log_p[i] = if k == 1 { xi.ln() } else { ((kf - 1.0) * log_p[i] + xi.ln()) / kf };
        }
        let mut order = alive.clone();
        order.sort_by(|&a, &b| log_p[b].total_cmp(&log_p[a]).then(a.cmp(&b)));
        for &j in &order {
            if overlaps_any(&adj, &chosen, j) {
                break;
            }
            let accept = match opts.acceptance {
                Acceptance::Always => true,
                Acceptance::Stochastic => (log_p[j].exp() - 1.0).exp() > rng.gen::<f64>(),
            };
            if accept {
                chosen[j] = true;
                selected.push(j);
            }
        }
        alive.retain(|&i| !overlaps_any(&adj, &chosen, i));
        on_round(k);
    }
    Ok(RunOutcome {
        selected,
        rounds: k,
        round_limit: false,
    })
}

/// Greedy scores: contact length with the partial solution plus contact with
/// the region boundary, mapped to `(0, 1]` so that zero contact is the
/// strictly lowest class.
pub fn greedy_policy(g: &AdjacencyGraph, region: &Region, partial: &[usize]) -> Vec<f64> {
    let contact = greedy_contacts(g, region, partial);
    let offset = 1e-3 * g.l_max;
    let top = contact.iter().cloned().fold(0.0, f64::max);
    contact.iter().map(|c| (c + offset) / (top + offset)).collect()
}

fn greedy_contacts(g: &AdjacencyGraph, region: &Region, partial: &[usize]) -> Vec<f64> {
    let eps = contact_eps(g);
    let mut contact: Vec<f64> = g.nodes.iter().map(|p| region.boundary_contact(&p.polygon, eps)).collect();
    let nbr = g.neighbor_adjacency();
    for &s in partial {
        for &(k, l) in &nbr[s] {
            contact[k] += l;
        }
    }
    contact
}

fn contact_eps(g: &AdjacencyGraph) -> f64 {
    let unit = g.nodes.iter().map(|p| p.polygon.shortest_edge()).fold(f64::INFINITY, f64::min);
    1e-6 * unit
}

/// Repeatedly takes the valid candidate with the longest contact against the
/// partial solution and region boundary; ties go to the lowest node index.
pub fn run_greedy(g: &AdjacencyGraph, region: &Region) -> Vec<usize> {
    let n = g.len();
    let adj = g.overlap_adjacency();
    let nbr = g.neighbor_adjacency();
    let mut contact = greedy_contacts(g, region, &[]);
    let mut blocked = vec![false; n];
    let mut selected = Vec::new();
    loop {
        let best = (0..n)
            .filter(|&i| !blocked[i])
            .max_by(|&a, &b| contact[a].total_cmp(&contact[b]).then(b.cmp(&a)));
        let Some(i) = best else { break };
        selected.push(i);
        blocked[i] = true;
        for &k in &adj[i] {
            blocked[k] = true;
        }
        for &(k, l) in &nbr[i] {
            contact[k] += l;
        }
    }
    selected
}

/// `Σ A_i x_i + λ Σ_nbr x_i x_k L_ik / L_max` for a binary selection.
pub fn objective(g: &AdjacencyGraph, selected: &[usize], lambda: f64) -> f64 {
    let mut on = vec![false; g.len()];
    for &i in selected {
        on[i] = true;
    }
    let area: f64 = selected.iter().map(|&i| g.nodes[i].area).sum();
    let bonus: f64 = g
        .neighbor_edges
        .iter()
        .filter(|e| on[e.a] && on[e.b])
        .map(|e| e.length / g.l_max)
        .sum();
    area + lambda * bonus
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExactResult {
    /// Graph node indices, ascending.
    pub selected: Vec<usize>,
    pub objective: f64,
    /// Upper bound on the optimum; equals `objective` when proven optimal.
    pub bound: f64,
    pub optimal: bool,
    pub explored: u64,
}

struct Exact<'a> {
    g: &'a AdjacencyGraph,
    lambda: f64,
    order: Vec<usize>,
    adj: Vec<Vec<usize>>,
    nbr: Vec<Vec<(usize, f64)>>,
    // 0 undecided, 1 in, 2 out
    state: Vec<u8>,
    best: f64,
    best_set: Vec<usize>,
    explored: u64,
    budget: u64,
    open_bound: f64,
}

impl Exact<'_> {
    fn bound(&self, value: f64) -> f64 {
        let mut b = value;
        for (i, &s) in self.state.iter().enumerate() {
            if s == 0 {
                b += self.g.nodes[i].area;
            }
        }
        for e in &self.g.neighbor_edges {
            let (sa, sb) = (self.state[e.a], self.state[e.b]);
            if sa != 2 && sb != 2 && !(sa == 1 && sb == 1) {
                b += self.lambda * e.length / self.g.l_max;
            }
        }
        b
    }

    fn search(&mut self, pos: usize, value: f64) {
        self.explored += 1;
        let bound = self.bound(value);
        if bound <= self.best + 1e-12 {
            return;
        }
        if self.explored > self.budget {
            self.open_bound = self.open_bound.max(bound);
            return;
        }
        let Some(offset) = self.order[pos..].iter().position(|&i| self.state[i] == 0) else {
            self.best = value;
            self.best_set = (0..self.state.len()).filter(|&i| self.state[i] == 1).collect();
            return;
        };
        let pos = pos + offset;
        let i = self.order[pos];

        let gain = self.g.nodes[i].area
            + self.nbr[i]
                .iter()
                .filter(|&&(k, _)| self.state[k] == 1)
                .map(|&(_, l)| self.lambda * l / self.g.l_max)
                .sum::<f64>();
        let forced: Vec<usize> = self.adj[i].iter().copied().filter(|&k| self.state[k] == 0).collect();
        self.state[i] = 1;
        for &k in &forced {
            self.state[k] = 2;
        }
        self.search(pos + 1, value + gain);
        for &k in &forced {
            self.state[k] = 0;
        }
        self.state[i] = 2;
        self.search(pos + 1, value);
        self.state[i] = 0;
    }
}

/// Branch-and-bound maximization of [`objective`] subject to no overlap edge
/// having both ends selected. Branches on nodes in order of decreasing
/// overlap degree; the bound adds every still-selectable area and contact
/// bonus. Stops after `budget` search nodes and reports the gap.
pub fn exact_solve(g: &AdjacencyGraph, lambda: f64, budget: Option<u64>) -> Result<ExactResult, SolveError> {
    if budget.is_none() && g.len() > DEFAULT_EXACT_CAP {
        return Err(SolveError::TooLargeForExact(g.len(), DEFAULT_EXACT_CAP));
    }
    let adj = g.overlap_adjacency();
    let mut order: Vec<usize> = (0..g.len()).collect();
    order.sort_by(|&a, &b| adj[b].len().cmp(&adj[a].len()).then(a.cmp(&b)));
    let mut ex = Exact {
        g,
        lambda,
        order,
        adj,
        nbr: g.neighbor_adjacency(),
        state: vec![0; g.len()],
        best: f64::NEG_INFINITY,
        best_set: Vec::new(),
        explored: 0,
        budget: budget.unwrap_or(u64::MAX),
        open_bound: f64::NEG_INFINITY,
    };
    ex.search(0, 0.0);
    let optimal = ex.open_bound <= ex.best + 1e-12;
    Ok(ExactResult {
        objective: ex.best,
        bound: if optimal { ex.best } else { ex.open_bound },
        selected: ex.best_set,
        optimal,
        explored: ex.explored,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolutionMetrics {
    /// Selected tile area over the area of the union of all candidates.
    pub coverage: f64,
    pub holes: usize,
    pub contact_length: f64,
    pub loss: f64,
    pub rounds: usize,
    pub round_limit: bool,
    /// Excluded from documents; varies between runs.
    #[serde(skip)]
    pub wall_ms: f64,
}

#[derive(Clone, Debug)]
pub struct Solution {
    pub selected: Vec<Placement>,
    pub metrics: SolutionMetrics,
    pub crop_index: usize,
    pub run_index: usize,
    pub pose: RigidTransform,
    /// The region in superset coordinates.
    pub region: Region,
    pub seed: u64,
}

fn to_geo(p: &Polygon) -> geo::Polygon<f64> {
    let ring: Vec<(f64, f64)> = p.vertices().iter().map(|v| (v.x, v.y)).collect();
    geo::Polygon::new(LineString::from(ring), vec![])
}

/// Union of polygons as a geo multipolygon.
pub fn union_of(polys: &[&Polygon]) -> MultiPolygon<f64> {
    let gs: Vec<geo::Polygon<f64>> = polys.iter().map(|p| to_geo(p)).collect();
    geo::unary_union(gs.iter())
}

/// Coverage and hole count of `selected` against the union of `candidates`.
/// Holes are the connected components of the candidate union left untiled;
/// an empty selection has no holes.
pub fn coverage_and_holes(selected: &[&Polygon], candidates: &MultiPolygon<f64>, eps_area: f64) -> (f64, usize) {
    let total = candidates.unsigned_area();
    if total <= 0.0 {
        return (0.0, 0);
    }
    let covered: f64 = selected.iter().map(|p| p.area()).sum();
    if selected.is_empty() {
        return (0.0, 0);
    }
    let deficit = candidates.difference(&union_of(selected));
    let holes = deficit.0.iter().filter(|p| p.unsigned_area() > eps_area).count();
    (covered / total, holes)
}

/// Metrics of a selection on a crop graph. `candidates` is the union of the
/// crop's candidate tiles.
pub fn evaluate_solution(
    g: &AdjacencyGraph,
    selected: &[usize],
    candidates: &MultiPolygon<f64>,
    weights: &LossWeights,
) -> SolutionMetrics {
    let eps_area = 1e-8 * g.nodes.iter().map(|p| p.polygon.shortest_edge()).fold(f64::INFINITY, f64::min).powi(2);
    let polys: Vec<&Polygon> = selected.iter().map(|&i| &g.nodes[i].polygon).collect();
    let (coverage, holes) = coverage_and_holes(&polys, candidates, eps_area.max(1e-12));
    let mut x = vec![0.0; g.len()];
    for &i in selected {
        x[i] = 1.0;
    }
    let contact_length = g
        .neighbor_edges
        .iter()
        .filter(|e| x[e.a] == 1.0 && x[e.b] == 1.0)
        .map(|e| e.length)
        .sum();
    let loss = if g.is_empty() {
        f64::NAN
    } else {
        evaluate(&x, &LossInputs::from_graph(g), weights).map(|(t, _)| t.total).unwrap_or(f64::NAN)
    };
    SolutionMetrics {
        coverage,
        holes,
        contact_length,
        loss,
        rounds: 0,
        round_limit: false,
        wall_ms: 0.0,
    }
}

/// Seed of the private generator for run `run` on crop `crop`.
pub fn job_seed(master: u64, crop: usize, run: usize) -> [u8; 32] {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update((crop as u64).to_le_bytes());
    h.update((run as u64).to_le_bytes());
    h.finalize().into()
}

/// Progress report after each selection round of any job, and once more
/// when the job finishes with its coverage.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub crop: usize,
    pub run: usize,
    pub round: usize,
    pub coverage: Option<f64>,
}

/// Solution order: coverage, then total contact length, then the earlier
/// (crop, run) pair.
fn better(a: &Solution, b: &Solution) -> bool {
    match a.metrics.coverage.total_cmp(&b.metrics.coverage) {
        Ordering::Greater => true,
        Ordering::Less => false,
        Ordering::Equal => match a.metrics.contact_length.total_cmp(&b.metrics.contact_length) {
            Ordering::Greater => true,
            Ordering::Less => false,
            Ordering::Equal => (a.crop_index, a.run_index) < (b.crop_index, b.run_index),
        },
    }
}

#[derive(Clone, Debug)]
pub struct TileRequest {
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
    pub options: SolveOptions,
    /// Use the region exactly as posed instead of searching crop poses.
    pub fixed_pose: Option<RigidTransform>,
}

impl Default for TileRequest {
    fn default() -> Self {
        TileRequest {
            k: 1,
            runs: 1,
            seed: 0,
            options: SolveOptions::default(),
            fixed_pose: None,
        }
    }
}

/// Best solution over `k` crops times `runs` repetitions. Jobs run in
/// parallel, each with a generator seeded from `(seed, crop, run)`.
pub fn tile_region(policy: &Policy, ss: &Superset, region: &Region, req: &TileRequest) -> Result<Solution, SolveError> {
    tile_region_with(policy, ss, region, req, &|_| {})
}

pub fn tile_region_with(
    policy: &Policy,
    ss: &Superset,
    region: &Region,
    req: &TileRequest,
    progress: &(dyn Fn(Progress) + Sync),
) -> Result<Solution, SolveError> {
    if req.runs == 0 {
        return Err(SolveError::NoRuns);
    }
    if let Policy::Gnn(m) = policy {
        m.check_dims(ss.tileset.len(), ss.poses.len())?;
    }
    let crops = match req.fixed_pose {
        Some(pose) => {
            let c = Crop::posed(ss, region, pose);
            if c.indices.is_empty() {
                return Err(SolveError::NoCandidates);
            }
            vec![c]
        }
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(req.seed);
            find_crops(ss, region, req.k, &mut rng)?
        }
    };
    let prepared: Vec<(AdjacencyGraph, MultiPolygon<f64>)> = crops
        .par_iter()
        .filter(|c| !c.indices.is_empty())
        .map(|c| {
            let g = build_graph(&c.placements(ss), ss)?;
            let polys: Vec<&Polygon> = g.nodes.iter().map(|p| &p.polygon).collect();
            let u = union_of(&polys);
            Ok((g, u))
        })
        .collect::<Result<_, SolveError>>()?;
    let crops: Vec<&Crop> = crops.iter().filter(|c| !c.indices.is_empty()).collect();
    let jobs: Vec<(usize, usize)> = (0..crops.len()).flat_map(|c| (0..req.runs).map(move |r| (c, r))).collect();
    let solutions: Vec<Solution> = jobs
        .par_iter()
        .map(|&(ci, run)| {
            let (g, union) = &prepared[ci];
            let crop = crops[ci];
            let mut rng = ChaCha8Rng::from_seed(job_seed(req.seed, ci, run));
            let start = Instant::now();
            let out = run_algorithm1(policy, g, &crop.region, &req.options, &mut rng, &mut |round| {
                progress(Progress {
                    crop: ci,
                    run,
                    round,
                    coverage: None,
                })
            })?;
            let wall_ms = start.elapsed().as_secs_f64() * 1e3;
            let mut metrics = evaluate_solution(g, &out.selected, union, &req.options.weights);
            metrics.rounds = out.rounds;
            metrics.round_limit = out.round_limit;
            metrics.wall_ms = wall_ms;
            progress(Progress {
                crop: ci,
                run,
                round: out.rounds,
                coverage: Some(metrics.coverage),
            });
            let mut sel = out.selected;
            sel.sort_unstable();
            Ok(Solution {
                selected: sel.iter().map(|&i| g.nodes[i].clone()).collect(),
                metrics,
                crop_index: ci,
                run_index: run,
                pose: crop.pose,
                region: crop.region.clone(),
                seed: req.seed,
            })
        })
        .collect::<Result<_, SolveError>>()?;
    let total_ms: f64 = solutions.iter().map(|s| s.metrics.wall_ms).sum();
    let mut best = solutions.into_iter().reduce(|a, b| if better(&b, &a) { b } else { a }).expect("at least one job");
    best.metrics.wall_ms = total_ms;
    Ok(best)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geom::Polygon;
    use crate::graph::NeighborEdge;
    use crate::tileset::{build_superset, builtin, TileSet};

    fn ss(desc: crate::tileset::TileSetDescriptor, rings: u32) -> Superset {
        build_superset(Arc::new(TileSet::from_descriptor(&desc).unwrap()), rings).unwrap()
    }

    fn rect_region(x: f64, y: f64, w: f64, h: f64) -> Region {
        Region::from(Polygon::rect(Point::new(x, y), w, h))
    }

    fn strip_graph(ss: &Superset, n: usize) -> (AdjacencyGraph, Region) {
        let region = rect_region(0.0, 0.0, n as f64, 2.0);
        let c = Crop::posed(ss, &region, RigidTransform::IDENTITY);
        (build_graph(&c.placements(ss), ss).unwrap(), c.region)
    }

    #[test]
    fn single_node_single_round() {
        let s = ss(builtin::square(), 2);
        let g = build_graph(&s.placements[..1], &s).unwrap();
        let opts = SolveOptions {
            acceptance: Acceptance::Always,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_algorithm1(&Policy::Random, &g, &rect_region(-0.5, -0.5, 1.0, 1.0), &opts, &mut rng, &mut |_| {})
            .unwrap();
        assert_eq!(out.selected, vec![0]);
        assert_eq!(out.rounds, 1);
    }

    #[test]
    fn round_cap_reports_limit() {
        let s = ss(builtin::square(), 2);
        let g = build_graph(&s.placements[..3], &s).unwrap();
        let opts = SolveOptions {
            round_cap: 0,
            ..Default::default()
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = run_algorithm1(&Policy::Random, &g, &rect_region(-5.0, -5.0, 10.0, 10.0), &opts, &mut rng, &mut |_| {})
            .unwrap();
        assert!(out.round_limit);
        assert!(out.selected.is_empty());
    }

    #[test]
    fn greedy_prefers_boundary_and_breaks_ties_by_index() {
        let s = ss(builtin::square(), 3);
        let region = rect_region(-1.0, 0.0, 3.0, 1.0);
        let c = Crop::posed(&s, &region, RigidTransform::IDENTITY);
        let g = build_graph(&c.placements(&s), &s).unwrap();
        assert_eq!(g.len(), 3);
        let x = greedy_policy(&g, &c.region, &[]);
        let middle = g.nodes.iter().position(|p| p.polygon.centroid().dist(Point::new(0.5, 0.5)) < 1e-9).unwrap();
        for (i, &xi) in x.iter().enumerate() {
            assert!(xi > 0.0 && xi <= 1.0);
            if i != middle {
                assert!(xi > x[middle]);
            }
        }
        let ends: Vec<usize> = (0..3).filter(|&i| i != middle).collect();
        assert_eq!(x[ends[0]], x[ends[1]]);
        assert_eq!(run_greedy(&g, &c.region)[0], ends[0]);
    }

    #[test]
    fn zero_contact_is_lowest_class() {
        let s = ss(builtin::square(), 3);
        let region = rect_region(-2.0, -2.0, 5.0, 5.0);
        let c = Crop::posed(&s, &region, RigidTransform::IDENTITY);
        let g = build_graph(&c.placements(&s), &s).unwrap();
        let x = greedy_policy(&g, &c.region, &[]);
        let lowest = x.iter().cloned().fold(f64::INFINITY, f64::min);
        let centre = g.nodes.iter().position(|p| p.polygon.centroid().dist(Point::new(0.5, 0.5)) < 1e-9).unwrap();
        assert_eq!(x[centre], lowest);
        assert!(lowest > 0.0);
    }

    #[test]
    fn exact_small_cases() {
        let s = ss(builtin::square(), 2);
        let p = &s.placements[0];
        let g = AdjacencyGraph::from_parts(vec![p.clone(), p.clone()], vec![(0, 1)], vec![], 1, 1, 4.0);
        let r = exact_solve(&g, 0.02, None).unwrap();
        assert_eq!(r.selected.len(), 1);
        assert!(r.optimal);
        let g = AdjacencyGraph::from_parts(vec![p.clone(); 4], vec![], vec![], 1, 1, 4.0);
        assert_eq!(exact_solve(&g, 0.02, None).unwrap().selected, vec![0, 1, 2, 3]);
    }

    #[test]
    fn exact_counts_contact_bonus() {
        let s = ss(builtin::square(), 2);
        let p = &s.placements[0];
        let e = |a, b| NeighborEdge { a, b, length: 1.0, pose: 0 };
        // 0-1 overlap; only 1 touches 2
        let g = AdjacencyGraph::from_parts(vec![p.clone(); 3], vec![(0, 1)], vec![e(1, 2)], 1, 1, 4.0);
        let r = exact_solve(&g, 0.02, None).unwrap();
        assert_eq!(r.selected, vec![1, 2]);
        assert!((r.objective - (2.0 + 0.02 * 0.25)).abs() < 1e-12);
    }

    #[test]
    fn exact_budget_reports_gap() {
        let s = ss(builtin::square_domino(), 3);
        let region = rect_region(-2.5, -2.5, 5.0, 5.0);
        let c = Crop::posed(&s, &region, RigidTransform::IDENTITY);
        let g = build_graph(&c.placements(&s), &s).unwrap();
        let r = exact_solve(&g, 0.02, Some(10)).unwrap();
        assert!(!r.optimal);
        assert!(r.bound >= r.objective);
    }

    #[test]
    fn perfect_policy_on_domino_strip_tiles_it() {
        let s = ss(builtin::domino(), 6);
        for n in 2..=8 {
            let (g, region) = strip_graph(&s, n);
            // analytic perfect tiling: vertical dominoes in every column
            let perfect: Vec<bool> = g
                .nodes
                .iter()
                .map(|p| {
                    let b = p.polygon.bbox();
                    (b.height() - 2.0).abs() < 1e-9
                })
                .collect();
            assert_eq!(perfect.iter().filter(|&&v| v).count(), n);
            let scores: Vec<f64> = perfect.iter().map(|&v| if v { 1.0 } else { 0.0 }).collect();
            let sel = select_with_scores(&g, &scores);
            let polys: Vec<&Polygon> = g.nodes.iter().map(|p| &p.polygon).collect();
            let m = evaluate_solution(&g, &sel, &union_of(&polys), &LossWeights::default());
            assert!((m.coverage - 1.0).abs() < 1e-9, "n={n} coverage {}", m.coverage);
            assert_eq!(m.holes, 0);
            let _ = region;
        }
    }

    // one deterministic-accept round with fixed scores
    fn select_with_scores(g: &AdjacencyGraph, scores: &[f64]) -> Vec<usize> {
        let adj = g.overlap_adjacency();
        let mut chosen = vec![false; g.len()];
        let mut order: Vec<usize> = (0..g.len()).collect();
        order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
        let mut sel = Vec::new();
        for j in order {
            if overlaps_any(&adj, &chosen, j) {
                break;
            }
            chosen[j] = true;
            sel.push(j);
        }
        sel
    }

    #[test]
    fn metrics_conventions() {
        let s = ss(builtin::domino(), 6);
        let (g, _) = strip_graph(&s, 6);
        let polys: Vec<&Polygon> = g.nodes.iter().map(|p| &p.polygon).collect();
        let union = union_of(&polys);
        let empty = evaluate_solution(&g, &[], &union, &LossWeights::default());
        assert_eq!((empty.coverage, empty.holes), (0.0, 0));
        let verticals: Vec<usize> = (0..g.len()).filter(|&i| (g.nodes[i].polygon.bbox().height() - 2.0).abs() < 1e-9).collect();
        let full = evaluate_solution(&g, &verticals, &union, &LossWeights::default());
        assert!((full.coverage - 1.0).abs() < 1e-9);
        assert_eq!(full.holes, 0);
        let mut missing = verticals.clone();
        missing.sort_by(|&a, &b| g.nodes[a].polygon.centroid().x.total_cmp(&g.nodes[b].polygon.centroid().x));
        missing.remove(2);
        let one = evaluate_solution(&g, &missing, &union, &LossWeights::default());
        assert_eq!(one.holes, 1);
        assert!((one.coverage - 10.0 / 12.0).abs() < 1e-9);
    }

    #[test]
    fn find_crops_contract() {
        let s = ss(builtin::square(), 4);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let hull = Region::from(Polygon::rect(Point::new(-10.0, -10.0), 20.0, 20.0));
        let crops = find_crops(&s, &hull, 1, &mut rng).unwrap();
        assert_eq!(crops[0].indices.len(), s.len());
        let region = rect_region(-2.2, -1.7, 4.4, 3.3);
        let crops = find_crops(&s, &region, 54, &mut rng).unwrap();
        assert!(crops.windows(2).all(|w| w[0].area >= w[1].area));
        let tiny = rect_region(0.0, 0.0, 0.1, 0.1);
        assert!(matches!(find_crops(&s, &tiny, 3, &mut rng), Err(SolveError::NoCandidates)));
        assert!(matches!(find_crops(&s, &region, 0, &mut rng), Err(SolveError::BadCropCount(0))));
    }

    #[test]
    fn tile_region_is_reproducible() {
        let s = ss(builtin::square_domino(), 4);
        let region = rect_region(-2.3, -1.9, 4.6, 3.7);
        let req = TileRequest {
            k: 3,
            runs: 4,
            seed: 11,
            ..Default::default()
        };
        let a = tile_region(&Policy::Random, &s, &region, &req).unwrap();
        let b = tile_region(&Policy::Random, &s, &region, &req).unwrap();
        assert_eq!(a.selected, b.selected);
        assert_eq!((a.crop_index, a.run_index), (b.crop_index, b.run_index));
    }

    #[test]
    fn single_job_matches_direct_run() {
        let s = ss(builtin::square_domino(), 4);
        let region = rect_region(-2.3, -1.9, 4.6, 3.7);
        let req = TileRequest {
            k: 1,
            runs: 1,
            seed: 5,
            ..Default::default()
        };
        let sol = tile_region(&Policy::Random, &s, &region, &req).unwrap();
        let crop = &find_crops(&s, &region, 1, &mut ChaCha8Rng::seed_from_u64(5)).unwrap()[0];
        let g = build_graph(&crop.placements(&s), &s).unwrap();
        let mut rng = ChaCha8Rng::from_seed(job_seed(5, 0, 0));
        let mut out = run_algorithm1(&Policy::Random, &g, &crop.region, &SolveOptions::default(), &mut rng, &mut |_| {}).unwrap();
        out.selected.sort_unstable();
        let direct: Vec<Placement> = out.selected.iter().map(|&i| g.nodes[i].clone()).collect();
        assert_eq!(sol.selected, direct);
    }
}
