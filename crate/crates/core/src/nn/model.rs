//! The two-branch graph network that scores candidate placements.

use std::io::{Read, Write};
use std::sync::Arc;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::{Rng, SeedableRng};
use serde::{Deserialize, Serialize};

use super::tape::{Incidence, Scalar, Tape, Tensor, Var};
use super::NnError;
use crate::graph::AdjacencyGraph;
use crate::loss::{self, LossInputs, LossTerms, LossWeights};

pub const WEIGHTS_MAGIC: &[u8; 4] = b"TGNN";
pub const WEIGHTS_VERSION: u32 = 1;

/// Switches that remove parts of the network for ablation runs.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct Ablation {
    pub no_overlap_branch: bool,
    pub no_edge_labels: bool,
    pub no_residual: bool,
    pub no_skip: bool,
}

impl Ablation {
    fn bits(&self) -> u32 {
        (self.no_overlap_branch as u32)
            | (self.no_edge_labels as u32) << 1
            | (self.no_residual as u32) << 2
            | (self.no_skip as u32) << 3
    }

    fn from_bits(b: u32) -> Result<Ablation, NnError> {
        if b >> 4 != 0 {
            return Err(NnError::WeightFormat(format!("unknown ablation bits {b:#x}")));
        }
        Ok(Ablation {
            no_overlap_branch: b & 1 != 0,
            no_edge_labels: b & 2 != 0,
            no_residual: b & 4 != 0,
            no_skip: b & 8 != 0,
        })
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub layers: usize,
    pub channels: usize,
    pub n_types: usize,
    pub n_poses: usize,
    pub slope: f32,
    pub seed: u64,
    #[serde(default)]
    pub ablation: Ablation,
}

impl ModelConfig {
    pub fn new(n_types: usize, n_poses: usize) -> ModelConfig {
        ModelConfig {
            layers: 6,
            channels: 32,
            n_types,
            n_poses,
            slope: 0.01,
            seed: 0,
            ablation: Ablation::default(),
        }
    }

    fn head_inputs(&self) -> usize {
        if self.ablation.no_skip {
            self.channels
        } else {
            self.channels * (self.layers + 1)
        }
    }

    /// `(name, rows, cols)` of every parameter in declaration order.
    pub fn layout(&self) -> Vec<(String, usize, usize)> {
        let c = self.channels;
        let mut out = Vec::new();
        let mlp = |out: &mut Vec<(String, usize, usize)>, name: &str, i: usize, h: usize, o: usize| {
            out.push((format!("{name}.w1"), i, h));
            out.push((format!("{name}.b1"), 1, h));
            out.push((format!("{name}.w2"), h, o));
            out.push((format!("{name}.b2"), 1, o));
        };
        mlp(&mut out, "embed", self.n_types + 1, c, c);
        for l in 0..self.layers {
            out.push((format!("layer{l}.w"), c, c));
            mlp(&mut out, &format!("layer{l}.phi"), self.n_poses + 1, c, c * c);
            mlp(&mut out, &format!("layer{l}.theta"), c, c, c);
            out.push((format!("layer{l}.eps"), 1, 1));
        }
        mlp(&mut out, "head", self.head_inputs(), c, 1);
        out
    }
}

/// Graph tensors in the form the network consumes.
#[derive(Clone, Debug)]
pub struct GraphInputs<S> {
    pub nodes: Tensor<S>,
    /// Distinct edge-feature rows in lexicographic order.
    pub edge_rows: Tensor<S>,
    pub neighbors: Arc<Incidence>,
    pub overlaps: Arc<Incidence>,
}

impl<S: Scalar> GraphInputs<S> {
    pub fn new(g: &AdjacencyGraph, ablation: &Ablation) -> GraphInputs<S> {
        let n = g.len();
        let nodes = Tensor::from_vec(n, g.node_dim(), g.node_features.iter().map(|&v| S::from_f32(v).unwrap()).collect());
        let ew = g.edge_dim();
        let rows: Vec<Vec<f32>> = if ablation.no_edge_labels {
            vec![vec![1.0; ew]; g.neighbor_edges.len()]
        } else {
            g.edge_features.chunks(ew).map(<[f32]>::to_vec).collect()
        };
        let mut order: Vec<usize> = (0..rows.len()).collect();
        let cmp = |a: &Vec<f32>, b: &Vec<f32>| {
            a.iter().zip(b).map(|(x, y)| x.total_cmp(y)).find(|o| o.is_ne()).unwrap_or(std::cmp::Ordering::Equal)
        };
        order.sort_by(|&a, &b| cmp(&rows[a], &rows[b]));
        let mut unique: Vec<f32> = Vec::new();
        let mut mat = vec![0usize; rows.len()];
        let mut count = 0usize;
        for (k, &e) in order.iter().enumerate() {
            if k == 0 || cmp(&rows[order[k - 1]], &rows[e]).is_ne() {
                unique.extend_from_slice(&rows[e]);
                count += 1;
            }
            mat[e] = count - 1;
        }
        let edge_rows = Tensor::from_vec(count, ew, unique.into_iter().map(|v| S::from_f32(v).unwrap()).collect());
        let pairs: Vec<(usize, usize)> = g.neighbor_edges.iter().map(|e| (e.a, e.b)).collect();
        GraphInputs {
            nodes,
            edge_rows,
            neighbors: Arc::new(Incidence::from_pairs(n, &pairs, Some(&mat))),
            overlaps: Arc::new(Incidence::from_pairs(n, &g.overlap_edges, None)),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.rows
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.rows == 0
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Model<S = f32> {
    pub config: ModelConfig,
    pub params: Vec<Tensor<S>>,
}

/// One gradient evaluation.
pub struct LossEval<S> {
    pub terms: LossTerms,
    pub x: Vec<S>,
    pub grads: Vec<Tensor<S>>,
}

impl Model<f32> {
    /// Fresh model with seeded uniform fan-in initialization and ε = 0.
    pub fn new(config: ModelConfig) -> Model<f32> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
        let params = config
            .layout()
            .into_iter()
            .map(|(name, rows, cols)| {
                if name.ends_with(".eps") {
                    return Tensor::zeros(rows, cols);
                }
                // biases share the fan-in of their weight matrix
                let fan_in = if rows == 1 { prev_fan_in(&config, &name) } else { rows };
                let mut bound = 1.0 / (fan_in as f32).sqrt();
                if name.contains(".phi.w2") || name.contains(".phi.b2") {
                    // the output is a C x C matrix applied to a C-vector
                    bound /= (config.channels as f32).sqrt();
                }
                Tensor::from_vec(rows, cols, (0..rows * cols).map(|_| rng.gen_range(-bound..=bound)).collect())
            })
            .collect();
        Model { config, params }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), NnError> {
        let c = &self.config;
        w.write_all(WEIGHTS_MAGIC)?;
        w.write_u32::<LittleEndian>(WEIGHTS_VERSION)?;
        for v in [c.layers, c.channels, c.n_types, c.n_poses] {
            w.write_u32::<LittleEndian>(v as u32)?;
        }
        w.write_u32::<LittleEndian>(c.ablation.bits())?;
        w.write_f32::<LittleEndian>(c.slope)?;
        w.write_u64::<LittleEndian>(c.seed)?;
        for p in &self.params {
            for &v in &p.data {
                w.write_f32::<LittleEndian>(v)?;
            }
        }
        Ok(())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::new();
        self.save(&mut buf).expect("writing to memory");
        buf
    }

    /// Reads a complete weights file; trailing bytes are an error.
    pub fn load<R: Read>(mut r: R) -> Result<Model<f32>, NnError> {
        let m = Model::read_from(&mut r)?;
        let mut rest = [0u8; 1];
        if r.read(&mut rest)? != 0 {
            return Err(NnError::WeightFormat("trailing bytes after parameters".into()));
        }
        Ok(m)
    }

    /// Reads weights from the front of a stream and stops after the last
    /// parameter.
    pub fn read_from<R: Read>(mut r: R) -> Result<Model<f32>, NnError> {
        let fmt = |e: std::io::Error| NnError::WeightFormat(format!("truncated or unreadable weights: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != WEIGHTS_MAGIC {
            return Err(NnError::WeightFormat("bad magic bytes".into()));
        }
        let version = r.read_u32::<LittleEndian>().map_err(fmt)?;
        if version != WEIGHTS_VERSION {
            return Err(NnError::WeightFormat(format!("unsupported weights version {version}")));
        }
        let mut dims = [0usize; 4];
        for d in &mut dims {
            *d = r.read_u32::<LittleEndian>().map_err(fmt)? as usize;
        }
        let ablation = Ablation::from_bits(r.read_u32::<LittleEndian>().map_err(fmt)?)?;
        let slope = r.read_f32::<LittleEndian>().map_err(fmt)?;
        let seed = r.read_u64::<LittleEndian>().map_err(fmt)?;
        let config = ModelConfig {
            layers: dims[0],
            channels: dims[1],
            n_types: dims[2],
            n_poses: dims[3],
            slope,
            seed,
            ablation,
        };
        if config.layers == 0 || config.channels == 0 {
            return Err(NnError::WeightFormat("layer and channel counts must be positive".into()));
        }
        let mut params = Vec::new();
        for (_, rows, cols) in config.layout() {
            let mut data = vec![0f32; rows * cols];
            r.read_f32_into::<LittleEndian>(&mut data).map_err(fmt)?;
            params.push(Tensor::from_vec(rows, cols, data));
        }
        Ok(Model { config, params })
    }

    /// Loads weights and checks them against a tile set's type and pose counts.
    pub fn load_for<R: Read>(r: R, n_types: usize, n_poses: usize) -> Result<Model<f32>, NnError> {
        let m = Model::load(r)?;
        m.check_dims(n_types, n_poses)?;
        Ok(m)
    }
}

fn prev_fan_in(config: &ModelConfig, bias_name: &str) -> usize {
    let weight = bias_name.replace(".b", ".w");
    config
        .layout()
        .into_iter()
        .find(|(n, _, _)| *n == weight)
        .map_or(1, |(_, rows, _)| rows)
}

fn mlp<S: Scalar>(tape: &mut Tape<S>, x: Var, p: &[Var], slope: f64) -> Var {
    let z = tape.matmul(x, p[0]);
    let z = tape.add_bias(z, p[1]);
    let z = tape.leaky_relu(z, slope);
    let z = tape.matmul(z, p[2]);
    tape.add_bias(z, p[3])
}

impl<S: Scalar> Model<S> {
    pub fn cast<T: Scalar>(&self) -> Model<T> {
        Model {
            config: self.config,
            params: self.params.iter().map(Tensor::cast).collect(),
        }
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(|p| p.data.len()).sum()
    }

    pub fn check_dims(&self, n_types: usize, n_poses: usize) -> Result<(), NnError> {
        if self.config.n_types != n_types || self.config.n_poses != n_poses {
            return Err(NnError::ConfigMismatch(format!(
                "model expects {} prototiles and {} poses, got {} and {}",
                self.config.n_types, self.config.n_poses, n_types, n_poses
            )));
        }
        Ok(())
    }

    pub fn inputs(&self, g: &AdjacencyGraph) -> Result<GraphInputs<S>, NnError> {
        self.check_dims(g.n_types, g.n_poses)?;
        Ok(GraphInputs::new(g, &self.config.ablation))
    }

    /// Records the forward pass; returns the parameter leaves and the
    /// `N × 1` probability column.
    pub fn record(&self, tape: &mut Tape<S>, inp: &GraphInputs<S>) -> Result<(Vec<Var>, Var), NnError> {
        let cfg = &self.config;
        if inp.nodes.cols != cfg.n_types + 1 || inp.edge_rows.cols != cfg.n_poses + 1 {
            return Err(NnError::ConfigMismatch(format!(
                "feature widths {}/{} do not match model {}/{}",
                inp.nodes.cols,
                inp.edge_rows.cols,
                cfg.n_types + 1,
                cfg.n_poses + 1
            )));
        }
        if inp.is_empty() {
            return Err(NnError::EmptyGraph);
        }
        let slope = cfg.slope as f64;
        let params: Vec<Var> = self.params.iter().map(|p| tape.leaf(p.clone())).collect();
        let v = tape.leaf(inp.nodes.clone());
        let e = tape.leaf(inp.edge_rows.clone());

        let f0 = mlp(tape, v, &params[0..4], slope);
        let (mut f, mut g) = (f0, f0);
        let mut outs = vec![f0];
        let mut at = 4;
        for _ in 0..cfg.layers {
            let w = params[at];
            let phi = &params[at + 1..at + 5];
            let theta = &params[at + 5..at + 9];
            let eps = params[at + 9];
            at += 10;

            let mats = mlp(tape, e, phi, slope);
            let agg = tape.edge_conv(f, mats, inp.neighbors.clone());
            let lin = tape.matmul(f, w);
            let pre = tape.add(lin, agg);
            let mut h = tape.leaky_relu(pre, slope);
            if !cfg.ablation.no_residual {
                h = tape.add(h, f);
            }
            if cfg.ablation.no_overlap_branch {
                f = h;
            } else {
                let own = tape.scale_one_plus(g, eps);
                let others = tape.segment_sum(g, inp.overlaps.clone());
                let s = tape.add(own, others);
                let t = mlp(tape, s, theta, slope);
                let mut gn = tape.leaky_relu(t, slope);
                if !cfg.ablation.no_residual {
                    gn = tape.add(gn, g);
                }
                f = tape.mul(h, gn);
                g = gn;
            }
            outs.push(f);
        }
        let feats = if cfg.ablation.no_skip { f } else { tape.concat(&outs) };
        let logits = mlp(tape, feats, &params[at..at + 4], slope);
        let x = tape.sigmoid(logits);
        Ok((params, x))
    }

    /// Node probabilities, each strictly inside (0, 1).
    pub fn forward(&self, inp: &GraphInputs<S>) -> Result<Vec<S>, NnError> {
        let mut tape = Tape::new();
        let (_, x) = self.record(&mut tape, inp)?;
        Ok(tape.value(x).data.clone())
    }

    pub fn forward_graph(&self, g: &AdjacencyGraph) -> Result<Vec<S>, NnError> {
        self.forward(&self.inputs(g)?)
    }

    /// Forward pass, loss, and gradients for every parameter.
    pub fn loss_and_gradients(&self, inp: &GraphInputs<S>, li: &LossInputs, w: &LossWeights) -> Result<LossEval<S>, NnError> {
        let mut tape = Tape::new();
        let (params, xv) = self.record(&mut tape, inp)?;
        let x: Vec<S> = tape.value(xv).data.clone();
        let x64: Vec<f64> = x.iter().map(|v| v.to_f64().unwrap()).collect();
        let (terms, dx) = loss::evaluate(&x64, li, w).map_err(|_| NnError::EmptyGraph)?;
        let seed = Tensor::from_vec(x.len(), 1, dx.iter().map(|&d| S::from_f64(d).unwrap()).collect());
        let mut grads = tape.backward(xv, seed)?;
        let grads = params
            .iter()
            .zip(&self.params)
            .map(|(&v, p)| grads.take(v).unwrap_or_else(|| Tensor::zeros(p.rows, p.cols)))
            .collect();
        Ok(LossEval { terms, x, grads })
    }

    /// Loss value only.
    pub fn loss(&self, inp: &GraphInputs<S>, li: &LossInputs, w: &LossWeights) -> Result<LossTerms, NnError> {
        let x: Vec<f64> = self.forward(inp)?.iter().map(|v| v.to_f64().unwrap()).collect();
        loss::evaluate(&x, li, w).map(|(t, _)| t).map_err(|_| NnError::EmptyGraph)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::NeighborEdge;
    use crate::tileset::{builtin, TileSet};

    fn tiny_graph() -> AdjacencyGraph {
        let ts = TileSet::from_descriptor(&builtin::square_domino()).unwrap();
        let nodes: Vec<_> = (0..5)
            .map(|i| ts.place(i % 2, &crate::geom::RigidTransform::translation(crate::geom::Point::new(i as f64 * 3.0, 0.0))))
            .collect();
        let nbr = vec![
            NeighborEdge { a: 0, b: 1, length: 1.0, pose: 2 },
            NeighborEdge { a: 1, b: 2, length: 2.0, pose: 0 },
            NeighborEdge { a: 3, b: 4, length: 1.0, pose: 2 },
        ];
        AdjacencyGraph::from_parts(nodes, vec![(0, 2), (2, 3)], nbr, 2, 4, 6.0)
    }

    fn small_config() -> ModelConfig {
        ModelConfig {
            layers: 2,
            channels: 4,
            ..ModelConfig::new(2, 4)
        }
    }

    #[test]
    fn layout_counts() {
        let cfg = small_config();
        let m = Model::new(cfg);
        assert_eq!(m.params.len(), 4 + 2 * 10 + 4);
        assert_eq!(m.params[4].rows, 4);
        assert!(m.params.iter().zip(cfg.layout()).all(|(p, (_, r, c))| (p.rows, p.cols) == (r, c)));
    }

    #[test]
    fn outputs_in_open_unit_interval_and_deterministic() {
        let m = Model::new(small_config());
        let g = tiny_graph();
        let a = m.forward_graph(&g).unwrap();
        let b = m.forward_graph(&g).unwrap();
        assert_eq!(a, b);
        assert!(a.iter().all(|&x| x > 0.0 && x < 1.0));
    }

    #[test]
    fn head_bias_gradient_on_single_node() {
        // zero head weights make x = σ(b) regardless of the rest of the network
        let cfg = small_config();
        let mut m = Model::new(cfg);
        let n = m.params.len();
        for p in &mut m.params[n - 4..n - 1] {
            p.data.iter_mut().for_each(|v| *v = 0.0);
        }
        m.params[n - 1].data[0] = 0.3;
        let g = tiny_graph().induced(&[0]);
        let inp = m.inputs(&g).unwrap();
        let li = LossInputs::from_graph(&g);
        let eval = m.loss_and_gradients(&inp, &li, &LossWeights::default()).unwrap();
        // L = 1 − ln σ(b) for a lone node with area 1, so dL/db = −(1 − σ(b))
        let s = 1.0 / (1.0 + (-0.3f64).exp());
        let expected = -(1.0 - s);
        let got = eval.grads[n - 1].data[0] as f64;
        assert!((got - expected).abs() < 1e-6, "{got} vs {expected}");
    }

    #[test]
    fn frozen_branch_has_zero_gradient() {
        let mut cfg = small_config();
        cfg.ablation.no_overlap_branch = true;
        let m = Model::new(cfg);
        let g = tiny_graph();
        let eval = m.loss_and_gradients(&m.inputs(&g).unwrap(), &LossInputs::from_graph(&g), &LossWeights::default()).unwrap();
        for ((name, _, _), grad) in cfg.layout().iter().zip(&eval.grads) {
            if name.contains(".theta") || name.ends_with(".eps") {
                assert!(grad.data.iter().all(|&v| v == 0.0), "{name}");
            }
        }
    }

    #[test]
    fn weights_round_trip() {
        let m = Model::new(small_config());
        let bytes = m.to_bytes();
        let back = Model::load(&bytes[..]).unwrap();
        assert_eq!(back, m);
        let g = tiny_graph();
        assert_eq!(back.forward_graph(&g).unwrap(), m.forward_graph(&g).unwrap());
    }

    #[test]
    fn truncated_weights_fail() {
        let bytes = Model::new(small_config()).to_bytes();
        assert!(matches!(Model::load(&bytes[..bytes.len() - 3]), Err(NnError::WeightFormat(_))));
        assert!(matches!(Model::load(&bytes[..10]), Err(NnError::WeightFormat(_))));
    }

    #[test]
    fn mismatched_tile_set_is_rejected() {
        let bytes = Model::new(small_config()).to_bytes();
        assert!(matches!(Model::load_for(&bytes[..], 3, 4), Err(NnError::ConfigMismatch(_))));
    }
}
