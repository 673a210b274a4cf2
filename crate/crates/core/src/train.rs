//! Training on random crops: shape generation, the Adam update, epochs with
//! validation, early stopping and checkpoints.

use std::f64::consts::TAU;
use std::io::{Read, Write};
use std::time::Instant;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use log::{debug, info};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geom::{BBox, Point, Polygon, Region, RigidTransform};
use crate::graph::{build_graph, crop_posed, AdjacencyGraph, GraphError};
use crate::loss::{LossInputs, LossWeights};
use crate::nn::{GraphInputs, Model, NnError, Tensor};
use crate::tileset::Superset;

pub const SHAPE_ATTEMPTS: usize = 10_000;
pub const OPTIMIZER_MAGIC: &[u8; 4] = b"TADM";

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no simple polygon after {0} attempts")]
    GenerationFailed(usize),
    #[error("invalid training configuration: {0}")]
    InvalidConfig(String),
    #[error("no usable validation graphs")]
    NoValidationGraphs,
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Nn(#[from] NnError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub epochs: usize,
    /// Optional cap on optimizer steps across all epochs.
    pub max_iterations: Option<usize>,
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub train_shapes: usize,
    pub val_shapes: usize,
    pub min_vertices: usize,
    pub max_vertices: usize,
    pub min_size: f64,
    pub max_size: f64,
    /// Epochs between checkpoints; 0 disables periodic checkpoints.
    pub checkpoint_every: usize,
    pub patience: usize,
    /// Graphs with fewer nodes are skipped.
    pub min_nodes: usize,
    pub seed: u64,
    pub weights: LossWeights,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 5,
            max_iterations: None,
            learning_rate: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            train_shapes: 500,
            val_shapes: 100,
            min_vertices: 3,
            max_vertices: 20,
            min_size: 0.3,
            max_size: 0.8,
            checkpoint_every: 1,
            patience: 2,
            min_nodes: 3,
            seed: 0,
            weights: LossWeights::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), TrainError> {
        let bad = |m: &str| Err(TrainError::InvalidConfig(m.into()));
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be finite and non-negative");
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) {
            return bad("moment decays must lie in [0, 1)");
        }
        if self.min_vertices < 3 || self.max_vertices < self.min_vertices {
            return bad("vertex range must satisfy 3 <= min <= max");
        }
        if !(self.min_size > 0.0 && self.min_size <= self.max_size && self.max_size <= 1.0) {
            return bad("size range must satisfy 0 < min <= max <= 1");
        }
        if self.val_shapes == 0 {
            return bad("validation set must be nonempty");
        }
        Ok(())
    }
}

/// Random simple polygon placed over `bounds`.
///
/// Vertices are drawn at sorted random angles and random radii around the
/// origin, the shape is given a random orientation, scaled so its bounding
/// box's longer side is `s · min(bounds width, height)` with `s` drawn from
/// the size range, and translated uniformly so it lies within `bounds`.
pub fn random_shape(rng: &mut impl Rng, bounds: &BBox, cfg: &TrainConfig) -> Result<Polygon, TrainError> {
    for _ in 0..SHAPE_ATTEMPTS {
        let n = rng.gen_range(cfg.min_vertices..=cfg.max_vertices);
        let mut angles: Vec<f64> = (0..n).map(|_| rng.gen::<f64>() * TAU).collect();
        angles.sort_by(f64::total_cmp);
        let spin = rng.gen::<f64>() * TAU;
        let pts: Vec<Point> = angles
            .iter()
            .map(|&a| Point::new(a.cos(), a.sin()) * rng.gen_range(0.5..1.0))
            .map(|p| p.rotate(spin))
            .collect();
        let s = rng.gen_range(cfg.min_size..=cfg.max_size);
        let bb = BBox::from_points(&pts);
        let extent = bb.width().max(bb.height());
        if extent <= 0.0 {
            continue;
        }
        let scale = s * bounds.width().min(bounds.height()) / extent;
        let w = bb.width() * scale;
        let h = bb.height() * scale;
        let origin = Point::new(
            bounds.min.x + rng.gen::<f64>() * (bounds.width() - w).max(0.0),
            bounds.min.y + rng.gen::<f64>() * (bounds.height() - h).max(0.0),
        );
        let placed = pts.iter().map(|&p| (p - bb.min) * scale + origin).collect();
        if let Ok(poly) = Polygon::new(placed) {
            return Ok(poly);
        }
    }
    Err(TrainError::GenerationFailed(SHAPE_ATTEMPTS))
}

/// First-order optimizer state.
#[derive(Clone, Debug, PartialEq)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub t: u64,
    pub m: Vec<Tensor<f32>>,
    pub v: Vec<Tensor<f32>>,
}

impl Adam {
    pub fn new(model: &Model, cfg: &TrainConfig) -> Adam {
        let zeros: Vec<Tensor<f32>> = model.params.iter().map(|p| Tensor::zeros(p.rows, p.cols)).collect();
        Adam {
            lr: cfg.learning_rate,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.adam_eps,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn update(&mut self, model: &mut Model, grads: &[Tensor<f32>]) {
        self.t += 1;
        let (b1, b2) = (self.beta1 as f32, self.beta2 as f32);
        let c1 = 1.0 - self.beta1.powi(self.t as i32);
        let c2 = 1.0 - self.beta2.powi(self.t as i32);
        let step = (self.lr * c2.sqrt() / c1) as f32;
        let eps = (self.eps * c2.sqrt()) as f32;
        for ((p, g), (m, v)) in model.params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.data.len() {
                let gk = g.data[k];
                m.data[k] = b1 * m.data[k] + (1.0 - b1) * gk;
                v.data[k] = b2 * v.data[k] + (1.0 - b2) * gk * gk;
                p.data[k] -= step * m.data[k] / (v.data[k].sqrt() + eps);
            }
        }
    }

    pub fn save<W: Write>(&self, mut w: W) -> Result<(), TrainError> {
        w.write_all(OPTIMIZER_MAGIC)?;
        w.write_u64::<LittleEndian>(self.t)?;
        for x in [self.lr, self.beta1, self.beta2, self.eps] {
            w.write_f64::<LittleEndian>(x)?;
        }
        for t in self.m.iter().chain(&self.v) {
            for &x in &t.data {
                w.write_f32::<LittleEndian>(x)?;
            }
        }
        Ok(())
    }

    /// Reads state saved for a model with `model`'s parameter shapes.
    pub fn load<R: Read>(mut r: R, model: &Model) -> Result<Adam, TrainError> {
        let fmt = |e: std::io::Error| NnError::WeightFormat(format!("optimizer state: {e}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(fmt)?;
        if &magic != OPTIMIZER_MAGIC {
            return Err(NnError::WeightFormat("optimizer state: bad magic bytes".into()).into());
        }
        let t = r.read_u64::<LittleEndian>().map_err(fmt)?;
        let mut h = [0f64; 4];
        r.read_f64_into::<LittleEndian>(&mut h).map_err(fmt)?;
        let mut read = || -> Result<Vec<Tensor<f32>>, TrainError> {
            let mut out = Vec::new();
            for p in &model.params {
                let mut data = vec![0f32; p.data.len()];
                r.read_f32_into::<LittleEndian>(&mut data).map_err(fmt)?;
                out.push(Tensor::from_vec(p.rows, p.cols, data));
            }
            Ok(out)
        };
        let m = read()?;
        let v = read()?;
        Ok(Adam {
            lr: h[0],
            beta1: h[1],
            beta2: h[2],
            eps: h[3],
            t,
            m,
            v,
        })
    }
}

/// Weights file followed by the optimizer state.
pub fn save_checkpoint<W: Write>(mut w: W, model: &Model, adam: &Adam) -> Result<(), TrainError> {
    model.save(&mut w)?;
    adam.save(&mut w)
}

pub fn load_checkpoint<R: Read>(mut r: R) -> Result<(Model, Adam), TrainError> {
    let model = Model::read_from(&mut r)?;
    let adam = Adam::load(&mut r, &model)?;
    let mut rest = [0u8; 1];
    if r.read(&mut rest)? != 0 {
        return Err(NnError::WeightFormat("trailing bytes after optimizer state".into()).into());
    }
    Ok((model, adam))
}

/// One optimizer step on one graph; returns the loss before the update.
pub fn train_step(
    model: &mut Model,
    inputs: &GraphInputs<f32>,
    li: &LossInputs,
    weights: &LossWeights,
    adam: &mut Adam,
) -> Result<f64, TrainError> {
    if inputs.is_empty() {
        return Err(NnError::EmptyGraph.into());
    }
    let eval = model.loss_and_gradients(inputs, li, weights)?;
    adam.update(model, &eval.grads);
    Ok(eval.terms.total)
}

/// A cropped training sample ready for the network.
pub struct Sample {
    pub inputs: GraphInputs<f32>,
    pub loss: LossInputs,
    pub nodes: usize,
}

impl Sample {
    pub fn new(model: &Model, g: &AdjacencyGraph) -> Result<Sample, TrainError> {
        Ok(Sample {
            inputs: model.inputs(g)?,
            loss: LossInputs::from_graph(g),
            nodes: g.len(),
        })
    }
}

/// Crop graph of `shape` laid over the superset as is.
pub fn shape_graph(ss: &Superset, shape: &Polygon) -> Result<AdjacencyGraph, TrainError> {
    let region = Region::from(shape.clone());
    let idx = crop_posed(ss, &region.transformed(&RigidTransform::IDENTITY));
    let nodes: Vec<_> = idx.iter().map(|&i| ss.placements[i].clone()).collect();
    Ok(build_graph(&nodes, ss)?)
}

/// `count` shapes from a generator seeded with `(seed, stream)`.
pub fn shape_set(ss: &Superset, cfg: &TrainConfig, count: usize, stream: u64) -> Result<Vec<Polygon>, TrainError> {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(stream);
    let bounds = ss.interior_box();
    (0..count).map(|_| random_shape(&mut rng, &bounds, cfg)).collect()
}

/// Graphs of the shapes, skipping those below `min_nodes`.
pub fn samples(model: &Model, ss: &Superset, shapes: &[Polygon], min_nodes: usize) -> Result<Vec<Sample>, TrainError> {
    let built: Vec<Option<Sample>> = shapes
        .par_iter()
        .enumerate()
        .map(|(i, s)| {
            let g = shape_graph(ss, s)?;
            if g.len() < min_nodes {
                debug!("skipping shape {i}: {} nodes", g.len());
                return Ok(None);
            }
            Sample::new(model, &g).map(Some)
        })
        .collect::<Result<_, TrainError>>()?;
    Ok(built.into_iter().flatten().collect())
}

/// Mean loss over samples.
pub fn mean_loss(model: &Model, set: &[Sample], weights: &LossWeights) -> Result<f64, TrainError> {
    let losses: Vec<f64> = set
        .par_iter()
        .map(|s| model.loss(&s.inputs, &s.loss, weights).map(|t| t.total))
        .collect::<Result<_, NnError>>()?;
    Ok(losses.iter().sum::<f64>() / losses.len() as f64)
}

/// One line of the metrics log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub iter: usize,
    pub train_loss: f64,
    pub val_loss: Option<f64>,
    pub graph_size: usize,
    pub wall_ms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub initial_val: f64,
    pub best_val: f64,
    pub best_epoch: usize,
    pub epochs_run: usize,
    pub iterations: usize,
    pub val_history: Vec<f64>,
    pub skipped_train: usize,
    pub skipped_val: usize,
}

/// Receives checkpoints: `(epoch, is_best, model, optimizer)`.
pub type CheckpointSink<'a> = dyn FnMut(usize, bool, &Model, &Adam) -> Result<(), TrainError> + 'a;

/// Trains `model` in place and leaves the best-validation parameters in it.
pub fn train(
    model: &mut Model,
    ss: &Superset,
    cfg: &TrainConfig,
    metrics: &mut dyn Write,
    checkpoint: &mut CheckpointSink<'_>,
) -> Result<TrainReport, TrainError> {
    cfg.validate()?;
    model.check_dims(ss.tileset.len(), ss.poses.len())?;
    let train_shapes = shape_set(ss, cfg, cfg.train_shapes, 1)?;
    let val_shapes = shape_set(ss, cfg, cfg.val_shapes, 2)?;
    let train_set = samples(model, ss, &train_shapes, cfg.min_nodes)?;
    let val_set = samples(model, ss, &val_shapes, cfg.min_nodes)?;
    if val_set.is_empty() {
        return Err(TrainError::NoValidationGraphs);
    }
    let mut adam = Adam::new(model, cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(3);

    let initial_val = mean_loss(model, &val_set, &cfg.weights)?;
    info!("initial validation loss {initial_val:.6}");
    let mut report = TrainReport {
        initial_val,
        best_val: initial_val,
        best_epoch: 0,
        epochs_run: 0,
        iterations: 0,
        val_history: vec![initial_val],
        skipped_train: cfg.train_shapes - train_set.len(),
        skipped_val: cfg.val_shapes - val_set.len(),
    };
    let mut best = model.clone();
    let mut stale = 0;
    let cap = cfg.max_iterations.unwrap_or(usize::MAX);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    'epochs: for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        for (pos, &i) in order.iter().enumerate() {
            if report.iterations >= cap {
                break 'epochs;
            }
            let start = Instant::now();
            let s = &train_set[i];
            let loss = train_step(model, &s.inputs, &s.loss, &cfg.weights, &mut adam)?;
            report.iterations += 1;
            let last = pos + 1 == order.len() || report.iterations >= cap;
            let val_loss = if last { Some(mean_loss(model, &val_set, &cfg.weights)?) } else { None };
            let rec = MetricsRecord {
                iter: report.iterations,
                train_loss: loss,
                val_loss,
                graph_size: s.nodes,
                wall_ms: start.elapsed().as_secs_f64() * 1e3,
            };
            serde_json::to_writer(&mut *metrics, &rec).map_err(std::io::Error::from)?;
            metrics.write_all(b"\n")?;
        }
        let val = mean_loss(model, &val_set, &cfg.weights)?;
        report.epochs_run = epoch;
        report.val_history.push(val);
        let improved = val < report.best_val;
        info!("epoch {epoch}: validation loss {val:.6}");
        if improved {
            report.best_val = val;
            report.best_epoch = epoch;
            best = model.clone();
            stale = 0;
        } else {
            stale += 1;
        }
        if improved || (cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0) {
            checkpoint(epoch, improved, model, &adam)?;
        }
        if stale > cfg.patience {
            info!("early stop after epoch {epoch}");
            break;
        }
    }
    *model = best;
    Ok(report)
}
