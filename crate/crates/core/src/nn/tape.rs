//! Dense 2-D tensors and a reverse-mode tape with just the operations the
//! tiling network needs.
//!
//! Neighborhood sums visit contributions in an order derived from their
//! values, not from node indices, so relabeling the graph's nodes permutes
//! the outputs without changing a single bit.

use std::cmp::Ordering;
use std::fmt::Debug;
use std::sync::Arc;

use num_traits::{Float, FromPrimitive, ToPrimitive};

use super::NnError;

pub trait Scalar: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static {}
impl<T: Float + FromPrimitive + ToPrimitive + Debug + Send + Sync + 'static> Scalar for T {}

fn lit<S: Scalar>(v: f64) -> S {
    S::from_f64(v).expect("representable literal")
}

/// Row-major matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor<S> {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<S>,
}

impl<S: Scalar> Tensor<S> {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![S::zero(); rows * cols],
        }
    }

    pub fn from_vec(rows: usize, cols: usize, data: Vec<S>) -> Self {
        assert_eq!(rows * cols, data.len(), "tensor data does not match shape {rows}x{cols}");
        Tensor { rows, cols, data }
    }

    pub fn row(&self, r: usize) -> &[S] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn row_mut(&mut self, r: usize) -> &mut [S] {
        &mut self.data[r * self.cols..(r + 1) * self.cols]
    }

    pub fn cast<T: Scalar>(&self) -> Tensor<T> {
        Tensor {
            rows: self.rows,
            cols: self.cols,
            data: self.data.iter().map(|v| T::from_f64(v.to_f64().unwrap()).unwrap()).collect(),
        }
    }

    fn matmul(&self, b: &Tensor<S>) -> Tensor<S> {
        assert_eq!(self.cols, b.rows, "matmul shape mismatch");
        let mut out = Tensor::zeros(self.rows, b.cols);
        for i in 0..self.rows {
            let orow = &mut out.data[i * b.cols..(i + 1) * b.cols];
            for k in 0..self.cols {
                let a = self.data[i * self.cols + k];
                if a == S::zero() {
                    continue;
                }
                for (o, &bv) in orow.iter_mut().zip(b.row(k)) {
                    *o = *o + a * bv;
                }
            }
        }
        out
    }

    /// `selfᵀ · b`
    fn t_matmul(&self, b: &Tensor<S>) -> Tensor<S> {
        assert_eq!(self.rows, b.rows);
        let mut out = Tensor::zeros(self.cols, b.cols);
        for r in 0..self.rows {
            for k in 0..self.cols {
                let a = self.data[r * self.cols + k];
                if a == S::zero() {
                    continue;
                }
                for (o, &bv) in out.row_mut(k).iter_mut().zip(b.row(r)) {
                    *o = *o + a * bv;
                }
            }
        }
        out
    }

    /// `self · bᵀ`
    fn matmul_t(&self, b: &Tensor<S>) -> Tensor<S> {
        assert_eq!(self.cols, b.cols);
        let mut out = Tensor::zeros(self.rows, b.rows);
        for i in 0..self.rows {
            let a = self.row(i);
            for j in 0..b.rows {
                out.data[i * b.rows + j] = dot(a, b.row(j));
            }
        }
        out
    }

    fn add_assign(&mut self, o: &Tensor<S>) {
        debug_assert_eq!(self.data.len(), o.data.len());
        for (a, &b) in self.data.iter_mut().zip(&o.data) {
            *a = *a + b;
        }
    }
}

fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter().zip(b).fold(S::zero(), |acc, (&x, &y)| acc + x * y)
}

fn cmp_rows<S: Scalar>(a: &[S], b: &[S]) -> Ordering {
    for (x, y) in a.iter().zip(b) {
        match x.partial_cmp(y) {
            Some(Ordering::Equal) | None => continue,
            Some(o) => return o,
        }
    }
    Ordering::Equal
}

/// Compressed adjacency: for destination `i`, entries
/// `offsets[i]..offsets[i+1]` of `src` (and `mat` for edge-conditioned sums).
#[derive(Clone, Debug, PartialEq)]
pub struct Incidence {
    pub offsets: Vec<usize>,
    pub src: Vec<usize>,
    pub mat: Vec<usize>,
}

impl Incidence {
    /// Both directions of every undirected pair; `mats[k]` labels pair `k`.
    pub fn from_pairs(n: usize, pairs: &[(usize, usize)], mats: Option<&[usize]>) -> Incidence {
        let mut deg = vec![0usize; n + 1];
        for &(a, b) in pairs {
            deg[a] += 1;
            deg[b] += 1;
        }
        let mut offsets = vec![0usize; n + 1];
        for i in 0..n {
            offsets[i + 1] = offsets[i] + deg[i];
        }
        let mut fill = offsets.clone();
        let total = offsets[n];
        let mut src = vec![0usize; total];
        let mut mat = vec![0usize; total];
        for (k, &(a, b)) in pairs.iter().enumerate() {
            let m = mats.map_or(0, |v| v[k]);
            src[fill[a]] = b;
            mat[fill[a]] = m;
            fill[a] += 1;
            src[fill[b]] = a;
            mat[fill[b]] = m;
            fill[b] += 1;
        }
        Incidence { offsets, src, mat }
    }

    pub fn nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Var(usize);

#[derive(Clone, Debug)]
enum Op {
    Leaf,
    MatMul(Var, Var),
    AddBias(Var, Var),
    Add(Var, Var),
    Mul(Var, Var),
    ScaleOnePlus(Var, Var),
    LeakyRelu(Var, f64),
    Sigmoid(Var),
    Concat(Vec<Var>),
    EdgeConv { x: Var, mats: Var, inc: Arc<Incidence> },
    SegmentSum { x: Var, inc: Arc<Incidence> },
}

/// Recorded computation. Values live on the tape until it is dropped.
#[derive(Default)]
pub struct Tape<S> {
    values: Vec<Tensor<S>>,
    ops: Vec<Op>,
}

/// Gradient per tape variable; `None` where nothing flowed.
pub struct Gradients<S> {
    grads: Vec<Option<Tensor<S>>>,
}

impl<S: Scalar> Gradients<S> {
    pub fn get(&self, v: Var) -> Option<&Tensor<S>> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor<S>> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

impl<S: Scalar> Tape<S> {
    pub fn new() -> Self {
        Tape {
            values: Vec::new(),
            ops: Vec::new(),
        }
    }

    fn push(&mut self, t: Tensor<S>, op: Op) -> Var {
        self.values.push(t);
        self.ops.push(op);
        Var(self.values.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor<S> {
        &self.values[v.0]
    }

    pub fn leaf(&mut self, t: Tensor<S>) -> Var {
        self.push(t, Op::Leaf)
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Var {
        let out = self.values[a.0].matmul(&self.values[b.0]);
        self.push(out, Op::MatMul(a, b))
    }

    /// Adds a `1 × cols` bias to every row.
    pub fn add_bias(&mut self, a: Var, bias: Var) -> Var {
        let (x, b) = (&self.values[a.0], &self.values[bias.0]);
        assert_eq!((b.rows, b.cols), (1, x.cols), "bias shape mismatch");
        let mut out = x.clone();
        for r in 0..out.rows {
            for (o, &bv) in out.row_mut(r).iter_mut().zip(&b.data) {
                *o = *o + bv;
            }
        }
        self.push(out, Op::AddBias(a, bias))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Var {
        let mut out = self.values[a.0].clone();
        out.add_assign(&self.values[b.0]);
        self.push(out, Op::Add(a, b))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Var {
        let (x, y) = (&self.values[a.0], &self.values[b.0]);
        assert_eq!(x.data.len(), y.data.len(), "elementwise shape mismatch");
        let data = x.data.iter().zip(&y.data).map(|(&p, &q)| p * q).collect();
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, Op::Mul(a, b))
    }

    /// `(1 + ε) · a` for a `1 × 1` scalar `ε`.
    pub fn scale_one_plus(&mut self, a: Var, eps: Var) -> Var {
        let k = S::one() + self.values[eps.0].data[0];
        let x = &self.values[a.0];
        let out = Tensor::from_vec(x.rows, x.cols, x.data.iter().map(|&v| k * v).collect());
        self.push(out, Op::ScaleOnePlus(a, eps))
    }

    pub fn leaky_relu(&mut self, a: Var, slope: f64) -> Var {
        let s: S = lit(slope);
        let x = &self.values[a.0];
        let data = x.data.iter().map(|&v| if v < S::zero() { v * s } else { v }).collect();
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, Op::LeakyRelu(a, slope))
    }

    /// Logistic function, clamped so every output lies strictly in (0, 1).
    pub fn sigmoid(&mut self, a: Var) -> Var {
        let (lo, hi) = sigmoid_bounds::<S>();
        let x = &self.values[a.0];
        let data = x
            .data
            .iter()
            .map(|&v| {
                let y = S::one() / (S::one() + (-v).exp());
                y.max(lo).min(hi)
            })
            .collect();
        let out = Tensor::from_vec(x.rows, x.cols, data);
        self.push(out, Op::Sigmoid(a))
    }

    /// Column-wise concatenation.
    pub fn concat(&mut self, parts: &[Var]) -> Var {
        let rows = self.values[parts[0].0].rows;
        let cols: usize = parts.iter().map(|p| self.values[p.0].cols).sum();
        let mut out = Tensor::zeros(rows, cols);
        for r in 0..rows {
            let mut c0 = 0;
            for p in parts {
                let t = &self.values[p.0];
                assert_eq!(t.rows, rows, "concat row mismatch");
                out.row_mut(r)[c0..c0 + t.cols].copy_from_slice(t.row(r));
                c0 += t.cols;
            }
        }
        self.push(out, Op::Concat(parts.to_vec()))
    }

    /// `out[i] = Σ_{(k, m) ∈ inc(i)} x[k] · M_m` where row `m` of `mats`
    /// holds a `C × C` matrix in row-major order.
    pub fn edge_conv(&mut self, x: Var, mats: Var, inc: Arc<Incidence>) -> Var {
        let xv = &self.values[x.0];
        let mv = &self.values[mats.0];
        let c = xv.cols;
        assert_eq!(mv.cols, c * c, "edge matrices must be C x C");
        assert_eq!(inc.nodes(), xv.rows, "incidence does not match node count");
        let mut out = Tensor::zeros(xv.rows, c);
        let mut order: Vec<usize> = Vec::new();
        let mut xsum = vec![S::zero(); c];
        for i in 0..xv.rows {
            order.clear();
            order.extend(inc.range(i));
            order.sort_by(|&p, &q| inc.mat[p].cmp(&inc.mat[q]).then_with(|| cmp_rows(xv.row(inc.src[p]), xv.row(inc.src[q]))));
            let orow = &mut out.data[i * c..(i + 1) * c];
            // Rows sharing a matrix are summed first, then multiplied once.
            for group in order.chunk_by(|&p, &q| inc.mat[p] == inc.mat[q]) {
                xsum.iter_mut().for_each(|v| *v = S::zero());
                for &e in group {
                    for (a, &v) in xsum.iter_mut().zip(xv.row(inc.src[e])) {
                        *a = *a + v;
                    }
                }
                let m = mv.row(inc.mat[group[0]]);
                for (col, o) in orow.iter_mut().enumerate() {
                    let mut acc = S::zero();
                    for k in 0..c {
                        acc = acc + xsum[k] * m[k * c + col];
                    }
                    *o = *o + acc;
                }
            }
        }
        self.push(out, Op::EdgeConv { x, mats, inc })
    }

    /// `out[i] = Σ_{k ∈ inc(i)} x[k]`
    pub fn segment_sum(&mut self, x: Var, inc: Arc<Incidence>) -> Var {
        let xv = &self.values[x.0];
        let c = xv.cols;
        assert_eq!(inc.nodes(), xv.rows, "incidence does not match node count");
        let mut out = Tensor::zeros(xv.rows, c);
        let mut order: Vec<usize> = Vec::new();
        for i in 0..xv.rows {
            order.clear();
            order.extend(inc.range(i).map(|e| inc.src[e]));
            order.sort_by(|&p, &q| cmp_rows(xv.row(p), xv.row(q)));
            let orow = &mut out.data[i * c..(i + 1) * c];
            for &k in &order {
                for (o, &v) in orow.iter_mut().zip(xv.row(k)) {
                    *o = *o + v;
                }
            }
        }
        self.push(out, Op::SegmentSum { x, inc })
    }

    /// Propagates `seed` (the gradient of some scalar with respect to
    /// `root`) back through the tape.
    pub fn backward(&self, root: Var, seed: Tensor<S>) -> Result<Gradients<S>, NnError> {
        if root.0 >= self.values.len() {
            return Err(NnError::NoTape);
        }
        let rv = &self.values[root.0];
        if (rv.rows, rv.cols) != (seed.rows, seed.cols) {
            return Err(NnError::ShapeMismatch(format!(
                "seed {}x{} for value {}x{}",
                seed.rows, seed.cols, rv.rows, rv.cols
            )));
        }
        let mut grads: Vec<Option<Tensor<S>>> = vec![None; self.values.len()];
        grads[root.0] = Some(seed);
        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            self.propagate(idx, &g, &mut grads);
            grads[idx] = Some(g);
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, idx: usize, g: &Tensor<S>, grads: &mut [Option<Tensor<S>>]) {
        let mut acc = |v: Var, t: Tensor<S>| match &mut grads[v.0] {
            Some(existing) => existing.add_assign(&t),
            slot @ None => *slot = Some(t),
        };
        match &self.ops[idx] {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                acc(*a, g.matmul_t(bv));
                acc(*b, av.t_matmul(g));
            }
            Op::AddBias(a, bias) => {
                let mut gb = Tensor::zeros(1, g.cols);
                for r in 0..g.rows {
                    for (o, &v) in gb.data.iter_mut().zip(g.row(r)) {
                        *o = *o + v;
                    }
                }
                acc(*a, g.clone());
                acc(*bias, gb);
            }
            Op::Add(a, b) => {
                acc(*a, g.clone());
                acc(*b, g.clone());
            }
            Op::Mul(a, b) => {
                let (av, bv) = (&self.values[a.0], &self.values[b.0]);
                let ga = g.data.iter().zip(&bv.data).map(|(&x, &y)| x * y).collect();
                let gb = g.data.iter().zip(&av.data).map(|(&x, &y)| x * y).collect();
                acc(*a, Tensor::from_vec(g.rows, g.cols, ga));
                acc(*b, Tensor::from_vec(g.rows, g.cols, gb));
            }
            Op::ScaleOnePlus(a, eps) => {
                let k = S::one() + self.values[eps.0].data[0];
                let av = &self.values[a.0];
                let ge = dot(&g.data, &av.data);
                acc(*a, Tensor::from_vec(g.rows, g.cols, g.data.iter().map(|&v| k * v).collect()));
                acc(*eps, Tensor::from_vec(1, 1, vec![ge]));
            }
            Op::LeakyRelu(a, slope) => {
                let s: S = lit(*slope);
                let av = &self.values[a.0];
                let data = g
                    .data
                    .iter()
                    .zip(&av.data)
                    .map(|(&gv, &x)| if x < S::zero() { gv * s } else { gv })
                    .collect();
                acc(*a, Tensor::from_vec(g.rows, g.cols, data));
            }
            Op::Sigmoid(a) => {
                let (lo, hi) = sigmoid_bounds::<S>();
                let y = &self.values[idx];
                let data = g
                    .data
                    .iter()
                    .zip(&y.data)
                    .map(|(&gv, &yv)| {
                        if yv <= lo || yv >= hi {
                            S::zero()
                        } else {
                            gv * yv * (S::one() - yv)
                        }
                    })
                    .collect();
                acc(*a, Tensor::from_vec(g.rows, g.cols, data));
            }
            Op::Concat(parts) => {
                let mut c0 = 0;
                for p in parts {
                    let cols = self.values[p.0].cols;
                    let mut t = Tensor::zeros(g.rows, cols);
                    for r in 0..g.rows {
                        t.row_mut(r).copy_from_slice(&g.row(r)[c0..c0 + cols]);
                    }
                    c0 += cols;
                    acc(*p, t);
                }
            }
            Op::EdgeConv { x, mats, inc } => {
                let xv = &self.values[x.0];
                let mv = &self.values[mats.0];
                let c = xv.cols;
                let mut gx = Tensor::zeros(xv.rows, c);
                let mut gm = Tensor::zeros(mv.rows, mv.cols);
                let mut mg = vec![S::zero(); c];
                let mut xsum = vec![S::zero(); c];
                let idx: Vec<usize> = (0..inc.src.len()).collect();
                for i in 0..xv.rows {
                    let gi = g.row(i);
                    for group in idx[inc.range(i)].chunk_by(|&p, &q| inc.mat[p] == inc.mat[q]) {
                        let m = inc.mat[group[0]];
                        let mrow = mv.row(m);
                        for k in 0..c {
                            mg[k] = dot(&mrow[k * c..(k + 1) * c], gi);
                        }
                        xsum.iter_mut().for_each(|v| *v = S::zero());
                        for &e in group {
                            let s = inc.src[e];
                            for (a, &v) in gx.row_mut(s).iter_mut().zip(&mg) {
                                *a = *a + v;
                            }
                            for (a, &v) in xsum.iter_mut().zip(xv.row(s)) {
                                *a = *a + v;
                            }
                        }
                        let gmr = gm.row_mut(m);
                        for k in 0..c {
                            let xk = xsum[k];
                            if xk == S::zero() {
                                continue;
                            }
                            for (col, &gv) in gi.iter().enumerate() {
                                gmr[k * c + col] = gmr[k * c + col] + xk * gv;
                            }
                        }
                    }
                }
                acc(*x, gx);
                acc(*mats, gm);
            }
            Op::SegmentSum { x, inc } => {
                let xv = &self.values[x.0];
                let mut gx = Tensor::zeros(xv.rows, xv.cols);
                for i in 0..xv.rows {
                    for e in inc.range(i) {
                        let s = inc.src[e];
                        let gi = g.row(i);
                        for (o, &v) in gx.row_mut(s).iter_mut().zip(gi) {
                            *o = *o + v;
                        }
                    }
                }
                acc(*x, gx);
            }
        }
    }
}

fn sigmoid_bounds<S: Scalar>() -> (S, S) {
    (S::min_positive_value(), S::one() - S::epsilon() / lit(2.0))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn t(rows: usize, cols: usize, v: &[f64]) -> Tensor<f64> {
        Tensor::from_vec(rows, cols, v.to_vec())
    }

    /// Central differences of `f` (sum of outputs weighted by `w`) with respect to leaf `at`.
    fn check<F>(build: F, inputs: Vec<Tensor<f64>>, weights_seed: u64)
    where
        F: Fn(&mut Tape<f64>, &[Var]) -> Var,
    {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(weights_seed);
        let mut tape = Tape::new();
        let vars: Vec<Var> = inputs.iter().map(|i| tape.leaf(i.clone())).collect();
        let out = build(&mut tape, &vars);
        let ov = tape.value(out).clone();
        let w: Vec<f64> = (0..ov.data.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let grads = tape.backward(out, Tensor::from_vec(ov.rows, ov.cols, w.clone())).unwrap();
        let eval = |ins: &[Tensor<f64>]| {
            let mut tp = Tape::new();
            let vs: Vec<Var> = ins.iter().map(|i| tp.leaf(i.clone())).collect();
            let o = build(&mut tp, &vs);
            dot(&tp.value(o).data, &w)
        };
        for (vi, input) in inputs.iter().enumerate() {
            for j in 0..input.data.len() {
                let h = 1e-6;
                let mut plus = inputs.clone();
                plus[vi].data[j] += h;
                let mut minus = inputs.clone();
                minus[vi].data[j] -= h;
                let fd = (eval(&plus) - eval(&minus)) / (2.0 * h);
                let an = grads.get(vars[vi]).map_or(0.0, |g| g.data[j]);
                assert!((fd - an).abs() < 1e-6 * (1.0 + fd.abs()), "input {vi}[{j}]: fd {fd} analytic {an}");
            }
        }
    }

    #[test]
    fn matmul_bias_activation_gradients() {
        let x = t(3, 2, &[0.5, -1.0, 2.0, 0.3, -0.7, 0.1]);
        let w = t(2, 2, &[0.2, -0.4, 1.1, 0.6]);
        let b = t(1, 2, &[0.05, -0.3]);
        check(
            |tp, v| {
                let m = tp.matmul(v[0], v[1]);
                let z = tp.add_bias(m, v[2]);
                let l = tp.leaky_relu(z, 0.01);
                tp.sigmoid(l)
            },
            vec![x, w, b],
            1,
        );
    }

    #[test]
    fn elementwise_and_concat_gradients() {
        let a = t(2, 2, &[0.5, -1.0, 2.0, 0.3]);
        let b = t(2, 2, &[1.5, 0.2, -0.4, 0.9]);
        let e = t(1, 1, &[0.3]);
        check(
            |tp, v| {
                let p = tp.mul(v[0], v[1]);
                let s = tp.add(p, v[0]);
                let k = tp.scale_one_plus(s, v[2]);
                tp.concat(&[k, v[1]])
            },
            vec![a, b, e],
            2,
        );
    }

    #[test]
    fn aggregation_gradients() {
        let x = t(4, 2, &[0.5, -1.0, 2.0, 0.3, -0.2, 0.8, 1.0, 1.0]);
        let mats = t(2, 4, &[0.1, 0.2, -0.3, 0.4, 0.9, -0.5, 0.25, 0.75]);
        let nbr = Arc::new(Incidence::from_pairs(4, &[(0, 1), (1, 2), (0, 3)], Some(&[0, 1, 1])));
        let ovl = Arc::new(Incidence::from_pairs(4, &[(0, 2), (2, 3)], None));
        check(
            move |tp, v| {
                let a = tp.edge_conv(v[0], v[1], nbr.clone());
                let b = tp.segment_sum(v[0], ovl.clone());
                tp.mul(a, b)
            },
            vec![x, mats],
            3,
        );
    }

    #[test]
    fn edge_conv_value() {
        // node 0 receives x[1]·M_0, node 1 receives x[0]·M_0
        let mut tp: Tape<f64> = Tape::new();
        let x = tp.leaf(t(2, 2, &[1.0, 2.0, 3.0, 4.0]));
        let m = tp.leaf(t(1, 4, &[1.0, 0.0, 0.0, 2.0]));
        let inc = Arc::new(Incidence::from_pairs(2, &[(0, 1)], Some(&[0])));
        let y = tp.edge_conv(x, m, inc);
        assert_eq!(tp.value(y).data, vec![3.0, 8.0, 1.0, 4.0]);
    }

    #[test]
    fn backward_on_missing_root_fails() {
        let tp: Tape<f32> = Tape::new();
        assert!(matches!(tp.backward(Var(0), Tensor::zeros(1, 1)), Err(NnError::NoTape)));
    }
}
