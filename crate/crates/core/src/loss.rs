//! Self-supervised tiling loss: coverage, overlap and contact terms combined
//! as a product. Everything here runs in `f64` and returns analytic
//! gradients with respect to the node probabilities.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::graph::AdjacencyGraph;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LossError {
    #[error("loss is undefined on an empty node set")]
    EmptyGraph,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Combine {
    #[default]
    Product,
    /// Ablation only: the sum of the three terms.
    Sum,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LossWeights {
    pub w_a: f64,
    pub w_o: f64,
    pub w_e: f64,
    pub eps_log: f64,
    pub combine: Combine,
    pub use_area: bool,
    pub use_overlap: bool,
    pub use_edges: bool,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_a: 1.0,
            w_o: 10.0,
            w_e: 0.02,
            eps_log: 1e-7,
            combine: Combine::Product,
            use_area: true,
            use_overlap: true,
            use_edges: true,
        }
    }
}

/// Graph data the loss needs, detached from geometry.
#[derive(Clone, Debug, PartialEq)]
pub struct LossInputs {
    pub areas: Vec<f64>,
    pub overlaps: Vec<(usize, usize)>,
    /// `(i, k, L_ik / L_max)` per neighbor edge.
    pub contacts: Vec<(usize, usize, f64)>,
}

impl LossInputs {
    pub fn from_graph(g: &AdjacencyGraph) -> LossInputs {
        LossInputs {
            areas: g.areas(),
            overlaps: g.overlap_edges.clone(),
            contacts: g.neighbor_edges.iter().map(|e| (e.a, e.b, e.length / g.l_max)).collect(),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossTerms {
    pub area: f64,
    pub overlap: f64,
    pub edges: f64,
    pub total: f64,
}

fn area_parts(x: &[f64], areas: &[f64], eps: f64) -> Result<(f64, f64, bool), LossError> {
    if x.is_empty() {
        return Err(LossError::EmptyGraph);
    }
    let total: f64 = areas.iter().sum();
    let covered: f64 = x.iter().zip(areas).map(|(xi, ai)| xi * ai).sum();
    let ratio = covered / total;
    let active = ratio > eps && ratio < 1.0;
    Ok((ratio.clamp(eps, 1.0), total, active))
}

/// `1 − w_a · ln(Σ A_i x_i / Σ A_i)`, argument clamped to `[eps, 1]`.
pub fn loss_area(x: &[f64], areas: &[f64], w_a: f64, eps: f64) -> Result<f64, LossError> {
    let (ratio, _, _) = area_parts(x, areas, eps)?;
    Ok(1.0 - w_a * ratio.ln())
}

/// `1 − w_o · mean ln(1 − x_i x_k)` over overlap edges; 1 when there are none.
pub fn loss_overlap(x: &[f64], overlaps: &[(usize, usize)], w_o: f64, eps: f64) -> f64 {
    if overlaps.is_empty() {
        return 1.0;
    }
    let s: f64 = overlaps.iter().map(|&(i, k)| (1.0 - x[i] * x[k]).max(eps).ln()).sum();
    1.0 - w_o * s / overlaps.len() as f64
}

/// `1 − w_e · mean ln(x_i x_k L_ik / L_max)` over neighbor edges; 1 when there are none.
pub fn loss_edges(x: &[f64], contacts: &[(usize, usize, f64)], w_e: f64, eps: f64) -> f64 {
    if contacts.is_empty() {
        return 1.0;
    }
    let s: f64 = contacts.iter().map(|&(i, k, r)| (x[i] * x[k] * r).max(eps).ln()).sum();
    1.0 - w_e * s / contacts.len() as f64
}

pub fn loss_total(la: f64, lo: f64, le: f64) -> f64 {
    la * lo * le
}

/// Loss value, its terms, and `dL/dx`.
pub fn evaluate(x: &[f64], inp: &LossInputs, w: &LossWeights) -> Result<(LossTerms, Vec<f64>), LossError> {
    let n = x.len();
    let eps = w.eps_log;

    let mut ga = vec![0.0; n];
    let la = if w.use_area {
        let (ratio, total, active) = area_parts(x, &inp.areas, eps)?;
        if active {
            for i in 0..n {
                ga[i] = -w.w_a * inp.areas[i] / (total * ratio);
            }
        }
        1.0 - w.w_a * ratio.ln()
    } else if n == 0 {
        return Err(LossError::EmptyGraph);
    } else {
        1.0
    };

    let mut go = vec![0.0; n];
    let lo = if w.use_overlap {
        let m = inp.overlaps.len() as f64;
        for &(i, k) in &inp.overlaps {
            let arg = 1.0 - x[i] * x[k];
            if arg > eps {
                go[i] += w.w_o / m * x[k] / arg;
                go[k] += w.w_o / m * x[i] / arg;
            }
        }
        loss_overlap(x, &inp.overlaps, w.w_o, eps)
    } else {
        1.0
    };

    let mut ge = vec![0.0; n];
    let le = if w.use_edges {
        let m = inp.contacts.len() as f64;
        for &(i, k, r) in &inp.contacts {
            if x[i] * x[k] * r > eps {
                ge[i] -= w.w_e / m / x[i];
                ge[k] -= w.w_e / m / x[k];
            }
        }
        loss_edges(x, &inp.contacts, w.w_e, eps)
    } else {
        1.0
    };

    let (total, grad) = match w.combine {
        Combine::Product => {
            let t = la * lo * le;
            let g = (0..n).map(|i| lo * le * ga[i] + la * le * go[i] + la * lo * ge[i]).collect();
            (t, g)
        }
        Combine::Sum => {
            let pick = |on: bool, v: f64| if on { v } else { 0.0 };
            let t = pick(w.use_area, la) + pick(w.use_overlap, lo) + pick(w.use_edges, le);
            let g = (0..n).map(|i| ga[i] + go[i] + ge[i]).collect();
            (t, g)
        }
    };
    Ok((
        LossTerms {
            area: la,
            overlap: lo,
            edges: le,
            total,
        },
        grad,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn area_closed_forms() {
        let a = [1.0; 4];
        assert_eq!(loss_area(&[1.0; 4], &a, 1.0, 1e-7).unwrap(), 1.0);
        assert!((loss_area(&[0.5; 4], &a, 1.0, 1e-7).unwrap() - 1.693147).abs() < 1e-6);
        let clamped = loss_area(&[0.0; 4], &a, 1.0, 1e-7).unwrap();
        assert!((clamped - (1.0 - (1e-7f64).ln())).abs() < 1e-12);
        assert_eq!(loss_area(&[], &[], 1.0, 1e-7), Err(LossError::EmptyGraph));
    }

    #[test]
    fn overlap_closed_forms() {
        assert_eq!(loss_overlap(&[0.5, 0.5], &[], 10.0, 1e-7), 1.0);
        assert!((loss_overlap(&[1e-6, 1e-6], &[(0, 1)], 10.0, 1e-7) - 1.0).abs() < 1e-6);
        assert!((loss_overlap(&[0.5, 0.5], &[(0, 1)], 10.0, 1e-7) - 3.876820).abs() < 1e-6);
    }

    #[test]
    fn edge_closed_forms() {
        assert_eq!(loss_edges(&[1.0, 1.0], &[(0, 1, 1.0)], 0.02, 1e-7), 1.0);
        assert!((loss_edges(&[1.0, 1.0], &[(0, 1, 0.5)], 0.02, 1e-7) - 1.013863).abs() < 1e-6);
        assert_eq!(loss_edges(&[1.0], &[], 0.02, 1e-7), 1.0);
    }

    #[test]
    fn total_closed_forms() {
        assert_eq!(loss_total(1.0, 1.0, 1.0), 1.0);
        assert!((loss_total(1.693147, 1.0, 1.0) - 1.693147).abs() < 1e-12);
        // product of the three closed forms: (1 − ln 0.5)(1 − 10 ln 0.75)(1 − 0.02 ln 0.5)
        assert!((loss_total(1.693147, 3.876820, 1.013863) - 6.655023).abs() < 1e-5);
    }

    fn sample_inputs() -> (Vec<f64>, LossInputs) {
        let x = vec![0.3, 0.8, 0.55, 0.1, 0.9];
        let inp = LossInputs {
            areas: vec![1.0, 0.5, 0.5, 1.0, 0.5],
            overlaps: vec![(0, 1), (1, 2), (3, 4)],
            contacts: vec![(0, 2, 0.25), (2, 3, 0.5), (1, 4, 0.125)],
        };
        (x, inp)
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let (x, inp) = sample_inputs();
        for combine in [Combine::Product, Combine::Sum] {
            let w = LossWeights { combine, ..Default::default() };
            let (_, g) = evaluate(&x, &inp, &w).unwrap();
            for i in 0..x.len() {
                let h = 1e-6;
                let mut xp = x.clone();
                xp[i] += h;
                let mut xm = x.clone();
                xm[i] -= h;
                let fd = (evaluate(&xp, &inp, &w).unwrap().0.total - evaluate(&xm, &inp, &w).unwrap().0.total) / (2.0 * h);
                assert!((fd - g[i]).abs() / g[i].abs().max(1e-8) < 1e-6, "{combine:?} node {i}: {fd} vs {}", g[i]);
            }
        }
    }

    #[test]
    fn perfect_selection_attains_lower_bound() {
        let inp = LossInputs {
            areas: vec![1.0; 2],
            overlaps: vec![],
            contacts: vec![(0, 1, 1.0)],
        };
        let (t, _) = evaluate(&[1.0, 1.0], &inp, &LossWeights::default()).unwrap();
        assert_eq!(t.total, 1.0);
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn terms_at_least_one_and_monotone(
                xs in proptest::collection::vec(0.01..0.99f64, 5),
                i in 0usize..5,
                bump in 0.0..0.5f64,
            ) {
                let (_, inp) = sample_inputs();
                let w = LossWeights::default();
                let (t, _) = evaluate(&xs, &inp, &w).unwrap();
                prop_assert!(t.area >= 1.0 && t.overlap >= 1.0 && t.edges >= 1.0 && t.total >= 1.0);
                let mut ys = xs.clone();
                ys[i] = (ys[i] + bump).min(0.99);
                let la = |x: &[f64]| loss_area(x, &inp.areas, w.w_a, w.eps_log).unwrap();
                let le = |x: &[f64]| loss_edges(x, &inp.contacts, w.w_e, w.eps_log);
                prop_assert!(la(&ys) <= la(&xs) + 1e-12);
                prop_assert!(le(&ys) <= le(&xs) + 1e-12);
                let penalty = |x: &[f64]| -> f64 {
                    inp.overlaps.iter().filter(|&&(a, b)| a == i || b == i).map(|&(a, b)| -(1.0 - x[a] * x[b]).ln()).sum()
                };
                prop_assert!(penalty(&ys) >= penalty(&xs) - 1e-12);
            }
        }
    }
}
