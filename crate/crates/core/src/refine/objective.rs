use nalgebra::DMatrix;
use serde::Serialize;

use crate::attributes::{divergence, AttributeMatrix};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Undirected edges whose endpoints differ enough in attributes to be pulled
/// together by the fairness loss.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FairEdgeMask {
    /// Each unordered edge once, as `(u, v)` with `u < v`.
    pub edges: Vec<(usize, usize)>,
    pub nodes: usize,
}

impl FairEdgeMask {
    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    pub fn contains(&self, u: usize, v: usize) -> bool {
        self.edges.binary_search(&(u.min(v), u.max(v))).is_ok()
    }
}

/// Keeps edge `(u, v)` when `max(φ(u, v), φ(v, u)) >= γ`. Self-loops never
/// enter the mask.
pub fn build_fair_edge_mask(g: &Graph, s: &AttributeMatrix, gamma: f64) -> Result<FairEdgeMask> {
    if s.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            got: s.node_count(),
        });
    }
    let mut edges = Vec::new();
    for (u, v, _) in g.edges() {
        if u == v {
            continue;
        }
        let phi = divergence(s.row(u), s.row(v))?.max(divergence(s.row(v), s.row(u))?);
        if phi >= gamma {
            edges.push((u, v));
        }
    }
    Ok(FairEdgeMask {
        edges,
        nodes: g.node_count(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Losses {
    pub utility: f64,
    pub fairness: f64,
    pub total: f64,
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// `L_u = ‖H_0 − H_l‖²_F / n`, `L_f = −mean over masked edges of
/// sigmoid(h_u · h_v)` (0 for an empty mask), `L = (1 − λr) L_u + λr L_f`.
pub fn losses(h0: &DMatrix<f64>, hl: &DMatrix<f64>, mask: &FairEdgeMask, lambda_r: f64) -> Losses {
    let n = h0.nrows().max(1) as f64;
    let utility = (h0 - hl).norm_squared() / n;
    let fairness = if mask.edges.is_empty() {
        0.0
    } else {
        let sum: f64 = mask
            .edges
            .iter()
            .map(|&(u, v)| sigmoid(hl.row(u).dot(&hl.row(v))))
            .sum();
        -sum / mask.edges.len() as f64
    };
    Losses {
        utility,
        fairness,
        total: (1.0 - lambda_r) * utility + lambda_r * fairness,
    }
}

/// Gradient of `L` with respect to `H_l`.
pub(crate) fn output_gradient(h0: &DMatrix<f64>, hl: &DMatrix<f64>, mask: &FairEdgeMask, lambda_r: f64) -> DMatrix<f64> {
    let n = h0.nrows().max(1) as f64;
    let mut g = (hl - h0) * (2.0 * (1.0 - lambda_r) / n);
    if !mask.edges.is_empty() && lambda_r != 0.0 {
        let scale = lambda_r / mask.edges.len() as f64;
        for &(u, v) in &mask.edges {
            let s = sigmoid(hl.row(u).dot(&hl.row(v)));
            let c = -scale * s * (1.0 - s);
            let (hu, hv) = (hl.row(u).clone_owned(), hl.row(v).clone_owned());
            let mut gu = g.row_mut(u);
            gu += hv * c;
            let mut gv = g.row_mut(v);
            gv += hu * c;
        }
    }
    g
}
