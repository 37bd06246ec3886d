use std::io::Write;

use nalgebra::DMatrix;
use serde::Serialize;

use super::model::{GraphInputs, ModelMeta, RefinementModel};
use super::objective::build_fair_edge_mask;
use crate::attributes::AttributeMatrix;
use crate::coarsen::{Hierarchy, MergeMap};
use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq)]
pub struct RefineHyper {
    pub lambda_r: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub layers: usize,
    pub init_seed: u64,
}

impl Default for RefineHyper {
    fn default() -> Self {
        RefineHyper {
            lambda_r: 0.5,
            gamma: 0.5,
            epochs: 200,
            learning_rate: 1e-3,
            layers: 2,
            init_seed: 0,
        }
    }
}

impl RefineHyper {
    pub fn validate(&self) -> Result<()> {
        for (name, v) in [("lambda_r", self.lambda_r), ("gamma", self.gamma)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("{name} = {v} outside [0, 1]")));
            }
        }
        if self.layers == 0 {
            return Err(Error::Config("refinement needs at least one layer".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        Ok(())
    }

    pub fn meta(&self) -> ModelMeta {
        ModelMeta {
            lambda_r: self.lambda_r,
            gamma: self.gamma,
            epochs: self.epochs,
            learning_rate: self.learning_rate,
            init_seed: self.init_seed,
        }
    }
}

/// Losses after `epoch` optimizer steps.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LossRecord {
    pub epoch: usize,
    pub l_u: f64,
    pub l_f: f64,
    pub l: f64,
}

pub fn write_loss_trace<W: Write>(trace: &[LossRecord], mut out: W) -> Result<()> {
    writeln!(out, "epoch,L_u,L_f,L")?;
    for r in trace {
        writeln!(out, "{},{:?},{:?},{:?}", r.epoch, r.l_u, r.l_f, r.l)?;
    }
    Ok(())
}

/// Adam with bias-corrected moments.
#[derive(Debug, Clone)]
pub struct Adam {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    t: i32,
    m: Vec<DMatrix<f64>>,
    v: Vec<DMatrix<f64>>,
}

impl Adam {
    pub fn new(lr: f64, shapes: &[DMatrix<f64>]) -> Self {
        let zeros: Vec<_> = shapes.iter().map(|p| DMatrix::zeros(p.nrows(), p.ncols())).collect();
        Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            t: 0,
            m: zeros.clone(),
            v: zeros,
        }
    }

    pub fn step(&mut self, params: &mut [DMatrix<f64>], grads: &[DMatrix<f64>]) {
        self.t += 1;
        let c1 = 1.0 - self.beta1.powi(self.t);
        let c2 = 1.0 - self.beta2.powi(self.t);
        for ((p, g), (m, v)) in params.iter_mut().zip(grads).zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for k in 0..p.len() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g[k];
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g[k] * g[k];
                let m_hat = m[k] / c1;
                let v_hat = v[k] / c2;
                p[k] -= self.lr * m_hat / (v_hat.sqrt() + self.eps);
            }
        }
    }
}

/// Propagation inputs for one level of the hierarchy.
pub fn graph_inputs(g: &Graph, s: &AttributeMatrix) -> Result<GraphInputs> {
    GraphInputs::new(g.normalized_adjacency(true)?, s.row_normalized()?)
}

/// Trains the refinement model on the coarsest graph with `H_0 = E_c`.
pub fn train_refiner(
    g: &Graph,
    s: &AttributeMatrix,
    e: &Embedding,
    hyper: &RefineHyper,
) -> Result<(RefinementModel, Vec<LossRecord>)> {
    hyper.validate()?;
    if e.rows() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            got: e.rows(),
        });
    }
    let inputs = graph_inputs(g, s)?;
    let mask = build_fair_edge_mask(g, s, hyper.gamma)?;
    let h0 = &e.matrix;
    let mut model = RefinementModel::glorot(hyper.layers, e.dim(), s.width(), hyper.init_seed);
    let mut adam = Adam::new(hyper.learning_rate, &model.layers);
    let mut trace = Vec::with_capacity(hyper.epochs + 1);
    for epoch in 0..=hyper.epochs {
        let (loss, grads) = model.gradients(&inputs, h0, &mask, hyper.lambda_r)?;
        if !loss.total.is_finite() {
            return Err(Error::Diverged {
                epoch,
                l_u: loss.utility,
                l_f: loss.fairness,
            });
        }
        trace.push(LossRecord {
            epoch,
            l_u: loss.utility,
            l_f: loss.fairness,
            l: loss.total,
        });
        if epoch < hyper.epochs {
            adam.step(&mut model.layers, &grads);
        }
    }
    Ok((model, trace))
}

/// Copies each coarse row to every fine node it represents.
pub fn project(e_coarse: &DMatrix<f64>, mm: &MergeMap) -> Result<DMatrix<f64>> {
    if e_coarse.nrows() != mm.coarse_nodes {
        return Err(Error::DimensionMismatch {
            expected: mm.coarse_nodes,
            got: e_coarse.nrows(),
        });
    }
    let mut out = DMatrix::zeros(mm.fine_nodes(), e_coarse.ncols());
    for (child, &parent) in mm.child_to_parent.iter().enumerate() {
        out.row_mut(child).copy_from(&e_coarse.row(parent));
    }
    Ok(out)
}

/// Applies the trained model level by level from the coarsest graph down to
/// the original one. Every refined level is row-normalized before it is
/// projected further.
pub fn refine_all(h: &Hierarchy, e_c: &Embedding, model: &RefinementModel) -> Result<Embedding> {
    if e_c.rows() != h.coarsest().graph.node_count() {
        return Err(Error::DimensionMismatch {
            expected: h.coarsest().graph.node_count(),
            got: e_c.rows(),
        });
    }
    let apply = |level: usize, h0: &DMatrix<f64>| -> Result<Embedding> {
        let lv = &h.levels[level];
        let inputs = graph_inputs(&lv.graph, &lv.attributes)?;
        let fwd = model.forward(&inputs, h0)?;
        Embedding::new(fwd.last().clone()).row_normalized()
    };
    if h.depth() == 0 {
        return apply(0, &e_c.matrix);
    }
    let mut current = e_c.clone();
    for level in (0..h.depth()).rev() {
        let h0 = project(&current.matrix, &h.merges[level])?;
        current = apply(level, &h0)?;
    }
    Ok(current)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn projection() {
        let e = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(project(&e, &MergeMap::identity(2)).unwrap(), e);
        let mm = MergeMap {
            child_to_parent: vec![1, 0, 1],
            coarse_nodes: 2,
        };
        let h0 = project(&e, &mm).unwrap();
        assert_eq!(h0.row(0), h0.row(2));
        assert_eq!(h0.row(0), e.row(1));
        assert!(project(&DMatrix::zeros(3, 2), &mm).is_err());
    }

    #[test]
    fn adam_minimizes_quadratic() {
        let mut p = vec![DMatrix::from_element(1, 1, 5.0)];
        let mut opt = Adam::new(0.1, &p);
        for _ in 0..500 {
            let g = vec![p[0].map(|x| 2.0 * (x - 1.0))];
            opt.step(&mut p, &g);
        }
        assert!((p[0][(0, 0)] - 1.0).abs() < 1e-2);
    }

    #[test]
    fn zero_epochs_returns_initialization() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let s = AttributeMatrix::from_codes("s", &[0, 1, 0], 2).unwrap();
        let e = Embedding::new(DMatrix::from_fn(3, 4, |i, j| ((i * 4 + j) as f64).sin()));
        let hyper = RefineHyper {
            epochs: 0,
            init_seed: 4,
            ..Default::default()
        };
        let (model, trace) = train_refiner(&g, &s, &e, &hyper).unwrap();
        assert_eq!(model, RefinementModel::glorot(2, 4, 2, 4));
        assert_eq!(trace.len(), 1);
    }

    #[test]
    fn loss_trace_csv() {
        let trace = [LossRecord {
            epoch: 0,
            l_u: 0.5,
            l_f: -0.25,
            l: 0.125,
        }];
        let mut buf = Vec::new();
        write_loss_trace(&trace, &mut buf).unwrap();
        assert_eq!(String::from_utf8(buf).unwrap(), "epoch,L_u,L_f,L\n0,0.5,-0.25,0.125\n");
    }

    #[test]
    fn hyper_validation() {
        let bad = RefineHyper {
            gamma: 1.5,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        assert!(RefineHyper::default().validate().is_ok());
    }
}
