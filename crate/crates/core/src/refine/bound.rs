use serde::Serialize;

use crate::embed::Embedding;
use crate::error::{Error, Result};
use crate::graph::Graph;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairBound {
    pub group_p: usize,
    pub group_q: usize,
    /// `‖μ_p − μ_q‖₂`
    pub lhs: f64,
    /// `2 (1 − min(β_p, β_q))`
    pub bound: f64,
    pub holds: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    /// Fraction of each group's nodes with at least one inter-group edge.
    pub beta: Vec<f64>,
    pub pairs: Vec<PairBound>,
    pub tolerance: f64,
}

impl BoundReport {
    pub fn all_hold(&self) -> bool {
        self.pairs.iter().all(|p| p.holds)
    }
}

/// Compares the distance between group mean embeddings with the bound implied
/// by how many nodes of each group touch another group. `groups[u]` is in
/// `0..n_groups`.
pub fn theorem1_check(e: &Embedding, groups: &[usize], n_groups: usize, g: &Graph, tol: f64) -> Result<BoundReport> {
    let n = g.node_count();
    if e.rows() != n || groups.len() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: if e.rows() != n { e.rows() } else { groups.len() },
        });
    }
    if n_groups < 2 {
        return Err(Error::EmptyGroups);
    }
    let mut size = vec![0usize; n_groups];
    let mut bridging = vec![0usize; n_groups];
    let mut sums = vec![nalgebra::RowDVector::<f64>::zeros(e.dim()); n_groups];
    for u in 0..n {
        let gu = groups[u];
        if gu >= n_groups {
            return Err(Error::IndexOutOfRange { index: gu, len: n_groups });
        }
        size[gu] += 1;
        sums[gu] += e.matrix.row(u);
        if g.neighbors(u).any(|(v, _)| groups[v] != gu) {
            bridging[gu] += 1;
        }
    }
    if let Some(k) = size.iter().position(|&s| s == 0) {
        return Err(Error::EmptyGroup(k.to_string()));
    }
    let beta: Vec<f64> = bridging.iter().zip(&size).map(|(&b, &s)| b as f64 / s as f64).collect();
    let means: Vec<_> = sums.iter().zip(&size).map(|(s, &c)| s / c as f64).collect();
    let mut pairs = Vec::new();
    for p in 0..n_groups {
        for q in p + 1..n_groups {
            let lhs = (&means[p] - &means[q]).norm();
            let bound = 2.0 * (1.0 - beta[p].min(beta[q]));
            pairs.push(PairBound {
                group_p: p,
                group_q: q,
                lhs,
                bound,
                holds: lhs <= bound + tol,
            });
        }
    }
    Ok(BoundReport {
        beta,
        pairs,
        tolerance: tol,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn identical_embeddings_meet_any_bound() {
        let g = Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let e = Embedding::new(DMatrix::from_element(4, 2, 0.5f64.sqrt()));
        let r = theorem1_check(&e, &[0, 0, 1, 1], 2, &g, 1e-9).unwrap();
        assert_eq!(r.pairs[0].lhs, 0.0);
        assert!(r.all_hold());
    }

    #[test]
    fn no_bridges_bound_two() {
        let g = Graph::from_edges(4, [(0, 1, 1.0), (2, 3, 1.0)]).unwrap();
        let e = Embedding::new(DMatrix::from_row_slice(4, 2, &[1.0, 0.0, 1.0, 0.0, -1.0, 0.0, -1.0, 0.0]));
        let r = theorem1_check(&e, &[0, 0, 1, 1], 2, &g, 0.0).unwrap();
        assert_eq!(r.beta, vec![0.0, 0.0]);
        assert_eq!(r.pairs[0].bound, 2.0);
        assert_eq!(r.pairs[0].lhs, 2.0);
        assert!(r.all_hold());
    }

    #[test]
    fn full_bridging_bound_zero() {
        let g = Graph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let e = Embedding::new(DMatrix::from_row_slice(2, 1, &[1.0, -1.0]));
        let r = theorem1_check(&e, &[0, 1], 2, &g, 1e-3).unwrap();
        assert_eq!(r.beta, vec![1.0, 1.0]);
        assert_eq!(r.pairs[0].bound, 0.0);
        assert!(!r.all_hold());
    }

    #[test]
    fn empty_group_rejected() {
        let g = Graph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let e = Embedding::new(DMatrix::from_element(2, 1, 1.0));
        assert!(matches!(theorem1_check(&e, &[0, 0], 2, &g, 0.0), Err(Error::EmptyGroup(_))));
        assert!(matches!(theorem1_check(&e, &[0, 0], 1, &g, 0.0), Err(Error::EmptyGroups)));
    }
}
