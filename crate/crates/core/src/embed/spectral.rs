use nalgebra::{DMatrix, DVector};

use super::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::graph::Graph;

/// Dense eigendecomposition is cubic; beyond this the spectral embedder refuses.
pub const MAX_SPECTRAL_NODES: usize = 5000;

/// Top eigenvectors of the self-loop-augmented normalized adjacency, scaled by
/// the square root of their (clamped) eigenvalues.
#[derive(Debug, Clone)]
pub struct Spectral {
    pub dim: usize,
}

/// The `d` largest eigenpairs of `D̃^{-1/2}(A + I)D̃^{-1/2}`, eigenvalues
/// descending (ties by original position), each eigenvector sign-fixed so its
/// largest-magnitude entry is positive.
pub fn spectral_decomposition(g: &Graph, d: usize) -> Result<(DVector<f64>, DMatrix<f64>)> {
    let n = g.node_count();
    if n > MAX_SPECTRAL_NODES {
        return Err(Error::GraphTooLarge {
            n,
            max: MAX_SPECTRAL_NODES,
        });
    }
    if d > n {
        return Err(Error::DimensionTooLarge { d, n });
    }
    let p = g.normalized_adjacency(true)?.to_dense();
    let eig = p.symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut values = DVector::zeros(d);
    let mut vectors = DMatrix::zeros(n, d);
    for (k, &src) in order.iter().take(d).enumerate() {
        values[k] = eig.eigenvalues[src];
        let mut v = eig.eigenvectors.column(src).clone_owned();
        let mut pivot = 0;
        for i in 0..n {
            if v[i].abs() > v[pivot].abs() {
                pivot = i;
            }
        }
        if v[pivot] < 0.0 {
            v.neg_mut();
        }
        vectors.set_column(k, &v);
    }
    Ok((values, vectors))
}

impl Embedder for Spectral {
    fn embed(&self, g: &Graph) -> Result<Embedding> {
        let (values, mut vectors) = spectral_decomposition(g, self.dim)?;
        for k in 0..self.dim {
            let scale = values[k].max(0.0).sqrt();
            vectors.column_mut(k).scale_mut(scale);
        }
        Ok(Embedding::new(vectors))
    }
}
