use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::objective::{losses, output_gradient, FairEdgeMask, Losses};
use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

/// Stack of graph-convolution layers `H_i = tanh(P (H_{i-1} ‖ S̃) Θ_i)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RefinementModel {
    /// Each `(dim + attr_width) x dim`.
    pub layers: Vec<DMatrix<f64>>,
    pub dim: usize,
    pub attr_width: usize,
}

/// Inputs fixed for one graph: the propagation matrix and the row-normalized
/// attribute matrix, with `P S̃` cached.
#[derive(Debug, Clone)]
pub struct GraphInputs {
    pub propagation: SparseMatrix,
    pub attributes: DMatrix<f64>,
    propagated_attributes: DMatrix<f64>,
}

impl GraphInputs {
    pub fn new(propagation: SparseMatrix, attributes: DMatrix<f64>) -> Result<Self> {
        if propagation.rows() != attributes.nrows() {
            return Err(Error::DimensionMismatch {
                expected: propagation.rows(),
                got: attributes.nrows(),
            });
        }
        let propagated_attributes = propagation.mul_dense(&attributes);
        Ok(GraphInputs {
            propagation,
            attributes,
            propagated_attributes,
        })
    }

    pub fn nodes(&self) -> usize {
        self.propagation.rows()
    }
}

/// Activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct Forward {
    /// `P (H_{i-1} ‖ S̃)` for each layer.
    pub propagated: Vec<DMatrix<f64>>,
    /// `H_1 .. H_l`.
    pub outputs: Vec<DMatrix<f64>>,
}

impl Forward {
    pub fn last(&self) -> &DMatrix<f64> {
        self.outputs.last().expect("model has at least one layer")
    }
}

impl RefinementModel {
    pub fn zeros(layers: usize, dim: usize, attr_width: usize) -> Self {
        RefinementModel {
            layers: vec![DMatrix::zeros(dim + attr_width, dim); layers],
            dim,
            attr_width,
        }
    }

    /// Glorot-uniform initialization.
    pub fn glorot(layers: usize, dim: usize, attr_width: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let fan_in = dim + attr_width;
        let limit = (6.0 / (fan_in + dim) as f64).sqrt();
        let layers = (0..layers)
            .map(|_| DMatrix::from_fn(fan_in, dim, |_, _| rng.random_range(-limit..limit)))
            .collect();
        RefinementModel {
            layers,
            dim,
            attr_width,
        }
    }

    pub fn parameter_count(&self) -> usize {
        self.layers.iter().map(|l| l.len()).sum()
    }

    fn check_inputs(&self, inputs: &GraphInputs, h0: &DMatrix<f64>) -> Result<()> {
        if self.layers.is_empty() {
            return Err(Error::Config("refinement model needs at least one layer".into()));
        }
        if h0.ncols() != self.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: h0.ncols(),
            });
        }
        if inputs.attributes.ncols() != self.attr_width {
            return Err(Error::DimensionMismatch {
                expected: self.attr_width,
                got: inputs.attributes.ncols(),
            });
        }
        if h0.nrows() != inputs.nodes() {
            return Err(Error::DimensionMismatch {
                expected: inputs.nodes(),
                got: h0.nrows(),
            });
        }
        Ok(())
    }

    pub fn forward(&self, inputs: &GraphInputs, h0: &DMatrix<f64>) -> Result<Forward> {
        self.check_inputs(inputs, h0)?;
        let n = h0.nrows();
        let mut propagated = Vec::with_capacity(self.layers.len());
        let mut outputs: Vec<DMatrix<f64>> = Vec::with_capacity(self.layers.len());
        for theta in &self.layers {
            let prev = outputs.last().unwrap_or(h0);
            let ph = inputs.propagation.mul_dense(prev);
            let mut px = DMatrix::zeros(n, self.dim + self.attr_width);
            px.columns_mut(0, self.dim).copy_from(&ph);
            px.columns_mut(self.dim, self.attr_width)
                .copy_from(&inputs.propagated_attributes);
            let h = (&px * theta).map(f64::tanh);
            propagated.push(px);
            outputs.push(h);
        }
        Ok(Forward { propagated, outputs })
    }

    /// Loss and its exact gradient with respect to every layer.
    pub fn gradients(
        &self,
        inputs: &GraphInputs,
        h0: &DMatrix<f64>,
        mask: &FairEdgeMask,
        lambda_r: f64,
    ) -> Result<(Losses, Vec<DMatrix<f64>>)> {
        let fwd = self.forward(inputs, h0)?;
        let loss = losses(h0, fwd.last(), mask, lambda_r);
        let mut upstream = output_gradient(h0, fwd.last(), mask, lambda_r);
        let mut grads = vec![DMatrix::zeros(0, 0); self.layers.len()];
        for i in (0..self.layers.len()).rev() {
            let h = &fwd.outputs[i];
            let dz = upstream.zip_map(h, |g, y| g * (1.0 - y * y));
            grads[i] = fwd.propagated[i].transpose() * &dz;
            if i > 0 {
                let theta_h = self.layers[i].rows(0, self.dim);
                upstream = inputs.propagation.mul_dense(&(&dz * theta_h.transpose()));
            }
        }
        Ok((loss, grads))
    }

    /// Writes `<stem>.tensors` (text) and `<stem>.json` (shapes and metadata).
    pub fn save(&self, stem: &Path, meta: &ModelMeta) -> Result<()> {
        let mut f = BufWriter::new(File::create(stem.with_extension("tensors"))?);
        for (i, layer) in self.layers.iter().enumerate() {
            writeln!(f, "layer {} {} {}", i, layer.nrows(), layer.ncols())?;
            for r in 0..layer.nrows() {
                let row: Vec<String> = layer.row(r).iter().map(|x| format!("{x:?}")).collect();
                writeln!(f, "{}", row.join(" "))?;
            }
        }
        f.flush()?;
        let sidecar = ModelSidecar {
            layer_shapes: self.layers.iter().map(|l| [l.nrows(), l.ncols()]).collect(),
            dim: self.dim,
            attr_width: self.attr_width,
            meta: meta.clone(),
        };
        let mut f = BufWriter::new(File::create(stem.with_extension("json"))?);
        serde_json::to_writer_pretty(&mut f, &sidecar)?;
        writeln!(f)?;
        f.flush()?;
        Ok(())
    }

    pub fn load(stem: &Path) -> Result<(RefinementModel, ModelMeta)> {
        let sidecar: ModelSidecar = serde_json::from_reader(BufReader::new(File::open(stem.with_extension("json"))?))?;
        let reader = BufReader::new(File::open(stem.with_extension("tensors"))?);
        let mut lines = reader.lines().enumerate();
        let mut layers = Vec::with_capacity(sidecar.layer_shapes.len());
        for &[rows, cols] in &sidecar.layer_shapes {
            let (lineno, header) = lines.next().ok_or_else(|| Error::Parse {
                line: 0,
                msg: "tensor file ends early".into(),
            })?;
            let header = header?;
            if !header.starts_with("layer ") {
                return Err(Error::Parse {
                    line: lineno + 1,
                    msg: format!("expected layer header, got {header:?}"),
                });
            }
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (lineno, line) = lines.next().ok_or_else(|| Error::Parse {
                    line: 0,
                    msg: "tensor file ends early".into(),
                })?;
                for tok in line?.split_whitespace() {
                    data.push(tok.parse::<f64>().map_err(|e| Error::Parse {
                        line: lineno + 1,
                        msg: format!("bad value {tok:?}: {e}"),
                    })?);
                }
            }
            if data.len() != rows * cols {
                return Err(Error::DimensionMismatch {
                    expected: rows * cols,
                    got: data.len(),
                });
            }
            layers.push(DMatrix::from_row_slice(rows, cols, &data));
        }
        Ok((
            RefinementModel {
                layers,
                dim: sidecar.dim,
                attr_width: sidecar.attr_width,
            },
            sidecar.meta,
        ))
    }
}

/// Hyperparameters and provenance stored next to a saved model.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ModelMeta {
    pub lambda_r: f64,
    pub gamma: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub init_seed: u64,
}

#[derive(Serialize, Deserialize)]
struct ModelSidecar {
    layer_shapes: Vec<[usize; 2]>,
    dim: usize,
    attr_width: usize,
    #[serde(flatten)]
    meta: ModelMeta,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Graph;

    fn inputs_for(g: &Graph, s: DMatrix<f64>) -> GraphInputs {
        GraphInputs::new(g.normalized_adjacency(true).unwrap(), s).unwrap()
    }

    #[test]
    fn zero_parameters_give_zero_output() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let inputs = inputs_for(&g, DMatrix::from_element(3, 2, 0.5));
        let model = RefinementModel::zeros(2, 4, 2);
        let h0 = DMatrix::from_fn(3, 4, |i, j| (i + j) as f64 * 0.1);
        let fwd = model.forward(&inputs, &h0).unwrap();
        assert_eq!(fwd.outputs.len(), 2);
        assert!(fwd.last().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn scalar_forward() {
        // One node with a self-loop: Ã = [2], D̃ = [2], P = [1].
        let g = Graph::from_edges(1, [(0, 0, 1.0)]).unwrap();
        let inputs = inputs_for(&g, DMatrix::from_element(1, 1, 1.0));
        let mut model = RefinementModel::zeros(1, 1, 1);
        // pre-activation = h0 * θ_h + s̃ * θ_s = 1 * 0.3 + 1 * 0.2
        model.layers[0] = DMatrix::from_column_slice(2, 1, &[0.3, 0.2]);
        let h0 = DMatrix::from_element(1, 1, 1.0);
        let out = model.forward(&inputs, &h0).unwrap();
        assert!((out.last()[(0, 0)] - 0.5f64.tanh()).abs() < 1e-15);
        assert!((0.5f64.tanh() - 0.4621).abs() < 1e-4);
    }

    #[test]
    fn zero_point_has_zero_gradient() {
        let g = Graph::from_edges(3, [(0, 1, 1.0), (1, 2, 1.0)]).unwrap();
        let inputs = inputs_for(&g, DMatrix::from_element(3, 2, 0.5));
        let model = RefinementModel::zeros(2, 3, 2);
        let h0 = DMatrix::zeros(3, 3);
        let mask = FairEdgeMask {
            edges: vec![(0, 1), (1, 2)],
            nodes: 3,
        };
        let (_, grads) = model.gradients(&inputs, &h0, &mask, 0.5).unwrap();
        assert!(grads.iter().all(|g| g.iter().all(|&x| x == 0.0)));
    }

    #[test]
    fn shape_errors() {
        let g = Graph::from_edges(2, [(0, 1, 1.0)]).unwrap();
        let inputs = inputs_for(&g, DMatrix::from_element(2, 2, 0.5));
        let model = RefinementModel::zeros(1, 3, 2);
        assert!(model.forward(&inputs, &DMatrix::zeros(2, 4)).is_err());
        assert!(model.forward(&inputs, &DMatrix::zeros(3, 3)).is_err());
        let wrong_attrs = RefinementModel::zeros(1, 3, 1);
        assert!(wrong_attrs.forward(&inputs, &DMatrix::zeros(2, 3)).is_err());
    }

    #[test]
    fn save_and_load() {
        let model = RefinementModel::glorot(2, 3, 2, 9);
        let dir = tempfile::tempdir().unwrap();
        let stem = dir.path().join("model");
        let meta = ModelMeta {
            lambda_r: 0.5,
            gamma: 0.5,
            epochs: 10,
            learning_rate: 1e-3,
            init_seed: 9,
        };
        model.save(&stem, &meta).unwrap();
        let (back, back_meta) = RefinementModel::load(&stem).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_meta, meta);
    }
}
