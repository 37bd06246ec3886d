//! Truncated random walks fed to skip-gram with negative sampling.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Embedder, Embedding};
use crate::error::{Error, Result};
use crate::graph::Graph;

const NEG_TABLE_SIZE: usize = 1_000_000;
// RNG stream ids; walk streams start after these.
const TRAIN_STREAM: u64 = 0;
const WALK_STREAM_BASE: u64 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct DeepWalkParams {
    pub walks_per_node: usize,
    pub walk_length: usize,
    pub window: usize,
    pub negatives: usize,
    pub epochs: usize,
    pub initial_lr: f64,
}

impl Default for DeepWalkParams {
    fn default() -> Self {
        DeepWalkParams {
            walks_per_node: 10,
            walk_length: 80,
            window: 10,
            negatives: 5,
            epochs: 1,
            initial_lr: 0.025,
        }
    }
}

impl DeepWalkParams {
    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("walks_per_node", self.walks_per_node),
            ("walk_length", self.walk_length),
            ("window", self.window),
            ("negatives", self.negatives),
            ("epochs", self.epochs),
        ];
        for (name, v) in counts {
            if v == 0 {
                return Err(Error::Config(format!("deepwalk {name} must be at least 1")));
            }
        }
        if !(self.initial_lr > 0.0) {
            return Err(Error::Config("deepwalk initial_lr must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct DeepWalk {
    pub dim: usize,
    pub seed: u64,
    pub params: DeepWalkParams,
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// `walks_per_node` walks from every node, in node-major order. The next step
/// is drawn proportionally to edge weight among neighbors other than the
/// current node; a node with no such neighbor ends its walk.
pub fn generate_walks(g: &Graph, walks_per_node: usize, walk_length: usize, seed: u64) -> Vec<Vec<usize>> {
    let n = g.node_count();
    let adj: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .map(|u| {
            let mut targets = Vec::new();
            let mut cumulative = Vec::new();
            let mut acc = 0.0;
            for (v, w) in g.neighbors(u) {
                if v != u {
                    acc += w;
                    targets.push(v);
                    cumulative.push(acc);
                }
            }
            (targets, cumulative)
        })
        .collect();

    let mut walks = Vec::with_capacity(n * walks_per_node);
    for start in 0..n {
        for k in 0..walks_per_node {
            let mut rng = rng_for(seed, WALK_STREAM_BASE + (start * walks_per_node + k) as u64);
            let mut walk = Vec::with_capacity(walk_length);
            walk.push(start);
            let mut cur = start;
            while walk.len() < walk_length {
                let (targets, cumulative) = &adj[cur];
                let Some(&total) = cumulative.last() else { break };
                let r = rng.random::<f64>() * total;
                let idx = cumulative.partition_point(|&c| c <= r).min(targets.len() - 1);
                cur = targets[idx];
                walk.push(cur);
            }
            walks.push(walk);
        }
    }
    walks
}

// Four independent accumulators so the loop vectorizes.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let tail: f64 = ca.remainder().iter().zip(cb.remainder()).map(|(x, y)| x * y).sum();
    for (x, y) in ca.zip(cb) {
        for k in 0..4 {
            acc[k] += x[k] * y[k];
        }
    }
    acc[0] + acc[1] + acc[2] + acc[3] + tail
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

struct Sgns {
    input: Vec<f64>,
    output: Vec<f64>,
    dim: usize,
    table: Vec<usize>,
}

impl Sgns {
    fn new(n: usize, dim: usize, walks: &[Vec<usize>], rng: &mut ChaCha8Rng) -> Self {
        let input = (0..n * dim)
            .map(|_| (rng.random::<f64>() - 0.5) / dim as f64)
            .collect();
        let output = vec![0.0; n * dim];

        let mut counts = vec![0usize; n];
        for w in walks {
            for &u in w {
                counts[u] += 1;
            }
        }
        let powered: Vec<f64> = counts.iter().map(|&c| (c as f64).powf(0.75)).collect();
        let total: f64 = powered.iter().sum();
        let mut table = Vec::with_capacity(NEG_TABLE_SIZE);
        let mut node = 0;
        let mut acc = powered[0] / total;
        for i in 0..NEG_TABLE_SIZE {
            table.push(node);
            if (i + 1) as f64 / NEG_TABLE_SIZE as f64 > acc && node + 1 < n {
                node += 1;
                acc += powered[node] / total;
            }
        }
        Sgns {
            input,
            output,
            dim,
            table,
        }
    }

    /// One positive pair plus `negatives` sampled pairs; returns the sampled
    /// negative log-likelihood before the update.
    fn step(&mut self, context: usize, center: usize, negatives: usize, lr: f64, rng: &mut ChaCha8Rng, grad: &mut [f64]) -> f64 {
        let d = self.dim;
        grad.iter_mut().for_each(|g| *g = 0.0);
        let l1 = context * d;
        let mut loss = 0.0;
        for k in 0..=negatives {
            let (target, label) = if k == 0 {
                (center, 1.0)
            } else {
                let t = self.table[rng.random_range(0..self.table.len())];
                if t == center {
                    continue;
                }
                (t, 0.0)
            };
            let inp = &self.input[l1..l1 + d];
            let out = &mut self.output[target * d..(target + 1) * d];
            let f = dot(inp, out);
            let s = sigmoid(f);
            loss -= if label > 0.0 { s.max(1e-12).ln() } else { (1.0 - s).max(1e-12).ln() };
            let g = (label - s) * lr;
            for ((gj, oj), ij) in grad.iter_mut().zip(out.iter_mut()).zip(inp) {
                *gj += g * *oj;
                *oj += g * ij;
            }
        }
        for (ij, gj) in self.input[l1..l1 + d].iter_mut().zip(grad.iter()) {
            *ij += gj;
        }
        loss
    }
}

impl DeepWalk {
    /// Trains on a fixed walk corpus; returns the embedding and the mean
    /// sampled loss per training pair for each epoch.
    pub fn train_on_walks(&self, n: usize, walks: &[Vec<usize>]) -> (Embedding, Vec<f64>) {
        let p = &self.params;
        let mut rng = rng_for(self.seed, TRAIN_STREAM);
        let mut model = Sgns::new(n, self.dim, walks, &mut rng);
        let tokens: usize = walks.iter().map(Vec::len).sum();
        let total = (tokens * p.epochs).max(1) as f64;
        let final_lr = p.initial_lr / 100.0;
        let mut grad = vec![0.0; self.dim];
        let mut trace = Vec::with_capacity(p.epochs);
        let mut processed = 0usize;
        for _ in 0..p.epochs {
            let (mut loss, mut pairs) = (0.0, 0usize);
            for walk in walks {
                for (i, &center) in walk.iter().enumerate() {
                    let lr = p.initial_lr - (p.initial_lr - final_lr) * processed as f64 / total;
                    processed += 1;
                    let shrink = rng.random_range(0..p.window);
                    let span = p.window - shrink;
                    let lo = i.saturating_sub(span);
                    let hi = (i + span).min(walk.len() - 1);
                    for (j, &context) in walk.iter().enumerate().take(hi + 1).skip(lo) {
                        if j == i {
                            continue;
                        }
                        loss += model.step(context, center, p.negatives, lr, &mut rng, &mut grad);
                        pairs += 1;
                    }
                }
            }
            trace.push(if pairs > 0 { loss / pairs as f64 } else { 0.0 });
        }
        let matrix = DMatrix::from_row_slice(n, self.dim, &model.input);
        (Embedding::new(matrix), trace)
    }
}

impl Embedder for DeepWalk {
    fn embed(&self, g: &Graph) -> Result<Embedding> {
        self.params.validate()?;
        let walks = generate_walks(g, self.params.walks_per_node, self.params.walk_length, self.seed);
        Ok(self.train_on_walks(g.node_count(), &walks).0)
    }
}
