//! Base embedders.
//!
//! An embedder takes a graph and returns one row per node; nothing else about
//! the hierarchy is visible to it. Two implementations ship here: a
//! deterministic spectral embedder and a DeepWalk-style skip-gram embedder.

mod deepwalk;
mod spectral;

use std::io::{BufRead, Write};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::graph::Graph;

pub use deepwalk::{generate_walks, DeepWalk, DeepWalkParams};
pub use spectral::{spectral_decomposition, Spectral, MAX_SPECTRAL_NODES};

/// Node representations, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct Embedding {
    pub matrix: DMatrix<f64>,
    pub normalized: bool,
}

impl Embedding {
    pub fn new(matrix: DMatrix<f64>) -> Self {
        Embedding {
            matrix,
            normalized: false,
        }
    }

    pub fn rows(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.ncols()
    }

    /// Copy with every row scaled to unit L2 norm.
    pub fn row_normalized(&self) -> Result<Embedding> {
        let mut m = self.matrix.clone();
        for i in 0..m.nrows() {
            let norm = m.row(i).norm();
            if !(norm > 0.0) || !norm.is_finite() {
                return Err(Error::ZeroNormRow(i));
            }
            m.row_mut(i).unscale_mut(norm);
        }
        Ok(Embedding {
            matrix: m,
            normalized: true,
        })
    }
}

pub trait Embedder {
    fn embed(&self, g: &Graph) -> Result<Embedding>;
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedderKind {
    Spectral,
    DeepWalk,
}

impl FromStr for EmbedderKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "spectral" => Ok(EmbedderKind::Spectral),
            "deepwalk" => Ok(EmbedderKind::DeepWalk),
            other => Err(Error::UnknownEmbedder(other.to_string())),
        }
    }
}

impl std::fmt::Display for EmbedderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            EmbedderKind::Spectral => "spectral",
            EmbedderKind::DeepWalk => "deepwalk",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedderConfig {
    pub kind: EmbedderKind,
    pub dim: usize,
    pub seed: u64,
    pub deepwalk: DeepWalkParams,
}

impl Default for EmbedderConfig {
    fn default() -> Self {
        EmbedderConfig {
            kind: EmbedderKind::Spectral,
            dim: 128,
            seed: 0,
            deepwalk: DeepWalkParams::default(),
        }
    }
}

impl EmbedderConfig {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dimension must be at least 1".into()));
        }
        self.deepwalk.validate()
    }

    pub fn build(&self) -> Box<dyn Embedder> {
        match self.kind {
            EmbedderKind::Spectral => Box::new(Spectral { dim: self.dim }),
            EmbedderKind::DeepWalk => Box::new(DeepWalk {
                dim: self.dim,
                seed: self.seed,
                params: self.deepwalk.clone(),
            }),
        }
    }
}

/// Embeds `g` with the configured embedder.
pub fn embed(g: &Graph, cfg: &EmbedderConfig) -> Result<Embedding> {
    cfg.validate()?;
    if g.node_count() == 0 {
        return Err(Error::Config("cannot embed an empty graph".into()));
    }
    cfg.build().embed(g)
}

/// Writes the word2vec text format: `N d`, then `id v1 ... vd` per node.
pub fn write_embedding<W: Write, S: AsRef<str>>(e: &Embedding, names: &[S], mut out: W) -> Result<()> {
    if names.len() != e.rows() {
        return Err(Error::DimensionMismatch {
            expected: e.rows(),
            got: names.len(),
        });
    }
    writeln!(out, "{} {}", e.rows(), e.dim())?;
    for (i, name) in names.iter().enumerate() {
        write!(out, "{}", name.as_ref())?;
        for x in e.matrix.row(i).iter() {
            // `{:?}` prints the shortest string that parses back to the same f64.
            write!(out, " {x:?}")?;
        }
        writeln!(out)?;
    }
    Ok(())
}

/// Reads the word2vec text format. Returns node ids in file order.
pub fn read_embedding<R: BufRead>(reader: R) -> Result<(Vec<String>, Embedding)> {
    let mut lines = reader.lines();
    let header = lines.next().ok_or_else(|| Error::Parse {
        line: 1,
        msg: "missing `N d` header".into(),
    })??;
    let mut it = header.split_whitespace();
    let parse_usize = |s: Option<&str>| -> Result<usize> {
        s.and_then(|x| x.parse().ok()).ok_or_else(|| Error::Parse {
            line: 1,
            msg: format!("bad header {header:?}"),
        })
    };
    let n = parse_usize(it.next())?;
    let d = parse_usize(it.next())?;
    let mut names = Vec::with_capacity(n);
    let mut data = Vec::with_capacity(n * d);
    for (i, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let bad = |msg: String| Error::Parse { line: i + 2, msg };
        let mut fields = line.split_whitespace();
        names.push(fields.next().unwrap().to_string());
        let mut count = 0;
        for f in fields {
            data.push(f.parse::<f64>().map_err(|e| bad(format!("bad value {f:?}: {e}")))?);
            count += 1;
        }
        if count != d {
            return Err(bad(format!("expected {d} values, got {count}")));
        }
    }
    if names.len() != n {
        return Err(Error::Parse {
            line: names.len() + 1,
            msg: format!("header promises {n} rows, found {}", names.len()),
        });
    }
    let matrix = DMatrix::from_row_slice(n, d, &data);
    let normalized = n > 0 && (0..n).all(|i| (matrix.row(i).norm() - 1.0).abs() <= 1e-6);
    Ok((names, Embedding { matrix, normalized }))
}
