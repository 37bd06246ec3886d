//! Seeded synthetic attributed graphs: stochastic block models with a planted
//! sensitive attribute and group-skewed labels.

use std::fmt;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::graph::{write_edge_list, Graph};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SyntheticKind {
    Sbm,
    Erdos,
}

impl FromStr for SyntheticKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sbm" => Ok(SyntheticKind::Sbm),
            "erdos" => Ok(SyntheticKind::Erdos),
            _ => Err(Error::Config(format!("unknown synthetic kind {s:?}"))),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SyntheticKind::Sbm => "sbm",
            SyntheticKind::Erdos => "erdos",
        })
    }
}

/// Nodes are dealt round-robin into `blocks`. Block `b` carries group
/// `b % groups` and community label `b * classes / blocks`, so with
/// `blocks = groups * classes` every (label, group) pair gets its own block.
///
/// A node keeps its block's group with probability `rho` and otherwise draws a
/// uniform group. Its label is the group-determined class `group % classes`
/// with probability `label_skew`, a uniform class with probability
/// `label_noise`, and its block's community label otherwise.
///
/// A pair of nodes is joined with probability `p_in` inside a block and
/// `p_out` across blocks, plus `p_group` when both share a group (capped at 1).
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticSpec {
    pub kind: SyntheticKind,
    pub n: usize,
    pub blocks: usize,
    pub groups: usize,
    pub classes: usize,
    pub p_in: f64,
    pub p_out: f64,
    pub p_group: f64,
    pub rho: f64,
    pub label_skew: f64,
    pub label_noise: f64,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        SyntheticSpec {
            kind: SyntheticKind::Sbm,
            n: 1000,
            blocks: 4,
            groups: 2,
            classes: 2,
            p_in: 0.02,
            p_out: 0.002,
            p_group: 0.0,
            rho: 0.8,
            label_skew: 0.2,
            label_noise: 0.1,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 {
            return Err(Error::Config("synthetic graph needs n >= 2".into()));
        }
        if self.blocks == 0 || self.groups == 0 || self.classes == 0 {
            return Err(Error::Config("blocks, groups and classes must be positive".into()));
        }
        for (name, p) in [
            ("p_in", self.p_in),
            ("p_out", self.p_out),
            ("p_group", self.p_group),
            ("rho", self.rho),
            ("label_skew", self.label_skew),
            ("label_noise", self.label_noise),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} = {p} outside [0, 1]")));
            }
        }
        if self.label_skew + self.label_noise > 1.0 {
            return Err(Error::Config("label_skew + label_noise exceeds 1".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticGraph {
    pub graph: Graph,
    pub block: Vec<usize>,
    pub group: Vec<usize>,
    pub label: Vec<usize>,
}

/// Calls `emit(k)` for each index in `0..m` kept independently with
/// probability `p`, jumping geometric gaps between kept indices.
fn bernoulli_indices(m: u64, p: f64, rng: &mut ChaCha8Rng, mut emit: impl FnMut(u64)) {
    if p <= 0.0 || m == 0 {
        return;
    }
    if p >= 1.0 {
        (0..m).for_each(emit);
        return;
    }
    let log_q = (1.0 - p).ln();
    let mut k: i64 = -1;
    loop {
        let r: f64 = rng.random();
        let skip = ((1.0 - r).ln() / log_q).floor();
        if !skip.is_finite() || k as f64 + 1.0 + skip >= m as f64 {
            return;
        }
        k += 1 + skip as i64;
        emit(k as u64);
    }
}

/// Index `k` of the strictly-lower triangle in row-major order to `(i, j)`, `j < i`.
fn triangle_pair(k: u64) -> (u64, u64) {
    let mut i = ((1.0 + (1.0 + 8.0 * k as f64).sqrt()) / 2.0).floor() as u64;
    while i * (i - 1) / 2 > k {
        i -= 1;
    }
    while (i + 1) * i / 2 <= k {
        i += 1;
    }
    (i, k - i * (i - 1) / 2)
}

pub fn generate_synthetic(spec: &SyntheticSpec) -> Result<SyntheticGraph> {
    spec.validate()?;
    let n = spec.n;
    let blocks = match spec.kind {
        SyntheticKind::Sbm => spec.blocks.min(n),
        SyntheticKind::Erdos => 1,
    };
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let block: Vec<usize> = (0..n).map(|i| i % blocks).collect();

    let mut group = Vec::with_capacity(n);
    let mut label = Vec::with_capacity(n);
    for &b in &block {
        let planted = match spec.kind {
            SyntheticKind::Sbm => b % spec.groups,
            SyntheticKind::Erdos => rng.random_range(0..spec.groups),
        };
        let g = if rng.random_bool(spec.rho) {
            planted
        } else {
            rng.random_range(0..spec.groups)
        };
        let community = match spec.kind {
            SyntheticKind::Sbm => b * spec.classes / blocks,
            SyntheticKind::Erdos => rng.random_range(0..spec.classes),
        };
        let u: f64 = rng.random();
        let y = if u < spec.label_skew {
            g % spec.classes
        } else if u < spec.label_skew + spec.label_noise {
            rng.random_range(0..spec.classes)
        } else {
            community
        };
        group.push(g);
        label.push(y);
    }

    // Edge probability depends only on the (block, group) cell of each endpoint.
    let cell = |u: usize| block[u] * spec.groups + group[u];
    let mut members = vec![Vec::new(); blocks * spec.groups];
    for u in 0..n {
        members[cell(u)].push(u);
    }
    let mut edges = Vec::new();
    for a in 0..members.len() {
        for b in a..members.len() {
            let mut p = if a / spec.groups == b / spec.groups { spec.p_in } else { spec.p_out };
            if a % spec.groups == b % spec.groups {
                p = (p + spec.p_group).min(1.0);
            }
            let (ma, mb) = (&members[a], &members[b]);
            if a == b {
                let m = (ma.len() as u64) * (ma.len() as u64).saturating_sub(1) / 2;
                bernoulli_indices(m, p, &mut rng, |k| {
                    let (i, j) = triangle_pair(k);
                    edges.push((ma[i as usize], ma[j as usize], 1.0));
                });
            } else {
                let width = mb.len() as u64;
                bernoulli_indices(ma.len() as u64 * width, p, &mut rng, |k| {
                    edges.push((ma[(k / width) as usize], mb[(k % width) as usize], 1.0));
                });
            }
        }
    }
    let graph = Graph::from_edges(n, edges)?;
    Ok(SyntheticGraph {
        graph,
        block,
        group,
        label,
    })
}

/// Paths written by [`write_synthetic`].
#[derive(Debug, Clone)]
pub struct SyntheticFiles {
    pub edges: PathBuf,
    pub attrs: PathBuf,
    pub labels: PathBuf,
}

/// Writes `edges.txt`, `attrs.csv` (`node,group`) and `labels.csv`
/// (`node,label`) into `dir`.
pub fn write_synthetic(sg: &SyntheticGraph, dir: &Path) -> Result<SyntheticFiles> {
    std::fs::create_dir_all(dir)?;
    let files = SyntheticFiles {
        edges: dir.join("edges.txt"),
        attrs: dir.join("attrs.csv"),
        labels: dir.join("labels.csv"),
    };
    let mut out = BufWriter::new(File::create(&files.edges)?);
    write_edge_list(&sg.graph, &mut out)?;
    out.flush()?;
    for (path, header, col) in [(&files.attrs, "group", &sg.group), (&files.labels, "label", &sg.label)] {
        let mut out = BufWriter::new(File::create(path)?);
        writeln!(out, "node,{header}")?;
        for (u, v) in col.iter().enumerate() {
            writeln!(out, "{},{v}", sg.graph.name(u))?;
        }
        out.flush()?;
    }
    Ok(files)
}
