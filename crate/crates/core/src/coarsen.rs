//! Fairness-aware multi-level coarsening.
//!
//! Each round visits nodes by increasing weighted degree and pairs every
//! still-unmatched node with the unmatched neighbor that maximizes
//! `(1 - λc) * w(u, v) + λc * φ(u, v)`, where `w` is the degree-normalized
//! edge weight and `φ` the attribute divergence. Matched pairs collapse into
//! supernodes whose attribute rows are the sums of their children's rows.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use crate::attributes::{divergence, read_distribution_csv, write_distribution_csv, AttributeMatrix};
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, write_edge_list, Graph};

/// A partition of the nodes into groups of one or two.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Matching {
    pub groups: Vec<Vec<usize>>,
}

/// Fine node to coarse node assignment.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MergeMap {
    pub child_to_parent: Vec<usize>,
    pub coarse_nodes: usize,
}

impl MergeMap {
    pub fn identity(n: usize) -> Self {
        MergeMap {
            child_to_parent: (0..n).collect(),
            coarse_nodes: n,
        }
    }

    pub fn fine_nodes(&self) -> usize {
        self.child_to_parent.len()
    }
}

#[derive(Debug, Clone)]
pub struct Level {
    pub graph: Graph,
    pub attributes: AttributeMatrix,
}

/// Levels `0..=c`, finest first, and the merge maps between consecutive levels.
#[derive(Debug, Clone)]
pub struct Hierarchy {
    pub levels: Vec<Level>,
    pub merges: Vec<MergeMap>,
    pub lambda_c: f64,
}

impl Hierarchy {
    pub fn depth(&self) -> usize {
        self.merges.len()
    }

    pub fn coarsest(&self) -> &Level {
        self.levels.last().expect("hierarchy has at least one level")
    }

    pub fn finest(&self) -> &Level {
        &self.levels[0]
    }
}

/// Degree-normalized edge weight `A[u][v] / sqrt(δ(u) δ(v))`.
pub fn nhem_weight(g: &Graph, u: usize, v: usize) -> Result<f64> {
    let a = g.weight(u, v);
    if a <= 0.0 {
        return Err(Error::EdgeAbsent(u, v));
    }
    Ok(a / (g.degree(u) * g.degree(v)).sqrt())
}

/// Greedy matching by increasing degree; ties by ascending index, both for the
/// visiting order and the choice of partner.
pub fn match_nodes(g: &Graph, s: &AttributeMatrix, lambda_c: f64) -> Matching {
    let n = g.node_count();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| g.degree(a).total_cmp(&g.degree(b)).then(a.cmp(&b)));
    let mut matched = vec![false; n];
    let mut groups = Vec::with_capacity(n);
    for u in order {
        if matched[u] {
            continue;
        }
        matched[u] = true;
        let du = g.degree(u);
        let mut best: Option<(usize, f64)> = None;
        for (v, a) in g.neighbors(u) {
            if v == u || matched[v] {
                continue;
            }
            let w = a / (du * g.degree(v)).sqrt();
            let phi = if lambda_c > 0.0 {
                divergence(s.row(u), s.row(v)).expect("attribute rows have positive mass")
            } else {
                0.0
            };
            let score = (1.0 - lambda_c) * w + lambda_c * phi;
            if best.is_none_or(|(_, b)| score > b) {
                best = Some((v, score));
            }
        }
        match best {
            Some((v, _)) => {
                matched[v] = true;
                groups.push(vec![u, v]);
            }
            None => groups.push(vec![u]),
        }
    }
    Matching { groups }
}

fn validate_matching(g: &Graph, m: &Matching) -> Result<Vec<usize>> {
    let n = g.node_count();
    let mut parent = vec![usize::MAX; n];
    for (p, group) in m.groups.iter().enumerate() {
        if group.is_empty() || group.len() > 2 {
            return Err(Error::InvalidMatching(format!("group {p} has {} nodes", group.len())));
        }
        for &u in group {
            if u >= n {
                return Err(Error::InvalidMatching(format!("node {u} out of range")));
            }
            if parent[u] != usize::MAX {
                return Err(Error::InvalidMatching(format!("node {u} matched twice")));
            }
            parent[u] = p;
        }
        if group.len() == 2 && (group[0] == group[1] || g.weight(group[0], group[1]) <= 0.0) {
            return Err(Error::InvalidMatching(format!(
                "pair ({}, {}) is not an edge",
                group[0], group[1]
            )));
        }
    }
    if let Some(u) = parent.iter().position(|&p| p == usize::MAX) {
        return Err(Error::InvalidMatching(format!("node {u} unmatched")));
    }
    Ok(parent)
}

/// Collapses each group into a supernode. Edges between groups sum their
/// weights; edges inside a group, and inherited self-loops, become the
/// supernode's self-loop.
pub fn build_coarse_graph(
    g: &Graph,
    s: &AttributeMatrix,
    m: &Matching,
) -> Result<(Graph, AttributeMatrix, MergeMap)> {
    if s.node_count() != g.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g.node_count(),
            got: s.node_count(),
        });
    }
    let parent = validate_matching(g, m)?;
    let coarse_n = m.groups.len();
    let edges = g.edges().map(|(a, b, w)| (parent[a], parent[b], w));
    let coarse = Graph::from_edges(coarse_n, edges)?;
    let attrs = s.merge_by(&parent, coarse_n);
    Ok((
        coarse,
        attrs,
        MergeMap {
            child_to_parent: parent,
            coarse_nodes: coarse_n,
        },
    ))
}

/// Runs `levels` rounds of matching and collapsing.
pub fn coarsen_hierarchy(g0: Graph, s0: AttributeMatrix, levels: usize, lambda_c: f64) -> Result<Hierarchy> {
    if !(0.0..=1.0).contains(&lambda_c) {
        return Err(Error::Config(format!("lambda_c = {lambda_c} outside [0, 1]")));
    }
    if s0.node_count() != g0.node_count() {
        return Err(Error::DimensionMismatch {
            expected: g0.node_count(),
            got: s0.node_count(),
        });
    }
    let mut h = Hierarchy {
        levels: vec![Level {
            graph: g0,
            attributes: s0,
        }],
        merges: Vec::with_capacity(levels),
        lambda_c,
    };
    for _ in 0..levels {
        let cur = h.coarsest();
        let m = match_nodes(&cur.graph, &cur.attributes, lambda_c);
        let (graph, attributes, merge) = build_coarse_graph(&cur.graph, &cur.attributes, &m)?;
        log::debug!(
            "coarsened {} -> {} nodes, {} -> {} edges",
            cur.graph.node_count(),
            graph.node_count(),
            cur.graph.edge_count(),
            graph.edge_count()
        );
        h.levels.push(Level { graph, attributes });
        h.merges.push(merge);
    }
    Ok(h)
}

/// Writes `level_i.edges`, `level_i.attrs.csv` and `merge_i.map` into `dir`.
pub fn save_hierarchy(h: &Hierarchy, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    for (i, level) in h.levels.iter().enumerate() {
        let mut f = BufWriter::new(File::create(dir.join(format!("level_{i}.edges")))?);
        write_edge_list(&level.graph, &mut f)?;
        f.flush()?;
        let f = BufWriter::new(File::create(dir.join(format!("level_{i}.attrs.csv")))?);
        write_distribution_csv(&level.attributes, level.graph.names(), f)?;
    }
    for (i, merge) in h.merges.iter().enumerate() {
        let mut f = BufWriter::new(File::create(dir.join(format!("merge_{i}.map")))?);
        let fine = h.levels[i].graph.names();
        let coarse = h.levels[i + 1].graph.names();
        for (c, &p) in merge.child_to_parent.iter().enumerate() {
            writeln!(f, "{} {}", fine[c], coarse[p])?;
        }
        f.flush()?;
    }
    Ok(())
}

/// Loads a hierarchy written by [`save_hierarchy`]. Node order at each level
/// follows the attribute file, which lists every node.
pub fn load_hierarchy(dir: &Path, lambda_c: f64) -> Result<Hierarchy> {
    let mut levels = Vec::new();
    for i in 0.. {
        let edges = dir.join(format!("level_{i}.edges"));
        if !edges.exists() {
            break;
        }
        let raw = read_edge_list(BufReader::new(File::open(&edges)?))?;
        let (names, attributes) = read_distribution_csv(File::open(dir.join(format!("level_{i}.attrs.csv")))?)?;
        let graph = reindex(&raw, &names)?;
        levels.push(Level { graph, attributes });
    }
    if levels.is_empty() {
        return Err(Error::Config(format!("no level_0.edges in {}", dir.display())));
    }
    let mut merges = Vec::new();
    for i in 0..levels.len() - 1 {
        let f = BufReader::new(File::open(dir.join(format!("merge_{i}.map")))?);
        let fine = &levels[i].graph;
        let coarse = &levels[i + 1].graph;
        let mut parent = vec![usize::MAX; fine.node_count()];
        for (lineno, line) in f.lines().enumerate() {
            let line = line?;
            let bad = |msg: String| Error::Parse { line: lineno + 1, msg };
            let mut it = line.split_whitespace();
            let (Some(c), Some(p), None) = (it.next(), it.next(), it.next()) else {
                return Err(bad(format!("expected `child parent`, got {line:?}")));
            };
            let c = fine.index_of(c).ok_or_else(|| bad(format!("unknown node {c:?}")))?;
            let p = coarse.index_of(p).ok_or_else(|| bad(format!("unknown node {p:?}")))?;
            parent[c] = p;
        }
        if let Some(u) = parent.iter().position(|&p| p == usize::MAX) {
            return Err(Error::InvalidMatching(format!("merge_{i}.map misses node {}", fine.name(u))));
        }
        merges.push(MergeMap {
            child_to_parent: parent,
            coarse_nodes: coarse.node_count(),
        });
    }
    Ok(Hierarchy {
        levels,
        merges,
        lambda_c,
    })
}

/// Rebuilds `g` with node order given by `names`.
pub fn reindex<S: AsRef<str>>(g: &Graph, names: &[S]) -> Result<Graph> {
    let mut pos = vec![usize::MAX; g.node_count()];
    let mut owned = Vec::with_capacity(names.len());
    for (i, name) in names.iter().enumerate() {
        let name = name.as_ref();
        owned.push(name.to_string());
        if let Some(j) = g.index_of(name) {
            pos[j] = i;
        }
    }
    if let Some(j) = pos.iter().position(|&p| p == usize::MAX) {
        return Err(Error::MissingNode(g.name(j).to_string()));
    }
    Graph::from_named_edges(owned, g.edges().map(|(u, v, w)| (pos[u], pos[v], w)))
}
