//! Weighted undirected graphs.
//!
//! A [`Graph`] is immutable once built. Adjacency is kept as a symmetric CSR
//! structure; a self-loop `(u, u)` is stored once in row `u` but counts twice
//! toward the weighted degree, so that a graph and any coarsening of it carry
//! the same total degree mass.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::sparse::SparseMatrix;

#[derive(Debug, Clone, PartialEq)]
pub struct Graph {
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
    degree: Vec<f64>,
    names: Vec<String>,
    index: HashMap<String, usize>,
}

impl Graph {
    /// Builds a graph over dense indices `0..n`. Node names are the decimal
    /// indices. Duplicate entries (in either orientation) are summed.
    pub fn from_edges<I>(n: usize, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let names = (0..n).map(|i| i.to_string()).collect();
        Self::from_named_edges(names, edges)
    }

    /// Builds a graph with the given node names (index `i` is named `names[i]`).
    pub fn from_named_edges<I>(names: Vec<String>, edges: I) -> Result<Graph>
    where
        I: IntoIterator<Item = (usize, usize, f64)>,
    {
        let n = names.len();
        let mut canon: Vec<(usize, usize, f64)> = Vec::new();
        for (u, v, w) in edges {
            for x in [u, v] {
                if x >= n {
                    return Err(Error::IndexOutOfRange { index: x, len: n });
                }
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::NonPositiveWeight {
                    u: names[u].clone(),
                    v: names[v].clone(),
                    weight: w,
                });
            }
            canon.push((u.min(v), u.max(v), w));
        }
        canon.sort_by(|a, b| (a.0, a.1).cmp(&(b.0, b.1)));

        let mut merged: Vec<(usize, usize, f64)> = Vec::with_capacity(canon.len());
        for (u, v, w) in canon {
            match merged.last_mut() {
                Some(last) if last.0 == u && last.1 == v => last.2 += w,
                _ => merged.push((u, v, w)),
            }
        }

        let mut counts = vec![0usize; n];
        for &(u, v, _) in &merged {
            counts[u] += 1;
            if u != v {
                counts[v] += 1;
            }
        }
        let mut offsets = Vec::with_capacity(n + 1);
        offsets.push(0);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let nnz = *offsets.last().unwrap();
        let mut targets = vec![0usize; nnz];
        let mut weights = vec![0.0; nnz];
        let mut cursor = offsets[..n].to_vec();
        for &(u, v, w) in &merged {
            targets[cursor[u]] = v;
            weights[cursor[u]] = w;
            cursor[u] += 1;
            if u != v {
                targets[cursor[v]] = u;
                weights[cursor[v]] = w;
                cursor[v] += 1;
            }
        }
        for u in 0..n {
            let span = offsets[u]..offsets[u + 1];
            let mut row: Vec<(usize, f64)> = targets[span.clone()]
                .iter()
                .copied()
                .zip(weights[span.clone()].iter().copied())
                .collect();
            row.sort_by_key(|&(t, _)| t);
            for (k, (t, w)) in row.into_iter().enumerate() {
                targets[span.start + k] = t;
                weights[span.start + k] = w;
            }
        }

        let degree = (0..n)
            .map(|u| {
                (offsets[u]..offsets[u + 1])
                    .map(|k| if targets[k] == u { 2.0 * weights[k] } else { weights[k] })
                    .sum()
            })
            .collect();
        let index = names
            .iter()
            .enumerate()
            .map(|(i, s)| (s.clone(), i))
            .collect();
        Ok(Graph {
            offsets,
            targets,
            weights,
            degree,
            names,
            index,
        })
    }

    pub fn node_count(&self) -> usize {
        self.degree.len()
    }

    /// Number of unordered edges, self-loops excluded.
    pub fn edge_count(&self) -> usize {
        let loops = (0..self.node_count())
            .filter(|&u| self.self_loop(u) > 0.0)
            .count();
        (self.targets.len() - loops) / 2
    }

    /// Neighbors of `u` in ascending index order, with weights. A self-loop
    /// appears as `(u, w)`.
    pub fn neighbors(&self, u: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.offsets[u]..self.offsets[u + 1];
        self.targets[span.clone()]
            .iter()
            .copied()
            .zip(self.weights[span].iter().copied())
    }

    pub fn weight(&self, u: usize, v: usize) -> f64 {
        let span = self.offsets[u]..self.offsets[u + 1];
        match self.targets[span.clone()].binary_search(&v) {
            Ok(k) => self.weights[span.start + k],
            Err(_) => 0.0,
        }
    }

    pub fn self_loop(&self, u: usize) -> f64 {
        self.weight(u, u)
    }

    /// Weighted degree with self-loops counted twice.
    pub fn degree(&self, u: usize) -> f64 {
        self.degree[u]
    }

    pub fn degrees(&self) -> &[f64] {
        &self.degree
    }

    pub fn total_degree(&self) -> f64 {
        self.degree.iter().sum()
    }

    /// Every stored edge once, as `(u, v, w)` with `u <= v`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.node_count()).flat_map(move |u| {
            self.neighbors(u)
                .filter(move |&(v, _)| v >= u)
                .map(move |(v, w)| (u, v, w))
        })
    }

    pub fn name(&self, u: usize) -> &str {
        &self.names[u]
    }

    pub fn names(&self) -> &[String] {
        &self.names
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    /// `D̃^{-1/2} Ã D̃^{-1/2}` where `Ã = A + I` when `add_self_loops` is set and
    /// `D̃` holds the row sums of `Ã`.
    pub fn normalized_adjacency(&self, add_self_loops: bool) -> Result<SparseMatrix> {
        let n = self.node_count();
        let mut rows: Vec<Vec<(usize, f64)>> = (0..n)
            .map(|u| self.neighbors(u).collect::<Vec<_>>())
            .collect();
        if add_self_loops {
            for (u, row) in rows.iter_mut().enumerate() {
                match row.iter_mut().find(|(v, _)| *v == u) {
                    Some(entry) => entry.1 += 1.0,
                    None => row.push((u, 1.0)),
                }
            }
        }
        let sums: Vec<f64> = rows.iter().map(|r| r.iter().map(|e| e.1).sum()).collect();
        if let Some(u) = sums.iter().position(|&s| s <= 0.0) {
            return Err(Error::IsolatedNode(u));
        }
        let inv_sqrt: Vec<f64> = sums.iter().map(|s| 1.0 / s.sqrt()).collect();
        for (u, row) in rows.iter_mut().enumerate() {
            for (v, w) in row.iter_mut() {
                *w *= inv_sqrt[u] * inv_sqrt[*v];
            }
        }
        Ok(SparseMatrix::from_rows(n, rows))
    }
}

/// Builds a graph from `(u-id, v-id, weight)` triples. Ids are mapped to dense
/// indices in order of first appearance.
pub fn build_graph<S: AsRef<str>>(triples: &[(S, S, f64)]) -> Result<Graph> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut intern = |s: &str| -> Result<usize> {
        if s.is_empty() || s.chars().any(char::is_whitespace) {
            return Err(Error::Parse {
                line: 0,
                msg: format!("malformed node id {s:?}"),
            });
        }
        if let Some(&i) = index.get(s) {
            return Ok(i);
        }
        index.insert(s.to_string(), names.len());
        names.push(s.to_string());
        Ok(names.len() - 1)
    };
    let mut edges = Vec::with_capacity(triples.len());
    for (u, v, w) in triples {
        let (u, v) = (intern(u.as_ref())?, intern(v.as_ref())?);
        edges.push((u, v, *w));
    }
    Graph::from_named_edges(names, edges)
}

/// Reads the whitespace edge-list format: `u v [w]` per line, `#` comments.
/// A line holding a single id declares a node without adding edges, which is
/// how isolated nodes survive a round trip.
pub fn read_edge_list<R: BufRead>(reader: R) -> Result<Graph> {
    let mut names: Vec<String> = Vec::new();
    let mut index: HashMap<String, usize> = HashMap::new();
    let mut edges = Vec::new();
    let mut intern = |s: &str| -> usize {
        if let Some(&i) = index.get(s) {
            return i;
        }
        index.insert(s.to_string(), names.len());
        names.push(s.to_string());
        names.len() - 1
    };
    for (lineno, line) in reader.lines().enumerate() {
        let line = line?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split_whitespace().collect();
        let parse_err = |msg: String| Error::Parse {
            line: lineno + 1,
            msg,
        };
        match fields.as_slice() {
            [u] => {
                intern(u);
            }
            [u, v] | [u, v, _] => {
                let w = match fields.get(2) {
                    Some(s) => s
                        .parse::<f64>()
                        .map_err(|e| parse_err(format!("bad weight {s:?}: {e}")))?,
                    None => 1.0,
                };
                if !(w > 0.0) {
                    return Err(Error::NonPositiveWeight {
                        u: u.to_string(),
                        v: v.to_string(),
                        weight: w,
                    });
                }
                let (a, b) = (intern(u), intern(v));
                edges.push((a, b, w));
            }
            _ => return Err(parse_err(format!("expected `u v [w]`, got {line:?}"))),
        }
    }
    Graph::from_named_edges(names, edges)
}

/// Writes the edge-list format. Nodes without any stored edge are written as
/// single-id lines so the node set is preserved. Weights use the shortest
/// representation that parses back to the same `f64`.
pub fn write_edge_list<W: Write>(g: &Graph, mut out: W) -> Result<()> {
    writeln!(out, "# nodes {} edges {}", g.node_count(), g.edge_count())?;
    for u in 0..g.node_count() {
        if g.neighbors(u).next().is_none() {
            writeln!(out, "{}", g.name(u))?;
        }
    }
    for (u, v, w) in g.edges() {
        writeln!(out, "{} {} {}", g.name(u), g.name(v), w)?;
    }
    Ok(())
}
