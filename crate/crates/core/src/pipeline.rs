//! End-to-end orchestration: coarsen, embed the coarsest graph, train the
//! refiner there, refine back to the input graph, evaluate.

use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use log::info;
use serde::{Deserialize, Serialize};

use crate::attributes::{encode_one_hot, read_attribute_table, AttributeMatrix};
use crate::coarsen::{coarsen_hierarchy, save_hierarchy, Hierarchy};
use crate::config::{PipelineConfig, TaskKind};
use crate::downstream::{self, EvalReport, GroupColumn, Labels, LpSplit, NcConfig};
use crate::embed::{embed, write_embedding, Embedding};
use crate::error::{Error, Result};
use crate::graph::{read_edge_list, write_edge_list, Graph};
use crate::refine::{refine_all, train_refiner, write_loss_trace, LossRecord, RefinementModel};

/// Graph, one-hot attributes and (optionally) labels, all in graph node order.
#[derive(Debug, Clone)]
pub struct Dataset {
    pub graph: Graph,
    pub attributes: AttributeMatrix,
    pub labels: Option<Labels>,
}

impl Dataset {
    /// Group codes of the named attribute, or of the first one.
    pub fn sensitive(&self, name: Option<&str>) -> Result<GroupColumn> {
        let blocks = self.attributes.blocks();
        let k = match name {
            None => 0,
            Some(name) => blocks
                .iter()
                .position(|b| b.name == name)
                .ok_or_else(|| Error::Config(format!("no attribute named {name:?}")))?,
        };
        let block = blocks.get(k).ok_or(Error::EmptyGroups)?;
        Ok(GroupColumn {
            name: block.name.clone(),
            codes: self.attributes.group_codes(k),
        })
    }
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))
}

pub fn read_graph(path: &Path) -> Result<Graph> {
    read_edge_list(BufReader::new(open(path)?))
}

/// One-hot attributes for every node of `g`, values ordered by first appearance.
pub fn read_attributes(path: &Path, g: &Graph) -> Result<AttributeMatrix> {
    let table = read_attribute_table(BufReader::new(open(path)?))?;
    let schema = table.infer_schema();
    encode_one_hot(g.names(), &table, &schema)
}

pub fn load_dataset(edges: &Path, attrs: &Path, labels: Option<&Path>) -> Result<Dataset> {
    let graph = read_graph(edges)?;
    let attributes = read_attributes(attrs, &graph)?;
    let labels = match labels {
        Some(p) => Some(downstream::read_labels(BufReader::new(open(p)?), &graph)?),
        None => None,
    };
    Ok(Dataset {
        graph,
        attributes,
        labels,
    })
}

/// Wall-clock seconds per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    pub coarsen_s: f64,
    pub embed_s: f64,
    pub refine_s: f64,
    pub eval_s: f64,
    pub total_s: f64,
}

/// Everything produced by the representation-learning phases.
#[derive(Debug, Clone)]
pub struct Learned {
    pub hierarchy: Hierarchy,
    /// Base embedding of the coarsest graph as returned by the embedder.
    pub base: Embedding,
    pub model: RefinementModel,
    pub trace: Vec<LossRecord>,
    /// Unit-norm embedding of the input graph.
    pub embedding: Embedding,
    pub timings: PhaseTimings,
}

/// Coarsen, embed, train and refine. `eval_s` is left at zero.
pub fn learn(g: &Graph, s: &AttributeMatrix, cfg: &PipelineConfig) -> Result<Learned> {
    cfg.validate()?;
    let t0 = Instant::now();
    let hierarchy = coarsen_hierarchy(g.clone(), s.clone(), cfg.levels, cfg.lambda_c)?;
    let coarsen_s = t0.elapsed().as_secs_f64();
    let coarsest = hierarchy.coarsest();
    info!(
        "coarsened {} nodes to {} in {:.3}s",
        g.node_count(),
        coarsest.graph.node_count(),
        coarsen_s
    );

    let t1 = Instant::now();
    let base = embed(&coarsest.graph, &cfg.embedder_config())?;
    let embed_s = t1.elapsed().as_secs_f64();
    info!("base embedding {}x{} in {:.3}s", base.rows(), base.dim(), embed_s);

    let t2 = Instant::now();
    let h0 = if cfg.normalize_base { base.row_normalized()? } else { base.clone() };
    let (model, trace) = train_refiner(&coarsest.graph, &coarsest.attributes, &h0, &cfg.refine_hyper())?;
    let embedding = refine_all(&hierarchy, &h0, &model)?;
    let refine_s = t2.elapsed().as_secs_f64();
    info!("refinement in {:.3}s", refine_s);

    Ok(Learned {
        hierarchy,
        base,
        model,
        trace,
        embedding,
        timings: PhaseTimings {
            coarsen_s,
            embed_s,
            refine_s,
            eval_s: 0.0,
            total_s: t0.elapsed().as_secs_f64(),
        },
    })
}

/// Node-classification report for an embedding of `data.graph`.
pub fn evaluate_nc(e: &Embedding, data: &Dataset, cfg: &PipelineConfig) -> Result<EvalReport> {
    let labels = data
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("node classification needs a labels file".into()))?;
    let groups = vec![data.sensitive(cfg.sensitive.as_deref())?];
    let nc = NcConfig {
        train_ratio: cfg.train_ratio,
        val_ratio: cfg.val_ratio,
        seed: cfg.seed,
        advantaged: (!cfg.advantaged.is_empty()).then(|| cfg.advantaged.clone()),
        ..Default::default()
    };
    downstream::nc_evaluate(&e.matrix, &labels.class, &groups, &nc)
}

/// Per-run summary written to `report.json`. Contains no timings, so two runs
/// with the same inputs and seeds produce identical files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PipelineReport {
    #[serde(flatten)]
    pub eval: EvalReport,
    pub levels: usize,
    pub nodes: Vec<usize>,
    pub edges: Vec<usize>,
    pub embedder: String,
    pub dim: usize,
    pub lambda_c: f64,
    pub lambda_r: f64,
    pub gamma: f64,
    pub seed: u64,
    pub final_l_u: f64,
    pub final_l_f: f64,
    pub final_l: f64,
}

#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub learned: Learned,
    pub report: PipelineReport,
    pub timings: PhaseTimings,
    pub lp_split: Option<LpSplit>,
}

/// File names inside the output directory.
pub mod artifacts {
    pub const HIERARCHY_DIR: &str = "hierarchy";
    pub const BASE_EMBEDDING: &str = "base.emb";
    pub const EMBEDDING: &str = "embedding.emb";
    pub const MODEL_STEM: &str = "model";
    pub const LOSS_TRACE: &str = "loss_trace.csv";
    pub const REPORT: &str = "report.json";
    pub const TIMING: &str = "timing.json";
    pub const CONFIG: &str = "config.txt";
    pub const TRAIN_GRAPH: &str = "train.edges";
}

/// Runs the configured pipeline on a loaded dataset. For link prediction the
/// held-out edges are removed before any representation learning.
pub fn run_on(data: &Dataset, cfg: &PipelineConfig) -> Result<PipelineRun> {
    let start = Instant::now();
    let (learned, eval, lp_split, eval_s) = match cfg.task {
        TaskKind::Nc => {
            let learned = learn(&data.graph, &data.attributes, cfg)?;
            let t = Instant::now();
            let eval = evaluate_nc(&learned.embedding, data, cfg)?;
            (learned, eval, None, t.elapsed().as_secs_f64())
        }
        TaskKind::Lp => {
            let split = downstream::lp_split(&data.graph, cfg.lp_ratio, cfg.seed)?;
            let learned = learn(&split.train_graph, &data.attributes, cfg)?;
            let t = Instant::now();
            let groups = data.sensitive(cfg.sensitive.as_deref())?;
            let eval = downstream::lp_evaluate(&learned.embedding.matrix, &split, &groups, &Default::default())?;
            (learned, eval, Some(split), t.elapsed().as_secs_f64())
        }
    };
    let last = *learned.trace.last().expect("trace has at least one record");
    let h = &learned.hierarchy;
    let report = PipelineReport {
        eval,
        levels: h.depth(),
        nodes: h.levels.iter().map(|l| l.graph.node_count()).collect(),
        edges: h.levels.iter().map(|l| l.graph.edge_count()).collect(),
        embedder: cfg.embedder.kind.to_string(),
        dim: cfg.embedder.dim,
        lambda_c: cfg.lambda_c,
        lambda_r: cfg.refine.lambda_r,
        gamma: cfg.refine.gamma,
        seed: cfg.seed,
        final_l_u: last.l_u,
        final_l_f: last.l_f,
        final_l: last.l,
    };
    let timings = PhaseTimings {
        eval_s,
        total_s: start.elapsed().as_secs_f64(),
        ..learned.timings
    };
    Ok(PipelineRun {
        learned,
        report,
        timings,
        lp_split,
    })
}

/// Loads the configured inputs, runs the pipeline and, when `out_dir` is set,
/// writes every artifact there. On failure, files this call created are removed.
pub fn run_pipeline(cfg: &PipelineConfig) -> Result<PipelineRun> {
    cfg.validate()?;
    let edges = cfg.edges.as_deref().ok_or_else(|| Error::Config("edges path is required".into()))?;
    let attrs = cfg.attrs.as_deref().ok_or_else(|| Error::Config("attrs path is required".into()))?;
    let labels = match cfg.task {
        TaskKind::Nc => Some(
            cfg.labels
                .as_deref()
                .ok_or_else(|| Error::Config("labels path is required for node classification".into()))?,
        ),
        TaskKind::Lp => None,
    };
    let data = load_dataset(edges, attrs, labels)?;
    let run = run_on(&data, cfg)?;
    if let Some(dir) = &cfg.out_dir {
        let mut written = Vec::new();
        if let Err(e) = write_artifacts(&run, cfg, dir, &mut written) {
            for p in written.iter().rev() {
                let _ = if p.is_dir() {
                    std::fs::remove_dir_all(p)
                } else {
                    std::fs::remove_file(p)
                };
            }
            return Err(e);
        }
    }
    Ok(run)
}

fn create(path: PathBuf, written: &mut Vec<PathBuf>) -> Result<BufWriter<File>> {
    let f = File::create(&path)?;
    written.push(path);
    Ok(BufWriter::new(f))
}

fn write_json<T: Serialize>(value: &T, path: PathBuf, written: &mut Vec<PathBuf>) -> Result<()> {
    let mut f = create(path, written)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    writeln!(f)?;
    f.flush()?;
    Ok(())
}

fn write_artifacts(run: &PipelineRun, cfg: &PipelineConfig, dir: &Path, written: &mut Vec<PathBuf>) -> Result<()> {
    use artifacts::*;
    if !dir.exists() {
        std::fs::create_dir_all(dir)?;
        written.push(dir.to_path_buf());
    }
    let l = &run.learned;
    let hdir = dir.join(HIERARCHY_DIR);
    written.push(hdir.clone());
    save_hierarchy(&l.hierarchy, &hdir)?;

    let mut f = create(dir.join(BASE_EMBEDDING), written)?;
    write_embedding(&l.base, l.hierarchy.coarsest().graph.names(), &mut f)?;
    f.flush()?;
    let mut f = create(dir.join(EMBEDDING), written)?;
    write_embedding(&l.embedding, l.hierarchy.finest().graph.names(), &mut f)?;
    f.flush()?;

    let stem = dir.join(MODEL_STEM);
    written.push(stem.with_extension("tensors"));
    written.push(stem.with_extension("json"));
    l.model.save(&stem, &cfg.refine_hyper().meta())?;

    let mut f = create(dir.join(LOSS_TRACE), written)?;
    write_loss_trace(&l.trace, &mut f)?;
    f.flush()?;

    if let Some(split) = &run.lp_split {
        let mut f = create(dir.join(TRAIN_GRAPH), written)?;
        write_edge_list(&split.train_graph, &mut f)?;
        f.flush()?;
    }

    let mut f = create(dir.join(CONFIG), written)?;
    f.write_all(cfg.to_text().as_bytes())?;
    f.flush()?;
    write_json(&run.report, dir.join(REPORT), written)?;
    write_json(&run.timings, dir.join(TIMING), written)?;
    Ok(())
}

/// One row of a coarsening-level sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BenchRow {
    pub level: usize,
    pub nodes: usize,
    pub edges: usize,
    pub coarsen_s: f64,
    pub embed_s: f64,
    pub refine_s: f64,
    pub total_s: f64,
}

/// Runs the learning phases once per coarsening level. `nodes` and `edges`
/// describe the coarsest graph of each run.
pub fn bench(g: &Graph, s: &AttributeMatrix, cfg: &PipelineConfig, levels: &[usize]) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(levels.len());
    for &c in levels {
        let run_cfg = PipelineConfig {
            levels: c,
            ..cfg.clone()
        };
        let l = learn(g, s, &run_cfg)?;
        let coarsest = &l.hierarchy.coarsest().graph;
        rows.push(BenchRow {
            level: c,
            nodes: coarsest.node_count(),
            edges: coarsest.edge_count(),
            coarsen_s: l.timings.coarsen_s,
            embed_s: l.timings.embed_s,
            refine_s: l.timings.refine_s,
            total_s: l.timings.total_s,
        });
    }
    Ok(rows)
}

pub fn write_bench_csv<W: Write>(rows: &[BenchRow], mut out: W) -> Result<()> {
    writeln!(out, "level,nodes,edges,coarsen_s,embed_s,refine_s,total_s")?;
    for r in rows {
        writeln!(
            out,
            "{},{},{},{:.6},{:.6},{:.6},{:.6}",
            r.level, r.nodes, r.edges, r.coarsen_s, r.embed_s, r.refine_s, r.total_s
        )?;
    }
    Ok(())
}
