use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use mlfair::coarsen::{coarsen_hierarchy, load_hierarchy, save_hierarchy};
use mlfair::config::PipelineConfig;
use mlfair::downstream::{self, GroupColumn};
use mlfair::embed::{embed, read_embedding, write_embedding, Embedding};
use mlfair::graph::write_edge_list;
use mlfair::pipeline::{self, Dataset};
use mlfair::refine::{refine_all, theorem1_check, train_refiner, write_loss_trace};
use mlfair::synth::{generate_synthetic, write_synthetic, SyntheticKind, SyntheticSpec};
use mlfair::{Error, Result};

#[derive(Parser)]
#[command(name = "mlfair", version, about = "Multi-level fair graph embedding")]
struct Cli {
    /// Seed for every randomized step.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// `key=value` configuration file; command-line flags take precedence.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build the coarsening hierarchy and write it to a directory.
    Coarsen {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        out: PathBuf,
    },
    /// Embed a graph (or the coarsest level of a hierarchy) with a base embedder.
    Embed {
        #[command(flatten)]
        opts: Opts,
        /// Embed the coarsest level of this hierarchy instead of `--edges`.
        #[arg(long)]
        hierarchy: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the refiner on the coarsest level and refine down to level 0.
    Refine {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        hierarchy: PathBuf,
        /// Base embedding of the coarsest level.
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Stem for `<stem>.tensors` and `<stem>.json`.
        #[arg(long)]
        model_out: Option<PathBuf>,
        #[arg(long)]
        trace_out: Option<PathBuf>,
    },
    /// Node classification with a linear probe on an embedding.
    EvalNc {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Link prediction on a seeded edge split. Without `--embedding`, only the
    /// training graph is written (to `--write-train-graph`).
    EvalLp {
        #[command(flatten)]
        opts: Opts,
        /// Embedding learned on the training graph of the same split.
        #[arg(long)]
        embedding: Option<PathBuf>,
        #[arg(long)]
        write_train_graph: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Coarsen, embed, refine and evaluate in one go.
    Pipeline {
        #[command(flatten)]
        opts: Opts,
    },
    /// Generate a synthetic attributed graph.
    Synth {
        #[command(flatten)]
        spec: SynthArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Compare group mean embeddings with the inter-group connectivity bound.
    CheckTheorem1 {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        embedding: PathBuf,
        #[arg(long, default_value_t = 1e-3)]
        tol: f64,
    },
    /// Time the learning phases across coarsening levels; writes CSV. Here
    /// `--levels` takes an inclusive range `a..b` or a comma list (default 0..4).
    Bench {
        #[command(flatten)]
        opts: Opts,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Flags mirroring configuration keys.
#[derive(Args, Default)]
struct Opts {
    #[arg(long)]
    edges: Option<PathBuf>,
    #[arg(long)]
    attrs: Option<PathBuf>,
    #[arg(long)]
    labels: Option<PathBuf>,
    #[arg(long)]
    out_dir: Option<PathBuf>,
    /// Attribute used for fairness metrics (default: first column).
    #[arg(long)]
    sensitive: Option<String>,
    #[arg(long)]
    task: Option<String>,
    /// Number of coarsening levels.
    #[arg(long)]
    levels: Option<String>,
    #[arg(long)]
    lambda_c: Option<f64>,
    #[arg(long)]
    lambda_r: Option<f64>,
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    learning_rate: Option<f64>,
    #[arg(long)]
    layers: Option<usize>,
    #[arg(long)]
    embedder: Option<String>,
    #[arg(long)]
    dim: Option<usize>,
    #[arg(long)]
    walks_per_node: Option<usize>,
    #[arg(long)]
    walk_length: Option<usize>,
    #[arg(long)]
    window: Option<usize>,
    #[arg(long)]
    negatives: Option<usize>,
    #[arg(long)]
    sgns_epochs: Option<usize>,
    #[arg(long)]
    sgns_learning_rate: Option<f64>,
    #[arg(long)]
    normalize_base: Option<bool>,
    #[arg(long)]
    train_ratio: Option<f64>,
    #[arg(long)]
    val_ratio: Option<f64>,
    #[arg(long)]
    lp_ratio: Option<f64>,
    /// Comma-separated advantaged classes.
    #[arg(long)]
    advantaged: Option<String>,
}

impl Opts {
    fn overrides(&self) -> Vec<(&'static str, String)> {
        fn p(x: &Option<PathBuf>) -> Option<String> {
            x.as_ref().map(|p| p.display().to_string())
        }
        fn s<T: ToString>(x: &Option<T>) -> Option<String> {
            x.as_ref().map(T::to_string)
        }
        fn f(x: &Option<f64>) -> Option<String> {
            x.map(|v| format!("{v:?}"))
        }
        let pairs = [
            ("edges", p(&self.edges)),
            ("attrs", p(&self.attrs)),
            ("labels", p(&self.labels)),
            ("out_dir", p(&self.out_dir)),
            ("sensitive", s(&self.sensitive)),
            ("task", s(&self.task)),
            ("levels", s(&self.levels)),
            ("lambda_c", f(&self.lambda_c)),
            ("lambda_r", f(&self.lambda_r)),
            ("gamma", f(&self.gamma)),
            ("epochs", s(&self.epochs)),
            ("learning_rate", f(&self.learning_rate)),
            ("layers", s(&self.layers)),
            ("embedder", s(&self.embedder)),
            ("dim", s(&self.dim)),
            ("walks_per_node", s(&self.walks_per_node)),
            ("walk_length", s(&self.walk_length)),
            ("window", s(&self.window)),
            ("negatives", s(&self.negatives)),
            ("sgns_epochs", s(&self.sgns_epochs)),
            ("sgns_learning_rate", f(&self.sgns_learning_rate)),
            ("normalize_base", s(&self.normalize_base)),
            ("train_ratio", f(&self.train_ratio)),
            ("val_ratio", f(&self.val_ratio)),
            ("lp_ratio", f(&self.lp_ratio)),
            ("advantaged", s(&self.advantaged)),
        ];
        pairs.into_iter().filter_map(|(k, v)| v.map(|v| (k, v))).collect()
    }
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "sbm")]
    kind: String,
    #[arg(long, default_value_t = 1000)]
    n: usize,
    #[arg(long, default_value_t = 4)]
    blocks: usize,
    #[arg(long, default_value_t = 2)]
    groups: usize,
    #[arg(long, default_value_t = 2)]
    classes: usize,
    #[arg(long, default_value_t = 0.02)]
    p_in: f64,
    #[arg(long, default_value_t = 0.002)]
    p_out: f64,
    #[arg(long, default_value_t = 0.0)]
    p_group: f64,
    #[arg(long, default_value_t = 0.8)]
    rho: f64,
    #[arg(long, default_value_t = 0.2)]
    label_skew: f64,
    #[arg(long, default_value_t = 0.1)]
    label_noise: f64,
}

fn resolve(cli_seed: Option<u64>, config: &Option<PathBuf>, opts: &Opts) -> Result<PipelineConfig> {
    let mut cfg = match config {
        Some(path) => PipelineConfig::load(path)?,
        None => PipelineConfig::default(),
    };
    for (key, value) in opts.overrides() {
        cfg.set(key, &value)?;
    }
    if let Some(seed) = cli_seed {
        cfg.seed = seed;
    }
    cfg.validate()?;
    Ok(cfg)
}

fn required<'a>(p: &'a Option<PathBuf>, what: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("--{what} is required")))
}

fn output(path: &Option<PathBuf>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, path: &Option<PathBuf>) -> Result<()> {
    let mut out = output(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    writeln!(out)?;
    out.flush()?;
    Ok(())
}

fn load_embedding_for(path: &Path, names: &[String]) -> Result<Embedding> {
    let (file_names, e) = read_embedding(BufReader::new(File::open(path)?))?;
    if file_names.len() != names.len() {
        return Err(Error::DimensionMismatch {
            expected: names.len(),
            got: file_names.len(),
        });
    }
    let index: std::collections::HashMap<&str, usize> =
        file_names.iter().enumerate().map(|(i, n)| (n.as_str(), i)).collect();
    let mut m = e.matrix.clone();
    for (i, name) in names.iter().enumerate() {
        let j = *index.get(name.as_str()).ok_or_else(|| Error::MissingNode(name.clone()))?;
        m.row_mut(i).copy_from(&e.matrix.row(j));
    }
    Ok(Embedding {
        matrix: m,
        normalized: e.normalized,
    })
}

fn parse_sweep(text: &str) -> Result<Vec<usize>> {
    let bad = || Error::Config(format!("bad level range {text:?}"));
    if let Some((a, b)) = text.split_once("..") {
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let b: usize = b.trim_start_matches('=').trim().parse().map_err(|_| bad())?;
        if a > b {
            return Err(bad());
        }
        return Ok((a..=b).collect());
    }
    text.split(',').map(|x| x.trim().parse().map_err(|_| bad())).collect()
}

fn dataset(cfg: &PipelineConfig, with_labels: bool) -> Result<Dataset> {
    let labels = if with_labels { Some(required(&cfg.labels, "labels")?) } else { None };
    pipeline::load_dataset(required(&cfg.edges, "edges")?, required(&cfg.attrs, "attrs")?, labels)
}

fn run(cli: Cli) -> Result<()> {
    let seed = cli.seed;
    let config = cli.config;
    match cli.command {
        Command::Coarsen { opts, out } => {
            let cfg = resolve(seed, &config, &opts)?;
            let data = dataset(&cfg, false)?;
            let h = coarsen_hierarchy(data.graph, data.attributes, cfg.levels, cfg.lambda_c)?;
            save_hierarchy(&h, &out)?;
            for (i, lv) in h.levels.iter().enumerate() {
                eprintln!("level {i}: {} nodes, {} edges", lv.graph.node_count(), lv.graph.edge_count());
            }
        }
        Command::Embed { opts, hierarchy, out } => {
            let cfg = resolve(seed, &config, &opts)?;
            let g = match &hierarchy {
                Some(dir) => load_hierarchy(dir, cfg.lambda_c)?.levels.pop().unwrap().graph,
                None => pipeline::read_graph(required(&cfg.edges, "edges")?)?,
            };
            let e = embed(&g, &cfg.embedder_config())?;
            let mut f = BufWriter::new(File::create(&out)?);
            write_embedding(&e, g.names(), &mut f)?;
            f.flush()?;
        }
        Command::Refine {
            opts,
            hierarchy,
            embedding,
            out,
            model_out,
            trace_out,
        } => {
            let cfg = resolve(seed, &config, &opts)?;
            let h = load_hierarchy(&hierarchy, cfg.lambda_c)?;
            let coarsest = h.coarsest();
            let base = load_embedding_for(&embedding, coarsest.graph.names())?;
            let h0 = if cfg.normalize_base { base.row_normalized()? } else { base };
            let hyper = cfg.refine_hyper();
            let (model, trace) = train_refiner(&coarsest.graph, &coarsest.attributes, &h0, &hyper)?;
            let e0 = refine_all(&h, &h0, &model)?;
            let mut f = BufWriter::new(File::create(&out)?);
            write_embedding(&e0, h.finest().graph.names(), &mut f)?;
            f.flush()?;
            if let Some(stem) = model_out {
                model.save(&stem, &hyper.meta())?;
            }
            if let Some(path) = trace_out {
                let mut f = BufWriter::new(File::create(path)?);
                write_loss_trace(&trace, &mut f)?;
                f.flush()?;
            }
        }
        Command::EvalNc { opts, embedding, out } => {
            let cfg = resolve(seed, &config, &opts)?;
            let data = dataset(&cfg, true)?;
            let e = load_embedding_for(&embedding, data.graph.names())?;
            write_json(&pipeline::evaluate_nc(&e, &data, &cfg)?, &out)?;
        }
        Command::EvalLp {
            opts,
            embedding,
            write_train_graph,
            out,
        } => {
            let cfg = resolve(seed, &config, &opts)?;
            let data = dataset(&cfg, false)?;
            let split = downstream::lp_split(&data.graph, cfg.lp_ratio, cfg.seed)?;
            if let Some(path) = &write_train_graph {
                let mut f = BufWriter::new(File::create(path)?);
                write_edge_list(&split.train_graph, &mut f)?;
                f.flush()?;
            }
            match embedding {
                Some(path) => {
                    let e = load_embedding_for(&path, data.graph.names())?;
                    let groups: GroupColumn = data.sensitive(cfg.sensitive.as_deref())?;
                    let report = downstream::lp_evaluate(&e.matrix, &split, &groups, &Default::default())?;
                    write_json(&report, &out)?;
                }
                None if write_train_graph.is_none() => {
                    return Err(Error::Config("eval-lp needs --embedding or --write-train-graph".into()))
                }
                None => {}
            }
        }
        Command::Pipeline { opts } => {
            let cfg = resolve(seed, &config, &opts)?;
            let run = pipeline::run_pipeline(&cfg)?;
            write_json(&run.report, &None)?;
            let t = run.timings;
            eprintln!(
                "coarsen {:.3}s, embed {:.3}s, refine {:.3}s, eval {:.3}s, total {:.3}s",
                t.coarsen_s, t.embed_s, t.refine_s, t.eval_s, t.total_s
            );
        }
        Command::Synth { spec, out } => {
            let cfg = resolve(seed, &config, &Opts::default())?;
            let spec = SyntheticSpec {
                kind: spec.kind.parse::<SyntheticKind>()?,
                n: spec.n,
                blocks: spec.blocks,
                groups: spec.groups,
                classes: spec.classes,
                p_in: spec.p_in,
                p_out: spec.p_out,
                p_group: spec.p_group,
                rho: spec.rho,
                label_skew: spec.label_skew,
                label_noise: spec.label_noise,
                seed: cfg.seed,
            };
            let sg = generate_synthetic(&spec)?;
            let files = write_synthetic(&sg, &out)?;
            eprintln!(
                "{} nodes, {} edges -> {}",
                sg.graph.node_count(),
                sg.graph.edge_count(),
                files.edges.display()
            );
        }
        Command::CheckTheorem1 { opts, embedding, tol } => {
            let cfg = resolve(seed, &config, &opts)?;
            let data = dataset(&cfg, false)?;
            let e = load_embedding_for(&embedding, data.graph.names())?;
            let groups = data.sensitive(cfg.sensitive.as_deref())?;
            let n_groups = groups.codes.iter().max().map_or(0, |m| m + 1);
            let report = theorem1_check(&e, &groups.codes, n_groups, &data.graph, tol)?;
            write_json(&report, &None)?;
        }
        Command::Bench { mut opts, out } => {
            let sweep = opts.levels.take().unwrap_or_else(|| "0..4".into());
            let cfg = resolve(seed, &config, &opts)?;
            let data = dataset(&cfg, false)?;
            let rows = pipeline::bench(&data.graph, &data.attributes, &cfg, &parse_sweep(&sweep)?)?;
            let mut w = output(&out)?;
            pipeline::write_bench_csv(&rows, &mut w)?;
            w.flush()?;
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_numeric() { 3 } else { 2 })
        }
    }
}
