//! Pipeline configuration as a plain `key=value` file.
//!
//! Blank lines and `#` comments are ignored. Unknown keys are errors.
//! [`PipelineConfig::to_text`] writes every key in a fixed order, so parsing
//! and re-serializing is idempotent.

use std::fmt::{self, Write as _};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use crate::embed::{DeepWalkParams, EmbedderConfig};
use crate::error::{Error, Result};
use crate::refine::RefineHyper;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskKind {
    Nc,
    Lp,
}

impl FromStr for TaskKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "nc" => Ok(TaskKind::Nc),
            "lp" => Ok(TaskKind::Lp),
            _ => Err(Error::Config(format!("unknown task {s:?} (expected nc or lp)"))),
        }
    }
}

impl fmt::Display for TaskKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TaskKind::Nc => "nc",
            TaskKind::Lp => "lp",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub edges: Option<PathBuf>,
    pub attrs: Option<PathBuf>,
    pub labels: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
    /// Sensitive attribute used for fairness metrics; `None` means the first
    /// attribute column.
    pub sensitive: Option<String>,
    pub task: TaskKind,
    pub levels: usize,
    pub lambda_c: f64,
    pub embedder: EmbedderConfig,
    pub refine: RefineHyper,
    /// Row-normalize the base embedding before training and refinement.
    pub normalize_base: bool,
    pub seed: u64,
    pub train_ratio: f64,
    pub val_ratio: f64,
    pub lp_ratio: f64,
    /// Advantaged classes; empty means the default for the label count.
    pub advantaged: Vec<usize>,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            edges: None,
            attrs: None,
            labels: None,
            out_dir: None,
            sensitive: None,
            task: TaskKind::Nc,
            levels: 2,
            lambda_c: 0.5,
            embedder: EmbedderConfig::default(),
            refine: RefineHyper::default(),
            normalize_base: false,
            seed: 0,
            train_ratio: 0.5,
            val_ratio: 0.25,
            lp_ratio: 0.1,
            advantaged: Vec::new(),
        }
    }
}

fn parse<T: FromStr>(key: &str, value: &str) -> Result<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| Error::Config(format!("{key} = {value:?}: {e}")))
}

fn opt_path(value: &str) -> Option<PathBuf> {
    (!value.is_empty()).then(|| PathBuf::from(value))
}

fn show_path(p: &Option<PathBuf>) -> String {
    p.as_ref().map(|p| p.display().to_string()).unwrap_or_default()
}

impl PipelineConfig {
    pub const KEYS: &'static [&'static str] = &[
        "edges",
        "attrs",
        "labels",
        "out_dir",
        "sensitive",
        "task",
        "levels",
        "lambda_c",
        "lambda_r",
        "gamma",
        "epochs",
        "learning_rate",
        "layers",
        "embedder",
        "dim",
        "walks_per_node",
        "walk_length",
        "window",
        "negatives",
        "sgns_epochs",
        "sgns_learning_rate",
        "normalize_base",
        "seed",
        "train_ratio",
        "val_ratio",
        "lp_ratio",
        "advantaged",
    ];

    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let value = value.trim();
        let dw: &mut DeepWalkParams = &mut self.embedder.deepwalk;
        match key {
            "edges" => self.edges = opt_path(value),
            "attrs" => self.attrs = opt_path(value),
            "labels" => self.labels = opt_path(value),
            "out_dir" => self.out_dir = opt_path(value),
            "sensitive" => self.sensitive = (!value.is_empty()).then(|| value.to_string()),
            "task" => self.task = value.parse()?,
            "levels" => self.levels = parse(key, value)?,
            "lambda_c" => self.lambda_c = parse(key, value)?,
            "lambda_r" => self.refine.lambda_r = parse(key, value)?,
            "gamma" => self.refine.gamma = parse(key, value)?,
            "epochs" => self.refine.epochs = parse(key, value)?,
            "learning_rate" => self.refine.learning_rate = parse(key, value)?,
            "layers" => self.refine.layers = parse(key, value)?,
            "embedder" => self.embedder.kind = value.parse()?,
            "dim" => self.embedder.dim = parse(key, value)?,
            "walks_per_node" => dw.walks_per_node = parse(key, value)?,
            "walk_length" => dw.walk_length = parse(key, value)?,
            "window" => dw.window = parse(key, value)?,
            "negatives" => dw.negatives = parse(key, value)?,
            "sgns_epochs" => dw.epochs = parse(key, value)?,
            "sgns_learning_rate" => dw.initial_lr = parse(key, value)?,
            "normalize_base" => self.normalize_base = parse(key, value)?,
            "seed" => self.seed = parse(key, value)?,
            "train_ratio" => self.train_ratio = parse(key, value)?,
            "val_ratio" => self.val_ratio = parse(key, value)?,
            "lp_ratio" => self.lp_ratio = parse(key, value)?,
            "advantaged" => {
                self.advantaged = value
                    .split(',')
                    .map(str::trim)
                    .filter(|s| !s.is_empty())
                    .map(|s| parse(key, s))
                    .collect::<Result<_>>()?
            }
            _ => return Err(Error::Config(format!("unknown key {key:?}"))),
        }
        Ok(())
    }

    /// Textual value of one key, as [`set`](Self::set) accepts it.
    pub fn get(&self, key: &str) -> Option<String> {
        let dw = &self.embedder.deepwalk;
        Some(match key {
            "edges" => show_path(&self.edges),
            "attrs" => show_path(&self.attrs),
            "labels" => show_path(&self.labels),
            "out_dir" => show_path(&self.out_dir),
            "sensitive" => self.sensitive.clone().unwrap_or_default(),
            "task" => self.task.to_string(),
            "levels" => self.levels.to_string(),
            "lambda_c" => format!("{:?}", self.lambda_c),
            "lambda_r" => format!("{:?}", self.refine.lambda_r),
            "gamma" => format!("{:?}", self.refine.gamma),
            "epochs" => self.refine.epochs.to_string(),
            "learning_rate" => format!("{:?}", self.refine.learning_rate),
            "layers" => self.refine.layers.to_string(),
            "embedder" => self.embedder.kind.to_string(),
            "dim" => self.embedder.dim.to_string(),
            "walks_per_node" => dw.walks_per_node.to_string(),
            "walk_length" => dw.walk_length.to_string(),
            "window" => dw.window.to_string(),
            "negatives" => dw.negatives.to_string(),
            "sgns_epochs" => dw.epochs.to_string(),
            "sgns_learning_rate" => format!("{:?}", dw.initial_lr),
            "normalize_base" => self.normalize_base.to_string(),
            "seed" => self.seed.to_string(),
            "train_ratio" => format!("{:?}", self.train_ratio),
            "val_ratio" => format!("{:?}", self.val_ratio),
            "lp_ratio" => format!("{:?}", self.lp_ratio),
            "advantaged" => self.advantaged.iter().map(|c| c.to_string()).collect::<Vec<_>>().join(","),
            _ => return None,
        })
    }

    /// Applies every `key=value` line of `text` on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got {line:?}"),
            })?;
            self.set(key.trim(), value)?;
        }
        Ok(())
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = PipelineConfig::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::new();
        for key in Self::KEYS {
            let _ = writeln!(out, "{key}={}", self.get(key).unwrap_or_default());
        }
        out
    }

    /// Embedder settings with the run seed applied.
    pub fn embedder_config(&self) -> EmbedderConfig {
        EmbedderConfig {
            seed: self.seed,
            ..self.embedder.clone()
        }
    }

    /// Refinement settings with the run seed applied.
    pub fn refine_hyper(&self) -> RefineHyper {
        RefineHyper {
            init_seed: self.seed,
            ..self.refine.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.lambda_c) {
            return Err(Error::Config(format!("lambda_c = {} outside [0, 1]", self.lambda_c)));
        }
        self.refine.validate()?;
        self.embedder.validate()?;
        if !(self.train_ratio > 0.0 && self.val_ratio >= 0.0 && self.train_ratio + self.val_ratio < 1.0) {
            return Err(Error::Config("train_ratio + val_ratio must leave a test split".into()));
        }
        if !(0.0..1.0).contains(&self.lp_ratio) {
            return Err(Error::Config(format!("lp_ratio = {} outside [0, 1)", self.lp_ratio)));
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embed::EmbedderKind;

    #[test]
    fn defaults_round_trip() {
        let text = PipelineConfig::default().to_text();
        let cfg = PipelineConfig::parse(&text).unwrap();
        assert_eq!(cfg, PipelineConfig::default());
        assert_eq!(cfg.to_text(), text);
    }

    #[test]
    fn partial_file_and_override() {
        let mut cfg = PipelineConfig::parse("# run\nlevels = 4\nlambda_r=0.25\n\nembedder=deepwalk\nadvantaged=1,2\n").unwrap();
        assert_eq!(cfg.levels, 4);
        assert_eq!(cfg.refine.lambda_r, 0.25);
        assert_eq!(cfg.embedder.kind, EmbedderKind::DeepWalk);
        assert_eq!(cfg.advantaged, vec![1, 2]);
        cfg.set("levels", "1").unwrap();
        assert_eq!(cfg.levels, 1);
        let again = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn every_key_is_settable() {
        let cfg = PipelineConfig::default();
        let mut other = PipelineConfig::default();
        for key in PipelineConfig::KEYS {
            other.set(key, &cfg.get(key).unwrap()).unwrap();
        }
        assert_eq!(other, cfg);
    }

    #[test]
    fn errors() {
        assert!(PipelineConfig::parse("bogus=1").is_err());
        assert!(PipelineConfig::parse("levels").is_err());
        assert!(PipelineConfig::parse("levels=-1").is_err());
        assert!(PipelineConfig::parse("task=xx").is_err());
        let cfg = PipelineConfig::parse("gamma=2").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn float_text_is_exact() {
        let cfg = PipelineConfig::parse("lambda_c=0.1").unwrap();
        let back = PipelineConfig::parse(&cfg.to_text()).unwrap();
        assert_eq!(back.lambda_c.to_bits(), 0.1f64.to_bits());
    }
}
