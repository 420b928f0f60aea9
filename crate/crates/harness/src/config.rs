//! Flat `key=value` experiment configuration.
//!
//! One pair per line; blank lines and lines starting with `#` are ignored.
//! Unknown keys, duplicate keys and malformed values are errors that carry
//! the offending line number.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use tensorized::data::{NoiseScale, SyntheticKind};
use tensorized::nn::OptimizerKind;
use tensorized::recon::ReconArch;
use tensorized::ssl::PairMode;
use tensorized::vae::{ReconMode, ReparamMode};

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Line { line: usize, message: String },
    #[error("missing required key '{0}'")]
    Missing(&'static str),
    #[error("{0}")]
    Invalid(String),
    #[error("cannot read config {path}: {message}")]
    Read { path: PathBuf, message: String },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Ae1,
    Ae2,
    Ae3,
    Tae1,
    Tae2,
    Ptae,
    Vae,
    Tvae,
    Cl,
    Tcl,
    Rbm,
    Trbm,
    Kmeans,
}

impl ModelKind {
    pub const ALL: [ModelKind; 13] = [
        ModelKind::Ae1,
        ModelKind::Ae2,
        ModelKind::Ae3,
        ModelKind::Tae1,
        ModelKind::Tae2,
        ModelKind::Ptae,
        ModelKind::Vae,
        ModelKind::Tvae,
        ModelKind::Cl,
        ModelKind::Tcl,
        ModelKind::Rbm,
        ModelKind::Trbm,
        ModelKind::Kmeans,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Ae1 => "ae1",
            ModelKind::Ae2 => "ae2",
            ModelKind::Ae3 => "ae3",
            ModelKind::Tae1 => "tae1",
            ModelKind::Tae2 => "tae2",
            ModelKind::Ptae => "ptae",
            ModelKind::Vae => "vae",
            ModelKind::Tvae => "tvae",
            ModelKind::Cl => "cl",
            ModelKind::Tcl => "tcl",
            ModelKind::Rbm => "rbm",
            ModelKind::Trbm => "trbm",
            ModelKind::Kmeans => "kmeans",
        }
    }

    pub fn recon_arch(self) -> Option<ReconArch> {
        match self {
            ModelKind::Ae1 => Some(ReconArch::Ae1),
            ModelKind::Ae2 => Some(ReconArch::Ae2),
            ModelKind::Ae3 => Some(ReconArch::Ae3),
            ModelKind::Tae1 => Some(ReconArch::Tae1),
            ModelKind::Tae2 => Some(ReconArch::Tae2),
            ModelKind::Ptae => Some(ReconArch::Ptae),
            _ => None,
        }
    }

    /// Standard (single-embedding) models train with one cluster.
    pub fn is_tensorized(self) -> bool {
        matches!(
            self,
            ModelKind::Tae1
                | ModelKind::Tae2
                | ModelKind::Ptae
                | ModelKind::Tvae
                | ModelKind::Tcl
                | ModelKind::Trbm
                | ModelKind::Kmeans
        )
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        ModelKind::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| format!("unknown model '{s}'"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetKind {
    Synthetic(SyntheticKind),
    Csv,
    Idx,
}

impl DatasetKind {
    pub fn name(self) -> &'static str {
        match self {
            DatasetKind::Synthetic(k) => k.name(),
            DatasetKind::Csv => "csv",
            DatasetKind::Idx => "idx",
        }
    }
}

impl FromStr for DatasetKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "csv" => Ok(DatasetKind::Csv),
            "idx" => Ok(DatasetKind::Idx),
            _ => s
                .parse::<SyntheticKind>()
                .map(DatasetKind::Synthetic)
                .map_err(|_| format!("unknown dataset '{s}'")),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub model: ModelKind,
    pub dataset: DatasetKind,
    pub k: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub optimizer: OptimizerKind,
    /// 0 means full batch.
    pub batch_size: usize,
    pub lambda: f64,
    pub hidden: usize,
    pub latent: usize,
    pub embed_dim: usize,
    pub recon_mode: ReconMode,
    pub reparam_mode: ReparamMode,
    pub pair_mode: PairMode,
    pub elastic_alpha: f64,
    pub elastic_sigma: f64,
    pub jitter_std: f64,
    pub rbm_hidden: usize,
    pub cd_k: usize,
    pub rbm_exact: bool,
    pub noise: f64,
    pub noise_scale: NoiseScale,
    pub seed: u64,
    pub data_seed: u64,
    pub noise_seed: u64,
    pub patience: usize,
    pub tolerance: f64,
    pub csv_path: Option<PathBuf>,
    pub csv_label: Option<String>,
    pub csv_features: Option<Vec<String>>,
    pub idx_images: Option<PathBuf>,
    pub idx_labels: Option<PathBuf>,
    pub idx_classes: Vec<u8>,
    pub idx_per_class: usize,
    pub idx_test_images: Option<PathBuf>,
    pub idx_test_labels: Option<PathBuf>,
    pub runs: usize,
    pub tsne_iters: usize,
    pub tsne_perplexity: f64,
    pub out: PathBuf,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            model: ModelKind::Ptae,
            dataset: DatasetKind::Synthetic(SyntheticKind::ParallelLines),
            k: 1,
            epochs: 500,
            learning_rate: 1e-3,
            optimizer: OptimizerKind::Adam,
            batch_size: 0,
            lambda: 0.0,
            hidden: 200,
            latent: 2,
            embed_dim: 128,
            recon_mode: ReconMode::BceSigmoid,
            reparam_mode: ReparamMode::StdDev,
            pair_mode: PairMode::Supervised,
            elastic_alpha: 8.0,
            elastic_sigma: 3.0,
            jitter_std: 0.1,
            rbm_hidden: 64,
            cd_k: 1,
            rbm_exact: false,
            noise: 0.0,
            noise_scale: NoiseScale::Variance,
            seed: 0,
            data_seed: 0,
            noise_seed: 0,
            patience: 10,
            tolerance: 1e-6,
            csv_path: None,
            csv_label: None,
            csv_features: None,
            idx_images: None,
            idx_labels: None,
            idx_classes: vec![0, 1, 9],
            idx_per_class: 200,
            idx_test_images: None,
            idx_test_labels: None,
            runs: 5,
            tsne_iters: 1000,
            tsne_perplexity: 30.0,
            out: PathBuf::from("out"),
        }
    }
}

fn num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("invalid number '{v}'"))
}

fn positive_f64(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a positive number, got '{v}'"))
    }
}

fn non_negative_f64(v: &str) -> Result<f64, String> {
    let x: f64 = num(v)?;
    if x >= 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(format!("expected a non-negative number, got '{v}'"))
    }
}

fn positive_usize(v: &str) -> Result<usize, String> {
    match num::<usize>(v)? {
        0 => Err(format!("expected a positive integer, got '{v}'")),
        n => Ok(n),
    }
}

fn boolean(v: &str) -> Result<bool, String> {
    match v {
        "true" => Ok(true),
        "false" => Ok(false),
        _ => Err(format!("expected true or false, got '{v}'")),
    }
}

fn list(v: &str) -> Vec<String> {
    v.split(',')
        .map(|s| s.trim().to_string())
        .filter(|s| !s.is_empty())
        .collect()
}

fn classes(v: &str) -> Result<Vec<u8>, String> {
    let out = list(v)
        .iter()
        .map(|s| num::<u8>(s))
        .collect::<Result<Vec<u8>, _>>()?;
    if out.is_empty() {
        return Err("class list is empty".into());
    }
    Ok(out)
}

fn parsed<T: FromStr>(v: &str) -> Result<T, String>
where
    T::Err: fmt::Display,
{
    v.parse::<T>().map_err(|e| e.to_string())
}

impl ExperimentConfig {
    /// Sets one key from its textual value.
    pub fn set(&mut self, key: &str, value: &str) -> Result<(), String> {
        let v = value;
        match key {
            "model" => self.model = v.parse()?,
            "dataset" => self.dataset = v.parse()?,
            "k" => self.k = positive_usize(v)?,
            "epochs" => self.epochs = positive_usize(v)?,
            "learning_rate" => self.learning_rate = positive_f64(v)?,
            "optimizer" => self.optimizer = parsed(v)?,
            "batch_size" => self.batch_size = num(v)?,
            "lambda" => self.lambda = non_negative_f64(v)?,
            "hidden" => self.hidden = positive_usize(v)?,
            "latent" => self.latent = positive_usize(v)?,
            "embed_dim" => self.embed_dim = positive_usize(v)?,
            "recon_mode" => self.recon_mode = parsed(v)?,
            "reparam_mode" => self.reparam_mode = parsed(v)?,
            "pair_mode" => self.pair_mode = parsed(v)?,
            "elastic_alpha" => self.elastic_alpha = non_negative_f64(v)?,
            "elastic_sigma" => self.elastic_sigma = positive_f64(v)?,
            "jitter_std" => self.jitter_std = non_negative_f64(v)?,
            "rbm_hidden" => self.rbm_hidden = positive_usize(v)?,
            "cd_k" => self.cd_k = positive_usize(v)?,
            "rbm_exact" => self.rbm_exact = boolean(v)?,
            "noise" => self.noise = non_negative_f64(v)?,
            "noise_scale" => self.noise_scale = parsed(v)?,
            "seed" => self.seed = num(v)?,
            "data_seed" => self.data_seed = num(v)?,
            "noise_seed" => self.noise_seed = num(v)?,
            "patience" => self.patience = positive_usize(v)?,
            "tolerance" => self.tolerance = non_negative_f64(v)?,
            "csv_path" => self.csv_path = Some(PathBuf::from(v)),
            "csv_label" => self.csv_label = Some(v.to_string()),
            "csv_features" => self.csv_features = Some(list(v)),
            "idx_images" => self.idx_images = Some(PathBuf::from(v)),
            "idx_labels" => self.idx_labels = Some(PathBuf::from(v)),
            "idx_classes" => self.idx_classes = classes(v)?,
            "idx_per_class" => self.idx_per_class = positive_usize(v)?,
            "idx_test_images" => self.idx_test_images = Some(PathBuf::from(v)),
            "idx_test_labels" => self.idx_test_labels = Some(PathBuf::from(v)),
            "runs" => self.runs = positive_usize(v)?,
            "tsne_iters" => self.tsne_iters = positive_usize(v)?,
            "tsne_perplexity" => self.tsne_perplexity = positive_f64(v)?,
            "out" => self.out = PathBuf::from(v),
            _ => return Err(format!("unknown key '{key}'")),
        }
        Ok(())
    }

    /// Sets the init, data and noise seeds together.
    pub fn set_all_seeds(&mut self, seed: u64) {
        self.seed = seed;
        self.data_seed = seed;
        self.noise_seed = seed;
    }

    /// Every key, one per line, in a fixed order. Optional keys that are
    /// unset are omitted.
    pub fn serialize(&self) -> String {
        let mut out = String::new();
        let mut put = |k: &str, v: String| {
            out.push_str(k);
            out.push('=');
            out.push_str(&v);
            out.push('\n');
        };
        put("model", self.model.name().into());
        put("dataset", self.dataset.name().into());
        put("k", self.k.to_string());
        put("epochs", self.epochs.to_string());
        put("learning_rate", self.learning_rate.to_string());
        put("optimizer", self.optimizer.name().into());
        put("batch_size", self.batch_size.to_string());
        put("lambda", self.lambda.to_string());
        put("hidden", self.hidden.to_string());
        put("latent", self.latent.to_string());
        put("embed_dim", self.embed_dim.to_string());
        put("recon_mode", self.recon_mode.name().into());
        put("reparam_mode", self.reparam_mode.name().into());
        put("pair_mode", self.pair_mode.name().into());
        put("elastic_alpha", self.elastic_alpha.to_string());
        put("elastic_sigma", self.elastic_sigma.to_string());
        put("jitter_std", self.jitter_std.to_string());
        put("rbm_hidden", self.rbm_hidden.to_string());
        put("cd_k", self.cd_k.to_string());
        put("rbm_exact", self.rbm_exact.to_string());
        put("noise", self.noise.to_string());
        put("noise_scale", self.noise_scale.name().into());
        put("seed", self.seed.to_string());
        put("data_seed", self.data_seed.to_string());
        put("noise_seed", self.noise_seed.to_string());
        put("patience", self.patience.to_string());
        put("tolerance", self.tolerance.to_string());
        let path = |p: &Path| p.to_string_lossy().into_owned();
        if let Some(p) = &self.csv_path {
            put("csv_path", path(p));
        }
        if let Some(l) = &self.csv_label {
            put("csv_label", l.clone());
        }
        if let Some(f) = &self.csv_features {
            put("csv_features", f.join(","));
        }
        if let Some(p) = &self.idx_images {
            put("idx_images", path(p));
        }
        if let Some(p) = &self.idx_labels {
            put("idx_labels", path(p));
        }
        put(
            "idx_classes",
            self.idx_classes
                .iter()
                .map(u8::to_string)
                .collect::<Vec<_>>()
                .join(","),
        );
        put("idx_per_class", self.idx_per_class.to_string());
        if let Some(p) = &self.idx_test_images {
            put("idx_test_images", path(p));
        }
        if let Some(p) = &self.idx_test_labels {
            put("idx_test_labels", path(p));
        }
        put("runs", self.runs.to_string());
        put("tsne_iters", self.tsne_iters.to_string());
        put("tsne_perplexity", self.tsne_perplexity.to_string());
        put("out", path(&self.out));
        out
    }
}

/// `(line number, key, value)` for every assignment in `text`.
fn assignments(text: &str) -> Result<Vec<(usize, String, String)>, ConfigError> {
    let mut seen: Vec<String> = Vec::new();
    let mut out = Vec::new();
    for (idx, raw) in text.lines().enumerate() {
        let line = idx + 1;
        let trimmed = raw.trim();
        if trimmed.is_empty() || trimmed.starts_with('#') {
            continue;
        }
        let (key, value) = trimmed.split_once('=').ok_or_else(|| ConfigError::Line {
            line,
            message: format!("expected key=value, found '{trimmed}'"),
        })?;
        let (key, value) = (key.trim(), value.trim());
        if key.is_empty() {
            return Err(ConfigError::Line {
                line,
                message: "empty key".into(),
            });
        }
        if seen.iter().any(|k| k == key) {
            return Err(ConfigError::Line {
                line,
                message: format!("duplicate key '{key}'"),
            });
        }
        seen.push(key.to_string());
        out.push((line, key.to_string(), value.to_string()));
    }
    Ok(out)
}

/// Applies every assignment in `text` on top of `base`.
pub fn apply_overrides(
    base: ExperimentConfig,
    text: &str,
) -> Result<ExperimentConfig, ConfigError> {
    let mut cfg = base;
    for (line, key, value) in assignments(text)? {
        cfg.set(&key, &value)
            .map_err(|message| ConfigError::Line { line, message })?;
    }
    Ok(cfg)
}

/// Parses a full experiment config; `model` and `dataset` are required.
pub fn parse_config(text: &str) -> Result<ExperimentConfig, ConfigError> {
    let pairs = assignments(text)?;
    for required in ["model", "dataset"] {
        if !pairs.iter().any(|(_, k, _)| k == required) {
            return Err(ConfigError::Missing(required));
        }
    }
    apply_overrides(ExperimentConfig::default(), text)
}

pub fn read_config_text(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|e| ConfigError::Read {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}
