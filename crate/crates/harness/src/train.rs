//! The alternating optimization loop, dataset preparation and inference.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensorized::cluster::{argmin, kmeans, kmeanspp_init, lloyd_step, AssignmentMatrix};
use tensorized::data::{self, add_noise, CsvOptions, Dataset};
use tensorized::metrics::{ari, mse};
use tensorized::nn::{Optimizer, Tensor};
use tensorized::{Error, Result};

use crate::error::Result as HarnessResult;

use crate::config::{ConfigError, DatasetKind, ExperimentConfig, ModelKind};
use crate::model::{derive_seed, Model, STREAM_BATCH, STREAM_EPOCH};
use crate::records::{Metric, Record};

#[derive(Debug, Clone, PartialEq)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean loss of the parameter updates, where the family defines one.
    pub train_loss: Option<f64>,
    /// Masked objective `(1/n) Σ_i L[s_i][i]` after the update, before Lloyd.
    pub objective_before: f64,
    /// The same loss matrix under the reassigned `s`.
    pub objective_after: f64,
    pub reassigned: usize,
    pub empty_clusters: Vec<usize>,
    pub wall_ms: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: Model,
    pub assignment: AssignmentMatrix,
    pub history: Vec<EpochStats>,
    pub converged: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LoopSettings {
    pub epochs: usize,
    pub patience: usize,
    pub tolerance: f64,
    /// 0 means full batch.
    pub batch_size: usize,
    pub seed: u64,
}

impl LoopSettings {
    pub fn from_config(cfg: &ExperimentConfig) -> Self {
        LoopSettings {
            epochs: cfg.epochs,
            patience: cfg.patience,
            tolerance: cfg.tolerance,
            batch_size: cfg.batch_size,
            seed: cfg.seed,
        }
    }
}

fn batches(n: usize, batch_size: usize, seed: u64) -> Vec<Vec<usize>> {
    if batch_size == 0 || batch_size >= n {
        return vec![(0..n).collect()];
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rand::seq::SliceRandom::shuffle(idx.as_mut_slice(), &mut rng);
    idx.chunks(batch_size).map(<[usize]>::to_vec).collect()
}

/// Runs k-means++ initialization, then alternates parameter updates under
/// fixed `S` with Lloyd steps until the epoch budget is spent or `S` has
/// been stable for `patience` epochs with relative objective change below
/// `tolerance`.
pub fn train_loop(
    mut model: Model,
    x: &Tensor,
    opt: &mut Optimizer,
    settings: &LoopSettings,
) -> Result<TrainOutcome> {
    let k = model.k();
    let n = x.rows();
    let mut s = kmeanspp_init(x, k, settings.seed)?;
    model.assignment_changed(x, &s);
    let mut history = Vec::with_capacity(settings.epochs);
    let mut stable = 0;
    let mut previous: Option<f64> = None;
    let mut converged = false;
    for epoch in 1..=settings.epochs {
        let start = Instant::now();
        let epoch_seed = derive_seed(settings.seed, STREAM_EPOCH, epoch as u64);
        model.begin_epoch(x, &s, epoch_seed)?;
        let batch_seed = derive_seed(settings.seed, STREAM_BATCH, epoch as u64);
        let train_loss = model.gd_pass(
            x,
            &s,
            opt,
            &batches(n, settings.batch_size, batch_seed),
            epoch_seed,
        )?;
        let losses = model.loss_matrix(x)?;
        if !losses.is_finite() {
            return Err(Error::NonFinite("loss matrix"));
        }
        let before = losses.masked_sum(&s) / n as f64;
        let next = lloyd_step(&losses)?;
        let after = losses.masked_sum(&next) / n as f64;
        let reassigned = s
            .as_slice()
            .iter()
            .zip(next.as_slice())
            .filter(|(a, b)| a != b)
            .count();
        s = next;
        model.assignment_changed(x, &s);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        history.push(EpochStats {
            epoch,
            train_loss,
            objective_before: before,
            objective_after: after,
            reassigned,
            empty_clusters: s.empty_clusters(),
            wall_ms,
        });

        stable = if reassigned == 0 { stable + 1 } else { 0 };
        let small_change = previous.is_some_and(|p: f64| {
            (after - p).abs() <= settings.tolerance * p.abs().max(f64::MIN_POSITIVE)
        });
        previous = Some(after);
        if stable >= settings.patience && small_change {
            converged = true;
            break;
        }
    }
    Ok(TrainOutcome {
        model,
        assignment: s,
        history,
        converged,
    })
}

/// Loads or generates the configured dataset. CSV features are scaled to
/// `[0, 1]`; RBM models see binarized data.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> HarnessResult<Dataset> {
    let mut ds = match cfg.dataset {
        DatasetKind::Synthetic(kind) => data::gen_synthetic(kind, cfg.data_seed),
        DatasetKind::Csv => {
            let path = cfg
                .csv_path
                .as_ref()
                .ok_or_else(|| ConfigError::Invalid("dataset=csv needs csv_path".into()))?;
            let mut ds = data::load_csv(
                path,
                &CsvOptions {
                    label_column: cfg.csv_label.clone(),
                    feature_columns: cfg.csv_features.clone(),
                },
            )?;
            ds.scale_unit();
            ds
        }
        DatasetKind::Idx => {
            let (images, labels) = idx_paths(cfg)?;
            data::load_idx(images, labels, &cfg.idx_classes, cfg.idx_per_class)?
        }
    };
    if matches!(cfg.model, ModelKind::Rbm | ModelKind::Trbm) {
        let in_unit = ds.x.as_slice().iter().all(|v| (0.0..=1.0).contains(v));
        if !in_unit {
            ds.scale_unit();
        }
        ds.x = tensorized::rbm::binarize(&ds.x);
    }
    Ok(ds)
}

pub fn idx_paths(
    cfg: &ExperimentConfig,
) -> Result<(&std::path::Path, &std::path::Path), ConfigError> {
    match (&cfg.idx_images, &cfg.idx_labels) {
        (Some(i), Some(l)) => Ok((i, l)),
        _ => Err(ConfigError::Invalid(
            "dataset=idx needs idx_images and idx_labels".into(),
        )),
    }
}

/// Cluster count the model trains with: 1 for standard models.
pub fn effective_k(cfg: &ExperimentConfig) -> usize {
    if cfg.model.is_tensorized() {
        cfg.k
    } else {
        1
    }
}

/// Everything a single configured run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub run_id: String,
    pub dataset: Dataset,
    pub outcome: TrainOutcome,
    /// Deterministic rows.
    pub records: Vec<Record>,
    /// Wall-clock rows.
    pub timings: Vec<Record>,
    /// Cluster labels used for scoring: `S`, or k-means on the embeddings
    /// for standard models.
    pub predicted: Vec<usize>,
}

pub fn run_id(cfg: &ExperimentConfig) -> String {
    format!("{}-{}-s{}", cfg.model, cfg.dataset.name(), cfg.seed)
}

/// Embeddings of every row under its assigned cluster.
pub fn embeddings(model: &Model, x: &Tensor, s: &AssignmentMatrix) -> Result<Tensor> {
    let rows =
        tensorized::par::try_map_range(x.rows(), |i| model.embed(x.row(i), s.cluster_of(i)))?;
    Tensor::from_rows(&rows)
}

/// Reconstructions of every row through its assigned cluster.
pub fn reconstructions(model: &Model, x: &Tensor, s: &AssignmentMatrix) -> Result<Option<Tensor>> {
    let rows =
        tensorized::par::try_map_range(x.rows(), |i| model.reconstruct(x.row(i), s.cluster_of(i)))?;
    match rows.into_iter().collect::<Option<Vec<_>>>() {
        Some(r) => Ok(Some(Tensor::from_rows(&r)?)),
        None => Ok(None),
    }
}

/// Trains the configured model and scores it.
pub fn run_experiment(cfg: &ExperimentConfig) -> HarnessResult<RunOutput> {
    let dataset = prepare_dataset(cfg)?;
    run_on_dataset(cfg, dataset)
}

pub fn run_on_dataset(cfg: &ExperimentConfig, dataset: Dataset) -> HarnessResult<RunOutput> {
    let k = effective_k(cfg);
    let clean = dataset.x.clone();
    let train_x = if cfg.noise > 0.0 {
        add_noise(&clean, cfg.noise, cfg.noise_scale, cfg.noise_seed)?
    } else {
        clean.clone()
    };
    let model = Model::build(cfg, &dataset, k)?;
    let mut opt = Optimizer::new(cfg.optimizer, cfg.learning_rate)?;
    let outcome = train_loop(model, &train_x, &mut opt, &LoopSettings::from_config(cfg))?;

    let id = run_id(cfg);
    let (model_name, data_name) = (cfg.model.name(), dataset.name.clone());
    let record =
        |metric, value, epoch: i64| Record::new(&id, model_name, &data_name, metric, value, epoch);
    let mut records = Vec::new();
    let mut timings = Vec::new();
    for st in &outcome.history {
        records.push(record(
            Metric::EpochLoss,
            st.objective_after,
            st.epoch as i64,
        ));
        let mut t = record(Metric::EpochWallMs, st.wall_ms, st.epoch as i64);
        t.wall_ms = st.wall_ms;
        timings.push(t);
    }
    records.push(record(
        Metric::ParamCount,
        outcome.model.param_count() as f64,
        -1,
    ));

    let predicted = if k > 1 || cfg.model == ModelKind::Kmeans {
        outcome.assignment.as_slice().to_vec()
    } else {
        let z = embeddings(&outcome.model, &train_x, &outcome.assignment)?;
        kmeans(&z, cfg.k.min(z.rows()), 300, cfg.seed)?
            .assignment
            .as_slice()
            .to_vec()
    };
    if let Some(labels) = &dataset.labels {
        if labels.len() >= 2 {
            records.push(record(Metric::Ari, ari(labels, &predicted)?, -1));
        }
    }
    if cfg.noise > 0.0 {
        if let Some(rec) = reconstructions(&outcome.model, &train_x, &outcome.assignment)? {
            records.push(record(Metric::MseDenoise, mse(&clean, &rec)?, -1));
        }
    }
    Ok(RunOutput {
        run_id: id,
        dataset,
        outcome,
        records,
        timings,
        predicted,
    })
}

/// Maps new rows into the coordinates the model was trained in: the
/// training scale for CSV data, then binarization for RBM models.
pub fn prepare_inputs(cfg: &ExperimentConfig, train: &Dataset, mut x: Tensor) -> Result<Tensor> {
    if x.cols() != train.d() {
        return Err(Error::Shape {
            context: "inference input columns",
            expected: train.d().to_string(),
            actual: x.cols().to_string(),
        });
    }
    if cfg.dataset == DatasetKind::Csv {
        if let Some(info) = &train.scale_info {
            let d = x.cols();
            for (i, v) in x.as_mut_slice().iter_mut().enumerate() {
                let (lo, hi) = info[i % d];
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
    }
    if matches!(cfg.model, ModelKind::Rbm | ModelKind::Trbm) {
        x = tensorized::rbm::binarize(&x);
    }
    Ok(x)
}

/// Assigns `x` to the cluster with the smallest loss (lowest index on ties)
/// and returns that cluster's embedding.
pub fn infer(model: &Model, x: &[f64]) -> Result<(usize, Vec<f64>)> {
    let losses = model.point_losses(x)?;
    tensorized::error::ensure_finite(&losses, "inference losses")?;
    let j = argmin(&losses);
    Ok((j, model.embed(x, j)?))
}
