//! One interface over every model family for the alternating loop.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensorized::cluster::{
    compute_centers, distance_losses, AssignmentMatrix, ClusterCenters, LossMatrix,
};
use tensorized::data::Dataset;
use tensorized::nn::{Optimizer, Parameterized, Tensor};
use tensorized::rbm::{RbmScoring, RbmTrainConfig, TrbmModel};
use tensorized::recon::PtaeModel;
use tensorized::ssl::{self, Augmentation, ConvTrunkSpec, PairMode, TclModel, TripletBatch};
use tensorized::vae::{NoiseTable, ReconMode, TvaeModel};
use tensorized::{Error, Result};

use crate::config::{ExperimentConfig, ModelKind};
use crate::error::HarnessError;

/// Seed for a named sub-stream of a run.
pub fn derive_seed(seed: u64, stream: u64, index: u64) -> u64 {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng.set_word_pos(u128::from(index) * 16);
    rng.random()
}

pub(crate) const STREAM_PARAMS: u64 = 1;
pub(crate) const STREAM_EPOCH: u64 = 2;
pub(crate) const STREAM_BATCH: u64 = 3;

#[derive(Debug, Clone)]
pub enum Model {
    Recon(PtaeModel),
    Vae {
        model: TvaeModel,
        noise: NoiseTable,
    },
    Contrastive {
        model: TclModel,
        pair_mode: PairMode,
        augmentation: Augmentation,
        labels: Option<Vec<usize>>,
        batch: Option<TripletBatch>,
    },
    Rbm {
        model: TrbmModel,
        train: RbmTrainConfig,
        scoring: RbmScoring,
    },
    KMeans(ClusterCenters),
}

impl Model {
    /// Builds the configured model for `data` with `k` clusters.
    pub fn build(cfg: &ExperimentConfig, data: &Dataset, k: usize) -> Result<Model, HarnessError> {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        rng.set_stream(STREAM_PARAMS);
        let d = data.d();
        if let Some(arch) = cfg.model.recon_arch() {
            // AE3's embedding width is the configured cluster count.
            let width = if cfg.model == ModelKind::Ae3 {
                cfg.k
            } else {
                k
            };
            return Ok(Model::Recon(
                PtaeModel::build(arch, d, width, &mut rng)?.with_lambda(cfg.lambda),
            ));
        }
        match cfg.model {
            ModelKind::Vae | ModelKind::Tvae => {
                if cfg.recon_mode == ReconMode::BceSigmoid
                    && data.x.as_slice().iter().any(|v| !(0.0..=1.0).contains(v))
                {
                    return Err(HarnessError::Incompatible(
                        "bce reconstruction needs data in [0, 1]; use recon_mode=mse".into(),
                    ));
                }
                let model =
                    TvaeModel::build(d, cfg.hidden, cfg.latent, k, cfg.recon_mode, true, &mut rng)?;
                let mut model = model;
                model.reparam_mode = cfg.reparam_mode;
                Ok(Model::Vae {
                    noise: NoiseTable::zeros(k, data.n(), cfg.latent),
                    model,
                })
            }
            ModelKind::Cl | ModelKind::Tcl => {
                let spec = ConvTrunkSpec::default();
                let model = match data.image_shape {
                    Some(shape) => TclModel::conv(&mut rng, shape, spec, cfg.embed_dim, k)?,
                    None => TclModel::dense(&mut rng, d, spec.trunk_width, cfg.embed_dim, k)?,
                };
                let augmentation = match data.image_shape {
                    Some((height, width)) => Augmentation::Elastic {
                        height,
                        width,
                        alpha: cfg.elastic_alpha,
                        sigma: cfg.elastic_sigma,
                    },
                    None => Augmentation::Jitter {
                        std: cfg.jitter_std,
                    },
                };
                if cfg.pair_mode == PairMode::Supervised && data.labels.is_none() {
                    return Err(HarnessError::Incompatible(
                        "supervised pairs need labels".into(),
                    ));
                }
                Ok(Model::Contrastive {
                    model,
                    pair_mode: cfg.pair_mode,
                    augmentation,
                    labels: data.labels.clone(),
                    batch: None,
                })
            }
            ModelKind::Rbm | ModelKind::Trbm => {
                if data.x.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
                    return Err(HarnessError::Incompatible(
                        "rbm models need binary data".into(),
                    ));
                }
                let model = TrbmModel::random(k, d, cfg.rbm_hidden, &mut rng)?;
                let scoring = model.default_scoring();
                Ok(Model::Rbm {
                    model,
                    train: RbmTrainConfig {
                        k_gibbs: cfg.cd_k,
                        learning_rate: cfg.learning_rate,
                        batch_size: if cfg.batch_size == 0 {
                            10
                        } else {
                            cfg.batch_size
                        },
                        exact_gradient: cfg.rbm_exact,
                    },
                    scoring,
                })
            }
            ModelKind::Kmeans => Ok(Model::KMeans(ClusterCenters::zeros(k, d))),
            _ => unreachable!("reconstruction models handled above"),
        }
    }

    pub fn k(&self) -> usize {
        match self {
            Model::Recon(m) => m.k(),
            Model::Vae { model, .. } => model.k(),
            Model::Contrastive { model, .. } => model.k(),
            Model::Rbm { model, .. } => model.k(),
            Model::KMeans(c) => c.k(),
        }
    }

    /// Draws the epoch's fixed randomness: VAE noise or contrastive triplets.
    pub fn begin_epoch(&mut self, x: &Tensor, s: &AssignmentMatrix, seed: u64) -> Result<()> {
        match self {
            Model::Vae { model, noise } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                *noise = NoiseTable::draw(model.k(), x.rows(), model.latent_dim(), &mut rng);
            }
            Model::Contrastive {
                pair_mode,
                augmentation,
                labels,
                batch,
                ..
            } => {
                *batch = Some(match pair_mode {
                    PairMode::Supervised => {
                        let labels = labels.as_ref().ok_or_else(|| {
                            Error::InvalidArgument("supervised pairs need labels".into())
                        })?;
                        ssl::gen_pairs_supervised(x, labels, seed)?
                    }
                    PairMode::Unsupervised => {
                        ssl::gen_pairs_unsupervised(x, s, *augmentation, seed)?
                    }
                });
            }
            _ => {}
        }
        Ok(())
    }

    /// One pass of parameter updates under fixed `s`. Returns the mean
    /// training loss over batches where the family defines one.
    pub fn gd_pass(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        opt: &mut Optimizer,
        batches: &[Vec<usize>],
        seed: u64,
    ) -> Result<Option<f64>> {
        let mut total = 0.0;
        match self {
            Model::Recon(m) => {
                for b in batches {
                    total += m.grad_step_batch(x, s, b, opt)?;
                }
            }
            Model::Vae { model, noise } => {
                for b in batches {
                    total += model.grad_step_batch(x, s, noise, b, opt)?;
                }
            }
            Model::Contrastive { model, batch, .. } => {
                let triplets = batch.as_ref().ok_or(Error::MissingCache)?;
                for b in batches {
                    total += model.grad_step_batch(triplets, s, b, opt)?;
                }
            }
            Model::Rbm { model, train, .. } => {
                model.train_epoch(x, s, train, seed)?;
                return Ok(None);
            }
            Model::KMeans(_) => return Ok(None),
        }
        Ok(Some(total / batches.len() as f64))
    }

    pub fn loss_matrix(&self, x: &Tensor) -> Result<LossMatrix> {
        match self {
            Model::Recon(m) => m.loss_matrix(x),
            Model::Vae { model, noise } => model.loss_matrix(x, noise),
            Model::Contrastive { model, batch, .. } => {
                model.loss_matrix(batch.as_ref().ok_or(Error::MissingCache)?)
            }
            Model::Rbm { model, scoring, .. } => model.loss_matrix(x, *scoring),
            Model::KMeans(c) => Ok(distance_losses(x, c)),
        }
    }

    /// Refreshes per-cluster centers after an assignment change.
    pub fn assignment_changed(&mut self, x: &Tensor, s: &AssignmentMatrix) {
        match self {
            Model::Recon(m) => m.update_centers(x, s),
            Model::Vae { model, .. } => model.update_centers(x, s),
            Model::KMeans(c) => {
                let previous = (c.counts().iter().sum::<usize>() > 0).then_some(&*c);
                *c = compute_centers(x, s, previous);
            }
            _ => {}
        }
    }

    /// Per-cluster loss of a single new point (VAE noise fixed at zero).
    pub fn point_losses(&self, x: &[f64]) -> Result<Vec<f64>> {
        match self {
            Model::Recon(m) => m.loss_column(x),
            Model::Vae { model, .. } => {
                let zeros = vec![0.0; model.latent_dim()];
                (0..model.k())
                    .map(|j| model.loss_entry(x, j, &zeros))
                    .collect()
            }
            Model::Contrastive { .. } => Err(Error::InvalidArgument(
                "contrastive losses are defined on triplets, not single points".into(),
            )),
            Model::Rbm { model, scoring, .. } => {
                let t = Tensor::from_rows(&[x.to_vec()])?;
                let l = model.loss_matrix(&t, *scoring)?;
                Ok(l.column(0))
            }
            Model::KMeans(c) => (0..c.k())
                .map(|j| Ok(tensorized::nn::sq_dist(x, c.center(j))))
                .collect(),
        }
    }

    /// Embedding of `x` under cluster `j`: latent code, posterior mean,
    /// normalized contrastive embedding, hidden activation probabilities, or
    /// the centered point for k-means.
    pub fn embed(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        match self {
            Model::Recon(m) => m.embed(x, j),
            Model::Vae { model, .. } => Ok(model.encode(x, j)?.0),
            Model::Contrastive { model, .. } => Ok(ssl::normalize(&model.embed(x, j)?)),
            Model::Rbm { model, .. } => Ok(model.clusters[j].hidden_probs(x)),
            Model::KMeans(c) => tensorized::cluster::center(x, c.center(j)),
        }
    }

    /// Reconstruction of `x` through cluster `j`, in data coordinates.
    pub fn reconstruct(&self, x: &[f64], j: usize) -> Result<Option<Vec<f64>>> {
        let out = match self {
            Model::Recon(m) => {
                let (xhat, _) = m.reconstruct(x, j)?;
                xhat.iter()
                    .zip(m.centers.center(j))
                    .map(|(a, c)| a + c)
                    .collect()
            }
            Model::Vae { model, .. } => {
                let (mu, _) = model.encode(x, j)?;
                let out = model.decode(&mu, j)?;
                match model.recon_mode {
                    ReconMode::BceSigmoid => out,
                    ReconMode::MseLinear => out
                        .iter()
                        .zip(model.centers.center(j))
                        .map(|(a, c)| a + c)
                        .collect(),
                }
            }
            Model::Rbm { model, .. } => model.clusters[j].reconstruct(x)?,
            Model::KMeans(c) => c.center(j).to_vec(),
            Model::Contrastive { .. } => return Ok(None),
        };
        Ok(Some(out))
    }

    pub fn param_count(&self) -> usize {
        match self {
            Model::Recon(m) => m.param_count(),
            Model::Vae { model, .. } => model.param_count(),
            Model::Contrastive { model, .. } => model.param_count(),
            Model::Rbm { model, .. } => model
                .clusters
                .iter()
                .map(|c| c.w.len() + c.a.len() + c.b.len())
                .sum(),
            Model::KMeans(c) => c.k() * c.dim(),
        }
    }
}
