//! Standard, fully tensorized and partially tensorized autoencoders.
//!
//! Every variant is one [`PtaeModel`]: a shared encoder, `k` cluster encoder
//! heads, `k` cluster decoder heads and a shared decoder. The fully tensorized
//! model leaves the shared parts empty; a standard autoencoder is `k = 1`
//! without centering.
//!
//! Per point `i` and cluster `j` the model scores
//!
//! ```text
//! x̃ = x_i - c_j
//! z = g_j(g(x̃)),   x̂ = f(f_j(z))
//! L[j][i] = ‖x̃ - x̂‖² - λ‖z‖²
//! ```

use std::ops::Range;

use rand::Rng;

use crate::cluster::{compute_centers, AssignmentMatrix, ClusterCenters, LossMatrix};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{
    accumulate_grads, grad_slots, sq_dist, sq_norm, Activation, BiasActivation, Dense, Network,
    Optimizer, ParamGrads, Parameterized, Tensor,
};
use crate::par;

/// Named layouts. All hidden layers are tanh, latents and outputs linear.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconArch {
    /// `d → 1 → d`.
    Ae1,
    /// `d → 2 → 1 → 2 → d`.
    Ae2,
    /// `d → 2 → C → 2 → d`, with `C` the number of true classes.
    Ae3,
    /// `k` independent copies of AE1.
    Tae1,
    /// `k` independent copies of AE2.
    Tae2,
    /// Shared `d → 2`, per-cluster `2 → 1` and `1 → 2`, shared `2 → d`.
    Ptae,
}

impl ReconArch {
    pub fn is_tensorized(self) -> bool {
        matches!(self, ReconArch::Tae1 | ReconArch::Tae2 | ReconArch::Ptae)
    }

    pub fn name(self) -> &'static str {
        match self {
            ReconArch::Ae1 => "ae1",
            ReconArch::Ae2 => "ae2",
            ReconArch::Ae3 => "ae3",
            ReconArch::Tae1 => "tae1",
            ReconArch::Tae2 => "tae2",
            ReconArch::Ptae => "ptae",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PtaeModel {
    pub shared_encoder: Network,
    pub cluster_encoders: Vec<Network>,
    pub cluster_decoders: Vec<Network>,
    pub shared_decoder: Network,
    /// Weight of the latent penalty, entering the loss as `-λ‖z‖²`.
    pub lambda: f64,
    /// Upper bound on the norm of the penalty's gradient at `z`.
    pub penalty_clip: f64,
    pub centers: ClusterCenters,
    /// When false the centers stay at zero.
    pub centering: bool,
}

/// Intermediate values of one `(point, cluster)` evaluation.
struct Pass {
    centered: Vec<f64>,
    enc: crate::nn::Trace,
    head: crate::nn::Trace,
    dec_head: crate::nn::Trace,
    dec: crate::nn::Trace,
}

impl Pass {
    fn latent(&self) -> &[f64] {
        self.head.output()
    }

    fn output(&self) -> &[f64] {
        self.dec.output()
    }
}

impl PtaeModel {
    pub fn new(
        shared_encoder: Network,
        cluster_encoders: Vec<Network>,
        cluster_decoders: Vec<Network>,
        shared_decoder: Network,
        dim: usize,
        centering: bool,
    ) -> Result<Self> {
        let k = cluster_encoders.len();
        if k == 0 || cluster_decoders.len() != k {
            return Err(Error::invalid(format!(
                "need k >= 1 matching heads, got {} encoders and {} decoders",
                k,
                cluster_decoders.len()
            )));
        }
        let enc_shape: Vec<usize> = cluster_encoders[0]
            .params()
            .iter()
            .map(|p| p.len())
            .collect();
        let dec_shape: Vec<usize> = cluster_decoders[0]
            .params()
            .iter()
            .map(|p| p.len())
            .collect();
        for j in 1..k {
            let e: Vec<usize> = cluster_encoders[j]
                .params()
                .iter()
                .map(|p| p.len())
                .collect();
            let d: Vec<usize> = cluster_decoders[j]
                .params()
                .iter()
                .map(|p| p.len())
                .collect();
            if e != enc_shape || d != dec_shape {
                return Err(Error::invalid(format!(
                    "cluster head {j} differs in shape from head 0"
                )));
            }
        }
        Ok(PtaeModel {
            shared_encoder,
            cluster_encoders,
            cluster_decoders,
            shared_decoder,
            lambda: 0.0,
            penalty_clip: 1.0,
            centers: ClusterCenters::zeros(k, dim),
            centering,
        })
    }

    /// Builds a named architecture for `d`-dimensional data.
    ///
    /// `k` is the cluster count for tensorized layouts and the embedding
    /// width `C` for AE3; standard autoencoders always have one cluster.
    pub fn build<R: Rng + ?Sized>(
        arch: ReconArch,
        d: usize,
        k: usize,
        rng: &mut R,
    ) -> Result<Self> {
        if d == 0 || k == 0 {
            return Err(Error::invalid("dimension and k must be positive"));
        }
        use Activation::{Linear, Tanh};
        let dense =
            |rng: &mut R, i, o, a| -> crate::nn::Layer { Dense::glorot(rng, i, o, a, true).into() };
        let net = |layers: Vec<crate::nn::Layer>| Network::new(layers);
        let model = match arch {
            ReconArch::Ae1 => PtaeModel::new(
                Network::identity(),
                vec![net(vec![dense(rng, d, 1, Linear)])?],
                vec![net(vec![dense(rng, 1, d, Linear)])?],
                Network::identity(),
                d,
                false,
            )?,
            ReconArch::Ae2 | ReconArch::Ae3 => {
                let h = if arch == ReconArch::Ae2 { 1 } else { k };
                PtaeModel::new(
                    net(vec![dense(rng, d, 2, Tanh)])?,
                    vec![net(vec![dense(rng, 2, h, Linear)])?],
                    vec![net(vec![dense(rng, h, 2, Tanh)])?],
                    net(vec![dense(rng, 2, d, Linear)])?,
                    d,
                    false,
                )?
            }
            ReconArch::Tae1 => {
                let mut enc = Vec::with_capacity(k);
                let mut dec = Vec::with_capacity(k);
                for _ in 0..k {
                    enc.push(net(vec![dense(rng, d, 1, Linear)])?);
                    dec.push(net(vec![dense(rng, 1, d, Linear)])?);
                }
                PtaeModel::new(Network::identity(), enc, dec, Network::identity(), d, true)?
            }
            ReconArch::Tae2 => {
                let mut enc = Vec::with_capacity(k);
                let mut dec = Vec::with_capacity(k);
                for _ in 0..k {
                    enc.push(net(vec![dense(rng, d, 2, Tanh), dense(rng, 2, 1, Linear)])?);
                    dec.push(net(vec![dense(rng, 1, 2, Tanh), dense(rng, 2, d, Linear)])?);
                }
                PtaeModel::new(Network::identity(), enc, dec, Network::identity(), d, true)?
            }
            ReconArch::Ptae => {
                // The decoder heads are bias-free linear maps; the hidden bias
                // and tanh they feed live in the shared decoder. This is the
                // block structure of AE3's C→2 layer restricted to one slot.
                let shared_encoder = net(vec![dense(rng, d, 2, Tanh)])?;
                let mut enc = Vec::with_capacity(k);
                let mut dec = Vec::with_capacity(k);
                for _ in 0..k {
                    enc.push(net(vec![dense(rng, 2, 1, Linear)])?);
                    dec.push(net(vec![Dense::glorot(rng, 1, 2, Linear, false).into()])?);
                }
                let shared_decoder = net(vec![
                    BiasActivation::zeros(2, Tanh).into(),
                    dense(rng, 2, d, Linear),
                ])?;
                PtaeModel::new(shared_encoder, enc, dec, shared_decoder, d, true)?
            }
        };
        Ok(model)
    }

    pub fn k(&self) -> usize {
        self.cluster_encoders.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn with_lambda(mut self, lambda: f64) -> Self {
        self.lambda = lambda;
        self
    }

    /// Recomputes centers from the current assignment (no-op without centering).
    pub fn update_centers(&mut self, x: &Tensor, s: &AssignmentMatrix) {
        if self.centering {
            self.centers = compute_centers(x, s, Some(&self.centers));
        }
    }

    fn pass(&self, x: &[f64], j: usize) -> Result<Pass> {
        if j >= self.k() {
            return Err(Error::invalid(format!(
                "cluster {j} out of range (k={})",
                self.k()
            )));
        }
        let centered = crate::cluster::center(x, self.centers.center(j))?;
        let enc = self.shared_encoder.trace(&centered)?;
        let head = self.cluster_encoders[j].trace(enc.output())?;
        let dec_head = self.cluster_decoders[j].trace(head.output())?;
        let dec = self.shared_decoder.trace(dec_head.output())?;
        if dec.output().len() != centered.len() {
            return Err(Error::shape(
                "reconstruction",
                centered.len(),
                dec.output().len(),
            ));
        }
        Ok(Pass {
            centered,
            enc,
            head,
            dec_head,
            dec,
        })
    }

    /// Reconstruction of the centered input and the latent code, for cluster `j`.
    ///
    /// The reconstruction lives in centered coordinates; add `c_j` back to
    /// compare with raw data.
    pub fn reconstruct(&self, x: &[f64], j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let p = self.pass(x, j)?;
        Ok((p.output().to_vec(), p.latent().to_vec()))
    }

    /// Latent code `g_j(g(x - c_j))`.
    pub fn embed(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        let centered = crate::cluster::center(x, self.centers.center(j))?;
        let h = self.shared_encoder.predict(&centered)?;
        self.cluster_encoders[j].predict(&h)
    }

    fn entry(&self, p: &Pass) -> f64 {
        sq_dist(&p.centered, p.output()) - self.lambda * kmeans_penalty(p.latent())
    }

    pub fn loss_entry(&self, x: &[f64], j: usize) -> Result<f64> {
        let p = self.pass(x, j)?;
        Ok(self.entry(&p))
    }

    /// All `k` losses for one point.
    pub fn loss_column(&self, x: &[f64]) -> Result<Vec<f64>> {
        (0..self.k()).map(|j| self.loss_entry(x, j)).collect()
    }

    /// `L[j][i] = ‖x̃_ij - x̂_ij‖² - λ‖z_ij‖²`.
    pub fn loss_matrix(&self, x: &Tensor) -> Result<LossMatrix> {
        let n = x.rows();
        let cols = par::try_map_range(n, |i| self.loss_column(x.row(i)))?;
        let k = self.k();
        let mut data = vec![0.0; k * n];
        for (i, col) in cols.iter().enumerate() {
            for j in 0..k {
                data[j * n + i] = col[j];
            }
        }
        ensure_finite(&data, "ptae loss matrix")?;
        LossMatrix::new(k, n, data)
    }

    /// `(1/n) Σ_i L[s_i][i]`.
    pub fn masked_loss(&self, x: &Tensor, s: &AssignmentMatrix) -> Result<f64> {
        let n = x.rows();
        let losses = par::try_map_range(n, |i| self.loss_entry(x.row(i), s.cluster_of(i)))?;
        Ok(losses.iter().sum::<f64>() / n as f64)
    }

    fn networks(&self) -> Vec<&Network> {
        let mut v = vec![&self.shared_encoder];
        v.extend(&self.cluster_encoders);
        v.extend(&self.cluster_decoders);
        v.push(&self.shared_decoder);
        v
    }

    /// Adds `scale` times one sample's gradient into `acc`; returns its loss.
    fn accumulate_sample(
        &self,
        x: &[f64],
        j: usize,
        acc: &mut ParamGrads,
        slots: &[Range<usize>],
        scale: f64,
    ) -> Result<f64> {
        let k = self.k();
        let p = self.pass(x, j)?;
        let loss = self.entry(&p);
        let d_out: Vec<f64> = p
            .output()
            .iter()
            .zip(&p.centered)
            .map(|(a, b)| 2.0 * (a - b))
            .collect();
        let g = self.shared_decoder.backprop_into(
            &p.dec,
            &d_out,
            &mut acc.0[slots[1 + 2 * k].clone()],
            scale,
        )?;
        let mut dz = self.cluster_decoders[j].backprop_into(
            &p.dec_head,
            &g,
            &mut acc.0[slots[1 + k + j].clone()],
            scale,
        )?;
        if self.lambda != 0.0 {
            // d(-λ‖z‖²)/dz = -2λz, norm-clipped.
            let z = p.latent();
            let norm = 2.0 * self.lambda.abs() * sq_norm(z).sqrt();
            let clip = if norm > self.penalty_clip && norm > 0.0 {
                self.penalty_clip / norm
            } else {
                1.0
            };
            dz.iter_mut()
                .zip(z)
                .for_each(|(g, z)| *g -= clip * 2.0 * self.lambda * z);
        }
        let g = self.cluster_encoders[j].backprop_into(
            &p.head,
            &dz,
            &mut acc.0[slots[1 + j].clone()],
            scale,
        )?;
        self.shared_encoder
            .backprop_into(&p.enc, &g, &mut acc.0[slots[0].clone()], scale)?;
        Ok(loss)
    }

    /// Mean loss over `indices` under assignment `s`, and its gradient in
    /// [`Parameterized::params`] order.
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        s: &AssignmentMatrix,
        indices: &[usize],
    ) -> Result<(f64, ParamGrads)> {
        if s.n() != x.rows() || s.k() != self.k() {
            return Err(Error::shape(
                "assignment",
                format!("k={} n={}", self.k(), x.rows()),
                format!("k={} n={}", s.k(), s.n()),
            ));
        }
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let slots = grad_slots(&self.networks());
        let scale = 1.0 / indices.len() as f64;
        let (loss, grads) = accumulate_grads(
            indices.len(),
            || ParamGrads::zeros_like(&self.params()),
            |b, acc| {
                let i = indices[b];
                self.accumulate_sample(x.row(i), s.cluster_of(i), acc, &slots, scale)
            },
        )?;
        Ok((loss * scale, grads))
    }

    /// One optimizer step on the masked mean loss over `indices`.
    /// Returns the loss before the step.
    pub fn grad_step_batch(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        indices: &[usize],
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(x, s, indices)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("ptae loss"));
        }
        opt.step(self.params_mut(), &grads)?;
        Ok(loss)
    }

    /// Full-batch step on `(1/n) Σ_i L[s_i][i]`.
    pub fn grad_step(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let all: Vec<usize> = (0..x.rows()).collect();
        self.grad_step_batch(x, s, &all, opt)
    }
}

impl Parameterized for PtaeModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.shared_encoder.params();
        for n in &self.cluster_encoders {
            v.extend(n.params());
        }
        for n in &self.cluster_decoders {
            v.extend(n.params());
        }
        v.extend(self.shared_decoder.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.shared_encoder.params_mut();
        for n in &mut self.cluster_encoders {
            v.extend(n.params_mut());
        }
        for n in &mut self.cluster_decoders {
            v.extend(n.params_mut());
        }
        v.extend(self.shared_decoder.params_mut());
        v
    }
}

/// `‖z‖²`.
pub fn kmeans_penalty(z: &[f64]) -> f64 {
    sq_norm(z)
}
