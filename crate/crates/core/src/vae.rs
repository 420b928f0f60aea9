//! Standard and tensorized variational autoencoders.
//!
//! A shared trunk feeds `k` pairs of mean / log-variance heads. A latent is
//! drawn with the reparameterization `z = μ + s(logvar) ⊙ ε`, decoded by a
//! cluster decoder head and a shared decoder. Training minimizes the
//! negative ELBO per point: reconstruction loss plus `KL(q ‖ N(0, I))`.

use std::ops::Range;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::cluster::{compute_centers, AssignmentMatrix, ClusterCenters, LossMatrix};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{
    accumulate_grads, grad_slots, sigmoid, softplus, Activation, Dense, Network, Optimizer,
    ParamGrads, Parameterized, Tensor, Trace,
};
use crate::par;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ReconMode {
    /// Sigmoid outputs scored by binary cross-entropy against raw `[0, 1]` data.
    BceSigmoid,
    /// Linear outputs scored by `½‖x̃ - μ̂‖²` against centered data.
    MseLinear,
}

impl std::str::FromStr for ReconMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "bce" | "bce_sigmoid" => Ok(ReconMode::BceSigmoid),
            "mse" | "mse_linear" => Ok(ReconMode::MseLinear),
            other => Err(Error::invalid(format!("unknown recon mode '{other}'"))),
        }
    }
}

impl ReconMode {
    pub fn name(self) -> &'static str {
        match self {
            ReconMode::BceSigmoid => "bce_sigmoid",
            ReconMode::MseLinear => "mse_linear",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum ReparamMode {
    /// `z = μ + exp(½ logvar) ⊙ ε`.
    #[default]
    StdDev,
    /// `z = μ + exp(logvar) ⊙ ε`, scaling the noise by the variance.
    Variance,
}

impl std::str::FromStr for ReparamMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "std" | "stddev" => Ok(ReparamMode::StdDev),
            "var" | "variance" => Ok(ReparamMode::Variance),
            other => Err(Error::invalid(format!(
                "unknown reparameterization mode '{other}'"
            ))),
        }
    }
}

impl ReparamMode {
    pub fn name(self) -> &'static str {
        match self {
            ReparamMode::StdDev => "std",
            ReparamMode::Variance => "variance",
        }
    }

    fn scale(self, logvar: f64) -> f64 {
        match self {
            ReparamMode::StdDev => (0.5 * logvar).exp(),
            ReparamMode::Variance => logvar.exp(),
        }
    }

    /// d scale / d logvar.
    fn scale_grad(self, logvar: f64) -> f64 {
        match self {
            ReparamMode::StdDev => 0.5 * (0.5 * logvar).exp(),
            ReparamMode::Variance => logvar.exp(),
        }
    }
}

pub fn reparameterize(
    mu: &[f64],
    logvar: &[f64],
    eps: &[f64],
    mode: ReparamMode,
) -> Result<Vec<f64>> {
    if mu.len() != logvar.len() || mu.len() != eps.len() {
        return Err(Error::shape(
            "reparameterize",
            mu.len(),
            format!("{} / {}", logvar.len(), eps.len()),
        ));
    }
    Ok(mu
        .iter()
        .zip(logvar.iter().zip(eps))
        .map(|(m, (lv, e))| m + mode.scale(*lv) * e)
        .collect())
}

/// `KL(N(μ, diag(exp(logvar))) ‖ N(0, I)) = ½ Σ (exp(logvar) + μ² - 1 - logvar)`.
pub fn kl_term(mu: &[f64], logvar: &[f64]) -> f64 {
    0.5 * mu
        .iter()
        .zip(logvar)
        .map(|(m, lv)| lv.exp() + m * m - 1.0 - lv)
        .sum::<f64>()
}

/// Binary cross-entropy of `sigmoid(logits)` against targets in `[0, 1]`.
pub fn bce_with_logits(logits: &[f64], targets: &[f64]) -> Result<f64> {
    if logits.len() != targets.len() {
        return Err(Error::shape("bce", logits.len(), targets.len()));
    }
    if let Some(t) = targets.iter().find(|t| !(0.0..=1.0).contains(*t)) {
        return Err(Error::invalid(format!("bce target {t} outside [0, 1]")));
    }
    // -[t ln σ(l) + (1-t) ln(1-σ(l))] = softplus(l) - t·l
    Ok(logits
        .iter()
        .zip(targets)
        .map(|(l, t)| softplus(*l) - t * l)
        .sum())
}

pub fn half_sq_error(pred: &[f64], target: &[f64]) -> Result<f64> {
    if pred.len() != target.len() {
        return Err(Error::shape("mse", target.len(), pred.len()));
    }
    Ok(0.5 * crate::nn::sq_dist(pred, target))
}

/// One standard-normal draw per `(cluster, point, latent dim)`.
#[derive(Debug, Clone, PartialEq)]
pub struct NoiseTable {
    k: usize,
    n: usize,
    h: usize,
    data: Vec<f64>,
}

impl NoiseTable {
    pub fn draw<R: Rng + ?Sized>(k: usize, n: usize, h: usize, rng: &mut R) -> Self {
        let data = (0..k * n * h).map(|_| StandardNormal.sample(rng)).collect();
        NoiseTable { k, n, h, data }
    }

    pub fn zeros(k: usize, n: usize, h: usize) -> Self {
        NoiseTable {
            k,
            n,
            h,
            data: vec![0.0; k * n * h],
        }
    }

    pub fn get(&self, j: usize, i: usize) -> &[f64] {
        let o = (j * self.n + i) * self.h;
        &self.data[o..o + self.h]
    }

    fn check(&self, k: usize, n: usize, h: usize) -> Result<()> {
        if (self.k, self.n, self.h) != (k, n, h) {
            return Err(Error::shape(
                "noise table",
                format!("{k}x{n}x{h}"),
                format!("{}x{}x{}", self.k, self.n, self.h),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TvaeModel {
    pub trunk: Network,
    pub mean_heads: Vec<Network>,
    pub logvar_heads: Vec<Network>,
    pub cluster_decoders: Vec<Network>,
    pub shared_decoder: Network,
    pub recon_mode: ReconMode,
    pub reparam_mode: ReparamMode,
    pub centers: ClusterCenters,
    pub centering: bool,
}

struct Pass {
    centered: Vec<f64>,
    trunk: Trace,
    mu: Trace,
    logvar: Trace,
    eps: Vec<f64>,
    dec_head: Trace,
    dec: Trace,
}

impl TvaeModel {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        trunk: Network,
        mean_heads: Vec<Network>,
        logvar_heads: Vec<Network>,
        cluster_decoders: Vec<Network>,
        shared_decoder: Network,
        dim: usize,
        recon_mode: ReconMode,
        centering: bool,
    ) -> Result<Self> {
        let k = mean_heads.len();
        if k == 0 || logvar_heads.len() != k || cluster_decoders.len() != k {
            return Err(Error::invalid(
                "need k >= 1 and matching mean/logvar/decoder heads",
            ));
        }
        for j in 0..k {
            if mean_heads[j].fan_out() != logvar_heads[j].fan_out()
                || mean_heads[j].fan_in() != logvar_heads[j].fan_in()
            {
                return Err(Error::invalid(format!(
                    "mean and logvar heads of cluster {j} differ in shape"
                )));
            }
        }
        Ok(TvaeModel {
            trunk,
            mean_heads,
            logvar_heads,
            cluster_decoders,
            shared_decoder,
            recon_mode,
            reparam_mode: ReparamMode::default(),
            centers: ClusterCenters::zeros(k, dim),
            centering,
        })
    }

    /// One layer per part: tanh trunk `d → hidden`, linear heads
    /// `hidden → latent`, tanh decoder heads `latent → hidden` and a linear
    /// shared decoder `hidden → d` (logits in BCE mode).
    pub fn build<R: Rng + ?Sized>(
        d: usize,
        hidden: usize,
        latent: usize,
        k: usize,
        recon_mode: ReconMode,
        centering: bool,
        rng: &mut R,
    ) -> Result<Self> {
        let layer =
            |rng: &mut R, i, o, a| Network::new(vec![Dense::glorot(rng, i, o, a, true).into()]);
        let trunk = layer(rng, d, hidden, Activation::Tanh)?;
        let mut mu = Vec::with_capacity(k);
        let mut lv = Vec::with_capacity(k);
        let mut dec = Vec::with_capacity(k);
        for _ in 0..k {
            mu.push(layer(rng, hidden, latent, Activation::Linear)?);
            lv.push(layer(rng, hidden, latent, Activation::Linear)?);
            dec.push(layer(rng, latent, hidden, Activation::Tanh)?);
        }
        let shared = layer(rng, hidden, d, Activation::Linear)?;
        TvaeModel::new(trunk, mu, lv, dec, shared, d, recon_mode, centering)
    }

    pub fn k(&self) -> usize {
        self.mean_heads.len()
    }

    pub fn dim(&self) -> usize {
        self.centers.dim()
    }

    pub fn latent_dim(&self) -> usize {
        self.mean_heads[0].fan_out().unwrap_or(self.dim())
    }

    pub fn update_centers(&mut self, x: &Tensor, s: &AssignmentMatrix) {
        if self.centering {
            self.centers = compute_centers(x, s, Some(&self.centers));
        }
    }

    fn check_cluster(&self, j: usize) -> Result<()> {
        if j >= self.k() {
            return Err(Error::invalid(format!(
                "cluster {j} out of range (k={})",
                self.k()
            )));
        }
        Ok(())
    }

    /// `(μ, logvar)` of `q(z | x)` under cluster `j`.
    pub fn encode(&self, x: &[f64], j: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        self.check_cluster(j)?;
        let centered = crate::cluster::center(x, self.centers.center(j))?;
        let h = self.trunk.predict(&centered)?;
        Ok((
            self.mean_heads[j].predict(&h)?,
            self.logvar_heads[j].predict(&h)?,
        ))
    }

    /// Decoder output before any output nonlinearity: logits in BCE mode,
    /// the centered reconstruction in MSE mode.
    pub fn decode_raw(&self, z: &[f64], j: usize) -> Result<Vec<f64>> {
        self.check_cluster(j)?;
        let h = self.cluster_decoders[j].predict(z)?;
        self.shared_decoder.predict(&h)
    }

    /// Decoded mean: sigmoid-mapped in BCE mode.
    pub fn decode(&self, z: &[f64], j: usize) -> Result<Vec<f64>> {
        let mut out = self.decode_raw(z, j)?;
        if self.recon_mode == ReconMode::BceSigmoid {
            out.iter_mut().for_each(|v| *v = sigmoid(*v));
        }
        Ok(out)
    }

    /// Reconstruction loss of decoding `z` through cluster `j` against `target`.
    ///
    /// BCE mode expects the raw `[0, 1]` input as target; MSE mode the
    /// centered input.
    pub fn recon_term(&self, target: &[f64], z: &[f64], j: usize) -> Result<f64> {
        let out = self.decode_raw(z, j)?;
        match self.recon_mode {
            ReconMode::BceSigmoid => bce_with_logits(&out, target),
            ReconMode::MseLinear => half_sq_error(&out, target),
        }
    }

    /// Decodes each grid point through cluster `j`.
    pub fn sample_latent_grid(&self, j: usize, grid: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        grid.iter().map(|z| self.decode(z, j)).collect()
    }

    fn pass(&self, x: &[f64], j: usize, eps: &[f64]) -> Result<Pass> {
        self.check_cluster(j)?;
        let centered = crate::cluster::center(x, self.centers.center(j))?;
        let trunk = self.trunk.trace(&centered)?;
        let mu = self.mean_heads[j].trace(trunk.output())?;
        let logvar = self.logvar_heads[j].trace(trunk.output())?;
        let z = reparameterize(mu.output(), logvar.output(), eps, self.reparam_mode)?;
        ensure_finite(&z, "tvae latent sample")?;
        let dec_head = self.cluster_decoders[j].trace(&z)?;
        let dec = self.shared_decoder.trace(dec_head.output())?;
        if dec.output().len() != x.len() {
            return Err(Error::shape(
                "tvae reconstruction",
                x.len(),
                dec.output().len(),
            ));
        }
        Ok(Pass {
            centered,
            trunk,
            mu,
            logvar,
            eps: eps.to_vec(),
            dec_head,
            dec,
        })
    }

    fn entry(&self, x: &[f64], p: &Pass) -> Result<f64> {
        let rec = match self.recon_mode {
            ReconMode::BceSigmoid => bce_with_logits(p.dec.output(), x)?,
            ReconMode::MseLinear => half_sq_error(p.dec.output(), &p.centered)?,
        };
        Ok(rec + kl_term(p.mu.output(), p.logvar.output()))
    }

    /// Negative single-sample ELBO of point `x` under cluster `j` with noise `eps`.
    pub fn loss_entry(&self, x: &[f64], j: usize, eps: &[f64]) -> Result<f64> {
        let p = self.pass(x, j, eps)?;
        self.entry(x, &p)
    }

    pub fn loss_matrix(&self, x: &Tensor, noise: &NoiseTable) -> Result<LossMatrix> {
        let (k, n) = (self.k(), x.rows());
        noise.check(k, n, self.latent_dim())?;
        let cols = par::try_map_range(n, |i| {
            (0..k)
                .map(|j| self.loss_entry(x.row(i), j, noise.get(j, i)))
                .collect::<Result<Vec<f64>>>()
        })?;
        let mut data = vec![0.0; k * n];
        for (i, col) in cols.iter().enumerate() {
            for j in 0..k {
                data[j * n + i] = col[j];
            }
        }
        ensure_finite(&data, "tvae loss matrix")?;
        LossMatrix::new(k, n, data)
    }

    pub fn masked_loss(&self, x: &Tensor, s: &AssignmentMatrix, noise: &NoiseTable) -> Result<f64> {
        noise.check(self.k(), x.rows(), self.latent_dim())?;
        let n = x.rows();
        let l = par::try_map_range(n, |i| {
            let j = s.cluster_of(i);
            self.loss_entry(x.row(i), j, noise.get(j, i))
        })?;
        Ok(l.iter().sum::<f64>() / n as f64)
    }

    fn networks(&self) -> Vec<&Network> {
        let mut v = vec![&self.trunk];
        v.extend(&self.mean_heads);
        v.extend(&self.logvar_heads);
        v.extend(&self.cluster_decoders);
        v.push(&self.shared_decoder);
        v
    }

    /// Adds `scale` times one sample's gradient into `acc`; returns its loss.
    fn accumulate_sample(
        &self,
        x: &[f64],
        j: usize,
        eps: &[f64],
        acc: &mut ParamGrads,
        slots: &[Range<usize>],
        scale: f64,
    ) -> Result<f64> {
        let k = self.k();
        let p = self.pass(x, j, eps)?;
        let loss = self.entry(x, &p)?;
        let out = p.dec.output();
        let d_out: Vec<f64> = match self.recon_mode {
            ReconMode::BceSigmoid => out.iter().zip(x).map(|(l, t)| sigmoid(*l) - t).collect(),
            ReconMode::MseLinear => out.iter().zip(&p.centered).map(|(a, b)| a - b).collect(),
        };
        let g = self.shared_decoder.backprop_into(
            &p.dec,
            &d_out,
            &mut acc.0[slots[1 + 3 * k].clone()],
            scale,
        )?;
        let dz = self.cluster_decoders[j].backprop_into(
            &p.dec_head,
            &g,
            &mut acc.0[slots[1 + 2 * k + j].clone()],
            scale,
        )?;
        let mu = p.mu.output();
        let lv = p.logvar.output();
        let d_mu: Vec<f64> = dz.iter().zip(mu).map(|(g, m)| g + m).collect();
        let d_lv: Vec<f64> = (0..lv.len())
            .map(|q| {
                dz[q] * p.eps[q] * self.reparam_mode.scale_grad(lv[q]) + 0.5 * (lv[q].exp() - 1.0)
            })
            .collect();
        let h1 = self.mean_heads[j].backprop_into(
            &p.mu,
            &d_mu,
            &mut acc.0[slots[1 + j].clone()],
            scale,
        )?;
        let h2 = self.logvar_heads[j].backprop_into(
            &p.logvar,
            &d_lv,
            &mut acc.0[slots[1 + k + j].clone()],
            scale,
        )?;
        let dh: Vec<f64> = h1.iter().zip(&h2).map(|(a, b)| a + b).collect();
        self.trunk
            .backprop_into(&p.trunk, &dh, &mut acc.0[slots[0].clone()], scale)?;
        Ok(loss)
    }

    /// Mean negative ELBO over `indices` and its gradient (ε held fixed).
    pub fn loss_and_grads(
        &self,
        x: &Tensor,
        s: &AssignmentMatrix,
        noise: &NoiseTable,
        indices: &[usize],
    ) -> Result<(f64, ParamGrads)> {
        noise.check(self.k(), x.rows(), self.latent_dim())?;
        if s.n() != x.rows() || s.k() != self.k() {
            return Err(Error::shape("assignment", self.k(), s.k()));
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
                let j = s.cluster_of(i);
                self.accumulate_sample(x.row(i), j, noise.get(j, i), acc, &slots, scale)
            },
        )?;
        Ok((loss * scale, grads))
    }

    pub fn grad_step_batch(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        noise: &NoiseTable,
        indices: &[usize],
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(x, s, noise, indices)?;
        if !loss.is_finite() {
            return Err(Error::NonFinite("tvae loss"));
        }
        opt.step(self.params_mut(), &grads)?;
        Ok(loss)
    }

    pub fn grad_step(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        noise: &NoiseTable,
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let all: Vec<usize> = (0..x.rows()).collect();
        self.grad_step_batch(x, s, noise, &all, opt)
    }
}

impl Parameterized for TvaeModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.trunk.params();
        for group in [&self.mean_heads, &self.logvar_heads, &self.cluster_decoders] {
            for n in group {
                v.extend(n.params());
            }
        }
        v.extend(self.shared_decoder.params());
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.trunk.params_mut();
        for group in [
            &mut self.mean_heads,
            &mut self.logvar_heads,
            &mut self.cluster_decoders,
        ] {
            for n in group.iter_mut() {
                v.extend(n.params_mut());
            }
        }
        v.extend(self.shared_decoder.params_mut());
        v
    }
}

/// Regular `side × side` grid over `[-extent, extent]²`, row-major from the top-left.
pub fn latent_grid(side: usize, extent: f64) -> Vec<Vec<f64>> {
    let step = if side > 1 {
        2.0 * extent / (side - 1) as f64
    } else {
        0.0
    };
    let at = |i: usize| {
        if side > 1 {
            -extent + step * i as f64
        } else {
            0.0
        }
    };
    (0..side)
        .flat_map(|r| (0..side).map(move |c| vec![at(c), -at(r)]))
        .collect()
}
