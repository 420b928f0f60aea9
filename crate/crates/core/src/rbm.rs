//! Binary restricted Boltzmann machines and their tensorized variant.
//!
//! Energy of a visible/hidden configuration:
//!
//! ```text
//! E(x, z) = -xᵀa - zᵀb - xᵀWz
//! F(x)    = -log Σ_z exp(-E(x, z)) = -xᵀa - Σ_h softplus(b_h + (Wᵀx)_h)
//! ```
//!
//! Small visible layers (`d <= 16`) admit the exact partition function, the
//! exact log-likelihood and its exact gradient. Larger ones train with CD-k.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cluster::{AssignmentMatrix, LossMatrix};
use crate::error::{Error, Result};
use crate::nn::{sigmoid, softplus, Tensor};
use crate::par;

pub const MAX_EXACT_VISIBLE: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct RbmParams {
    /// `d × h`, row-major.
    pub w: Tensor,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

fn check_binary(v: &[f64], what: &'static str) -> Result<()> {
    if v.iter().all(|&x| x == 0.0 || x == 1.0) {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be binary")))
    }
}

/// Visible configuration number `code` (bit `i` of `code` is unit `i`).
fn bits(code: usize, d: usize) -> Vec<f64> {
    (0..d).map(|i| ((code >> i) & 1) as f64).collect()
}

fn log_sum_exp(values: &[f64]) -> f64 {
    let m = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + values.iter().map(|v| (v - m).exp()).sum::<f64>().ln()
}

impl RbmParams {
    pub fn new(w: Tensor, a: Vec<f64>, b: Vec<f64>) -> Result<Self> {
        if w.shape().len() != 2 || w.shape()[0] != a.len() || w.shape()[1] != b.len() {
            return Err(Error::shape(
                "RbmParams",
                format!("{}x{}", a.len(), b.len()),
                format!("{:?}", w.shape()),
            ));
        }
        Ok(RbmParams { w, a, b })
    }

    pub fn zeros(d: usize, h: usize) -> Self {
        RbmParams {
            w: Tensor::zeros(&[d, h]),
            a: vec![0.0; d],
            b: vec![0.0; h],
        }
    }

    /// Weights `N(0, std²)`, zero biases.
    pub fn random<R: Rng + ?Sized>(d: usize, h: usize, std: f64, rng: &mut R) -> Self {
        let normal = Normal::new(0.0, std).expect("finite std");
        let w = (0..d * h).map(|_| normal.sample(rng)).collect();
        RbmParams {
            w: Tensor::new(vec![d, h], w).expect("positive dims"),
            a: vec![0.0; d],
            b: vec![0.0; h],
        }
    }

    pub fn visible(&self) -> usize {
        self.a.len()
    }

    pub fn hidden(&self) -> usize {
        self.b.len()
    }

    fn wij(&self, i: usize, q: usize) -> f64 {
        self.w.as_slice()[i * self.hidden() + q]
    }

    /// `b + Wᵀx`.
    fn hidden_input(&self, x: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        let mut act = self.b.clone();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                let row = &self.w.as_slice()[i * h..(i + 1) * h];
                act.iter_mut().zip(row).for_each(|(a, w)| *a += xi * w);
            }
        }
        act
    }

    /// `a + Wz`.
    fn visible_input(&self, z: &[f64]) -> Vec<f64> {
        let h = self.hidden();
        self.a
            .iter()
            .enumerate()
            .map(|(i, ai)| ai + crate::nn::dot(&self.w.as_slice()[i * h..(i + 1) * h], z))
            .collect()
    }

    pub fn hidden_probs(&self, x: &[f64]) -> Vec<f64> {
        self.hidden_input(x).into_iter().map(sigmoid).collect()
    }

    pub fn visible_probs(&self, z: &[f64]) -> Vec<f64> {
        self.visible_input(z).into_iter().map(sigmoid).collect()
    }

    fn check_dims(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.visible() {
            return Err(Error::shape("rbm visible", self.visible(), x.len()));
        }
        Ok(())
    }

    pub fn energy(&self, x: &[f64], z: &[f64]) -> Result<f64> {
        self.check_dims(x)?;
        if z.len() != self.hidden() {
            return Err(Error::shape("rbm hidden", self.hidden(), z.len()));
        }
        check_binary(x, "visible units")?;
        check_binary(z, "hidden units")?;
        let mut e = -crate::nn::dot(x, &self.a) - crate::nn::dot(z, &self.b);
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (q, &zq) in z.iter().enumerate() {
                    e -= xi * self.wij(i, q) * zq;
                }
            }
        }
        Ok(e)
    }

    pub fn free_energy(&self, x: &[f64]) -> Result<f64> {
        self.check_dims(x)?;
        check_binary(x, "visible units")?;
        Ok(self.free_energy_unchecked(x))
    }

    fn free_energy_unchecked(&self, x: &[f64]) -> f64 {
        -crate::nn::dot(x, &self.a) - self.hidden_input(x).into_iter().map(softplus).sum::<f64>()
    }

    fn check_exact(&self) -> Result<()> {
        if self.visible() > MAX_EXACT_VISIBLE {
            return Err(Error::invalid(format!(
                "exact partition needs d <= {MAX_EXACT_VISIBLE}, got {}",
                self.visible()
            )));
        }
        Ok(())
    }

    /// `log A = log Σ_x exp(-F(x))`, by enumerating all `2^d` visible states.
    pub fn log_partition(&self) -> Result<f64> {
        self.check_exact()?;
        let d = self.visible();
        let neg_f: Vec<f64> = (0..1usize << d)
            .map(|c| -self.free_energy_unchecked(&bits(c, d)))
            .collect();
        Ok(log_sum_exp(&neg_f))
    }

    pub fn partition_exact(&self) -> Result<f64> {
        Ok(self.log_partition()?.exp())
    }

    /// `Σ_i (-F(x_i) - log A)`.
    pub fn exact_loglik(&self, x: &Tensor) -> Result<f64> {
        let log_a = self.log_partition()?;
        let mut total = 0.0;
        for row in x.iter_rows() {
            total += -self.free_energy(row)? - log_a;
        }
        Ok(total)
    }

    /// Mean-field reconstruction: `σ(a + W σ(b + Wᵀx))`.
    pub fn reconstruct(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.check_dims(x)?;
        check_binary(x, "visible units")?;
        Ok(self.visible_probs(&self.hidden_probs(x)))
    }

    fn apply_update(&mut self, dw: &[f64], da: &[f64], db: &[f64], lr: f64) {
        self.w
            .as_mut_slice()
            .iter_mut()
            .zip(dw)
            .for_each(|(w, g)| *w += lr * g);
        self.a.iter_mut().zip(da).for_each(|(a, g)| *a += lr * g);
        self.b.iter_mut().zip(db).for_each(|(b, g)| *b += lr * g);
    }
}

/// Gradient of the mean log-likelihood, one buffer per parameter group.
#[derive(Debug, Clone, PartialEq)]
pub struct RbmGrad {
    pub w: Vec<f64>,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
}

impl RbmGrad {
    fn zeros(d: usize, h: usize) -> Self {
        RbmGrad {
            w: vec![0.0; d * h],
            a: vec![0.0; d],
            b: vec![0.0; h],
        }
    }

    fn accumulate(&mut self, x: &[f64], hp: &[f64], weight: f64) {
        let h = hp.len();
        for (i, &xi) in x.iter().enumerate() {
            if xi != 0.0 {
                for (w, &p) in self.w[i * h..(i + 1) * h].iter_mut().zip(hp) {
                    *w += weight * xi * p;
                }
            }
            self.a[i] += weight * xi;
        }
        for (b, &p) in self.b.iter_mut().zip(hp) {
            *b += weight * p;
        }
    }

    fn sub(mut self, other: &RbmGrad) -> Self {
        for (a, b) in [
            (&mut self.w, &other.w),
            (&mut self.a, &other.a),
            (&mut self.b, &other.b),
        ] {
            a.iter_mut().zip(b).for_each(|(x, y)| *x -= y);
        }
        self
    }

    pub fn flat(&self) -> Vec<f64> {
        [self.w.as_slice(), &self.a, &self.b].concat()
    }
}

fn data_statistics(params: &RbmParams, batch: &Tensor) -> Result<RbmGrad> {
    let (d, h) = (params.visible(), params.hidden());
    let mut g = RbmGrad::zeros(d, h);
    let wgt = 1.0 / batch.rows() as f64;
    for row in batch.iter_rows() {
        params.check_dims(row)?;
        check_binary(row, "visible units")?;
        g.accumulate(row, &params.hidden_probs(row), wgt);
    }
    Ok(g)
}

/// Exact gradient of `(1/n) Σ_i log P(x_i)`: data statistics minus
/// statistics under the model distribution, enumerated over `2^d` states.
pub fn exact_gradient(params: &RbmParams, batch: &Tensor) -> Result<RbmGrad> {
    let log_a = params.log_partition()?;
    let (d, h) = (params.visible(), params.hidden());
    let mut model = RbmGrad::zeros(d, h);
    for c in 0..1usize << d {
        let x = bits(c, d);
        let p = (-params.free_energy_unchecked(&x) - log_a).exp();
        model.accumulate(&x, &params.hidden_probs(&x), p);
    }
    Ok(data_statistics(params, batch)?.sub(&model))
}

fn bernoulli<R: Rng + ?Sized>(probs: &[f64], rng: &mut R) -> Vec<f64> {
    probs
        .iter()
        .map(|&p| if rng.random::<f64>() < p { 1.0 } else { 0.0 })
        .collect()
}

/// CD-k estimate of the log-likelihood gradient on `batch`.
pub fn cd_gradient<R: Rng + ?Sized>(
    params: &RbmParams,
    batch: &Tensor,
    k_gibbs: usize,
    rng: &mut R,
) -> Result<RbmGrad> {
    if k_gibbs == 0 {
        return Err(Error::invalid("CD needs at least one Gibbs sweep"));
    }
    let (d, h) = (params.visible(), params.hidden());
    let positive = data_statistics(params, batch)?;
    let mut negative = RbmGrad::zeros(d, h);
    let wgt = 1.0 / batch.rows() as f64;
    for row in batch.iter_rows() {
        let mut hs = bernoulli(&params.hidden_probs(row), rng);
        let mut v = Vec::new();
        let mut hp = Vec::new();
        for sweep in 0..k_gibbs {
            v = bernoulli(&params.visible_probs(&hs), rng);
            hp = params.hidden_probs(&v);
            if sweep + 1 < k_gibbs {
                hs = bernoulli(&hp, rng);
            }
        }
        negative.accumulate(&v, &hp, wgt);
    }
    Ok(positive.sub(&negative))
}

/// One CD-k ascent step: `θ += lr (⟨·⟩_data - ⟨·⟩_model)`.
pub fn cd_step<R: Rng + ?Sized>(
    params: &mut RbmParams,
    batch: &Tensor,
    k_gibbs: usize,
    lr: f64,
    rng: &mut R,
) -> Result<()> {
    let g = cd_gradient(params, batch, k_gibbs, rng)?;
    params.apply_update(&g.w, &g.a, &g.b, lr);
    Ok(())
}

/// One step of exact log-likelihood gradient ascent (`d <= 16`).
pub fn exact_step(params: &mut RbmParams, batch: &Tensor, lr: f64) -> Result<()> {
    let g = exact_gradient(params, batch)?;
    params.apply_update(&g.w, &g.a, &g.b, lr);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RbmTrainConfig {
    pub k_gibbs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Use the enumerated gradient instead of CD (needs `d <= 16`).
    pub exact_gradient: bool,
}

impl Default for RbmTrainConfig {
    fn default() -> Self {
        RbmTrainConfig {
            k_gibbs: 1,
            learning_rate: 0.1,
            batch_size: 10,
            exact_gradient: false,
        }
    }
}

/// How points are scored against each cluster for reassignment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RbmScoring {
    /// `F(x) + log A_j`, the exact negative log-likelihood.
    ExactNll,
    /// `F(x)` only; ignores the per-cluster partition offset.
    FreeEnergy,
}

/// `k` independent RBMs, one per cluster.
#[derive(Debug, Clone, PartialEq)]
pub struct TrbmModel {
    pub clusters: Vec<RbmParams>,
}

impl TrbmModel {
    pub fn new(clusters: Vec<RbmParams>) -> Result<Self> {
        if clusters.is_empty() {
            return Err(Error::invalid("need at least one cluster"));
        }
        let (d, h) = (clusters[0].visible(), clusters[0].hidden());
        if clusters.iter().any(|c| c.visible() != d || c.hidden() != h) {
            return Err(Error::invalid("cluster RBMs differ in shape"));
        }
        Ok(TrbmModel { clusters })
    }

    pub fn random<R: Rng + ?Sized>(k: usize, d: usize, h: usize, rng: &mut R) -> Result<Self> {
        TrbmModel::new((0..k).map(|_| RbmParams::random(d, h, 0.01, rng)).collect())
    }

    pub fn k(&self) -> usize {
        self.clusters.len()
    }

    pub fn default_scoring(&self) -> RbmScoring {
        if self.clusters[0].visible() <= MAX_EXACT_VISIBLE {
            RbmScoring::ExactNll
        } else {
            RbmScoring::FreeEnergy
        }
    }

    pub fn loss_matrix(&self, x: &Tensor, scoring: RbmScoring) -> Result<LossMatrix> {
        let offsets: Vec<f64> = match scoring {
            RbmScoring::ExactNll => self
                .clusters
                .iter()
                .map(RbmParams::log_partition)
                .collect::<Result<_>>()?,
            RbmScoring::FreeEnergy => vec![0.0; self.k()],
        };
        let n = x.rows();
        let rows = par::try_map_range(self.k(), |j| {
            (0..n)
                .map(|i| Ok(self.clusters[j].free_energy(x.row(i))? + offsets[j]))
                .collect::<Result<Vec<f64>>>()
        })?;
        LossMatrix::from_rows(rows)
    }

    /// One epoch of per-cluster training on each cluster's assigned rows.
    ///
    /// Clusters train independently, each from its own RNG stream derived
    /// from `seed`. Empty clusters are left unchanged.
    pub fn train_epoch(
        &mut self,
        x: &Tensor,
        s: &AssignmentMatrix,
        cfg: &RbmTrainConfig,
        seed: u64,
    ) -> Result<()> {
        if s.k() != self.k() || s.n() != x.rows() {
            return Err(Error::shape("trbm assignment", self.k(), s.k()));
        }
        let members: Vec<Vec<usize>> = (0..self.k()).map(|j| s.members(j)).collect();
        let updated = par::try_map_range(self.k(), |j| -> Result<RbmParams> {
            let mut params = self.clusters[j].clone();
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(j as u64 + 1);
            let mut idx = members[j].clone();
            idx.shuffle(&mut rng);
            for chunk in idx.chunks(cfg.batch_size.max(1)) {
                let rows: Vec<Vec<f64>> = chunk.iter().map(|&i| x.row(i).to_vec()).collect();
                let batch = Tensor::from_rows(&rows)?;
                if cfg.exact_gradient {
                    exact_step(&mut params, &batch, cfg.learning_rate)?;
                } else {
                    cd_step(
                        &mut params,
                        &batch,
                        cfg.k_gibbs,
                        cfg.learning_rate,
                        &mut rng,
                    )?;
                }
            }
            Ok(params)
        })?;
        self.clusters = updated;
        Ok(())
    }
}

/// Rounds `[0, 1]`-scaled values to binary at 0.5.
pub fn binarize(x: &Tensor) -> Tensor {
    let data = x
        .as_slice()
        .iter()
        .map(|&v| if v >= 0.5 { 1.0 } else { 0.0 })
        .collect();
    Tensor::new(x.shape().to_vec(), data).expect("same shape")
}
