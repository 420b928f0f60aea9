//! Tensorized contrastive loss.
//!
//! Each anchor `x` comes with a positive `x⁺` and a negative `x⁻`. All three
//! are embedded through the same cluster head `j`, L2-normalized, and scored
//!
//! ```text
//! L[j][i] = ⟨u, u⁻⟩ - ⟨u, u⁺⟩,   u = z / ‖z‖,  z = g_j(g(x))
//! ```
//!
//! Normalization bounds every entry to `[-2, 2]`; the raw inner-product
//! objective is unbounded below.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::cluster::{AssignmentMatrix, LossMatrix};
use crate::error::{ensure_finite, Error, Result};
use crate::nn::{
    accumulate_grads, dot, Activation, Conv2d, Dense, Network, Optimizer, ParamGrads,
    Parameterized, Tensor, Trace,
};
use crate::par;

const NORM_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct TclModel {
    pub trunk: Network,
    pub heads: Vec<Network>,
}

/// Channel and width choices for the default image trunk.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvTrunkSpec {
    pub channels: (usize, usize),
    pub kernel: usize,
    pub trunk_width: usize,
}

impl Default for ConvTrunkSpec {
    fn default() -> Self {
        ConvTrunkSpec {
            channels: (8, 16),
            kernel: 3,
            trunk_width: 64,
        }
    }
}

impl TclModel {
    pub fn new(trunk: Network, heads: Vec<Network>) -> Result<Self> {
        if heads.is_empty() {
            return Err(Error::invalid("need at least one head"));
        }
        let shape: Vec<usize> = heads[0].params().iter().map(|p| p.len()).collect();
        if heads
            .iter()
            .any(|h| h.params().iter().map(|p| p.len()).collect::<Vec<_>>() != shape)
        {
            return Err(Error::invalid("contrastive heads differ in shape"));
        }
        Ok(TclModel { trunk, heads })
    }

    /// Two relu convolutions, a tanh dense layer, then `k` linear heads.
    pub fn conv<R: Rng + ?Sized>(
        rng: &mut R,
        image: (usize, usize),
        spec: ConvTrunkSpec,
        embed_dim: usize,
        k: usize,
    ) -> Result<Self> {
        let c1 = Conv2d::glorot(
            rng,
            [1, image.0, image.1],
            spec.channels.0,
            (spec.kernel, spec.kernel),
            Activation::Relu,
        )?;
        let c2 = Conv2d::glorot(
            rng,
            c1.output_shape(),
            spec.channels.1,
            (spec.kernel, spec.kernel),
            Activation::Relu,
        )?;
        let flat = c2.fan_out();
        let dense = Dense::glorot(rng, flat, spec.trunk_width, Activation::Tanh, true);
        let trunk = Network::new(vec![c1.into(), c2.into(), dense.into()])?;
        let heads = (0..k)
            .map(|_| {
                Network::new(vec![Dense::glorot(
                    rng,
                    spec.trunk_width,
                    embed_dim,
                    Activation::Linear,
                    true,
                )
                .into()])
            })
            .collect::<Result<_>>()?;
        TclModel::new(trunk, heads)
    }

    /// Dense tanh trunk `d → width`, then `k` linear heads.
    pub fn dense<R: Rng + ?Sized>(
        rng: &mut R,
        d: usize,
        width: usize,
        embed_dim: usize,
        k: usize,
    ) -> Result<Self> {
        let trunk = Network::new(vec![
            Dense::glorot(rng, d, width, Activation::Tanh, true).into()
        ])?;
        let heads = (0..k)
            .map(|_| {
                Network::new(vec![Dense::glorot(
                    rng,
                    width,
                    embed_dim,
                    Activation::Linear,
                    true,
                )
                .into()])
            })
            .collect::<Result<_>>()?;
        TclModel::new(trunk, heads)
    }

    pub fn k(&self) -> usize {
        self.heads.len()
    }

    /// Raw (unnormalized) embedding `g_j(g(x))`.
    pub fn embed(&self, x: &[f64], j: usize) -> Result<Vec<f64>> {
        if j >= self.k() {
            return Err(Error::invalid(format!(
                "cluster {j} out of range (k={})",
                self.k()
            )));
        }
        let h = self.trunk.predict(x)?;
        self.heads[j].predict(&h)
    }

    pub fn loss_entry(&self, anchor: &[f64], pos: &[f64], neg: &[f64], j: usize) -> Result<f64> {
        let u = normalize(&self.embed(anchor, j)?);
        let up = normalize(&self.embed(pos, j)?);
        let un = normalize(&self.embed(neg, j)?);
        Ok(dot(&u, &un) - dot(&u, &up))
    }

    /// Per-triplet, per-cluster loss matrix.
    pub fn loss_matrix(&self, batch: &TripletBatch) -> Result<LossMatrix> {
        let n = batch.len();
        let k = self.k();
        // Trunk outputs are shared by all heads.
        let cols = par::try_map_range(n, |i| -> Result<Vec<f64>> {
            let h = self.trunk.predict(batch.anchors.row(i))?;
            let hp = self.trunk.predict(batch.positives.row(i))?;
            let hn = self.trunk.predict(batch.negatives.row(i))?;
            (0..k)
                .map(|j| {
                    let u = normalize(&self.heads[j].predict(&h)?);
                    let up = normalize(&self.heads[j].predict(&hp)?);
                    let un = normalize(&self.heads[j].predict(&hn)?);
                    Ok(dot(&u, &un) - dot(&u, &up))
                })
                .collect()
        })?;
        let mut data = vec![0.0; k * n];
        for (i, col) in cols.iter().enumerate() {
            for j in 0..k {
                data[j * n + i] = col[j];
            }
        }
        ensure_finite(&data, "tcl loss matrix")?;
        LossMatrix::new(k, n, data)
    }

    /// `(1/n) Σ_i L[s_i][i]` together with the full loss matrix.
    pub fn tcl_loss(
        &self,
        batch: &TripletBatch,
        s: &AssignmentMatrix,
    ) -> Result<(f64, LossMatrix)> {
        let l = self.loss_matrix(batch)?;
        if s.n() != l.n() {
            return Err(Error::shape("tcl assignment", l.n(), s.n()));
        }
        Ok((l.masked_sum(s) / l.n() as f64, l))
    }

    fn embed_trace(&self, x: &[f64], j: usize) -> Result<(Trace, Trace)> {
        let t = self.trunk.trace(x)?;
        let h = self.heads[j].trace(t.output())?;
        Ok((t, h))
    }

    /// Adds `scale` times triplet `i`'s gradient under head `j` into `acc`;
    /// returns its loss.
    fn accumulate_sample(
        &self,
        batch: &TripletBatch,
        i: usize,
        j: usize,
        acc: &mut ParamGrads,
        scale: f64,
    ) -> Result<f64> {
        let (ta, ha) = self.embed_trace(batch.anchors.row(i), j)?;
        let (tp, hp) = self.embed_trace(batch.positives.row(i), j)?;
        let (tn, hn) = self.embed_trace(batch.negatives.row(i), j)?;
        let (u, na) = normalize_with_norm(ha.output());
        let (up, np) = normalize_with_norm(hp.output());
        let (un, nn) = normalize_with_norm(hn.output());
        let loss = dot(&u, &un) - dot(&u, &up);
        let gu: Vec<f64> = un.iter().zip(&up).map(|(a, b)| a - b).collect();
        let gup: Vec<f64> = u.iter().map(|v| -v).collect();
        let gun = u.clone();
        let trunk_len = self.trunk.params().len();
        let head_len = self.heads[j].params().len();
        let head_start = trunk_len + j * head_len;
        let (trunk_acc, rest) = acc.0.split_at_mut(trunk_len);
        let head_acc = &mut rest[head_start - trunk_len..head_start - trunk_len + head_len];
        for (t, h, unit, norm, g) in [
            (&ta, &ha, &u, na, gu),
            (&tp, &hp, &up, np, gup),
            (&tn, &hn, &un, nn, gun),
        ] {
            let dz = normalize_backward(unit, norm, &g);
            let dh = self.heads[j].backprop_into(h, &dz, head_acc, scale)?;
            self.trunk.backprop_into(t, &dh, trunk_acc, scale)?;
        }
        Ok(loss)
    }

    /// Mean masked loss over `indices` and its gradient with triplets frozen.
    pub fn loss_and_grads(
        &self,
        batch: &TripletBatch,
        s: &AssignmentMatrix,
        indices: &[usize],
    ) -> Result<(f64, ParamGrads)> {
        if s.n() != batch.len() || s.k() != self.k() {
            return Err(Error::shape(
                "tcl assignment",
                format!("k={} n={}", self.k(), batch.len()),
                format!("k={} n={}", s.k(), s.n()),
            ));
        }
        if indices.is_empty() {
            return Err(Error::invalid("empty batch"));
        }
        let scale = 1.0 / indices.len() as f64;
        let (loss, grads) = accumulate_grads(
            indices.len(),
            || ParamGrads::zeros_like(&self.params()),
            |b, acc| {
                let i = indices[b];
                self.accumulate_sample(batch, i, s.cluster_of(i), acc, scale)
            },
        )?;
        Ok((loss * scale, grads))
    }

    pub fn grad_step_batch(
        &mut self,
        batch: &TripletBatch,
        s: &AssignmentMatrix,
        indices: &[usize],
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let (loss, grads) = self.loss_and_grads(batch, s, indices)?;
        opt.step(self.params_mut(), &grads)?;
        Ok(loss)
    }

    pub fn grad_step(
        &mut self,
        batch: &TripletBatch,
        s: &AssignmentMatrix,
        opt: &mut Optimizer,
    ) -> Result<f64> {
        let all: Vec<usize> = (0..batch.len()).collect();
        self.grad_step_batch(batch, s, &all, opt)
    }
}

impl Parameterized for TclModel {
    fn params(&self) -> Vec<&[f64]> {
        let mut v = self.trunk.params();
        for h in &self.heads {
            v.extend(h.params());
        }
        v
    }

    fn params_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.trunk.params_mut();
        for h in &mut self.heads {
            v.extend(h.params_mut());
        }
        v
    }
}

pub fn normalize(z: &[f64]) -> Vec<f64> {
    normalize_with_norm(z).0
}

fn normalize_with_norm(z: &[f64]) -> (Vec<f64>, f64) {
    let n = dot(z, z).sqrt().max(NORM_EPS);
    (z.iter().map(|v| v / n).collect(), n)
}

/// Pulls a gradient on `u = z/‖z‖` back to `z`: `(g - u⟨u, g⟩) / ‖z‖`.
fn normalize_backward(u: &[f64], norm: f64, g: &[f64]) -> Vec<f64> {
    let ug = dot(u, g);
    u.iter().zip(g).map(|(u, g)| (g - u * ug) / norm).collect()
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    dot(&normalize(a), &normalize(b))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum PairMode {
    Supervised,
    Unsupervised,
}

impl std::str::FromStr for PairMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "supervised" => Ok(PairMode::Supervised),
            "unsupervised" => Ok(PairMode::Unsupervised),
            other => Err(Error::invalid(format!("unknown pair mode '{other}'"))),
        }
    }
}

impl PairMode {
    pub fn name(self) -> &'static str {
        match self {
            PairMode::Supervised => "supervised",
            PairMode::Unsupervised => "unsupervised",
        }
    }
}

/// Anchors, positives and negatives, row-aligned.
#[derive(Debug, Clone, PartialEq)]
pub struct TripletBatch {
    pub anchors: Tensor,
    pub positives: Tensor,
    pub negatives: Tensor,
    pub mode: PairMode,
    /// Dataset row of each positive; `None` when the positive is an augmentation.
    pub positive_index: Vec<Option<usize>>,
    pub negative_index: Vec<usize>,
}

impl TripletBatch {
    pub fn new(
        anchors: Tensor,
        positives: Tensor,
        negatives: Tensor,
        mode: PairMode,
    ) -> Result<Self> {
        if anchors.shape() != positives.shape() || anchors.shape() != negatives.shape() {
            return Err(Error::invalid("triplet tensors differ in shape"));
        }
        let n = anchors.rows();
        Ok(TripletBatch {
            anchors,
            positives,
            negatives,
            mode,
            positive_index: vec![None; n],
            negative_index: vec![0; n],
        })
    }

    pub fn len(&self) -> usize {
        self.anchors.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Swaps positives and negatives.
    pub fn swapped(&self) -> Self {
        TripletBatch {
            anchors: self.anchors.clone(),
            positives: self.negatives.clone(),
            negatives: self.positives.clone(),
            mode: self.mode,
            positive_index: self.negative_index.iter().map(|&i| Some(i)).collect(),
            negative_index: self.positive_index.iter().map(|i| i.unwrap_or(0)).collect(),
        }
    }
}

/// How unsupervised positives are produced.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Augmentation {
    Elastic {
        height: usize,
        width: usize,
        alpha: f64,
        sigma: f64,
    },
    /// Additive Gaussian jitter for non-image rows.
    Jitter { std: f64 },
}

impl Augmentation {
    pub fn apply(&self, x: &[f64], seed: u64) -> Result<Vec<f64>> {
        match *self {
            Augmentation::Elastic {
                height,
                width,
                alpha,
                sigma,
            } => {
                if x.len() != height * width {
                    return Err(Error::shape("elastic image", height * width, x.len()));
                }
                elastic_transform(x, height, width, alpha, sigma, seed)
            }
            Augmentation::Jitter { std } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                Ok(x.iter()
                    .map(|v| {
                        v + std
                            * rand_distr::Distribution::<f64>::sample(
                                &rand_distr::StandardNormal,
                                &mut rng,
                            )
                    })
                    .collect())
            }
        }
    }
}

fn anchor_rng(seed: u64, i: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(i as u64 + 1);
    rng
}

/// Positives by augmentation. Negatives are uniform over points in other
/// clusters, or over all other points when the anchor's cluster holds everything.
pub fn gen_pairs_unsupervised(
    x: &Tensor,
    s: &AssignmentMatrix,
    aug: Augmentation,
    seed: u64,
) -> Result<TripletBatch> {
    let n = x.rows();
    if s.n() != n {
        return Err(Error::shape("pair assignment", n, s.n()));
    }
    if n < 2 {
        return Err(Error::invalid(
            "unsupervised pairs need at least two points",
        ));
    }
    let counts = s.counts();
    let by_cluster: Vec<Vec<usize>> = (0..s.k()).map(|j| s.members(j)).collect();
    let rows = par::try_map_range(n, |i| -> Result<(Vec<f64>, usize)> {
        let mut rng = anchor_rng(seed, i);
        let own = s.cluster_of(i);
        let neg = if counts[own] == n {
            let r = rng.random_range(0..n - 1);
            if r >= i {
                r + 1
            } else {
                r
            }
        } else {
            let mut r = rng.random_range(0..n - counts[own]);
            let mut neg = 0;
            for (j, members) in by_cluster.iter().enumerate() {
                if j == own {
                    continue;
                }
                if r < members.len() {
                    neg = members[r];
                    break;
                }
                r -= members.len();
            }
            neg
        };
        let aug_seed = rng.random::<u64>();
        Ok((aug.apply(x.row(i), aug_seed)?, neg))
    })?;
    let mut pos = Vec::with_capacity(n * x.cols());
    let mut neg = Vec::with_capacity(n * x.cols());
    let mut negative_index = Vec::with_capacity(n);
    for (p, ni) in rows {
        pos.extend(p);
        neg.extend_from_slice(x.row(ni));
        negative_index.push(ni);
    }
    let shape = x.shape().to_vec();
    let mut batch = TripletBatch::new(
        x.clone(),
        Tensor::new(shape.clone(), pos)?,
        Tensor::new(shape, neg)?,
        PairMode::Unsupervised,
    )?;
    batch.negative_index = negative_index;
    Ok(batch)
}

/// Positives: another member of the anchor's class. Negatives: any member of
/// another class. Both uniform over the eligible rows.
pub fn gen_pairs_supervised(x: &Tensor, labels: &[usize], seed: u64) -> Result<TripletBatch> {
    let n = x.rows();
    if labels.len() != n {
        return Err(Error::shape("pair labels", n, labels.len()));
    }
    let n_classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut by_class = vec![Vec::new(); n_classes];
    for (i, &c) in labels.iter().enumerate() {
        by_class[c].push(i);
    }
    if let Some(c) = by_class.iter().position(|m| m.len() == 1) {
        return Err(Error::invalid(format!(
            "class {c} has a single member; no positive available"
        )));
    }
    if by_class.iter().filter(|m| !m.is_empty()).count() < 2 {
        return Err(Error::invalid(
            "supervised negatives need at least two classes",
        ));
    }
    let picks = par::map_range(n, |i| {
        let mut rng = anchor_rng(seed, i);
        let same = &by_class[labels[i]];
        let own = same
            .iter()
            .position(|&m| m == i)
            .expect("member of own class");
        let mut p = rng.random_range(0..same.len() - 1);
        if p >= own {
            p += 1;
        }
        let others = n - same.len();
        let mut r = rng.random_range(0..others);
        let mut neg = 0;
        for (c, members) in by_class.iter().enumerate() {
            if c == labels[i] {
                continue;
            }
            if r < members.len() {
                neg = members[r];
                break;
            }
            r -= members.len();
        }
        (same[p], neg)
    });
    let mut pos = Vec::with_capacity(n * x.cols());
    let mut neg = Vec::with_capacity(n * x.cols());
    for &(p, q) in &picks {
        pos.extend_from_slice(x.row(p));
        neg.extend_from_slice(x.row(q));
    }
    let shape = x.shape().to_vec();
    let mut batch = TripletBatch::new(
        x.clone(),
        Tensor::new(shape.clone(), pos)?,
        Tensor::new(shape, neg)?,
        PairMode::Supervised,
    )?;
    batch.positive_index = picks.iter().map(|&(p, _)| Some(p)).collect();
    batch.negative_index = picks.iter().map(|&(_, q)| q).collect();
    Ok(batch)
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil().max(1.0) as usize;
    let mut k: Vec<f64> = (0..=2 * radius)
        .map(|i| {
            let t = i as f64 - radius as f64;
            (-0.5 * t * t / (sigma * sigma)).exp()
        })
        .collect();
    let s: f64 = k.iter().sum();
    k.iter_mut().for_each(|v| *v /= s);
    k
}

/// Separable Gaussian blur with edge clamping.
fn gaussian_blur(field: &[f64], h: usize, w: usize, sigma: f64) -> Vec<f64> {
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as isize;
    let clamp = |v: isize, hi: usize| v.clamp(0, hi as isize - 1) as usize;
    let mut tmp = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            tmp[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * field[y * w + clamp(x as isize + t as isize - r, w)])
                .sum();
        }
    }
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            out[y * w + x] = k
                .iter()
                .enumerate()
                .map(|(t, kv)| kv * tmp[clamp(y as isize + t as isize - r, h) * w + x])
                .sum();
        }
    }
    out
}

/// Smoothed random displacement field `(dx, dy)`, each `h × w`, scaled by `alpha`.
pub fn displacement_field(
    h: usize,
    w: usize,
    alpha: f64,
    sigma: f64,
    seed: u64,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if sigma.is_nan() || sigma <= 0.0 {
        return Err(Error::invalid(format!(
            "elastic sigma must be positive, got {sigma}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let raw_dx: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let raw_dy: Vec<f64> = (0..h * w).map(|_| rng.random_range(-1.0..1.0)).collect();
    let dx = gaussian_blur(&raw_dx, h, w, sigma)
        .into_iter()
        .map(|v| alpha * v)
        .collect();
    let dy = gaussian_blur(&raw_dy, h, w, sigma)
        .into_iter()
        .map(|v| alpha * v)
        .collect();
    Ok((dx, dy))
}

/// Bilinear sample at a fractional position, clamped to the image border.
fn bilinear(img: &[f64], h: usize, w: usize, y: f64, x: f64) -> f64 {
    let y = y.clamp(0.0, (h - 1) as f64);
    let x = x.clamp(0.0, (w - 1) as f64);
    let y0 = y.floor() as usize;
    let x0 = x.floor() as usize;
    let y1 = (y0 + 1).min(h - 1);
    let x1 = (x0 + 1).min(w - 1);
    let fy = y - y0 as f64;
    let fx = x - x0 as f64;
    let top = img[y0 * w + x0] * (1.0 - fx) + img[y0 * w + x1] * fx;
    let bottom = img[y1 * w + x0] * (1.0 - fx) + img[y1 * w + x1] * fx;
    top * (1.0 - fy) + bottom * fy
}

/// Random smooth warp of a single-channel `h × w` image.
pub fn elastic_transform(
    img: &[f64],
    h: usize,
    w: usize,
    alpha: f64,
    sigma: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    if img.len() != h * w || h == 0 || w == 0 {
        return Err(Error::shape("elastic_transform", h * w, img.len()));
    }
    let (dx, dy) = displacement_field(h, w, alpha, sigma, seed)?;
    let mut out = vec![0.0; h * w];
    for y in 0..h {
        for x in 0..w {
            let o = y * w + x;
            out[o] = bilinear(img, h, w, y as f64 + dy[o], x as f64 + dx[o]);
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_image(seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..12 * 10).map(|_| rng.random::<f64>()).collect()
    }

    #[test]
    fn zero_alpha_is_identity() {
        let img = tiny_image(1);
        let out = elastic_transform(&img, 12, 10, 0.0, 3.0, 42).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn constant_image_stays_constant() {
        let img = vec![0.37; 120];
        let out = elastic_transform(&img, 12, 10, 8.0, 3.0, 7).unwrap();
        assert!(out.iter().all(|v| (v - 0.37).abs() < 1e-15));
    }

    #[test]
    fn sigma_must_be_positive() {
        assert!(elastic_transform(&[0.0; 4], 2, 2, 1.0, 0.0, 0).is_err());
    }

    #[test]
    fn displacement_grows_with_alpha() {
        let mean_abs = |alpha| {
            let (dx, dy) = displacement_field(28, 28, alpha, 3.0, 11).unwrap();
            dx.iter().chain(&dy).map(|v: &f64| v.abs()).sum::<f64>() / (2.0 * 784.0)
        };
        let (a, b, c) = (mean_abs(1.0), mean_abs(4.0), mean_abs(8.0));
        assert!(a < b && b < c, "{a} {b} {c}");
    }

    #[test]
    fn elastic_is_seed_deterministic() {
        let img = tiny_image(2);
        assert_eq!(
            elastic_transform(&img, 12, 10, 5.0, 2.0, 9).unwrap(),
            elastic_transform(&img, 12, 10, 5.0, 2.0, 9).unwrap()
        );
        assert_ne!(elastic_transform(&img, 12, 10, 5.0, 2.0, 9).unwrap(), img);
    }

    #[test]
    fn two_points_two_clusters_negatives_forced() {
        let x = Tensor::from_rows(&[vec![0.0, 1.0], vec![2.0, 3.0]]).unwrap();
        let s = AssignmentMatrix::new(2, vec![0, 1]).unwrap();
        let b = gen_pairs_unsupervised(&x, &s, Augmentation::Jitter { std: 0.1 }, 3).unwrap();
        assert_eq!(b.negative_index, vec![1, 0]);
        assert_eq!(b.negatives.row(0), x.row(1));
        assert_ne!(b.positives.row(0), x.row(0));
    }

    #[test]
    fn single_cluster_negatives_are_other_points() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        let one = AssignmentMatrix::new(1, vec![0, 0, 0]).unwrap();
        let b = gen_pairs_unsupervised(&x, &one, Augmentation::Jitter { std: 0.1 }, 0).unwrap();
        for i in 0..3 {
            assert_ne!(b.negative_index[i], i);
        }
        let lone = Tensor::from_rows(&[vec![0.0]]).unwrap();
        let s = AssignmentMatrix::new(1, vec![0]).unwrap();
        assert!(gen_pairs_unsupervised(&lone, &s, Augmentation::Jitter { std: 0.1 }, 0).is_err());
    }

    #[test]
    fn supervised_partners_forced() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0], vec![3.0]]).unwrap();
        let labels = [0, 0, 1, 1];
        let b = gen_pairs_supervised(&x, &labels, 5).unwrap();
        assert_eq!(b.positive_index, vec![Some(1), Some(0), Some(3), Some(2)]);
        for i in 0..4 {
            assert_ne!(labels[b.negative_index[i]], labels[i]);
        }
    }

    #[test]
    fn supervised_rejects_singletons() {
        let x = Tensor::from_rows(&[vec![0.0], vec![1.0], vec![2.0]]).unwrap();
        assert!(gen_pairs_supervised(&x, &[0, 0, 1], 0).is_err());
        assert!(gen_pairs_supervised(&x, &[0, 0, 0], 0).is_err());
    }

    #[test]
    fn identical_positive_and_negative_cancel() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = TclModel::dense(&mut rng, 3, 5, 4, 2).unwrap();
        let x = Tensor::from_rows(&[vec![0.1, 0.2, 0.3]]).unwrap();
        let p = Tensor::from_rows(&[vec![-1.0, 0.5, 2.0]]).unwrap();
        let b = TripletBatch::new(x, p.clone(), p, PairMode::Supervised).unwrap();
        let l = m.loss_matrix(&b).unwrap();
        assert_eq!(l.get(0, 0), 0.0);
        assert_eq!(l.get(1, 0), 0.0);
    }
}
