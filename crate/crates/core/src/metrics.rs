//! Clustering and reconstruction metrics, and exact t-SNE.

use std::collections::HashMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::nn::{sq_dist, Tensor};
use crate::par;

fn choose2(m: usize) -> f64 {
    let m = m as f64;
    m * (m - 1.0) / 2.0
}

/// Adjusted Rand Index (Hubert and Arabie). Two trivial partitions score 1.
pub fn ari(a: &[usize], b: &[usize]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::shape("ari labelings", a.len(), b.len()));
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::invalid("ari needs at least two points"));
    }
    let mut table: HashMap<(usize, usize), usize> = HashMap::new();
    let mut rows: HashMap<usize, usize> = HashMap::new();
    let mut cols: HashMap<usize, usize> = HashMap::new();
    for (&x, &y) in a.iter().zip(b) {
        *table.entry((x, y)).or_default() += 1;
        *rows.entry(x).or_default() += 1;
        *cols.entry(y).or_default() += 1;
    }
    // Sorted sums keep the result independent of hash iteration order.
    let sum = |m: &mut dyn Iterator<Item = usize>| {
        let mut v: Vec<f64> = m.map(choose2).collect();
        v.sort_by(f64::total_cmp);
        v.into_iter().sum::<f64>()
    };
    let index = sum(&mut table.values().copied());
    let sa = sum(&mut rows.values().copied());
    let sb = sum(&mut cols.values().copied());
    let expected = sa * sb / choose2(n);
    let max = 0.5 * (sa + sb);
    let (num, den) = (index - expected, max - expected);
    if den == 0.0 {
        // Only reachable when both partitions are all-singletons or one block.
        return Ok(if num == 0.0 { 1.0 } else { 0.0 });
    }
    Ok(num / den)
}

/// Mean over all entries of the squared difference.
pub fn mse(a: &Tensor, b: &Tensor) -> Result<f64> {
    if a.shape() != b.shape() {
        return Err(Error::shape(
            "mse",
            format!("{:?}", a.shape()),
            format!("{:?}", b.shape()),
        ));
    }
    if a.is_empty() {
        return Err(Error::invalid("mse of empty tensors"));
    }
    Ok(sq_dist(a.as_slice(), b.as_slice()) / a.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TsneConfig {
    pub perplexity: f64,
    pub iters: usize,
    pub seed: u64,
    pub learning_rate: f64,
    pub early_exaggeration: f64,
    pub exaggeration_iters: usize,
    pub momentum_switch: usize,
}

impl Default for TsneConfig {
    fn default() -> Self {
        TsneConfig {
            perplexity: 30.0,
            iters: 1000,
            seed: 0,
            learning_rate: 200.0,
            early_exaggeration: 12.0,
            exaggeration_iters: 250,
            momentum_switch: 250,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsneResult {
    /// `n × 2`.
    pub embedding: Tensor,
    /// `KL(P ‖ Q)` after each iteration, measured against the unexaggerated `P`.
    pub kl: Vec<f64>,
}

const PERPLEXITY_TOL: f64 = 1e-5;
const MAX_BISECTIONS: usize = 200;

/// Conditional row `p_{j|i}` whose entropy matches `ln(perplexity)`.
fn conditional_row(d2: &[f64], i: usize, perplexity: f64) -> Vec<f64> {
    let target = perplexity.ln();
    let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
    // Shifting by the nearest distance keeps the exponentials representable.
    let dmin = d2
        .iter()
        .enumerate()
        .filter(|&(j, _)| j != i)
        .map(|(_, &v)| v)
        .fold(f64::INFINITY, f64::min);
    let mut p = vec![0.0; d2.len()];
    for _ in 0..MAX_BISECTIONS {
        let mut sum = 0.0;
        let mut weighted = 0.0;
        for (j, &dj) in d2.iter().enumerate() {
            p[j] = if j == i {
                0.0
            } else {
                (-beta * (dj - dmin)).exp()
            };
            sum += p[j];
            weighted += p[j] * (dj - dmin);
        }
        let entropy = sum.ln() + beta * weighted / sum;
        p.iter_mut().for_each(|v| *v /= sum);
        let diff = entropy - target;
        if diff.abs() < PERPLEXITY_TOL {
            break;
        }
        if diff > 0.0 {
            lo = beta;
            beta = if hi.is_finite() {
                (beta + hi) / 2.0
            } else {
                beta * 2.0
            };
        } else {
            hi = beta;
            beta = (beta + lo) / 2.0;
        }
    }
    p
}

/// Symmetrized joint probabilities `(P + Pᵀ) / 2n`, row-major `n × n`.
pub fn joint_probabilities(x: &Tensor, perplexity: f64) -> Result<Vec<f64>> {
    let n = x.rows();
    if perplexity.is_nan() || perplexity <= 0.0 || perplexity > (n as f64 - 1.0) {
        return Err(Error::invalid(format!(
            "perplexity {perplexity} infeasible for {n} points"
        )));
    }
    let d2: Vec<Vec<f64>> =
        par::map_range(n, |i| (0..n).map(|j| sq_dist(x.row(i), x.row(j))).collect());
    let cond: Vec<Vec<f64>> = par::map_range(n, |i| conditional_row(&d2[i], i, perplexity));
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                p[i * n + j] = ((cond[i][j] + cond[j][i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    Ok(p)
}

/// One gradient evaluation: `(grad, KL(p_true ‖ q))`.
fn gradient(y: &[f64], p: &[f64], p_true: &[f64], n: usize) -> (Vec<f64>, f64) {
    let num: Vec<Vec<f64>> = par::map_range(n, |i| {
        (0..n)
            .map(|j| {
                if i == j {
                    0.0
                } else {
                    1.0 / (1.0 + sq_dist(&y[2 * i..2 * i + 2], &y[2 * j..2 * j + 2]))
                }
            })
            .collect()
    });
    let z: f64 = num.iter().map(|r| r.iter().sum::<f64>()).sum();
    let rows: Vec<([f64; 2], f64)> = par::map_range(n, |i| {
        let mut g = [0.0; 2];
        let mut kl = 0.0;
        for j in 0..n {
            if i == j {
                continue;
            }
            let q = (num[i][j] / z).max(1e-12);
            let m = 4.0 * (p[i * n + j] - q) * num[i][j];
            g[0] += m * (y[2 * i] - y[2 * j]);
            g[1] += m * (y[2 * i + 1] - y[2 * j + 1]);
            let pt = p_true[i * n + j];
            kl += pt * (pt / q).ln();
        }
        (g, kl)
    });
    let kl = rows.iter().map(|r| r.1).sum();
    (rows.into_iter().flat_map(|r| r.0).collect(), kl)
}

/// Exact O(n²) t-SNE into two dimensions.
pub fn tsne(x: &Tensor, cfg: &TsneConfig) -> Result<TsneResult> {
    crate::error::ensure_finite(x.as_slice(), "t-SNE input")?;
    let n = x.rows();
    let p_true = joint_probabilities(x, cfg.perplexity)?;
    let p_exag: Vec<f64> = p_true.iter().map(|v| v * cfg.early_exaggeration).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let init = Normal::new(0.0, 1e-4).expect("valid std");
    let mut y: Vec<f64> = (0..2 * n).map(|_| init.sample(&mut rng)).collect();
    let mut velocity = vec![0.0; 2 * n];
    let mut kl = Vec::with_capacity(cfg.iters);

    for it in 0..=cfg.iters {
        let p = if it < cfg.exaggeration_iters {
            &p_exag
        } else {
            &p_true
        };
        let (grad, objective) = gradient(&y, p, &p_true, n);
        if it > 0 {
            if !objective.is_finite() {
                return Err(Error::NonFinite("t-SNE objective"));
            }
            kl.push(objective);
        }
        if it == cfg.iters {
            break;
        }
        let momentum = if it < cfg.momentum_switch { 0.5 } else { 0.8 };
        for ((v, yv), g) in velocity.iter_mut().zip(y.iter_mut()).zip(&grad) {
            *v = momentum * *v - cfg.learning_rate * g;
            *yv += *v;
        }
        for axis in 0..2 {
            let mean = (0..n).map(|i| y[2 * i + axis]).sum::<f64>() / n as f64;
            (0..n).for_each(|i| y[2 * i + axis] -= mean);
        }
    }
    Ok(TsneResult {
        embedding: Tensor::new(vec![n, 2], y)?,
        kl,
    })
}
