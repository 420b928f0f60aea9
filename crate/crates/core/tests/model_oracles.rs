use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use tensorized::cluster::AssignmentMatrix;
use tensorized::nn::{Network, Optimizer, Parameterized, Tensor};
use tensorized::recon::{PtaeModel, ReconArch};
use tensorized::ssl::{
    displacement_field, elastic_transform, gen_pairs_supervised, gen_pairs_unsupervised,
    Augmentation, TclModel,
};
use tensorized::vae::{
    bce_with_logits, kl_term, latent_grid, reparameterize, NoiseTable, ReconMode, ReparamMode,
    TvaeModel,
};

fn gaussian_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    Tensor::matrix(
        n,
        d,
        (0..n * d).map(|_| StandardNormal.sample(rng)).collect(),
    )
    .unwrap()
}

fn unit_rows(rng: &mut ChaCha8Rng, n: usize, d: usize) -> Tensor {
    Tensor::matrix(n, d, (0..n * d).map(|_| rng.random::<f64>()).collect()).unwrap()
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

#[test]
fn ptae_entries_match_per_sample_recomposition() {
    for seed in 0..10 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (n, d, k) = (9, 5, 3);
        let x = gaussian_rows(&mut rng, n, d);
        let mut model = PtaeModel::build(ReconArch::Ptae, d, k, &mut rng)
            .unwrap()
            .with_lambda(0.1);
        let s = AssignmentMatrix::new(k, (0..n).map(|i| i % k).collect()).unwrap();
        model.update_centers(&x, &s);
        let l = model.loss_matrix(&x).unwrap();
        for j in 0..k {
            let c = model.centers.center(j);
            for i in 0..n {
                let xc: Vec<f64> = x.row(i).iter().zip(c).map(|(a, b)| a - b).collect();
                let h = model.shared_encoder.predict(&xc).unwrap();
                let z = model.cluster_encoders[j].predict(&h).unwrap();
                let g = model.cluster_decoders[j].predict(&z).unwrap();
                let out = model.shared_decoder.predict(&g).unwrap();
                let expected = sq_dist(&xc, &out) - 0.1 * z.iter().map(|v| v * v).sum::<f64>();
                assert!((l.get(j, i) - expected).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn single_cluster_ptae_step_equals_plain_autoencoder_step() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let (n, d) = (15, 4);
    let x = gaussian_rows(&mut rng, n, d);
    let mut model = PtaeModel::build(ReconArch::Ptae, d, 1, &mut rng).unwrap();
    let s = AssignmentMatrix::uniform(1, n);
    model.update_centers(&x, &s);
    let mean = model.centers.center(0).to_vec();
    let mut ae: Network = model
        .shared_encoder
        .clone()
        .then(model.cluster_encoders[0].clone())
        .and_then(|net| net.then(model.cluster_decoders[0].clone()))
        .and_then(|net| net.then(model.shared_decoder.clone()))
        .unwrap();

    let mut grads = ae.zero_grads();
    for i in 0..n {
        let xc: Vec<f64> = x.row(i).iter().zip(&mean).map(|(a, b)| a - b).collect();
        let trace = ae.trace(&xc).unwrap();
        let upstream: Vec<f64> = trace
            .output()
            .iter()
            .zip(&xc)
            .map(|(o, t)| 2.0 * (o - t) / n as f64)
            .collect();
        let (g, _) = ae.backprop(&trace, &upstream).unwrap();
        grads.add_scaled(&g, 1.0);
    }
    let lr = 0.05;
    Optimizer::sgd(lr)
        .unwrap()
        .step(ae.params_mut(), &grads)
        .unwrap();
    model
        .grad_step(&x, &s, &mut Optimizer::sgd(lr).unwrap())
        .unwrap();

    let a = ae.params().concat();
    let b = model.params().concat();
    assert_eq!(a.len(), b.len());
    for (p, q) in a.iter().zip(&b) {
        assert!((p - q).abs() < 1e-12);
    }
}

/// KL of `N(μ, σ²)` from `N(0, 1)` by composite Simpson over ±12σ.
fn kl_quadrature(mu: f64, logvar: f64) -> f64 {
    let sd = (0.5 * logvar).exp();
    let (lo, hi) = (mu - 12.0 * sd, mu + 12.0 * sd);
    let steps = 20_000;
    let h = (hi - lo) / steps as f64;
    let integrand = |z: f64| {
        let log_q =
            -0.5 * ((z - mu) / sd).powi(2) - sd.ln() - 0.5 * (2.0 * std::f64::consts::PI).ln();
        let log_p = -0.5 * z * z - 0.5 * (2.0 * std::f64::consts::PI).ln();
        log_q.exp() * (log_q - log_p)
    };
    let mut acc = integrand(lo) + integrand(hi);
    for i in 1..steps {
        let w = if i % 2 == 1 { 4.0 } else { 2.0 };
        acc += w * integrand(lo + i as f64 * h);
    }
    acc * h / 3.0
}

#[test]
fn kl_matches_numerical_quadrature() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..20 {
        let mu: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
        let lv: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..1.5)).collect();
        let expected: f64 = mu.iter().zip(&lv).map(|(m, l)| kl_quadrature(*m, *l)).sum();
        assert!((kl_term(&mu, &lv) - expected).abs() < 1e-6);
    }
}

#[test]
pub fn kl_is_nonnegative_on_random_points() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..100_000 {
        let mu = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
        let lv = [rng.random_range(-8.0..4.0), rng.random_range(-8.0..4.0)];
        assert!(kl_term(&mu, &lv) >= 0.0);
    }
}

fn sample_variance(mode: ReparamMode, logvar: f64, draws: usize) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(13);
    let z: Vec<f64> = (0..draws)
        .map(|_| {
            reparameterize(&[0.0], &[logvar], &[StandardNormal.sample(&mut rng)], mode).unwrap()[0]
        })
        .collect();
    let mean = z.iter().sum::<f64>() / draws as f64;
    z.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (draws - 1) as f64
}

#[test]
pub fn reparameterized_samples_have_target_variance() {
    let logvar = 4f64.ln();
    let v = sample_variance(ReparamMode::StdDev, logvar, 100_000);
    assert!((v / 4.0 - 1.0).abs() < 0.05, "std mode variance {v}");
    let v = sample_variance(ReparamMode::Variance, logvar, 100_000);
    assert!((v / 16.0 - 1.0).abs() < 0.05, "variance mode variance {v}");
}

#[test]
fn bce_matches_elementwise_formula() {
    let mut rng = ChaCha8Rng::seed_from_u64(14);
    for _ in 0..20 {
        let logits: Vec<f64> = (0..8).map(|_| rng.random_range(-6.0..6.0)).collect();
        let targets: Vec<f64> = (0..8).map(|_| rng.random::<f64>()).collect();
        let expected: f64 = logits
            .iter()
            .zip(&targets)
            .map(|(l, t)| {
                let p = 1.0 / (1.0 + (-l).exp());
                -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
            })
            .sum();
        assert!((bce_with_logits(&logits, &targets).unwrap() - expected).abs() < 1e-10);
    }
}

#[test]
fn single_cluster_tvae_equals_standalone_vae_loss() {
    for mode in [ReconMode::BceSigmoid, ReconMode::MseLinear] {
        let mut rng = ChaCha8Rng::seed_from_u64(15);
        let (n, d, h) = (8, 6, 2);
        let x = unit_rows(&mut rng, n, d);
        let mut model = TvaeModel::build(d, 5, h, 1, mode, true, &mut rng).unwrap();
        let s = AssignmentMatrix::uniform(1, n);
        model.update_centers(&x, &s);
        let noise = NoiseTable::draw(1, n, h, &mut rng);
        let l = model.loss_matrix(&x, &noise).unwrap();
        let c = model.centers.center(0);
        for i in 0..n {
            let xc: Vec<f64> = x.row(i).iter().zip(c).map(|(a, b)| a - b).collect();
            let t = model.trunk.predict(&xc).unwrap();
            let mu = model.mean_heads[0].predict(&t).unwrap();
            let lv = model.logvar_heads[0].predict(&t).unwrap();
            let eps = noise.get(0, i);
            let z: Vec<f64> = (0..h)
                .map(|q| mu[q] + (0.5 * lv[q]).exp() * eps[q])
                .collect();
            let out = model
                .shared_decoder
                .predict(&model.cluster_decoders[0].predict(&z).unwrap())
                .unwrap();
            let rec: f64 = match mode {
                ReconMode::BceSigmoid => out
                    .iter()
                    .zip(x.row(i))
                    .map(|(l, t)| {
                        let p = 1.0 / (1.0 + (-l).exp());
                        -(t * p.ln() + (1.0 - t) * (1.0 - p).ln())
                    })
                    .sum(),
                ReconMode::MseLinear => 0.5 * sq_dist(&out, &xc),
            };
            let kl: f64 = (0..h)
                .map(|q| 0.5 * (lv[q].exp() + mu[q] * mu[q] - 1.0 - lv[q]))
                .sum();
            assert!((l.get(0, i) - (rec + kl)).abs() < 1e-10, "{mode:?} row {i}");
        }
    }
}

#[test]
fn bce_decoder_outputs_stay_in_unit_interval_over_grid() {
    let mut rng = ChaCha8Rng::seed_from_u64(16);
    let model = TvaeModel::build(9, 6, 2, 2, ReconMode::BceSigmoid, true, &mut rng).unwrap();
    let grid = latent_grid(15, 2.0);
    assert_eq!(grid.len(), 225);
    for j in 0..2 {
        for img in model.sample_latent_grid(j, &grid).unwrap() {
            assert!(img.iter().all(|v| (0.0..=1.0).contains(v)));
        }
    }
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let dot: f64 = a.iter().zip(b).map(|(x, y)| x * y).sum();
    dot / (a.iter().map(|x| x * x).sum::<f64>().sqrt()
        * b.iter().map(|x| x * x).sum::<f64>().sqrt())
}

#[test]
fn tcl_entries_match_loop_oracle_and_flip_under_swap() {
    let mut rng = ChaCha8Rng::seed_from_u64(17);
    let (n, d, k) = (10, 5, 3);
    let x = gaussian_rows(&mut rng, n, d);
    let labels: Vec<usize> = (0..n).map(|i| i % 2).collect();
    let model = TclModel::dense(&mut rng, d, 6, 3, k).unwrap();
    let batch = gen_pairs_supervised(&x, &labels, 3).unwrap();
    let l = model.loss_matrix(&batch).unwrap();
    let swapped = model.loss_matrix(&batch.swapped()).unwrap();
    for j in 0..k {
        for i in 0..n {
            let e = |row: &[f64]| {
                model.heads[j]
                    .predict(&model.trunk.predict(row).unwrap())
                    .unwrap()
            };
            let u = e(batch.anchors.row(i));
            let expected =
                cosine(&u, &e(batch.negatives.row(i))) - cosine(&u, &e(batch.positives.row(i)));
            assert!((l.get(j, i) - expected).abs() < 1e-12);
            assert!((swapped.get(j, i) + l.get(j, i)).abs() < 1e-12);
        }
    }
}

/// Pearson χ² statistic of observed counts against a uniform expectation.
fn chi_square(counts: &[usize]) -> f64 {
    let total: usize = counts.iter().sum();
    let expected = total as f64 / counts.len() as f64;
    counts
        .iter()
        .map(|&c| (c as f64 - expected).powi(2) / expected)
        .sum()
}

// Upper 0.1% point of χ² with 7 degrees of freedom.
const CHI2_DF7_999: f64 = 24.32;

#[test]
fn unsupervised_negatives_are_uniform_over_other_clusters() {
    let mut rng = ChaCha8Rng::seed_from_u64(18);
    let n = 12;
    let x = gaussian_rows(&mut rng, n, 3);
    let s = AssignmentMatrix::new(3, vec![0, 0, 0, 0, 1, 1, 1, 2, 2, 2, 2, 2]).unwrap();
    let others: Vec<usize> = (4..12).collect();
    let mut counts = vec![0; others.len()];
    for seed in 0..1000 {
        let batch =
            gen_pairs_unsupervised(&x, &s, Augmentation::Jitter { std: 0.1 }, seed).unwrap();
        let neg = batch.negative_index[0];
        counts[others
            .iter()
            .position(|&o| o == neg)
            .expect("negative from another cluster")] += 1;
    }
    assert!(chi_square(&counts) < CHI2_DF7_999, "{counts:?}");
}

#[test]
fn supervised_positives_are_uniform_over_classmates() {
    let mut rng = ChaCha8Rng::seed_from_u64(19);
    let n = 16;
    let x = gaussian_rows(&mut rng, n, 3);
    let labels: Vec<usize> = (0..n).map(|i| usize::from(i >= 8)).collect();
    let mut counts = vec![0; 8];
    for seed in 0..1000 {
        let batch = gen_pairs_supervised(&x, &labels, seed).unwrap();
        let p = batch.positive_index[15].expect("supervised positives are dataset rows");
        assert!((8..15).contains(&p));
        counts[p - 8] += 1;
    }
    assert_eq!(counts[7], 0);
    assert!(chi_square(&counts[..7]) < CHI2_DF7_999, "{counts:?}");
}

#[test]
pub fn elastic_with_zero_alpha_is_bit_exact_identity() {
    let mut rng = ChaCha8Rng::seed_from_u64(20);
    for seed in 0..10 {
        let img: Vec<f64> = (0..28 * 28).map(|_| rng.random::<f64>()).collect();
        let out = elastic_transform(&img, 28, 28, 0.0, 3.0, seed).unwrap();
        assert!(img
            .iter()
            .zip(&out)
            .all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}

#[test]
fn elastic_displacement_grows_with_alpha() {
    for seed in 0..5 {
        let mean_abs = |alpha: f64| {
            let (dx, dy) = displacement_field(28, 28, alpha, 3.0, seed).unwrap();
            dx.iter().chain(&dy).map(|v| v.abs()).sum::<f64>() / (dx.len() + dy.len()) as f64
        };
        let (a, b, c) = (mean_abs(1.0), mean_abs(4.0), mean_abs(8.0));
        assert!(a < b && b < c, "seed {seed}: {a} {b} {c}");
    }
}
