use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tensorized::cluster::{
    compute_centers, kmeanspp_init, lloyd_step, AssignmentMatrix, LossMatrix,
};
use tensorized::data::{gen_synthetic, load_idx, write_idx, SyntheticKind};
use tensorized::metrics::ari;
use tensorized::nn::{Activation, Dense, Network, Optimizer, Parameterized, Tensor};
use tensorized::rbm::{cd_gradient, RbmParams};
use tensorized::recon::{PtaeModel, ReconArch};
use tensorized::ssl::{elastic_transform, gen_pairs_supervised, TclModel};
use tensorized::vae::{kl_term, ReconMode, TvaeModel};

fn config() -> ProptestConfig {
    ProptestConfig {
        cases: 64,
        ..ProptestConfig::default()
    }
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn count(m: &impl Parameterized) -> usize {
    m.params().iter().map(|p| p.len()).sum()
}

fn matrix(values: Vec<f64>, rows: usize) -> Tensor {
    let cols = values.len() / rows;
    Tensor::matrix(rows, cols, values).unwrap()
}

fn labelings(max_n: usize) -> impl Strategy<Value = (Vec<usize>, Vec<usize>)> {
    (2..max_n).prop_flat_map(|n| {
        (
            prop::collection::vec(0usize..4, n),
            prop::collection::vec(0usize..4, n),
        )
    })
}

proptest! {
    #![proptest_config(config())]

    #[test]
    fn forward_is_deterministic_and_keeps_param_count(seed in any::<u64>(), x in prop::collection::vec(-3.0..3.0f64, 4)) {
        let mut r = rng(seed);
        let mut net = Network::new(vec![
            Dense::glorot(&mut r, 4, 3, Activation::Tanh, true).into(),
            Dense::glorot(&mut r, 3, 2, Activation::Sigmoid, true).into(),
        ]).unwrap();
        let before = net.param_count();
        let a = net.predict(&x).unwrap();
        prop_assert_eq!(&a, &net.predict(&x).unwrap());
        let y = net.forward(&Tensor::vector(x.clone())).unwrap();
        prop_assert_eq!(y.as_slice(), a.as_slice());
        net.backward(&Tensor::vector(vec![1.0, -1.0])).unwrap();
        prop_assert_eq!(net.param_count(), before);
    }

    #[test]
    fn small_sgd_step_does_not_increase_quadratic_loss(seed in any::<u64>(), x in prop::collection::vec(-2.0..2.0f64, 3), t in prop::collection::vec(-2.0..2.0f64, 2)) {
        let mut net = Network::new(vec![Dense::glorot(&mut rng(seed), 3, 2, Activation::Linear, true).into()]).unwrap();
        let loss = |n: &Network| -> f64 { n.predict(&x).unwrap().iter().zip(&t).map(|(y, t)| 0.5 * (y - t).powi(2)).sum() };
        let before = loss(&net);
        let trace = net.trace(&x).unwrap();
        let upstream: Vec<f64> = trace.output().iter().zip(&t).map(|(y, t)| y - t).collect();
        let (g, _) = net.backprop(&trace, &upstream).unwrap();
        Optimizer::sgd(1e-4).unwrap().step(net.params_mut(), &g).unwrap();
        prop_assert!(loss(&net) <= before);
    }

    #[test]
    fn lloyd_gives_a_valid_optimal_assignment(k in 1usize..=3, n in 1usize..=6, values in prop::collection::vec(-10.0..10.0f64, 18)) {
        let l = LossMatrix::new(k, n, values[..k * n].to_vec()).unwrap();
        let s = lloyd_step(&l).unwrap();
        prop_assert_eq!(s.n(), n);
        prop_assert!(s.as_slice().iter().all(|&j| j < k));
        prop_assert_eq!(s.counts().iter().sum::<usize>(), n);
        let after = l.masked_sum(&s);
        for code in 0..k.pow(n as u32) {
            let mut c = code;
            let assign: Vec<usize> = (0..n).map(|_| { let j = c % k; c /= k; j }).collect();
            prop_assert!(after <= l.masked_sum(&AssignmentMatrix::new(k, assign).unwrap()) + 1e-12);
        }
    }

    #[test]
    fn kmeanspp_is_reproducible(seed in any::<u64>(), values in prop::collection::vec(-5.0..5.0f64, 40)) {
        let x = matrix(values, 20);
        prop_assert_eq!(kmeanspp_init(&x, 3, seed).unwrap(), kmeanspp_init(&x, 3, seed).unwrap());
    }

    #[test]
    fn centers_follow_cluster_relabeling(values in prop::collection::vec(-5.0..5.0f64, 24), assign in prop::collection::vec(0usize..3, 12)) {
        let x = matrix(values, 12);
        let perm = [2usize, 0, 1];
        let s = AssignmentMatrix::new(3, assign.clone()).unwrap();
        let relabeled = AssignmentMatrix::new(3, assign.iter().map(|&j| perm[j]).collect()).unwrap();
        let a = compute_centers(&x, &s, None);
        let b = compute_centers(&x, &relabeled, None);
        for (j, &p) in perm.iter().enumerate() {
            prop_assert_eq!(a.center(j), b.center(p));
        }
    }

    #[test]
    fn reconstruction_entries_are_nonnegative_without_penalty(seed in any::<u64>(), values in prop::collection::vec(-3.0..3.0f64, 30)) {
        let x = matrix(values, 6);
        let mut model = PtaeModel::build(ReconArch::Ptae, 5, 2, &mut rng(seed)).unwrap();
        model.update_centers(&x, &AssignmentMatrix::new(2, vec![0, 1, 0, 1, 0, 1]).unwrap());
        let l = model.loss_matrix(&x).unwrap();
        for j in 0..2 {
            prop_assert!(l.row(j).iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn ptae_matches_ae3_in_size_and_undercuts_tae2(d in 2usize..40, c in 1usize..8, seed in any::<u64>()) {
        let mut r = rng(seed);
        let ptae = count(&PtaeModel::build(ReconArch::Ptae, d, c, &mut r).unwrap());
        let ae3 = count(&PtaeModel::build(ReconArch::Ae3, d, c, &mut r).unwrap());
        let tae2 = count(&PtaeModel::build(ReconArch::Tae2, d, c, &mut r).unwrap());
        prop_assert_eq!(ptae, ae3);
        if c > 1 {
            prop_assert!(tae2 > ptae);
        }
    }

    #[test]
    fn kl_is_nonnegative_and_zero_only_at_prior(mu in prop::collection::vec(-4.0..4.0f64, 1..4), lv in prop::collection::vec(-6.0..3.0f64, 4)) {
        let lv = &lv[..mu.len()];
        let kl = kl_term(&mu, lv);
        prop_assert!(kl >= 0.0);
        let at_prior = mu.iter().chain(lv).all(|&v| v == 0.0);
        prop_assert_eq!(kl == 0.0, at_prior);
    }

    #[test]
    fn bce_decoder_outputs_lie_strictly_inside_unit_interval(seed in any::<u64>(), z in prop::collection::vec(-3.0..3.0f64, 2)) {
        let model = TvaeModel::build(8, 6, 2, 2, ReconMode::BceSigmoid, true, &mut rng(seed)).unwrap();
        for j in 0..2 {
            prop_assert!(model.decode(&z, j).unwrap().iter().all(|&v| v > 0.0 && v < 1.0));
        }
    }

    #[test]
    fn swapping_positives_and_negatives_negates_tcl_entries(seed in any::<u64>(), values in prop::collection::vec(-3.0..3.0f64, 32)) {
        let x = matrix(values, 8);
        let labels = [0, 0, 0, 0, 1, 1, 1, 1];
        let model = TclModel::dense(&mut rng(seed), 4, 5, 3, 2).unwrap();
        let batch = gen_pairs_supervised(&x, &labels, seed).unwrap();
        let a = model.loss_matrix(&batch).unwrap();
        let b = model.loss_matrix(&batch.swapped()).unwrap();
        for j in 0..2 {
            for i in 0..8 {
                prop_assert!((a.get(j, i) + b.get(j, i)).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn energy_is_bilinear_in_weights(seed in any::<u64>(), xc in 0usize..64, zc in 0usize..8) {
        let p = RbmParams::random(6, 3, 1.0, &mut rng(seed));
        let x: Vec<f64> = (0..6).map(|i| ((xc >> i) & 1) as f64).collect();
        let z: Vec<f64> = (0..3).map(|q| ((zc >> q) & 1) as f64).collect();
        let mut doubled = p.clone();
        doubled.w.as_mut_slice().iter_mut().for_each(|w| *w *= 2.0);
        let xwz: f64 = (0..6).map(|i| (0..3).map(|q| x[i] * p.w.as_slice()[i * 3 + q] * z[q]).sum::<f64>()).sum();
        let diff = doubled.energy(&x, &z).unwrap() - p.energy(&x, &z).unwrap();
        prop_assert!((diff + xwz).abs() < 1e-12);
    }

    #[test]
    fn rbm_probabilities_are_normalized(seed in any::<u64>(), d in 1usize..=10, h in 1usize..=4) {
        let p = RbmParams::random(d, h, 0.7, &mut rng(seed));
        let log_a = p.log_partition().unwrap();
        let total: f64 = (0..1usize << d)
            .map(|c| {
                let x: Vec<f64> = (0..d).map(|i| ((c >> i) & 1) as f64).collect();
                (-p.free_energy(&x).unwrap() - log_a).exp()
            })
            .sum();
        prop_assert!((total - 1.0).abs() < 1e-8);
    }

    #[test]
    fn contrastive_divergence_is_reproducible(seed in any::<u64>()) {
        let p = RbmParams::random(6, 3, 0.5, &mut rng(seed));
        let batch = matrix((0..30).map(|i| ((seed >> (i % 60)) & 1) as f64).collect(), 5);
        let a = cd_gradient(&p, &batch, 1, &mut rng(seed ^ 1)).unwrap();
        let b = cd_gradient(&p, &batch, 1, &mut rng(seed ^ 1)).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn generators_are_seeded_and_sized(seed in any::<u64>(), which in 0usize..7) {
        let kind = SyntheticKind::ALL[which];
        let (n, d, c) = kind.dims();
        let a = gen_synthetic(kind, seed);
        prop_assert_eq!(a.x.shape(), &[n, d]);
        prop_assert_eq!(a.num_classes(), Some(c));
        prop_assert_eq!(a.x, gen_synthetic(kind, seed).x);
    }

    #[test]
    fn ari_is_symmetric((a, b) in labelings(30)) {
        prop_assert!((ari(&a, &b).unwrap() - ari(&b, &a).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ari_ignores_label_names((a, b) in labelings(30), perm in Just([3usize, 0, 2, 1]).prop_shuffle()) {
        let renamed: Vec<usize> = a.iter().map(|&v| perm[v] + 10).collect();
        prop_assert!((ari(&a, &b).unwrap() - ari(&renamed, &b).unwrap()).abs() < 1e-12);
        prop_assert!((ari(&b, &a).unwrap() - ari(&b, &renamed).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn idx_round_trip_is_exact(pixels in prop::collection::vec(any::<u8>(), 2 * 6), seed in any::<u64>()) {
        let dir = tempfile::tempdir().unwrap();
        let (img, lab) = (dir.path().join("img"), dir.path().join("lab"));
        let labels = [(seed % 2) as u8, 1 - (seed % 2) as u8];
        write_idx(&img, &lab, 2, 3, &pixels, &labels).unwrap();
        let ds = load_idx(&img, &lab, &[0, 1], 1).unwrap();
        for (v, p) in ds.x.as_slice().iter().zip(&pixels) {
            prop_assert_eq!(*v, *p as f64 / 255.0);
        }
    }

    #[test]
    fn elastic_without_displacement_is_identity(img in prop::collection::vec(0.0..1.0f64, 64), sigma in 0.5..5.0f64, seed in any::<u64>()) {
        let out = elastic_transform(&img, 8, 8, 0.0, sigma, seed).unwrap();
        prop_assert!(img.iter().zip(&out).all(|(a, b)| a.to_bits() == b.to_bits()));
    }
}
