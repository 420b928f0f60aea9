use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tensorized::data::{
    add_noise, fixed_rotation, gen_synthetic, load_csv, load_idx, write_idx, CsvOptions,
    NoiseScale, SyntheticKind,
};
use tensorized::nn::Tensor;
use tensorized::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

/// Leading eigenvector of the sample covariance by power iteration.
fn first_pc(rows: &[&[f64]]) -> Vec<f64> {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mean: Vec<f64> = (0..d)
        .map(|c| rows.iter().map(|r| r[c]).sum::<f64>() / n)
        .collect();
    let mut cov = vec![0.0; d * d];
    for r in rows {
        for a in 0..d {
            for b in 0..d {
                cov[a * d + b] += (r[a] - mean[a]) * (r[b] - mean[b]) / n;
            }
        }
    }
    let mut v = vec![1.0; d];
    for _ in 0..2000 {
        let w: Vec<f64> = (0..d)
            .map(|a| (0..d).map(|b| cov[a * d + b] * v[b]).sum())
            .collect();
        let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        v = w.into_iter().map(|x| x / norm).collect();
    }
    v
}

#[test]
fn parallel_lines_hide_the_shared_direction_from_global_pca() {
    let d = 5;
    let q = fixed_rotation(d);
    let shared: Vec<f64> = (0..d).map(|r| q[r * d]).collect();
    for seed in 0..5 {
        let ds = gen_synthetic(SyntheticKind::ParallelLines, seed);
        let labels = ds.labels.as_ref().unwrap();
        for c in 0..2 {
            let rows: Vec<&[f64]> = (0..ds.n())
                .filter(|&i| labels[i] == c)
                .map(|i| ds.x.row(i))
                .collect();
            let cos = tensorized::nn::dot(&first_pc(&rows), &shared).abs();
            assert!(cos > 0.99, "seed {seed} cluster {c}: |cos| {cos}");
        }
        let all: Vec<&[f64]> = ds.x.iter_rows().collect();
        let cos = tensorized::nn::dot(&first_pc(&all), &shared).abs();
        assert!(cos < 0.9, "seed {seed} global |cos| {cos}");
    }
}

#[test]
fn gaussian_noise_has_requested_variance() {
    let x = Tensor::zeros(&[1000, 100]);
    let noisy = add_noise(&x, 0.1, NoiseScale::Variance, 4).unwrap();
    let n = noisy.len() as f64;
    let mean = noisy.as_slice().iter().sum::<f64>() / n;
    let var = noisy
        .as_slice()
        .iter()
        .map(|v| (v - mean).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    assert!((var / 0.1 - 1.0).abs() < 0.03, "variance {var}");
    assert_eq!(noisy, add_noise(&x, 0.1, NoiseScale::Variance, 4).unwrap());
    let sd = add_noise(&x, 0.1, NoiseScale::StdDev, 4).unwrap();
    let var_sd = sd.as_slice().iter().map(|v| v * v).sum::<f64>() / n;
    assert!((var_sd / 0.01 - 1.0).abs() < 0.03);
}

struct IdxFiles {
    _dir: tempfile::TempDir,
    images: PathBuf,
    labels: PathBuf,
}

fn write_fixture(pixels: &[u8], labels: &[u8], h: usize, w: usize) -> IdxFiles {
    let dir = tempfile::tempdir().unwrap();
    let images = dir.path().join("images-idx3-ubyte");
    let label_path = dir.path().join("labels-idx1-ubyte");
    write_idx(&images, &label_path, h, w, pixels, labels).unwrap();
    IdxFiles {
        _dir: dir,
        images,
        labels: label_path,
    }
}

#[test]
fn idx_round_trip_recovers_pixels_in_file_order() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (n, h, w) = (40, 3, 4);
    let pixels: Vec<u8> = (0..n * h * w).map(|_| rng.random()).collect();
    let labels: Vec<u8> = (0..n).map(|_| rng.random_range(0..4)).collect();
    let f = write_fixture(&pixels, &labels, h, w);

    let wanted = [1u8, 3];
    let per_class = 3;
    let ds = load_idx(&f.images, &f.labels, &wanted, per_class).unwrap();
    let mut taken = [0usize; 4];
    let expected_rows: Vec<usize> = (0..n)
        .filter(|&i| {
            let c = labels[i] as usize;
            if wanted.contains(&labels[i]) && taken[c] < per_class {
                taken[c] += 1;
                true
            } else {
                false
            }
        })
        .collect();
    assert_eq!(ds.x.shape(), &[expected_rows.len(), h * w]);
    assert_eq!(ds.image_shape, Some((h, w)));
    for (r, &i) in expected_rows.iter().enumerate() {
        assert_eq!(ds.labels.as_ref().unwrap()[r], labels[i] as usize);
        for (v, &p) in ds.x.row(r).iter().zip(&pixels[i * h * w..(i + 1) * h * w]) {
            assert_eq!(*v, p as f64 / 255.0);
            assert_eq!((v * 255.0).round() as u8, p);
        }
    }
}

#[test]
fn idx_class_selections_have_expected_shapes() {
    let per_file = 210;
    let labels: Vec<u8> = (0..10 * per_file).map(|i| (i % 10) as u8).collect();
    let pixels = vec![7u8; labels.len() * 28 * 28];
    let f = write_fixture(&pixels, &labels, 28, 28);
    for (classes, rows) in [
        (vec![0, 1, 2, 3, 4], 1000),
        (vec![0, 1, 9], 600),
        (vec![0, 1, 3, 6, 7, 9], 1200),
    ] {
        let ds = load_idx(&f.images, &f.labels, &classes, 200).unwrap();
        assert_eq!(ds.x.shape(), &[rows, 784]);
    }
}

#[test]
fn idx_errors_are_reported() {
    let pixels = vec![0u8; 4 * 4];
    let f = write_fixture(&pixels, &[0, 0, 1, 1], 2, 2);

    let err = load_idx(&f.images, &f.labels, &[0], 3).unwrap_err();
    assert!(matches!(err, Error::InvalidArgument(_)), "{err:?}");

    let mut bytes = fs::read(&f.images).unwrap();
    bytes[3] = 0x04;
    fs::write(&f.images, &bytes).unwrap();
    assert!(matches!(
        load_idx(&f.images, &f.labels, &[0], 1),
        Err(Error::Format { .. })
    ));

    bytes[3] = 0x03;
    bytes.truncate(bytes.len() - 1);
    fs::write(&f.images, &bytes).unwrap();
    let err = load_idx(&f.images, &f.labels, &[0], 1).unwrap_err();
    assert!(err.to_string().contains("truncated"), "{err}");

    assert!(matches!(
        load_idx(&f.labels, &f.labels, &[0], 1),
        Err(Error::Format { .. })
    ));
    let missing = f.images.with_file_name("absent");
    assert!(matches!(
        load_idx(&missing, &f.labels, &[0], 1),
        Err(Error::Io { .. })
    ));
}

fn species() -> CsvOptions {
    CsvOptions {
        label_column: Some("species".into()),
        feature_columns: None,
    }
}

#[test]
fn iris_fixture_loads_with_three_classes() {
    let ds = load_csv(&fixture("iris.csv"), &species()).unwrap();
    assert_eq!(ds.x.shape(), &[150, 4]);
    assert_eq!(ds.num_classes(), Some(3));
    assert_eq!(ds.dropped_rows, 0);
    let labels = ds.labels.unwrap();
    assert_eq!((labels[0], labels[149]), (0, 2));
    assert_eq!(ds.x.row(0), &[5.1, 3.5, 1.4, 0.2]);
}

fn write_temp(contents: &str) -> (tempfile::TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("data.csv");
    fs::write(&path, contents).unwrap();
    (dir, path)
}

#[test]
fn rows_with_missing_values_are_dropped() {
    let (_dir, path) = write_temp(
        "bill,flipper,mass,sex,species\n\
         39.1,181,3750,male,Adelie\n\
         NA,NA,NA,NA,Adelie\n\
         46.5,,4200,female,Gentoo\n\
         50.0,200,4100,male,Chinstrap\n\
         45.2,210,4400,female,\n\
         47.0,215,4500,male,Gentoo\n",
    );
    let opts = CsvOptions {
        label_column: Some("species".into()),
        feature_columns: Some(vec!["bill".into(), "flipper".into(), "mass".into()]),
    };
    let ds = load_csv(&path, &opts).unwrap();
    assert_eq!(ds.x.shape(), &[3, 3]);
    assert_eq!(ds.dropped_rows, 3);
    assert_eq!(ds.labels.unwrap(), vec![0, 1, 2]);
}

#[test]
fn single_row_file_gives_one_row() {
    let (_dir, path) = write_temp("a,b,c\n1,2,3\n");
    let ds = load_csv(&path, &CsvOptions::default()).unwrap();
    assert_eq!(ds.x.shape(), &[1, 3]);
    assert!(ds.labels.is_none());
}

#[test]
fn malformed_csv_is_rejected() {
    let (_dir, path) = write_temp("a,b\n1,x\n");
    assert!(matches!(
        load_csv(&path, &CsvOptions::default()),
        Err(Error::Format { .. })
    ));
    let (_dir, path) = write_temp("a,b\n1,2\n");
    let opts = CsvOptions {
        label_column: Some("label".into()),
        feature_columns: None,
    };
    let err = load_csv(&path, &opts).unwrap_err();
    assert!(err.to_string().contains("label"), "{err}");
    let (_dir, path) = write_temp("a,b\nNA,NA\n");
    assert!(load_csv(&path, &CsvOptions::default()).is_err());
}
