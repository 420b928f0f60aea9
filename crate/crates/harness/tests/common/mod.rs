//! Shared fixtures for the harness integration tests.
#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::Command;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const SIDE: usize = 28;

/// Stroke pattern of a synthetic digit class: a bar at a class-specific
/// angle, plus a ring for even classes.
fn draw(class: u8, rng: &mut ChaCha8Rng) -> Vec<u8> {
    let mut img = vec![0u8; SIDE * SIDE];
    let angle = f64::from(class) * std::f64::consts::PI / 10.0;
    let (dx, dy) = (angle.cos(), angle.sin());
    let shift: (f64, f64) = (rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5));
    let c = SIDE as f64 / 2.0;
    for r in 0..SIDE {
        for col in 0..SIDE {
            let (x, y) = (col as f64 - c - shift.0, r as f64 - c - shift.1);
            let along = x * dx + y * dy;
            let across = -x * dy + y * dx;
            let bar = along.abs() < 9.0 && across.abs() < 1.6;
            let radius = (x * x + y * y).sqrt();
            let ring =
                class.is_multiple_of(2) && (radius - 7.0 - f64::from(class) / 4.0).abs() < 1.2;
            if bar || ring {
                img[r * SIDE + col] = rng.random_range(180..=255);
            } else if rng.random::<f64>() < 0.02 {
                img[r * SIDE + col] = rng.random_range(0..120);
            }
        }
    }
    img
}

/// Writes a 28×28 IDX image/label pair with `per_class` images of each
/// digit 0..9, classes interleaved in file order.
pub fn write_digit_fixture(dir: &Path, per_class: usize, seed: u64) -> (PathBuf, PathBuf) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pixels = Vec::with_capacity(10 * per_class * SIDE * SIDE);
    let mut labels = Vec::with_capacity(10 * per_class);
    for _ in 0..per_class {
        for class in 0..10u8 {
            pixels.extend(draw(class, &mut rng));
            labels.push(class);
        }
    }
    let images = dir.join("images-idx3-ubyte");
    let label_file = dir.join("labels-idx1-ubyte");
    tensorized::data::write_idx(&images, &label_file, SIDE, SIDE, &pixels, &labels).unwrap();
    (images, label_file)
}

/// Real MNIST training files when `TENSORIZED_MNIST_DIR` points at them.
pub fn real_mnist() -> Option<(PathBuf, PathBuf)> {
    let dir = PathBuf::from(std::env::var_os("TENSORIZED_MNIST_DIR")?);
    let images = dir.join("train-images-idx3-ubyte");
    let labels = dir.join("train-labels-idx1-ubyte");
    (images.exists() && labels.exists()).then_some((images, labels))
}

pub fn cli() -> Command {
    Command::new(env!("CARGO_BIN_EXE_tensorized"))
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let path = dir.join(name);
    std::fs::write(&path, text).unwrap();
    path
}
