//! Datasets: synthetic generators, CSV and IDX loaders, noise injection.

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Tensor;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const SEGMENT_HALF_LENGTH: f64 = 1.0;
const JITTER_STD: f64 = 0.05;
const CENTER_GAP: f64 = 3.0;
const ROTATION_SEED: u64 = 0x0005_EED0;

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub x: Tensor,
    pub labels: Option<Vec<usize>>,
    pub name: String,
    pub seed: Option<u64>,
    pub source: Option<PathBuf>,
    /// Per-feature `(min, max)` used to map features onto `[0, 1]`.
    pub scale_info: Option<Vec<(f64, f64)>>,
    /// Rows dropped by a loader because of missing values.
    pub dropped_rows: usize,
    /// `(height, width)` when rows are flattened single-channel images.
    pub image_shape: Option<(usize, usize)>,
}

impl Dataset {
    pub fn new(x: Tensor, labels: Option<Vec<usize>>, name: impl Into<String>) -> Result<Self> {
        if x.shape().len() != 2 {
            return Err(Error::shape("dataset", "n x d", format!("{:?}", x.shape())));
        }
        if let Some(l) = &labels {
            if l.len() != x.rows() {
                return Err(Error::shape("dataset labels", x.rows(), l.len()));
            }
        }
        Ok(Dataset {
            x,
            labels,
            name: name.into(),
            seed: None,
            source: None,
            scale_info: None,
            dropped_rows: 0,
            image_shape: None,
        })
    }

    pub fn n(&self) -> usize {
        self.x.rows()
    }

    pub fn d(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> Option<usize> {
        self.labels.as_ref().map(|l| {
            let mut seen: Vec<usize> = l.clone();
            seen.sort_unstable();
            seen.dedup();
            seen.len()
        })
    }

    /// Rows of `x` in the given order, labels carried along.
    pub fn subset(&self, rows: &[usize]) -> Result<Dataset> {
        let picked: Vec<Vec<f64>> = rows.iter().map(|&i| self.x.row(i).to_vec()).collect();
        let mut out = self.clone();
        out.x = Tensor::from_rows(&picked)?;
        out.labels = self
            .labels
            .as_ref()
            .map(|l| rows.iter().map(|&i| l[i]).collect());
        Ok(out)
    }

    /// Min-max scales every feature onto `[0, 1]` and records the ranges.
    /// Constant features map to 0.
    pub fn scale_unit(&mut self) {
        let (n, d) = (self.n(), self.d());
        let mut info = vec![(f64::INFINITY, f64::NEG_INFINITY); d];
        for row in self.x.iter_rows() {
            for (r, &v) in info.iter_mut().zip(row) {
                r.0 = r.0.min(v);
                r.1 = r.1.max(v);
            }
        }
        let data = self.x.as_mut_slice();
        for i in 0..n {
            for (f, &(lo, hi)) in info.iter().enumerate() {
                let v = &mut data[i * d + f];
                *v = if hi > lo { (*v - lo) / (hi - lo) } else { 0.0 };
            }
        }
        self.scale_info = Some(info);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SyntheticKind {
    ParallelLines,
    Lines3d,
    Orthogonal,
    Triangle,
    /// Three 2-D Gaussian components lifted into 10 dimensions.
    Mixture,
    /// Two separated isotropic Gaussian blobs in 4 dimensions.
    Blobs,
    /// Two binary pattern families on disjoint halves of 8 units.
    BinaryFamilies,
}

impl SyntheticKind {
    pub const ALL: [SyntheticKind; 7] = [
        SyntheticKind::ParallelLines,
        SyntheticKind::Lines3d,
        SyntheticKind::Orthogonal,
        SyntheticKind::Triangle,
        SyntheticKind::Mixture,
        SyntheticKind::Blobs,
        SyntheticKind::BinaryFamilies,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SyntheticKind::ParallelLines => "parallel_lines",
            SyntheticKind::Lines3d => "lines3d",
            SyntheticKind::Orthogonal => "orthogonal",
            SyntheticKind::Triangle => "triangle",
            SyntheticKind::Mixture => "mixture",
            SyntheticKind::Blobs => "blobs",
            SyntheticKind::BinaryFamilies => "binary_families",
        }
    }

    /// `(n, d, C)`.
    pub fn dims(self) -> (usize, usize, usize) {
        match self {
            SyntheticKind::ParallelLines => (150, 5, 2),
            SyntheticKind::Lines3d => (300, 6, 3),
            SyntheticKind::Orthogonal => (150, 5, 2),
            SyntheticKind::Triangle => (150, 6, 3),
            SyntheticKind::Mixture => (300, 10, 3),
            SyntheticKind::Blobs => (100, 4, 2),
            SyntheticKind::BinaryFamilies => (40, 8, 2),
        }
    }
}

impl fmt::Display for SyntheticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SyntheticKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SyntheticKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown synthetic dataset '{s}'")))
    }
}

/// Haar-distributed `d × d` orthogonal matrix (row-major) from a fixed seed.
pub fn fixed_rotation(d: usize) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(ROTATION_SEED ^ d as u64);
    let mut q: Vec<Vec<f64>> = Vec::with_capacity(d);
    while q.len() < d {
        let mut v: Vec<f64> = (0..d).map(|_| StandardNormal.sample(&mut rng)).collect();
        for u in &q {
            let p = crate::nn::dot(&v, u);
            v.iter_mut().zip(u).for_each(|(a, b)| *a -= p * b);
        }
        let norm = crate::nn::sq_norm(&v).sqrt();
        if norm > 1e-8 {
            v.iter_mut().for_each(|a| *a /= norm);
            q.push(v);
        }
    }
    q.concat()
}

/// Each cluster is `center + t·direction`, `t ~ U(-1, 1)`, in a low-dimensional
/// frame; points are zero-padded to `d`, rotated, then jittered.
struct LineSpec {
    center: Vec<f64>,
    direction: Vec<f64>,
    count: usize,
}

fn lines_dataset(kind: SyntheticKind, lines: &[LineSpec], d: usize, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let jitter = Normal::new(0.0, JITTER_STD).expect("valid std");
    let q = fixed_rotation(d);
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    for (c, line) in lines.iter().enumerate() {
        for _ in 0..line.count {
            let t = rng.random_range(-SEGMENT_HALF_LENGTH..SEGMENT_HALF_LENGTH);
            let mut p = vec![0.0; d];
            for (k, (cv, dv)) in line.center.iter().zip(&line.direction).enumerate() {
                p[k] = cv + t * dv;
            }
            let row: Vec<f64> = (0..d)
                .map(|r| crate::nn::dot(&q[r * d..(r + 1) * d], &p) + jitter.sample(&mut rng))
                .collect();
            rows.push(row);
            labels.push(c);
        }
    }
    finish(kind, rows, labels, seed)
}

fn finish(kind: SyntheticKind, rows: Vec<Vec<f64>>, labels: Vec<usize>, seed: u64) -> Dataset {
    let x = Tensor::from_rows(&rows).expect("generator rows are rectangular");
    let mut ds = Dataset::new(x, Some(labels), kind.name()).expect("labels match rows");
    ds.seed = Some(seed);
    ds
}

fn line(center: &[f64], direction: &[f64], count: usize) -> LineSpec {
    LineSpec {
        center: center.to_vec(),
        direction: direction.to_vec(),
        count,
    }
}

/// Deterministic per `(kind, seed)`; shapes per [`SyntheticKind::dims`].
pub fn gen_synthetic(kind: SyntheticKind, seed: u64) -> Dataset {
    let g = CENTER_GAP;
    let (_, d, _) = kind.dims();
    match kind {
        // Shared direction, centers offset perpendicular to it: the global
        // principal direction is the offset, not the within-cluster trend.
        SyntheticKind::ParallelLines => lines_dataset(
            kind,
            &[
                line(&[0.0, 0.0], &[1.0, 0.0], 75),
                line(&[0.0, g], &[1.0, 0.0], 75),
            ],
            d,
            seed,
        ),
        SyntheticKind::Orthogonal => lines_dataset(
            kind,
            &[
                line(&[0.0, 0.0], &[1.0, 0.0], 75),
                line(&[g, 0.0], &[0.0, 1.0], 75),
            ],
            d,
            seed,
        ),
        SyntheticKind::Lines3d => {
            let h = g * 3f64.sqrt() / 2.0;
            lines_dataset(
                kind,
                &[
                    line(&[0.0, 0.0, 0.0], &[1.0, 0.0, 0.0], 100),
                    line(&[g, 0.0, 0.0], &[0.0, 1.0, 0.0], 100),
                    line(&[g / 2.0, h, 0.0], &[0.0, 0.0, 1.0], 100),
                ],
                d,
                seed,
            )
        }
        // Middle pieces of the three edges of an equilateral triangle whose
        // edge midpoints are `g` apart.
        SyntheticKind::Triangle => {
            let side = 2.0 * g;
            let verts = [
                [0.0, 0.0],
                [side, 0.0],
                [side / 2.0, side * 3f64.sqrt() / 2.0],
            ];
            let specs: Vec<LineSpec> = (0..3)
                .map(|e| {
                    let (a, b) = (verts[e], verts[(e + 1) % 3]);
                    let mid = [(a[0] + b[0]) / 2.0, (a[1] + b[1]) / 2.0];
                    let dir = [(b[0] - a[0]) / side, (b[1] - a[1]) / side];
                    line(&mid, &dir, 50)
                })
                .collect();
            lines_dataset(kind, &specs, d, seed)
        }
        SyntheticKind::Mixture => mixture_lifted(seed),
        SyntheticKind::Blobs => blobs(seed),
        SyntheticKind::BinaryFamilies => binary_families(seed),
    }
}

fn mixture_lifted(seed: u64) -> Dataset {
    let (n, d, c) = SyntheticKind::Mixture.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 0.5).expect("valid std");
    let q = fixed_rotation(d);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for comp in 0..c {
        let angle = 2.0 * std::f64::consts::PI * comp as f64 / c as f64;
        let mean = [CENTER_GAP * angle.cos(), CENTER_GAP * angle.sin()];
        for _ in 0..n / c {
            let mut p = vec![0.0; d];
            p[0] = mean[0] + spread.sample(&mut rng);
            p[1] = mean[1] + spread.sample(&mut rng);
            rows.push(
                (0..d)
                    .map(|r| crate::nn::dot(&q[r * d..(r + 1) * d], &p))
                    .collect(),
            );
            labels.push(comp);
        }
    }
    finish(SyntheticKind::Mixture, rows, labels, seed)
}

fn blobs(seed: u64) -> Dataset {
    let (n, d, c) = SyntheticKind::Blobs.dims();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spread = Normal::new(0.0, 0.5).expect("valid std");
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for comp in 0..c {
        let sign = if comp == 0 { -1.0 } else { 1.0 };
        for _ in 0..n / c {
            rows.push(
                (0..d)
                    .map(|_| sign * CENTER_GAP / 2.0 + spread.sample(&mut rng))
                    .collect(),
            );
            labels.push(comp);
        }
    }
    finish(SyntheticKind::Blobs, rows, labels, seed)
}

/// Family `f` lights units in half `f` independently with probability 0.7
/// (never all off) and leaves the other half dark.
fn binary_families(seed: u64) -> Dataset {
    let (n, d, c) = SyntheticKind::BinaryFamilies.dims();
    let half = d / 2;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rows = Vec::with_capacity(n);
    let mut labels = Vec::with_capacity(n);
    for fam in 0..c {
        for _ in 0..n / c {
            let mut row = vec![0.0; d];
            loop {
                for v in &mut row[fam * half..(fam + 1) * half] {
                    *v = if rng.random::<f64>() < 0.7 { 1.0 } else { 0.0 };
                }
                if row.contains(&1.0) {
                    break;
                }
            }
            rows.push(row);
            labels.push(fam);
        }
    }
    finish(SyntheticKind::BinaryFamilies, rows, labels, seed)
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CsvOptions {
    pub label_column: Option<String>,
    /// Feature columns to keep; all non-label columns when `None`.
    pub feature_columns: Option<Vec<String>>,
}

fn is_missing(field: &str) -> bool {
    matches!(field.trim(), "" | "NA" | "N/A" | "NaN" | "nan" | "?" | ".")
}

/// Reads a headered CSV. Rows with a missing feature or label are dropped and
/// counted in [`Dataset::dropped_rows`]; labels map to 0-based integers in
/// sorted order of their string values.
pub fn load_csv(path: &Path, opts: &CsvOptions) -> Result<Dataset> {
    let io_err = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Format {
            path: path.to_path_buf(),
            message: format!("{other:?}"),
        },
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(io_err)?;
    let header: Vec<String> = reader
        .headers()
        .map_err(io_err)?
        .iter()
        .map(str::to_string)
        .collect();
    let format_err = |message: String| Error::Format {
        path: path.to_path_buf(),
        message,
    };
    let col = |name: &str| {
        header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| format_err(format!("no column named '{name}'")))
    };
    let label_idx = opts.label_column.as_deref().map(col).transpose()?;
    let feature_idx: Vec<usize> = match &opts.feature_columns {
        Some(names) => names.iter().map(|n| col(n)).collect::<Result<_>>()?,
        None => (0..header.len())
            .filter(|&i| Some(i) != label_idx)
            .collect(),
    };
    if feature_idx.is_empty() {
        return Err(format_err("no feature columns".into()));
    }

    let mut rows = Vec::new();
    let mut raw_labels = Vec::new();
    let mut dropped = 0;
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(io_err)?;
        let mut needed = feature_idx.clone();
        needed.extend(label_idx);
        if needed.iter().any(|&i| record.get(i).is_none_or(is_missing)) {
            dropped += 1;
            continue;
        }
        let row = feature_idx
            .iter()
            .map(|&i| {
                let field = &record[i];
                field.parse::<f64>().map_err(|_| {
                    format_err(format!(
                        "line {}: column '{}' is not numeric: '{field}'",
                        line + 2,
                        header[i]
                    ))
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        rows.push(row);
        if let Some(li) = label_idx {
            raw_labels.push(record[li].to_string());
        }
    }
    if rows.is_empty() {
        return Err(format_err("no usable rows".into()));
    }
    let labels = label_idx.map(|_| {
        let ids: BTreeMap<&str, usize> = {
            let mut uniq: Vec<&str> = raw_labels.iter().map(String::as_str).collect();
            uniq.sort_unstable();
            uniq.dedup();
            uniq.into_iter().enumerate().map(|(i, s)| (s, i)).collect()
        };
        raw_labels.iter().map(|s| ids[s.as_str()]).collect()
    });
    let name = path
        .file_stem()
        .map_or("csv".into(), |s| s.to_string_lossy().into_owned());
    let mut ds = Dataset::new(Tensor::from_rows(&rows)?, labels, name)?;
    ds.source = Some(path.to_path_buf());
    ds.dropped_rows = dropped;
    Ok(ds)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn be_u32(bytes: &[u8], at: usize, path: &Path) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: "truncated header".into(),
        })
}

/// Parsed IDX images: `(rows, cols, pixel bytes)`.
fn parse_idx_images(bytes: &[u8], path: &Path) -> Result<(usize, usize, usize)> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("bad image magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    let h = be_u32(bytes, 8, path)? as usize;
    let w = be_u32(bytes, 12, path)? as usize;
    if bytes.len() < 16 + n * h * w {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!(
                "truncated: expected {} pixel bytes, found {}",
                n * h * w,
                bytes.len() - 16
            ),
        });
    }
    Ok((n, h, w))
}

fn parse_idx_labels(bytes: &[u8], path: &Path) -> Result<usize> {
    let magic = be_u32(bytes, 0, path)?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("bad label magic {magic:#010x}"),
        });
    }
    let n = be_u32(bytes, 4, path)? as usize;
    if bytes.len() < 8 + n {
        return Err(Error::Format {
            path: path.to_path_buf(),
            message: format!("truncated: expected {n} labels, found {}", bytes.len() - 8),
        });
    }
    Ok(n)
}

/// Loads the first `per_class` images of each requested class, in file
/// order, with pixels scaled to `[0, 1]`. Labels keep their original values.
pub fn load_idx(images: &Path, labels: &Path, classes: &[u8], per_class: usize) -> Result<Dataset> {
    let img = read_file(images)?;
    let lab = read_file(labels)?;
    let (n, h, w) = parse_idx_images(&img, images)?;
    let n_labels = parse_idx_labels(&lab, labels)?;
    if n != n_labels {
        return Err(Error::Format {
            path: labels.to_path_buf(),
            message: format!("{n_labels} labels for {n} images"),
        });
    }
    let d = h * w;
    let mut taken: BTreeMap<u8, usize> = classes.iter().map(|&c| (c, 0)).collect();
    let mut data = Vec::with_capacity(classes.len() * per_class * d);
    let mut out_labels = Vec::new();
    for (i, &label) in lab[8..8 + n].iter().enumerate() {
        if let Some(count) = taken.get_mut(&label) {
            if *count < per_class {
                *count += 1;
                data.extend(
                    img[16 + i * d..16 + (i + 1) * d]
                        .iter()
                        .map(|&p| p as f64 / 255.0),
                );
                out_labels.push(label as usize);
            }
        }
    }
    if let Some((class, count)) = taken.iter().find(|(_, &c)| c < per_class) {
        return Err(Error::invalid(format!(
            "class {class} has only {count} images, {per_class} requested"
        )));
    }
    let rows = out_labels.len();
    let mut ds = Dataset::new(Tensor::new(vec![rows, d], data)?, Some(out_labels), "mnist")?;
    ds.source = Some(images.to_path_buf());
    ds.scale_info = Some(vec![(0.0, 255.0); d]);
    ds.image_shape = Some((h, w));
    Ok(ds)
}

/// Writes an IDX image file and its label file.
pub fn write_idx(
    images: &Path,
    labels: &Path,
    height: usize,
    width: usize,
    pixels: &[u8],
    label_bytes: &[u8],
) -> Result<()> {
    let n = label_bytes.len();
    if pixels.len() != n * height * width {
        return Err(Error::shape("idx pixels", n * height * width, pixels.len()));
    }
    let write = |path: &Path, header: &[u32], body: &[u8]| -> Result<()> {
        let io = |source| Error::Io {
            path: path.to_path_buf(),
            source,
        };
        let mut f = fs::File::create(path).map_err(io)?;
        for v in header {
            f.write_all(&v.to_be_bytes()).map_err(io)?;
        }
        f.write_all(body).map_err(io)
    };
    write(
        images,
        &[IDX_IMAGES_MAGIC, n as u32, height as u32, width as u32],
        pixels,
    )?;
    write(labels, &[IDX_LABELS_MAGIC, n as u32], label_bytes)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NoiseScale {
    #[default]
    Variance,
    StdDev,
}

impl FromStr for NoiseScale {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "variance" => Ok(NoiseScale::Variance),
            "stddev" => Ok(NoiseScale::StdDev),
            _ => Err(Error::invalid(format!("unknown noise scale '{s}'"))),
        }
    }
}

impl NoiseScale {
    pub fn name(self) -> &'static str {
        match self {
            NoiseScale::Variance => "variance",
            NoiseScale::StdDev => "stddev",
        }
    }
}

/// `x + ε` with i.i.d. `ε ~ N(0, σ²)`, `σ² = param` or `σ = param`.
pub fn add_noise(x: &Tensor, param: f64, scale: NoiseScale, seed: u64) -> Result<Tensor> {
    if !(param >= 0.0 && param.is_finite()) {
        return Err(Error::invalid(format!(
            "noise parameter must be >= 0, got {param}"
        )));
    }
    let std = match scale {
        NoiseScale::Variance => param.sqrt(),
        NoiseScale::StdDev => param,
    };
    if std == 0.0 {
        return Ok(x.clone());
    }
    let normal = Normal::new(0.0, std).expect("checked std");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = x
        .as_slice()
        .iter()
        .map(|v| v + normal.sample(&mut rng))
        .collect();
    Tensor::new(x.shape().to_vec(), data)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_shapes() {
        for kind in SyntheticKind::ALL {
            let ds = gen_synthetic(kind, 3);
            let (n, d, c) = kind.dims();
            assert_eq!((ds.n(), ds.d()), (n, d), "{kind}");
            assert_eq!(ds.num_classes(), Some(c), "{kind}");
            let labels = ds.labels.as_ref().unwrap();
            for class in 0..c {
                assert_eq!(labels.iter().filter(|&&l| l == class).count(), n / c);
            }
        }
    }

    #[test]
    fn generators_are_seeded() {
        assert_eq!(
            gen_synthetic(SyntheticKind::Triangle, 5),
            gen_synthetic(SyntheticKind::Triangle, 5)
        );
        assert_ne!(
            gen_synthetic(SyntheticKind::Triangle, 5).x,
            gen_synthetic(SyntheticKind::Triangle, 6).x
        );
    }

    #[test]
    fn rotation_is_orthogonal() {
        let d = 6;
        let q = fixed_rotation(d);
        for a in 0..d {
            for b in 0..d {
                let p = crate::nn::dot(&q[a * d..(a + 1) * d], &q[b * d..(b + 1) * d]);
                assert!((p - if a == b { 1.0 } else { 0.0 }).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn binary_families_are_disjoint() {
        let ds = gen_synthetic(SyntheticKind::BinaryFamilies, 0);
        for (row, &l) in ds.x.iter_rows().zip(ds.labels.as_ref().unwrap()) {
            let (lo, hi) = row.split_at(4);
            let (own, other) = if l == 0 { (lo, hi) } else { (hi, lo) };
            assert!(own.contains(&1.0));
            assert!(other.iter().all(|&v| v == 0.0));
        }
    }

    #[test]
    fn zero_noise_is_identity() {
        let x = gen_synthetic(SyntheticKind::Orthogonal, 1).x;
        assert_eq!(add_noise(&x, 0.0, NoiseScale::Variance, 4).unwrap(), x);
        assert!(add_noise(&x, -1.0, NoiseScale::StdDev, 4).is_err());
    }

    #[test]
    fn scale_unit_maps_to_range() {
        let mut ds = Dataset::new(
            Tensor::from_rows(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap(),
            None,
            "t",
        )
        .unwrap();
        ds.scale_unit();
        assert_eq!(ds.x.as_slice(), &[0.0, 0.0, 1.0, 0.0]);
        assert_eq!(ds.scale_info, Some(vec![(1.0, 3.0), (5.0, 5.0)]));
    }

    #[test]
    fn unknown_kind() {
        assert!("spiral".parse::<SyntheticKind>().is_err());
        assert_eq!(
            "lines3d".parse::<SyntheticKind>().unwrap(),
            SyntheticKind::Lines3d
        );
    }
}
