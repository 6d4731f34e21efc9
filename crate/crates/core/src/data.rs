//! Datasets: IDX-format MNIST loading (scaled to [0,1], zero-padded to
//! 32×32), a synthetic labeled Gaussian mixture for desk-scale runs, and
//! deterministic plain/stratified batch iteration.

use std::io::Read;
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::Rng;
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Images [n×C×H×W], optional labels, and the normalization applied at load
/// time, recorded as (shift, scale): stored = (raw + shift) · scale.
#[derive(Debug, Clone)]
pub struct Dataset<S: Scalar> {
    pub images: Tensor<S>,
    pub labels: Option<Vec<usize>>,
    pub num_classes: usize,
    pub shift: f64,
    pub scale: f64,
}

impl<S: Scalar> Dataset<S> {
    pub fn len(&self) -> usize {
        self.images.shape()[0]
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Copy the selected rows into a fresh [k×C×H×W] batch tensor.
    pub fn gather_images(&self, idx: &[usize]) -> Result<Tensor<S>> {
        let shape = self.images.shape();
        let row = shape[1..].iter().product::<usize>();
        let mut out_shape = shape.to_vec();
        out_shape[0] = idx.len();
        let mut out = Tensor::zeros(&out_shape);
        for (i, &src) in idx.iter().enumerate() {
            if src >= shape[0] {
                return Err(Error::Data(format!("index {src} out of range [0, {})", shape[0])));
            }
            out.data_mut()[i * row..(i + 1) * row]
                .copy_from_slice(&self.images.data()[src * row..(src + 1) * row]);
        }
        Ok(out)
    }

    pub fn gather_labels(&self, idx: &[usize]) -> Result<Vec<usize>> {
        let labels = self
            .labels
            .as_ref()
            .ok_or_else(|| Error::Data("dataset has no labels".into()))?;
        idx.iter()
            .map(|&i| {
                labels
                    .get(i)
                    .copied()
                    .ok_or_else(|| Error::Data(format!("label index {i} out of range")))
            })
            .collect()
    }
}

// ── IDX parsing ──────────────────────────────────────────────────────────────

const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32(buf: &[u8], pos: &mut usize, what: &str) -> Result<u32> {
    let end = *pos + 4;
    if end > buf.len() {
        return Err(Error::Data(format!("truncated IDX file while reading {what}")));
    }
    let v = u32::from_be_bytes(buf[*pos..end].try_into().unwrap());
    *pos = end;
    Ok(v)
}

fn read_file(path: &Path) -> Result<Vec<u8>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?
        .read_to_end(&mut buf)
        .map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    Ok(buf)
}

/// Parse an IDX image file into (count, rows, cols, pixels).
fn parse_idx_images(buf: &[u8]) -> Result<(usize, usize, usize, &[u8])> {
    let mut pos = 0;
    let magic = read_u32(buf, &mut pos, "image magic")?;
    if magic != IDX_IMAGES_MAGIC {
        return Err(Error::Data(format!(
            "bad IDX image magic {magic:#010x}, expected {IDX_IMAGES_MAGIC:#010x}"
        )));
    }
    let n = read_u32(buf, &mut pos, "image count")? as usize;
    let rows = read_u32(buf, &mut pos, "row count")? as usize;
    let cols = read_u32(buf, &mut pos, "column count")? as usize;
    let need = n * rows * cols;
    if buf.len() - pos < need {
        return Err(Error::Data(format!(
            "truncated IDX image payload: need {need} bytes, have {}",
            buf.len() - pos
        )));
    }
    Ok((n, rows, cols, &buf[pos..pos + need]))
}

fn parse_idx_labels(buf: &[u8]) -> Result<(usize, &[u8])> {
    let mut pos = 0;
    let magic = read_u32(buf, &mut pos, "label magic")?;
    if magic != IDX_LABELS_MAGIC {
        return Err(Error::Data(format!(
            "bad IDX label magic {magic:#010x}, expected {IDX_LABELS_MAGIC:#010x}"
        )));
    }
    let n = read_u32(buf, &mut pos, "label count")? as usize;
    if buf.len() - pos < n {
        return Err(Error::Data(format!(
            "truncated IDX label payload: need {n} bytes, have {}",
            buf.len() - pos
        )));
    }
    Ok((n, &buf[pos..pos + n]))
}

/// Build the dataset from raw IDX bytes: scale pixels by 1/255 (no mean
/// centering) and zero-pad each 28×28 image to 32×32 (2 px on each side).
/// Other square sizes pass through unpadded.
pub fn dataset_from_idx_bytes<S: Scalar>(images: &[u8], labels: &[u8]) -> Result<Dataset<S>> {
    let (n, rows, cols, px) = parse_idx_images(images)?;
    let (ln, lab) = parse_idx_labels(labels)?;
    if ln != n {
        return Err(Error::Data(format!("{n} images but {ln} labels")));
    }
    let (out_h, out_w, pad) = if rows == 28 && cols == 28 { (32, 32, 2) } else { (rows, cols, 0) };
    let mut imgs = Tensor::zeros(&[n, 1, out_h, out_w]);
    for i in 0..n {
        for r in 0..rows {
            for c in 0..cols {
                let v = px[(i * rows + r) * cols + c] as f64 / 255.0;
                imgs.data_mut()[(i * out_h + r + pad) * out_w + c + pad] = S::from_f64(v);
            }
        }
    }
    let labels: Vec<usize> = lab.iter().map(|&b| b as usize).collect();
    let num_classes = labels.iter().copied().max().map_or(0, |m| m + 1);
    Ok(Dataset { images: imgs, labels: Some(labels), num_classes, shift: 0.0, scale: 1.0 / 255.0 })
}

/// Load the classic two-file IDX pair from disk.
pub fn load_mnist_idx<S: Scalar>(images_path: &Path, labels_path: &Path) -> Result<Dataset<S>> {
    let images = read_file(images_path)?;
    let labels = read_file(labels_path)?;
    dataset_from_idx_bytes(&images, &labels)
}

/// Resolve the MNIST directory: `REVGEN_MNIST_DIR` env override, else the
/// given default.
pub fn mnist_dir(default: &str) -> std::path::PathBuf {
    match std::env::var("REVGEN_MNIST_DIR") {
        Ok(d) if !d.is_empty() => std::path::PathBuf::from(d),
        _ => std::path::PathBuf::from(default),
    }
}

/// Load train or test split from a directory holding the four standard files.
pub fn load_mnist_split<S: Scalar>(dir: &Path, train: bool) -> Result<Dataset<S>> {
    let (imgs, labs) = if train {
        ("train-images-idx3-ubyte", "train-labels-idx1-ubyte")
    } else {
        ("t10k-images-idx3-ubyte", "t10k-labels-idx1-ubyte")
    };
    load_mnist_idx(&dir.join(imgs), &dir.join(labs))
}

// ── Synthetic mixture ────────────────────────────────────────────────────────

/// Labeled draws from well-separated Gaussians whose means sit on a circle in
/// the first two pixel coordinates (radius 3, per-pixel noise σ = 0.1).
/// Labels cycle 0,1,…,classes−1 so every prefix is near-balanced.
pub fn synth_gaussian_mixture<S: Scalar>(
    rng: &mut Rng,
    n: usize,
    classes: usize,
    side: usize,
) -> Result<Dataset<S>> {
    if classes == 0 || side * side < 2 {
        return Err(Error::Config(format!(
            "mixture needs ≥ 1 class and ≥ 2 pixels, got {classes} classes, side {side}"
        )));
    }
    let d = side * side;
    let radius = 3.0;
    let noise = 0.1;
    let mut images = Tensor::zeros(&[n, 1, side, side]);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % classes;
        labels.push(class);
        let theta = 2.0 * std::f64::consts::PI * class as f64 / classes as f64;
        let (cx, cy) = (radius * theta.cos(), radius * theta.sin());
        for j in 0..d {
            let mean = match j {
                0 => cx,
                1 => cy,
                _ => 0.0,
            };
            images.data_mut()[i * d + j] = S::from_f64(mean + noise * rng.normal());
        }
    }
    Ok(Dataset { images, labels: Some(labels), num_classes: classes, shift: 0.0, scale: 1.0 })
}

// ── Batch iteration ──────────────────────────────────────────────────────────

/// Index batches for one epoch. Plain mode shuffles 0..n and chunks it, so
/// every example appears exactly once (the tail batch may be short).
/// Stratified mode shuffles each class's indices and deals equal per-class
/// quotas into each batch; `batch` must divide by the class count, and
/// trailing examples beyond the smallest class's whole quota are dropped to
/// keep every batch balanced.
pub fn batch_iterator<S: Scalar>(
    dataset: &Dataset<S>,
    batch: usize,
    rng: &mut Rng,
    stratified: bool,
) -> Result<Vec<Vec<usize>>> {
    let n = dataset.len();
    if batch == 0 || n == 0 {
        return Err(Error::Config(format!("batch {batch} over {n} examples")));
    }
    if !stratified {
        let mut order: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut order);
        return Ok(order.chunks(batch).map(|c| c.to_vec()).collect());
    }
    let labels = dataset
        .labels
        .as_ref()
        .ok_or_else(|| Error::Config("stratified batching requires labels".into()))?;
    let classes = dataset.num_classes;
    if classes == 0 || batch % classes != 0 {
        return Err(Error::Config(format!(
            "batch {batch} must be a multiple of the class count {classes}"
        )));
    }
    let quota = batch / classes;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        if l >= classes {
            return Err(Error::Data(format!("label {l} exceeds class count {classes}")));
        }
        per_class[l].push(i);
    }
    for list in per_class.iter_mut() {
        rng.shuffle(list);
    }
    let min_count = per_class.iter().map(Vec::len).min().unwrap_or(0);
    let num_batches = min_count / quota;
    if num_batches == 0 {
        return Err(Error::Config(format!(
            "smallest class has {min_count} examples, fewer than the per-class quota {quota}"
        )));
    }
    let mut batches = Vec::with_capacity(num_batches);
    for b in 0..num_batches {
        let mut ids = Vec::with_capacity(batch);
        for list in per_class.iter() {
            ids.extend_from_slice(&list[b * quota..(b + 1) * quota]);
        }
        batches.push(ids);
    }
    Ok(batches)
}
