//! MNIST-style datasets: IDX files, standardization, targets, and views.
//!
//! The IDX container is the classic big-endian format: images carry magic
//! `2051` followed by `count x rows x cols` bytes, labels carry magic `2049`
//! followed by `count` bytes. Files may optionally be gzip-compressed
//! (detected by a `.gz` extension).
//!
//! Preprocessing standardizes each pixel to zero mean and unit variance
//! using statistics of the *training* split only (pixels with zero variance
//! map to zero), and encodes label `k` as a sign vector with `+1` at
//! position `k` and `-1` elsewhere.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use flate2::bufread::GzDecoder;
use thiserror::Error;

use crate::predict::argmax_lowest_tie;
use crate::rng;

const IMAGES_MAGIC: u32 = 2051;
const LABELS_MAGIC: u32 = 2049;

/// Cache-file magic and version (see [`save_cache`]).
const CACHE_MAGIC: &[u8; 4] = b"EBPD";
const CACHE_VERSION: u32 = 1;

/// Standard MNIST file names (optionally with a `.gz` suffix on disk).
pub const TRAIN_IMAGES: &str = "train-images-idx3-ubyte";
pub const TRAIN_LABELS: &str = "train-labels-idx1-ubyte";
pub const TEST_IMAGES: &str = "t10k-images-idx3-ubyte";
pub const TEST_LABELS: &str = "t10k-labels-idx1-ubyte";

#[derive(Debug, Error)]
pub enum DataError {
    #[error(transparent)]
    Io(#[from] io::Error),
    #[error("{path}: not found (also tried {path}.gz)")]
    MissingFile { path: PathBuf },
    #[error("bad IDX magic: expected {expected}, found {actual}")]
    BadMagic { expected: u32, actual: u32 },
    #[error("truncated IDX payload: expected {expected} bytes, found {actual}")]
    Truncated { expected: usize, actual: usize },
    #[error("image/label counts differ: {images} images, {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("image shapes differ between splits: {0}x{1} vs {2}x{3}")]
    ShapeMismatch(usize, usize, usize, usize),
    #[error("label {label} at sample {index} is outside 0..{classes}")]
    LabelOutOfRange { index: usize, label: u8, classes: usize },
    #[error("subset of {requested} samples requested from {available}")]
    SubsetTooLarge { requested: usize, available: usize },
    #[error("bad cache file: {0}")]
    BadCache(String),
}

/// Raw image stack: `count` grayscale images of `rows x cols` bytes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    /// `count * rows * cols` bytes, image-major.
    pub pixels: Vec<u8>,
}

impl RawImages {
    pub fn pixel_dim(&self) -> usize {
        self.rows * self.cols
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let d = self.pixel_dim();
        &self.pixels[i * d..(i + 1) * d]
    }
}

/// Raw label list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawLabels {
    pub labels: Vec<u8>,
}

/// Paired images and labels of one split.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawDataset {
    pub images: RawImages,
    pub labels: RawLabels,
}

impl RawDataset {
    pub fn new(images: RawImages, labels: RawLabels) -> Result<Self, DataError> {
        if images.count != labels.labels.len() {
            return Err(DataError::CountMismatch { images: images.count, labels: labels.labels.len() });
        }
        Ok(RawDataset { images, labels })
    }

    pub fn len(&self) -> usize {
        self.images.count
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

fn read_u32_be(bytes: &[u8], offset: usize) -> Result<u32, DataError> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(DataError::Truncated { expected: end, actual: bytes.len() });
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().unwrap()))
}

/// Parses an IDX image file (magic 2051).
pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(DataError::BadMagic { expected: IMAGES_MAGIC, actual: magic });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let rows = read_u32_be(bytes, 8)? as usize;
    let cols = read_u32_be(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(DataError::Truncated { expected, actual: bytes.len() });
    }
    Ok(RawImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

/// Parses an IDX label file (magic 2049).
pub fn parse_idx_labels(bytes: &[u8]) -> Result<RawLabels, DataError> {
    let magic = read_u32_be(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::BadMagic { expected: LABELS_MAGIC, actual: magic });
    }
    let count = read_u32_be(bytes, 4)? as usize;
    let expected = 8 + count;
    if bytes.len() != expected {
        return Err(DataError::Truncated { expected, actual: bytes.len() });
    }
    Ok(RawLabels { labels: bytes[8..].to_vec() })
}

/// Serializes images back to IDX bytes (inverse of [`parse_idx_images`]).
pub fn write_idx_images(images: &RawImages) -> Vec<u8> {
    let mut out = Vec::with_capacity(16 + images.pixels.len());
    out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    out.extend_from_slice(&(images.count as u32).to_be_bytes());
    out.extend_from_slice(&(images.rows as u32).to_be_bytes());
    out.extend_from_slice(&(images.cols as u32).to_be_bytes());
    out.extend_from_slice(&images.pixels);
    out
}

/// Serializes labels back to IDX bytes (inverse of [`parse_idx_labels`]).
pub fn write_idx_labels(labels: &RawLabels) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.labels.len() as u32).to_be_bytes());
    out.extend_from_slice(&labels.labels);
    out
}

/// Reads a file, transparently gunzipping when the path ends in `.gz`.
pub fn read_idx_bytes(path: &Path) -> Result<Vec<u8>, DataError> {
    let file = BufReader::new(File::open(path)?);
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        GzDecoder::new(file).read_to_end(&mut bytes)?;
    } else {
        let mut file = file;
        file.read_to_end(&mut bytes)?;
    }
    Ok(bytes)
}

fn open_with_gz_fallback(dir: &Path, name: &str) -> Result<Vec<u8>, DataError> {
    let plain = dir.join(name);
    if plain.exists() {
        return read_idx_bytes(&plain);
    }
    let gz = dir.join(format!("{name}.gz"));
    if gz.exists() {
        return read_idx_bytes(&gz);
    }
    Err(DataError::MissingFile { path: plain })
}

/// Loads one split from a directory by file names (plain or `.gz`).
pub fn load_raw_dataset(dir: &Path, images_name: &str, labels_name: &str) -> Result<RawDataset, DataError> {
    let images = parse_idx_images(&open_with_gz_fallback(dir, images_name)?)?;
    let labels = parse_idx_labels(&open_with_gz_fallback(dir, labels_name)?)?;
    RawDataset::new(images, labels)
}

/// Loads the standard MNIST train and test splits from a directory.
pub fn load_mnist_dir(dir: &Path) -> Result<(RawDataset, RawDataset), DataError> {
    let train = load_raw_dataset(dir, TRAIN_IMAGES, TRAIN_LABELS)?;
    let test = load_raw_dataset(dir, TEST_IMAGES, TEST_LABELS)?;
    Ok((train, test))
}

/// Per-pixel mean and standard deviation (population) of a training split.
#[derive(Debug, Clone, PartialEq)]
pub struct PixelStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Computes per-pixel statistics over all images of `train`.
pub fn pixel_stats(train: &RawImages) -> PixelStats {
    let d = train.pixel_dim();
    let mut sum = vec![0.0f64; d];
    let mut sum_sq = vec![0.0f64; d];
    for i in 0..train.count {
        for (p, &v) in train.image(i).iter().enumerate() {
            let v = f64::from(v);
            sum[p] += v;
            sum_sq[p] += v * v;
        }
    }
    let n = (train.count.max(1)) as f64;
    let mean: Vec<f64> = sum.iter().map(|s| s / n).collect();
    let std = sum_sq
        .iter()
        .zip(&mean)
        .map(|(sq, m)| (sq / n - m * m).max(0.0).sqrt())
        .collect();
    PixelStats { mean, std }
}

/// Standardized inputs and sign-vector targets, ready for the engine.
#[derive(Debug, Clone, PartialEq)]
pub struct PreprocessedDataset {
    pub count: usize,
    pub input_dim: usize,
    pub output_dim: usize,
    /// `count * input_dim`, sample-major.
    x: Vec<f64>,
    /// `count * output_dim`, sample-major, entries in `{-1, +1}`.
    y: Vec<f64>,
    labels: Vec<u8>,
}

impl PreprocessedDataset {
    pub fn from_parts(
        input_dim: usize,
        output_dim: usize,
        x: Vec<f64>,
        y: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        let count = labels.len();
        if x.len() != count * input_dim || y.len() != count * output_dim {
            return Err(DataError::BadCache(format!(
                "inconsistent payload: {} inputs, {} targets, {count} labels",
                x.len(),
                y.len()
            )));
        }
        Ok(PreprocessedDataset { count, input_dim, output_dim, x, y, labels })
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.x[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.y[i * self.output_dim..(i + 1) * self.output_dim]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }
}

/// Encodes label `k` as a `classes`-long sign vector: `+1` at `k`, `-1`
/// elsewhere.
pub fn encode_label(label: u8, classes: usize) -> Result<Vec<f64>, DataError> {
    if usize::from(label) >= classes {
        return Err(DataError::LabelOutOfRange { index: 0, label, classes });
    }
    let mut out = vec![-1.0; classes];
    out[usize::from(label)] = 1.0;
    Ok(out)
}

/// Inverse of [`encode_label`]: the position of the (largest) positive
/// component.
pub fn decode_target(y: &[f64]) -> usize {
    argmax_lowest_tie(y)
}

/// Smallest class count covering every label in both splits.
pub fn class_count(train: &RawDataset, test: &RawDataset) -> usize {
    let max = train
        .labels
        .labels
        .iter()
        .chain(&test.labels.labels)
        .copied()
        .max()
        .unwrap_or(0);
    usize::from(max) + 1
}

fn standardize_split(
    split: &RawDataset,
    stats: &PixelStats,
    classes: usize,
) -> Result<PreprocessedDataset, DataError> {
    let d = split.images.pixel_dim();
    let n = split.len();
    let mut x = Vec::with_capacity(n * d);
    let mut y = Vec::with_capacity(n * classes);
    for i in 0..n {
        for (p, &v) in split.images.image(i).iter().enumerate() {
            let s = stats.std[p];
            x.push(if s > 0.0 { (f64::from(v) - stats.mean[p]) / s } else { 0.0 });
        }
        let label = split.labels.labels[i];
        if usize::from(label) >= classes {
            return Err(DataError::LabelOutOfRange { index: i, label, classes });
        }
        for k in 0..classes {
            y.push(if k == usize::from(label) { 1.0 } else { -1.0 });
        }
    }
    PreprocessedDataset::from_parts(d, classes, x, y, split.labels.labels.clone())
}

/// Standardizes both splits with statistics computed from `train` only and
/// encodes sign-vector targets.
pub fn standardize(
    train: &RawDataset,
    test: &RawDataset,
    classes: usize,
) -> Result<(PreprocessedDataset, PreprocessedDataset, PixelStats), DataError> {
    if (train.images.rows, train.images.cols) != (test.images.rows, test.images.cols) {
        return Err(DataError::ShapeMismatch(
            train.images.rows,
            train.images.cols,
            test.images.rows,
            test.images.cols,
        ));
    }
    let stats = pixel_stats(&train.images);
    let train_pre = standardize_split(train, &stats, classes)?;
    let test_pre = standardize_split(test, &stats, classes)?;
    Ok((train_pre, test_pre, stats))
}

/// An index-mapped window onto a preprocessed dataset (subset and/or
/// reordering); the engine trains and evaluates through views.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a PreprocessedDataset,
    indices: Vec<u32>,
}

impl<'a> DatasetView<'a> {
    /// View of the whole dataset in stored order.
    pub fn full(data: &'a PreprocessedDataset) -> Self {
        DatasetView { data, indices: (0..data.count as u32).collect() }
    }

    /// Seeded random reordering, optionally truncated to the first `take`
    /// samples (the standard way to carve a smaller training subset).
    pub fn shuffle_and_subset(
        data: &'a PreprocessedDataset,
        seed: u64,
        take: Option<usize>,
    ) -> Result<Self, DataError> {
        if let Some(t) = take {
            if t > data.count {
                return Err(DataError::SubsetTooLarge { requested: t, available: data.count });
            }
        }
        let mut rng = rng::seeded(seed);
        let mut indices = rng::permutation(&mut rng, data.count);
        if let Some(t) = take {
            indices.truncate(t);
        }
        Ok(DatasetView { data, indices })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    /// Input and target of view position `i`.
    pub fn sample(&self, i: usize) -> (&'a [f64], &'a [f64]) {
        let idx = self.indices[i] as usize;
        (self.data.input(idx), self.data.target(idx))
    }

    pub fn label(&self, i: usize) -> u8 {
        self.data.label(self.indices[i] as usize)
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }
}

fn write_f64s(w: &mut impl Write, vals: &[f64]) -> io::Result<()> {
    for v in vals {
        w.write_all(&v.to_le_bytes())?;
    }
    Ok(())
}

fn read_f64s(r: &mut impl Read, count: usize) -> io::Result<Vec<f64>> {
    let mut bytes = vec![0u8; count * 8];
    r.read_exact(&mut bytes)?;
    Ok(bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn write_split(w: &mut impl Write, split: &PreprocessedDataset) -> io::Result<()> {
    w.write_all(&(split.count as u32).to_le_bytes())?;
    w.write_all(&split.labels)?;
    write_f64s(w, &split.x)?;
    write_f64s(w, &split.y)
}

fn read_split(r: &mut impl Read, input_dim: usize, output_dim: usize) -> Result<PreprocessedDataset, DataError> {
    let mut n_bytes = [0u8; 4];
    r.read_exact(&mut n_bytes)?;
    let n = u32::from_le_bytes(n_bytes) as usize;
    let mut labels = vec![0u8; n];
    r.read_exact(&mut labels)?;
    let x = read_f64s(r, n * input_dim)?;
    let y = read_f64s(r, n * output_dim)?;
    PreprocessedDataset::from_parts(input_dim, output_dim, x, y, labels)
}

/// Writes both preprocessed splits and the training statistics to one
/// binary cache file, so repeated experiments skip raw parsing and
/// standardization. Exact: every `f64` round-trips bit for bit.
pub fn save_cache(
    path: &Path,
    train: &PreprocessedDataset,
    test: &PreprocessedDataset,
    stats: &PixelStats,
) -> Result<(), DataError> {
    if train.input_dim != test.input_dim || train.output_dim != test.output_dim {
        return Err(DataError::BadCache("split dimensions differ".into()));
    }
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(CACHE_MAGIC)?;
    w.write_all(&CACHE_VERSION.to_le_bytes())?;
    w.write_all(&(train.input_dim as u32).to_le_bytes())?;
    w.write_all(&(train.output_dim as u32).to_le_bytes())?;
    write_f64s(&mut w, &stats.mean)?;
    write_f64s(&mut w, &stats.std)?;
    write_split(&mut w, train)?;
    write_split(&mut w, test)?;
    w.flush()?;
    Ok(())
}

/// Reads a cache file written by [`save_cache`].
pub fn load_cache(path: &Path) -> Result<(PreprocessedDataset, PreprocessedDataset, PixelStats), DataError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 4];
    r.read_exact(&mut magic)?;
    if &magic != CACHE_MAGIC {
        return Err(DataError::BadCache(format!("bad magic {magic:?}")));
    }
    let mut word = [0u8; 4];
    r.read_exact(&mut word)?;
    let version = u32::from_le_bytes(word);
    if version != CACHE_VERSION {
        return Err(DataError::BadCache(format!("unsupported version {version}")));
    }
    r.read_exact(&mut word)?;
    let input_dim = u32::from_le_bytes(word) as usize;
    r.read_exact(&mut word)?;
    let output_dim = u32::from_le_bytes(word) as usize;
    let mean = read_f64s(&mut r, input_dim)?;
    let std = read_f64s(&mut r, input_dim)?;
    let train = read_split(&mut r, input_dim, output_dim)?;
    let test = read_split(&mut r, input_dim, output_dim)?;
    Ok((train, test, PixelStats { mean, std }))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_images() -> RawImages {
        RawImages { count: 2, rows: 2, cols: 1, pixels: vec![0, 10, 4, 10] }
    }

    #[test]
    fn idx_image_round_trip_preserves_everything() {
        let images = tiny_images();
        assert_eq!(parse_idx_images(&write_idx_images(&images)).unwrap(), images);
    }

    #[test]
    fn idx_label_round_trip_preserves_everything() {
        let labels = RawLabels { labels: vec![3, 0, 9, 1] };
        assert_eq!(parse_idx_labels(&write_idx_labels(&labels)).unwrap(), labels);
    }

    #[test]
    fn idx_parsers_reject_malformed_input() {
        let mut bytes = write_idx_images(&tiny_images());
        assert!(matches!(parse_idx_labels(&bytes), Err(DataError::BadMagic { .. })));
        bytes.truncate(bytes.len() - 1);
        assert!(matches!(parse_idx_images(&bytes), Err(DataError::Truncated { .. })));
        assert!(matches!(parse_idx_images(&bytes[..10]), Err(DataError::Truncated { .. })));
    }

    #[test]
    fn gzipped_files_load_transparently() {
        let dir = tempfile::tempdir().unwrap();
        let bytes = write_idx_labels(&RawLabels { labels: vec![1, 2, 1] });
        let path = dir.path().join("labels-idx1-ubyte.gz");
        let mut enc = flate2::write::GzEncoder::new(File::create(&path).unwrap(), flate2::Compression::fast());
        enc.write_all(&bytes).unwrap();
        enc.finish().unwrap();
        let loaded = parse_idx_labels(&read_idx_bytes(&path).unwrap()).unwrap();
        assert_eq!(loaded.labels, vec![1, 2, 1]);
        // Directory loader falls back to the .gz name.
        let imgs = write_idx_images(&RawImages { count: 3, rows: 1, cols: 1, pixels: vec![7, 8, 9] });
        std::fs::write(dir.path().join("images-idx3-ubyte"), imgs).unwrap();
        let ds = load_raw_dataset(dir.path(), "images-idx3-ubyte", "labels-idx1-ubyte").unwrap();
        assert_eq!(ds.len(), 3);
    }

    #[test]
    fn dataset_pairing_requires_matching_counts() {
        let images = tiny_images();
        let labels = RawLabels { labels: vec![1] };
        assert!(matches!(RawDataset::new(images, labels), Err(DataError::CountMismatch { .. })));
    }

    #[test]
    fn pixel_stats_are_per_pixel_over_the_split() {
        let stats = pixel_stats(&tiny_images());
        assert_eq!(stats.mean, vec![2.0, 10.0]);
        assert_eq!(stats.std, vec![2.0, 0.0]);
    }

    #[test]
    fn standardization_uses_train_stats_and_zeroes_dead_pixels() {
        let train = RawDataset::new(tiny_images(), RawLabels { labels: vec![0, 2] }).unwrap();
        let test = RawDataset::new(
            RawImages { count: 1, rows: 2, cols: 1, pixels: vec![6, 42] },
            RawLabels { labels: vec![1] },
        )
        .unwrap();
        let (tr, te, stats) = standardize(&train, &test, 3).unwrap();
        assert_eq!(tr.input(0), &[-1.0, 0.0]); // (0-2)/2, zero-variance pixel -> 0
        assert_eq!(tr.input(1), &[1.0, 0.0]);
        assert_eq!(te.input(0), &[2.0, 0.0]); // (6-2)/2 with *train* stats
        assert_eq!(tr.target(0), &[1.0, -1.0, -1.0]);
        assert_eq!(tr.target(1), &[-1.0, -1.0, 1.0]);
        assert_eq!(te.label(0), 1);
        assert_eq!(stats.std, vec![2.0, 0.0]);
    }

    #[test]
    fn standardization_rejects_out_of_range_labels() {
        let train = RawDataset::new(tiny_images(), RawLabels { labels: vec![0, 5] }).unwrap();
        let err = standardize(&train, &train, 3).unwrap_err();
        assert!(matches!(err, DataError::LabelOutOfRange { index: 1, label: 5, classes: 3 }));
    }

    #[test]
    fn label_encoding_round_trips() {
        assert_eq!(encode_label(2, 4).unwrap(), vec![-1.0, -1.0, 1.0, -1.0]);
        assert_eq!(decode_target(&encode_label(2, 4).unwrap()), 2);
        assert!(encode_label(4, 4).is_err());
    }

    #[test]
    fn class_count_spans_both_splits() {
        let a = RawDataset::new(tiny_images(), RawLabels { labels: vec![0, 3] }).unwrap();
        let b = RawDataset::new(tiny_images(), RawLabels { labels: vec![7, 1] }).unwrap();
        assert_eq!(class_count(&a, &b), 8);
    }

    fn sample_preprocessed(n: usize) -> PreprocessedDataset {
        let x: Vec<f64> = (0..n * 3).map(|i| i as f64 * 0.25 - 1.0).collect();
        let labels: Vec<u8> = (0..n).map(|i| (i % 2) as u8).collect();
        let y: Vec<f64> = labels
            .iter()
            .flat_map(|&l| encode_label(l, 2).unwrap())
            .collect();
        PreprocessedDataset::from_parts(3, 2, x, y, labels).unwrap()
    }

    #[test]
    fn views_subset_deterministically_by_seed() {
        let data = sample_preprocessed(10);
        let a = DatasetView::shuffle_and_subset(&data, 5, Some(4)).unwrap();
        let b = DatasetView::shuffle_and_subset(&data, 5, Some(4)).unwrap();
        let c = DatasetView::shuffle_and_subset(&data, 6, Some(4)).unwrap();
        assert_eq!(a.indices(), b.indices());
        assert_ne!(a.indices(), c.indices());
        assert_eq!(a.len(), 4);
        assert!(matches!(
            DatasetView::shuffle_and_subset(&data, 5, Some(11)),
            Err(DataError::SubsetTooLarge { requested: 11, available: 10 })
        ));
    }

    #[test]
    fn full_view_preserves_stored_order() {
        let data = sample_preprocessed(4);
        let v = DatasetView::full(&data);
        assert_eq!(v.len(), 4);
        for i in 0..4 {
            assert_eq!(v.sample(i).0, data.input(i));
            assert_eq!(v.label(i), data.label(i));
        }
    }

    #[test]
    fn cache_round_trip_is_bit_exact() {
        let train = sample_preprocessed(6);
        let test = sample_preprocessed(3);
        let stats = PixelStats { mean: vec![0.5, -1.25, 3.0], std: vec![1.0, 0.0, 2.5] };
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cache.bin");
        save_cache(&path, &train, &test, &stats).unwrap();
        let (tr, te, st) = load_cache(&path).unwrap();
        assert_eq!(tr, train);
        assert_eq!(te, test);
        assert_eq!(st, stats);
    }

    #[test]
    fn cache_rejects_foreign_files() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("not-a-cache.bin");
        std::fs::write(&path, b"EBPX000000").unwrap();
        assert!(matches!(load_cache(&path), Err(DataError::BadCache(_))));
    }
}
