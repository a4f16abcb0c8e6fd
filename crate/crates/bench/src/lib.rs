//! Shared fixtures for the criterion benchmarks.
//!
//! Everything here is deterministic — fixed seeds and hash-pattern inputs —
//! so that timings are comparable across runs and machines and never depend
//! on having the MNIST files on disk.

use std::sync::Arc;

use ebp_core::mnist::{encode_label, PreprocessedDataset};
use ebp_core::model::Architecture;

/// Dense topology at the shapes the experiments use: 784 inputs (the 28x28
/// image), the given hidden level sizes, ten output classes.
pub fn dense_arch(hidden: &[usize]) -> Arc<Architecture> {
    let mut sizes = vec![784];
    sizes.extend_from_slice(hidden);
    sizes.push(10);
    Arc::new(Architecture::dense(&sizes).expect("benchmark architecture is valid"))
}

/// Receptive-field topology on the 28x28 grid: one masked level of
/// `block x block` windows, then the dense ten-class readout.
pub fn spatial_arch(block: usize) -> Arc<Architecture> {
    Arc::new(Architecture::spatial((28, 28), &[block], 10).expect("benchmark architecture is valid"))
}

/// Deterministic pseudo-images in the standardized-pixel range (roughly
/// `[-1.4, 1.4]`) with labels cycling through the ten classes.
pub fn synthetic_dataset(n: usize, input_dim: usize) -> PreprocessedDataset {
    let classes = 10;
    let x: Vec<f64> = (0..n * input_dim)
        .map(|i| ((i * 2_654_435_761 % 977) as f64 / 488.5 - 1.0) * 1.4)
        .collect();
    let labels: Vec<u8> = (0..n).map(|i| ((i * 7) % classes) as u8).collect();
    let y: Vec<f64> = labels
        .iter()
        .flat_map(|&l| encode_label(l, classes).expect("label fits the class count"))
        .collect();
    PreprocessedDataset::from_parts(input_dim, classes, x, y, labels)
        .expect("benchmark fixture is consistent")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixtures_are_deterministic() {
        let a = synthetic_dataset(8, 16);
        let b = synthetic_dataset(8, 16);
        assert_eq!(a.input(3), b.input(3));
        assert_eq!(a.label(5), b.label(5));
        assert_eq!(a.target(7), b.target(7));
    }

    #[test]
    fn architectures_have_the_requested_shape() {
        let arch = dense_arch(&[200]);
        assert_eq!(arch.sizes(), &[784, 200, 10]);
        let spatial = spatial_arch(14);
        assert_eq!(spatial.input_dim(), 784);
        assert_eq!(spatial.size(1), 15 * 15);
        assert_eq!(spatial.output_dim(), 10);
    }
}
