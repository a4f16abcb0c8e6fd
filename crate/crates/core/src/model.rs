//! Network architecture and synaptic-weight posteriors.
//!
//! A network is a chain of fully connected or receptive-field-masked weight
//! layers. Each unit also has a real-valued bias, stored in column `0` of its
//! weight matrix; synaptic weights for input `j` live in column `j + 1`.
//!
//! Two posterior families share this layout:
//!
//! * [`BinaryPosterior`] - weights constrained to `{-1, +1}`, each carrying an
//!   independent posterior `P(W = w) ~ exp(h * w)` parameterized by the natural
//!   parameter `h`. The bias keeps a Gaussian posterior of unit variance whose
//!   mean is stored in the same slot.
//! * [`RealPosterior`] - weights with a Gaussian mean-field posterior whose
//!   per-entry means adapt and whose variances stay at their initial value.
//!
//! Entries excluded by a connectivity mask are identically zero in every
//! matrix (natural parameter, mean, and variance), so they contribute nothing
//! to any moment computation and never change during training.

use std::sync::Arc;

use thiserror::Error;

use crate::matrix::Matrix;
use crate::rng;
use crate::spatial::{ConnectivityMask, TopologyError};

/// Construction errors for architectures and posteriors.
#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ModelError {
    #[error("architecture needs at least an input and an output level, got {0} sizes")]
    TooFewLevels(usize),
    #[error("level {index} has zero units")]
    EmptyLevel { index: usize },
    #[error("expected {expected} layer topologies for {levels} levels, got {actual}")]
    TopologyCountMismatch { levels: usize, expected: usize, actual: usize },
    #[error(
        "mask for layer {layer} covers {mask_units} units x {mask_inputs} inputs, \
         but the layer is {units} units x {inputs} inputs"
    )]
    MaskShapeMismatch { layer: usize, units: usize, inputs: usize, mask_units: usize, mask_inputs: usize },
    #[error(transparent)]
    Topology(#[from] TopologyError),
}

/// Connectivity of one weight layer.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerTopology {
    /// Every unit sees every input.
    Dense,
    /// Units see only their receptive field.
    Masked(ConnectivityMask),
}

/// Layer sizes plus per-layer connectivity. Layers are indexed `1..=depth()`
/// in every public method; level `0` is the input.
#[derive(Debug, Clone, PartialEq)]
pub struct Architecture {
    sizes: Vec<usize>,
    topology: Vec<LayerTopology>,
}

impl Architecture {
    /// Fully connected architecture with the given unit counts per level
    /// (input first, output last).
    pub fn dense(sizes: &[usize]) -> Result<Self, ModelError> {
        let topology = vec![LayerTopology::Dense; sizes.len().saturating_sub(1)];
        Self::with_topology(sizes.to_vec(), topology)
    }

    /// Architecture with explicit per-layer connectivity. Mask shapes must
    /// match the adjacent level sizes.
    pub fn with_topology(sizes: Vec<usize>, topology: Vec<LayerTopology>) -> Result<Self, ModelError> {
        if sizes.len() < 2 {
            return Err(ModelError::TooFewLevels(sizes.len()));
        }
        if let Some(index) = sizes.iter().position(|&v| v == 0) {
            return Err(ModelError::EmptyLevel { index });
        }
        if topology.len() != sizes.len() - 1 {
            return Err(ModelError::TopologyCountMismatch {
                levels: sizes.len(),
                expected: sizes.len() - 1,
                actual: topology.len(),
            });
        }
        for (i, t) in topology.iter().enumerate() {
            if let LayerTopology::Masked(mask) = t {
                if mask.units() != sizes[i + 1] || mask.inputs() != sizes[i] {
                    return Err(ModelError::MaskShapeMismatch {
                        layer: i + 1,
                        units: sizes[i + 1],
                        inputs: sizes[i],
                        mask_units: mask.units(),
                        mask_inputs: mask.inputs(),
                    });
                }
            }
        }
        Ok(Architecture { sizes, topology })
    }

    /// Stack of receptive-field layers over a pixel grid, followed by one
    /// dense output layer. Each entry of `blocks` adds a masked layer whose
    /// output grid feeds the next.
    pub fn spatial(input_grid: (usize, usize), blocks: &[usize], outputs: usize) -> Result<Self, ModelError> {
        let mut sizes = vec![input_grid.0 * input_grid.1];
        let mut topology = Vec::with_capacity(blocks.len() + 1);
        let mut grid = input_grid;
        for &b in blocks {
            let mask = ConnectivityMask::build(grid, b)?;
            grid = mask.output_grid();
            sizes.push(mask.units());
            topology.push(LayerTopology::Masked(mask));
        }
        sizes.push(outputs);
        topology.push(LayerTopology::Dense);
        Self::with_topology(sizes, topology)
    }

    /// Number of weight layers `L`.
    pub fn depth(&self) -> usize {
        self.sizes.len() - 1
    }

    /// Unit count of level `level` (0 = input, `depth()` = output).
    pub fn size(&self, level: usize) -> usize {
        self.sizes[level]
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.sizes.last().unwrap()
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    /// Connectivity of layer `layer` (1-based).
    pub fn topology(&self, layer: usize) -> &LayerTopology {
        &self.topology[layer - 1]
    }

    /// Weight-matrix shape of layer `layer`: `V_l x (V_{l-1} + 1)` (column 0
    /// is the bias).
    pub fn weight_shape(&self, layer: usize) -> (usize, usize) {
        (self.sizes[layer], self.sizes[layer - 1] + 1)
    }

    /// Fan-in `K_l` of one unit in layer `layer`, counting the bias: the
    /// number of terms averaged by that unit's normalization `1/sqrt(K_l)`.
    pub fn fan_in(&self, layer: usize) -> usize {
        match self.topology(layer) {
            LayerTopology::Dense => self.sizes[layer - 1] + 1,
            LayerTopology::Masked(mask) => mask.ones_per_unit() + 1,
        }
    }

    /// Total adaptable synaptic-weight entries (biases excluded, masked-out
    /// entries excluded).
    pub fn connected_weight_count(&self) -> usize {
        (1..=self.depth())
            .map(|l| match self.topology(l) {
                LayerTopology::Dense => self.sizes[l] * self.sizes[l - 1],
                LayerTopology::Masked(mask) => mask.total_ones(),
            })
            .sum()
    }

    /// Zeroes the masked-out entries of a weight matrix for `layer`,
    /// leaving bias column and connected entries untouched. Idempotent; a
    /// no-op for dense layers.
    pub fn project_layer(&self, layer: usize, w: &mut Matrix) {
        debug_assert_eq!((w.rows(), w.cols()), self.weight_shape(layer));
        if let LayerTopology::Masked(mask) = self.topology(layer) {
            for unit in 0..w.rows() {
                let row = w.row_mut(unit);
                let mut keep = vec![false; row.len()];
                keep[0] = true;
                for (start, len) in mask.connected_runs(unit) {
                    for j in start..start + len {
                        keep[j + 1] = true;
                    }
                }
                for (v, keep) in row.iter_mut().zip(keep) {
                    if !keep {
                        *v = 0.0;
                    }
                }
            }
        }
    }

    /// Calls `f(layer, unit, input)` for every connected synaptic weight
    /// (bias excluded), in the canonical order: layers ascending, units
    /// ascending, inputs ascending. This order defines weight enumeration
    /// everywhere (initialization draws, exact-enumeration bit positions).
    pub fn for_each_connected(&self, mut f: impl FnMut(usize, usize, usize)) {
        for l in 1..=self.depth() {
            for unit in 0..self.sizes[l] {
                match self.topology(l) {
                    LayerTopology::Dense => {
                        for input in 0..self.sizes[l - 1] {
                            f(l, unit, input);
                        }
                    }
                    LayerTopology::Masked(mask) => {
                        for (start, len) in mask.connected_runs(unit) {
                            for input in start..start + len {
                                f(l, unit, input);
                            }
                        }
                    }
                }
            }
        }
    }
}

/// Mean, second moment, and variance of every entry of one layer
/// (bias column included; masked-out entries are zero in all three).
#[derive(Debug, Clone)]
pub struct LayerStats {
    pub mean: Matrix,
    pub second_moment: Matrix,
    pub variance: Matrix,
}

/// Factorized posterior over binary synaptic weights, natural parameters `h`.
///
/// Per weight: `P(W = w) ~ exp(h * w)` for `w in {-1, +1}`, so the mean is
/// `tanh(h)`, the second moment is `1`, and the variance is `sech^2(h)`.
/// Column 0 holds the bias posterior's mean (unit-variance Gaussian).
#[derive(Debug, Clone, PartialEq)]
pub struct BinaryPosterior {
    arch: Arc<Architecture>,
    h: Vec<Matrix>,
}

/// Mean-field Gaussian posterior over real synaptic weights. Means adapt
/// during training; variances stay at their initial value (1 everywhere,
/// bias included).
#[derive(Debug, Clone, PartialEq)]
pub struct RealPosterior {
    arch: Arc<Architecture>,
    mean: Vec<Matrix>,
    var: Vec<Matrix>,
}

/// Draws one standard-normal value per connected entry (bias first, then
/// inputs ascending) into freshly zeroed layer matrices.
fn init_matrices(arch: &Architecture, seed: u64) -> Vec<Matrix> {
    let mut rng = rng::seeded(seed);
    let mut layers: Vec<Matrix> = (1..=arch.depth())
        .map(|l| {
            let (rows, cols) = arch.weight_shape(l);
            Matrix::zeros(rows, cols)
        })
        .collect();
    for l in 1..=arch.depth() {
        for unit in 0..arch.size(l) {
            layers[l - 1][(unit, 0)] = rng::standard_normal(&mut rng);
            match arch.topology(l) {
                LayerTopology::Dense => {
                    for input in 0..arch.size(l - 1) {
                        layers[l - 1][(unit, input + 1)] = rng::standard_normal(&mut rng);
                    }
                }
                LayerTopology::Masked(mask) => {
                    for (start, len) in mask.connected_runs(unit) {
                        for input in start..start + len {
                            layers[l - 1][(unit, input + 1)] = rng::standard_normal(&mut rng);
                        }
                    }
                }
            }
        }
    }
    layers
}

impl BinaryPosterior {
    /// Fresh posterior with natural parameters drawn i.i.d. standard normal
    /// on every connected entry (biases included, masked-out entries zero).
    pub fn init(arch: &Arc<Architecture>, seed: u64) -> Self {
        BinaryPosterior { arch: Arc::clone(arch), h: init_matrices(arch, seed) }
    }

    /// Posterior with every natural parameter (and bias mean) zero: the
    /// uniform prior over weights.
    pub fn uniform(arch: &Arc<Architecture>) -> Self {
        let h = (1..=arch.depth())
            .map(|l| {
                let (rows, cols) = arch.weight_shape(l);
                Matrix::zeros(rows, cols)
            })
            .collect();
        BinaryPosterior { arch: Arc::clone(arch), h }
    }

    pub fn from_parts(arch: Arc<Architecture>, h: Vec<Matrix>) -> Result<Self, ModelError> {
        check_layer_shapes(&arch, &h)?;
        Ok(BinaryPosterior { arch, h })
    }

    pub fn arch(&self) -> &Arc<Architecture> {
        &self.arch
    }

    /// Natural-parameter matrix of layer `layer` (1-based).
    pub fn layer(&self, layer: usize) -> &Matrix {
        &self.h[layer - 1]
    }

    pub fn layer_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.h[layer - 1]
    }

    /// All layers, index 0 holding layer 1.
    pub fn layers(&self) -> &[Matrix] {
        &self.h
    }

    /// Most probable weight configuration: `sign(h)` per connected synaptic
    /// weight (ties at zero resolve to `+1`), bias means passed through
    /// unchanged, masked-out entries zero.
    pub fn clip(&self) -> WeightConfiguration {
        let mut w: Vec<Matrix> = self.h.clone();
        for l in 1..=self.arch.depth() {
            let m = &mut w[l - 1];
            match self.arch.topology(l) {
                LayerTopology::Dense => {
                    for unit in 0..m.rows() {
                        for v in m.row_mut(unit).iter_mut().skip(1) {
                            *v = if *v >= 0.0 { 1.0 } else { -1.0 };
                        }
                    }
                }
                LayerTopology::Masked(mask) => {
                    for unit in 0..m.rows() {
                        for (start, len) in mask.connected_runs(unit) {
                            for input in start..start + len {
                                let v = &mut m[(unit, input + 1)];
                                *v = if *v >= 0.0 { 1.0 } else { -1.0 };
                            }
                        }
                    }
                }
            }
        }
        WeightConfiguration { arch: Arc::clone(&self.arch), w }
    }

    /// Per-layer posterior means: `tanh(h)` for synaptic weights, the bias
    /// mean itself in column 0, zero at masked-out entries.
    pub fn mean_weights(&self) -> Vec<Matrix> {
        self.h
            .iter()
            .map(|m| {
                let mut out = m.clone();
                for unit in 0..out.rows() {
                    for v in out.row_mut(unit).iter_mut().skip(1) {
                        *v = v.tanh();
                    }
                }
                out
            })
            .collect()
    }

    /// Per-layer variances: `sech^2(h)` at connected synaptic weights, `1`
    /// for biases, zero at masked-out entries.
    pub fn variance_matrices(&self) -> Vec<Matrix> {
        let mut out: Vec<Matrix> = self
            .h
            .iter()
            .map(|m| Matrix::zeros(m.rows(), m.cols()))
            .collect();
        for l in 1..=self.arch.depth() {
            let (src, dst) = (&self.h[l - 1], &mut out[l - 1]);
            for unit in 0..src.rows() {
                dst[(unit, 0)] = 1.0;
            }
            match self.arch.topology(l) {
                LayerTopology::Dense => {
                    for unit in 0..src.rows() {
                        for input in 0..src.cols() - 1 {
                            dst[(unit, input + 1)] = crate::kernels::sech2(src[(unit, input + 1)]);
                        }
                    }
                }
                LayerTopology::Masked(mask) => {
                    for unit in 0..src.rows() {
                        for (start, len) in mask.connected_runs(unit) {
                            for input in start..start + len {
                                dst[(unit, input + 1)] = crate::kernels::sech2(src[(unit, input + 1)]);
                            }
                        }
                    }
                }
            }
        }
        out
    }

    /// Mean / second moment / variance of every entry, per layer.
    pub fn posterior_stats(&self) -> Vec<LayerStats> {
        let means = self.mean_weights();
        let vars = self.variance_matrices();
        means
            .into_iter()
            .zip(vars)
            .map(|(mean, variance)| {
                let mut second_moment = Matrix::zeros(mean.rows(), mean.cols());
                for i in 0..mean.rows() {
                    for j in 0..mean.cols() {
                        let (m, v) = (mean[(i, j)], variance[(i, j)]);
                        second_moment[(i, j)] = m * m + v;
                    }
                }
                LayerStats { mean, second_moment, variance }
            })
            .collect()
    }

    /// True when every natural parameter is finite.
    pub fn all_finite(&self) -> bool {
        self.h.iter().all(Matrix::all_finite)
    }
}

impl RealPosterior {
    /// Fresh posterior: connected means i.i.d. standard normal, variances 1
    /// on every connected entry and bias, zero at masked-out entries.
    pub fn init(arch: &Arc<Architecture>, seed: u64) -> Self {
        let mean = init_matrices(arch, seed);
        let mut var: Vec<Matrix> = mean.iter().map(|m| Matrix::zeros(m.rows(), m.cols())).collect();
        for l in 1..=arch.depth() {
            let v = &mut var[l - 1];
            for unit in 0..v.rows() {
                v[(unit, 0)] = 1.0;
            }
            match arch.topology(l) {
                LayerTopology::Dense => {
                    for unit in 0..v.rows() {
                        for input in 0..arch.size(l - 1) {
                            v[(unit, input + 1)] = 1.0;
                        }
                    }
                }
                LayerTopology::Masked(mask) => {
                    for unit in 0..v.rows() {
                        for (start, len) in mask.connected_runs(unit) {
                            for input in start..start + len {
                                v[(unit, input + 1)] = 1.0;
                            }
                        }
                    }
                }
            }
        }
        RealPosterior { arch: Arc::clone(arch), mean, var }
    }

    pub fn from_parts(arch: Arc<Architecture>, mean: Vec<Matrix>, var: Vec<Matrix>) -> Result<Self, ModelError> {
        check_layer_shapes(&arch, &mean)?;
        check_layer_shapes(&arch, &var)?;
        Ok(RealPosterior { arch, mean, var })
    }

    pub fn arch(&self) -> &Arc<Architecture> {
        &self.arch
    }

    pub fn mean_layer(&self, layer: usize) -> &Matrix {
        &self.mean[layer - 1]
    }

    pub fn mean_layer_mut(&mut self, layer: usize) -> &mut Matrix {
        &mut self.mean[layer - 1]
    }

    pub fn var_layer(&self, layer: usize) -> &Matrix {
        &self.var[layer - 1]
    }

    pub fn mean_layers(&self) -> &[Matrix] {
        &self.mean
    }

    pub fn var_layers(&self) -> &[Matrix] {
        &self.var
    }

    /// Mutable mean matrix alongside the (read-only) variance matrix of the
    /// same layer, for update rules that scale steps by per-entry variance.
    pub fn layer_pair_mut(&mut self, layer: usize) -> (&mut Matrix, &Matrix) {
        (&mut self.mean[layer - 1], &self.var[layer - 1])
    }

    /// Most probable configuration of a Gaussian posterior: the mean itself.
    pub fn clip(&self) -> WeightConfiguration {
        WeightConfiguration { arch: Arc::clone(&self.arch), w: self.mean.clone() }
    }

    pub fn all_finite(&self) -> bool {
        self.mean.iter().all(Matrix::all_finite)
    }
}

/// Either posterior family, tagged; the unit of checkpointing.
#[derive(Debug, Clone, PartialEq)]
pub enum Posterior {
    Binary(BinaryPosterior),
    Real(RealPosterior),
}

impl Posterior {
    pub fn arch(&self) -> &Arc<Architecture> {
        match self {
            Posterior::Binary(p) => p.arch(),
            Posterior::Real(p) => p.arch(),
        }
    }

    pub fn clip(&self) -> WeightConfiguration {
        match self {
            Posterior::Binary(p) => p.clip(),
            Posterior::Real(p) => p.clip(),
        }
    }
}

/// A concrete weight assignment: `{-1, +1}` synapses (or real values for the
/// real family) plus real biases in column 0.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightConfiguration {
    arch: Arc<Architecture>,
    w: Vec<Matrix>,
}

impl WeightConfiguration {
    pub fn from_parts(arch: Arc<Architecture>, w: Vec<Matrix>) -> Result<Self, ModelError> {
        check_layer_shapes(&arch, &w)?;
        Ok(WeightConfiguration { arch, w })
    }

    pub fn arch(&self) -> &Arc<Architecture> {
        &self.arch
    }

    pub fn layer(&self, layer: usize) -> &Matrix {
        &self.w[layer - 1]
    }

    pub fn layers(&self) -> &[Matrix] {
        &self.w
    }

    /// True when every connected synaptic weight is exactly `-1` or `+1`
    /// (biases unconstrained) - the invariant produced by
    /// [`BinaryPosterior::clip`].
    pub fn is_sign_configuration(&self) -> bool {
        let mut ok = true;
        self.arch.for_each_connected(|l, unit, input| {
            let v = self.w[l - 1][(unit, input + 1)];
            ok &= v == 1.0 || v == -1.0;
        });
        ok
    }
}

fn check_layer_shapes(arch: &Architecture, layers: &[Matrix]) -> Result<(), ModelError> {
    if layers.len() != arch.depth() {
        return Err(ModelError::TopologyCountMismatch {
            levels: arch.sizes.len(),
            expected: arch.depth(),
            actual: layers.len(),
        });
    }
    for l in 1..=arch.depth() {
        let (rows, cols) = arch.weight_shape(l);
        let m = &layers[l - 1];
        if m.rows() != rows || m.cols() != cols {
            return Err(ModelError::MaskShapeMismatch {
                layer: l,
                units: rows,
                inputs: cols - 1,
                mask_units: m.rows(),
                mask_inputs: m.cols().saturating_sub(1),
            });
        }
    }
    Ok(())
}
