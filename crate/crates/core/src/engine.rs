//! Mean-field forward and backward passes and the online update rule.
//!
//! The engine treats each layer's pre-activation as a Gaussian whose mean and
//! variance come from summing the per-weight posterior moments of the fan-in
//! (a central-limit approximation over the many independent weights),
//! normalized by the fan-in `K_l` (bias included):
//!
//! ```text
//! mu_k     = (1/sqrt(K))  sum_j  <W_kj> <a_j>
//! sigma2_k = (1/K)        sum_j (<W_kj^2> <a_j^2> - <W_kj>^2 <a_j>^2)
//! nu_k     = 2 Phi(mu_k / sigma_k) - 1
//! ```
//!
//! The sums run over the augmented input `a = (1, activations)`, so the bias
//! (Gaussian posterior, unit variance) is just another term: it contributes
//! its mean to `mu` and a constant `1` to the variance sum. The backward pass
//! propagates the derivative of the log-likelihood of the sign-vector target
//! through the same Gaussian approximation, and the update moves each natural
//! parameter by `(1/sqrt(K_l)) * delta_i * a_j` (scaled additionally by the
//! entry's variance for the real-weight family).

use thiserror::Error;

use crate::kernels::{clamp_open_unit, gaussian_cdf, gaussian_pdf, pdf_cdf_ratio};
use crate::matrix::Matrix;
use crate::mnist::DatasetView;
use crate::model::{Architecture, BinaryPosterior, LayerTopology, RealPosterior};
use crate::predict::argmax_lowest_tie;
use crate::rng;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EngineError {
    #[error("input has {actual} components, architecture expects {expected}")]
    InputDimension { expected: usize, actual: usize },
    #[error("input component {index} is not finite")]
    NonFiniteInput { index: usize },
    #[error("target has {actual} components, architecture expects {expected}")]
    TargetDimension { expected: usize, actual: usize },
    #[error("target component {index} is {value}, expected -1 or +1")]
    InvalidTarget { index: usize, value: f64 },
    #[error("keep probability {0} is outside (0, 1]")]
    InvalidKeepProb(f64),
    #[error("dropout plan shape does not match the architecture at level {level}")]
    PlanShapeMismatch { level: usize },
    #[error("non-finite update in layer {layer}, unit {unit}")]
    NonFiniteUpdate { layer: usize, unit: usize },
    #[error("dataset is empty")]
    EmptyDataset,
}

/// Whether a pass is a training presentation or a test-time evaluation.
/// The distinction only matters under dropout: training applies the plan's
/// Bernoulli masks, testing replaces them with deterministic mean-scaling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Train,
    Test,
}

/// Validated dropout keep-probability.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DropoutConfig {
    keep_prob: f64,
}

impl DropoutConfig {
    pub fn new(keep_prob: f64) -> Result<Self, EngineError> {
        if keep_prob > 0.0 && keep_prob <= 1.0 {
            Ok(DropoutConfig { keep_prob })
        } else {
            Err(EngineError::InvalidKeepProb(keep_prob))
        }
    }

    pub fn keep_prob(self) -> f64 {
        self.keep_prob
    }
}

/// Dropout configuration for one training epoch: the keep probability plus
/// the seed of that epoch's mask stream.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochDropout {
    pub config: DropoutConfig,
    pub mask_seed: u64,
}

/// Per-presentation Bernoulli keep-masks for the input level and every
/// hidden level. Output units are never dropped.
#[derive(Debug, Clone, PartialEq)]
pub struct DropoutPlan {
    keep_prob: f64,
    masks: Vec<Vec<bool>>,
}

impl DropoutPlan {
    /// Plan with every unit kept (no draws consumed). Useful as a reusable
    /// buffer for [`DropoutPlan::resample`].
    pub fn all_kept(arch: &Architecture, config: DropoutConfig) -> Self {
        DropoutPlan {
            keep_prob: config.keep_prob(),
            masks: (0..arch.depth()).map(|m| vec![true; arch.size(m)]).collect(),
        }
    }

    /// Draws a fresh mask for levels `0..depth` (input and hidden): one
    /// Bernoulli(keep) draw per unit, levels ascending, units ascending.
    pub fn sample(arch: &Architecture, config: DropoutConfig, rng: &mut impl rand_core::RngCore) -> Self {
        let mut plan = Self::all_kept(arch, config);
        plan.resample(rng);
        plan
    }

    /// Redraws every mask in place, consuming exactly one draw per unit in
    /// the same order as [`DropoutPlan::sample`].
    pub fn resample(&mut self, rng: &mut impl rand_core::RngCore) {
        for mask in &mut self.masks {
            for keep in mask.iter_mut() {
                *keep = rng::bernoulli_keep(rng, self.keep_prob);
            }
        }
    }

    pub fn keep_prob(&self) -> f64 {
        self.keep_prob
    }

    /// Keep-mask of one level (`0` = input, `depth - 1` = last hidden).
    pub fn mask(&self, level: usize) -> &[bool] {
        &self.masks[level]
    }

    fn matches(&self, arch: &Architecture) -> bool {
        self.masks.len() == arch.depth()
            && self.masks.iter().enumerate().all(|(m, mask)| mask.len() == arch.size(m))
    }
}

/// Everything one forward pass produces: per-layer Gaussian pre-activation
/// moments, per-level mean activations, and (for the binary family) the
/// cached per-entry posterior means that the backward pass and update reuse.
#[derive(Debug, Clone)]
pub struct ForwardState {
    /// Augmented mean activations per level: `aug_nu[m][0] = 1`, then
    /// `nu_{r,m}` at index `r + 1`. Dropout masking / test scaling included.
    aug_nu: Vec<Vec<f64>>,
    /// Augmented second moments `<a^2>`, same layout.
    aug_s2: Vec<Vec<f64>>,
    /// Pre-activation means, `mu[l - 1]` for layer `l`.
    mu: Vec<Vec<f64>>,
    /// Pre-activation variances, same layout.
    sigma2: Vec<Vec<f64>>,
    /// Per-entry posterior means (bias mean in column 0, `tanh(h)` at
    /// weights), filled by the binary forward pass.
    means: Option<Vec<Matrix>>,
}

impl ForwardState {
    /// Buffers shaped for `arch`, ready to be filled by a forward pass.
    pub fn new_for(arch: &Architecture) -> Self {
        ForwardState {
            aug_nu: (0..=arch.depth()).map(|m| vec![0.0; arch.size(m) + 1]).collect(),
            aug_s2: (0..=arch.depth()).map(|m| vec![0.0; arch.size(m) + 1]).collect(),
            mu: (1..=arch.depth()).map(|l| vec![0.0; arch.size(l)]).collect(),
            sigma2: (1..=arch.depth()).map(|l| vec![0.0; arch.size(l)]).collect(),
            means: None,
        }
    }

    pub fn depth(&self) -> usize {
        self.mu.len()
    }

    /// Mean activations of level `m` as presented to layer `m + 1` (that
    /// is, after any dropout masking or test scaling). Level 0 is the input.
    pub fn activations(&self, level: usize) -> &[f64] {
        &self.aug_nu[level][1..]
    }

    pub fn output_activations(&self) -> &[f64] {
        self.activations(self.depth())
    }

    /// Gaussian pre-activation means of layer `layer` (1-based).
    pub fn preactivation_means(&self, layer: usize) -> &[f64] {
        &self.mu[layer - 1]
    }

    /// Gaussian pre-activation variances of layer `layer` (1-based).
    pub fn preactivation_variances(&self, layer: usize) -> &[f64] {
        &self.sigma2[layer - 1]
    }

    /// Output unit with the largest mean activation, ties to the lowest
    /// index. (The log-odds readout is monotone in the mean activation, so
    /// this is also the maximum-score label of the probabilistic readout.)
    pub fn predicted_label(&self) -> usize {
        argmax_lowest_tie(self.output_activations())
    }
}

/// Per-layer signed errors `delta(layer)[i]` from the backward pass.
#[derive(Debug, Clone, PartialEq)]
pub struct BackwardState {
    delta: Vec<Vec<f64>>,
}

impl BackwardState {
    pub fn delta(&self, layer: usize) -> &[f64] {
        &self.delta[layer - 1]
    }
}

/// Outcome of one online update.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StepOutcome {
    /// Label the pre-update posterior predicted for this sample.
    pub predicted: usize,
}

/// Counts from one pass over a training set. `errors` scores each sample
/// against the model as it existed when that sample was presented (the
/// "running" training error of an online learner).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EpochMetrics {
    pub samples: usize,
    pub errors: usize,
}

impl EpochMetrics {
    pub fn error_rate(&self) -> Option<f64> {
        (self.samples > 0).then(|| self.errors as f64 / self.samples as f64)
    }
}

pub(crate) fn check_input(arch: &Architecture, x: &[f64]) -> Result<(), EngineError> {
    if x.len() != arch.input_dim() {
        return Err(EngineError::InputDimension { expected: arch.input_dim(), actual: x.len() });
    }
    if let Some(index) = x.iter().position(|v| !v.is_finite()) {
        return Err(EngineError::NonFiniteInput { index });
    }
    Ok(())
}

fn check_target(arch: &Architecture, y: &[f64]) -> Result<(), EngineError> {
    if y.len() != arch.output_dim() {
        return Err(EngineError::TargetDimension { expected: arch.output_dim(), actual: y.len() });
    }
    if let Some(index) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(EngineError::InvalidTarget { index, value: y[index] });
    }
    Ok(())
}

fn check_plan(arch: &Architecture, drop: Option<&DropoutPlan>) -> Result<(), EngineError> {
    if let Some(plan) = drop {
        if !plan.matches(arch) {
            let level = (0..arch.depth())
                .find(|&m| plan.masks.get(m).is_none_or(|mask| mask.len() != arch.size(m)))
                .unwrap_or(0);
            return Err(EngineError::PlanShapeMismatch { level });
        }
    }
    Ok(())
}

/// Borrows level `l - 1` (read) and level `l` (write) of a per-level buffer.
fn split_levels(levels: &mut [Vec<f64>], l: usize) -> (&[f64], &mut [f64]) {
    let (lo, hi) = levels.split_at_mut(l);
    (&lo[l - 1], &mut hi[0])
}

/// Applies the dropout boundary to one level's augmented buffers: Bernoulli
/// masking in the training phase, deterministic mean-scaling (`nu * p`,
/// `<a^2> * p^2`) in the test phase. The constant bias slot is never touched.
fn apply_boundary(aug_nu: &mut [f64], aug_s2: &mut [f64], phase: Phase, plan: Option<&DropoutPlan>, level: usize) {
    let Some(plan) = plan else { return };
    match phase {
        Phase::Train => {
            for (r, &keep) in plan.mask(level).iter().enumerate() {
                if !keep {
                    aug_nu[r + 1] = 0.0;
                    aug_s2[r + 1] = 0.0;
                }
            }
        }
        Phase::Test => {
            let p = plan.keep_prob;
            for v in &mut aug_nu[1..] {
                *v *= p;
            }
            for v in &mut aug_s2[1..] {
                *v *= p * p;
            }
        }
    }
}

/// Writes the input level: `a = (1, x)`, second moments `(1, x^2)`, then
/// the dropout boundary.
fn fill_input_level(aug_nu: &mut [f64], aug_s2: &mut [f64], x: &[f64], phase: Phase, plan: Option<&DropoutPlan>) {
    aug_nu[0] = 1.0;
    aug_s2[0] = 1.0;
    for (r, &v) in x.iter().enumerate() {
        aug_nu[r + 1] = v;
        aug_s2[r + 1] = v * v;
    }
    apply_boundary(aug_nu, aug_s2, phase, plan, 0);
}

/// One binary-family unit: accumulates `(sum <W> a, sum(<W^2><a^2> - <W a>^2))`
/// over the augmented input and caches each entry's posterior mean into
/// `mean_row`. The bias contributes `(h0, 1)`; weights have `<W^2> = 1`.
#[inline]
fn binary_unit_dense(h_row: &[f64], aug_nu: &[f64], aug_s2: &[f64], mean_row: &mut [f64]) -> (f64, f64) {
    let h0 = h_row[0];
    mean_row[0] = h0;
    let mut acc_mu = h0;
    let mut acc_var = 1.0;
    for j in 1..h_row.len() {
        let t = h_row[j].tanh();
        mean_row[j] = t;
        let q = t * aug_nu[j];
        acc_mu += q;
        acc_var += aug_s2[j] - q * q;
    }
    (acc_mu, acc_var)
}

/// As [`binary_unit_dense`] but over the unit's receptive field only.
/// Disconnected inputs contribute nothing to either moment.
#[inline]
fn binary_unit_masked(
    h_row: &[f64],
    aug_nu: &[f64],
    aug_s2: &[f64],
    mean_row: &mut [f64],
    runs: impl Iterator<Item = (usize, usize)>,
) -> (f64, f64) {
    let h0 = h_row[0];
    mean_row[0] = h0;
    let mut acc_mu = h0;
    let mut acc_var = 1.0;
    for (start, len) in runs {
        for j in start + 1..start + 1 + len {
            let t = h_row[j].tanh();
            mean_row[j] = t;
            let q = t * aug_nu[j];
            acc_mu += q;
            acc_var += aug_s2[j] - q * q;
        }
    }
    (acc_mu, acc_var)
}

/// One unit from explicit per-entry means and variances (real family and
/// precomputed evaluation models). Masked-out entries carry zero mean and
/// variance, so a dense sweep is already exact; the run-based variant below
/// just skips the zero work.
#[inline]
pub(crate) fn moment_unit_dense(mean_row: &[f64], var_row: &[f64], aug_nu: &[f64], aug_s2: &[f64]) -> (f64, f64) {
    let mut acc_mu = 0.0;
    let mut acc_var = 0.0;
    for j in 0..mean_row.len() {
        let m = mean_row[j];
        let q = m * aug_nu[j];
        acc_mu += q;
        acc_var += (m * m + var_row[j]) * aug_s2[j] - q * q;
    }
    (acc_mu, acc_var)
}

#[inline]
pub(crate) fn moment_unit_masked(
    mean_row: &[f64],
    var_row: &[f64],
    aug_nu: &[f64],
    aug_s2: &[f64],
    runs: impl Iterator<Item = (usize, usize)>,
) -> (f64, f64) {
    let m0 = mean_row[0];
    let q0 = m0 * aug_nu[0];
    let mut acc_mu = q0;
    let mut acc_var = (m0 * m0 + var_row[0]) * aug_s2[0] - q0 * q0;
    for (start, len) in runs {
        for j in start + 1..start + 1 + len {
            let m = mean_row[j];
            let q = m * aug_nu[j];
            acc_mu += q;
            acc_var += (m * m + var_row[j]) * aug_s2[j] - q * q;
        }
    }
    (acc_mu, acc_var)
}

/// Converts accumulated moments into `(mu, sigma2, nu)` for one unit.
/// Every variance term is nonnegative and the bias contributes exactly 1,
/// so `sigma2 >= 1/K` always holds.
#[inline]
fn finish_unit(acc_mu: f64, acc_var: f64, fan_in: f64) -> (f64, f64, f64) {
    let mu = acc_mu / fan_in.sqrt();
    let sigma2 = acc_var / fan_in;
    debug_assert!(sigma2 >= (1.0 - 1e-12) / fan_in, "variance {sigma2} below floor 1/{fan_in}");
    let nu = clamp_open_unit(2.0 * gaussian_cdf(mu / sigma2.sqrt()) - 1.0);
    (mu, sigma2, nu)
}

/// Writes the constant slot and sign-unit second moments of level `m`
/// (`<v^2> = 1` for every hidden/output unit), then the dropout boundary for
/// non-output levels.
fn finish_level(aug_nu: &mut [f64], aug_s2: &mut [f64], m: usize, depth: usize, phase: Phase, plan: Option<&DropoutPlan>) {
    aug_nu[0] = 1.0;
    aug_s2[0] = 1.0;
    for v in &mut aug_s2[1..] {
        *v = 1.0;
    }
    if m < depth {
        apply_boundary(aug_nu, aug_s2, phase, plan, m);
    }
}

/// Forward pass for the binary family into caller-owned buffers. Fills the
/// per-entry posterior-mean cache reused by [`backward`] and the update.
pub fn forward_into(
    post: &BinaryPosterior,
    x: &[f64],
    phase: Phase,
    drop: Option<&DropoutPlan>,
    fs: &mut ForwardState,
) -> Result<(), EngineError> {
    let arch = post.arch();
    check_input(arch, x)?;
    check_plan(arch, drop)?;
    if fs.means.is_none() {
        fs.means = Some(
            (1..=arch.depth())
                .map(|l| {
                    let (rows, cols) = arch.weight_shape(l);
                    Matrix::zeros(rows, cols)
                })
                .collect(),
        );
    }
    let ForwardState { aug_nu, aug_s2, mu, sigma2, means } = fs;
    let means = means.as_mut().unwrap();
    fill_input_level(&mut aug_nu[0], &mut aug_s2[0], x, phase, drop);
    let depth = arch.depth();
    for l in 1..=depth {
        let fan_in = arch.fan_in(l) as f64;
        let h = post.layer(l);
        let mean_l = &mut means[l - 1];
        let (nu_prev, nu_cur) = split_levels(aug_nu, l);
        let (s2_prev, s2_cur) = split_levels(aug_s2, l);
        for unit in 0..arch.size(l) {
            let (acc_mu, acc_var) = match arch.topology(l) {
                LayerTopology::Dense => {
                    binary_unit_dense(h.row(unit), nu_prev, s2_prev, mean_l.row_mut(unit))
                }
                LayerTopology::Masked(mask) => binary_unit_masked(
                    h.row(unit),
                    nu_prev,
                    s2_prev,
                    mean_l.row_mut(unit),
                    mask.connected_runs(unit),
                ),
            };
            let (m, s2, nu) = finish_unit(acc_mu, acc_var, fan_in);
            mu[l - 1][unit] = m;
            sigma2[l - 1][unit] = s2;
            nu_cur[unit + 1] = nu;
        }
        finish_level(nu_cur, s2_cur, l, depth, phase, drop);
    }
    Ok(())
}

/// Forward pass for the binary family (fresh buffers).
pub fn forward(
    post: &BinaryPosterior,
    x: &[f64],
    phase: Phase,
    drop: Option<&DropoutPlan>,
) -> Result<ForwardState, EngineError> {
    let mut fs = ForwardState::new_for(post.arch());
    forward_into(post, x, phase, drop, &mut fs)?;
    Ok(fs)
}

/// Forward pass over explicit per-entry means and variances. Shared by the
/// real family and by precomputed evaluation models; `fs.means` is not
/// touched (callers already hold the mean matrices).
pub(crate) fn moment_forward_into(
    arch: &Architecture,
    means: &[Matrix],
    vars: &[Matrix],
    x: &[f64],
    phase: Phase,
    drop: Option<&DropoutPlan>,
    fs: &mut ForwardState,
) -> Result<(), EngineError> {
    check_input(arch, x)?;
    check_plan(arch, drop)?;
    let ForwardState { aug_nu, aug_s2, mu, sigma2, .. } = fs;
    fill_input_level(&mut aug_nu[0], &mut aug_s2[0], x, phase, drop);
    let depth = arch.depth();
    for l in 1..=depth {
        let fan_in = arch.fan_in(l) as f64;
        let (nu_prev, nu_cur) = split_levels(aug_nu, l);
        let (s2_prev, s2_cur) = split_levels(aug_s2, l);
        for unit in 0..arch.size(l) {
            let (acc_mu, acc_var) = match arch.topology(l) {
                LayerTopology::Dense => {
                    moment_unit_dense(means[l - 1].row(unit), vars[l - 1].row(unit), nu_prev, s2_prev)
                }
                LayerTopology::Masked(mask) => moment_unit_masked(
                    means[l - 1].row(unit),
                    vars[l - 1].row(unit),
                    nu_prev,
                    s2_prev,
                    mask.connected_runs(unit),
                ),
            };
            let (m, s2, nu) = finish_unit(acc_mu, acc_var, fan_in);
            mu[l - 1][unit] = m;
            sigma2[l - 1][unit] = s2;
            nu_cur[unit + 1] = nu;
        }
        finish_level(nu_cur, s2_cur, l, depth, phase, drop);
    }
    Ok(())
}

/// Forward pass for the real-weight family (fresh buffers).
pub fn forward_real(
    post: &RealPosterior,
    x: &[f64],
    phase: Phase,
    drop: Option<&DropoutPlan>,
) -> Result<ForwardState, EngineError> {
    let mut fs = ForwardState::new_for(post.arch());
    moment_forward_into(post.arch(), post.mean_layers(), post.var_layers(), x, phase, drop, &mut fs)?;
    Ok(fs)
}

/// Backward recursion shared by both families, reading per-entry posterior
/// means from `means`.
///
/// Output layer: `delta_i = (y_i / sigma_i) * ratio(y_i mu_i / sigma_i)`,
/// the derivative of `ln Phi(y mu / sigma)` with respect to `mu`.
///
/// Hidden recursion, layer `l` down to level `l - 1`:
/// `delta_i = (2/sqrt(K_l)) * N(0 | mu_i, sigma2_i) * sum_j <W_ji> delta_j`,
/// where `2 N(0 | mu, sigma2)` is `d nu / d mu` of `nu = 2 Phi(mu/sigma) - 1`.
/// Units dropped by the plan get `delta = 0`.
fn backward_impl(
    arch: &Architecture,
    means: &[Matrix],
    fs: &ForwardState,
    y: &[f64],
    drop: Option<&DropoutPlan>,
) -> Result<BackwardState, EngineError> {
    check_target(arch, y)?;
    check_plan(arch, drop)?;
    let depth = arch.depth();
    let mut delta: Vec<Vec<f64>> = (1..=depth).map(|l| vec![0.0; arch.size(l)]).collect();

    for i in 0..arch.size(depth) {
        let sigma = fs.sigma2[depth - 1][i].sqrt();
        let z = y[i] * fs.mu[depth - 1][i] / sigma;
        delta[depth - 1][i] = y[i] / sigma * pdf_cdf_ratio(z);
    }

    for l in (2..=depth).rev() {
        let scale = 2.0 / (arch.fan_in(l) as f64).sqrt();
        let mean_l = &means[l - 1];
        let (lower_levels, upper_levels) = delta.split_at_mut(l - 1);
        let upper = &upper_levels[0];
        let lower = &mut lower_levels[l - 2];
        match arch.topology(l) {
            LayerTopology::Dense => {
                for (j, &dj) in upper.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = mean_l.row(j);
                    for (i, acc) in lower.iter_mut().enumerate() {
                        *acc += row[i + 1] * dj;
                    }
                }
            }
            LayerTopology::Masked(mask) => {
                for (j, &dj) in upper.iter().enumerate() {
                    if dj == 0.0 {
                        continue;
                    }
                    let row = mean_l.row(j);
                    for (start, len) in mask.connected_runs(j) {
                        for i in start..start + len {
                            lower[i] += row[i + 1] * dj;
                        }
                    }
                }
            }
        }
        let dropped = drop.map(|p| p.mask(l - 1));
        for (i, acc) in lower.iter_mut().enumerate() {
            if dropped.is_some_and(|mask| !mask[i]) {
                *acc = 0.0;
                continue;
            }
            let sigma = fs.sigma2[l - 2][i].sqrt();
            let gauss = gaussian_pdf(fs.mu[l - 2][i] / sigma) / sigma;
            *acc *= scale * gauss;
        }
    }
    Ok(BackwardState { delta })
}

/// Backward pass for the binary family. `fs` must come from a forward pass
/// on the same posterior; `drop`, if given, must be the plan used there.
pub fn backward(
    fs: &ForwardState,
    post: &BinaryPosterior,
    y: &[f64],
    drop: Option<&DropoutPlan>,
) -> Result<BackwardState, EngineError> {
    match fs.means.as_ref() {
        Some(means) => backward_impl(post.arch(), means, fs, y, drop),
        None => backward_impl(post.arch(), &post.mean_weights(), fs, y, drop),
    }
}

/// Backward pass for the real-weight family.
pub fn backward_real(
    fs: &ForwardState,
    post: &RealPosterior,
    y: &[f64],
    drop: Option<&DropoutPlan>,
) -> Result<BackwardState, EngineError> {
    backward_impl(post.arch(), post.mean_layers(), fs, y, drop)
}

fn check_deltas_finite(arch: &Architecture, bs: &BackwardState) -> Result<(), EngineError> {
    for l in 1..=arch.depth() {
        if let Some(unit) = bs.delta(l).iter().position(|d| !d.is_finite()) {
            return Err(EngineError::NonFiniteUpdate { layer: l, unit });
        }
    }
    Ok(())
}

/// One online update of the binary posterior from a single `(x, y)` pair,
/// reusing caller-owned buffers. Natural parameters (bias means included)
/// move by `(1/sqrt(K_l)) * delta_i * a_j` over the augmented post-dropout
/// activations, so dropped inputs contribute no change.
pub(crate) fn update_step_into(
    post: &mut BinaryPosterior,
    x: &[f64],
    y: &[f64],
    drop: Option<&DropoutPlan>,
    fs: &mut ForwardState,
) -> Result<StepOutcome, EngineError> {
    forward_into(post, x, Phase::Train, drop, fs)?;
    let arch = post.arch().clone();
    let bs = backward_impl(&arch, fs.means.as_ref().unwrap(), fs, y, drop)?;
    check_deltas_finite(&arch, &bs)?;
    let predicted = fs.predicted_label();
    for l in 1..=arch.depth() {
        let scale = 1.0 / (arch.fan_in(l) as f64).sqrt();
        let aug_nu = &fs.aug_nu[l - 1];
        let deltas = bs.delta(l);
        let h = post.layer_mut(l);
        for (unit, &delta) in deltas.iter().enumerate() {
            let step = scale * delta;
            if step == 0.0 {
                continue;
            }
            let row = h.row_mut(unit);
            match arch.topology(l) {
                LayerTopology::Dense => {
                    for (j, v) in row.iter_mut().enumerate() {
                        *v += step * aug_nu[j];
                    }
                }
                LayerTopology::Masked(mask) => {
                    row[0] += step;
                    for (start, len) in mask.connected_runs(unit) {
                        for j in start + 1..start + 1 + len {
                            row[j] += step * aug_nu[j];
                        }
                    }
                }
            }
        }
    }
    Ok(StepOutcome { predicted })
}

/// One online update of the binary posterior (fresh buffers).
pub fn update_step(
    post: &mut BinaryPosterior,
    x: &[f64],
    y: &[f64],
    drop: Option<&DropoutPlan>,
) -> Result<StepOutcome, EngineError> {
    let mut fs = ForwardState::new_for(post.arch());
    update_step_into(post, x, y, drop, &mut fs)
}

/// One online update of the real-weight posterior: each mean moves by
/// `(var/sqrt(K_l)) * delta_i * a_j`; variances stay at initialization.
/// Masked-out entries have zero variance and therefore never move.
pub(crate) fn update_step_real_into(
    post: &mut RealPosterior,
    x: &[f64],
    y: &[f64],
    drop: Option<&DropoutPlan>,
    fs: &mut ForwardState,
) -> Result<StepOutcome, EngineError> {
    let arch = post.arch().clone();
    moment_forward_into(&arch, post.mean_layers(), post.var_layers(), x, Phase::Train, drop, fs)?;
    let bs = backward_impl(&arch, post.mean_layers(), fs, y, drop)?;
    check_deltas_finite(&arch, &bs)?;
    let predicted = fs.predicted_label();
    for l in 1..=arch.depth() {
        let scale = 1.0 / (arch.fan_in(l) as f64).sqrt();
        let aug_nu = &fs.aug_nu[l - 1];
        let deltas = bs.delta(l);
        let (mean, var) = post.layer_pair_mut(l);
        for (unit, &delta) in deltas.iter().enumerate() {
            let step = scale * delta;
            if step == 0.0 {
                continue;
            }
            let var_row = var.row(unit);
            for (j, v) in mean.row_mut(unit).iter_mut().enumerate() {
                *v += step * var_row[j] * aug_nu[j];
            }
        }
    }
    Ok(StepOutcome { predicted })
}

/// One online update of the real-weight posterior (fresh buffers).
pub fn update_step_real(
    post: &mut RealPosterior,
    x: &[f64],
    y: &[f64],
    drop: Option<&DropoutPlan>,
) -> Result<StepOutcome, EngineError> {
    let mut fs = ForwardState::new_for(post.arch());
    update_step_real_into(post, x, y, drop, &mut fs)
}

/// One pass over `data` in a seeded random order, updating the binary
/// posterior online. Under dropout a fresh plan is drawn from the epoch's
/// mask stream before every presentation. An empty dataset is a no-op.
pub fn train_epoch(
    post: &mut BinaryPosterior,
    data: &DatasetView,
    order_seed: u64,
    dropout: Option<EpochDropout>,
) -> Result<EpochMetrics, EngineError> {
    let arch = post.arch().clone();
    let mut fs = ForwardState::new_for(&arch);
    run_epoch(data, order_seed, dropout, &arch, |x, y, plan| {
        update_step_into(post, x, y, plan, &mut fs)
    })
}

/// One pass over `data` updating the real-weight posterior online.
pub fn train_epoch_real(
    post: &mut RealPosterior,
    data: &DatasetView,
    order_seed: u64,
    dropout: Option<EpochDropout>,
) -> Result<EpochMetrics, EngineError> {
    let arch = post.arch().clone();
    let mut fs = ForwardState::new_for(&arch);
    run_epoch(data, order_seed, dropout, &arch, |x, y, plan| {
        update_step_real_into(post, x, y, plan, &mut fs)
    })
}

fn run_epoch(
    data: &DatasetView,
    order_seed: u64,
    dropout: Option<EpochDropout>,
    arch: &Architecture,
    mut step: impl FnMut(&[f64], &[f64], Option<&DropoutPlan>) -> Result<StepOutcome, EngineError>,
) -> Result<EpochMetrics, EngineError> {
    let mut metrics = EpochMetrics::default();
    if data.is_empty() {
        return Ok(metrics);
    }
    let mut order_rng = rng::seeded(order_seed);
    let order = rng::permutation(&mut order_rng, data.len());
    let mut mask_state = dropout.map(|d| (DropoutPlan::all_kept(arch, d.config), rng::seeded(d.mask_seed)));
    for &idx in &order {
        let (x, y) = data.sample(idx as usize);
        let plan = match mask_state.as_mut() {
            Some((plan, rng)) => {
                plan.resample(rng);
                Some(&*plan)
            }
            None => None,
        };
        let outcome = step(x, y, plan)?;
        metrics.samples += 1;
        if outcome.predicted != argmax_lowest_tie(y) {
            metrics.errors += 1;
        }
    }
    Ok(metrics)
}
