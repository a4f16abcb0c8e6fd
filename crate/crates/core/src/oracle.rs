//! Brute-force reference computations used to validate the mean-field
//! engine against ground truth on small networks.
//!
//! Everything here favors obviousness over speed and is written
//! independently of the engine's optimized loops: the exact marginal
//! likelihood enumerates every binary weight configuration outright, and the
//! finite-difference probe re-propagates the mean chain with its own direct
//! transcription of the forward formulas. Agreement between these oracles
//! and the engine is what the integration suite asserts.

use thiserror::Error;

use crate::kernels::{gaussian_cdf, log_gaussian_cdf, Probability};
use crate::matrix::Matrix;
use crate::model::{Architecture, BinaryPosterior, LayerTopology};

/// Enumeration cap: at most `2^MAX_FREE_WEIGHTS` configurations.
pub const MAX_FREE_WEIGHTS: usize = 20;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OracleError {
    #[error("network has {count} free binary weights, enumeration cap is {limit}")]
    TooManyWeights { count: usize, limit: usize },
    #[error("weight (layer {layer}, unit {unit}, input {input}) is not a connected position")]
    NotConnected { layer: usize, unit: usize, input: usize },
    #[error("fixed weight value {0} must be -1 or +1")]
    InvalidFixedValue(f64),
    #[error("input has {actual} components, architecture expects {expected}")]
    InputDimension { expected: usize, actual: usize },
    #[error("target has {actual} components, architecture expects {expected}")]
    TargetDimension { expected: usize, actual: usize },
    #[error("target component {index} is {value}, expected -1 or +1")]
    InvalidTarget { index: usize, value: f64 },
    #[error("layer {0} is outside 1..={1}")]
    LayerOutOfRange(usize, usize),
    #[error("unit {unit} is outside layer {layer} (size {size})")]
    UnitOutOfRange { layer: usize, unit: usize, size: usize },
}

/// One synaptic weight pinned to a value during enumeration.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FixedWeight {
    /// 1-based layer.
    pub layer: usize,
    pub unit: usize,
    /// 0-based input index (bias cannot be fixed; it is not binary).
    pub input: usize,
    /// `-1.0` or `+1.0`.
    pub value: f64,
}

fn check_io(arch: &Architecture, x: &[f64], y: &[f64]) -> Result<(), OracleError> {
    if x.len() != arch.input_dim() {
        return Err(OracleError::InputDimension { expected: arch.input_dim(), actual: x.len() });
    }
    if y.len() != arch.output_dim() {
        return Err(OracleError::TargetDimension { expected: arch.output_dim(), actual: y.len() });
    }
    if let Some(index) = y.iter().position(|&v| v != 1.0 && v != -1.0) {
        return Err(OracleError::InvalidTarget { index, value: y[index] });
    }
    Ok(())
}

fn is_connected(arch: &Architecture, layer: usize, unit: usize, input: usize) -> bool {
    match arch.topology(layer) {
        LayerTopology::Dense => input < arch.size(layer - 1),
        LayerTopology::Masked(mask) => mask.is_connected(unit, input),
    }
}

/// Runs the sign network with explicit weights and returns whether its
/// output sign vector equals `y`. Biases sit in column 0; `sign(0) = +1`.
/// Normalization is irrelevant to signs and omitted.
fn sign_network_matches(arch: &Architecture, weights: &[Matrix], x: &[f64], y: &[f64]) -> bool {
    let depth = arch.depth();
    let mut v = x.to_vec();
    for l in 1..=depth {
        let m = &weights[l - 1];
        let mut u = vec![0.0; arch.size(l)];
        for (unit, out) in u.iter_mut().enumerate() {
            let row = m.row(unit);
            let mut acc = row[0];
            for (j, &vj) in v.iter().enumerate() {
                acc += row[j + 1] * vj;
            }
            *out = acc;
        }
        if l < depth {
            v = u.iter().map(|&p| if p >= 0.0 { 1.0 } else { -1.0 }).collect();
        } else {
            return u
                .iter()
                .zip(y)
                .all(|(&p, &t)| (if p >= 0.0 { 1.0 } else { -1.0 }) == t);
        }
    }
    unreachable!("depth >= 1")
}

/// Exact probability that the network outputs the sign vector `y` on `x`,
/// marginalizing over every binary weight under the factorized posterior
/// `P(W = +1) = sigma(2h)`, with biases fixed at their posterior means.
/// `fixed`, if given, pins one connected weight instead of marginalizing it.
///
/// Enumerates all `2^n` free configurations; networks above
/// [`MAX_FREE_WEIGHTS`] free weights are rejected.
pub fn exact_marginal_likelihood(
    post: &BinaryPosterior,
    x: &[f64],
    y: &[f64],
    fixed: Option<FixedWeight>,
) -> Result<Probability, OracleError> {
    let arch = post.arch();
    check_io(arch, x, y)?;

    if let Some(f) = fixed {
        if f.layer < 1 || f.layer > arch.depth() {
            return Err(OracleError::LayerOutOfRange(f.layer, arch.depth()));
        }
        if f.unit >= arch.size(f.layer) {
            return Err(OracleError::UnitOutOfRange { layer: f.layer, unit: f.unit, size: arch.size(f.layer) });
        }
        if !is_connected(arch, f.layer, f.unit, f.input) {
            return Err(OracleError::NotConnected { layer: f.layer, unit: f.unit, input: f.input });
        }
        if f.value != 1.0 && f.value != -1.0 {
            return Err(OracleError::InvalidFixedValue(f.value));
        }
    }

    // Free weight positions in canonical order, with their P(W = +1).
    let mut positions: Vec<(usize, usize, usize, f64)> = Vec::new();
    arch.for_each_connected(|l, unit, input| {
        if fixed.is_some_and(|f| (f.layer, f.unit, f.input) == (l, unit, input)) {
            return;
        }
        let h = post.layer(l)[(unit, input + 1)];
        positions.push((l, unit, input, 1.0 / (1.0 + (-2.0 * h).exp())));
    });
    if positions.len() > MAX_FREE_WEIGHTS {
        return Err(OracleError::TooManyWeights { count: positions.len(), limit: MAX_FREE_WEIGHTS });
    }

    // Weight template: biases at posterior means, fixed weight pinned,
    // free positions filled per configuration.
    let mut weights: Vec<Matrix> = (1..=arch.depth())
        .map(|l| {
            let (rows, cols) = arch.weight_shape(l);
            let mut m = Matrix::zeros(rows, cols);
            for unit in 0..rows {
                m[(unit, 0)] = post.layer(l)[(unit, 0)];
            }
            m
        })
        .collect();
    if let Some(f) = fixed {
        weights[f.layer - 1][(f.unit, f.input + 1)] = f.value;
    }

    let mut total = 0.0f64;
    for config in 0u64..(1u64 << positions.len()) {
        let mut prob = 1.0f64;
        for (bit, &(l, unit, input, p_plus)) in positions.iter().enumerate() {
            let plus = (config >> bit) & 1 == 1;
            weights[l - 1][(unit, input + 1)] = if plus { 1.0 } else { -1.0 };
            prob *= if plus { p_plus } else { 1.0 - p_plus };
        }
        if prob > 0.0 && sign_network_matches(arch, &weights, x, y) {
            total += prob;
        }
    }
    Probability::new(total.min(1.0)).map_err(|_| OracleError::InvalidFixedValue(total))
}

/// Exact output probability with nothing pinned.
pub fn exact_output_probability(
    post: &BinaryPosterior,
    x: &[f64],
    y: &[f64],
) -> Result<Probability, OracleError> {
    exact_marginal_likelihood(post, x, y, None)
}

/// Exact predictive probability of a single-layer network: binary weights
/// enumerated outright, the real bias integrated in closed form against its
/// unit-variance Gaussian posterior. This is the quantity the engine's
/// forward pass approximates, so it is the ground truth for judging that
/// approximation; [`exact_marginal_likelihood`] instead freezes biases at
/// their means, a different (sharper) estimand.
///
/// For one weight configuration `w` the output units are conditionally
/// independent, each contributing `Phi(y_i (h_{i0} + sum_j w_ij x_j))`:
/// the bias integral `int 1[y(b + c) >= 0] N(b; h0, 1) db` evaluated
/// exactly. Depth > 1 has no such closed form and is rejected.
pub fn exact_predictive_probability(
    post: &BinaryPosterior,
    x: &[f64],
    y: &[f64],
    fixed: Option<FixedWeight>,
) -> Result<Probability, OracleError> {
    let arch = post.arch();
    check_io(arch, x, y)?;
    if arch.depth() != 1 {
        return Err(OracleError::LayerOutOfRange(arch.depth(), 1));
    }
    if let Some(f) = fixed {
        if f.layer != 1 {
            return Err(OracleError::LayerOutOfRange(f.layer, 1));
        }
        if f.unit >= arch.size(1) {
            return Err(OracleError::UnitOutOfRange { layer: 1, unit: f.unit, size: arch.size(1) });
        }
        if !is_connected(arch, 1, f.unit, f.input) {
            return Err(OracleError::NotConnected { layer: 1, unit: f.unit, input: f.input });
        }
        if f.value != 1.0 && f.value != -1.0 {
            return Err(OracleError::InvalidFixedValue(f.value));
        }
    }

    let h = post.layer(1);
    let mut positions: Vec<(usize, usize, f64)> = Vec::new();
    arch.for_each_connected(|_, unit, input| {
        if fixed.is_some_and(|f| (f.unit, f.input) == (unit, input)) {
            return;
        }
        positions.push((unit, input, 1.0 / (1.0 + (-2.0 * h[(unit, input + 1)]).exp())));
    });
    if positions.len() > MAX_FREE_WEIGHTS {
        return Err(OracleError::TooManyWeights { count: positions.len(), limit: MAX_FREE_WEIGHTS });
    }

    // Per-unit pre-activation under the current configuration, biases at
    // their means; the bias uncertainty enters through Phi below.
    let mut pre = vec![0.0; arch.size(1)];
    let mut total = 0.0f64;
    for config in 0u64..(1u64 << positions.len()) {
        for (unit, p) in pre.iter_mut().enumerate() {
            *p = h[(unit, 0)];
        }
        if let Some(f) = fixed {
            pre[f.unit] += f.value * x[f.input];
        }
        let mut prob = 1.0f64;
        for (bit, &(unit, input, p_plus)) in positions.iter().enumerate() {
            let plus = (config >> bit) & 1 == 1;
            pre[unit] += if plus { x[input] } else { -x[input] };
            prob *= if plus { p_plus } else { 1.0 - p_plus };
        }
        for (unit, &c) in pre.iter().enumerate() {
            prob *= gaussian_cdf(y[unit] * c);
        }
        total += prob;
    }
    Probability::new(total.min(1.0)).map_err(|_| OracleError::InvalidFixedValue(total))
}

/// A direct, unoptimized transcription of the mean-field forward formulas,
/// kept deliberately separate from the engine.
struct SimpleForward {
    /// `nu[m]` holds level-`m` mean activations; `nu[0] = x`.
    nu: Vec<Vec<f64>>,
    /// `mu[l - 1]`, `sigma[l - 1]` for layer `l` (sigma is the std dev).
    mu: Vec<Vec<f64>>,
    sigma: Vec<Vec<f64>>,
}

fn simple_forward(post: &BinaryPosterior, x: &[f64]) -> SimpleForward {
    let arch = post.arch();
    let depth = arch.depth();
    let mut nu: Vec<Vec<f64>> = vec![x.to_vec()];
    let mut mu = Vec::with_capacity(depth);
    let mut sigma = Vec::with_capacity(depth);
    for l in 1..=depth {
        let k = arch.fan_in(l) as f64;
        let h = post.layer(l);
        let prev = &nu[l - 1];
        let mut mu_l = vec![0.0; arch.size(l)];
        let mut sigma_l = vec![0.0; arch.size(l)];
        let mut nu_l = vec![0.0; arch.size(l)];
        for unit in 0..arch.size(l) {
            let mut sum_mu = h[(unit, 0)];
            let mut sum_var = 1.0; // unit-variance Gaussian bias
            for (input, &v) in prev.iter().enumerate() {
                if !is_connected(arch, l, unit, input) {
                    continue;
                }
                let t = h[(unit, input + 1)].tanh();
                let s2 = if l == 1 { v * v } else { 1.0 };
                sum_mu += t * v;
                sum_var += s2 - t * t * v * v;
            }
            mu_l[unit] = sum_mu / k.sqrt();
            sigma_l[unit] = (sum_var / k).sqrt();
            nu_l[unit] = 2.0 * gaussian_cdf(mu_l[unit] / sigma_l[unit]) - 1.0;
        }
        mu.push(mu_l);
        sigma.push(sigma_l);
        nu.push(nu_l);
    }
    SimpleForward { nu, mu, sigma }
}

/// Log-probability of target `y` when the pre-activation mean of one unit
/// is replaced by `mu_value` and the change is propagated through the mean
/// chain only (every standard deviation stays at its unperturbed value -
/// exactly the dependence whose derivative the backward pass computes).
fn chain_log_prob(
    post: &BinaryPosterior,
    base: &SimpleForward,
    layer: usize,
    unit: usize,
    mu_value: f64,
    y: &[f64],
) -> f64 {
    let arch = post.arch();
    let depth = arch.depth();
    let mut mu_l = base.mu[layer - 1].clone();
    mu_l[unit] = mu_value;
    if layer == depth {
        return log_prob_of(&mu_l, &base.sigma[depth - 1], y);
    }
    let mut nu_cur = base.nu[layer].clone();
    nu_cur[unit] = 2.0 * gaussian_cdf(mu_value / base.sigma[layer - 1][unit]) - 1.0;
    for m in layer + 1..=depth {
        let k = (arch.fan_in(m) as f64).sqrt();
        let h = post.layer(m);
        let mut mu_m = vec![0.0; arch.size(m)];
        for (i, out) in mu_m.iter_mut().enumerate() {
            let mut sum = h[(i, 0)];
            for (j, &v) in nu_cur.iter().enumerate() {
                if is_connected(arch, m, i, j) {
                    sum += h[(i, j + 1)].tanh() * v;
                }
            }
            *out = sum / k;
        }
        if m == depth {
            return log_prob_of(&mu_m, &base.sigma[depth - 1], y);
        }
        nu_cur = mu_m
            .iter()
            .enumerate()
            .map(|(i, &mu)| 2.0 * gaussian_cdf(mu / base.sigma[m - 1][i]) - 1.0)
            .collect();
    }
    unreachable!("loop returns at the output layer")
}

fn log_prob_of(mu: &[f64], sigma: &[f64], y: &[f64]) -> f64 {
    mu.iter()
        .zip(sigma)
        .zip(y)
        .map(|((&m, &s), &t)| log_gaussian_cdf(t * m / s))
        .sum()
}

/// Central finite difference of the target's log-probability with respect
/// to the pre-activation mean of `(layer, unit)`: the ground truth the
/// engine's backward `delta` must match. No dropout.
pub fn finite_difference_delta(
    post: &BinaryPosterior,
    x: &[f64],
    y: &[f64],
    layer: usize,
    unit: usize,
    eps: f64,
) -> Result<f64, OracleError> {
    let arch = post.arch();
    check_io(arch, x, y)?;
    if layer < 1 || layer > arch.depth() {
        return Err(OracleError::LayerOutOfRange(layer, arch.depth()));
    }
    if unit >= arch.size(layer) {
        return Err(OracleError::UnitOutOfRange { layer, unit, size: arch.size(layer) });
    }
    let base = simple_forward(post, x);
    let at = base.mu[layer - 1][unit];
    let hi = chain_log_prob(post, &base, layer, unit, at + eps, y);
    let lo = chain_log_prob(post, &base, layer, unit, at - eps, y);
    Ok((hi - lo) / (2.0 * eps))
}
