//! Readouts and evaluation.
//!
//! Two ways to turn a trained posterior into a classifier:
//!
//! * **Deterministic**: clip the posterior to its most probable weights and
//!   run the resulting sign network. Scores are the output units' pre-sign
//!   sums (fan-in normalized).
//! * **Probabilistic**: propagate posterior expectations with the mean-field
//!   forward pass and score each output unit by the log-odds of its mean
//!   activation. This approximates averaging the network output over the
//!   whole weight posterior rather than committing to one configuration.
//!
//! [`ExpectationModel`] precomputes the per-entry posterior moment matrices
//! once, so evaluating a test set costs only dot products per sample.

use std::sync::Arc;

use crate::engine::{self, DropoutConfig, DropoutPlan, EngineError, ForwardState, Phase};
use crate::kernels::log_odds;
use crate::matrix::Matrix;
use crate::mnist::DatasetView;
use crate::model::{Architecture, BinaryPosterior, Posterior, RealPosterior, WeightConfiguration};

/// Index of the largest score; ties resolve to the lowest index.
/// Non-finite scores never beat a finite one (NaN comparisons are false).
pub fn argmax_lowest_tie(scores: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// A classification with its per-class scores.
#[derive(Debug, Clone, PartialEq)]
pub struct Prediction {
    pub label: usize,
    pub scores: Vec<f64>,
}

/// Runs the sign network defined by a clipped weight configuration.
///
/// Hidden units output `sign(u)` (with `sign(0) = +1`); output scores are
/// the pre-sign sums `u`, normalized by `1/sqrt(K_l)` like the mean-field
/// pass so scores stay on a comparable scale. Masked-out entries are zero
/// in the configuration, so a plain dot product respects the topology.
pub fn predict_deterministic(w: &WeightConfiguration, x: &[f64]) -> Result<Prediction, EngineError> {
    let arch = w.arch();
    engine::check_input(arch, x)?;
    let depth = arch.depth();
    let mut v = x.to_vec();
    for l in 1..=depth {
        let m = w.layer(l);
        let scale = 1.0 / (arch.fan_in(l) as f64).sqrt();
        let mut u = vec![0.0; arch.size(l)];
        for (unit, out) in u.iter_mut().enumerate() {
            let row = m.row(unit);
            let mut acc = row[0];
            for (j, &vj) in v.iter().enumerate() {
                acc += row[j + 1] * vj;
            }
            *out = scale * acc;
        }
        v = if l < depth {
            u.iter().map(|&p| if p >= 0.0 { 1.0 } else { -1.0 }).collect()
        } else {
            u
        };
    }
    Ok(Prediction { label: argmax_lowest_tie(&v), scores: v })
}

/// Posterior moments frozen into per-entry mean and variance matrices for
/// fast repeated evaluation, with an optional deterministic activation
/// scale (the test-time counterpart of training-time dropout: activations
/// trained under keep-probability `p` are scaled by `p` at test time).
#[derive(Debug, Clone)]
pub struct ExpectationModel {
    arch: Arc<Architecture>,
    means: Vec<Matrix>,
    vars: Vec<Matrix>,
    /// Plan whose keep-probability drives test-phase scaling; `None` when
    /// the scale is 1.
    boundary: Option<DropoutPlan>,
}

impl ExpectationModel {
    fn from_matrices(
        arch: Arc<Architecture>,
        means: Vec<Matrix>,
        vars: Vec<Matrix>,
        activation_scale: f64,
    ) -> Result<Self, EngineError> {
        let boundary = if activation_scale == 1.0 {
            None
        } else {
            Some(DropoutPlan::all_kept(&arch, DropoutConfig::new(activation_scale)?))
        };
        Ok(ExpectationModel { arch, means, vars, boundary })
    }

    /// Freezes a binary posterior (`tanh(h)` means, `sech^2(h)` variances,
    /// unit-variance biases).
    pub fn from_binary(post: &BinaryPosterior, activation_scale: f64) -> Result<Self, EngineError> {
        Self::from_matrices(
            post.arch().clone(),
            post.mean_weights(),
            post.variance_matrices(),
            activation_scale,
        )
    }

    /// Freezes a real-weight posterior (means and variances as stored).
    pub fn from_real(post: &RealPosterior, activation_scale: f64) -> Result<Self, EngineError> {
        Self::from_matrices(
            post.arch().clone(),
            post.mean_layers().to_vec(),
            post.var_layers().to_vec(),
            activation_scale,
        )
    }

    pub fn new(post: &Posterior, activation_scale: f64) -> Result<Self, EngineError> {
        match post {
            Posterior::Binary(p) => Self::from_binary(p, activation_scale),
            Posterior::Real(p) => Self::from_real(p, activation_scale),
        }
    }

    pub fn arch(&self) -> &Arc<Architecture> {
        &self.arch
    }

    /// Mean-field forward pass into caller-owned buffers.
    pub fn forward_into(&self, x: &[f64], fs: &mut ForwardState) -> Result<(), EngineError> {
        engine::moment_forward_into(&self.arch, &self.means, &self.vars, x, Phase::Test, self.boundary.as_ref(), fs)
    }

    pub fn forward(&self, x: &[f64]) -> Result<ForwardState, EngineError> {
        let mut fs = ForwardState::new_for(&self.arch);
        self.forward_into(x, &mut fs)?;
        Ok(fs)
    }

    /// Classifies `x`, reusing forward buffers. Scores are log-odds of the
    /// output mean activations.
    pub fn predict_with(&self, x: &[f64], fs: &mut ForwardState) -> Result<Prediction, EngineError> {
        self.forward_into(x, fs)?;
        let scores: Vec<f64> = fs
            .output_activations()
            .iter()
            .map(|&nu| log_odds(nu).expect("mean activation stays inside (-1, 1)"))
            .collect();
        Ok(Prediction { label: argmax_lowest_tie(&scores), scores })
    }

    pub fn predict(&self, x: &[f64]) -> Result<Prediction, EngineError> {
        let mut fs = ForwardState::new_for(&self.arch);
        self.predict_with(x, &mut fs)
    }
}

/// One-shot probabilistic readout of a posterior (no test-time scaling).
/// For repeated evaluation build an [`ExpectationModel`] once instead.
pub fn predict_probabilistic(post: &Posterior, x: &[f64]) -> Result<Prediction, EngineError> {
    ExpectationModel::new(post, 1.0)?.predict(x)
}

/// Fraction of `data` misclassified by `predict`. Errors on an empty
/// dataset (an error rate of an empty set is meaningless).
pub fn evaluate(
    mut predict: impl FnMut(&[f64]) -> Result<Prediction, EngineError>,
    data: &DatasetView,
) -> Result<f64, EngineError> {
    if data.is_empty() {
        return Err(EngineError::EmptyDataset);
    }
    let mut errors = 0usize;
    for i in 0..data.len() {
        let (x, _) = data.sample(i);
        if predict(x)?.label != usize::from(data.label(i)) {
            errors += 1;
        }
    }
    Ok(errors as f64 / data.len() as f64)
}

/// Test error of the clipped-weight sign network.
pub fn evaluate_deterministic(w: &WeightConfiguration, data: &DatasetView) -> Result<f64, EngineError> {
    evaluate(|x| predict_deterministic(w, x), data)
}

/// Test error of the probabilistic readout (buffers reused across samples).
pub fn evaluate_probabilistic(model: &ExpectationModel, data: &DatasetView) -> Result<f64, EngineError> {
    let mut fs = ForwardState::new_for(&model.arch);
    evaluate(|x| model.predict_with(x, &mut fs), data)
}
