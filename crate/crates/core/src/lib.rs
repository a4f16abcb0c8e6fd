//! Mean-field training for multilayer networks with binary synapses.
//!
//! This crate implements an online Bayesian learning rule that maintains a
//! factorized posterior over discrete (sign) synaptic weights instead of
//! doing gradient descent on real ones. Each binary weight carries a single
//! natural parameter `h` with mean `tanh(h)`; each unit's bias is a real
//! Gaussian with unit variance. A presentation does three passes:
//!
//! 1. **Forward**: propagate activation means and variances through the
//!    network under a central-limit Gaussian approximation of each unit's
//!    normalized pre-activation ([`engine::forward`]).
//! 2. **Backward**: propagate the derivative of the target's log-likelihood
//!    with respect to each pre-activation mean ([`engine::backward`]).
//! 3. **Update**: move each weight's natural parameter by its input's
//!    share of that derivative ([`engine::update_step`]).
//!
//! Two posterior families share the engine: [`BinaryPosterior`] (sign
//! weights, the main object of study) and [`RealPosterior`] (a continuous
//! control with fixed unit variances). Trained posteriors are read out
//! either by clipping to the most probable sign network
//! ([`predict::predict_deterministic`]) or by propagating the full
//! posterior moments and scoring outputs by their log-odds
//! ([`predict::predict_probabilistic`]).
//!
//! Layers are dense or locally connected ([`spatial::ConnectivityMask`]),
//! inputs can be dropped out during training ([`engine::DropoutConfig`]),
//! and everything is deterministic given the three stream seeds in
//! [`checkpoint::Seeds`]. The [`oracle`] module holds brute-force reference
//! implementations (exact enumeration, finite differences) that the test
//! suite uses to validate the mean-field approximation end to end, and
//! [`mnist`] loads the digit-classification corpus the experiments run on.

pub mod checkpoint;
pub mod engine;
pub mod kernels;
pub mod matrix;
pub mod mnist;
pub mod model;
pub mod oracle;
pub mod predict;
pub mod rng;
pub mod spatial;

pub use checkpoint::{Checkpoint, Seeds};
pub use engine::{DropoutConfig, DropoutPlan, EngineError, EpochMetrics, ForwardState, Phase};
pub use kernels::{MathError, Probability};
pub use matrix::Matrix;
pub use mnist::{DatasetView, PreprocessedDataset};
pub use model::{Architecture, BinaryPosterior, Posterior, RealPosterior, WeightConfiguration};
pub use predict::{evaluate, ExpectationModel, Prediction};
pub use spatial::ConnectivityMask;
