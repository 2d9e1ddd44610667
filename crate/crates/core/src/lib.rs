//! Latent-space augmentation for panels of univariate time series.
//!
//! The pipeline trains a conditional recurrent variational autoencoder
//! (Bi-LSTM encoder, variational multi-head self-attention bottleneck,
//! mirrored Bi-LSTM decoder) on a panel of series, then generates new
//! series either by perturbing the data directly (jitter, scaling,
//! magnitude warping) or by applying the same perturbations to the
//! encoded latent sequences and decoding the result.  Quality is judged
//! by Wasserstein-1 distances, reconstruction-error ratios, residual
//! statistics, and train-on-synthetic/test-on-real forecasting.
//!
//! Modules, bottom up:
//!
//! * [`tensor`] / [`tape`] — dense row-major `f64` tensors and a
//!   reverse-mode differentiation tape over them.
//! * [`gradcheck`] — central-finite-difference verification of analytic
//!   gradients.
//! * [`spline`] — natural cubic splines (used by magnitude warping).
//! * [`data`] — panel container, CSV round-trip, weekly resampling,
//!   top-k selection, min-max normalization, synthetic corpus.
//! * [`model`] — the autoencoder itself: configuration, parameters,
//!   forward graphs, ELBO training, checkpoints.
//! * [`transforms`] — parametric augmentations applied to data or to
//!   latent sequences.
//! * [`metrics`] — Wasserstein-1, distance reports, reconstruction
//!   ratios, residual statistics with KDE.
//! * [`tstr`] — windowing, a small RNN forecaster, and the
//!   train-synthetic/test-real comparison harness.
//! * [`calibrate`] — tunes the latent noise scale so latent and direct
//!   augmentation produce comparable distribution shift.
//! * [`report`] — the flat tabular text format every CLI artifact uses.

pub mod calibrate;
pub mod data;
pub mod error;
pub mod gradcheck;
pub mod metrics;
pub mod model;
pub mod report;
pub mod seed;
pub mod spline;
pub mod tape;
pub mod tensor;
pub mod transforms;
pub mod tstr;

pub use error::{Error, Result};
pub use tensor::Tensor;
