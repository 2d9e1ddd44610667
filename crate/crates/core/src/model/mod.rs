//! The conditional recurrent variational autoencoder.
//!
//! Encoder: per-timestep inputs (padded to an even width) get a
//! sinusoidal positional code added, the condition vector appended, and
//! run through a bidirectional LSTM.  The concatenated hidden states
//! feed variational multi-head self-attention: per-head scaled
//! dot-product scores, row softmax, deterministic contexts, and a
//! per-head Gaussian posterior over the context.  A final affine head
//! maps the attention output to the latent sequence's mean and
//! log-variance.  The decoder mirrors the encoder: latents plus
//! condition through a second Bi-LSTM, then an affine readout.
//!
//! Training maximizes the evidence lower bound: reconstruction MSE plus
//! two weighted KL terms (latent and attention posteriors against the
//! standard normal prior).
//!
//! All stochasticity flows through a [`NoisePlan`] drawn up front, so a
//! forward pass is a deterministic function of (parameters, inputs,
//! plan) — which is what makes finite-difference gradient checking and
//! reproducible training possible.

mod checkpoint;
mod forward;
mod train;

pub use checkpoint::{load_checkpoint, save_checkpoint};
pub use forward::positional_encoding;
pub use train::{train, train_with, Adam, EpochStats, TrainOptions, TrainingReport};

use crate::error::{Error, Result};
use crate::gradcheck::ParamMap;
use crate::seed;
use crate::tensor::Tensor;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

// ── Configuration ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    /// Timesteps per window (every series is one window here).
    pub window_length: usize,
    /// Channels per timestep; the panels in this crate are univariate.
    #[serde(default = "default_input_dim")]
    pub input_dim: usize,
    /// Length of the static condition vector (0 = unconditional).
    #[serde(default)]
    pub condition_dim: usize,
    /// LSTM units per direction.
    #[serde(default = "default_hidden_units")]
    pub hidden_units: usize,
    /// Latent channels per timestep.
    pub latent_dim: usize,
    /// Attention heads; must divide 2 * hidden_units.
    #[serde(default = "default_num_heads")]
    pub num_heads: usize,
    #[serde(default)]
    pub dropout_rate: f64,
    /// Weight on the latent-sequence KL term.
    #[serde(default = "default_kl_weight")]
    pub kl_weight_latent: f64,
    /// Weight on the attention-posterior KL term.
    #[serde(default = "default_kl_weight")]
    pub kl_weight_attention: f64,
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_input_dim() -> usize {
    1
}
fn default_hidden_units() -> usize {
    256
}
fn default_num_heads() -> usize {
    4
}
fn default_kl_weight() -> f64 {
    1.0
}
fn default_learning_rate() -> f64 {
    0.001
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            window_length: 96,
            input_dim: 1,
            condition_dim: 0,
            hidden_units: 256,
            latent_dim: 8,
            num_heads: 4,
            dropout_rate: 0.1,
            kl_weight_latent: 1.0,
            kl_weight_attention: 1.0,
            learning_rate: 0.001,
            seed: 0,
        }
    }
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.window_length == 0 {
            return Err(Error::config("window_length must be positive"));
        }
        if self.input_dim == 0 {
            return Err(Error::config("input_dim must be positive"));
        }
        if self.hidden_units == 0 {
            return Err(Error::config("hidden_units must be positive"));
        }
        if self.latent_dim == 0 {
            return Err(Error::config("latent_dim must be positive"));
        }
        if self.num_heads == 0 {
            return Err(Error::config("num_heads must be positive"));
        }
        if self.attention_width() % self.num_heads != 0 {
            return Err(Error::config(format!(
                "num_heads ({}) must divide the attention width ({})",
                self.num_heads,
                self.attention_width()
            )));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::config(format!(
                "dropout_rate {} outside [0, 1)",
                self.dropout_rate
            )));
        }
        if self.kl_weight_latent < 0.0 || self.kl_weight_attention < 0.0 {
            return Err(Error::config("KL weights must be nonnegative"));
        }
        if self.learning_rate < 0.0 {
            return Err(Error::config("learning_rate must be nonnegative"));
        }
        Ok(())
    }

    /// Data channels padded up to an even width so the sinusoidal code
    /// always has sin/cos pairs.
    pub fn padded_input_dim(&self) -> usize {
        self.input_dim + self.input_dim % 2
    }

    /// Per-timestep encoder input width: padded data plus condition.
    pub fn encoder_input_dim(&self) -> usize {
        self.padded_input_dim() + self.condition_dim
    }

    /// Concatenated Bi-LSTM width, which is also the attention width.
    pub fn attention_width(&self) -> usize {
        2 * self.hidden_units
    }

    pub fn head_width(&self) -> usize {
        self.attention_width() / self.num_heads
    }

    pub fn decoder_input_dim(&self) -> usize {
        self.latent_dim + self.condition_dim
    }
}

// ── Parameters ──────────────────────────────────────────────────────

/// Expected shape of every parameter tensor, keyed by name.  The name
/// set is the single source of truth for init, checkpoints, and the
/// optimizer.
pub fn param_shapes(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    let d = config.hidden_units;
    let a = config.attention_width();
    let w = config.head_width();
    let c = config.condition_dim;
    let mut shapes = Vec::new();
    for dir in ["fwd", "bwd"] {
        shapes.push((
            format!("encoder.{dir}.w"),
            vec![config.encoder_input_dim() + d, 4 * d],
        ));
        shapes.push((format!("encoder.{dir}.b"), vec![1, 4 * d]));
    }
    for h in 0..config.num_heads {
        shapes.push((format!("attn.h{h}.mu.w"), vec![w + c, w]));
        shapes.push((format!("attn.h{h}.mu.b"), vec![1, w]));
        shapes.push((format!("attn.h{h}.logvar.w"), vec![w + c, w]));
        shapes.push((format!("attn.h{h}.logvar.b"), vec![1, w]));
    }
    shapes.push(("attn.out.w".into(), vec![a, a]));
    shapes.push(("attn.out.b".into(), vec![1, a]));
    shapes.push(("latent.mu.w".into(), vec![a, config.latent_dim]));
    shapes.push(("latent.mu.b".into(), vec![1, config.latent_dim]));
    shapes.push(("latent.logvar.w".into(), vec![a, config.latent_dim]));
    shapes.push(("latent.logvar.b".into(), vec![1, config.latent_dim]));
    for dir in ["fwd", "bwd"] {
        shapes.push((
            format!("decoder.{dir}.w"),
            vec![config.decoder_input_dim() + d, 4 * d],
        ));
        shapes.push((format!("decoder.{dir}.b"), vec![1, 4 * d]));
    }
    shapes.push(("readout.w".into(), vec![a, config.input_dim]));
    shapes.push(("readout.b".into(), vec![1, config.input_dim]));
    shapes
}

/// Glorot-uniform weights, zero biases.  Each tensor draws from its own
/// name-derived stream, so initialization does not depend on iteration
/// order.
pub fn init_params(config: &ModelConfig) -> Result<ParamMap> {
    config.validate()?;
    let mut params = ParamMap::new();
    for (name, shape) in param_shapes(config) {
        let t = if name.ends_with(".b") {
            Tensor::zeros(&shape)
        } else {
            let fan_in = shape[0] as f64;
            let fan_out = shape[1] as f64;
            let limit = (6.0 / (fan_in + fan_out)).sqrt();
            let mut rng = seed::rng_from(seed::derive(config.seed, &format!("init:{name}")));
            let data: Vec<f64> = (0..shape.iter().product::<usize>())
                .map(|_| rng.random_range(-limit..limit))
                .collect();
            Tensor::new(shape.clone(), data)?
        };
        params.insert(name, t);
    }
    Ok(params)
}

pub fn count_params(params: &ParamMap) -> usize {
    params.values().map(Tensor::len).sum()
}

// ── Noise plans ─────────────────────────────────────────────────────

/// Every random draw a stochastic forward pass needs, materialized up
/// front: reparameterization noise for the attention and latent
/// posteriors, plus inverted-dropout masks during training.
#[derive(Debug, Clone)]
pub struct NoisePlan {
    /// T x attention_width standard normals for the per-head contexts.
    pub eps_attention: Tensor,
    /// T x latent_dim standard normals for the latent sequence.
    pub eps_latent: Tensor,
    /// Mask applied to the encoder's hidden states (None = no dropout).
    pub dropout_hidden: Option<Tensor>,
    /// Mask applied to the attention output.
    pub dropout_attention: Option<Tensor>,
}

impl NoisePlan {
    /// Reparameterization noise only (inference-time sampling).
    pub fn sample(config: &ModelConfig, rng: &mut impl Rng) -> NoisePlan {
        let t = config.window_length;
        let a = config.attention_width();
        let normal = |rng: &mut dyn rand::RngCore, n: usize| -> Vec<f64> {
            (0..n).map(|_| StandardNormal.sample(rng)).collect()
        };
        NoisePlan {
            eps_attention: Tensor::new(vec![t, a], normal(rng, t * a)).expect("shape"),
            eps_latent: Tensor::new(vec![t, config.latent_dim], normal(rng, t * config.latent_dim))
                .expect("shape"),
            dropout_hidden: None,
            dropout_attention: None,
        }
    }

    /// Noise plus dropout masks (training).
    pub fn sample_training(config: &ModelConfig, rng: &mut impl Rng) -> NoisePlan {
        let mut plan = Self::sample(config, rng);
        if config.dropout_rate > 0.0 {
            let t = config.window_length;
            let a = config.attention_width();
            let p = config.dropout_rate;
            let keep_scale = 1.0 / (1.0 - p);
            let mask = |rng: &mut dyn rand::RngCore| -> Tensor {
                let data: Vec<f64> = (0..t * a)
                    .map(|_| {
                        if rng.random::<f64>() < p {
                            0.0
                        } else {
                            keep_scale
                        }
                    })
                    .collect();
                Tensor::new(vec![t, a], data).expect("shape")
            };
            plan.dropout_hidden = Some(mask(rng));
            plan.dropout_attention = Some(mask(rng));
        }
        plan
    }

    /// The all-mean, no-dropout plan: zero noise.
    pub fn deterministic(config: &ModelConfig) -> NoisePlan {
        NoisePlan {
            eps_attention: Tensor::zeros(&[config.window_length, config.attention_width()]),
            eps_latent: Tensor::zeros(&[config.window_length, config.latent_dim]),
            dropout_hidden: None,
            dropout_attention: None,
        }
    }
}

/// How a forward pass treats the posterior distributions.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EncodeMode {
    /// Use the posterior means; fully deterministic.
    Mean,
    /// Reparameterized sampling with the given seed.
    Sample { seed: u64 },
}

// ── Result types ────────────────────────────────────────────────────

/// Encoder output: per-timestep latent Gaussians and the realized values.
#[derive(Debug, Clone)]
pub struct LatentSequence {
    /// T x latent_dim posterior means.
    pub mean: Tensor,
    /// T x latent_dim posterior variances (always positive).
    pub variance: Tensor,
    /// T x latent_dim realized latents; equals `mean` in mean mode.
    pub values: Tensor,
}

/// Hidden states of a bidirectional LSTM pass.
#[derive(Debug, Clone)]
pub struct BiLstmState {
    /// T x hidden_units, forward direction.
    pub forward: Tensor,
    /// T x hidden_units, backward direction.
    pub backward: Tensor,
    /// T x 2*hidden_units, per-timestep concatenation [fwd; bwd].
    pub concat: Tensor,
}

/// Variational multi-head attention output.
#[derive(Debug, Clone)]
pub struct AttentionResult {
    /// Per-head T x T score matrices (scaled dot products).
    pub scores: Vec<Tensor>,
    /// Per-head T x T row-stochastic attention weights.
    pub weights: Vec<Tensor>,
    /// T x attention_width deterministic contexts (heads concatenated).
    pub deterministic: Tensor,
    /// T x attention_width posterior context means.
    pub context_mean: Tensor,
    /// T x attention_width posterior context variances.
    pub context_variance: Tensor,
    /// T x attention_width realized contexts after the output projection.
    pub projected: Tensor,
}

/// The ELBO components of one forward pass.  The invariant
/// `total = reconstruction + b1*kl_latent + b2*kl_attention`
/// holds exactly because `total` is computed from the same nodes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ElboBreakdown {
    pub total: f64,
    pub reconstruction: f64,
    pub kl_latent: f64,
    pub kl_attention: f64,
}

// ── The model ───────────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct Model {
    pub config: ModelConfig,
    pub params: ParamMap,
}

impl Model {
    /// Fresh model with seeded Glorot initialization.
    pub fn init(config: ModelConfig) -> Result<Model> {
        let params = init_params(&config)?;
        Ok(Model { config, params })
    }

    /// Wrap existing parameters, validating their shapes.
    pub fn from_params(config: ModelConfig, params: ParamMap) -> Result<Model> {
        config.validate()?;
        for (name, shape) in param_shapes(&config) {
            match params.get(&name) {
                None => {
                    return Err(Error::config(format!("missing parameter '{name}'")));
                }
                Some(t) if t.shape() != shape.as_slice() => {
                    return Err(Error::config(format!(
                        "parameter '{name}' has shape {:?}, expected {:?}",
                        t.shape(),
                        shape
                    )));
                }
                _ => {}
            }
        }
        if params.len() != param_shapes(&config).len() {
            return Err(Error::config(format!(
                "parameter set has {} tensors, expected {}",
                params.len(),
                param_shapes(&config).len()
            )));
        }
        Ok(Model { config, params })
    }

    fn check_window(&self, window: &Tensor) -> Result<()> {
        if window.shape() != [self.config.window_length, self.config.input_dim] {
            return Err(Error::numerical(format!(
                "window shape {:?} does not match config ({} x {})",
                window.shape(),
                self.config.window_length,
                self.config.input_dim
            )));
        }
        if !window.all_finite() {
            return Err(Error::numerical("window contains non-finite values"));
        }
        Ok(())
    }

    fn check_condition(&self, condition: &[f64]) -> Result<()> {
        if condition.len() != self.config.condition_dim {
            return Err(Error::numerical(format!(
                "condition has {} entries, config expects {}",
                condition.len(),
                self.config.condition_dim
            )));
        }
        Ok(())
    }

    fn plan_for(&self, mode: EncodeMode) -> NoisePlan {
        match mode {
            EncodeMode::Mean => NoisePlan::deterministic(&self.config),
            EncodeMode::Sample { seed } => {
                let mut rng = seed::rng_from(seed);
                NoisePlan::sample(&self.config, &mut rng)
            }
        }
    }

    /// Encode one window into its latent sequence.
    pub fn encode(
        &self,
        window: &Tensor,
        condition: &[f64],
        mode: EncodeMode,
    ) -> Result<LatentSequence> {
        self.check_window(window)?;
        self.check_condition(condition)?;
        let plan = self.plan_for(mode);
        let use_mean = mode == EncodeMode::Mean;
        forward::encode_values(&self.config, &self.params, window, condition, &plan, use_mean)
    }

    /// Decode a T x latent_dim sequence back to a T x input_dim window.
    pub fn decode(&self, latents: &Tensor, condition: &[f64]) -> Result<Tensor> {
        if latents.shape() != [self.config.window_length, self.config.latent_dim] {
            return Err(Error::numerical(format!(
                "latent shape {:?} does not match config ({} x {})",
                latents.shape(),
                self.config.window_length,
                self.config.latent_dim
            )));
        }
        self.check_condition(condition)?;
        forward::decode_values(&self.config, &self.params, latents, condition)
    }

    /// Mean-mode reconstruction of every series in a panel
    /// (normalized scale, univariate models only).
    pub fn reconstruct(&self, dataset: &crate::data::TimeSeriesDataset) -> Result<Vec<Vec<f64>>> {
        let conditions = self.dataset_conditions(dataset)?;
        let mut out = Vec::with_capacity(dataset.num_series());
        for i in 0..dataset.num_series() {
            let window = Tensor::column(dataset.series(i));
            let lat = self.encode(&window, &conditions[i], EncodeMode::Mean)?;
            let rec = self.decode(&lat.values, &conditions[i])?;
            out.push(rec.data().to_vec());
        }
        Ok(out)
    }

    /// Mean reconstruction MSE over a panel.
    pub fn reconstruction_mse(&self, dataset: &crate::data::TimeSeriesDataset) -> Result<f64> {
        let rec = self.reconstruct(dataset)?;
        let mut sum = 0.0;
        let mut n = 0usize;
        for (orig, r) in dataset.values().iter().zip(&rec) {
            for (x, y) in orig.iter().zip(r) {
                sum += (x - y) * (x - y);
                n += 1;
            }
        }
        Ok(sum / n as f64)
    }

    /// Validate a panel against the config and produce per-series
    /// condition vectors from its group labels.
    pub fn dataset_conditions(
        &self,
        dataset: &crate::data::TimeSeriesDataset,
    ) -> Result<Vec<Vec<f64>>> {
        if self.config.input_dim != 1 {
            return Err(Error::config(
                "panel operations require input_dim = 1 (univariate series)",
            ));
        }
        if dataset.series_len() != self.config.window_length {
            return Err(Error::data(format!(
                "series length {} does not match the model window length {}",
                dataset.series_len(),
                self.config.window_length
            )));
        }
        let (dim, vecs) = dataset.condition_vectors();
        if dim != self.config.condition_dim {
            return Err(Error::config(format!(
                "dataset implies condition_dim {dim} but the model was configured with {}",
                self.config.condition_dim
            )));
        }
        Ok(vecs)
    }

    /// Run just the encoder's Bi-LSTM (positional code and condition
    /// included) and return its hidden states.
    pub fn encoder_states(&self, window: &Tensor, condition: &[f64]) -> Result<BiLstmState> {
        self.check_window(window)?;
        self.check_condition(condition)?;
        forward::encoder_bilstm_values(&self.config, &self.params, window, condition)
    }

    /// Apply variational multi-head attention to a given T x width
    /// hidden-state matrix.
    pub fn attention(
        &self,
        hidden: &Tensor,
        condition: &[f64],
        mode: EncodeMode,
    ) -> Result<AttentionResult> {
        self.check_condition(condition)?;
        if hidden.shape() != [self.config.window_length, self.config.attention_width()] {
            return Err(Error::numerical(format!(
                "hidden shape {:?} does not match config ({} x {})",
                hidden.shape(),
                self.config.window_length,
                self.config.attention_width()
            )));
        }
        let plan = self.plan_for(mode);
        let use_mean = mode == EncodeMode::Mean;
        forward::attention_values(&self.config, &self.params, hidden, condition, &plan, use_mean)
    }

    /// ELBO components for one window under a frozen noise plan.
    pub fn elbo(
        &self,
        window: &Tensor,
        condition: &[f64],
        plan: &NoisePlan,
    ) -> Result<ElboBreakdown> {
        self.check_window(window)?;
        self.check_condition(condition)?;
        let batch = [(window.clone(), condition.to_vec())];
        let plans = [plan.clone()];
        let (breakdown, _) = forward::elbo_batch(&self.config, &self.params, &batch, &plans, false)?;
        Ok(breakdown)
    }

    /// ELBO plus its gradient with respect to every parameter, for one
    /// window under a frozen noise plan.  This is the training
    /// objective restricted to a singleton batch, which makes it the
    /// natural target for finite-difference verification.
    pub fn elbo_with_gradients(
        &self,
        window: &Tensor,
        condition: &[f64],
        plan: &NoisePlan,
    ) -> Result<(ElboBreakdown, ParamMap)> {
        self.check_window(window)?;
        self.check_condition(condition)?;
        let batch = [(window.clone(), condition.to_vec())];
        let plans = [plan.clone()];
        let (breakdown, grads) =
            forward::elbo_batch(&self.config, &self.params, &batch, &plans, true)?;
        Ok((breakdown, grads.expect("gradients requested")))
    }
}
