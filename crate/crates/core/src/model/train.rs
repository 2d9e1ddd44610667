//! ELBO training loop: seeded shuffling, per-batch noise plans, Adam.

use super::{forward, Model, NoisePlan};
use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::gradcheck::ParamMap;
use crate::seed;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::time::Instant;

// ── Options and reports ─────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOptions {
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
}

fn default_epochs() -> usize {
    200
}
fn default_batch_size() -> usize {
    8
}

impl Default for TrainOptions {
    fn default() -> Self {
        TrainOptions {
            epochs: default_epochs(),
            batch_size: default_batch_size(),
        }
    }
}

/// Loss components of one epoch, averaged over all series (batch means
/// weighted by batch size), plus the epoch's wall-clock cost.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub total: f64,
    pub reconstruction: f64,
    pub kl_latent: f64,
    pub kl_attention: f64,
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct TrainingReport {
    pub epochs: Vec<EpochStats>,
}

impl TrainingReport {
    pub fn first(&self) -> Option<&EpochStats> {
        self.epochs.first()
    }

    pub fn last(&self) -> Option<&EpochStats> {
        self.epochs.last()
    }
}

// ── Adam ────────────────────────────────────────────────────────────

/// Adam with bias correction (decay rates 0.9 / 0.999, epsilon 1e-8).
#[derive(Debug, Clone)]
pub struct Adam {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    step_count: u64,
    first_moment: ParamMap,
    second_moment: ParamMap,
}

impl Adam {
    pub fn new(learning_rate: f64) -> Adam {
        Adam {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step_count: 0,
            first_moment: ParamMap::new(),
            second_moment: ParamMap::new(),
        }
    }

    pub fn step_count(&self) -> u64 {
        self.step_count
    }

    /// One update in place.  Parameters without a gradient entry are
    /// left untouched; moment buffers are created lazily.
    pub fn step(&mut self, params: &mut ParamMap, grads: &ParamMap) -> Result<()> {
        self.step_count += 1;
        let t = self.step_count as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        for (name, p) in params.iter_mut() {
            let Some(g) = grads.get(name) else { continue };
            if g.shape() != p.shape() {
                return Err(Error::numerical(format!(
                    "gradient for '{name}' has shape {:?}, parameter is {:?}",
                    g.shape(),
                    p.shape()
                )));
            }
            let m = self
                .first_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let v = self
                .second_moment
                .entry(name.clone())
                .or_insert_with(|| Tensor::zeros(p.shape()));
            let (pd, gd) = (p.data_mut(), g.data());
            let (md, vd) = (m.data_mut(), v.data_mut());
            for i in 0..pd.len() {
                md[i] = self.beta1 * md[i] + (1.0 - self.beta1) * gd[i];
                vd[i] = self.beta2 * vd[i] + (1.0 - self.beta2) * gd[i] * gd[i];
                let m_hat = md[i] / bc1;
                let v_hat = vd[i] / bc2;
                pd[i] -= self.learning_rate * m_hat / (v_hat.sqrt() + self.epsilon);
            }
        }
        Ok(())
    }
}

// ── Training loop ───────────────────────────────────────────────────

/// Train in place.  Each epoch shuffles the series order with a seed
/// derived from (model seed, epoch), draws per-batch noise plans from
/// (model seed, epoch, batch), and applies one Adam step per batch.
/// The run is a pure function of (initial params, data, options).
pub fn train(
    model: &mut Model,
    data: &TimeSeriesDataset,
    options: &TrainOptions,
) -> Result<TrainingReport> {
    train_with(model, data, options, &mut |_| {})
}

/// [`train`] with a per-epoch observer (progress printing, early logs).
pub fn train_with(
    model: &mut Model,
    data: &TimeSeriesDataset,
    options: &TrainOptions,
    on_epoch: &mut dyn FnMut(&EpochStats),
) -> Result<TrainingReport> {
    if options.epochs == 0 {
        return Err(Error::config("epochs must be positive"));
    }
    if options.batch_size == 0 {
        return Err(Error::config("batch_size must be positive"));
    }
    let conditions = model.dataset_conditions(data)?;
    let windows: Vec<(Tensor, Vec<f64>)> = (0..data.num_series())
        .map(|i| (Tensor::column(data.series(i)), conditions[i].clone()))
        .collect();
    let n = windows.len();
    let root = model.config.seed;
    let mut adam = Adam::new(model.config.learning_rate);
    let mut report = TrainingReport::default();

    for epoch in 1..=options.epochs {
        let started = Instant::now();
        let mut order: Vec<usize> = (0..n).collect();
        let mut shuffle_rng = seed::rng_from(seed::derive_indexed(root, "shuffle", epoch as u64));
        fisher_yates(&mut order, &mut shuffle_rng);

        let mut sums = [0.0f64; 4];
        for (batch_index, chunk) in order.chunks(options.batch_size).enumerate() {
            let batch: Vec<(Tensor, Vec<f64>)> =
                chunk.iter().map(|&i| windows[i].clone()).collect();
            let mut noise_rng = seed::rng_from(seed::derive_indexed(
                root,
                "noise",
                ((epoch as u64) << 32) | batch_index as u64,
            ));
            let plans: Vec<NoisePlan> = (0..batch.len())
                .map(|_| NoisePlan::sample_training(&model.config, &mut noise_rng))
                .collect();
            let (breakdown, grads) =
                forward::elbo_batch(&model.config, &model.params, &batch, &plans, true)?;
            if !breakdown.total.is_finite() {
                return Err(Error::numerical(format!(
                    "training diverged at epoch {epoch}: loss is not finite"
                )));
            }
            let grads = grads.expect("gradients requested");
            adam.step(&mut model.params, &grads)?;
            let w = chunk.len() as f64;
            sums[0] += breakdown.total * w;
            sums[1] += breakdown.reconstruction * w;
            sums[2] += breakdown.kl_latent * w;
            sums[3] += breakdown.kl_attention * w;
        }

        let stats = EpochStats {
            epoch,
            total: sums[0] / n as f64,
            reconstruction: sums[1] / n as f64,
            kl_latent: sums[2] / n as f64,
            kl_attention: sums[3] / n as f64,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        on_epoch(&stats);
        report.epochs.push(stats);
    }
    Ok(report)
}

fn fisher_yates(order: &mut [usize], rng: &mut impl rand::Rng) {
    for i in (1..order.len()).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
}

// ────────────────────────────────────────────────────────────────────
