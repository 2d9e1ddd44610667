//! Downstream forecasting utility: train-on-synthetic, test-on-real.
//!
//! A small recurrent forecaster is trained on sliding windows from one
//! panel and scored on held-out windows from the *real* panel.  Running
//! it once per augmentation regime — real data, directly transformed,
//! latent-transformed — with identical test windows makes the resulting
//! errors directly comparable: if augmented data carries the same
//! temporal structure as the original, the forecaster trained on it
//! should predict real futures about as well.
//!
//! The split is chronological and purged: a training window's entire
//! span (inputs and target) must end before the test region starts, and
//! a test window's target block must lie fully inside it.  Windows that
//! straddle the boundary are dropped, so no training window ever sees a
//! test-period value.

use crate::error::{Error, Result};
use crate::gradcheck::ParamMap;
use crate::model::Adam;
use crate::seed;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

// ── Configuration ───────────────────────────────────────────────────

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ForecasterConfig {
    /// Input timesteps per window.
    pub input_length: usize,
    /// Timesteps to predict.
    #[serde(default = "default_horizon")]
    pub horizon: usize,
    #[serde(default = "default_hidden")]
    pub hidden_units: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default = "default_batch")]
    pub batch_size: usize,
    #[serde(default = "default_lr")]
    pub learning_rate: f64,
    /// Fraction of each series' timeline reserved for testing.
    #[serde(default = "default_test_fraction")]
    pub test_fraction: f64,
    #[serde(default)]
    pub seed: u64,
}

fn default_horizon() -> usize {
    1
}
fn default_hidden() -> usize {
    16
}
fn default_epochs() -> usize {
    100
}
fn default_batch() -> usize {
    32
}
fn default_lr() -> f64 {
    0.01
}
fn default_test_fraction() -> f64 {
    0.2
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        ForecasterConfig {
            input_length: 12,
            horizon: default_horizon(),
            hidden_units: default_hidden(),
            epochs: default_epochs(),
            batch_size: default_batch(),
            learning_rate: default_lr(),
            test_fraction: default_test_fraction(),
            seed: 0,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<()> {
        if self.input_length == 0 || self.horizon == 0 {
            return Err(Error::config(
                "forecaster: input_length and horizon must be positive",
            ));
        }
        if self.hidden_units == 0 || self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::config(
                "forecaster: hidden_units, epochs, and batch_size must be positive",
            ));
        }
        if !(self.learning_rate.is_finite() && self.learning_rate >= 0.0) {
            return Err(Error::config("forecaster: bad learning rate"));
        }
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::config(
                "forecaster: test_fraction must lie strictly between 0 and 1",
            ));
        }
        Ok(())
    }
}

// ── Windowing and the purged split ──────────────────────────────────

/// All sliding (input, target) windows of one series, stride 1.
/// A series of length T yields T - input_length - horizon + 1 windows.
pub fn windowize(series: &[f64], input_length: usize, horizon: usize) -> Vec<(Vec<f64>, Vec<f64>)> {
    let span = input_length + horizon;
    if series.len() < span {
        return Vec::new();
    }
    (0..=series.len() - span)
        .map(|i| {
            (
                series[i..i + input_length].to_vec(),
                series[i + input_length..i + span].to_vec(),
            )
        })
        .collect()
}

/// Window matrices for one purged chronological split.
#[derive(Debug, Clone)]
pub struct ForecastSplit {
    /// N x input_length.
    pub train_inputs: Tensor,
    /// N x horizon.
    pub train_targets: Tensor,
    /// M x input_length.
    pub test_inputs: Tensor,
    /// M x horizon.
    pub test_targets: Tensor,
}

/// First time index of the test region for series of length `t_len`.
fn test_start_time(t_len: usize, config: &ForecasterConfig) -> usize {
    let test_len = ((t_len as f64) * config.test_fraction).ceil() as usize;
    t_len - test_len.max(config.horizon).min(t_len)
}

/// Pool purged-split windows over every series of a panel.
pub fn build_split(panel: &[Vec<f64>], config: &ForecasterConfig) -> Result<ForecastSplit> {
    config.validate()?;
    if panel.is_empty() {
        return Err(Error::data("forecaster: empty panel"));
    }
    let span = config.input_length + config.horizon;
    let mut train: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    let mut test: Vec<(Vec<f64>, Vec<f64>)> = Vec::new();
    for series in panel {
        let t_len = series.len();
        let boundary = test_start_time(t_len, config);
        for (i, w) in windowize(series, config.input_length, config.horizon)
            .into_iter()
            .enumerate()
        {
            if i + span <= boundary {
                train.push(w);
            } else if i + config.input_length >= boundary {
                test.push(w);
            }
            // else: straddles the boundary — purged
        }
    }
    if train.is_empty() || test.is_empty() {
        return Err(Error::data(format!(
            "forecaster: series too short for input_length {} + horizon {} with test_fraction {} \
             ({} train / {} test windows)",
            config.input_length,
            config.horizon,
            config.test_fraction,
            train.len(),
            test.len()
        )));
    }
    let pack = |windows: Vec<(Vec<f64>, Vec<f64>)>| -> (Tensor, Tensor) {
        let n = windows.len();
        let mut inputs = Tensor::zeros(&[n, config.input_length]);
        let mut targets = Tensor::zeros(&[n, config.horizon]);
        for (r, (x, y)) in windows.into_iter().enumerate() {
            for (c, v) in x.into_iter().enumerate() {
                inputs.set(r, c, v);
            }
            for (c, v) in y.into_iter().enumerate() {
                targets.set(r, c, v);
            }
        }
        (inputs, targets)
    };
    let (train_inputs, train_targets) = pack(train);
    let (test_inputs, test_targets) = pack(test);
    Ok(ForecastSplit {
        train_inputs,
        train_targets,
        test_inputs,
        test_targets,
    })
}

// ── The forecaster ──────────────────────────────────────────────────

/// Elman-style tanh recurrence with an affine readout of the final
/// hidden state.  Parameters: input map (1 x H), recurrence (H x H),
/// bias (1 x H), readout (H x horizon), readout bias (1 x horizon).
#[derive(Debug, Clone)]
pub struct Forecaster {
    pub config: ForecasterConfig,
    pub params: ParamMap,
}

fn init_forecaster_params(config: &ForecasterConfig) -> ParamMap {
    use rand::Rng;
    let h = config.hidden_units;
    let shapes: [(&str, usize, usize); 5] = [
        ("w_in", 1, h),
        ("w_h", h, h),
        ("b", 1, h),
        ("w_out", h, config.horizon),
        ("b_out", 1, config.horizon),
    ];
    let mut params = ParamMap::new();
    for (name, rows, cols) in shapes {
        let t = if name.starts_with('b') {
            Tensor::zeros(&[rows, cols])
        } else {
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let mut rng =
                seed::rng_from(seed::derive(config.seed, &format!("forecaster-init:{name}")));
            Tensor::from_fn(rows, cols, |_, _| rng.random_range(-limit..limit))
        };
        params.insert(name.to_string(), t);
    }
    params
}

/// Unrolled forward pass over a B x input_length batch; returns the
/// B x horizon prediction node.
fn rnn_graph(
    tape: &mut Tape,
    ids: &BTreeMap<String, ValueId>,
    inputs: ValueId,
    batch_rows: usize,
    config: &ForecasterConfig,
) -> Result<ValueId> {
    let h_units = config.hidden_units;
    let mut h = tape.leaf(Tensor::zeros(&[batch_rows, h_units]));
    for t in 0..config.input_length {
        let x_t = tape.slice_cols(inputs, t, t + 1)?;
        let from_x = tape.matmul(x_t, ids["w_in"])?;
        let from_h = tape.matmul(h, ids["w_h"])?;
        let lin = tape.add(from_x, from_h)?;
        let pre = tape.add_row_broadcast(lin, ids["b"])?;
        h = tape.tanh(pre)?;
    }
    let out = tape.matmul(h, ids["w_out"])?;
    tape.add_row_broadcast(out, ids["b_out"])
}

impl Forecaster {
    pub fn init(config: ForecasterConfig) -> Result<Forecaster> {
        config.validate()?;
        let params = init_forecaster_params(&config);
        Ok(Forecaster { config, params })
    }

    /// Predictions for a B x input_length batch.
    pub fn predict(&self, inputs: &Tensor) -> Result<Tensor> {
        if inputs.cols() != self.config.input_length {
            return Err(Error::numerical(format!(
                "forecaster: {} input columns, expected {}",
                inputs.cols(),
                self.config.input_length
            )));
        }
        let mut tape = Tape::new();
        let ids: BTreeMap<String, ValueId> = self
            .params
            .iter()
            .map(|(n, t)| (n.clone(), tape.leaf(t.clone())))
            .collect();
        let x = tape.leaf(inputs.clone());
        let y = rnn_graph(&mut tape, &ids, x, inputs.rows(), &self.config)?;
        Ok(tape.value(y).clone())
    }

    /// Mini-batch Adam on the squared error.  Returns the final
    /// epoch's mean training loss.
    pub fn fit(&mut self, inputs: &Tensor, targets: &Tensor) -> Result<f64> {
        if inputs.rows() != targets.rows() {
            return Err(Error::numerical("forecaster: input/target row mismatch"));
        }
        let n = inputs.rows();
        let mut adam = Adam::new(self.config.learning_rate);
        let mut last_epoch_loss = f64::NAN;
        for epoch in 1..=self.config.epochs {
            let mut order: Vec<usize> = (0..n).collect();
            let mut rng = seed::rng_from(seed::derive_indexed(
                self.config.seed,
                "forecaster-shuffle",
                epoch as u64,
            ));
            for i in (1..order.len()).rev() {
                use rand::Rng;
                let j = rng.random_range(0..=i);
                order.swap(i, j);
            }
            let mut loss_sum = 0.0;
            for chunk in order.chunks(self.config.batch_size) {
                let xb = gather_rows(inputs, chunk);
                let yb = gather_rows(targets, chunk);
                let mut tape = Tape::new();
                let ids: BTreeMap<String, ValueId> = self
                    .params
                    .iter()
                    .map(|(name, t)| (name.clone(), tape.leaf(t.clone())))
                    .collect();
                let x = tape.leaf(xb);
                let target = tape.leaf(yb);
                let pred = rnn_graph(&mut tape, &ids, x, chunk.len(), &self.config)?;
                let err = tape.sub(pred, target)?;
                let sq = tape.mul(err, err)?;
                let loss = tape.mean_all(sq)?;
                let loss_value = tape.value(loss).item()?;
                if !loss_value.is_finite() {
                    return Err(Error::numerical(format!(
                        "forecaster diverged at epoch {epoch}"
                    )));
                }
                loss_sum += loss_value * chunk.len() as f64;
                let grads = tape.backward(loss)?;
                let mut grad_map = ParamMap::new();
                for (name, node) in &ids {
                    grad_map.insert(name.clone(), grads.wrt(*node, &tape));
                }
                adam.step(&mut self.params, &grad_map)?;
            }
            last_epoch_loss = loss_sum / n as f64;
        }
        Ok(last_epoch_loss)
    }
}

fn gather_rows(t: &Tensor, rows: &[usize]) -> Tensor {
    let mut out = Tensor::zeros(&[rows.len(), t.cols()]);
    for (r, &src) in rows.iter().enumerate() {
        for c in 0..t.cols() {
            out.set(r, c, t.at(src, c));
        }
    }
    out
}

// ── Scoring ─────────────────────────────────────────────────────────

/// One regime's result: train on `train_panel` windows, score on the
/// real panel's test windows.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrOutcome {
    pub train_windows: usize,
    pub test_windows: usize,
    pub final_train_loss: f64,
    pub mae: f64,
    pub rmse: f64,
}

/// Train a fresh forecaster on one panel, test on the real panel's
/// held-out windows.  Both panels must share length and scale; the
/// test windows depend only on (real panel, config), so every regime
/// scored with the same pair sees byte-identical test data.
pub fn tstr_run(
    train_panel: &[Vec<f64>],
    real_panel: &[Vec<f64>],
    config: &ForecasterConfig,
) -> Result<TstrOutcome> {
    let train_split = build_split(train_panel, config)?;
    let real_split = build_split(real_panel, config)?;
    let mut forecaster = Forecaster::init(config.clone())?;
    let final_train_loss = forecaster.fit(&train_split.train_inputs, &train_split.train_targets)?;
    let pred = forecaster.predict(&real_split.test_inputs)?;
    let (mae, rmse) = prediction_errors(&pred, &real_split.test_targets)?;
    Ok(TstrOutcome {
        train_windows: train_split.train_inputs.rows(),
        test_windows: real_split.test_inputs.rows(),
        final_train_loss,
        mae,
        rmse,
    })
}

fn prediction_errors(pred: &Tensor, target: &Tensor) -> Result<(f64, f64)> {
    if pred.shape() != target.shape() {
        return Err(Error::numerical("tstr: prediction/target shape mismatch"));
    }
    let n = pred.len() as f64;
    let mut abs_sum = 0.0;
    let mut sq_sum = 0.0;
    for (p, t) in pred.data().iter().zip(target.data()) {
        let e = p - t;
        abs_sum += e.abs();
        sq_sum += e * e;
    }
    Ok((abs_sum / n, (sq_sum / n).sqrt()))
}

/// The three-regime comparison (real, direct, latent), all scored on
/// the real panel's test windows with the same forecaster seed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TstrComparison {
    pub original: TstrOutcome,
    pub direct: TstrOutcome,
    pub latent: TstrOutcome,
}

pub fn tstr_compare(
    original_panel: &[Vec<f64>],
    direct_panel: &[Vec<f64>],
    latent_panel: &[Vec<f64>],
    config: &ForecasterConfig,
) -> Result<TstrComparison> {
    Ok(TstrComparison {
        original: tstr_run(original_panel, original_panel, config)?,
        direct: tstr_run(direct_panel, original_panel, config)?,
        latent: tstr_run(latent_panel, original_panel, config)?,
    })
}

// ────────────────────────────────────────────────────────────────────
