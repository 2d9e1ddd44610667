//! Forward-graph construction for the autoencoder.
//!
//! Every entry point builds a fresh tape, registers the parameters as
//! leaves, wires the requested subgraph, and either reads values back
//! or runs the backward pass.  Training and inference share these
//! builders, so there is exactly one definition of the network.

use super::{
    AttentionResult, BiLstmState, ElboBreakdown, LatentSequence, ModelConfig, NoisePlan,
};
use crate::error::{Error, Result};
use crate::gradcheck::ParamMap;
use crate::tape::{Tape, ValueId};
use crate::tensor::Tensor;
use std::collections::BTreeMap;

// ── Positional encoding ─────────────────────────────────────────────

/// Sinusoidal positional code: entry (t, 2i) = sin(t / 10000^(2i/width)),
/// entry (t, 2i+1) = cos of the same angle.  Width must be even.
pub fn positional_encoding(len: usize, width: usize) -> Result<Tensor> {
    if width == 0 || width % 2 != 0 {
        return Err(Error::numerical(format!(
            "positional encoding width must be even and positive, got {width}"
        )));
    }
    let mut pe = Tensor::zeros(&[len, width]);
    for t in 0..len {
        for i in 0..width / 2 {
            let angle = t as f64 / 10000f64.powf(2.0 * i as f64 / width as f64);
            pe.set(t, 2 * i, angle.sin());
            pe.set(t, 2 * i + 1, angle.cos());
        }
    }
    Ok(pe)
}

// ── Parameter registration ──────────────────────────────────────────

type Ids = BTreeMap<String, ValueId>;

fn register_params(tape: &mut Tape, params: &ParamMap) -> Ids {
    params
        .iter()
        .map(|(name, tensor)| (name.clone(), tape.leaf(tensor.clone())))
        .collect()
}

fn id(ids: &Ids, name: &str) -> Result<ValueId> {
    ids.get(name)
        .copied()
        .ok_or_else(|| Error::config(format!("missing parameter '{name}'")))
}

// ── LSTM ────────────────────────────────────────────────────────────

/// One LSTM direction over per-timestep input rows (each 1 x in_dim).
/// Returns hidden states in time order regardless of direction.
/// Weights hold the four gates side by side in [i, f, g, o] order.
fn lstm_direction(
    tape: &mut Tape,
    w: ValueId,
    b: ValueId,
    inputs: &[ValueId],
    hidden: usize,
    reverse: bool,
) -> Result<Vec<ValueId>> {
    let t_len = inputs.len();
    let mut h = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut c = tape.leaf(Tensor::zeros(&[1, hidden]));
    let mut states = vec![None; t_len];
    let order: Vec<usize> = if reverse {
        (0..t_len).rev().collect()
    } else {
        (0..t_len).collect()
    };
    for t in order {
        let cat = tape.concat_cols(inputs[t], h)?;
        let lin = tape.matmul(cat, w)?;
        let pre = tape.add_row_broadcast(lin, b)?;
        let i_pre = tape.slice_cols(pre, 0, hidden)?;
        let f_pre = tape.slice_cols(pre, hidden, 2 * hidden)?;
        let g_pre = tape.slice_cols(pre, 2 * hidden, 3 * hidden)?;
        let o_pre = tape.slice_cols(pre, 3 * hidden, 4 * hidden)?;
        let i_gate = tape.sigmoid(i_pre)?;
        let f_gate = tape.sigmoid(f_pre)?;
        let g_gate = tape.tanh(g_pre)?;
        let o_gate = tape.sigmoid(o_pre)?;
        let keep = tape.mul(f_gate, c)?;
        let write = tape.mul(i_gate, g_gate)?;
        c = tape.add(keep, write)?;
        let c_act = tape.tanh(c)?;
        h = tape.mul(o_gate, c_act)?;
        states[t] = Some(h);
    }
    Ok(states.into_iter().map(|s| s.expect("all steps visited")).collect())
}

/// Both directions stacked: returns (T x hidden fwd, T x hidden bwd,
/// T x 2*hidden concatenation).
fn bilstm(
    tape: &mut Tape,
    ids: &Ids,
    prefix: &str,
    inputs: &[ValueId],
    hidden: usize,
) -> Result<(ValueId, ValueId, ValueId)> {
    let w_f = id(ids, &format!("{prefix}.fwd.w"))?;
    let b_f = id(ids, &format!("{prefix}.fwd.b"))?;
    let w_b = id(ids, &format!("{prefix}.bwd.w"))?;
    let b_b = id(ids, &format!("{prefix}.bwd.b"))?;
    let fwd_rows = lstm_direction(tape, w_f, b_f, inputs, hidden, false)?;
    let bwd_rows = lstm_direction(tape, w_b, b_b, inputs, hidden, true)?;
    let fwd = tape.stack_rows(&fwd_rows)?;
    let bwd = tape.stack_rows(&bwd_rows)?;
    let cat = tape.concat_cols(fwd, bwd)?;
    Ok((fwd, bwd, cat))
}

// ── Encoder input assembly ──────────────────────────────────────────

/// Pad the window to an even channel count, add the positional code,
/// and append the condition: one T x encoder_input_dim matrix.
fn encoder_input_matrix(
    config: &ModelConfig,
    window: &Tensor,
    condition: &[f64],
) -> Result<Tensor> {
    let t_len = config.window_length;
    let pe = positional_encoding(t_len, config.padded_input_dim())?;
    let mut m = Tensor::zeros(&[t_len, config.encoder_input_dim()]);
    for t in 0..t_len {
        for c in 0..config.padded_input_dim() {
            let x = if c < config.input_dim { window.at(t, c) } else { 0.0 };
            m.set(t, c, x + pe.at(t, c));
        }
        for (k, v) in condition.iter().enumerate() {
            m.set(t, config.padded_input_dim() + k, *v);
        }
    }
    Ok(m)
}

fn matrix_row_leaves(tape: &mut Tape, m: &Tensor) -> Vec<ValueId> {
    (0..m.rows())
        .map(|r| tape.leaf(Tensor::row(m.row_slice(r))))
        .collect()
}

// ── Variational multi-head attention ────────────────────────────────

struct AttnNodes {
    scores: Vec<ValueId>,
    weights: Vec<ValueId>,
    deterministic: ValueId,
    mu: ValueId,
    logvar: ValueId,
    projected: ValueId,
}

/// Attention over a T x width hidden matrix: per-head scaled
/// dot-product scores, row softmax, deterministic contexts, per-head
/// Gaussian posterior (condition appended to its input), context
/// realization, concatenation, output projection, optional dropout.
fn vmha(
    tape: &mut Tape,
    ids: &Ids,
    config: &ModelConfig,
    h: ValueId,
    condition: &[f64],
    plan: &NoisePlan,
    use_mean: bool,
) -> Result<AttnNodes> {
    let w = config.head_width();
    let t_len = config.window_length;
    let scale = 1.0 / (w as f64).sqrt();

    let cond_matrix = if config.condition_dim > 0 {
        let mut m = Tensor::zeros(&[t_len, config.condition_dim]);
        for t in 0..t_len {
            for (k, v) in condition.iter().enumerate() {
                m.set(t, k, *v);
            }
        }
        Some(tape.leaf(m))
    } else {
        None
    };

    let mut scores = Vec::with_capacity(config.num_heads);
    let mut weights = Vec::with_capacity(config.num_heads);
    let mut det_parts = Vec::with_capacity(config.num_heads);
    let mut mu_parts = Vec::with_capacity(config.num_heads);
    let mut lv_parts = Vec::with_capacity(config.num_heads);
    let mut ctx_parts = Vec::with_capacity(config.num_heads);

    for head in 0..config.num_heads {
        let h_i = tape.slice_cols(h, head * w, (head + 1) * w)?;
        let h_i_t = tape.transpose(h_i)?;
        let dots = tape.matmul(h_i, h_i_t)?;
        let s = tape.scale(dots, scale)?;
        let a = tape.softmax_rows(s)?;
        let v_det = tape.matmul(a, h_i)?;
        scores.push(s);
        weights.push(a);
        det_parts.push(v_det);

        let post_in = match cond_matrix {
            Some(c) => tape.concat_cols(v_det, c)?,
            None => v_det,
        };
        let w_mu = id(ids, &format!("attn.h{head}.mu.w"))?;
        let b_mu = id(ids, &format!("attn.h{head}.mu.b"))?;
        let w_lv = id(ids, &format!("attn.h{head}.logvar.w"))?;
        let b_lv = id(ids, &format!("attn.h{head}.logvar.b"))?;
        let mu_lin = tape.matmul(post_in, w_mu)?;
        let mu = tape.add_row_broadcast(mu_lin, b_mu)?;
        let lv_lin = tape.matmul(post_in, w_lv)?;
        let lv = tape.add_row_broadcast(lv_lin, b_lv)?;
        mu_parts.push(mu);
        lv_parts.push(lv);

        let ctx = if use_mean {
            mu
        } else {
            let half_lv = tape.scale(lv, 0.5)?;
            let sigma = tape.exp(half_lv)?;
            let mut eps = Tensor::zeros(&[t_len, w]);
            for t in 0..t_len {
                for c in 0..w {
                    eps.set(t, c, plan.eps_attention.at(t, head * w + c));
                }
            }
            let eps_leaf = tape.leaf(eps);
            let noise = tape.mul(sigma, eps_leaf)?;
            tape.add(mu, noise)?
        };
        ctx_parts.push(ctx);
    }

    let concat_all = |tape: &mut Tape, parts: &[ValueId]| -> Result<ValueId> {
        let mut acc = parts[0];
        for &p in &parts[1..] {
            acc = tape.concat_cols(acc, p)?;
        }
        Ok(acc)
    };
    let deterministic = concat_all(tape, &det_parts)?;
    let mu = concat_all(tape, &mu_parts)?;
    let logvar = concat_all(tape, &lv_parts)?;
    let ctx = concat_all(tape, &ctx_parts)?;

    let w_out = id(ids, "attn.out.w")?;
    let b_out = id(ids, "attn.out.b")?;
    let proj_lin = tape.matmul(ctx, w_out)?;
    let mut projected = tape.add_row_broadcast(proj_lin, b_out)?;
    if let Some(mask) = &plan.dropout_attention {
        let m = tape.leaf(mask.clone());
        projected = tape.mul(projected, m)?;
    }

    Ok(AttnNodes {
        scores,
        weights,
        deterministic,
        mu,
        logvar,
        projected,
    })
}

// ── Encoder / decoder assembly ──────────────────────────────────────

struct EncoderNodes {
    attn: AttnNodes,
    latent_mu: ValueId,
    latent_logvar: ValueId,
    latent: ValueId,
}

fn build_encoder(
    tape: &mut Tape,
    ids: &Ids,
    config: &ModelConfig,
    window: &Tensor,
    condition: &[f64],
    plan: &NoisePlan,
    use_mean: bool,
) -> Result<EncoderNodes> {
    let input = encoder_input_matrix(config, window, condition)?;
    let rows = matrix_row_leaves(tape, &input);
    let (_, _, cat) = bilstm(tape, ids, "encoder", &rows, config.hidden_units)?;
    let mut hidden = cat;
    if let Some(mask) = &plan.dropout_hidden {
        let m = tape.leaf(mask.clone());
        hidden = tape.mul(hidden, m)?;
    }
    let attn = vmha(tape, ids, config, hidden, condition, plan, use_mean)?;

    let w_mu = id(ids, "latent.mu.w")?;
    let b_mu = id(ids, "latent.mu.b")?;
    let w_lv = id(ids, "latent.logvar.w")?;
    let b_lv = id(ids, "latent.logvar.b")?;
    let mu_lin = tape.matmul(attn.projected, w_mu)?;
    let latent_mu = tape.add_row_broadcast(mu_lin, b_mu)?;
    let lv_lin = tape.matmul(attn.projected, w_lv)?;
    let latent_logvar = tape.add_row_broadcast(lv_lin, b_lv)?;

    let latent = if use_mean {
        latent_mu
    } else {
        let half = tape.scale(latent_logvar, 0.5)?;
        let sigma = tape.exp(half)?;
        let eps = tape.leaf(plan.eps_latent.clone());
        let noise = tape.mul(sigma, eps)?;
        tape.add(latent_mu, noise)?
    };

    Ok(EncoderNodes {
        attn,
        latent_mu,
        latent_logvar,
        latent,
    })
}

/// Decoder: per-timestep [latent ; condition] rows through the second
/// Bi-LSTM, then the affine readout to input space.
fn build_decoder(
    tape: &mut Tape,
    ids: &Ids,
    config: &ModelConfig,
    latent: ValueId,
    condition: &[f64],
) -> Result<ValueId> {
    let t_len = config.window_length;
    let cond_row = if config.condition_dim > 0 {
        Some(tape.leaf(Tensor::row(condition)))
    } else {
        None
    };
    let mut rows = Vec::with_capacity(t_len);
    for t in 0..t_len {
        let v_t = tape.slice_rows(latent, t, t + 1)?;
        let row = match cond_row {
            Some(c) => tape.concat_cols(v_t, c)?,
            None => v_t,
        };
        rows.push(row);
    }
    let (_, _, cat) = bilstm(tape, ids, "decoder", &rows, config.hidden_units)?;
    let w = id(ids, "readout.w")?;
    let b = id(ids, "readout.b")?;
    let lin = tape.matmul(cat, w)?;
    tape.add_row_broadcast(lin, b)
}

// ── Losses ──────────────────────────────────────────────────────────

/// KL(N(mu, sigma^2) || N(0, 1)) summed over channels, averaged over
/// timesteps: 0.5 * mean_t sum_d (mu^2 + sigma^2 - 1 - log sigma^2).
fn kl_node(tape: &mut Tape, mu: ValueId, logvar: ValueId) -> Result<ValueId> {
    let dims = tape.value(mu).cols() as f64;
    let mu_sq = tape.mul(mu, mu)?;
    let var = tape.exp(logvar)?;
    let sum = tape.add(mu_sq, var)?;
    let shifted = tape.add_scalar(sum, -1.0)?;
    let elem = tape.sub(shifted, logvar)?;
    let mean = tape.mean_all(elem)?;
    // mean_all averages over T*D; the definition sums over D
    tape.scale(mean, 0.5 * dims)
}

struct SeriesLoss {
    mse: ValueId,
    kl_latent: ValueId,
    kl_attention: ValueId,
}

fn build_series_loss(
    tape: &mut Tape,
    ids: &Ids,
    config: &ModelConfig,
    window: &Tensor,
    condition: &[f64],
    plan: &NoisePlan,
    use_mean: bool,
) -> Result<SeriesLoss> {
    let enc = build_encoder(tape, ids, config, window, condition, plan, use_mean)?;
    let xhat = build_decoder(tape, ids, config, enc.latent, condition)?;
    let target = tape.leaf(window.clone());
    let err = tape.sub(xhat, target)?;
    let sq = tape.mul(err, err)?;
    let mse = tape.mean_all(sq)?;
    let kl_latent = kl_node(tape, enc.latent_mu, enc.latent_logvar)?;
    let kl_attention = kl_node(tape, enc.attn.mu, enc.attn.logvar)?;
    Ok(SeriesLoss {
        mse,
        kl_latent,
        kl_attention,
    })
}

/// Batch ELBO: component means over the batch, the weighted total, and
/// (optionally) parameter gradients of the total.
pub(super) fn elbo_batch(
    config: &ModelConfig,
    params: &ParamMap,
    batch: &[(Tensor, Vec<f64>)],
    plans: &[NoisePlan],
    want_grads: bool,
) -> Result<(ElboBreakdown, Option<ParamMap>)> {
    if batch.is_empty() {
        return Err(Error::numerical("elbo: empty batch"));
    }
    if batch.len() != plans.len() {
        return Err(Error::numerical(format!(
            "elbo: {} windows but {} noise plans",
            batch.len(),
            plans.len()
        )));
    }
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params);
    let mut mses = Vec::with_capacity(batch.len());
    let mut kl1s = Vec::with_capacity(batch.len());
    let mut kl2s = Vec::with_capacity(batch.len());
    for ((window, condition), plan) in batch.iter().zip(plans) {
        let loss = build_series_loss(&mut tape, &ids, config, window, condition, plan, false)?;
        mses.push(loss.mse);
        kl1s.push(loss.kl_latent);
        kl2s.push(loss.kl_attention);
    }
    let mean_of = |tape: &mut Tape, parts: &[ValueId]| -> Result<ValueId> {
        let stacked = tape.stack_rows(parts)?;
        tape.mean_all(stacked)
    };
    let recon = mean_of(&mut tape, &mses)?;
    let kl_latent = mean_of(&mut tape, &kl1s)?;
    let kl_attention = mean_of(&mut tape, &kl2s)?;
    let w_kl1 = tape.scale(kl_latent, config.kl_weight_latent)?;
    let w_kl2 = tape.scale(kl_attention, config.kl_weight_attention)?;
    let partial = tape.add(recon, w_kl1)?;
    let total = tape.add(partial, w_kl2)?;

    let breakdown = ElboBreakdown {
        total: tape.value(total).item()?,
        reconstruction: tape.value(recon).item()?,
        kl_latent: tape.value(kl_latent).item()?,
        kl_attention: tape.value(kl_attention).item()?,
    };

    let grads = if want_grads {
        let g = tape.backward(total)?;
        let mut map = ParamMap::new();
        for (name, node) in &ids {
            map.insert(name.clone(), g.wrt(*node, &tape));
        }
        Some(map)
    } else {
        None
    };
    Ok((breakdown, grads))
}

// ── Value extraction for the public API ─────────────────────────────

pub(super) fn encode_values(
    config: &ModelConfig,
    params: &ParamMap,
    window: &Tensor,
    condition: &[f64],
    plan: &NoisePlan,
    use_mean: bool,
) -> Result<LatentSequence> {
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params);
    let enc = build_encoder(&mut tape, &ids, config, window, condition, plan, use_mean)?;
    Ok(LatentSequence {
        mean: tape.value(enc.latent_mu).clone(),
        variance: tape.value(enc.latent_logvar).map(f64::exp),
        values: tape.value(enc.latent).clone(),
    })
}

pub(super) fn decode_values(
    config: &ModelConfig,
    params: &ParamMap,
    latents: &Tensor,
    condition: &[f64],
) -> Result<Tensor> {
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params);
    let v = tape.leaf(latents.clone());
    let xhat = build_decoder(&mut tape, &ids, config, v, condition)?;
    Ok(tape.value(xhat).clone())
}

pub(super) fn encoder_bilstm_values(
    config: &ModelConfig,
    params: &ParamMap,
    window: &Tensor,
    condition: &[f64],
) -> Result<BiLstmState> {
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params);
    let input = encoder_input_matrix(config, window, condition)?;
    let rows = matrix_row_leaves(&mut tape, &input);
    let (fwd, bwd, cat) = bilstm(&mut tape, &ids, "encoder", &rows, config.hidden_units)?;
    Ok(BiLstmState {
        forward: tape.value(fwd).clone(),
        backward: tape.value(bwd).clone(),
        concat: tape.value(cat).clone(),
    })
}

pub(super) fn attention_values(
    config: &ModelConfig,
    params: &ParamMap,
    hidden: &Tensor,
    condition: &[f64],
    plan: &NoisePlan,
    use_mean: bool,
) -> Result<AttentionResult> {
    let mut tape = Tape::new();
    let ids = register_params(&mut tape, params);
    let h = tape.leaf(hidden.clone());
    let attn = vmha(&mut tape, &ids, config, h, condition, plan, use_mean)?;
    Ok(AttentionResult {
        scores: attn.scores.iter().map(|&s| tape.value(s).clone()).collect(),
        weights: attn.weights.iter().map(|&w| tape.value(w).clone()).collect(),
        deterministic: tape.value(attn.deterministic).clone(),
        context_mean: tape.value(attn.mu).clone(),
        context_variance: tape.value(attn.logvar).map(f64::exp),
        projected: tape.value(attn.projected).clone(),
    })
}

// ────────────────────────────────────────────────────────────────────
