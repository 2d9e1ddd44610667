//! Implementations of the CLI subcommands.  Progress goes to stderr;
//! results and file locations go to stdout; report files are
//! deterministic functions of config + data + checkpoint.

use crate::config::RunConfig;
use crate::reports;
use crate::Mode;
use latentaug::calibrate::{calibrate_latent_sigma, direct_target};
use latentaug::data::{synth_corpus, TimeSeriesDataset};
use latentaug::gradcheck::{grad_check, ParamMap};
use latentaug::metrics::{distance_report, panel_residuals, reconstruction_ratio, residual_stats};
use latentaug::model::{
    load_checkpoint, save_checkpoint, train_with, Model, ModelConfig, NoisePlan,
};
use latentaug::transforms::{augment_direct, augment_latent};
use latentaug::tstr::tstr_compare;
use latentaug::{seed, Error, Result, Tensor};
use rand::Rng;
use std::path::Path;

// ── Corpus generation ───────────────────────────────────────────────

pub fn synth(out: &Path, series: usize, length: usize, noise: f64, seed_value: u64) -> Result<()> {
    let data = synth_corpus(series, length, noise, seed_value)?;
    data.save_csv(out)?;
    println!(
        "wrote {} series x {} steps to {}",
        data.num_series(),
        data.series_len(),
        out.display()
    );
    Ok(())
}

// ── Training ────────────────────────────────────────────────────────

pub fn train(config_path: &Path, out: &Path, log: Option<&Path>) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let (_, normalized) = config.prepare_data(config_path)?;
    let model_config = config.model_for(&normalized);
    if model_config.window_length != normalized.series_len() {
        return Err(Error::config(format!(
            "window_length {} does not match the prepared series length {}",
            model_config.window_length,
            normalized.series_len()
        )));
    }
    let mut model = Model::init(model_config)?;
    let total = config.train.epochs;
    let report = train_with(&mut model, &normalized, &config.train, &mut |e| {
        eprintln!(
            "epoch {:>4}/{total}  total {:.6}  recon {:.6}  kl_latent {:.6}  kl_attn {:.6}  ({:.1}s)",
            e.epoch, e.total, e.reconstruction, e.kl_latent, e.kl_attention, e.wall_seconds
        );
    })?;
    save_checkpoint(&model, out)?;
    if let Some(log_path) = log {
        reports::train_log_table(&report)?.save(log_path)?;
    }
    let first = report.first().map_or(f64::NAN, |e| e.total);
    let last = report.last().map_or(f64::NAN, |e| e.total);
    println!(
        "trained {} epochs: loss {first:.6} -> {last:.6}; checkpoint {}",
        report.epochs.len(),
        out.display()
    );
    Ok(())
}

// ── Augmentation ────────────────────────────────────────────────────

pub fn augment(config_path: &Path, model_path: &Path, mode: Mode, out: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let model = load_checkpoint(model_path)?;
    let (_, normalized) = config.prepare_data(config_path)?;
    // An empty latent chain is meaningful (pure reconstruction); an
    // empty direct chain would silently copy the input, so refuse it.
    let augmented = match mode {
        Mode::Direct => {
            if config.direct_chain.is_empty() {
                return Err(Error::config("direct_chain is empty; nothing to apply"));
            }
            augment_direct(&normalized, &config.direct_chain, config.augment.seed)?
        }
        Mode::Latent => {
            augment_latent(&model, &normalized, &config.latent_chain, config.augment.seed)?
        }
    };
    let raw_values = normalized.denormalize_values(augmented.values())?;
    let output = augmented.with_values(raw_values)?;
    output.save_csv(out)?;
    let label = match mode {
        Mode::Direct => "direct",
        Mode::Latent => "latent",
    };
    println!(
        "wrote {label} augmentation of {} series to {}",
        output.num_series(),
        out.display()
    );
    Ok(())
}

// ── Evaluation ──────────────────────────────────────────────────────

pub fn evaluate(config_path: &Path, model_path: &Path, outdir: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    if config.direct_chain.is_empty() && config.latent_chain.is_empty() {
        return Err(Error::config(
            "evaluate needs at least one of direct_chain / latent_chain",
        ));
    }
    let model = load_checkpoint(model_path)?;
    let (_, normalized) = config.prepare_data(config_path)?;
    std::fs::create_dir_all(outdir).map_err(|e| Error::io(outdir.display().to_string(), e))?;

    let mut panels: Vec<(&str, TimeSeriesDataset)> = Vec::new();
    if !config.direct_chain.is_empty() {
        let panel = augment_direct(&normalized, &config.direct_chain, config.augment.seed)?;
        panels.push(("direct", panel));
    }
    if !config.latent_chain.is_empty() {
        let panel = augment_latent(&model, &normalized, &config.latent_chain, config.augment.seed)?;
        panels.push(("latent", panel));
    }

    let mut ratio_rows: Vec<(&str, f64)> = Vec::new();
    for (route, panel) in &panels {
        let distances = distance_report(&normalized, panel)?;
        reports::distance_table(&distances)?.save(outdir.join(format!("distance_{route}.tsv")))?;
        let stats = residual_stats(&panel_residuals(&normalized, panel)?)?;
        reports::residual_table(&stats)?.save(outdir.join(format!("residuals_{route}.tsv")))?;
        reports::kde_table(&stats)?.save(outdir.join(format!("kde_{route}.tsv")))?;
        let ratio = reconstruction_ratio(&model, &normalized, panel)?;
        ratio_rows.push((route, ratio));
        println!(
            "{route}: W1 median {:.6} mean {:.6}; reconstruction-error ratio {:.2}%",
            distances.median, distances.mean, ratio
        );
    }
    reports::ratio_table(&ratio_rows)?.save(outdir.join("recon_ratio.tsv"))?;
    println!("reports in {}", outdir.display());
    Ok(())
}

// ── Strength calibration ────────────────────────────────────────────

pub fn calibrate(config_path: &Path, model_path: &Path, out: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    if config.direct_chain.is_empty() {
        return Err(Error::config(
            "calibrate needs a direct_chain to define the target",
        ));
    }
    if config.latent_chain.len() != 1 {
        return Err(Error::config(format!(
            "calibrate tunes exactly one latent transformation, found {}",
            config.latent_chain.len()
        )));
    }
    let model = load_checkpoint(model_path)?;
    let (_, normalized) = config.prepare_data(config_path)?;
    let target = direct_target(&normalized, &config.direct_chain, config.augment.seed)?;
    let result = calibrate_latent_sigma(
        &model,
        &normalized,
        &config.latent_chain[0],
        target,
        config.augment.seed,
        &config.calibration,
    )?;
    println!(
        "target {:.6} -> sigma {:.6} achieved {:.6} in {} evaluations",
        result.target, result.sigma, result.achieved, result.evaluations
    );
    if !result.converged {
        return Err(Error::numerical(format!(
            "calibration did not converge: target {:.6}, closest achieved {:.6} at sigma {:.6}",
            result.target, result.achieved, result.sigma
        )));
    }
    let mut updated = config.clone();
    updated.latent_chain[0] = updated.latent_chain[0].with_sigma(result.sigma);
    std::fs::write(out, updated.render()?).map_err(|e| Error::io(out.display().to_string(), e))?;
    println!("calibrated config written to {}", out.display());
    Ok(())
}

// ── Forecasting comparison ──────────────────────────────────────────

pub fn tstr(config_path: &Path, model_path: &Path, out: &Path) -> Result<()> {
    let config = RunConfig::load(config_path)?;
    let forecaster = config
        .forecaster
        .clone()
        .ok_or_else(|| Error::config("tstr needs a [forecaster] section"))?;
    if config.direct_chain.is_empty() || config.latent_chain.is_empty() {
        return Err(Error::config("tstr needs both direct_chain and latent_chain"));
    }
    let model = load_checkpoint(model_path)?;
    let (_, normalized) = config.prepare_data(config_path)?;
    let direct = augment_direct(&normalized, &config.direct_chain, config.augment.seed)?;
    let latent = augment_latent(&model, &normalized, &config.latent_chain, config.augment.seed)?;
    let comparison = tstr_compare(
        normalized.values(),
        direct.values(),
        latent.values(),
        &forecaster,
    )?;
    reports::tstr_table(&comparison)?.save(out)?;
    println!(
        "test MAE  original {:.6}  direct {:.6}  latent {:.6}",
        comparison.original.mae, comparison.direct.mae, comparison.latent.mae
    );
    println!("table written to {}", out.display());
    Ok(())
}

// ── Gradient check ──────────────────────────────────────────────────

pub fn gradcheck(
    window: usize,
    hidden: usize,
    latent: usize,
    heads: usize,
    seed_value: u64,
    step: f64,
    tolerance: f64,
) -> Result<()> {
    let config = ModelConfig {
        window_length: window,
        hidden_units: hidden,
        latent_dim: latent,
        num_heads: heads,
        condition_dim: 1,
        dropout_rate: 0.2,
        seed: seed_value,
        ..ModelConfig::default()
    };
    let model = Model::init(config.clone())?;
    let mut rng = seed::rng_from(seed::derive(seed_value, "gradcheck"));
    let values: Vec<f64> = (0..window).map(|_| rng.random_range(-1.0..1.0)).collect();
    let input = Tensor::column(&values);
    let condition = vec![1.0];
    // Freeze one noise draw so both sides differentiate the same function.
    let plan = NoisePlan::sample_training(&config, &mut rng);

    let mut value_fn = |params: &ParamMap| -> Result<f64> {
        let m = Model::from_params(config.clone(), params.clone())?;
        Ok(m.elbo(&input, &condition, &plan)?.total)
    };
    let mut grad_fn = |params: &ParamMap| -> Result<ParamMap> {
        let m = Model::from_params(config.clone(), params.clone())?;
        Ok(m.elbo_with_gradients(&input, &condition, &plan)?.1)
    };
    let report = grad_check(&mut value_fn, &mut grad_fn, &model.params, step, tolerance)?;
    println!(
        "checked {} partial derivatives: max relative error {:.3e} (tolerance {:.1e})",
        report.entries_checked, report.max_rel_error, tolerance
    );
    if let Some(worst) = &report.worst {
        println!(
            "worst entry: {}[{}] analytic {:.6e} numeric {:.6e}",
            worst.param, worst.index, worst.analytic, worst.numeric
        );
    }
    if report.passed() {
        println!("gradient check passed");
        Ok(())
    } else {
        Err(Error::numerical(format!(
            "gradient check failed: {} of {} entries exceed tolerance {:.1e}",
            report.failures.len(),
            report.entries_checked,
            tolerance
        )))
    }
}
