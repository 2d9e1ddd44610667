//! Distribution and reconstruction diagnostics.
//!
//! The workhorse is the empirical Wasserstein-1 distance between two
//! equally sized samples, which for sorted samples collapses to the
//! mean absolute difference of order statistics.  A brute-force
//! minimum-cost assignment oracle (exponential, tiny inputs only) is
//! kept alongside as an independent cross-check.
//!
//! Residual analysis reports moments (population convention), type-7
//! quantiles, and a Gaussian KDE with Silverman bandwidth.

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};

// ── Wasserstein-1 ───────────────────────────────────────────────────

/// Empirical 1-Wasserstein distance between equally sized samples:
/// sort both, average the absolute differences of matched order
/// statistics.
pub fn wasserstein1(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::numerical("wasserstein1: empty sample"));
    }
    if a.len() != b.len() {
        return Err(Error::numerical(format!(
            "wasserstein1: sample sizes differ ({} vs {})",
            a.len(),
            b.len()
        )));
    }
    let mut sa = a.to_vec();
    let mut sb = b.to_vec();
    sa.sort_by(|x, y| x.partial_cmp(y).expect("non-finite value in sample"));
    sb.sort_by(|x, y| x.partial_cmp(y).expect("non-finite value in sample"));
    let n = sa.len() as f64;
    Ok(sa.iter().zip(&sb).map(|(x, y)| (x - y).abs()).sum::<f64>() / n)
}

/// Reference implementation: minimum mean |a_i - b_{pi(i)}| over all
/// assignments pi, found by exhaustive permutation search.  Factorial
/// cost — refuses more than 8 points.  Exists to validate the sorted
/// closed form, not for production use.
pub fn wasserstein1_assignment_oracle(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.is_empty() || a.len() != b.len() {
        return Err(Error::numerical("oracle: need equal nonempty samples"));
    }
    if a.len() > 8 {
        return Err(Error::numerical("oracle: exhaustive search capped at n = 8"));
    }
    let n = a.len();
    let mut perm: Vec<usize> = (0..n).collect();
    let mut best = f64::INFINITY;
    // Heap's algorithm, iterative
    let mut c = vec![0usize; n];
    let cost = |perm: &[usize]| -> f64 {
        perm.iter()
            .enumerate()
            .map(|(i, &j)| (a[i] - b[j]).abs())
            .sum::<f64>()
            / n as f64
    };
    best = best.min(cost(&perm));
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                perm.swap(0, i);
            } else {
                perm.swap(c[i], i);
            }
            best = best.min(cost(&perm));
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    Ok(best)
}

// ── Distance report ─────────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct DistanceReport {
    /// (series name, W1 between the two versions of that series).
    pub per_series: Vec<(String, f64)>,
    pub median: f64,
    pub iqr: f64,
    pub mean: f64,
}

/// Per-series W1 between two aligned panels plus summary statistics.
pub fn distance_report(
    original: &TimeSeriesDataset,
    other: &TimeSeriesDataset,
) -> Result<DistanceReport> {
    if original.names() != other.names() {
        return Err(Error::data(
            "distance report: panels have different series names",
        ));
    }
    let mut per_series = Vec::with_capacity(original.num_series());
    for i in 0..original.num_series() {
        let d = wasserstein1(original.series(i), other.series(i))?;
        per_series.push((original.names()[i].clone(), d));
    }
    let dists: Vec<f64> = per_series.iter().map(|(_, d)| *d).collect();
    Ok(DistanceReport {
        median: quantile(&dists, 0.5)?,
        iqr: quantile(&dists, 0.75)? - quantile(&dists, 0.25)?,
        mean: dists.iter().sum::<f64>() / dists.len() as f64,
        per_series,
    })
}

// ── Quantiles ───────────────────────────────────────────────────────

/// Type-7 (linear interpolation) quantile of an unsorted sample.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::numerical("quantile of an empty sample"));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::numerical(format!("quantile level {q} outside [0, 1]")));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("non-finite value in sample"));
    let h = (sorted.len() - 1) as f64 * q;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    let frac = h - lo as f64;
    Ok(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

// ── Residual statistics ─────────────────────────────────────────────

#[derive(Debug, Clone)]
pub struct KdeCurve {
    pub grid: Vec<f64>,
    pub density: Vec<f64>,
    pub bandwidth: f64,
}

#[derive(Debug, Clone)]
pub struct ResidualStats {
    pub n: usize,
    pub mean: f64,
    /// Population standard deviation (sqrt of the biased second moment).
    pub std: f64,
    /// Biased-moment skewness m3 / m2^(3/2).
    pub skewness: f64,
    pub median: f64,
    pub iqr: f64,
    pub kde: KdeCurve,
}

const KDE_POINTS: usize = 256;

/// Moments, quantiles, and a Gaussian KDE of a residual sample.
/// Needs at least three values and nonzero spread (the skewness of a
/// constant sample is undefined).
pub fn residual_stats(residuals: &[f64]) -> Result<ResidualStats> {
    if residuals.len() < 3 {
        return Err(Error::numerical(format!(
            "residual stats need at least 3 values, got {}",
            residuals.len()
        )));
    }
    if residuals.iter().any(|v| !v.is_finite()) {
        return Err(Error::numerical("residual stats: non-finite residual"));
    }
    // Canonicalize the order so every statistic (moment sums included)
    // is bit-for-bit invariant under permutations of the input.
    let mut sorted = residuals.to_vec();
    sorted.sort_by(|x, y| x.partial_cmp(y).expect("checked finite above"));
    let residuals: &[f64] = &sorted;
    let n = residuals.len() as f64;
    let mean = residuals.iter().sum::<f64>() / n;
    let m2 = residuals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    let m3 = residuals.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / n;
    if m2 == 0.0 {
        return Err(Error::numerical(
            "residual stats: zero variance, skewness undefined",
        ));
    }
    let skewness = m3 / m2.powf(1.5);
    let median = quantile(residuals, 0.5)?;
    let iqr = quantile(residuals, 0.75)? - quantile(residuals, 0.25)?;
    let kde = gaussian_kde(residuals, m2.sqrt(), iqr)?;
    Ok(ResidualStats {
        n: residuals.len(),
        mean,
        std: m2.sqrt(),
        skewness,
        median,
        iqr,
        kde,
    })
}

/// Silverman's rule: h = 0.9 min(std, IQR/1.34) n^(-1/5); when one of
/// the spread measures degenerates to zero the other stands in.
fn silverman_bandwidth(n: usize, std: f64, iqr: f64) -> f64 {
    let spread = match (std > 0.0, iqr > 0.0) {
        (true, true) => std.min(iqr / 1.34),
        (true, false) => std,
        (false, true) => iqr / 1.34,
        (false, false) => 0.0,
    };
    0.9 * spread * (n as f64).powf(-0.2)
}

fn gaussian_kde(values: &[f64], std: f64, iqr: f64) -> Result<KdeCurve> {
    let h = silverman_bandwidth(values.len(), std, iqr);
    if h <= 0.0 {
        return Err(Error::numerical("kde: degenerate bandwidth"));
    }
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lo = min - 3.0 * h;
    let hi = max + 3.0 * h;
    let step = (hi - lo) / (KDE_POINTS - 1) as f64;
    let norm = 1.0 / (values.len() as f64 * h * (2.0 * std::f64::consts::PI).sqrt());
    let grid: Vec<f64> = (0..KDE_POINTS).map(|i| lo + step * i as f64).collect();
    let density: Vec<f64> = grid
        .iter()
        .map(|&g| {
            values
                .iter()
                .map(|&v| {
                    let z = (g - v) / h;
                    (-0.5 * z * z).exp()
                })
                .sum::<f64>()
                * norm
        })
        .collect();
    Ok(KdeCurve {
        grid,
        density,
        bandwidth: h,
    })
}

/// Flattened per-element residuals (other − original) over aligned panels.
pub fn panel_residuals(
    original: &TimeSeriesDataset,
    other: &TimeSeriesDataset,
) -> Result<Vec<f64>> {
    if original.names() != other.names() || original.series_len() != other.series_len() {
        return Err(Error::data("residuals: panels are not aligned"));
    }
    let mut out = Vec::with_capacity(original.num_series() * original.series_len());
    for i in 0..original.num_series() {
        for (x, y) in original.series(i).iter().zip(other.series(i)) {
            out.push(y - x);
        }
    }
    Ok(out)
}

// ── Reconstruction-error ratio ──────────────────────────────────────

/// Transformed-panel reconstruction MSE as a percentage of the
/// original panel's.  Values near 100 mean the autoencoder handles the
/// transformed data as comfortably as the data it was trained on;
/// large values mean the transformation pushed the panel off the
/// learned manifold.
pub fn ratio_percent(mse_transformed: f64, mse_original: f64) -> Result<f64> {
    if !(mse_transformed.is_finite() && mse_original.is_finite()) {
        return Err(Error::numerical("reconstruction ratio: non-finite MSE"));
    }
    if mse_original <= 0.0 {
        return Err(Error::numerical(
            "reconstruction ratio: original panel is reconstructed exactly, ratio undefined",
        ));
    }
    Ok(100.0 * mse_transformed / mse_original)
}

/// [`ratio_percent`] computed from a model and two aligned panels.
pub fn reconstruction_ratio(
    model: &crate::model::Model,
    original: &TimeSeriesDataset,
    transformed: &TimeSeriesDataset,
) -> Result<f64> {
    let mse_o = model.reconstruction_mse(original)?;
    let mse_t = model.reconstruction_mse(transformed)?;
    ratio_percent(mse_t, mse_o)
}

// ────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn ratio_percent_basics() {
        assert_eq!(ratio_percent(2.0, 2.0).unwrap(), 100.0);
        assert_eq!(ratio_percent(3.0, 2.0).unwrap(), 150.0);
        assert!(ratio_percent(1.0, 0.0).is_err());
        assert!(ratio_percent(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn reconstruction_ratio_of_identical_panels_is_exactly_100() {
        use crate::model::{Model, ModelConfig};
        let data = crate::data::synth_corpus(3, 6, 0.05, 77)
            .unwrap()
            .normalize()
            .unwrap();
        let (dim, _) = data.condition_vectors();
        let model = Model::init(ModelConfig {
            window_length: 6,
            input_dim: 1,
            condition_dim: dim,
            hidden_units: 4,
            latent_dim: 2,
            num_heads: 2,
            dropout_rate: 0.0,
            kl_weight_latent: 1.0,
            kl_weight_attention: 1.0,
            learning_rate: 0.001,
            seed: 5,
        })
        .unwrap();
        let r = reconstruction_ratio(&model, &data, &data).unwrap();
        assert_eq!(r, 100.0);
    }

    #[test]
    fn wasserstein_fixed_examples() {
        // shifted pair: every order statistic moves by exactly 1
        assert_eq!(wasserstein1(&[0.0, 1.0], &[1.0, 2.0]).unwrap(), 1.0);
        // one outlier spread over four points
        assert_eq!(
            wasserstein1(&[0.0, 0.0, 0.0, 4.0], &[0.0, 0.0, 0.0, 0.0]).unwrap(),
            1.0
        );
        // unsorted input is fine
        assert_eq!(wasserstein1(&[1.0, 0.0], &[2.0, 1.0]).unwrap(), 1.0);
    }

    #[test]
    fn wasserstein_rejects_bad_input() {
        assert!(wasserstein1(&[], &[]).is_err());
        assert!(wasserstein1(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn translation_moves_w1_by_the_shift() {
        let mut rng = crate::seed::rng_from(11);
        for _ in 0..50 {
            let n = rng.random_range(1..20);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-5.0..5.0)).collect();
            let delta: f64 = rng.random_range(-3.0..3.0);
            let b: Vec<f64> = a.iter().map(|v| v + delta).collect();
            let d = wasserstein1(&a, &b).unwrap();
            assert!((d - delta.abs()).abs() < 1e-12);
        }
    }

    #[test]
    fn sorted_form_matches_assignment_oracle() {
        let mut rng = crate::seed::rng_from(29);
        for trial in 0..500 {
            let n = rng.random_range(1..=6);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-10.0..10.0)).collect();
            let fast = wasserstein1(&a, &b).unwrap();
            let slow = wasserstein1_assignment_oracle(&a, &b).unwrap();
            assert!(
                (fast - slow).abs() < 1e-12,
                "trial {trial}: sorted {fast} vs oracle {slow}"
            );
        }
    }

    #[test]
    fn metric_axioms_hold_on_random_triples() {
        let mut rng = crate::seed::rng_from(37);
        for _ in 0..1000 {
            let n = rng.random_range(1..12);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let b: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let c: Vec<f64> = (0..n).map(|_| rng.random_range(-4.0..4.0)).collect();
            let dab = wasserstein1(&a, &b).unwrap();
            let dba = wasserstein1(&b, &a).unwrap();
            let dac = wasserstein1(&a, &c).unwrap();
            let dbc = wasserstein1(&b, &c).unwrap();
            assert!(dab >= 0.0);
            assert_eq!(dab, dba);
            assert_eq!(wasserstein1(&a, &a).unwrap(), 0.0);
            assert!(dac <= dab + dbc + 1e-12, "triangle violated");
        }
    }

    #[test]
    fn quantile_fixed_examples() {
        let v = [1.0, 2.0, 3.0, 4.0, 5.0];
        assert_eq!(quantile(&v, 0.5).unwrap(), 3.0);
        let iqr = quantile(&v, 0.75).unwrap() - quantile(&v, 0.25).unwrap();
        assert_eq!(iqr, 2.0);
        // interpolation between order statistics
        let v = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 1.5).is_err());
    }

    #[test]
    fn skewness_fixed_example() {
        // [0, 0, 3]: m2 = 2, m3 = 2, skew = 2 / 2^1.5 = 0.70710...
        let stats = residual_stats(&[0.0, 0.0, 3.0]).unwrap();
        assert!((stats.skewness - std::f64::consts::FRAC_1_SQRT_2).abs() < 1e-9);
        assert!((stats.mean - 1.0).abs() < 1e-12);
        assert!((stats.std - 2f64.sqrt()).abs() < 1e-12);
    }

    #[test]
    fn symmetric_residuals_have_tiny_skewness() {
        let vals: Vec<f64> = (-50..=50).map(|i| i as f64 / 10.0).collect();
        let stats = residual_stats(&vals).unwrap();
        assert!(stats.skewness.abs() < 1e-12);
        assert_eq!(stats.median, 0.0);
    }

    #[test]
    fn residual_stats_rejects_degenerate_input() {
        assert!(residual_stats(&[1.0, 2.0]).is_err());
        assert!(residual_stats(&[2.0, 2.0, 2.0]).is_err());
        assert!(residual_stats(&[1.0, f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn kde_integrates_to_about_one_and_ignores_order() {
        let mut rng = crate::seed::rng_from(5);
        let vals: Vec<f64> = (0..400)
            .map(|_| {
                let z: f64 =
                    rand_distr::Distribution::sample(&rand_distr::StandardNormal, &mut rng);
                z * 0.7 + 0.3
            })
            .collect();
        let stats = residual_stats(&vals).unwrap();
        let kde = &stats.kde;
        assert_eq!(kde.grid.len(), 256);
        assert_eq!(kde.density.len(), 256);
        // trapezoid integral; the grid clips 3 bandwidths past the
        // extremes so a little tail mass is missing
        let mut integral = 0.0;
        for i in 1..kde.grid.len() {
            integral +=
                0.5 * (kde.density[i] + kde.density[i - 1]) * (kde.grid[i] - kde.grid[i - 1]);
        }
        assert!((integral - 1.0).abs() < 0.02, "integral {integral}");
        assert!(kde.density.iter().all(|d| *d >= 0.0 && d.is_finite()));

        // permuting the sample changes nothing
        let mut shuffled = vals.clone();
        shuffled.reverse();
        shuffled.swap(0, 17);
        let stats2 = residual_stats(&shuffled).unwrap();
        assert_eq!(kde.grid, stats2.kde.grid);
        assert_eq!(kde.density, stats2.kde.density);
        assert_eq!(stats.skewness, stats2.skewness);
    }

    #[test]
    fn distance_report_zero_for_identical_panels() {
        let ds = crate::data::synth_corpus(6, 30, 0.1, 2).unwrap();
        let rep = distance_report(&ds, &ds).unwrap();
        assert!(rep.per_series.iter().all(|(_, d)| *d == 0.0));
        assert_eq!(rep.median, 0.0);
        assert_eq!(rep.iqr, 0.0);
        assert_eq!(rep.mean, 0.0);
    }

    #[test]
    fn distance_report_flags_misaligned_panels() {
        let a = crate::data::synth_corpus(4, 20, 0.1, 2).unwrap();
        let b = crate::data::synth_corpus(5, 20, 0.1, 2).unwrap();
        assert!(distance_report(&a, &b).is_err());
    }

    #[test]
    fn panel_residuals_flatten_differences() {
        let a = crate::data::synth_corpus(3, 10, 0.0, 4).unwrap();
        let shifted: Vec<Vec<f64>> = a
            .values()
            .iter()
            .map(|s| s.iter().map(|v| v + 0.25).collect())
            .collect();
        let b = a.with_values(shifted).unwrap();
        let res = panel_residuals(&a, &b).unwrap();
        assert_eq!(res.len(), 30);
        assert!(res.iter().all(|r| (r - 0.25).abs() < 1e-12));
    }
}
