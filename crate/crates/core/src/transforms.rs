//! Parametric series transformations, applicable to raw data or to
//! latent sequences.
//!
//! Three families, each controlled by a strength `sigma`:
//!
//! * jitter — add independent Gaussian noise to every element;
//! * scaling — multiply the whole sequence by one Gaussian draw;
//! * magnitude warp — multiply by a smooth time curve, a natural cubic
//!   spline through Gaussian knots centered at 1.
//!
//! `sigma = 0` is the exact identity (the code short-circuits, so not
//! even the bit pattern changes and no random draws are consumed).
//! Because every transform draws *standardized* noise and scales it by
//! `sigma`, applying the same transform with the same seed at different
//! strengths reuses the same underlying draws — which is what makes the
//! strength calibration in [`crate::calibrate`] a deterministic,
//! continuous function of `sigma`.

use crate::data::TimeSeriesDataset;
use crate::error::{Error, Result};
use crate::model::{EncodeMode, Model};
use crate::seed;
use crate::spline::CubicSpline;
use crate::tensor::Tensor;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

// ── Specification ───────────────────────────────────────────────────

/// Where the scaling factor's distribution is centered.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScalingCenter {
    /// alpha ~ N(1, sigma^2): perturb around the identity.
    #[default]
    One,
    /// alpha ~ N(0, sigma^2): resize from zero (sigma = 0 zeroes out).
    Zero,
}

impl ScalingCenter {
    fn value(self) -> f64 {
        match self {
            ScalingCenter::One => 1.0,
            ScalingCenter::Zero => 0.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Transform {
    /// x[t][c] += sigma * z[t][c], z iid standard normal.
    Jitter { sigma: f64 },
    /// x *= alpha with a single alpha ~ N(center, sigma^2) per series.
    Scaling {
        sigma: f64,
        #[serde(default)]
        center: ScalingCenter,
    },
    /// x[t] *= s(t) where s is a natural cubic spline through `knots`
    /// values ~ N(1, sigma^2) at evenly spaced times spanning the series.
    MagnitudeWarp {
        sigma: f64,
        #[serde(default = "default_knots")]
        knots: usize,
    },
}

fn default_knots() -> usize {
    4
}

impl Transform {
    pub fn validate(&self) -> Result<()> {
        let sigma = self.sigma();
        if !sigma.is_finite() || sigma < 0.0 {
            return Err(Error::config(format!(
                "{}: sigma must be finite and non-negative, got {sigma}",
                self.label()
            )));
        }
        if let Transform::MagnitudeWarp { knots, .. } = self {
            if *knots < 2 {
                return Err(Error::config(format!(
                    "magnitude_warp: needs at least 2 knots, got {knots}"
                )));
            }
        }
        Ok(())
    }

    pub fn label(&self) -> &'static str {
        match self {
            Transform::Jitter { .. } => "jitter",
            Transform::Scaling { .. } => "scaling",
            Transform::MagnitudeWarp { .. } => "magnitude_warp",
        }
    }

    pub fn sigma(&self) -> f64 {
        match self {
            Transform::Jitter { sigma }
            | Transform::Scaling { sigma, .. }
            | Transform::MagnitudeWarp { sigma, .. } => *sigma,
        }
    }

    /// Same transform at a different strength (used by calibration).
    pub fn with_sigma(&self, sigma: f64) -> Transform {
        let mut t = self.clone();
        match &mut t {
            Transform::Jitter { sigma: s }
            | Transform::Scaling { sigma: s, .. }
            | Transform::MagnitudeWarp { sigma: s, .. } => *s = sigma,
        }
        t
    }

    // ── Application ─────────────────────────────────────────────────

    /// Apply to a T x C sequence (C = 1 for raw series, C = latent
    /// width for latent sequences).  The warp curve and the scaling
    /// factor are shared across channels; jitter is elementwise.
    pub fn apply_sequence(&self, seq: &Tensor, rng: &mut ChaCha8Rng) -> Result<Tensor> {
        self.validate()?;
        let (t_len, ch) = (seq.rows(), seq.cols());
        if t_len == 0 {
            return Err(Error::data("cannot transform an empty sequence"));
        }
        // exact identity: identical bits, no draws consumed
        if self.sigma() == 0.0 {
            return Ok(match self {
                Transform::Scaling { center, .. } if *center == ScalingCenter::Zero => {
                    Tensor::zeros(seq.shape())
                }
                _ => seq.clone(),
            });
        }
        let mut out = seq.clone();
        match self {
            Transform::Jitter { sigma } => {
                for t in 0..t_len {
                    for c in 0..ch {
                        let z: f64 = StandardNormal.sample(rng);
                        out.set(t, c, out.at(t, c) + sigma * z);
                    }
                }
            }
            Transform::Scaling { sigma, center } => {
                let z: f64 = StandardNormal.sample(rng);
                let alpha = center.value() + sigma * z;
                for v in out.data_mut() {
                    *v *= alpha;
                }
            }
            Transform::MagnitudeWarp { sigma, knots } => {
                let curve = warp_curve(t_len, *sigma, *knots, rng)?;
                for t in 0..t_len {
                    for c in 0..ch {
                        out.set(t, c, out.at(t, c) * curve[t]);
                    }
                }
            }
        }
        Ok(out)
    }

    /// Apply to one univariate series.
    pub fn apply_series(&self, values: &[f64], rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
        let out = self.apply_sequence(&Tensor::column(values), rng)?;
        Ok(out.data().to_vec())
    }
}

/// The warp's multiplicative time curve: `knots` Gaussian values at
/// positions 1 + (j-1)(T-1)/(k-1) (spanning [1, T] exactly), joined by
/// a natural cubic spline and evaluated at every timestep.
fn warp_curve(t_len: usize, sigma: f64, knots: usize, rng: &mut ChaCha8Rng) -> Result<Vec<f64>> {
    if knots > t_len {
        return Err(Error::data(format!(
            "magnitude_warp: {knots} knots exceed the series length {t_len}"
        )));
    }
    let k = knots;
    let xs: Vec<f64> = (0..k)
        .map(|j| 1.0 + j as f64 * (t_len - 1) as f64 / (k - 1) as f64)
        .collect();
    let ys: Vec<f64> = (0..k)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            1.0 + sigma * z
        })
        .collect();
    let spline = CubicSpline::fit(&xs, &ys)?;
    Ok((1..=t_len).map(|t| spline.evaluate(t as f64)).collect())
}

// ── Seed streams ────────────────────────────────────────────────────

/// Independent noise stream for one (chain step, transform, series).
/// Changing one series' data never disturbs another's draws, and chain
/// steps never share a stream even for equal transform kinds.
fn stream(chain_seed: u64, step: usize, label: &str, series: usize) -> ChaCha8Rng {
    let step_seed = seed::derive_indexed(chain_seed, "chain-step", step as u64);
    seed::rng_from(seed::derive_indexed(step_seed, label, series as u64))
}

// ── Panel operations ────────────────────────────────────────────────

/// Apply a transformation chain (left to right) to every series of a
/// panel of equal-length values.
pub fn apply_chain_to_panel(
    chain: &[Transform],
    values: &[Vec<f64>],
    chain_seed: u64,
) -> Result<Vec<Vec<f64>>> {
    for t in chain {
        t.validate()?;
    }
    let mut current: Vec<Vec<f64>> = values.to_vec();
    for (step, transform) in chain.iter().enumerate() {
        for (i, series) in current.iter_mut().enumerate() {
            let mut rng = stream(chain_seed, step, transform.label(), i);
            *series = transform.apply_series(series, &mut rng)?;
        }
    }
    Ok(current)
}

/// Transform the panel's values directly.  The result keeps names,
/// groups, and timestamps; it is a derived panel, so normalization
/// scales are not carried over.
pub fn augment_direct(
    data: &TimeSeriesDataset,
    chain: &[Transform],
    chain_seed: u64,
) -> Result<TimeSeriesDataset> {
    let values = apply_chain_to_panel(chain, data.values(), chain_seed)?;
    data.with_values(values)
}

/// Encode every series (posterior means), apply the chain to the
/// latent sequences, and decode.  An empty chain reproduces the
/// model's reconstruction bit for bit.
pub fn augment_latent(
    model: &Model,
    data: &TimeSeriesDataset,
    chain: &[Transform],
    chain_seed: u64,
) -> Result<TimeSeriesDataset> {
    for t in chain {
        t.validate()?;
    }
    let conditions = model.dataset_conditions(data)?;
    let mut out = Vec::with_capacity(data.num_series());
    for i in 0..data.num_series() {
        let window = Tensor::column(data.series(i));
        let latent = model.encode(&window, &conditions[i], EncodeMode::Mean)?;
        let mut seq = latent.values;
        for (step, transform) in chain.iter().enumerate() {
            let mut rng = stream(chain_seed, step, transform.label(), i);
            seq = transform.apply_sequence(&seq, &mut rng)?;
        }
        let decoded = model.decode(&seq, &conditions[i])?;
        out.push(decoded.data().to_vec());
    }
    data.with_values(out)
}

// ────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::synth_corpus;
    use crate::model::{Model, ModelConfig};

    fn any_series() -> Vec<f64> {
        vec![0.3, -1.5, 2.0, 0.0, -0.0, 4.25, 1.0 / 3.0]
    }

    // ── Identity laws at sigma = 0 ──────────────────────────────────

    #[test]
    fn zero_sigma_is_bitwise_identity() {
        let x = any_series();
        for transform in [
            Transform::Jitter { sigma: 0.0 },
            Transform::Scaling {
                sigma: 0.0,
                center: ScalingCenter::One,
            },
            Transform::MagnitudeWarp {
                sigma: 0.0,
                knots: 4,
            },
        ] {
            let mut rng = seed::rng_from(1);
            let y = transform.apply_series(&x, &mut rng).unwrap();
            let same_bits = x
                .iter()
                .zip(&y)
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(same_bits, "{} changed the input at sigma 0", transform.label());
        }
    }

    #[test]
    fn zero_sigma_zero_centered_scaling_gives_exact_zeros() {
        let transform = Transform::Scaling {
            sigma: 0.0,
            center: ScalingCenter::Zero,
        };
        let mut rng = seed::rng_from(1);
        let y = transform.apply_series(&any_series(), &mut rng).unwrap();
        assert!(y.iter().all(|&v| v == 0.0));
    }

    // ── Jitter moments ──────────────────────────────────────────────

    #[test]
    fn jitter_noise_has_the_requested_moments() {
        let n = 1_000_000;
        let sigma = 0.7;
        let transform = Transform::Jitter { sigma };
        let mut rng = seed::rng_from(33);
        let y = transform.apply_series(&vec![0.0; n], &mut rng).unwrap();
        let mean = y.iter().sum::<f64>() / n as f64;
        let var = y.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64;
        // four standard errors of the mean; ~7 of the variance
        assert!(mean.abs() < 4.0 * sigma / (n as f64).sqrt(), "mean {mean}");
        assert!((var.sqrt() - sigma).abs() < 0.005, "std {}", var.sqrt());
    }

    #[test]
    fn scaling_is_a_single_shared_multiple() {
        let x = any_series();
        let transform = Transform::Scaling {
            sigma: 0.4,
            center: ScalingCenter::One,
        };
        let mut rng = seed::rng_from(7);
        let y = transform.apply_series(&x, &mut rng).unwrap();
        // replicate the draw from an identically seeded stream
        let mut replica = seed::rng_from(7);
        let z: f64 = StandardNormal.sample(&mut replica);
        let alpha = 1.0 + 0.4 * z;
        for (a, b) in x.iter().zip(&y) {
            assert_eq!(a * alpha, *b);
        }
    }

    // ── Warp curve geometry ─────────────────────────────────────────

    #[test]
    fn warp_curve_interpolates_its_knots() {
        // T = 7, k = 4: knot positions 1, 3, 5, 7 land on timesteps
        let transform = Transform::MagnitudeWarp {
            sigma: 0.3,
            knots: 4,
        };
        let mut rng = seed::rng_from(19);
        let y = transform.apply_series(&[1.0; 7], &mut rng).unwrap();
        let mut replica = seed::rng_from(19);
        let knots: Vec<f64> = (0..4)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut replica);
                1.0 + 0.3 * z
            })
            .collect();
        for (j, &u) in knots.iter().enumerate() {
            let t = 2 * j; // timestep index of knot j
            assert!(
                (y[t] - u).abs() < 1e-9,
                "knot {j}: curve {} vs drawn {u}",
                y[t]
            );
        }
    }

    #[test]
    fn warp_with_two_knots_is_linear() {
        let transform = Transform::MagnitudeWarp {
            sigma: 0.5,
            knots: 2,
        };
        let mut rng = seed::rng_from(23);
        let y = transform.apply_series(&[1.0; 3], &mut rng).unwrap();
        // natural spline through two knots is the straight line
        assert!((y[1] - 0.5 * (y[0] + y[2])).abs() < 1e-12);
    }

    #[test]
    fn warp_rejects_bad_knot_counts() {
        let mut rng = seed::rng_from(1);
        let too_few = Transform::MagnitudeWarp {
            sigma: 0.1,
            knots: 1,
        };
        assert!(too_few.apply_series(&[1.0; 5], &mut rng).is_err());
        let too_many = Transform::MagnitudeWarp {
            sigma: 0.1,
            knots: 9,
        };
        assert!(too_many.apply_series(&[1.0; 5], &mut rng).is_err());
    }

    // ── Chains and panels ───────────────────────────────────────────

    #[test]
    fn chains_are_deterministic_and_seed_sensitive() {
        let panel = vec![any_series(), vec![1.0; 7]];
        let chain = vec![
            Transform::Jitter { sigma: 0.1 },
            Transform::MagnitudeWarp {
                sigma: 0.2,
                knots: 3,
            },
        ];
        let a = apply_chain_to_panel(&chain, &panel, 5).unwrap();
        let b = apply_chain_to_panel(&chain, &panel, 5).unwrap();
        let c = apply_chain_to_panel(&chain, &panel, 6).unwrap();
        assert_eq!(a, b);
        assert_ne!(a, c);
    }

    #[test]
    fn series_streams_are_independent() {
        let chain = vec![Transform::Jitter { sigma: 0.1 }];
        let p1 = vec![any_series(), vec![1.0; 7]];
        let mut p2 = p1.clone();
        p2[0] = vec![9.0; 7]; // perturb series 0 only
        let a = apply_chain_to_panel(&chain, &p1, 11).unwrap();
        let b = apply_chain_to_panel(&chain, &p2, 11).unwrap();
        assert_eq!(a[1], b[1], "series 1 noise must not depend on series 0");
    }

    #[test]
    fn repeated_kinds_in_a_chain_use_distinct_streams() {
        let chain = vec![
            Transform::Jitter { sigma: 0.1 },
            Transform::Jitter { sigma: 0.1 },
        ];
        let x = vec![0.0; 64];
        let out = apply_chain_to_panel(&chain, &[x.clone()], 3).unwrap();
        let one_step = apply_chain_to_panel(&chain[..1], &[x], 3).unwrap();
        // if both steps replayed the same draws, the two-step noise
        // would be exactly twice the one-step noise
        let doubled: Vec<f64> = one_step[0].iter().map(|v| 2.0 * v).collect();
        assert_ne!(out[0], doubled);
    }

    #[test]
    fn frozen_draws_scale_linearly_with_sigma() {
        // same seed, different strengths: identical standardized noise
        let x = vec![0.0; 32];
        let weak = Transform::Jitter { sigma: 0.1 };
        let strong = Transform::Jitter { sigma: 0.2 };
        let a = apply_chain_to_panel(&[weak], &[x.clone()], 9).unwrap();
        let b = apply_chain_to_panel(&[strong], &[x], 9).unwrap();
        for (u, v) in a[0].iter().zip(&b[0]) {
            assert!((2.0 * u - v).abs() < 1e-15);
        }
    }

    // ── Latent round trip ───────────────────────────────────────────

    #[test]
    fn empty_latent_chain_equals_reconstruction() {
        let data = synth_corpus(3, 8, 0.05, 41).unwrap().normalize().unwrap();
        let (dim, _) = data.condition_vectors();
        let model = Model::init(ModelConfig {
            window_length: 8,
            input_dim: 1,
            condition_dim: dim,
            hidden_units: 4,
            latent_dim: 2,
            num_heads: 2,
            dropout_rate: 0.0,
            kl_weight_latent: 1.0,
            kl_weight_attention: 1.0,
            learning_rate: 0.001,
            seed: 2,
        })
        .unwrap();
        let aug = augment_latent(&model, &data, &[], 0).unwrap();
        let rec = model.reconstruct(&data).unwrap();
        assert_eq!(aug.values(), rec.as_slice());

        // a zero-strength chain is the same identity
        let chain = vec![Transform::Jitter { sigma: 0.0 }];
        let aug0 = augment_latent(&model, &data, &chain, 123).unwrap();
        assert_eq!(aug0.values(), rec.as_slice());
    }

    #[test]
    fn direct_augmentation_preserves_metadata() {
        let data = synth_corpus(4, 10, 0.05, 13).unwrap();
        let chain = vec![Transform::Jitter { sigma: 0.05 }];
        let aug = augment_direct(&data, &chain, 77).unwrap();
        assert_eq!(aug.names(), data.names());
        assert_eq!(aug.groups(), data.groups());
        assert_ne!(aug.values(), data.values());
    }

    // ── Plain-data serialization ────────────────────────────────────

    #[test]
    fn transform_specs_deserialize_from_tagged_maps() {
        let j: Transform =
            serde_json::from_str(r#"{"kind":"jitter","sigma":0.05}"#).unwrap();
        assert_eq!(j, Transform::Jitter { sigma: 0.05 });

        let s: Transform =
            serde_json::from_str(r#"{"kind":"scaling","sigma":0.1,"center":"zero"}"#).unwrap();
        assert_eq!(
            s,
            Transform::Scaling {
                sigma: 0.1,
                center: ScalingCenter::Zero
            }
        );

        let w: Transform =
            serde_json::from_str(r#"{"kind":"magnitude_warp","sigma":0.2}"#).unwrap();
        assert_eq!(
            w,
            Transform::MagnitudeWarp {
                sigma: 0.2,
                knots: 4
            }
        );

        assert!(serde_json::from_str::<Transform>(r#"{"kind":"unknown","sigma":1}"#).is_err());
        assert!(serde_json::from_str::<Transform>(r#"{"kind":"jitter"}"#).is_err());
    }
}
