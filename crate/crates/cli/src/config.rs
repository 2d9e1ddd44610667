//! One TOML file describes a full run: where the data lives, the model
//! and training settings, the transformation chains, and the knobs for
//! forecasting comparisons and strength calibration.
//!
//! ```toml
//! [data]
//! path = "panel.csv"
//! top_k = 64
//!
//! [model]
//! window_length = 96
//! latent_dim = 4
//! hidden_units = 32
//! num_heads = 2
//! seed = 7
//!
//! [train]
//! epochs = 200
//!
//! [augment]
//! seed = 11
//!
//! [[direct_chain]]
//! kind = "jitter"
//! sigma = 0.05
//!
//! [[latent_chain]]
//! kind = "jitter"
//! sigma = 0.3
//! ```
//!
//! Relative data paths are resolved against the config file's
//! directory, so a run directory can be moved wholesale.

use latentaug::calibrate::CalibrationOptions;
use latentaug::data::TimeSeriesDataset;
use latentaug::model::{ModelConfig, TrainOptions};
use latentaug::transforms::Transform;
use latentaug::tstr::ForecasterConfig;
use latentaug::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DataConfig {
    /// CSV panel; a `<path>.groups` sidecar is picked up automatically.
    pub path: PathBuf,
    /// Aggregate consecutive daily values into weekly sums first.
    #[serde(default)]
    pub weekly: bool,
    /// Keep only the k series with the largest mean (0 = keep all).
    #[serde(default)]
    pub top_k: usize,
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentConfig {
    /// Chain seed for both direct and latent augmentation.
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub data: DataConfig,
    pub model: ModelConfig,
    #[serde(default)]
    pub train: TrainOptions,
    #[serde(default)]
    pub augment: AugmentConfig,
    #[serde(default)]
    pub direct_chain: Vec<Transform>,
    #[serde(default)]
    pub latent_chain: Vec<Transform>,
    #[serde(default)]
    pub forecaster: Option<ForecasterConfig>,
    #[serde(default)]
    pub calibration: CalibrationOptions,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::io(path.display().to_string(), e))?;
        let config: RunConfig = toml::from_str(&text)
            .map_err(|e| Error::config(format!("{}: {e}", path.display())))?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        for t in self.direct_chain.iter().chain(&self.latent_chain) {
            t.validate()?;
        }
        if let Some(f) = &self.forecaster {
            f.validate()?;
        }
        self.calibration.validate()?;
        Ok(())
    }

    pub fn render(&self) -> Result<String> {
        toml::to_string_pretty(self)
            .map_err(|e| Error::config(format!("cannot serialize config: {e}")))
    }

    /// The data path, resolved against the config file's directory.
    pub fn data_path(&self, config_path: &Path) -> PathBuf {
        if self.data.path.is_absolute() {
            self.data.path.clone()
        } else {
            config_path
                .parent()
                .unwrap_or_else(|| Path::new("."))
                .join(&self.data.path)
        }
    }

    /// Load and preprocess the panel: optional weekly aggregation,
    /// optional top-k selection, then min-max normalization.  Returns
    /// (prepared raw panel, normalized panel).
    pub fn prepare_data(
        &self,
        config_path: &Path,
    ) -> Result<(TimeSeriesDataset, TimeSeriesDataset)> {
        let mut data = TimeSeriesDataset::load_csv(&self.data_path(config_path))?;
        if self.data.weekly {
            data = data.resample_weekly()?;
        }
        if self.data.top_k > 0 {
            data = data.select_top_k(self.data.top_k)?;
        }
        let normalized = data.normalize()?;
        Ok((data, normalized))
    }

    /// The model section with its condition width filled in from the
    /// panel's group labels (when the config leaves it at 0).
    pub fn model_for(&self, data: &TimeSeriesDataset) -> ModelConfig {
        let mut model = self.model.clone();
        if model.condition_dim == 0 {
            let (dim, _) = data.condition_vectors();
            model.condition_dim = dim;
        }
        model
    }
}

// ────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use latentaug::transforms::ScalingCenter;

    const FULL: &str = r#"
[data]
path = "panel.csv"
weekly = true
top_k = 8

[model]
window_length = 12
latent_dim = 2
hidden_units = 4
num_heads = 2
seed = 3

[train]
epochs = 5
batch_size = 2

[augment]
seed = 9

[[direct_chain]]
kind = "jitter"
sigma = 0.05

[[latent_chain]]
kind = "scaling"
sigma = 0.2
center = "zero"

[forecaster]
input_length = 4

[calibration]
tolerance = 0.1
"#;

    #[test]
    fn full_config_parses() {
        let config: RunConfig = toml::from_str(FULL).unwrap();
        config.validate().unwrap();
        assert!(config.data.weekly);
        assert_eq!(config.data.top_k, 8);
        assert_eq!(config.model.window_length, 12);
        assert_eq!(config.train.epochs, 5);
        assert_eq!(config.augment.seed, 9);
        assert_eq!(config.direct_chain, vec![Transform::Jitter { sigma: 0.05 }]);
        assert_eq!(
            config.latent_chain,
            vec![Transform::Scaling {
                sigma: 0.2,
                center: ScalingCenter::Zero
            }]
        );
        assert_eq!(config.forecaster.as_ref().unwrap().input_length, 4);
        assert_eq!(config.calibration.tolerance, 0.1);
    }

    #[test]
    fn minimal_config_fills_defaults() {
        let text = r#"
[data]
path = "p.csv"

[model]
window_length = 8
latent_dim = 2
"#;
        let config: RunConfig = toml::from_str(text).unwrap();
        assert_eq!(config.train.epochs, 200);
        assert_eq!(config.train.batch_size, 8);
        assert!(config.direct_chain.is_empty());
        assert!(config.forecaster.is_none());
        assert_eq!(config.calibration.max_evaluations, 40);
        assert_eq!(config.model.hidden_units, 256);
    }

    #[test]
    fn unknown_keys_are_rejected_everywhere() {
        for bad in [
            "[data]\npath = \"p\"\ntypo = 1\n[model]\nwindow_length = 8\nlatent_dim = 2",
            "[data]\npath = \"p\"\n[model]\nwindow_length = 8\nlatent_dim = 2\ntypo = 1",
            "[data]\npath = \"p\"\n[model]\nwindow_length = 8\nlatent_dim = 2\n[train]\ntypo = 1",
            "[data]\npath = \"p\"\n[model]\nwindow_length = 8\nlatent_dim = 2\n[[direct_chain]]\nkind = \"jitter\"\nsigma = 1\ntypo = 2",
        ] {
            assert!(toml::from_str::<RunConfig>(bad).is_err(), "accepted: {bad}");
        }
    }

    #[test]
    fn render_parse_round_trip() {
        let config: RunConfig = toml::from_str(FULL).unwrap();
        let text = config.render().unwrap();
        let back: RunConfig = toml::from_str(&text).unwrap();
        assert_eq!(back.model, config.model);
        assert_eq!(back.direct_chain, config.direct_chain);
        assert_eq!(back.latent_chain, config.latent_chain);
        assert_eq!(back.calibration, config.calibration);
    }

    #[test]
    fn relative_paths_resolve_against_the_config_directory() {
        let config: RunConfig = toml::from_str(FULL).unwrap();
        let resolved = config.data_path(Path::new("/runs/exp1/run.toml"));
        assert_eq!(resolved, PathBuf::from("/runs/exp1/panel.csv"));
    }
}
