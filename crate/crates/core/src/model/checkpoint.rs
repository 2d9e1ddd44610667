//! Checkpoint files: config + parameters as JSON, bit-exact round trip.
//!
//! The format stores every tensor's f64 data verbatim (serde_json
//! prints doubles losslessly), so save -> load reproduces the exact
//! parameter bytes and downstream runs are reproducible across
//! processes.

use super::{Model, ModelConfig};
use crate::error::{Error, Result};
use crate::gradcheck::ParamMap;
use crate::tensor::Tensor;
use serde::{Deserialize, Serialize};
use std::path::Path;

const FORMAT: &str = "latentaug-checkpoint";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format: String,
    version: u32,
    config: ModelConfig,
    /// Sorted by name; each entry is a named tensor.
    params: Vec<NamedTensor>,
}

#[derive(Serialize, Deserialize)]
struct NamedTensor {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn save_checkpoint(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let file = CheckpointFile {
        format: FORMAT.to_string(),
        version: VERSION,
        config: model.config.clone(),
        // BTreeMap iteration is already name-sorted
        params: model
            .params
            .iter()
            .map(|(name, t)| NamedTensor {
                name: name.clone(),
                shape: t.shape().to_vec(),
                data: t.data().to_vec(),
            })
            .collect(),
    };
    let json = serde_json::to_string(&file)
        .map_err(|e| Error::numerical(format!("checkpoint serialization failed: {e}")))?;
    std::fs::write(path, json).map_err(|e| Error::io(path.display().to_string(), e))
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<Model> {
    let path = path.as_ref();
    let text =
        std::fs::read_to_string(path).map_err(|e| Error::io(path.display().to_string(), e))?;
    let file: CheckpointFile = serde_json::from_str(&text).map_err(|e| {
        Error::data(format!("{}: not a valid checkpoint: {e}", path.display()))
    })?;
    if file.format != FORMAT {
        return Err(Error::data(format!(
            "{}: unrecognized checkpoint format '{}'",
            path.display(),
            file.format
        )));
    }
    if file.version != VERSION {
        return Err(Error::data(format!(
            "{}: unsupported checkpoint version {} (this build reads {VERSION})",
            path.display(),
            file.version
        )));
    }
    let mut params = ParamMap::new();
    for entry in file.params {
        if params.contains_key(&entry.name) {
            return Err(Error::data(format!(
                "{}: duplicate parameter '{}'",
                path.display(),
                entry.name
            )));
        }
        let tensor = Tensor::new(entry.shape, entry.data).map_err(|e| {
            Error::data(format!(
                "{}: parameter '{}': {e}",
                path.display(),
                entry.name
            ))
        })?;
        params.insert(entry.name, tensor);
    }
    Model::from_params(file.config, params)
}

// ────────────────────────────────────────────────────────────────────

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;

    fn small_model() -> Model {
        Model::init(ModelConfig {
            window_length: 6,
            input_dim: 1,
            condition_dim: 2,
            hidden_units: 4,
            latent_dim: 2,
            num_heads: 2,
            dropout_rate: 0.0,
            kl_weight_latent: 1.0,
            kl_weight_attention: 1.0,
            learning_rate: 0.001,
            seed: 21,
        })
        .unwrap()
    }

    #[test]
    fn round_trip_is_bit_exact() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.config, model.config);
        assert_eq!(loaded.params.len(), model.params.len());
        for (name, t) in &model.params {
            let u = &loaded.params[name];
            assert_eq!(t.shape(), u.shape());
            // compare bits, not values: NaN-free but catches -0.0 drift too
            let bits_equal = t
                .data()
                .iter()
                .zip(u.data())
                .all(|(a, b)| a.to_bits() == b.to_bits());
            assert!(bits_equal, "parameter {name} changed across the round trip");
        }
    }

    #[test]
    fn rejects_foreign_json() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("other.json");
        std::fs::write(&path, r#"{"format":"something-else"}"#).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn rejects_tampered_shapes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let model = small_model();
        save_checkpoint(&model, &path).unwrap();
        let text = std::fs::read_to_string(&path).unwrap();
        // shrink one tensor's declared shape so counts no longer match
        let tampered = text.replacen(r#""shape":[1,8]"#, r#""shape":[1,7]"#, 1);
        assert_ne!(text, tampered, "expected a [1,8] bias in the checkpoint");
        std::fs::write(&path, tampered).unwrap();
        assert!(load_checkpoint(&path).is_err());
    }

    #[test]
    fn missing_file_is_an_io_error() {
        let err = load_checkpoint("/nonexistent/checkpoint.json").unwrap_err();
        assert!(matches!(err, Error::Io { .. }));
    }
}
