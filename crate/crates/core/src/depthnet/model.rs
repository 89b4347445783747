use std::path::Path;

use serde::{Deserialize, Serialize};

use super::net::{NetArch, NetParams};
use super::LabelSet;
use crate::error::{ensure, Error, Result};
use crate::io::tensorfile::{read_tensors, write_tensors};

const MODEL_SCHEMA: u32 = 1;
const PARAMS_FILE: &str = "params.plnt";
const MANIFEST_FILE: &str = "model.toml";

/// A trained classifier together with the labels its outputs index.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub params: NetParams<f32>,
    pub label_set: LabelSet,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelManifest {
    schema_version: u32,
    params_file: String,
    arch: NetArch,
    label_set: LabelSet,
}

impl TrainedModel {
    pub fn new(params: NetParams<f32>, label_set: LabelSet) -> Result<Self> {
        ensure(params.arch.n_labels == label_set.len(), || {
            format!("network has {} outputs, label set has {} labels", params.arch.n_labels, label_set.len())
        })?;
        Ok(TrainedModel { params, label_set })
    }

    /// Writes `params.plnt` and a `model.toml` manifest holding the
    /// architecture and label set.
    pub fn save(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        write_tensors(&dir.join(PARAMS_FILE), &self.params.to_tensors())?;
        let m = ModelManifest {
            schema_version: MODEL_SCHEMA,
            params_file: PARAMS_FILE.into(),
            arch: self.params.arch,
            label_set: self.label_set.clone(),
        };
        let text = toml::to_string(&m).map_err(|e| Error::Format { what: "model manifest", detail: e.to_string() })?;
        std::fs::write(dir.join(MANIFEST_FILE), text)?;
        Ok(())
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE))?;
        let m: ModelManifest =
            toml::from_str(&text).map_err(|e| Error::Format { what: "model manifest", detail: e.to_string() })?;
        if m.schema_version != MODEL_SCHEMA {
            return Err(Error::Format {
                what: "model manifest",
                detail: format!("unsupported schema {}", m.schema_version),
            });
        }
        m.arch.validate()?;
        m.label_set.validate()?;
        let params = NetParams::from_tensors(m.arch, &read_tensors(&dir.join(&m.params_file))?)?;
        Self::new(params, m.label_set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip() {
        let set = LabelSet::desk();
        let arch = NetArch { patch: 7, in_channels: 5, widths: [4, 3, 2], hidden: 6, n_labels: set.len() };
        let model = TrainedModel::new(NetParams::init(arch, 3).unwrap(), set).unwrap();
        let dir = tempfile::tempdir().unwrap();
        model.save(dir.path()).unwrap();
        assert_eq!(TrainedModel::load(dir.path()).unwrap(), model);
    }

    #[test]
    fn label_count_must_match() {
        let arch = NetArch { patch: 7, in_channels: 5, widths: [4, 3, 2], hidden: 6, n_labels: 3 };
        assert!(TrainedModel::new(NetParams::init(arch, 0).unwrap(), LabelSet::desk()).is_err());
    }
}
