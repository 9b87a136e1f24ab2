//! The run configuration document and `--set` overrides.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::data::DatasetSpec;
use crate::error::{Error, Result};
use crate::metrics::MetricOptions;
use crate::model::ModelConfig;
use crate::training::TrainConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Seeds parameter initialisation and synthetic data.
    pub seed: u64,
    pub out_dir: PathBuf,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub data: DatasetSpec,
    /// Evaluation set; the training set is used when absent.
    pub eval_data: Option<DatasetSpec>,
    pub metrics: MetricOptions,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self::desk()
    }
}

impl RunConfig {
    /// Small CPU-sized defaults: c0 = 16, window 4, 64×64 synthetic shapes.
    pub fn desk() -> Self {
        Self {
            seed: 0,
            out_dir: PathBuf::from("runs/desk"),
            model: ModelConfig::desk(),
            train: TrainConfig::default(),
            data: DatasetSpec::default(),
            eval_data: None,
            metrics: MetricOptions::default(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::config(format!("invalid run config: {e}")))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::config(format!("cannot read config {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("run config serialises")
    }

    /// Applies `dotted.key=value` assignments. Values are parsed as JSON and
    /// fall back to plain strings; every key must already exist in the schema.
    pub fn with_overrides<S: AsRef<str>>(&self, assignments: &[S]) -> Result<Self> {
        let mut doc = serde_json::to_value(self).expect("run config serialises");
        for assignment in assignments {
            let assignment = assignment.as_ref();
            let (key, raw) = assignment
                .split_once('=')
                .ok_or_else(|| Error::config(format!("override `{assignment}` is not of the form key=value")))?;
            let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
            set_path(&mut doc, key, value)?;
        }
        serde_json::from_value(doc).map_err(|e| Error::config(format!("invalid override: {e}")))
    }

    pub fn validate(&self) -> Result<()> {
        self.model.validate()?;
        self.train.validate()?;
        self.data.validate()?;
        if let Some(eval) = &self.eval_data {
            eval.validate()?;
        }
        if self.data.num_classes != self.model.num_classes || self.data.channels != self.model.input_channels {
            return Err(Error::config(format!(
                "dataset provides {} classes / {} channels, model expects {} / {}",
                self.data.num_classes, self.data.channels, self.model.num_classes, self.model.input_channels
            )));
        }
        self.model.validate_input(self.data.size, self.data.size)?;
        let hd = self.metrics.hd_percentile;
        if !(hd > 0.0 && hd <= 100.0) {
            return Err(Error::config(format!("metrics.hd_percentile {hd} outside (0, 100]")));
        }
        Ok(())
    }
}

fn set_path(doc: &mut Value, key: &str, value: Value) -> Result<()> {
    let mut node = doc;
    let parts: Vec<&str> = key.split('.').collect();
    for (i, part) in parts.iter().enumerate() {
        let obj = node
            .as_object_mut()
            .ok_or_else(|| Error::config(format!("`{}` is not an object", parts[..i].join("."))))?;
        if !obj.contains_key(*part) {
            return Err(Error::config(format!("unknown config key `{key}`")));
        }
        let slot = obj.get_mut(*part).expect("checked above");
        if i + 1 == parts.len() {
            *slot = value;
            return Ok(());
        }
        node = slot;
    }
    unreachable!("split always yields one part")
}
