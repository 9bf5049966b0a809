//! JSON checkpoints. Parameters are written with 17 significant digits so
//! that a save/load cycle reproduces every f64 bit for bit.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use super::{Family, GmpConfig, Model, ModelConfig, RecurrentConfig};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const CHECKPOINT_FORMAT_VERSION: u32 = 1;

/// Which validation rule selected this checkpoint, and when.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GoldInfo {
    pub metric: String,
    pub value: f64,
    pub epoch: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub model: Model,
    pub seed: u64,
    pub gold: Option<GoldInfo>,
}

#[derive(Serialize)]
struct FileOut<'a> {
    format_version: u32,
    family: Family,
    hyperparams: serde_json::Value,
    parameter_order: Vec<String>,
    parameters: Vec<Box<RawValue>>,
    seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    gold: Option<&'a GoldInfo>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct FileIn {
    format_version: u32,
    family: Family,
    hyperparams: serde_json::Value,
    parameter_order: Vec<String>,
    parameters: Vec<Vec<f64>>,
    seed: u64,
    #[serde(default)]
    gold: Option<GoldInfo>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

fn encode(t: &Tensor) -> Result<Box<RawValue>> {
    let mut s = String::with_capacity(t.len() * 25 + 2);
    s.push('[');
    for (k, v) in t.data.iter().enumerate() {
        if !v.is_finite() {
            return Err(bad("cannot serialize a non-finite parameter"));
        }
        if k > 0 {
            s.push(',');
        }
        s.push_str(&format!("{v:.16e}"));
    }
    s.push(']');
    Ok(RawValue::from_string(s)?)
}

impl Checkpoint {
    pub fn new(model: Model, seed: u64) -> Self {
        Self {
            model,
            seed,
            gold: None,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let hyperparams = match &self.model.config {
            ModelConfig::Dgru(c) | ModelConfig::Gru(c) | ModelConfig::Lstm(c) => {
                serde_json::to_value(c)?
            }
            ModelConfig::Gmp(g) => serde_json::to_value(g)?,
        };
        let file = FileOut {
            format_version: CHECKPOINT_FORMAT_VERSION,
            family: self.model.family(),
            hyperparams,
            parameter_order: self.model.params.names(),
            parameters: self
                .model
                .params
                .iter()
                .map(|p| encode(&p.value))
                .collect::<Result<_>>()?,
            seed: self.seed,
            gold: self.gold.as_ref(),
        };
        let mut s = serde_json::to_string_pretty(&file)?;
        s.push('\n');
        Ok(s)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: FileIn =
            serde_json::from_str(text).map_err(|e| bad(format!("malformed checkpoint: {e}")))?;
        if file.format_version != CHECKPOINT_FORMAT_VERSION {
            return Err(bad(format!(
                "unsupported checkpoint format version {}",
                file.format_version
            )));
        }
        let hp = |e: serde_json::Error| bad(format!("bad hyperparams: {e}"));
        let config = match file.family {
            Family::Gmp => {
                ModelConfig::Gmp(serde_json::from_value::<GmpConfig>(file.hyperparams).map_err(hp)?)
            }
            f => {
                let c = serde_json::from_value::<RecurrentConfig>(file.hyperparams).map_err(hp)?;
                match f {
                    Family::Dgru => ModelConfig::Dgru(c),
                    Family::Gru => ModelConfig::Gru(c),
                    _ => ModelConfig::Lstm(c),
                }
            }
        };
        let mut model = Model::zeros(config).map_err(|e| bad(e.to_string()))?;
        if file.parameter_order != model.params.names() {
            return Err(bad(format!(
                "parameter order {:?} does not match the {} layout",
                file.parameter_order,
                model.family()
            )));
        }
        if file.parameters.len() != model.params.len() {
            return Err(bad("parameter list length does not match"));
        }
        for (p, values) in model.params.iter_mut().zip(file.parameters) {
            if values.len() != p.value.len() {
                return Err(bad(format!(
                    "`{}` has {} values, expected {}",
                    p.name,
                    values.len(),
                    p.value.len()
                )));
            }
            p.value.data = values;
        }
        Ok(Self {
            model,
            seed: file.seed,
            gold: file.gold,
        })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path)
            .map_err(|e| bad(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }
}
