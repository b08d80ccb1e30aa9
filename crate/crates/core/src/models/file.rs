//! Versioned JSON model files:
//!
//! ```json
//! {"format_version": 1, "architecture": "agt",
//!  "hyperparameters": {...}, "parameters": {"head.w": [[...], ...], ...}}
//! ```
//!
//! Parameters are nested arrays whose nesting depth is the tensor rank.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{Architecture, Model, ModelConfig};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::io::write_atomic;
use crate::nn::ParamSet;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelFile {
    format_version: u32,
    architecture: Architecture,
    hyperparameters: ModelConfig,
    parameters: BTreeMap<String, Value>,
}

fn nest(shape: &[usize], data: &[f64]) -> Value {
    match shape {
        [] | [_] => Value::Array(data.iter().map(|&v| Value::from(v)).collect()),
        [_, rest @ ..] => {
            let stride: usize = rest.iter().product();
            Value::Array(data.chunks(stride).map(|c| nest(rest, c)).collect())
        }
    }
}

fn unnest(name: &str, value: &Value) -> Result<Tensor> {
    fn shape_of(v: &Value) -> Vec<usize> {
        match v {
            Value::Array(items) => {
                let mut s = vec![items.len()];
                if let Some(first) = items.first() {
                    s.extend(shape_of(first));
                }
                s
            }
            _ => Vec::new(),
        }
    }
    fn flatten(v: &Value, depth: usize, shape: &[usize], out: &mut Vec<f64>) -> bool {
        match v {
            Value::Array(items) if depth < shape.len() && items.len() == shape[depth] => {
                items.iter().all(|i| flatten(i, depth + 1, shape, out))
            }
            Value::Number(n) if depth == shape.len() => match n.as_f64() {
                Some(x) => {
                    out.push(x);
                    true
                }
                None => false,
            },
            _ => false,
        }
    }
    let shape = shape_of(value);
    let mut data = Vec::new();
    if shape.is_empty() || !flatten(value, 0, &shape, &mut data) {
        return Err(Error::Data(format!(
            "parameter `{name}` is not a rectangular numeric array"
        )));
    }
    Tensor::new(shape, data)
}

pub fn save_model(model: &Model, path: &Path) -> Result<()> {
    let parameters = model
        .params
        .iter()
        .map(|(k, t)| (k.to_string(), nest(t.shape(), t.data())))
        .collect();
    let file = ModelFile {
        format_version: FORMAT_VERSION,
        architecture: model.arch,
        hyperparameters: model.config.clone(),
        parameters,
    };
    let mut bytes = serde_json::to_vec(&file)?;
    bytes.push(b'\n');
    write_atomic(path, &bytes)
}

/// Load a model file; the parameter names and shapes must match what the
/// architecture and hyperparameters imply.
pub fn load_model(path: &Path) -> Result<Model> {
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let file: ModelFile = serde_json::from_slice(&bytes)?;
    if file.format_version != FORMAT_VERSION {
        return Err(Error::Data(format!(
            "unsupported model format version {} (expected {FORMAT_VERSION})",
            file.format_version
        )));
    }
    let template = Model::new(file.architecture, file.hyperparameters, 0)?;
    let mut params = ParamSet::new();
    for (name, value) in &file.parameters {
        let t = unnest(name, value)?;
        let expected = template.params.get(name)?;
        if expected.shape() != t.shape() {
            return Err(Error::dim(
                "load_model",
                format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    t.shape(),
                    expected.shape()
                ),
            ));
        }
        params.insert(name.clone(), t);
    }
    if params.len() != template.params.len() {
        let missing: Vec<&str> = template
            .params
            .names()
            .filter(|n| params.get(n).is_err())
            .collect();
        return Err(Error::Data(format!(
            "model file is missing parameters {missing:?}"
        )));
    }
    Ok(Model {
        arch: template.arch,
        config: template.config,
        params,
    })
}
