//! Versioned JSON checkpoints: `{format_version, hyperparams, arrays}` with
//! every array stored as a nested list in its natural shape.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::model::{Model, Params, EMBED_ROWS};
use super::{Hyperparams, NnError};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    hyperparams: Hyperparams,
    arrays: BTreeMap<String, Value>,
}

fn shapes(h: &Hyperparams) -> BTreeMap<&'static str, Vec<usize>> {
    let [h1, h2] = h.hidden;
    BTreeMap::from([
        ("embedding", vec![EMBED_ROWS, h.k]),
        ("conv_weight", vec![h.n, h.m, h.k]),
        ("bn_gamma", vec![h.n]),
        ("bn_beta", vec![h.n]),
        ("bn_running_mean", vec![h.n]),
        ("bn_running_var", vec![h.n]),
        ("dense1_weight", vec![h1, h.n]),
        ("dense1_bias", vec![h1]),
        ("dense2_weight", vec![h2, h1]),
        ("dense2_bias", vec![h2]),
        ("out_weight", vec![2, h2]),
        ("out_bias", vec![2]),
    ])
}

fn nest(data: &[f64], shape: &[usize]) -> Value {
    match shape {
        [] | [_] => Value::from(data.to_vec()),
        [rows, rest @ ..] => {
            let stride = data.len() / rows;
            Value::Array(data.chunks(stride).map(|c| nest(c, rest)).collect())
        }
    }
}

fn flatten(value: &Value, shape: &[usize], name: &str, out: &mut Vec<f64>) -> Result<(), NnError> {
    let bad = || NnError::Checkpoint(format!("array {name} does not match its shape"));
    let items = value.as_array().ok_or_else(bad)?;
    let (&len, rest) = shape.split_first().ok_or_else(bad)?;
    if items.len() != len {
        return Err(bad());
    }
    for item in items {
        if rest.is_empty() {
            out.push(item.as_f64().ok_or_else(bad)?);
        } else {
            flatten(item, rest, name, out)?;
        }
    }
    Ok(())
}

fn arrays_of(model: &Model) -> BTreeMap<&'static str, &[f64]> {
    let mut map: BTreeMap<&'static str, &[f64]> = model
        .params
        .tensors()
        .into_iter()
        .map(|(name, t)| (name, t.as_slice()))
        .collect();
    map.insert("bn_running_mean", &model.running_mean);
    map.insert("bn_running_var", &model.running_var);
    map
}

pub fn checkpoint_to_json(model: &Model) -> String {
    let shapes = shapes(&model.hyper);
    let arrays = arrays_of(model)
        .into_iter()
        .map(|(name, data)| (name.to_string(), nest(data, &shapes[name])))
        .collect();
    let file = CheckpointFile {
        format_version: FORMAT_VERSION,
        hyperparams: model.hyper.clone(),
        arrays,
    };
    serde_json::to_string(&file).expect("checkpoint serializes") + "\n"
}

pub fn checkpoint_from_json(text: &str) -> Result<Model, NnError> {
    let file: CheckpointFile =
        serde_json::from_str(text).map_err(|e| NnError::Checkpoint(e.to_string()))?;
    if file.format_version != FORMAT_VERSION {
        return Err(NnError::Checkpoint(format!(
            "unsupported format_version {}",
            file.format_version
        )));
    }
    let hyper = file.hyperparams;
    hyper.validate()?;
    let take = |name: &str, shape: &[usize]| -> Result<Vec<f64>, NnError> {
        let value = file
            .arrays
            .get(name)
            .ok_or_else(|| NnError::Checkpoint(format!("missing array {name}")))?;
        let mut out = Vec::with_capacity(shape.iter().product());
        flatten(value, shape, name, &mut out)?;
        Ok(out)
    };
    let shapes = shapes(&hyper);
    let mut params = Params::zeros(&hyper);
    for (name, tensor) in params.tensors_mut() {
        *tensor = take(name, &shapes[name])?;
    }
    let running_mean = take("bn_running_mean", &shapes["bn_running_mean"])?;
    let running_var = take("bn_running_var", &shapes["bn_running_var"])?;
    Ok(Model {
        hyper,
        params,
        running_mean,
        running_var,
    })
}
