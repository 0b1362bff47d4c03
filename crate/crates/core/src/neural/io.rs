//! Versioned JSON model documents.
//!
//! Every weight is written in scientific notation with 17 significant digits,
//! which parses back to the identical `f64`.

use super::network::{Dense, Network, NetworkSpec, Standardizer};
use crate::{Error, Result};
use ndarray::{Array1, Array2};
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

pub const MODEL_FORMAT_VERSION: u32 = 1;
const FORMAT_NAME: &str = "nptest-model";

fn exact(values: impl IntoIterator<Item = f64>) -> Result<Vec<Box<RawValue>>> {
    values
        .into_iter()
        .map(|v| {
            if !v.is_finite() {
                return Err(Error::Domain(format!("cannot encode non-finite value {v}")));
            }
            RawValue::from_string(format!("{v:.16e}")).map_err(Error::from)
        })
        .collect()
}

#[derive(Serialize)]
struct StandardizerOut {
    shift: Vec<Box<RawValue>>,
    scale: Vec<Box<RawValue>>,
}

#[derive(Serialize)]
struct LayerOut {
    inputs: usize,
    outputs: usize,
    weights: Vec<Box<RawValue>>,
    bias: Vec<Box<RawValue>>,
}

#[derive(Serialize)]
struct DocumentOut<'a> {
    format: &'static str,
    version: u32,
    spec: &'a NetworkSpec,
    standardizer: StandardizerOut,
    layers: Vec<LayerOut>,
}

#[derive(Deserialize)]
struct LayerIn {
    inputs: usize,
    outputs: usize,
    weights: Vec<f64>,
    bias: Vec<f64>,
}

#[derive(Deserialize)]
struct DocumentIn {
    format: String,
    version: u32,
    spec: NetworkSpec,
    standardizer: Standardizer,
    layers: Vec<LayerIn>,
}

pub fn save(net: &Network) -> Result<String> {
    net.validate()?;
    let layers = net
        .layers
        .iter()
        .map(|l| {
            Ok(LayerOut {
                inputs: l.inputs(),
                outputs: l.outputs(),
                // standard layout iterates row-major over (inputs, outputs)
                weights: exact(l.weights.iter().copied())?,
                bias: exact(l.bias.iter().copied())?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let doc = DocumentOut {
        format: FORMAT_NAME,
        version: MODEL_FORMAT_VERSION,
        spec: &net.spec,
        standardizer: StandardizerOut {
            shift: exact(net.standardizer.shift.iter().copied())?,
            scale: exact(net.standardizer.scale.iter().copied())?,
        },
        layers,
    };
    Ok(serde_json::to_string_pretty(&doc)?)
}

pub fn load(document: &str) -> Result<Network> {
    let doc: DocumentIn = serde_json::from_str(document).map_err(|e| Error::Load(e.to_string()))?;
    if doc.format != FORMAT_NAME {
        return Err(Error::Load(format!("unknown document format {:?}", doc.format)));
    }
    if doc.version != MODEL_FORMAT_VERSION {
        return Err(Error::Load(format!("model version {} is not supported (expected {MODEL_FORMAT_VERSION})", doc.version)));
    }
    let layers = doc
        .layers
        .into_iter()
        .enumerate()
        .map(|(k, l)| {
            if l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Load(format!(
                    "layer {k}: {} weights and {} biases for a {}x{} layer",
                    l.weights.len(),
                    l.bias.len(),
                    l.inputs,
                    l.outputs
                )));
            }
            let weights = Array2::from_shape_vec((l.inputs, l.outputs), l.weights).map_err(|e| Error::Load(e.to_string()))?;
            Ok(Dense { weights, bias: Array1::from(l.bias) })
        })
        .collect::<Result<Vec<_>>>()?;
    let net = Network { spec: doc.spec, layers, standardizer: doc.standardizer };
    net.validate().map_err(|e| Error::Load(e.to_string()))?;
    Ok(net)
}

/// Loads a document and requires a specific input width.
pub fn load_expecting(document: &str, input_dim: usize) -> Result<Network> {
    let net = load(document)?;
    if net.spec.input_dim != input_dim {
        return Err(Error::Shape(format!("model expects {} inputs, caller provides {input_dim}", net.spec.input_dim)));
    }
    Ok(net)
}
