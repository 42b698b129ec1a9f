//! JSON model documents.
//!
//! Every float is written with 17 significant digits, so loading a saved
//! model and saving it again reproduces the file byte for byte.

use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::ser::{Formatter, PrettyFormatter};

use crate::error::{OnnError, Result};
use crate::network::{NetworkModel, NetworkSpec, OperationalNeuron};
use crate::operators::{OperatorParams, OperatorSet};
use crate::tensor::Map2D;

const FORMAT: &str = "onn-model";
const VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    format: String,
    version: u32,
    spec: NetworkSpec,
    params: OperatorParams,
    seed: u64,
    layers: Vec<LayerDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LayerDoc {
    neurons: Vec<NeuronDoc>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct NeuronDoc {
    operator_set: OperatorSet,
    bias: f64,
    /// One kernel per input map, each a list of rows.
    kernels: Vec<Vec<Vec<f64>>>,
}

/// Pretty layout, floats in `{:.16e}`.
struct ExactFloats(PrettyFormatter<'static>);

impl Formatter for ExactFloats {
    fn write_f64<W: ?Sized + io::Write>(&mut self, w: &mut W, value: f64) -> io::Result<()> {
        write!(w, "{value:.16e}")
    }

    fn begin_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_array(w)
    }
    fn end_array<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array(w)
    }
    fn begin_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_array_value(w, first)
    }
    fn end_array_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_array_value(w)
    }
    fn begin_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object(w)
    }
    fn end_object<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object(w)
    }
    fn begin_object_key<W: ?Sized + io::Write>(&mut self, w: &mut W, first: bool) -> io::Result<()> {
        self.0.begin_object_key(w, first)
    }
    fn begin_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.begin_object_value(w)
    }
    fn end_object_value<W: ?Sized + io::Write>(&mut self, w: &mut W) -> io::Result<()> {
        self.0.end_object_value(w)
    }
}

/// Serialize any value as pretty JSON with exact floats.
pub fn to_json_exact<T: Serialize>(value: &T) -> Result<String> {
    let mut buf = Vec::new();
    let mut ser = serde_json::Serializer::with_formatter(&mut buf, ExactFloats(PrettyFormatter::new()));
    value
        .serialize(&mut ser)
        .map_err(|e| OnnError::invalid(format!("serialization: {e}")))?;
    buf.push(b'\n');
    Ok(String::from_utf8(buf).expect("JSON is UTF-8"))
}

pub fn model_to_json(model: &NetworkModel) -> Result<String> {
    model.validate()?;
    if model.layers.iter().flatten().any(|n| !n.bias.is_finite() || !n.kernels.iter().all(Map2D::is_finite)) {
        return Err(OnnError::NonFinite("model parameters".into()));
    }
    let doc = ModelDoc {
        format: FORMAT.into(),
        version: VERSION,
        spec: model.spec.clone(),
        params: model.params,
        seed: model.seed,
        layers: model
            .layers
            .iter()
            .map(|layer| LayerDoc {
                neurons: layer
                    .iter()
                    .map(|n| NeuronDoc {
                        operator_set: n.operator_set,
                        bias: n.bias,
                        kernels: n
                            .kernels
                            .iter()
                            .map(|k| k.as_slice().chunks(k.cols()).map(<[f64]>::to_vec).collect())
                            .collect(),
                    })
                    .collect(),
            })
            .collect(),
    };
    to_json_exact(&doc)
}

pub fn model_from_json(text: &str) -> Result<NetworkModel> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| OnnError::invalid(format!("model document: {e}")))?;
    if doc.format != FORMAT || doc.version != VERSION {
        return Err(OnnError::invalid(format!(
            "unsupported model document {} v{}",
            doc.format, doc.version
        )));
    }
    let mut layers = Vec::with_capacity(doc.layers.len());
    for (l, layer) in doc.layers.into_iter().enumerate() {
        let mut neurons = Vec::with_capacity(layer.neurons.len());
        for (j, n) in layer.neurons.into_iter().enumerate() {
            let kernels = n
                .kernels
                .into_iter()
                .map(|rows| {
                    let (r, c) = (rows.len(), rows.first().map_or(0, Vec::len));
                    if rows.iter().any(|row| row.len() != c) {
                        return Err(OnnError::invalid(format!("layer {} neuron {j}: ragged kernel", l + 1)));
                    }
                    Map2D::from_vec(r, c, rows.concat())
                })
                .collect::<Result<Vec<_>>>()?;
            neurons.push(OperationalNeuron {
                kernels,
                bias: n.bias,
                operator_set: n.operator_set,
            });
        }
        layers.push(neurons);
    }
    let model = NetworkModel {
        spec: doc.spec,
        params: doc.params,
        seed: doc.seed,
        layers,
    };
    model.validate()?;
    Ok(model)
}

pub fn save_model(model: &NetworkModel, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, model_to_json(model)?).map_err(|e| OnnError::io(path, e))
}

pub fn load_model(path: impl AsRef<Path>) -> Result<NetworkModel> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| OnnError::io(path, e))?;
    model_from_json(&text).map_err(|e| match e {
        OnnError::InvalidArgument(msg) | OnnError::Dimension(msg) => OnnError::format(path, msg),
        other => other,
    })
}
