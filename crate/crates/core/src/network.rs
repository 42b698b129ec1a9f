//! Network structure and the forward pass.
//!
//! Each operational neuron computes
//! `x_i = b_i + Σ_k P[Ψ(w_ik(r, t), y_k(m + r, n + t))]`, pooling the
//! kernel-window terms of every input connection and summing the pooled maps,
//! then `y_i = sample(f(x_i))`.
//!
//! A training-mode forward also records the caches back-propagation needs.
//! The nodal cache is indexed by the output pixel of `x`; the pool-derivative
//! and nodal-derivative caches are indexed by the input pixel of `y` that the
//! term reads, over the zero-extended input when padding is on.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{OnnError, Result};
use crate::operators::{median_index_with, OperatorParams, OperatorSet, Pool};
use crate::tensor::{downsample, upsample, Cache4D, Map2D, PaddingMode};

/// Half-width of the uniform weight initialization.
pub const INIT_AMPLITUDE: f64 = 0.1;

/// Within-neuron re-sampling. Serialized as a signed factor: negative
/// down-samples by `|f|`, positive up-samples by `f`, and `1` does nothing.
#[derive(Copy, Clone, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(try_from = "i32", into = "i32")]
pub enum Sampling {
    #[default]
    None,
    Down(usize),
    Up(usize),
}

impl TryFrom<i32> for Sampling {
    type Error = OnnError;

    fn try_from(f: i32) -> Result<Self> {
        Ok(match f {
            0 => return Err(OnnError::invalid("sampling factor 0")),
            1 | -1 => Sampling::None,
            f if f < 0 => Sampling::Down(f.unsigned_abs() as usize),
            f => Sampling::Up(f as usize),
        })
    }
}

impl From<Sampling> for i32 {
    fn from(s: Sampling) -> i32 {
        match s {
            Sampling::None => 1,
            Sampling::Down(f) => -(f as i32),
            Sampling::Up(f) => f as i32,
        }
    }
}

impl Sampling {
    pub fn output_dims(self, dims: (usize, usize)) -> (usize, usize) {
        match self {
            Sampling::None => dims,
            Sampling::Down(f) => (dims.0.div_ceil(f), dims.1.div_ceil(f)),
            Sampling::Up(f) => (dims.0 * f, dims.1 * f),
        }
    }

    pub fn apply(self, map: &Map2D) -> Result<Map2D> {
        match self {
            Sampling::None => Ok(map.clone()),
            Sampling::Down(f) => downsample(map, f, f),
            Sampling::Up(f) => upsample(map, f, f),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LayerSpec {
    pub neurons: usize,
    pub kernel_rows: usize,
    pub kernel_cols: usize,
    #[serde(default)]
    pub sampling: Sampling,
    #[serde(default)]
    pub padding: PaddingMode,
    pub operator_set: OperatorSet,
}

impl LayerSpec {
    pub fn new(neurons: usize, kernel: usize) -> Self {
        LayerSpec {
            neurons,
            kernel_rows: kernel,
            kernel_cols: kernel,
            sampling: Sampling::None,
            padding: PaddingMode::NoZeroPad,
            operator_set: OperatorSet::CNN,
        }
    }

    pub fn sampling(mut self, sampling: Sampling) -> Self {
        self.sampling = sampling;
        self
    }

    pub fn padding(mut self, padding: PaddingMode) -> Self {
        self.padding = padding;
        self
    }

    pub fn operator_set(mut self, set: OperatorSet) -> Self {
        self.operator_set = set;
        self
    }
}

/// Input geometry plus the trainable layers. Layer numbering starts at 1;
/// layer 0 is the input.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NetworkSpec {
    pub input_channels: usize,
    pub input_rows: usize,
    pub input_cols: usize,
    pub layers: Vec<LayerSpec>,
}

/// Map dims around one layer.
#[derive(Copy, Clone, Debug, PartialEq, Eq)]
pub struct LayerShape {
    pub input: (usize, usize),
    /// Pre-activation `x`, before sampling.
    pub x: (usize, usize),
    pub output: (usize, usize),
}

impl NetworkSpec {
    pub fn new(input_channels: usize, input_rows: usize, input_cols: usize, layers: Vec<LayerSpec>) -> Self {
        NetworkSpec {
            input_channels,
            input_rows,
            input_cols,
            layers,
        }
    }

    /// `In x 16 x 32 x Out` with 3x3 kernels: the first hidden layer
    /// down-samples by 2, the second up-samples by 2, the output layer is
    /// convolutional.
    pub fn default_experiment(channels_in: usize, channels_out: usize, rows: usize, cols: usize) -> Self {
        NetworkSpec::new(
            channels_in,
            rows,
            cols,
            vec![
                LayerSpec::new(16, 3).sampling(Sampling::Down(2)).padding(PaddingMode::SamePad),
                LayerSpec::new(32, 3).sampling(Sampling::Up(2)).padding(PaddingMode::SamePad),
                LayerSpec::new(channels_out, 3).padding(PaddingMode::SamePad),
            ],
        )
    }

    pub fn output_channels(&self) -> usize {
        self.layers.last().map_or(0, |l| l.neurons)
    }

    /// Checks every layer and returns the map dims through the network.
    pub fn shapes(&self) -> Result<Vec<LayerShape>> {
        if self.input_channels == 0 {
            return Err(OnnError::invalid("network needs at least one input channel"));
        }
        if self.layers.is_empty() {
            return Err(OnnError::invalid("network has no layers"));
        }
        let mut dims = (self.input_rows, self.input_cols);
        let mut shapes = Vec::with_capacity(self.layers.len());
        for (i, layer) in self.layers.iter().enumerate() {
            let l = i + 1;
            if layer.neurons == 0 {
                return Err(OnnError::invalid(format!("layer {l} has no neurons")));
            }
            for k in [layer.kernel_rows, layer.kernel_cols] {
                if k == 0 || k % 2 == 0 {
                    return Err(OnnError::invalid(format!("layer {l}: kernel dims must be odd, got {k}")));
                }
            }
            if let Sampling::Down(0) | Sampling::Up(0) = layer.sampling {
                return Err(OnnError::invalid(format!("layer {l}: zero sampling factor")));
            }
            let x = layer
                .padding
                .output_dims(dims, (layer.kernel_rows, layer.kernel_cols))
                .map_err(|e| OnnError::dims(format!("layer {l}: {e}")))?;
            let output = layer.sampling.output_dims(x);
            shapes.push(LayerShape { input: dims, x, output });
            dims = output;
        }
        Ok(shapes)
    }

    pub fn output_dims(&self) -> Result<(usize, usize)> {
        Ok(self.shapes()?.last().expect("non-empty").output)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OperationalNeuron {
    /// One kernel per input connection.
    pub kernels: Vec<Map2D>,
    pub bias: f64,
    pub operator_set: OperatorSet,
}

#[derive(Clone, Debug, PartialEq)]
pub struct NetworkModel {
    pub spec: NetworkSpec,
    pub params: OperatorParams,
    pub seed: u64,
    /// `layers[l - 1]` holds the neurons of layer `l`.
    pub layers: Vec<Vec<OperationalNeuron>>,
}

/// Caches of one input connection of a neuron.
#[derive(Clone, Debug)]
pub struct ConnectionCache {
    /// `Ψ(w(r, t), y(m + r, n + t))` per pixel `(m, n)` of `x`.
    pub nodal: Cache4D,
    /// Pool derivative of the term that reads `y(m, n)` through `w(r, t)`.
    pub pool_grad: Cache4D,
    /// `∂Ψ/∂y` at `(y(m, n), w(r, t))`.
    pub dy: Cache4D,
    /// `∂Ψ/∂w` at `(y(m, n), w(r, t))`.
    pub dw: Cache4D,
}

#[derive(Clone, Debug)]
pub struct NeuronTrace {
    /// Pre-activation map.
    pub x: Map2D,
    pub fprime: Map2D,
    /// `f(x)` before sampling.
    pub activated: Map2D,
    /// Neuron output after sampling.
    pub y: Map2D,
    pub connections: Vec<ConnectionCache>,
}

#[derive(Clone, Debug)]
pub struct ForwardTrace {
    pub input: Vec<Map2D>,
    /// `layers[l - 1]` traces layer `l`.
    pub layers: Vec<Vec<NeuronTrace>>,
}

impl ForwardTrace {
    /// Output maps of layer `l` (`l = 0` is the input).
    pub fn outputs(&self, l: usize) -> Vec<&Map2D> {
        if l == 0 {
            self.input.iter().collect()
        } else {
            self.layers[l - 1].iter().map(|n| &n.y).collect()
        }
    }
}

fn draw_uniform(rng: &mut ChaCha8Rng, amplitude: f64) -> f64 {
    loop {
        let v = rng.random_range(-amplitude..amplitude);
        if v != -amplitude {
            return v;
        }
    }
}

impl NetworkModel {
    /// Weights and biases i.i.d. uniform on `(-0.1, 0.1)`.
    pub fn init(spec: NetworkSpec, seed: u64) -> Result<Self> {
        Self::init_with(spec, OperatorParams::default(), seed, INIT_AMPLITUDE)
    }

    pub fn init_with(spec: NetworkSpec, params: OperatorParams, seed: u64, amplitude: f64) -> Result<Self> {
        params.validate()?;
        if !(amplitude.is_finite() && amplitude > 0.0) {
            return Err(OnnError::invalid(format!("init amplitude {amplitude}")));
        }
        spec.shapes()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut fan_in = spec.input_channels;
        let mut layers = Vec::with_capacity(spec.layers.len());
        for layer in &spec.layers {
            let neurons = (0..layer.neurons)
                .map(|_| {
                    let kernels = (0..fan_in)
                        .map(|_| {
                            Map2D::from_fn(layer.kernel_rows, layer.kernel_cols, |_, _| {
                                draw_uniform(&mut rng, amplitude)
                            })
                        })
                        .collect();
                    OperationalNeuron {
                        kernels,
                        bias: draw_uniform(&mut rng, amplitude),
                        operator_set: layer.operator_set,
                    }
                })
                .collect();
            layers.push(neurons);
            fan_in = layer.neurons;
        }
        Ok(NetworkModel {
            spec,
            params,
            seed,
            layers,
        })
    }

    pub fn depth(&self) -> usize {
        self.layers.len()
    }

    pub fn layer(&self, l: usize) -> Result<&[OperationalNeuron]> {
        self.check_layer(l)?;
        Ok(&self.layers[l - 1])
    }

    fn check_layer(&self, l: usize) -> Result<()> {
        if l == 0 || l > self.layers.len() {
            return Err(OnnError::invalid(format!(
                "layer {l} is not a trainable layer (1..={})",
                self.layers.len()
            )));
        }
        Ok(())
    }

    /// Gives every neuron of layer `l` the operator set; weights are untouched.
    pub fn assign_operator_set(&mut self, l: usize, set: OperatorSet) -> Result<()> {
        self.check_layer(l)?;
        self.spec.layers[l - 1].operator_set = set;
        for neuron in &mut self.layers[l - 1] {
            neuron.operator_set = set;
        }
        Ok(())
    }

    pub fn set_neuron_operator_set(&mut self, l: usize, neuron: usize, set: OperatorSet) -> Result<()> {
        self.check_layer(l)?;
        let n = self.layers[l - 1]
            .get_mut(neuron)
            .ok_or_else(|| OnnError::invalid(format!("layer {l} has no neuron {neuron}")))?;
        n.operator_set = set;
        Ok(())
    }

    /// The operator set of layer `l` when all its neurons share one.
    pub fn operator_set(&self, l: usize) -> Result<Option<OperatorSet>> {
        let layer = self.layer(l)?;
        let first = layer[0].operator_set;
        Ok(layer.iter().all(|n| n.operator_set == first).then_some(first))
    }

    pub fn parameter_count(&self) -> usize {
        self.layers
            .iter()
            .flatten()
            .map(|n| n.kernels.iter().map(Map2D::len).sum::<usize>() + 1)
            .sum()
    }

    /// Checks that the weights match the `NetworkSpec` geometry.
    pub fn validate(&self) -> Result<()> {
        self.params.validate()?;
        self.spec.shapes()?;
        if self.layers.len() != self.spec.layers.len() {
            return Err(OnnError::invalid("layer count differs from spec"));
        }
        let mut fan_in = self.spec.input_channels;
        for (i, (neurons, spec)) in self.layers.iter().zip(&self.spec.layers).enumerate() {
            if neurons.len() != spec.neurons {
                return Err(OnnError::invalid(format!("layer {}: neuron count differs from spec", i + 1)));
            }
            for (j, n) in neurons.iter().enumerate() {
                if n.kernels.len() != fan_in {
                    return Err(OnnError::invalid(format!(
                        "layer {} neuron {j}: {} kernels for {fan_in} inputs",
                        i + 1,
                        n.kernels.len()
                    )));
                }
                for k in &n.kernels {
                    if k.dims() != (spec.kernel_rows, spec.kernel_cols) {
                        return Err(OnnError::dims(format!("layer {} neuron {j}: kernel dims", i + 1)));
                    }
                    if !k.is_finite() {
                        return Err(OnnError::NonFinite(format!("layer {} neuron {j} weights", i + 1)));
                    }
                }
                if !n.bias.is_finite() {
                    return Err(OnnError::NonFinite(format!("layer {} neuron {j} bias", i + 1)));
                }
            }
            fan_in = spec.neurons;
        }
        Ok(())
    }

    fn check_input(&self, input: &[Map2D]) -> Result<()> {
        if input.len() != self.spec.input_channels {
            return Err(OnnError::dims(format!(
                "{} input channels, model expects {}",
                input.len(),
                self.spec.input_channels
            )));
        }
        let want = (self.spec.input_rows, self.spec.input_cols);
        for (c, m) in input.iter().enumerate() {
            if m.dims() != want {
                return Err(OnnError::dims(format!(
                    "input channel {c} is {}x{}, model expects {}x{}",
                    m.rows(),
                    m.cols(),
                    want.0,
                    want.1
                )));
            }
        }
        Ok(())
    }

    /// Inference-only forward pass.
    pub fn forward(&self, input: &[Map2D]) -> Result<Vec<Map2D>> {
        Ok(self.forward_with(input, false)?.0)
    }

    /// Forward pass that also fills every back-propagation cache.
    pub fn forward_trace(&self, input: &[Map2D]) -> Result<(Vec<Map2D>, ForwardTrace)> {
        let (out, trace) = self.forward_with(input, true)?;
        Ok((out, trace.expect("training forward records a trace")))
    }

    pub fn forward_with(&self, input: &[Map2D], training: bool) -> Result<(Vec<Map2D>, Option<ForwardTrace>)> {
        self.check_input(input)?;
        let shapes = self.spec.shapes()?;
        let mut prev: Vec<Map2D> = input.to_vec();
        let mut layers = Vec::with_capacity(if training { self.layers.len() } else { 0 });
        let mut scratch = Scratch::default();
        for (i, (neurons, spec)) in self.layers.iter().zip(&self.spec.layers).enumerate() {
            let shape = shapes[i];
            let mut outputs = Vec::with_capacity(neurons.len());
            let mut traces = Vec::with_capacity(if training { neurons.len() } else { 0 });
            for (j, neuron) in neurons.iter().enumerate() {
                let t = neuron_forward(neuron, &prev, spec, shape, &self.params, training, &mut scratch)
                    .map_err(|e| match e {
                        OnnError::NonFinite(msg) => OnnError::NonFinite(format!("layer {} neuron {j}: {msg}", i + 1)),
                        other => other,
                    })?;
                outputs.push(t.y.clone());
                if training {
                    traces.push(t);
                }
            }
            if training {
                layers.push(traces);
            }
            prev = outputs;
        }
        let trace = training.then(|| ForwardTrace {
            input: input.to_vec(),
            layers,
        });
        Ok((prev, trace))
    }
}

#[derive(Default)]
struct Scratch {
    terms: Vec<f64>,
    order: Vec<usize>,
}

fn neuron_forward(
    neuron: &OperationalNeuron,
    prev: &[Map2D],
    spec: &LayerSpec,
    shape: LayerShape,
    params: &OperatorParams,
    training: bool,
    scratch: &mut Scratch,
) -> Result<NeuronTrace> {
    let (kr, kc) = (spec.kernel_rows, spec.kernel_cols);
    let (xr, xc) = shape.x;
    let (pr, pc) = (xr + kr - 1, xc + kc - 1);
    let set = neuron.operator_set;
    let mut x = Map2D::zeros(xr, xc);
    let mut connections = Vec::with_capacity(if training { prev.len() } else { 0 });
    scratch.terms.resize(kr * kc, 0.0);

    for (y, w) in prev.iter().zip(&neuron.kernels) {
        let mut cache = training.then(|| ConnectionCache {
            nodal: Cache4D::zeros(xr, xc, kr, kc),
            pool_grad: Cache4D::zeros(pr, pc, kr, kc),
            dy: Cache4D::zeros(pr, pc, kr, kc),
            dw: Cache4D::zeros(pr, pc, kr, kc),
        });
        for m in 0..xr {
            for n in 0..xc {
                for r in 0..kr {
                    for t in 0..kc {
                        let yv = y.get_or_zero((m + r) as isize, (n + t) as isize);
                        let wv = w.get(r, t);
                        let psi = set.nodal.eval(yv, wv, params);
                        scratch.terms[r * kc + t] = psi;
                        if let Some(c) = cache.as_mut() {
                            c.nodal.set(m, n, r, t, psi);
                            let (gw, gy) = set.nodal.grad(yv, wv, params);
                            c.dw.set(m + r, n + t, r, t, gw);
                            c.dy.set(m + r, n + t, r, t, gy);
                        }
                    }
                }
                let pooled = match set.pool {
                    Pool::Sum => {
                        if let Some(c) = cache.as_mut() {
                            for r in 0..kr {
                                for t in 0..kc {
                                    c.pool_grad.set(m + r, n + t, r, t, 1.0);
                                }
                            }
                        }
                        scratch.terms.iter().sum::<f64>()
                    }
                    Pool::Median => {
                        let arg = median_index_with(&scratch.terms, &mut scratch.order);
                        if let Some(c) = cache.as_mut() {
                            let (r, t) = (arg / kc, arg % kc);
                            c.pool_grad.set(m + r, n + t, r, t, 1.0);
                        }
                        scratch.terms[arg]
                    }
                };
                let i = m * xc + n;
                x.as_mut_slice()[i] += pooled;
            }
        }
        if let Some(c) = cache {
            connections.push(c);
        }
    }
    for v in x.as_mut_slice() {
        *v += neuron.bias;
    }
    if let Some((i, v)) = x.as_slice().iter().enumerate().find(|(_, v)| !v.is_finite()) {
        return Err(OnnError::NonFinite(format!(
            "pre-activation {v} at pixel ({}, {})",
            i / xc,
            i % xc
        )));
    }
    let activated = x.map(|v| set.act.eval(v, params));
    let fprime = if training {
        x.map(|v| set.act.grad(v, params))
    } else {
        Map2D::zeros(0, 0)
    };
    let y = spec.sampling.apply(&activated)?;
    Ok(NeuronTrace {
        x,
        fprime,
        activated,
        y,
        connections,
    })
}
