//! Shared helpers for the integration tests: an independent classic-CNN
//! forward/backward, random instance builders, and brute-force references.
#![allow(dead_code)]

use onn::backprop::backward;
use onn::gis::{GisLog, GisOutcome};
use onn::network::INIT_AMPLITUDE;
use onn::train::train;
use onn::{
    LayerSpec, Map2D, NetworkModel, NetworkSpec, OperatorParams, OperatorSet, PaddingMode, Sample, Sampling,
    TrainConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn random_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize, amp: f64) -> Map2D {
    Map2D::from_fn(rows, cols, |_, _| rng.random_range(-amp..amp))
}

pub fn max_diff(a: &Map2D, b: &Map2D) -> f64 {
    assert_eq!(a.dims(), b.dims(), "map dims differ");
    a.as_slice().iter().zip(b.as_slice()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

// ---------------------------------------------------------------------------
// Classic CNN, written directly from the textbook definitions.

/// Reads past the bottom/right edge see zeros.
fn padded_get(y: &Map2D, r: usize, c: usize) -> f64 {
    if r < y.rows() && c < y.cols() {
        y.get(r, c)
    } else {
        0.0
    }
}

fn conv_dims(input: (usize, usize), k: (usize, usize), padding: PaddingMode) -> (usize, usize) {
    match padding {
        PaddingMode::NoZeroPad => (input.0 - k.0 + 1, input.1 - k.1 + 1),
        PaddingMode::SamePad => input,
    }
}

fn pool_blocks(map: &Map2D, s: usize) -> Map2D {
    let (rows, cols) = (map.rows().div_ceil(s), map.cols().div_ceil(s));
    let mut sum = Map2D::zeros(rows, cols);
    let mut count = Map2D::zeros(rows, cols);
    for r in 0..map.rows() {
        for c in 0..map.cols() {
            sum.set(r / s, c / s, sum.get(r / s, c / s) + map.get(r, c));
            count.set(r / s, c / s, count.get(r / s, c / s) + 1.0);
        }
    }
    Map2D::from_fn(rows, cols, |i, j| sum.get(i, j) / count.get(i, j))
}

fn resample(map: &Map2D, sampling: Sampling) -> Map2D {
    match sampling {
        Sampling::None => map.clone(),
        Sampling::Down(s) => pool_blocks(map, s),
        Sampling::Up(s) => Map2D::from_fn(map.rows() * s, map.cols() * s, |r, c| map.get(r / s, c / s)),
    }
}

/// Gradient through `resample`, back to a map of `dims`.
fn resample_back(grad: &Map2D, dims: (usize, usize), sampling: Sampling) -> Map2D {
    match sampling {
        Sampling::None => grad.clone(),
        Sampling::Down(s) => {
            let mut out = Map2D::zeros(dims.0, dims.1);
            for r in 0..dims.0 {
                for c in 0..dims.1 {
                    let br = (dims.0 - (r / s) * s).min(s);
                    let bc = (dims.1 - (c / s) * s).min(s);
                    out.set(r, c, grad.get(r / s, c / s) / (br * bc) as f64);
                }
            }
            out
        }
        Sampling::Up(s) => {
            let mut out = Map2D::zeros(dims.0, dims.1);
            for r in 0..grad.rows() {
                for c in 0..grad.cols() {
                    out.set(r / s, c / s, out.get(r / s, c / s) + grad.get(r, c));
                }
            }
            out
        }
    }
}

pub struct CnnPass {
    /// Per layer, per neuron: pre-activation map.
    pub x: Vec<Vec<Map2D>>,
    /// Per layer, per neuron: output after activation and re-sampling.
    pub y: Vec<Vec<Map2D>>,
    pub delta: Vec<Vec<Map2D>>,
    pub delta_y: Vec<Vec<Map2D>>,
    pub kernel_grads: Vec<Vec<Vec<Map2D>>>,
    pub bias_grads: Vec<Vec<f64>>,
}

/// Forward and backward of a convolutional network (every neuron must use
/// the CNN operator set), given `∂E/∂y` at the outputs.
pub fn cnn_oracle(model: &NetworkModel, input: &[Map2D], output_grad: &[Map2D]) -> CnnPass {
    let depth = model.layers.len();
    let mut ys: Vec<Vec<Map2D>> = vec![input.to_vec()];
    let mut xs = Vec::new();
    let mut acts = Vec::new();
    for (l, layer) in model.layers.iter().enumerate() {
        let ls = &model.spec.layers[l];
        let prev = &ys[l];
        let mut lx = Vec::new();
        let mut la = Vec::new();
        let mut ly = Vec::new();
        for neuron in layer {
            assert_eq!(neuron.operator_set, OperatorSet::CNN);
            let k = neuron.kernels[0].dims();
            let (rows, cols) = conv_dims(prev[0].dims(), k, ls.padding);
            let x = Map2D::from_fn(rows, cols, |m, n| {
                let mut acc = neuron.bias;
                for (yi, w) in prev.iter().zip(&neuron.kernels) {
                    for r in 0..k.0 {
                        for t in 0..k.1 {
                            acc += w.get(r, t) * padded_get(yi, m + r, n + t);
                        }
                    }
                }
                acc
            });
            let a = x.map(f64::tanh);
            ly.push(resample(&a, ls.sampling));
            lx.push(x);
            la.push(a);
        }
        xs.push(lx);
        acts.push(la);
        ys.push(ly);
    }

    let mut delta = vec![Vec::new(); depth];
    let mut delta_y = vec![Vec::new(); depth];
    let mut kernel_grads = vec![Vec::new(); depth];
    let mut bias_grads = vec![Vec::new(); depth];
    delta_y[depth - 1] = output_grad.to_vec();
    for l in (0..depth).rev() {
        let ls = &model.spec.layers[l];
        let prev = &ys[l];
        let d: Vec<Map2D> = acts[l]
            .iter()
            .zip(&delta_y[l])
            .map(|(a, dy)| {
                let back = resample_back(dy, a.dims(), ls.sampling);
                Map2D::from_fn(a.rows(), a.cols(), |r, c| back.get(r, c) * (1.0 - a.get(r, c) * a.get(r, c)))
            })
            .collect();
        for (neuron, dk) in model.layers[l].iter().zip(&d) {
            let grads = prev
                .iter()
                .zip(&neuron.kernels)
                .map(|(yi, w)| {
                    Map2D::from_fn(w.rows(), w.cols(), |r, t| {
                        let mut acc = 0.0;
                        for m in 0..dk.rows() {
                            for n in 0..dk.cols() {
                                acc += dk.get(m, n) * padded_get(yi, m + r, n + t);
                            }
                        }
                        acc
                    })
                })
                .collect();
            kernel_grads[l].push(grads);
            bias_grads[l].push(dk.as_slice().iter().sum());
        }
        if l > 0 {
            // Scatter each delta back through its kernel, then drop the padding.
            delta_y[l - 1] = prev
                .iter()
                .enumerate()
                .map(|(i, yi)| {
                    let (kr, kc) = model.layers[l][0].kernels[i].dims();
                    let mut full = Map2D::zeros(yi.rows() + kr, yi.cols() + kc);
                    for (neuron, dk) in model.layers[l].iter().zip(&d) {
                        let w = &neuron.kernels[i];
                        for m in 0..dk.rows() {
                            for n in 0..dk.cols() {
                                for r in 0..kr {
                                    for t in 0..kc {
                                        let v = full.get(m + r, n + t) + dk.get(m, n) * w.get(r, t);
                                        full.set(m + r, n + t, v);
                                    }
                                }
                            }
                        }
                    }
                    Map2D::from_fn(yi.rows(), yi.cols(), |r, c| full.get(r, c))
                })
                .collect();
        }
        delta[l] = d;
    }
    CnnPass {
        x: xs,
        y: ys.split_off(1),
        delta,
        delta_y,
        kernel_grads,
        bias_grads,
    }
}

/// A random convolutional network with 8..=16 px inputs, mixed padding and
/// re-sampling, plus an input and an output gradient.
pub fn random_cnn(seed: u64) -> (NetworkModel, Vec<Map2D>, Vec<Map2D>) {
    let mut rng = rng(seed);
    loop {
        let channels = rng.random_range(1..=2);
        let (rows, cols) = (rng.random_range(8..=16), rng.random_range(8..=16));
        let depth = rng.random_range(2..=3);
        let mut dims = (rows, cols);
        let mut layers = Vec::new();
        let mut ok = true;
        for l in 0..depth {
            let k = [1, 3, 5][rng.random_range(0..3)];
            let padding = if rng.random_bool(0.5) {
                PaddingMode::SamePad
            } else {
                PaddingMode::NoZeroPad
            };
            let sampling = match rng.random_range(0..3) {
                0 => Sampling::None,
                1 => Sampling::Down(2),
                _ => Sampling::Up(2),
            };
            if k > dims.0 || k > dims.1 {
                ok = false;
                break;
            }
            let conv = conv_dims(dims, (k, k), padding);
            dims = sampling.output_dims(conv);
            if dims.0 == 0 || dims.1 == 0 || dims.0 > 40 || dims.1 > 40 {
                ok = false;
                break;
            }
            let neurons = if l + 1 == depth { rng.random_range(1..=2) } else { rng.random_range(1..=3) };
            layers.push(LayerSpec::new(neurons, k).padding(padding).sampling(sampling));
        }
        if !ok {
            continue;
        }
        let spec = NetworkSpec::new(channels, rows, cols, layers);
        let model = NetworkModel::init_with(spec.clone(), OperatorParams::default(), rng.random(), 0.5).unwrap();
        let input = (0..channels).map(|_| random_map(&mut rng, rows, cols, 1.0)).collect();
        let out = spec.output_dims().unwrap();
        let grad = (0..spec.output_channels()).map(|_| random_map(&mut rng, out.0, out.1, 1.0)).collect();
        return (model, input, grad);
    }
}

/// Largest absolute gap between the library and the oracle over outputs,
/// deltas, output deltas and sensitivities.
pub fn cnn_equivalence_error(seed: u64) -> f64 {
    let (model, input, grad) = random_cnn(seed);
    let (outputs, trace) = model.forward_trace(&input).unwrap();
    let bp = backward(&model, &trace, &grad).unwrap();
    let oracle = cnn_oracle(&model, &input, &grad);
    let mut worst = 0.0f64;
    for (a, b) in outputs.iter().zip(oracle.y.last().unwrap()) {
        worst = worst.max(max_diff(a, b));
    }
    for l in 0..model.layers.len() {
        for k in 0..model.layers[l].len() {
            worst = worst.max(max_diff(&trace.layers[l][k].x, &oracle.x[l][k]));
            worst = worst.max(max_diff(&trace.layers[l][k].y, &oracle.y[l][k]));
            worst = worst.max(max_diff(&bp.delta[l][k], &oracle.delta[l][k]));
            worst = worst.max(max_diff(&bp.delta_y[l][k], &oracle.delta_y[l][k]));
            let g = &bp.grads.layers[l][k];
            worst = worst.max((g.bias - oracle.bias_grads[l][k]).abs());
            for (a, b) in g.kernels.iter().zip(&oracle.kernel_grads[l][k]) {
                worst = worst.max(max_diff(a, b));
            }
        }
    }
    worst
}

// ---------------------------------------------------------------------------
// Search references.

/// Trains `set` in `layer` from every seed and returns the best final loss,
/// the way one candidate of a search pass is scored.
pub fn brute_force_candidate(
    spec: &NetworkSpec,
    assignment: &[OperatorSet],
    layer: usize,
    set: OperatorSet,
    seeds: &[u64],
    samples: &[Sample],
    cfg: &TrainConfig,
) -> f64 {
    seeds
        .iter()
        .map(|&seed| {
            let mut s = spec.clone();
            for (l, a) in assignment.iter().enumerate() {
                s.layers[l].operator_set = *a;
            }
            s.layers[layer].operator_set = set;
            let model = NetworkModel::init_with(s, OperatorParams::default(), seed, INIT_AMPLITUDE).unwrap();
            match train(model, samples, cfg) {
                Ok(out) => {
                    let loss = out.final_loss().unwrap();
                    if loss.is_finite() { loss } else { f64::INFINITY }
                }
                Err(_) => f64::INFINITY,
            }
        })
        .fold(f64::INFINITY, f64::min)
}

/// Checks every logged candidate of a one-layer search against an
/// independent re-run; returns the number of mismatches.
pub fn search_mismatches(spec: &NetworkSpec, outcome: &GisOutcome, layer: usize, samples: &[Sample], cfg: &TrainConfig) -> usize {
    let log: &GisLog = &outcome.log;
    let mut bad = 0;
    for row in log.rows.iter().filter(|r| r.layer == layer) {
        let brute = brute_force_candidate(spec, &outcome.assignment, layer - 1, row.set, &row.seeds, samples, cfg);
        if brute.to_bits() != row.best_mse.to_bits() {
            bad += 1;
        }
    }
    bad
}
