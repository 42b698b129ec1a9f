//! Back-propagation through operational layers.
//!
//! The four phases, per layer from the output down:
//!
//! 1. output delta: `Δy = ∂E/∂y` of the output maps;
//! 2. intra-neuron: `Δ = ∂E/∂x`, undoing the neuron's sampling and scaling
//!    by `f'(x)`;
//! 3. inter-layer: `Δy_k = Σ_i Conv2Dvar(Δ_i, ∇ΨP ⊙ ∇yΨ)` back to the
//!    previous layer;
//! 4. sensitivities: `∂E/∂w_ik = Conv2Dvar(Δ_i, ∇ΨP ⊙ ∇wΨ)` and
//!    `∂E/∂b_i = Σ Δ_i`.
//!
//! All derivative caches come from the training-mode forward pass; in
//! particular the median's routing is the one selected at forward time.

use rayon::prelude::*;

use crate::error::{OnnError, Result};
use crate::network::{ConnectionCache, ForwardTrace, NetworkModel, Sampling};
use crate::tensor::{
    downsample_adjoint, upsample_adjoint, varying_delta_accumulate, varying_weight_accumulate, Map2D,
};

/// One training item: input channels and target channels.
#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub input: Vec<Map2D>,
    pub target: Vec<Map2D>,
}

impl Sample {
    pub fn new(input: Vec<Map2D>, target: Vec<Map2D>) -> Self {
        Sample { input, target }
    }

    pub fn single(input: Map2D, target: Map2D) -> Self {
        Sample {
            input: vec![input],
            target: vec![target],
        }
    }

    fn pixel_count(&self) -> usize {
        self.target.iter().map(Map2D::len).sum()
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct NeuronGrad {
    pub kernels: Vec<Map2D>,
    pub bias: f64,
}

/// Sensitivities of every kernel and bias, shaped like the model.
#[derive(Clone, Debug, PartialEq)]
pub struct Gradients {
    pub layers: Vec<Vec<NeuronGrad>>,
}

impl Gradients {
    pub fn zeros_like(model: &NetworkModel) -> Self {
        Gradients {
            layers: model
                .layers
                .iter()
                .map(|layer| {
                    layer
                        .iter()
                        .map(|n| NeuronGrad {
                            kernels: n.kernels.iter().map(|k| Map2D::zeros(k.rows(), k.cols())).collect(),
                            bias: 0.0,
                        })
                        .collect()
                })
                .collect(),
        }
    }

    pub fn add_assign(&mut self, other: &Gradients) -> Result<()> {
        if self.layers.len() != other.layers.len() {
            return Err(OnnError::dims("gradient layer counts differ"));
        }
        for (a, b) in self.layers.iter_mut().flatten().zip(other.layers.iter().flatten()) {
            for (ka, kb) in a.kernels.iter_mut().zip(&b.kernels) {
                ka.add_assign(kb)?;
            }
            a.bias += b.bias;
        }
        Ok(())
    }

    pub fn scale(&mut self, factor: f64) {
        for n in self.layers.iter_mut().flatten() {
            for k in &mut n.kernels {
                k.scale(factor);
            }
            n.bias *= factor;
        }
    }

    /// Flattened in parameter order: layer, neuron, kernels row-major, bias.
    pub fn to_vec(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for n in self.layers.iter().flatten() {
            for k in &n.kernels {
                out.extend_from_slice(k.as_slice());
            }
            out.push(n.bias);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .flatten()
            .all(|n| n.bias.is_finite() && n.kernels.iter().all(Map2D::is_finite))
    }
}

/// Every delta map of one backward pass, plus the sensitivities.
#[derive(Clone, Debug)]
pub struct BpState {
    /// `delta[l - 1][k]`: `∂E/∂x` of neuron `k` in layer `l`.
    pub delta: Vec<Vec<Map2D>>,
    /// `delta_y[l - 1][k]`: `∂E/∂y` of neuron `k` in layer `l`.
    pub delta_y: Vec<Vec<Map2D>>,
    pub grads: Gradients,
}

/// Output-layer delta of the summed squared error: `(y - target) ∘ f'(x)`.
pub fn output_delta(output: &Map2D, target: &Map2D, fprime: &Map2D) -> Result<Map2D> {
    output.ensure_same_dims(target, "output_delta target")?;
    output.ensure_same_dims(fprime, "output_delta f'")?;
    let residual = output.zip_map(target, |y, t| y - t)?;
    residual.zip_map(fprime, |d, f| d * f)
}

/// `∂E/∂x` from `∂E/∂y` for a neuron computing `y = sample(f(x))`.
///
/// Down-sampling by `s` spreads each delta over its block scaled by
/// `1/s²`; up-sampling by `u` sums each block, i.e. the block mean times
/// `u²`.
pub fn intra_neuron_delta(delta_y: &Map2D, fprime: &Map2D, sampling: Sampling) -> Result<Map2D> {
    let spread = match sampling {
        Sampling::None => delta_y.clone(),
        Sampling::Down(s) => downsample_adjoint(delta_y, fprime.rows(), fprime.cols(), s, s)?,
        Sampling::Up(u) => upsample_adjoint(delta_y, u, u)?,
    };
    spread
        .zip_map(fprime, |d, f| d * f)
        .map_err(|e| OnnError::dims(format!("intra-neuron delta after {sampling:?}: {e}")))
}

fn check_cache(delta: &Map2D, cache: &ConnectionCache) -> Result<()> {
    let (rows, cols, kr, kc) = cache.dy.shape();
    if (delta.rows() + kr - 1, delta.cols() + kc - 1) != (rows, cols) {
        return Err(OnnError::dims(format!(
            "delta {}x{} does not fit a {rows}x{cols} cache with {kr}x{kc} kernels",
            delta.rows(),
            delta.cols()
        )));
    }
    if cache.pool_grad.shape() != cache.dy.shape() || cache.dw.shape() != cache.dy.shape() {
        return Err(OnnError::MissingCache("derivative caches disagree in shape".into()));
    }
    Ok(())
}

/// `Δy` of one neuron from the deltas of every next-layer neuron and the
/// caches of the connections that read it. Returns a map of `y_dims`.
pub fn inter_layer_delta(next_deltas: &[&Map2D], caches: &[&ConnectionCache], y_dims: (usize, usize)) -> Result<Map2D> {
    if next_deltas.len() != caches.len() {
        return Err(OnnError::MissingCache(format!(
            "{} next-layer deltas but {} connection caches",
            next_deltas.len(),
            caches.len()
        )));
    }
    let Some(first) = caches.first() else {
        return Ok(Map2D::zeros(y_dims.0, y_dims.1));
    };
    let (rows, cols, kr, kc) = first.dy.shape();
    let mut acc = Map2D::zeros(rows, cols);
    for (delta, cache) in next_deltas.iter().zip(caches) {
        check_cache(delta, cache)?;
        if cache.dy.shape() != (rows, cols, kr, kc) {
            return Err(OnnError::dims("connection caches of one neuron differ in shape"));
        }
        let (pg, dy) = (cache.pool_grad.as_slice(), cache.dy.as_slice());
        varying_delta_accumulate(&mut acc, delta, kr, kc, |i| pg[i] * dy[i]);
    }
    acc.crop(y_dims.0, y_dims.1)
}

/// Kernel sensitivities of every input connection of a neuron, and its
/// bias sensitivity.
pub fn weight_bias_sensitivities(delta: &Map2D, caches: &[ConnectionCache]) -> Result<(Vec<Map2D>, f64)> {
    let mut kernels = Vec::with_capacity(caches.len());
    for cache in caches {
        check_cache(delta, cache)?;
        let (_, cols, kr, kc) = cache.dw.shape();
        let mut dw = Map2D::zeros(kr, kc);
        let (pg, gw) = (cache.pool_grad.as_slice(), cache.dw.as_slice());
        varying_weight_accumulate(&mut dw, delta, cols, |i| pg[i] * gw[i]);
        kernels.push(dw);
    }
    Ok((kernels, delta.sum()))
}

/// Full backward pass given `∂E/∂y` for each output map.
pub fn backward(model: &NetworkModel, trace: &ForwardTrace, output_grad: &[Map2D]) -> Result<BpState> {
    let depth = model.depth();
    if trace.layers.len() != depth {
        return Err(OnnError::MissingCache(format!(
            "trace has {} layers, model has {depth}",
            trace.layers.len()
        )));
    }
    let last = &trace.layers[depth - 1];
    if output_grad.len() != last.len() {
        return Err(OnnError::dims(format!(
            "{} output gradients for {} output maps",
            output_grad.len(),
            last.len()
        )));
    }
    for (g, n) in output_grad.iter().zip(last) {
        g.ensure_same_dims(&n.y, "output gradient")?;
    }

    let mut delta: Vec<Vec<Map2D>> = vec![Vec::new(); depth];
    let mut delta_y: Vec<Vec<Map2D>> = vec![Vec::new(); depth];
    let mut grads: Vec<Vec<NeuronGrad>> = vec![Vec::new(); depth];
    delta_y[depth - 1] = output_grad.to_vec();

    for l in (1..=depth).rev() {
        let layer = &trace.layers[l - 1];
        let sampling = model.spec.layers[l - 1].sampling;
        if layer.iter().any(|n| n.connections.is_empty()) {
            return Err(OnnError::MissingCache(format!("layer {l} was not traced in training mode")));
        }
        let deltas = delta_y[l - 1]
            .iter()
            .zip(layer)
            .map(|(dy, n)| intra_neuron_delta(dy, &n.fprime, sampling))
            .collect::<Result<Vec<_>>>()?;

        grads[l - 1] = deltas
            .par_iter()
            .zip(layer.par_iter())
            .map(|(d, n)| weight_bias_sensitivities(d, &n.connections).map(|(kernels, bias)| NeuronGrad { kernels, bias }))
            .collect::<Result<Vec<_>>>()?;

        if l > 1 {
            let prev = trace.outputs(l - 1);
            let next: Vec<&Map2D> = deltas.iter().collect();
            delta_y[l - 2] = prev
                .par_iter()
                .enumerate()
                .map(|(k, y)| {
                    let caches: Vec<&ConnectionCache> = layer.iter().map(|n| &n.connections[k]).collect();
                    inter_layer_delta(&next, &caches, y.dims())
                })
                .collect::<Result<Vec<_>>>()?;
        }
        delta[l - 1] = deltas;
    }
    Ok(BpState {
        delta,
        delta_y,
        grads: Gradients { layers: grads },
    })
}

/// Sum of squared errors over every target channel.
pub fn squared_error(outputs: &[Map2D], targets: &[Map2D]) -> Result<f64> {
    if outputs.len() != targets.len() {
        return Err(OnnError::dims(format!(
            "{} outputs for {} targets",
            outputs.len(),
            targets.len()
        )));
    }
    let mut sum = 0.0;
    for (y, t) in outputs.iter().zip(targets) {
        y.ensure_same_dims(t, "output vs target")?;
        sum += y.as_slice().iter().zip(t.as_slice()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    }
    Ok(sum)
}

fn total_pixels(samples: &[Sample]) -> Result<usize> {
    if samples.is_empty() {
        return Err(OnnError::invalid("empty dataset"));
    }
    Ok(samples.iter().map(Sample::pixel_count).sum())
}

/// Mean squared error over every pixel of every item: the training loss `E`.
pub fn batch_loss(model: &NetworkModel, samples: &[Sample]) -> Result<f64> {
    let pixels = total_pixels(samples)?;
    let sums = samples
        .par_iter()
        .map(|s| squared_error(&model.forward(&s.input)?, &s.target))
        .collect::<Result<Vec<_>>>()?;
    Ok(sums.iter().sum::<f64>() / pixels as f64)
}

/// Gradient of one item's squared error, scaled by `2 / normalizer`, with
/// the item's outputs and squared-error sum.
pub(crate) fn item_gradients(
    model: &NetworkModel,
    sample: &Sample,
    normalizer: f64,
) -> Result<(Vec<Map2D>, f64, BpState)> {
    let (out, trace) = model.forward_trace(&sample.input)?;
    let sq = squared_error(&out, &sample.target)?;
    let scale = 2.0 / normalizer;
    let output_grad = out
        .iter()
        .zip(&sample.target)
        .map(|(y, t)| y.zip_map(t, |a, b| scale * (a - b)))
        .collect::<Result<Vec<_>>>()?;
    let state = backward(model, &trace, &output_grad)?;
    Ok((out, sq, state))
}

/// Loss `E` and its analytic gradient over the batch. Items are reduced in
/// order so the result does not depend on thread count.
pub fn loss_and_gradients(model: &NetworkModel, samples: &[Sample]) -> Result<(f64, Gradients)> {
    let pixels = total_pixels(samples)? as f64;
    let parts = samples
        .par_iter()
        .map(|s| item_gradients(model, s, pixels).map(|(_, sq, st)| (sq, st.grads)))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Gradients::zeros_like(model);
    let mut sq = 0.0;
    for (s, g) in &parts {
        sq += s;
        grads.add_assign(g)?;
    }
    Ok((sq / pixels, grads))
}

/// Gradient descent step `θ ← θ - ε ∂E/∂θ` on every kernel weight and bias.
pub fn apply_update(model: &mut NetworkModel, grads: &Gradients, epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon >= 0.0) {
        return Err(OnnError::invalid(format!("learning rate {epsilon}")));
    }
    if !grads.is_finite() {
        return Err(OnnError::NonFinite("sensitivity".into()));
    }
    if grads.layers.len() != model.layers.len()
        || grads.layers.iter().zip(&model.layers).any(|(g, m)| {
            g.len() != m.len()
                || g.iter().zip(m).any(|(gn, mn)| {
                    gn.kernels.len() != mn.kernels.len()
                        || gn.kernels.iter().zip(&mn.kernels).any(|(a, b)| a.dims() != b.dims())
                })
        })
    {
        return Err(OnnError::dims("gradients do not match the model"));
    }
    for (n, g) in model.layers.iter_mut().flatten().zip(grads.layers.iter().flatten()) {
        for (k, gk) in n.kernels.iter_mut().zip(&g.kernels) {
            for (w, d) in k.as_mut_slice().iter_mut().zip(gk.as_slice()) {
                *w -= epsilon * d;
            }
        }
        n.bias -= epsilon * g.bias;
    }
    Ok(())
}

/// Mutable access to parameter `index` in [`Gradients::to_vec`] order.
pub fn parameter_mut(model: &mut NetworkModel, mut index: usize) -> Option<&mut f64> {
    for n in model.layers.iter_mut().flatten() {
        for k in &mut n.kernels {
            if index < k.len() {
                return Some(&mut k.as_mut_slice()[index]);
            }
            index -= k.len();
        }
        if index == 0 {
            return Some(&mut n.bias);
        }
        index -= 1;
    }
    None
}

/// Central differences `(E(θ + h) - E(θ - h)) / 2h` for every parameter,
/// from full forward passes only.
pub fn finite_difference_gradients(model: &NetworkModel, samples: &[Sample], h: f64) -> Result<Gradients> {
    if !(h.is_finite() && h > 0.0) {
        return Err(OnnError::invalid(format!("step {h}")));
    }
    let count = model.parameter_count();
    let values = (0..count)
        .into_par_iter()
        .map(|i| {
            let mut probe = model.clone();
            let base = *parameter_mut(&mut probe, i).expect("index in range");
            *parameter_mut(&mut probe, i).expect("index in range") = base + h;
            let plus = batch_loss(&probe, samples)?;
            *parameter_mut(&mut probe, i).expect("index in range") = base - h;
            let minus = batch_loss(&probe, samples)?;
            Ok((plus - minus) / (2.0 * h))
        })
        .collect::<Result<Vec<f64>>>()?;
    let mut grads = Gradients::zeros_like(model);
    let mut it = values.into_iter();
    for n in grads.layers.iter_mut().flatten() {
        for k in &mut n.kernels {
            for v in k.as_mut_slice() {
                *v = it.next().expect("count matches");
            }
        }
        n.bias = it.next().expect("count matches");
    }
    Ok(grads)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::network::{LayerSpec, NetworkSpec};
    use crate::operators::{OperatorParams, OperatorSet};
    use crate::tensor::PaddingMode;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_map(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Map2D {
        Map2D::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
    }

    #[test]
    fn output_delta_cases() {
        let y = Map2D::from_vec(1, 3, vec![0.2, -0.5, 0.9]).unwrap();
        let f = Map2D::filled(1, 3, 0.7);
        assert_eq!(output_delta(&y, &y, &f).unwrap(), Map2D::zeros(1, 3));
        let t = Map2D::filled(1, 3, 0.1);
        assert_eq!(output_delta(&y, &t, &Map2D::zeros(1, 3)).unwrap(), Map2D::zeros(1, 3));
        assert!(output_delta(&y, &Map2D::zeros(2, 3), &f).is_err());
    }

    #[test]
    fn output_delta_is_derivative_of_half_squared_error() {
        // E(x) = ½ Σ (tanh(x) - t)²
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let x = random_map(&mut rng, 4, 4);
        let t = random_map(&mut rng, 4, 4);
        let y = x.map(f64::tanh);
        let fp = y.map(|v| 1.0 - v * v);
        let delta = output_delta(&y, &t, &fp).unwrap();
        let e = |x: &Map2D| -> f64 {
            x.as_slice().iter().zip(t.as_slice()).map(|(a, b)| 0.5 * (a.tanh() - b).powi(2)).sum()
        };
        let h = 1e-6;
        for i in 0..16 {
            let mut xp = x.clone();
            xp.as_mut_slice()[i] += h;
            let mut xm = x.clone();
            xm.as_mut_slice()[i] -= h;
            let fd = (e(&xp) - e(&xm)) / (2.0 * h);
            let a = delta.as_slice()[i];
            assert!((a - fd).abs() <= 1e-6 * a.abs().max(fd.abs()).max(1e-6), "{a} vs {fd}");
        }
    }

    #[test]
    fn intra_neuron_cases() {
        let dy = Map2D::from_vec(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(intra_neuron_delta(&dy, &Map2D::filled(2, 2, 1.0), Sampling::None).unwrap(), dy);

        let d = intra_neuron_delta(&dy, &Map2D::filled(4, 4, 1.0), Sampling::Down(2)).unwrap();
        assert_eq!(d.get(0, 0), 0.25);
        assert_eq!(d.get(1, 1), 0.25);
        assert_eq!(d.get(3, 3), 1.0);

        let up = Map2D::filled(4, 4, 1.0);
        let d = intra_neuron_delta(&up, &Map2D::filled(2, 2, 0.5), Sampling::Up(2)).unwrap();
        assert_eq!(d, Map2D::filled(2, 2, 2.0));

        assert!(intra_neuron_delta(&dy, &Map2D::filled(3, 3, 1.0), Sampling::None).is_err());
        assert!(intra_neuron_delta(&dy, &Map2D::filled(7, 7, 1.0), Sampling::Down(2)).is_err());
    }

    fn cnn_model(seed: u64) -> NetworkModel {
        let spec = NetworkSpec::new(1, 7, 7, vec![LayerSpec::new(2, 3), LayerSpec::new(1, 3)]);
        NetworkModel::init_with(spec, OperatorParams::default(), seed, 0.5).unwrap()
    }

    #[test]
    fn zero_deltas_give_zero_everything() {
        let model = cnn_model(3);
        let (out, trace) = model.forward_trace(&[Map2D::filled(7, 7, 0.4)]).unwrap();
        let zero: Vec<Map2D> = out.iter().map(|m| Map2D::zeros(m.rows(), m.cols())).collect();
        let st = backward(&model, &trace, &zero).unwrap();
        assert!(st.delta_y.iter().flatten().all(|m| m.as_slice().iter().all(|&v| v == 0.0)));
        assert!(st.grads.to_vec().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn cnn_sensitivities_reduce_to_plain_correlation() {
        use crate::tensor::conv2d;
        let model = cnn_model(4);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let input = vec![random_map(&mut rng, 7, 7)];
        let (out, trace) = model.forward_trace(&input).unwrap();
        let g = vec![random_map(&mut rng, out[0].rows(), out[0].cols())];
        let st = backward(&model, &trace, &g).unwrap();
        for (k, y) in trace.outputs(1).iter().enumerate() {
            let expect = conv2d(y, &st.delta[1][0], PaddingMode::NoZeroPad).unwrap();
            assert!(st.grads.layers[1][0].kernels[k].max_abs_diff(&expect).unwrap() <= 1e-12);
        }
        assert!((st.grads.layers[1][0].bias - st.delta[1][0].sum()).abs() <= 1e-15);
    }

    #[test]
    fn missing_cache_is_rejected() {
        let model = cnn_model(5);
        let (out, mut trace) = model.forward_trace(&[Map2D::filled(7, 7, 0.1)]).unwrap();
        for n in &mut trace.layers[0] {
            n.connections.clear();
        }
        let g: Vec<Map2D> = out.iter().map(|m| Map2D::zeros(m.rows(), m.cols())).collect();
        assert!(matches!(backward(&model, &trace, &g), Err(OnnError::MissingCache(_))));
        assert!(matches!(
            inter_layer_delta(&[&Map2D::zeros(1, 1)], &[], (3, 3)),
            Err(OnnError::MissingCache(_))
        ));
    }

    #[test]
    fn update_rule() {
        let mut model = cnn_model(6);
        let before = model.clone();
        let mut grads = Gradients::zeros_like(&model);
        for n in grads.layers.iter_mut().flatten() {
            n.bias = 2.0;
        }
        apply_update(&mut model, &grads, 0.0).unwrap();
        assert_eq!(model, before);

        let mut single = model.clone();
        single.layers[0][0].bias = 1.0;
        apply_update(&mut single, &grads, 0.1).unwrap();
        assert!((single.layers[0][0].bias - 0.8).abs() < 1e-15);

        let mut bad = grads.clone();
        bad.layers[0][0].bias = f64::NAN;
        assert!(apply_update(&mut model, &bad, 0.1).is_err());
        assert_eq!(model, before);
        assert!(apply_update(&mut model, &grads, -1.0).is_err());
    }

    #[test]
    fn two_updates_equal_one_summed_update() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let model = cnn_model(8);
        let mut g1 = Gradients::zeros_like(&model);
        let mut g2 = Gradients::zeros_like(&model);
        for (a, b) in g1.layers.iter_mut().flatten().zip(g2.layers.iter_mut().flatten()) {
            a.bias = rng.random_range(-1.0..1.0);
            b.bias = rng.random_range(-1.0..1.0);
            for (ka, kb) in a.kernels.iter_mut().zip(&mut b.kernels) {
                *ka = random_map(&mut rng, 3, 3);
                *kb = random_map(&mut rng, 3, 3);
            }
        }
        let mut twice = model.clone();
        apply_update(&mut twice, &g1, 0.3).unwrap();
        apply_update(&mut twice, &g2, 0.3).unwrap();
        let mut sum = g1.clone();
        sum.add_assign(&g2).unwrap();
        let mut once = model.clone();
        apply_update(&mut once, &sum, 0.3).unwrap();
        let diff = twice
            .layers
            .iter()
            .flatten()
            .zip(once.layers.iter().flatten())
            .map(|(a, b)| {
                a.kernels
                    .iter()
                    .zip(&b.kernels)
                    .map(|(x, y)| x.max_abs_diff(y).unwrap())
                    .fold((a.bias - b.bias).abs(), f64::max)
            })
            .fold(0.0, f64::max);
        assert!(diff < 1e-14);
    }

    #[test]
    fn parameter_order_matches_flattening() {
        let mut model = cnn_model(9);
        let count = model.parameter_count();
        assert_eq!(count, 2 * 10 + 2 * 9 + 1);
        for i in 0..count {
            *parameter_mut(&mut model, i).unwrap() = i as f64;
        }
        assert!(parameter_mut(&mut model, count).is_none());
        let mut g = Gradients::zeros_like(&model);
        for (gn, mn) in g.layers.iter_mut().flatten().zip(model.layers.iter().flatten()) {
            gn.kernels = mn.kernels.clone();
            gn.bias = mn.bias;
        }
        assert_eq!(g.to_vec(), (0..count).map(|i| i as f64).collect::<Vec<_>>());
    }

    #[test]
    fn finite_differences_match_analytic_on_cnn() {
        let model = cnn_model(10);
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let samples: Vec<Sample> = (0..2)
            .map(|_| Sample::single(random_map(&mut rng, 7, 7), random_map(&mut rng, 3, 3)))
            .collect();
        let (_, analytic) = loss_and_gradients(&model, &samples).unwrap();
        let numeric = finite_difference_gradients(&model, &samples, 1e-6).unwrap();
        for (a, n) in analytic.to_vec().iter().zip(numeric.to_vec()) {
            assert!((a - n).abs() <= 1e-6 * a.abs().max(n.abs()).max(1e-4), "{a} vs {n}");
        }
    }

    #[test]
    fn batch_loss_is_pixel_mean() {
        let model = cnn_model(11);
        let s = Sample::single(Map2D::filled(7, 7, 0.2), Map2D::filled(3, 3, 0.0));
        let out = model.forward(&s.input).unwrap();
        let expect = out[0].as_slice().iter().map(|v| v * v).sum::<f64>() / 9.0;
        assert!((batch_loss(&model, &[s]).unwrap() - expect).abs() < 1e-15);
        assert!(batch_loss(&model, &[]).is_err());
        let _ = OperatorSet::CNN;
    }
}
