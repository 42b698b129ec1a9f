//! Analytic-versus-numeric gradient comparison on small random networks.
//!
//! Random draws that put a non-smooth point of an operator within reach of
//! the finite-difference step are re-drawn: lin-cut pre-activations near
//! `±cut`, median windows whose two closest candidates nearly tie, and sinc
//! inputs inside its series-expansion band.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::backprop::{finite_difference_gradients, loss_and_gradients, Sample};
use crate::error::{OnnError, Result};
use crate::network::{ConnectionCache, LayerSpec, NetworkModel, NetworkSpec, Sampling};
use crate::operators::{median_index, Activation, Nodal, OperatorParams, OperatorSet, Pool};
use crate::tensor::{Map2D, PaddingMode};

pub const DEFAULT_STEP: f64 = 1e-6;
pub const DEFAULT_TOLERANCE: f64 = 1e-5;
/// Lower bound on the denominator of the relative error, so that
/// parameters whose true sensitivity is ~0 are judged by absolute error.
pub const RELATIVE_FLOOR: f64 = 1e-4;
pub const KINK_MARGIN: f64 = 1e-4;
pub const SINC_MARGIN: f64 = 1e-4;
/// A ±h step moves a window term by about `h·(|∂wΨ| + |∂yΨ|·|∂y/∂θ|)`.
/// A median window is rejected when the gap between its median and another
/// term is below `MEDIAN_GAP_FACTOR · h` times the pair's summed local
/// sensitivities, or below `MEDIAN_GAP_FLOOR` outright.
pub const MEDIAN_GAP_FACTOR: f64 = 10.0;
pub const MEDIAN_GAP_FLOOR: f64 = 1e-8;
const WEIGHT_AMPLITUDE: f64 = 0.5;
const MAX_DRAWS: usize = 2_000;

/// `|a - n| / max(|a|, |n|, RELATIVE_FLOOR)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(RELATIVE_FLOOR)
}

/// Shape of a gradient-check network: `1×3×3×1`, 3×3 kernels, with the two
/// hidden layers re-sampling as given.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub struct GradcheckCase {
    pub name: &'static str,
    pub padding: PaddingMode,
    pub input: usize,
    pub first: Sampling,
    pub second: Sampling,
}

impl GradcheckCase {
    pub fn spec(&self) -> NetworkSpec {
        let layer = |n, s| LayerSpec::new(n, 3).padding(self.padding).sampling(s);
        NetworkSpec::new(
            1,
            self.input,
            self.input,
            vec![layer(3, self.first), layer(3, self.second), layer(1, Sampling::None)],
        )
    }
}

pub fn default_cases() -> Vec<GradcheckCase> {
    vec![
        GradcheckCase {
            name: "valid-up-down",
            padding: PaddingMode::NoZeroPad,
            input: 8,
            first: Sampling::Up(2),
            second: Sampling::Down(2),
        },
        GradcheckCase {
            name: "valid-down-up",
            padding: PaddingMode::NoZeroPad,
            input: 12,
            first: Sampling::Down(2),
            second: Sampling::Up(2),
        },
        GradcheckCase {
            name: "same-down-up",
            padding: PaddingMode::SamePad,
            input: 8,
            first: Sampling::Down(2),
            second: Sampling::Up(2),
        },
        GradcheckCase {
            name: "same-up-down",
            padding: PaddingMode::SamePad,
            input: 8,
            first: Sampling::Up(2),
            second: Sampling::Down(2),
        },
    ]
}

/// Why a draw sits too close to a non-smooth point, if it does.
pub fn conditioning_issue(model: &NetworkModel, samples: &[Sample], h: f64) -> Result<Option<String>> {
    let p = &model.params;
    for (item, s) in samples.iter().enumerate() {
        let (_, trace) = model.forward_trace(&s.input)?;
        for (li, layer) in trace.layers.iter().enumerate() {
            let l = li + 1;
            let inputs: Vec<&Map2D> = if l == 1 { trace.input.iter().collect() } else { trace.outputs(l - 1) };
            for (i, (nt, neuron)) in layer.iter().zip(&model.layers[li]).enumerate() {
                let set = neuron.operator_set;
                if set.act == Activation::LinCut
                    && nt.x.as_slice().iter().any(|&x| (x.abs() - p.cut).abs() < KINK_MARGIN)
                {
                    return Ok(Some(format!("item {item} layer {l} neuron {i}: lin-cut kink")));
                }
                for (k, (y, cache)) in inputs.iter().zip(&nt.connections).enumerate() {
                    if set.nodal == Nodal::Sinc && y.as_slice().iter().any(|v| v.abs() < SINC_MARGIN) {
                        return Ok(Some(format!("item {item} layer {l} input {k}: sinc guard band")));
                    }
                    if set.pool == Pool::Median {
                        if let Some((m, n)) = near_median_tie(cache, y.dims(), h) {
                            return Ok(Some(format!(
                                "item {item} layer {l} neuron {i} input {k}: median near-tie at ({m}, {n})"
                            )));
                        }
                    }
                }
            }
        }
    }
    Ok(None)
}

/// First window whose median could swap with another term under a step
/// of `h`. Pairs of identical terms that both read outside the input (zero
/// padding) are skipped: they stay equal under every perturbation.
fn near_median_tie(cache: &ConnectionCache, input: (usize, usize), h: f64) -> Option<(usize, usize)> {
    let (rows, cols, _, kc) = cache.nodal.shape();
    for m in 0..rows {
        for n in 0..cols {
            let terms = cache.nodal.patch(m, n);
            let pos = |j: usize| (m + j / kc, n + j % kc, j / kc, j % kc);
            let padded = |j: usize| m + j / kc >= input.0 || n + j % kc >= input.1;
            let sensitivity = |j: usize| {
                let (a, b, r, t) = pos(j);
                cache.dw.get(a, b, r, t).abs() + cache.dy.get(a, b, r, t).abs()
            };
            let a = median_index(terms);
            for (j, &v) in terms.iter().enumerate() {
                if j == a || (padded(j) && padded(a) && v == terms[a]) {
                    continue;
                }
                let limit = (MEDIAN_GAP_FACTOR * h * (sensitivity(a) + sensitivity(j))).max(MEDIAN_GAP_FLOOR);
                if (v - terms[a]).abs() < limit {
                    return Some((m, n));
                }
            }
        }
    }
    None
}

/// A well-conditioned random instance: the model (every layer on `set`),
/// two random items, and how many draws were rejected.
pub fn draw_instance(
    set: OperatorSet,
    case: &GradcheckCase,
    seed: u64,
    h: f64,
) -> Result<(NetworkModel, Vec<Sample>, usize)> {
    let spec = case.spec();
    let out = spec.output_dims()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((set.index() as u64) << 32));
    for redraws in 0..MAX_DRAWS {
        let mut model = NetworkModel::init_with(spec.clone(), OperatorParams::default(), rng.random(), WEIGHT_AMPLITUDE)?;
        for l in 1..=model.depth() {
            model.assign_operator_set(l, set)?;
        }
        for n in model.layers.iter_mut().flatten() {
            n.bias = rng.random_range(-WEIGHT_AMPLITUDE..WEIGHT_AMPLITUDE);
        }
        let mut map = |r, c| Map2D::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let samples: Vec<Sample> = (0..2)
            .map(|_| Sample::single(map(spec.input_rows, spec.input_cols), map(out.0, out.1)))
            .collect();
        if conditioning_issue(&model, &samples, h)?.is_none() {
            return Ok((model, samples, redraws));
        }
    }
    Err(OnnError::invalid(format!(
        "no well-conditioned draw for set {set} in {MAX_DRAWS} attempts"
    )))
}

#[derive(Clone, Debug, Serialize)]
pub struct GradcheckReport {
    pub set: usize,
    pub case: &'static str,
    pub seed: u64,
    pub parameters: usize,
    pub redraws: usize,
    pub max_rel_error: f64,
    /// Parameter index (flattened order) of the worst disagreement.
    pub worst_parameter: usize,
}

/// Largest relative error between analytic and central-difference
/// gradients, and where it occurred.
pub fn compare(model: &NetworkModel, samples: &[Sample], h: f64) -> Result<(f64, usize)> {
    let (_, analytic) = loss_and_gradients(model, samples)?;
    let numeric = finite_difference_gradients(model, samples, h)?;
    Ok(analytic
        .to_vec()
        .iter()
        .zip(numeric.to_vec())
        .map(|(&a, n)| relative_error(a, n))
        .enumerate()
        .fold((0.0, 0), |(best, at), (i, e)| if e > best { (e, i) } else { (best, at) }))
}

pub fn check(set: OperatorSet, case: &GradcheckCase, seed: u64, h: f64) -> Result<GradcheckReport> {
    let (model, samples, redraws) = draw_instance(set, case, seed, h)?;
    let (max_rel_error, worst_parameter) = compare(&model, &samples, h)?;
    Ok(GradcheckReport {
        set: set.index(),
        case: case.name,
        seed,
        parameters: model.parameter_count(),
        redraws,
        max_rel_error,
        worst_parameter,
    })
}

/// Every `(set, case, seed)` combination, in that nesting order.
pub fn sweep(sets: &[OperatorSet], cases: &[GradcheckCase], seeds: &[u64], h: f64) -> Result<Vec<GradcheckReport>> {
    let jobs: Vec<(OperatorSet, &GradcheckCase, u64)> = sets
        .iter()
        .flat_map(|&s| cases.iter().flat_map(move |c| seeds.iter().map(move |&seed| (s, c, seed))))
        .collect();
    jobs.par_iter().map(|&(s, c, seed)| check(s, c, seed, h)).collect()
}
