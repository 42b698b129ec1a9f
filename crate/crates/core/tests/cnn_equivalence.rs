//! With every neuron set to (sum, tanh, multiply) the network is a plain
//! CNN; compare it against the reference implementation in `common`.

mod common;

use onn::backprop::backward;
use onn::{LayerSpec, NetworkModel, NetworkSpec, PaddingMode, Sampling};

#[test]
fn random_networks_match_classic_cnn() {
    for seed in 0..50 {
        let err = common::cnn_equivalence_error(seed);
        assert!(err <= 1e-12, "seed {seed}: max abs diff {err:e}");
    }
}

#[test]
fn oracle_agrees_on_a_hand_sized_case() {
    // 1x1 kernels and no sampling: every map is elementwise.
    let spec = NetworkSpec::new(1, 3, 3, vec![LayerSpec::new(1, 1)]);
    let mut model = NetworkModel::init(spec, 0).unwrap();
    model.layers[0][0].kernels[0].set(0, 0, 0.5);
    model.layers[0][0].bias = 0.1;
    let input = vec![onn::Map2D::from_fn(3, 3, |r, c| (r * 3 + c) as f64 / 10.0)];
    let grad = vec![onn::Map2D::filled(3, 3, 1.0)];
    let oracle = common::cnn_oracle(&model, &input, &grad);
    for r in 0..3 {
        for c in 0..3 {
            let expect = (0.1 + 0.5 * input[0].get(r, c)).tanh();
            assert!((oracle.y[0][0].get(r, c) - expect).abs() < 1e-15);
        }
    }
    let (_, trace) = model.forward_trace(&input).unwrap();
    let bp = backward(&model, &trace, &grad).unwrap();
    assert!((bp.grads.layers[0][0].bias - oracle.bias_grads[0][0]).abs() < 1e-14);
}

#[test]
fn same_padding_with_sampling_both_ways() {
    // Odd sizes exercise the partial trailing pooling blocks.
    let spec = NetworkSpec::new(
        2,
        11,
        9,
        vec![
            LayerSpec::new(3, 3).padding(PaddingMode::SamePad).sampling(Sampling::Down(2)),
            LayerSpec::new(2, 1).sampling(Sampling::Up(2)),
            LayerSpec::new(1, 3).padding(PaddingMode::SamePad),
        ],
    );
    let model = NetworkModel::init_with(spec.clone(), Default::default(), 7, 0.5).unwrap();
    let mut rng = common::rng(3);
    let input: Vec<_> = (0..2).map(|_| common::random_map(&mut rng, 11, 9, 1.0)).collect();
    let (rows, cols) = spec.output_dims().unwrap();
    let grad = vec![common::random_map(&mut rng, rows, cols, 1.0)];
    let (_, trace) = model.forward_trace(&input).unwrap();
    let bp = backward(&model, &trace, &grad).unwrap();
    let oracle = common::cnn_oracle(&model, &input, &grad);
    for l in 0..3 {
        for k in 0..model.layers[l].len() {
            assert!(common::max_diff(&bp.delta_y[l][k], &oracle.delta_y[l][k]) <= 1e-12);
            for (a, b) in bp.grads.layers[l][k].kernels.iter().zip(&oracle.kernel_grads[l][k]) {
                assert!(common::max_diff(a, b) <= 1e-12);
            }
        }
    }
}
