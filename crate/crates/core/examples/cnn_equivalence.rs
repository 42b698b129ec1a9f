//! With operator set 0 (sum, tanh, multiply) an operational layer is an
//! ordinary convolutional layer: compare against a plain correlation.
//!
//! ```text
//! cargo run --example cnn_equivalence
//! ```

use onn::tensor::conv2d;
use onn::{LayerSpec, Map2D, NetworkModel, NetworkSpec, PaddingMode};

/// Returns the largest absolute difference seen.
pub fn run_example() -> onn::Result<f64> {
    let spec = NetworkSpec::new(2, 9, 9, vec![LayerSpec::new(3, 3)]);
    let model = NetworkModel::init_with(spec, Default::default(), 7, 0.5)?;
    let input: Vec<Map2D> = (0..2)
        .map(|k| Map2D::from_fn(9, 9, |r, c| ((r * 9 + c + 13 * k) as f64 * 0.37).sin()))
        .collect();
    let outputs = model.forward(&input)?;

    let mut worst: f64 = 0.0;
    for (neuron, y) in model.layers[0].iter().zip(&outputs) {
        let mut x = Map2D::filled(7, 7, neuron.bias);
        for (map, kernel) in input.iter().zip(&neuron.kernels) {
            x.add_assign(&conv2d(map, kernel, PaddingMode::NoZeroPad)?)?;
        }
        worst = worst.max(y.max_abs_diff(&x.map(f64::tanh))?);
    }
    println!("max |ONN - CNN| = {worst:e}");
    Ok(worst)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
