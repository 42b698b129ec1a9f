//! Denoising: recover clean patterns from copies corrupted by white noise
//! at 0 dB, comparing a convolutional network with an operational one.
//!
//! ```text
//! cargo run --release --example denoise
//! ```

use onn::data::{generate, TaskKind};
use onn::train::train;
use onn::{NetworkModel, NetworkSpec, OperatorSet, TrainConfig};

/// Returns the final training SNR (dB) of the CNN and of the ONN.
pub fn run_example() -> onn::Result<(f64, f64)> {
    let ds = generate(TaskKind::Denoise, 11, 2, 16)?;
    let samples = ds.samples();
    let cfg = TrainConfig {
        iter_max: 60,
        ..TrainConfig::default()
    };

    let mut results = Vec::new();
    for set in [OperatorSet::CNN, OperatorSet::from_index(9)?] {
        let mut spec = NetworkSpec::default_experiment(1, 1, 16, 16);
        spec.layers[0].operator_set = set;
        spec.layers[1].operator_set = set;
        let out = train(NetworkModel::init(spec, 1)?, &samples, &cfg)?;
        let last = out.history.last().expect("iterations ran");
        println!("hidden set {set}: mse {:.4} snr {:.2} dB", last.mse, last.snr_db);
        results.push(last.snr_db);
    }
    Ok((results[0], results[1]))
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
