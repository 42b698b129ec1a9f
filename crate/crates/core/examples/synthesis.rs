//! Image synthesis: map a fixed white-noise image to a checkerboard.
//!
//! ```text
//! cargo run --release --example synthesis
//! ```

use onn::data::{checkerboard, white_noise};
use onn::train::train;
use onn::{LayerSpec, NetworkModel, NetworkSpec, PaddingMode, Sample, Sampling, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Returns (initial MSE, final MSE).
pub fn run_example() -> onn::Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let sample = Sample::single(white_noise(&mut rng, 16, 16, 1.0), checkerboard(16, 16, 2, 0.9));

    let layer = |n| LayerSpec::new(n, 3).padding(PaddingMode::SamePad);
    let spec = NetworkSpec::new(
        1,
        16,
        16,
        vec![layer(4).sampling(Sampling::Down(2)), layer(8).sampling(Sampling::Up(2)), layer(1)],
    );
    let out = train(NetworkModel::init(spec, 0)?, &[sample], &TrainConfig::default())?;

    for row in out.history.iter().step_by(40) {
        println!("iter {:>3}  mse {:.5}  eps {:.4}  snr {:.2} dB", row.iteration, row.mse, row.epsilon, row.snr_db);
    }
    let (first, last) = (out.initial_loss().unwrap(), out.final_loss().unwrap());
    println!("final/initial mse: {:.4}", last / first);
    Ok((first, last))
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
