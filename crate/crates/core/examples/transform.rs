//! Transformation: one network learns a blur-and-invert mapping and its
//! inverse at once (each pair appears in both directions), saved to and
//! reloaded from a model document.
//!
//! ```text
//! cargo run --release --example transform
//! ```

use onn::data::{generate, TaskKind};
use onn::metrics::snr;
use onn::model_io::{model_from_json, model_to_json};
use onn::train::train;
use onn::{NetworkModel, NetworkSpec, OperatorSet, TrainConfig};

/// Returns per-item SNR (dB) of the reloaded model.
pub fn run_example() -> onn::Result<Vec<f64>> {
    let ds = generate(TaskKind::Transform, 2, 4, 12)?;
    let mut spec = NetworkSpec::default_experiment(1, 1, 12, 12);
    spec.layers[1].operator_set = OperatorSet::from_index(2)?;
    let cfg = TrainConfig::default();
    let trained = train(NetworkModel::init(spec, 4)?, &ds.samples(), &cfg)?.model;

    let json = model_to_json(&trained)?;
    let model = model_from_json(&json)?;
    assert_eq!(model, trained);

    let mut snrs = Vec::new();
    for pair in &ds.pairs {
        let y = model.forward(std::slice::from_ref(&pair.input))?.remove(0);
        let s = snr(&pair.target, &y)?;
        println!("{}: {:.2} dB", pair.id, s);
        snrs.push(s);
    }
    Ok(snrs)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
