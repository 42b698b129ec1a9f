//! Segmentation: predict {-1, +1} shape masks and score them with
//! thresholded precision, recall, F1 and classification error.
//!
//! ```text
//! cargo run --release --example segmentation
//! ```

use onn::cli::summarize;
use onn::data::{generate, TaskKind};
use onn::metrics::{segmentation_metrics, MetricReport};
use onn::train::train;
use onn::{NetworkModel, NetworkSpec, OperatorSet, TrainConfig};

pub fn run_example() -> onn::Result<MetricReport> {
    let ds = generate(TaskKind::Segment, 5, 3, 16)?;
    let mut spec = NetworkSpec::default_experiment(1, 1, 16, 16);
    // Lin-cut activation with a sinusoidal nodal operator in the first layer.
    spec.layers[0].operator_set = OperatorSet::from_index(9)?;
    let cfg = TrainConfig::default();
    let model = train(NetworkModel::init(spec, 3)?, &ds.samples(), &cfg)?.model;

    let mut reports = Vec::new();
    for pair in &ds.pairs {
        let y = model.forward(std::slice::from_ref(&pair.input))?.remove(0);
        let mut r = segmentation_metrics(&y, &pair.target, 0.0)?;
        r.id = Some(pair.id.clone());
        println!(
            "{}: F1 {:.3}  CE {:.3}  P {:.3}  R {:.3}",
            pair.id,
            r.f1.unwrap(),
            r.ce.unwrap(),
            r.precision.unwrap(),
            r.recall.unwrap()
        );
        reports.push(r);
    }
    let mean = summarize(&reports);
    println!("mean F1 {:.3}", mean.f1.unwrap());
    Ok(mean)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
