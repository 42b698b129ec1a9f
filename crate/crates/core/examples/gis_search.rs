//! Greedy operator-set search over a small library, then a final training
//! run on the winning assignment.
//!
//! ```text
//! cargo run --release --example gis_search
//! ```

use onn::data::{generate, TaskKind};
use onn::gis::{gis_search, GisConfig, OperatorLibrary, GisOutcome};
use onn::{NetworkSpec, OperatorParams, OperatorSet, TrainConfig};

pub fn run_example() -> onn::Result<GisOutcome> {
    let ds = generate(TaskKind::Synth, 3, 1, 12)?;
    let spec = NetworkSpec::default_experiment(1, 1, 12, 12);
    // The output layer stays convolutional.
    let library = OperatorLibrary::parse("0,2,9,13,16")?.freeze(3, OperatorSet::CNN);
    let cfg = GisConfig {
        passes: 2,
        n_bp: 1,
        short_iter_max: 15,
        final_iter_max: 40,
        ..GisConfig::default()
    };
    let out = gis_search(&spec, OperatorParams::default(), &ds.samples(), &library, &cfg, &TrainConfig::default())?;

    let mut table = Vec::new();
    out.log.write_table(&mut table).expect("in-memory write");
    print!("{}", String::from_utf8_lossy(&table));
    for (l, set) in out.assignment.iter().enumerate() {
        println!("layer {}: {set}", l + 1);
    }
    if let Some(last) = out.final_history.last() {
        println!("final mse {:.5}", last.mse);
    }
    Ok(out)
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
