//! Compare back-propagated gradients with central finite differences for
//! every operator set in the library.
//!
//! ```text
//! cargo run --release --example gradcheck
//! ```

use onn::gradcheck::{default_cases, sweep, DEFAULT_STEP, DEFAULT_TOLERANCE};
use onn::OperatorSet;

pub fn run_example() -> onn::Result<()> {
    let sets: Vec<OperatorSet> = OperatorSet::library().collect();
    let seeds = [1, 2, 3, 4, 5];
    let reports = sweep(&sets, &default_cases(), &seeds, DEFAULT_STEP)?;

    println!("{:<34}  {:>13}  {:>7}  status", "operator set", "max_rel_error", "redraws");
    for set in &sets {
        let rows: Vec<_> = reports.iter().filter(|r| r.set == set.index()).collect();
        let worst = rows.iter().map(|r| r.max_rel_error).fold(0.0, f64::max);
        let redraws: usize = rows.iter().map(|r| r.redraws).sum();
        let status = if worst < DEFAULT_TOLERANCE { "ok" } else { "FAIL" };
        println!("{:<34}  {worst:>13.3e}  {redraws:>7}  {status}", set.to_string());
    }
    Ok(())
}

fn main() {
    if let Err(e) = run_example() {
        eprintln!("error: {e}");
        std::process::exit(e.exit_code());
    }
}
