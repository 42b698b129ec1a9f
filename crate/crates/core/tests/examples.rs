//! The examples double as smoke tests: each is compiled in as a module and
//! its `run_example` checked.

macro_rules! example {
    ($name:ident, $file:literal) => {
        #[allow(dead_code)]
        #[path = $file]
        mod $name;
    };
}

example!(cnn_equivalence, "../examples/cnn_equivalence.rs");
example!(synthesis, "../examples/synthesis.rs");
example!(segmentation, "../examples/segmentation.rs");
example!(denoise, "../examples/denoise.rs");
example!(transform, "../examples/transform.rs");
example!(gis_search, "../examples/gis_search.rs");

#[test]
fn cnn_equivalence_example() {
    assert!(cnn_equivalence::run_example().unwrap() <= 1e-12);
}

#[test]
fn synthesis_example_learns() {
    let (first, last) = synthesis::run_example().unwrap();
    assert!(last / first <= 0.1, "ratio {}", last / first);
}

#[test]
fn segmentation_example_separates_shapes() {
    let mean = segmentation::run_example().unwrap();
    assert!(mean.f1.unwrap() > 0.9, "{mean:?}");
}

#[test]
fn denoise_example_improves_on_the_noisy_input() {
    // The noisy input itself scores 0 dB.
    let (cnn, onn) = denoise::run_example().unwrap();
    assert!(cnn > 0.0 && onn > 0.0, "cnn {cnn} onn {onn}");
}

#[test]
fn transform_example_improves_every_item() {
    let snrs = transform::run_example().unwrap();
    assert!(snrs.iter().all(|&s| s > 3.0), "{snrs:?}");
}

#[test]
fn gis_search_example_completes() {
    let out = gis_search::run_example().unwrap();
    assert_eq!(out.assignment.len(), 3);
    assert_eq!(out.assignment[2], onn::OperatorSet::CNN);
    assert_eq!(out.final_history.len(), 41);
}
