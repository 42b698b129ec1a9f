//! Acceptance run: one PASS/FAIL line per criterion. Criterion 8 is
//! informative and never fails the run.

mod common;

use std::process::ExitCode;
use std::time::Instant;

use onn::data::{checkerboard, generate, white_noise, TaskKind};
use onn::gis::{gis_search, GisConfig, OperatorLibrary};
use onn::gradcheck::{default_cases, sweep, DEFAULT_STEP, DEFAULT_TOLERANCE};
use onn::metrics::{confusion, regression_metrics, segmentation_metrics, snr, variance};
use onn::operators::LIBRARY_SIZE;
use onn::train::{adapt_learning_rate, train};
use onn::{
    Activation, LayerSpec, Map2D, NetworkModel, NetworkSpec, Nodal, OperatorParams, OperatorSet, PaddingMode, Pool,
    Sample, Sampling, TrainConfig,
};
use rand::Rng;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn encoding() -> Verdict {
    let round_trip = (0..LIBRARY_SIZE).all(|i| OperatorSet::from_index(i).ok().map(OperatorSet::index) == Some(i));
    let cited = [(0, (0, 0, 0)), (9, (0, 1, 2)), (12, (0, 1, 5)), (13, (0, 1, 6)), (16, (1, 0, 2)), (27, (1, 1, 6))];
    let mut bad = Vec::new();
    for (index, (pool, act, nodal)) in cited {
        let expect = OperatorSet::new(
            Pool::from_id(pool).unwrap(),
            Activation::from_id(act).unwrap(),
            Nodal::from_id(nodal).unwrap(),
        );
        if OperatorSet::from_index(index).ok() != Some(expect) || expect.index() != index {
            bad.push(index);
        }
    }
    let out_of_range = OperatorSet::from_index(LIBRARY_SIZE).is_err();
    verdict(
        round_trip && bad.is_empty() && out_of_range,
        format!("round trip over 28 indices: {round_trip}; mismatched mappings: {bad:?}"),
    )
}

fn cnn_degeneration() -> Verdict {
    let worst = (0..50).map(common::cnn_equivalence_error).fold(0.0, f64::max);
    verdict(worst <= 1e-12, format!("50 random CNNs, max abs diff {worst:.3e} (bound 1e-12)"))
}

fn learning_rate() -> Verdict {
    let cfg = TrainConfig::default();
    let grow = adapt_learning_rate(0.1, 1.0, 2.0, &cfg);
    let cap = adapt_learning_rate(0.49, 1.0, 2.0, &cfg);
    let floor = adapt_learning_rate(6e-5, 2.0, 1.0, &cfg);
    let pass = grow == 1.05 * 0.1 && (grow - 0.105).abs() <= f64::EPSILON && cap == 0.49 && floor == 6e-5;
    verdict(pass, format!("grow 0.1 -> {grow}, cap 0.49 -> {cap}, floor 6e-5 -> {floor}"))
}

fn search_equals_brute_force() -> Verdict {
    let spec = NetworkSpec::new(1, 8, 8, vec![LayerSpec::new(2, 3), LayerSpec::new(1, 3)]);
    let mut rng = common::rng(21);
    let samples: Vec<Sample> = (0..2)
        .map(|_| Sample::single(common::random_map(&mut rng, 8, 8, 1.0), common::random_map(&mut rng, 4, 4, 0.8)))
        .collect();
    let library = OperatorLibrary::parse("0,5,9,16").unwrap().freeze(2, OperatorSet::CNN);
    let cfg = GisConfig {
        passes: 1,
        n_bp: 2,
        short_iter_max: 30,
        final_iter_max: 1,
        target_metric: None,
        seed: 6,
    };
    let train_cfg = TrainConfig::default();
    let out = gis_search(&spec, OperatorParams::default(), &samples, &library, &cfg, &train_cfg).unwrap();
    let short = TrainConfig {
        iter_max: cfg.short_iter_max,
        ..train_cfg
    };
    let mismatches = common::search_mismatches(&spec, &out, 1, &samples, &short);
    let seeds = out.log.rows[0].seeds.clone();
    let brute: Vec<(f64, usize)> = library
        .sets
        .iter()
        .map(|&s| (common::brute_force_candidate(&spec, &out.assignment, 0, s, &seeds, &samples, &short), s.index()))
        .collect();
    let best = brute.iter().min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1))).unwrap().1;
    let winner = out.assignment[0].index();
    verdict(
        mismatches == 0 && winner == best && out.log.rows.len() == 4,
        format!("winner {winner} vs brute force {best}; {mismatches} of 4 candidate losses differ"),
    )
}

fn smoke_sample() -> Sample {
    let mut rng = common::rng(1);
    Sample::single(white_noise(&mut rng, 16, 16, 1.0), checkerboard(16, 16, 2, 0.9))
}

fn smoke_spec() -> NetworkSpec {
    let layer = |n| LayerSpec::new(n, 3).padding(PaddingMode::SamePad);
    NetworkSpec::new(
        1,
        16,
        16,
        vec![layer(4).sampling(Sampling::Down(2)), layer(8).sampling(Sampling::Up(2)), layer(1)],
    )
}

fn learnability() -> Verdict {
    let out = train(NetworkModel::init(smoke_spec(), 0).unwrap(), &[smoke_sample()], &TrainConfig::default()).unwrap();
    let (first, last) = (out.initial_loss().unwrap(), out.final_loss().unwrap());
    let ratio = last / first;
    verdict(ratio <= 0.1, format!("mse {first:.4e} -> {last:.4e} after 240 iterations, ratio {ratio:.4} (bound 0.1)"))
}

fn training_snr(model: &NetworkModel, sample: &Sample) -> f64 {
    let y = model.forward(&sample.input).unwrap();
    snr(&sample.target[0], &y[0]).unwrap()
}

fn search_vs_cnn() -> Verdict {
    let library = OperatorLibrary::parse("0,1,2,5,9,16").unwrap().freeze(3, OperatorSet::CNN);
    let mut wins = 0;
    let mut lines = Vec::new();
    for rep in 0..3u64 {
        let mut rng = common::rng(100 + rep);
        let sample = Sample::single(white_noise(&mut rng, 16, 16, 1.0), checkerboard(16, 16, 2, 0.9));
        let samples = [sample];
        let mut best_onn = f64::NEG_INFINITY;
        let mut best_cnn = f64::NEG_INFINITY;
        for seed in 0..3u64 {
            let cfg = GisConfig {
                passes: 1,
                n_bp: 1,
                short_iter_max: 40,
                final_iter_max: 240,
                target_metric: None,
                seed,
            };
            if let Ok(out) = gis_search(&smoke_spec(), OperatorParams::default(), &samples, &library, &cfg, &TrainConfig::default()) {
                best_onn = best_onn.max(training_snr(&out.model, &samples[0]));
            }
            let cnn = NetworkModel::init(smoke_spec(), seed).unwrap();
            if let Ok(out) = train(cnn, &samples, &TrainConfig::default()) {
                best_cnn = best_cnn.max(training_snr(&out.model, &samples[0]));
            }
        }
        if best_onn >= best_cnn {
            wins += 1;
        }
        lines.push(format!("rep {rep}: onn {best_onn:.2} dB vs cnn {best_cnn:.2} dB"));
    }
    verdict(wins >= 2, format!("{wins}/3 repetitions ({})", lines.join("; ")))
}

fn data_and_metrics() -> Verdict {
    let ds = generate(TaskKind::Denoise, 5, 20, 16).unwrap();
    let worst_db = ds
        .pairs
        .iter()
        .map(|p| snr(&p.target, &p.input).unwrap().abs())
        .fold(0.0, f64::max);

    let mut rng = common::rng(9);
    let mut worst_metric = 0.0f64;
    let mut counts_ok = true;
    for _ in 0..50 {
        let (rows, cols) = (rng.random_range(1..12), rng.random_range(1..12));
        let output = common::random_map(&mut rng, rows, cols, 1.0);
        let truth = Map2D::from_fn(rows, cols, |_, _| if rng.random_bool(0.4) { 1.0 } else { -1.0 });
        let threshold = rng.random_range(-0.5..0.5);

        // Brute force: count each cell of the confusion matrix separately.
        let pairs: Vec<(f64, f64)> = output.as_slice().iter().copied().zip(truth.as_slice().iter().copied()).collect();
        let count = |p: bool, t: bool| pairs.iter().filter(|(y, g)| (*y >= threshold) == p && (*g == 1.0) == t).count();
        let (tp, fp, fneg, tn) = (count(true, true), count(true, false), count(false, true), count(false, false));
        let c = confusion(&output, &truth, threshold).unwrap();
        counts_ok &= (c.tp, c.fp, c.fn_, c.tn) == (tp, fp, fneg, tn);
        let report = segmentation_metrics(&output, &truth, threshold).unwrap();
        let total = (tp + fp + fneg + tn) as f64;
        worst_metric = worst_metric.max((report.ce.unwrap() - (fp + fneg) as f64 / total).abs());
        if tp + fp > 0 && tp + fneg > 0 {
            let precision = tp as f64 / (tp + fp) as f64;
            let recall = tp as f64 / (tp + fneg) as f64;
            worst_metric = worst_metric.max((report.precision.unwrap() - precision).abs());
            worst_metric = worst_metric.max((report.recall.unwrap() - recall).abs());
            if precision + recall > 0.0 {
                let f1 = 2.0 * precision * recall / (precision + recall);
                worst_metric = worst_metric.max((report.f1.unwrap() - f1).abs());
            }
        }

        // Variance as the mean of all pairwise squared differences, halved.
        let values = output.as_slice();
        let n = values.len() as f64;
        let pairwise = |v: &[f64]| v.iter().map(|a| v.iter().map(|b| (a - b) * (a - b)).sum::<f64>()).sum::<f64>() / (2.0 * n * n);
        worst_metric = worst_metric.max((variance(values) - pairwise(values)).abs());
        let target = common::random_map(&mut rng, rows, cols, 1.0);
        if rows * cols > 1 {
            let noise: Vec<f64> = target.as_slice().iter().zip(values).map(|(t, y)| t - y).collect();
            let expect = 10.0 * (pairwise(target.as_slice()) / pairwise(&noise)).log10();
            let r = regression_metrics(&output, &target).unwrap();
            worst_metric = worst_metric.max((r.snr_db.unwrap() - expect).abs());
            let mse = noise.iter().map(|e| e * e).sum::<f64>() / n;
            worst_metric = worst_metric.max((r.mse - mse).abs());
        }
    }
    verdict(
        worst_db <= 0.01 && counts_ok && worst_metric <= 1e-12,
        format!(
            "20 denoise inputs within {worst_db:.2e} dB of 0; confusion counts exact: {counts_ok}; metric max abs diff {worst_metric:.2e}"
        ),
    )
}

fn main() -> ExitCode {
    let mut gating_failed = false;
    let mut report = |n: usize, gating: bool, prior_secs: f64, f: &dyn Fn() -> Verdict| {
        let start = Instant::now();
        let v = f();
        let secs = prior_secs + start.elapsed().as_secs_f64();
        let status = match (v.pass, gating) {
            (true, _) => "PASS",
            (false, true) => "FAIL",
            (false, false) => "FAIL (informative)",
        };
        println!("criterion {n}: {status} — {} [{secs:.1} s]", v.detail);
        gating_failed |= gating && !v.pass;
    };

    report(1, true, 0.0, &encoding);
    report(2, true, 0.0, &cnn_degeneration);

    let start = Instant::now();
    let sets: Vec<OperatorSet> = OperatorSet::library().collect();
    let cases = default_cases();
    let reports = sweep(&sets, &cases, &[0, 1, 2, 3, 4], DEFAULT_STEP).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let worst = reports.iter().max_by(|a, b| a.max_rel_error.total_cmp(&b.max_rel_error)).unwrap();
    let failing: Vec<String> = reports
        .iter()
        .filter(|r| !(r.max_rel_error < DEFAULT_TOLERANCE))
        .map(|r| format!("set {} {} seed {}", r.set, r.case, r.seed))
        .collect();
    let redraws: usize = reports.iter().map(|r| r.redraws).sum();
    report(3, true, secs, &|| {
        verdict(
            failing.is_empty(),
            format!(
                "{} instances (28 sets x {} shapes x 5 seeds), worst {:.2e} at set {} {} seed {}, {redraws} redraws, failing {failing:?}",
                reports.len(),
                cases.len(),
                worst.max_rel_error,
                worst.set,
                worst.case,
                worst.seed
            ),
        )
    });
    report(4, true, 0.0, &learning_rate);
    report(5, true, 0.0, &|| {
        let resampled = cases
            .iter()
            .filter(|c| {
                let s = [c.first, c.second];
                s.iter().any(|x| matches!(x, Sampling::Down(2))) && s.iter().any(|x| matches!(x, Sampling::Up(2)))
            })
            .count();
        verdict(
            failing.is_empty() && resampled == cases.len(),
            format!("all {resampled} shapes down- and up-sample by 2 in their hidden layers; covered by criterion 3"),
        )
    });
    report(6, true, 0.0, &search_equals_brute_force);
    report(7, true, 0.0, &learnability);
    report(8, false, 0.0, &search_vs_cnn);
    report(9, true, 0.0, &data_and_metrics);

    if gating_failed {
        println!("acceptance: FAIL");
        ExitCode::FAILURE
    } else {
        println!("acceptance: PASS");
        ExitCode::SUCCESS
    }
}
