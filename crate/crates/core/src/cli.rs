//! Command-line front end: `train`, `gis`, `eval`, `gradcheck`, `make-data`.
//!
//! Every command is deterministic for a fixed seed. Wall-clock timings go
//! to `timing.tsv` only, so every other artifact is byte-reproducible.
//!
//! Exit codes: 0 success, 2 bad input, 3 numeric failure (divergence, or a
//! gradient check above tolerance).

use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::data::{self, Dataset, DatasetPair, TaskKind};
use crate::error::{OnnError, Result};
use crate::gis::{gis_search, GisConfig, OperatorLibrary};
use crate::gradcheck::{self, GradcheckReport};
use crate::metrics::{self, MetricReport};
use crate::model_io::{load_model, save_model, to_json_exact};
use crate::network::{NetworkModel, NetworkSpec};
use crate::operators::{OperatorParams, OperatorSet};
use crate::train::{train, write_history, write_timing, BatchPolicy, HistoryRow, IterationTiming, TrainConfig};

/// Everything an experiment needs; loaded from `--config` and overridden by flags.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub task: Option<TaskKind>,
    /// Defaults to the `In×16×32×Out` experiment network sized to the data.
    pub network: Option<NetworkSpec>,
    pub params: OperatorParams,
    pub train: TrainConfig,
    pub gis: GisConfig,
    /// Candidate operator sets (indices); all 28 when absent.
    pub library: Option<Vec<usize>>,
    /// Operator set given to every non-output layer by `train`.
    pub operator_set: Option<usize>,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    pub seed: u64,
    /// Threshold turning outputs into masks for segmentation scores.
    pub threshold: f64,
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| OnnError::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| OnnError::format(path, e.to_string()))
    }

    fn data_dir(&self) -> Result<&Path> {
        self.data
            .as_deref()
            .ok_or_else(|| OnnError::invalid("no dataset given (--data or \"data\" in the config)"))
    }

    fn out_dir(&self) -> Result<PathBuf> {
        let dir = self.out.clone().unwrap_or_else(|| PathBuf::from("onn-out"));
        fs::create_dir_all(&dir).map_err(|e| OnnError::io(&dir, e))?;
        Ok(dir)
    }

    fn library(&self) -> Result<OperatorLibrary> {
        match &self.library {
            Some(ids) => Ok(OperatorLibrary::new(
                ids.iter().map(|&i| OperatorSet::from_index(i)).collect::<Result<_>>()?,
            )),
            None => Ok(OperatorLibrary::default()),
        }
    }

    /// The configured network, or the default experiment network for the
    /// dataset's size. `operator_set`, when given, goes to every layer but
    /// the output layer, which stays a convolutional layer.
    fn network_for(&self, ds: &Dataset) -> Result<NetworkSpec> {
        let (rows, cols) = ds.dims().ok_or_else(|| OnnError::invalid("empty dataset"))?;
        let mut spec = match &self.network {
            Some(spec) => spec.clone(),
            None => NetworkSpec::default_experiment(1, 1, rows, cols),
        };
        if let Some(id) = self.operator_set {
            let set = OperatorSet::from_index(id)?;
            let depth = spec.layers.len();
            for layer in &mut spec.layers[..depth - 1] {
                layer.operator_set = set;
            }
        }
        if (spec.input_rows, spec.input_cols) != (rows, cols) || spec.input_channels != 1 {
            return Err(OnnError::dims(format!(
                "network expects {}x{}x{}, dataset is 1x{rows}x{cols}",
                spec.input_channels, spec.input_rows, spec.input_cols
            )));
        }
        if spec.output_dims()? != (rows, cols) || spec.output_channels() != 1 {
            return Err(OnnError::dims("network output must match the target maps"));
        }
        Ok(spec)
    }
}

#[derive(Debug, Parser)]
#[command(name = "onn", version, about = "Operational neural networks: training, operator search, evaluation")]
pub struct Cli {
    /// Worker threads (default: all cores).
    #[arg(long, global = true, env = "ONN_THREADS")]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a network by back-propagation.
    Train(RunArgs),
    /// Search operator sets layer by layer, then train the winner.
    Gis(RunArgs),
    /// Run a saved model on a dataset and score it.
    Eval(EvalArgs),
    /// Compare analytic and numeric gradients for operator sets.
    Gradcheck(GradcheckArgs),
    /// Write a synthetic (or ingested) dataset.
    MakeData(MakeDataArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub data: Option<PathBuf>,
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Training iterations (the final run's, for `gis`).
    #[arg(long)]
    pub iters: Option<usize>,
    /// Candidate operator sets, e.g. "0,9,13".
    #[arg(long)]
    pub opset_library: Option<String>,
    /// Operator set for every non-output layer (`train`).
    #[arg(long)]
    pub opset: Option<usize>,
    #[arg(long)]
    pub epsilon0: Option<f64>,
    /// Learning-rate growth factor after an improving iteration.
    #[arg(long)]
    pub alpha_lr: Option<f64>,
    /// Learning-rate shrink factor otherwise.
    #[arg(long)]
    pub beta_lr: Option<f64>,
    #[arg(long)]
    pub eps_min: Option<f64>,
    #[arg(long)]
    pub eps_max: Option<f64>,
    #[arg(long, value_enum)]
    pub task: Option<TaskKind>,
    /// K of the sin, sinc and cubic nodal operators.
    #[arg(long)]
    pub k_harmonic: Option<f64>,
    #[arg(long)]
    pub k_dog: Option<f64>,
    #[arg(long)]
    pub k_chirp: Option<f64>,
    #[arg(long)]
    pub k_cubic: Option<f64>,
    /// Lin-cut saturation threshold.
    #[arg(long)]
    pub cut: Option<f64>,
    /// Stop once the training MSE is at or below this value.
    #[arg(long)]
    pub target_mse: Option<f64>,
    #[arg(long, value_parser = parse_policy)]
    pub batch_policy: Option<BatchPolicy>,
    #[arg(long)]
    pub passes: Option<usize>,
    #[arg(long)]
    pub n_bp: Option<usize>,
    #[arg(long)]
    pub short_iters: Option<usize>,
    #[arg(long)]
    pub threshold: Option<f64>,
}

fn parse_policy(s: &str) -> std::result::Result<BatchPolicy, String> {
    match s {
        "full-batch" => Ok(BatchPolicy::FullBatch),
        "per-item" => Ok(BatchPolicy::PerItem),
        _ => Err(format!("expected full-batch or per-item, got {s:?}")),
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Score outputs as masks thresholded here (segmentation datasets).
    #[arg(long, default_value_t = 0.0)]
    pub threshold: f64,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    /// Operator sets to check (default: all 28).
    #[arg(long)]
    pub opset_library: Option<String>,
    /// Random instances per set and network shape.
    #[arg(long, default_value_t = 5)]
    pub seeds: u64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_TOLERANCE)]
    pub tolerance: f64,
    #[arg(long, default_value_t = gradcheck::DEFAULT_STEP)]
    pub step: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct MakeDataArgs {
    #[arg(long, value_enum)]
    pub kind: TaskKind,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 8)]
    pub count: usize,
    #[arg(long, default_value_t = 16)]
    pub size: usize,
    /// Build the dataset from `DIR/inputs/*` and `DIR/targets/*` (matching
    /// file names) instead of generating it; images are resized bilinearly.
    #[arg(long, value_name = "DIR")]
    pub ingest: Option<PathBuf>,
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}

pub fn run(cli: Cli) -> Result<i32> {
    let pool = match cli.threads {
        Some(0) => return Err(OnnError::invalid("--threads must be at least 1")),
        Some(n) => rayon::ThreadPoolBuilder::new().num_threads(n).build(),
        None => rayon::ThreadPoolBuilder::new().build(),
    }
    .map_err(|e| OnnError::invalid(format!("thread pool: {e}")))?;
    pool.install(|| match cli.command {
        Command::Train(args) => cmd_train(&resolve(&args)?).map(|_| 0),
        Command::Gis(args) => cmd_gis(&resolve(&args)?).map(|_| 0),
        Command::Eval(args) => cmd_eval(&args.model, &args.data, args.out.as_deref(), args.threshold).map(|_| 0),
        Command::Gradcheck(args) => cmd_gradcheck(&args),
        Command::MakeData(args) => cmd_make_data(&args).map(|_| 0),
    })
}

/// Config file first, then flags.
pub fn resolve(args: &RunArgs) -> Result<ExperimentConfig> {
    let mut cfg = match &args.config {
        Some(path) => ExperimentConfig::load(path)?,
        None => ExperimentConfig::default(),
    };
    if let Some(d) = &args.data {
        cfg.data = Some(d.clone());
    }
    if let Some(o) = &args.out {
        cfg.out = Some(o.clone());
    }
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(n) = args.iters {
        cfg.train.iter_max = n;
        cfg.gis.final_iter_max = n;
    }
    if let Some(list) = &args.opset_library {
        cfg.library = Some(OperatorLibrary::parse(list)?.sets.iter().map(|s| s.index()).collect());
    }
    if let Some(s) = args.opset {
        cfg.operator_set = Some(s);
    }
    if let Some(e) = args.epsilon0 {
        cfg.train.epsilon0 = e;
    }
    for (flag, field) in [
        (args.alpha_lr, &mut cfg.train.alpha_lr),
        (args.beta_lr, &mut cfg.train.beta_lr),
        (args.eps_min, &mut cfg.train.eps_min),
        (args.eps_max, &mut cfg.train.eps_max),
        (args.k_harmonic, &mut cfg.params.k_harmonic),
        (args.k_dog, &mut cfg.params.k_dog),
        (args.k_chirp, &mut cfg.params.k_chirp),
        (args.k_cubic, &mut cfg.params.k_cubic),
        (args.cut, &mut cfg.params.cut),
    ] {
        if let Some(v) = flag {
            *field = v;
        }
    }
    if let Some(t) = args.task {
        cfg.task = Some(t);
    }
    if let Some(t) = args.target_mse {
        cfg.train.target_metric = Some(t);
        cfg.gis.target_metric = Some(t);
    }
    if let Some(p) = args.batch_policy {
        cfg.train.batch_policy = p;
    }
    if let Some(p) = args.passes {
        cfg.gis.passes = p;
    }
    if let Some(n) = args.n_bp {
        cfg.gis.n_bp = n;
    }
    if let Some(n) = args.short_iters {
        cfg.gis.short_iter_max = n;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    cfg.train.seed = cfg.seed;
    cfg.gis.seed = cfg.seed;
    Ok(cfg)
}

fn write_file(path: &Path, bytes: impl AsRef<[u8]>) -> Result<()> {
    fs::write(path, bytes).map_err(|e| OnnError::io(path, e))
}

fn write_tables(dir: &Path, history: &[HistoryRow], timing: &[IterationTiming]) -> Result<()> {
    let mut buf = Vec::new();
    write_history(history, &mut buf).expect("in-memory write");
    write_file(&dir.join("history.tsv"), &buf)?;
    let mut buf = Vec::new();
    write_timing(timing, &mut buf).expect("in-memory write");
    write_file(&dir.join("timing.tsv"), &buf)
}

fn load_checked_dataset(dir: &Path, task: Option<TaskKind>) -> Result<Dataset> {
    let ds = data::load_dataset(dir)?;
    if let Some(t) = task {
        if t != ds.task {
            return Err(OnnError::invalid(format!(
                "config task {} but dataset holds {}",
                t.name(),
                ds.task.name()
            )));
        }
    }
    Ok(ds)
}

#[derive(Clone, Debug)]
pub struct TrainArtifacts {
    pub model: NetworkModel,
    pub history: Vec<HistoryRow>,
    pub reports: Vec<MetricReport>,
    pub out: PathBuf,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    let ds = load_checked_dataset(cfg.data_dir()?, cfg.task)?;
    let spec = cfg.network_for(&ds)?;
    let out = cfg.out_dir()?;
    let model = NetworkModel::init_with(spec, cfg.params, cfg.seed, crate::network::INIT_AMPLITUDE)?;
    write_json(&out.join("config.json"), cfg)?;
    let outcome = train(model, &ds.samples(), &cfg.train)?;
    save_model(&outcome.model, out.join("model.json"))?;
    write_tables(&out, &outcome.history, &outcome.timing)?;
    let reports = evaluate(&outcome.model, &ds, &out, cfg.threshold)?;
    print_timing(&outcome.timing);
    if let (Some(first), Some(last)) = (outcome.history.first(), outcome.history.last()) {
        println!(
            "mse {:.6e} -> {:.6e} after {} iterations",
            first.mse, last.mse, last.iteration
        );
    }
    Ok(TrainArtifacts {
        model: outcome.model,
        history: outcome.history,
        reports,
        out,
    })
}

fn print_timing(timing: &[IterationTiming]) {
    if timing.is_empty() {
        return;
    }
    let n = timing.len() as f64;
    let fp = timing.iter().map(|t| t.forward_ms).sum::<f64>() / n;
    let bp = timing.iter().map(|t| t.backward_ms).sum::<f64>() / n;
    println!("timing: forward {fp:.3} ms/iter, backward {bp:.3} ms/iter");
}

pub fn cmd_gis(cfg: &ExperimentConfig) -> Result<TrainArtifacts> {
    let ds = load_checked_dataset(cfg.data_dir()?, cfg.task)?;
    let spec = cfg.network_for(&ds)?;
    let out = cfg.out_dir()?;
    let depth = spec.layers.len();
    let library = cfg.library()?.freeze(depth, spec.layers[depth - 1].operator_set);
    write_json(&out.join("config.json"), cfg)?;
    let outcome = gis_search(&spec, cfg.params, &ds.samples(), &library, &cfg.gis, &cfg.train)?;

    let mut buf = Vec::new();
    outcome.log.write_table(&mut buf).expect("in-memory write");
    write_file(&out.join("gis_log.tsv"), &buf)?;
    save_model(&outcome.model, out.join("model.json"))?;
    let mut buf = Vec::new();
    write_history(&outcome.final_history, &mut buf).expect("in-memory write");
    write_file(&out.join("history.tsv"), &buf)?;
    let reports = evaluate(&outcome.model, &ds, &out, cfg.threshold)?;

    let sets: Vec<String> = outcome.assignment.iter().map(|s| s.to_string()).collect();
    println!("assignment (layer 1..{depth}): {}", sets.join(", "));
    for pass in 1..=cfg.gis.passes {
        for l in (1..=depth).rev() {
            let ranking = outcome.log.ranking(pass, l);
            if ranking.is_empty() {
                continue;
            }
            let top: Vec<String> = ranking
                .iter()
                .take(3)
                .map(|r| format!("{}={:.4e}", r.set.index(), r.best_mse))
                .collect();
            println!("pass {pass} layer {l}: {}", top.join("  "));
        }
    }
    Ok(TrainArtifacts {
        model: outcome.model,
        history: outcome.final_history,
        reports,
        out,
    })
}

/// Per-item scores, written to `metrics.jsonl` with a final summary line,
/// plus output images under `outputs/`.
fn evaluate(model: &NetworkModel, ds: &Dataset, out: &Path, threshold: f64) -> Result<Vec<MetricReport>> {
    let outputs_dir = out.join("outputs");
    fs::create_dir_all(&outputs_dir).map_err(|e| OnnError::io(&outputs_dir, e))?;
    let mut reports = Vec::with_capacity(ds.pairs.len());
    let mut lines = String::new();
    for DatasetPair { id, input, target } in &ds.pairs {
        let y = model.forward(std::slice::from_ref(input))?.remove(0);
        let mut report = if ds.task == TaskKind::Segment {
            metrics::segmentation_metrics(&y, target, threshold)?
        } else {
            metrics::regression_metrics(&y, target)?
        };
        report.id = Some(id.clone());
        data::write_raw(outputs_dir.join(format!("{id}_output.raw")), &y)?;
        data::write_pgm(outputs_dir.join(format!("{id}_output.pgm")), &y)?;
        lines.push_str(&serde_json::to_string(&report).map_err(|e| OnnError::invalid(e.to_string()))?);
        lines.push('\n');
        reports.push(report);
    }
    let summary = summarize(&reports);
    lines.push_str(&serde_json::to_string(&summary).map_err(|e| OnnError::invalid(e.to_string()))?);
    lines.push('\n');
    write_file(&out.join("metrics.jsonl"), lines)?;
    Ok(reports)
}

/// Item means; SNR averages only the items where it is defined.
pub fn summarize(reports: &[MetricReport]) -> MetricReport {
    let n = reports.len().max(1) as f64;
    let snrs: Vec<f64> = reports.iter().filter_map(|r| r.snr_db).collect();
    let mean_opt = |f: fn(&MetricReport) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = reports.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    MetricReport {
        id: Some("mean".into()),
        snr_db: (!snrs.is_empty()).then(|| snrs.iter().sum::<f64>() / snrs.len() as f64),
        mse: reports.iter().map(|r| r.mse).sum::<f64>() / n,
        ce: mean_opt(|r| r.ce),
        f1: mean_opt(|r| r.f1),
        precision: mean_opt(|r| r.precision),
        recall: mean_opt(|r| r.recall),
        undefined_pr: reports.iter().any(|r| r.undefined_pr),
    }
}

pub fn cmd_eval(model_path: &Path, data_dir: &Path, out: Option<&Path>, threshold: f64) -> Result<Vec<MetricReport>> {
    let model = load_model(model_path)?;
    let ds = data::load_dataset(data_dir)?;
    let out = out.map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("onn-eval"));
    fs::create_dir_all(&out).map_err(|e| OnnError::io(&out, e))?;
    let reports = evaluate(&model, &ds, &out, threshold)?;
    let summary = summarize(&reports);
    println!("{}", serde_json::to_string(&summary).map_err(|e| OnnError::invalid(e.to_string()))?);
    Ok(reports)
}

/// Prints one row per operator set; exit code 3 if any exceeds the tolerance.
pub fn cmd_gradcheck(args: &GradcheckArgs) -> Result<i32> {
    let sets = match &args.opset_library {
        Some(list) => OperatorLibrary::parse(list)?.sets,
        None => OperatorSet::library().collect(),
    };
    if sets.is_empty() {
        return Err(OnnError::invalid("no operator sets to check"));
    }
    if !(args.tolerance >= 0.0) {
        return Err(OnnError::invalid(format!("tolerance {}", args.tolerance)));
    }
    let seeds: Vec<u64> = (0..args.seeds).map(|i| args.seed + i).collect();
    let reports = gradcheck::sweep(&sets, &gradcheck::default_cases(), &seeds, args.step)?;
    let table = gradcheck_table(&sets, &reports, args.tolerance);
    print!("{table}");
    if let Some(dir) = &args.out {
        fs::create_dir_all(dir).map_err(|e| OnnError::io(dir, e))?;
        write_file(&dir.join("gradcheck.tsv"), &table)?;
    }
    let failed = sets
        .iter()
        .any(|s| !(worst_error(&reports, s.index()) < args.tolerance));
    Ok(if failed { 3 } else { 0 })
}

fn worst_error(reports: &[GradcheckReport], set: usize) -> f64 {
    reports
        .iter()
        .filter(|r| r.set == set)
        .map(|r| r.max_rel_error)
        .fold(0.0, f64::max)
}

pub fn gradcheck_table(sets: &[OperatorSet], reports: &[GradcheckReport], tolerance: f64) -> String {
    let mut s = String::from("set\tpool\tact\tnodal\tmax_rel_error\tinstances\tredraws\tstatus\n");
    for set in sets {
        let rows: Vec<&GradcheckReport> = reports.iter().filter(|r| r.set == set.index()).collect();
        let worst = worst_error(reports, set.index());
        let redraws: usize = rows.iter().map(|r| r.redraws).sum();
        let status = if worst < tolerance { "pass" } else { "FAIL" };
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\t{:.3e}\t{}\t{}\t{}\n",
            set.index(),
            set.pool.name(),
            set.act.name(),
            set.nodal.name(),
            worst,
            rows.len(),
            redraws,
            status
        ));
    }
    s
}

pub fn cmd_make_data(args: &MakeDataArgs) -> Result<Dataset> {
    let (ds, meta) = match &args.ingest {
        None => (
            data::generate(args.kind, args.seed, args.count, args.size)?,
            serde_json::json!({"generator": args.kind.name(), "seed": args.seed, "size": args.size}),
        ),
        Some(dir) => (
            ingest_dir(dir, args.kind, args.size)?,
            serde_json::json!({"source": dir.display().to_string(), "resize": "bilinear", "size": args.size}),
        ),
    };
    data::save_dataset(&args.out, &ds, Some(meta))?;
    println!("wrote {} {} items to {}", ds.pairs.len(), args.kind.name(), args.out.display());
    Ok(ds)
}

fn ingest_dir(dir: &Path, kind: TaskKind, size: usize) -> Result<Dataset> {
    let inputs = dir.join("inputs");
    let mut names: Vec<PathBuf> = fs::read_dir(&inputs)
        .map_err(|e| OnnError::io(&inputs, e))?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file())
        .collect();
    names.sort();
    let mut pairs = Vec::with_capacity(names.len());
    for path in names {
        let file = path.file_name().expect("file").to_owned();
        let target_path = dir.join("targets").join(&file);
        let mut target = data::ingest_image(&target_path, size, size)?;
        if kind == TaskKind::Segment {
            target = target.map(|v| if v >= 0.0 { 1.0 } else { -1.0 });
        }
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("item");
        pairs.push(DatasetPair {
            id: stem.to_string(),
            input: data::ingest_image(&path, size, size)?,
            target,
        });
    }
    let ds = Dataset { task: kind, pairs };
    ds.validate()?;
    Ok(ds)
}

/// Writes `value` as JSON with exact floats; used for config snapshots.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let text = to_json_exact(value)?;
    let mut f = fs::File::create(path).map_err(|e| OnnError::io(path, e))?;
    f.write_all(text.as_bytes()).map_err(|e| OnnError::io(path, e))
}
