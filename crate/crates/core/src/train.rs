//! Gradient-descent training with the global adaptive learning rate.

use std::io::Write;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::backprop::{apply_update, item_gradients, squared_error, Gradients, Sample};
use crate::error::{OnnError, Result};
use crate::metrics::snr;
use crate::network::NetworkModel;
use crate::tensor::Map2D;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BatchPolicy {
    /// Update after every item.
    PerItem,
    /// Accumulate over all items, then update once.
    #[default]
    FullBatch,
}

/// The only loss: mean squared pixel error over every item and channel.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LossKind {
    #[default]
    Mse,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epsilon0: f64,
    pub alpha_lr: f64,
    pub beta_lr: f64,
    pub eps_min: f64,
    pub eps_max: f64,
    pub iter_max: usize,
    /// Stop as soon as the batch loss is at or below this value.
    pub target_metric: Option<f64>,
    pub batch_policy: BatchPolicy,
    pub loss: LossKind,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epsilon0: 0.05,
            alpha_lr: 1.05,
            beta_lr: 0.7,
            eps_min: 5e-5,
            eps_max: 0.5,
            iter_max: 240,
            target_metric: None,
            batch_policy: BatchPolicy::FullBatch,
            loss: LossKind::Mse,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.eps_min > 0.0 && self.eps_min < self.eps_max && self.eps_max.is_finite()) {
            return Err(OnnError::invalid(format!(
                "learning-rate range [{}, {}]",
                self.eps_min, self.eps_max
            )));
        }
        if !(self.alpha_lr > 1.0 && self.alpha_lr.is_finite()) || !(self.beta_lr > 0.0 && self.beta_lr < 1.0) {
            return Err(OnnError::invalid(format!(
                "need alpha > 1 > beta > 0, got alpha {} beta {}",
                self.alpha_lr, self.beta_lr
            )));
        }
        if !(self.epsilon0 >= self.eps_min && self.epsilon0 <= self.eps_max) {
            return Err(OnnError::invalid(format!(
                "epsilon0 {} outside [{}, {}]",
                self.epsilon0, self.eps_min, self.eps_max
            )));
        }
        if let Some(t) = self.target_metric {
            if !t.is_finite() || t < 0.0 {
                return Err(OnnError::invalid(format!("target metric {t}")));
            }
        }
        Ok(())
    }
}

/// Grow by `alpha` after an improvement, shrink by `beta` otherwise, never
/// leaving `[eps_min, eps_max]`: a step that would leave the range is not taken.
pub fn adapt_learning_rate(eps_prev: f64, e_t: f64, e_prev: f64, cfg: &TrainConfig) -> f64 {
    if e_t < e_prev {
        let grown = cfg.alpha_lr * eps_prev;
        if grown <= cfg.eps_max {
            return grown;
        }
    } else {
        let shrunk = cfg.beta_lr * eps_prev;
        if shrunk >= cfg.eps_min {
            return shrunk;
        }
    }
    eps_prev
}

/// Loss of the model at the start of an iteration, and the rate used for
/// the update that follows it.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistoryRow {
    pub iteration: usize,
    pub mse: f64,
    pub epsilon: f64,
    /// Mean SNR (dB) over items and output channels; NaN when undefined.
    pub snr_db: f64,
}

/// Wall-clock cost of one iteration. Kept apart from the history so the
/// history stays reproducible byte for byte.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IterationTiming {
    pub iteration: usize,
    pub forward_ms: f64,
    pub backward_ms: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub model: NetworkModel,
    /// One row per iteration; the last row (iteration `iter_max`, or the
    /// iteration that met the target) describes the returned model.
    pub history: Vec<HistoryRow>,
    pub timing: Vec<IterationTiming>,
    pub reached_target: bool,
}

impl TrainOutcome {
    pub fn initial_loss(&self) -> Option<f64> {
        self.history.first().map(|r| r.mse)
    }

    pub fn final_loss(&self) -> Option<f64> {
        self.history.last().map(|r| r.mse)
    }
}

pub fn write_history<W: Write>(rows: &[HistoryRow], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration\tmse\tepsilon\tsnr_db")?;
    for r in rows {
        writeln!(w, "{}\t{:.16e}\t{:.16e}\t{:.16e}", r.iteration, r.mse, r.epsilon, r.snr_db)?;
    }
    Ok(())
}

pub fn write_timing<W: Write>(rows: &[IterationTiming], mut w: W) -> std::io::Result<()> {
    writeln!(w, "iteration\tforward_ms\tbackward_ms")?;
    for r in rows {
        writeln!(w, "{}\t{:.3}\t{:.3}", r.iteration, r.forward_ms, r.backward_ms)?;
    }
    Ok(())
}

/// Mean SNR over outputs; NaN if no channel has a defined SNR.
fn mean_snr(outputs: &[Vec<Map2D>], samples: &[Sample]) -> f64 {
    let values: Vec<f64> = outputs
        .iter()
        .zip(samples)
        .flat_map(|(out, s)| out.iter().zip(&s.target).filter_map(|(y, t)| snr(t, y).ok()))
        .collect();
    if values.is_empty() {
        f64::NAN
    } else {
        values.iter().sum::<f64>() / values.len() as f64
    }
}

struct Evaluation {
    loss: f64,
    snr_db: f64,
    grads: Option<Gradients>,
    forward_ms: f64,
    backward_ms: f64,
}

fn evaluate(model: &NetworkModel, samples: &[Sample], pixels: f64, with_grads: bool) -> Result<Evaluation> {
    let started = Instant::now();
    if !with_grads {
        let outs = samples
            .par_iter()
            .map(|s| model.forward(&s.input))
            .collect::<Result<Vec<_>>>()?;
        let mut sq = 0.0;
        for (o, s) in outs.iter().zip(samples) {
            sq += squared_error(o, &s.target)?;
        }
        return Ok(Evaluation {
            loss: sq / pixels,
            snr_db: mean_snr(&outs, samples),
            grads: None,
            forward_ms: started.elapsed().as_secs_f64() * 1e3,
            backward_ms: 0.0,
        });
    }
    let parts = samples
        .par_iter()
        .map(|s| item_gradients(model, s, pixels))
        .collect::<Result<Vec<_>>>()?;
    let mut grads = Gradients::zeros_like(model);
    let mut sq = 0.0;
    let mut outs = Vec::with_capacity(parts.len());
    for (out, s, st) in parts {
        sq += s;
        grads.add_assign(&st.grads)?;
        outs.push(out);
    }
    let elapsed = started.elapsed().as_secs_f64() * 1e3;
    Ok(Evaluation {
        loss: sq / pixels,
        snr_db: mean_snr(&outs, samples),
        grads: Some(grads),
        // Forward and backward run fused per item; split evenly as an estimate.
        forward_ms: elapsed / 2.0,
        backward_ms: elapsed / 2.0,
    })
}

fn check_samples(model: &NetworkModel, samples: &[Sample]) -> Result<f64> {
    if samples.is_empty() {
        return Err(OnnError::invalid("empty dataset"));
    }
    let out_dims = model.spec.output_dims()?;
    let out_channels = model.spec.output_channels();
    for (i, s) in samples.iter().enumerate() {
        if s.input.len() != model.spec.input_channels
            || s.input.iter().any(|m| m.dims() != (model.spec.input_rows, model.spec.input_cols))
        {
            return Err(OnnError::dims(format!("item {i}: input does not match the network")));
        }
        if s.target.len() != out_channels || s.target.iter().any(|m| m.dims() != out_dims) {
            return Err(OnnError::dims(format!(
                "item {i}: target must be {out_channels} maps of {}x{}",
                out_dims.0, out_dims.1
            )));
        }
    }
    Ok(samples.iter().flat_map(|s| &s.target).map(Map2D::len).sum::<usize>() as f64)
}

/// Gradient descent from `model` until `iter_max` or until the loss meets
/// `target_metric`. Deterministic: items are reduced in order regardless of
/// the thread pool.
pub fn train(mut model: NetworkModel, samples: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    let pixels = check_samples(&model, samples)?;
    let mut outcome = TrainOutcome {
        model: model.clone(),
        history: Vec::new(),
        timing: Vec::new(),
        reached_target: false,
    };
    if cfg.iter_max == 0 {
        return Ok(outcome);
    }

    let mut eps = cfg.epsilon0;
    let mut prev_loss: Option<f64> = None;
    for t in 0..=cfg.iter_max {
        let last = t == cfg.iter_max;
        let with_grads = !last && cfg.batch_policy == BatchPolicy::FullBatch;
        let eval = evaluate(&model, samples, pixels, with_grads).map_err(|e| divergence(e, t, f64::NAN))?;
        if !eval.loss.is_finite() {
            return Err(OnnError::Divergence {
                iteration: t,
                loss: eval.loss,
            });
        }
        if let Some(prev) = prev_loss {
            eps = adapt_learning_rate(eps, eval.loss, prev, cfg);
        }
        prev_loss = Some(eval.loss);
        outcome.history.push(HistoryRow {
            iteration: t,
            mse: eval.loss,
            epsilon: eps,
            snr_db: eval.snr_db,
        });
        let reached = cfg.target_metric.is_some_and(|target| eval.loss <= target);
        let mut timing = IterationTiming {
            iteration: t,
            forward_ms: eval.forward_ms,
            backward_ms: eval.backward_ms,
        };
        if last || reached {
            outcome.reached_target = reached;
            outcome.timing.push(timing);
            break;
        }
        match cfg.batch_policy {
            BatchPolicy::FullBatch => {
                let grads = eval.grads.expect("requested");
                apply_update(&mut model, &grads, eps).map_err(|e| divergence(e, t, eval.loss))?;
            }
            BatchPolicy::PerItem => {
                let started = Instant::now();
                for s in samples {
                    let normalizer = s.target.iter().map(Map2D::len).sum::<usize>() as f64;
                    let (_, _, st) =
                        item_gradients(&model, s, normalizer).map_err(|e| divergence(e, t, eval.loss))?;
                    apply_update(&mut model, &st.grads, eps).map_err(|e| divergence(e, t, eval.loss))?;
                }
                let ms = started.elapsed().as_secs_f64() * 1e3;
                timing.forward_ms += ms / 2.0;
                timing.backward_ms += ms / 2.0;
            }
        }
        outcome.timing.push(timing);
    }
    outcome.model = model;
    Ok(outcome)
}

fn divergence(e: OnnError, iteration: usize, loss: f64) -> OnnError {
    match e {
        OnnError::NonFinite(_) => OnnError::Divergence { iteration, loss },
        other => other,
    }
}
