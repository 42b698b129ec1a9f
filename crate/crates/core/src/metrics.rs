//! Intensity normalization, SNR and pixelwise segmentation scores.

use serde::{Deserialize, Serialize};

use crate::error::{OnnError, Result};
use crate::tensor::Map2D;

/// Affine map of `[min, max]` onto `[-1, 1]`: `2 (p - min) / (max - min) - 1`.
///
/// `min`/`max` describe the container range (0..255 for 8-bit files), not
/// the extremes of a particular image.
pub fn normalize(image: &Map2D, min: f64, max: f64) -> Result<Map2D> {
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(OnnError::invalid(format!("normalization range [{min}, {max}]")));
    }
    let span = max - min;
    Ok(image.map(|p| 2.0 * (p - min) / span - 1.0))
}

/// Inverse of [`normalize`].
pub fn denormalize(image: &Map2D, min: f64, max: f64) -> Result<Map2D> {
    if !(min.is_finite() && max.is_finite()) || max <= min {
        return Err(OnnError::invalid(format!("normalization range [{min}, {max}]")));
    }
    let span = max - min;
    Ok(image.map(|p| (p + 1.0) * span / 2.0 + min))
}

/// Population variance, mean removed.
pub fn variance(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n
}

/// `10 log10(var(target) / var(target - output))` in dB; `+inf` for an
/// exact reconstruction.
pub fn snr(target: &Map2D, output: &Map2D) -> Result<f64> {
    target.ensure_same_dims(output, "snr")?;
    if !target.is_finite() || !output.is_finite() {
        return Err(OnnError::NonFinite("snr input".into()));
    }
    let signal = variance(target.as_slice());
    if signal == 0.0 {
        return Err(OnnError::invalid("target has zero variance; SNR undefined"));
    }
    let noise = target.zip_map(output, |t, y| t - y)?;
    let noise = variance(noise.as_slice());
    if noise == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal / noise).log10())
}

/// Mean squared pixel error.
pub fn mse(target: &Map2D, output: &Map2D) -> Result<f64> {
    target.ensure_same_dims(output, "mse")?;
    if target.is_empty() {
        return Err(OnnError::invalid("empty map"));
    }
    let sum: f64 = target.as_slice().iter().zip(output.as_slice()).map(|(t, y)| (t - y) * (t - y)).sum();
    Ok(sum / target.len() as f64)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub fp: usize,
    pub fn_: usize,
    pub tn: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

/// Per-item scores. Segmentation fields are present only for mask targets.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub id: Option<String>,
    /// `None` when the target has zero variance.
    #[serde(with = "float_or_string")]
    pub snr_db: Option<f64>,
    pub mse: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub ce: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub f1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub precision: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub recall: Option<f64>,
    /// Set when precision or recall had a zero denominator and was reported as 0.
    #[serde(skip_serializing_if = "std::ops::Not::not", default)]
    pub undefined_pr: bool,
}

/// JSON has no infinities, so `±inf` travels as a string.
mod float_or_string {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &Option<f64>, s: S) -> Result<S::Ok, S::Error> {
        match v {
            None => s.serialize_none(),
            Some(x) if x.is_finite() => s.serialize_f64(*x),
            Some(x) if *x > 0.0 => s.serialize_str("inf"),
            Some(_) => s.serialize_str("-inf"),
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Option<f64>, D::Error> {
        Ok(match Option::<Repr>::deserialize(d)? {
            None => None,
            Some(Repr::Num(x)) => Some(x),
            Some(Repr::Text(t)) if t == "inf" => Some(f64::INFINITY),
            Some(Repr::Text(t)) if t == "-inf" => Some(f64::NEG_INFINITY),
            Some(Repr::Text(t)) => return Err(serde::de::Error::custom(format!("bad float {t:?}"))),
        })
    }
}

/// True when every pixel is exactly `-1` or `+1`.
pub fn is_binary_mask(mask: &Map2D) -> bool {
    mask.as_slice().iter().all(|&v| v == 1.0 || v == -1.0)
}

pub fn confusion(output: &Map2D, truth: &Map2D, threshold: f64) -> Result<Confusion> {
    output.ensure_same_dims(truth, "segmentation")?;
    if !is_binary_mask(truth) {
        return Err(OnnError::invalid("truth mask must contain only -1 and +1"));
    }
    let mut c = Confusion::default();
    for (&y, &t) in output.as_slice().iter().zip(truth.as_slice()) {
        match (y >= threshold, t > 0.0) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

/// Thresholds `output` at `threshold` (predicted foreground where
/// `output >= threshold`) and scores it against a `{-1, +1}` mask.
pub fn segmentation_metrics(output: &Map2D, truth: &Map2D, threshold: f64) -> Result<MetricReport> {
    let c = confusion(output, truth, threshold)?;
    let mut report = MetricReport {
        snr_db: snr(truth, output).ok(),
        mse: mse(truth, output)?,
        ..MetricReport::default()
    };
    fill_segmentation(&mut report, &c);
    Ok(report)
}

pub(crate) fn fill_segmentation(report: &mut MetricReport, c: &Confusion) {
    let total = c.total().max(1) as f64;
    let acc = (c.tp + c.tn) as f64 / total;
    let ratio = |num: usize, den: usize| if den == 0 { None } else { Some(num as f64 / den as f64) };
    let p = ratio(c.tp, c.tp + c.fp);
    let r = ratio(c.tp, c.tp + c.fn_);
    report.undefined_pr = p.is_none() || r.is_none();
    let (p, r) = (p.unwrap_or(0.0), r.unwrap_or(0.0));
    report.ce = Some(1.0 - acc);
    report.precision = Some(p);
    report.recall = Some(r);
    report.f1 = Some(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
}

/// SNR and MSE of a regression output.
pub fn regression_metrics(output: &Map2D, target: &Map2D) -> Result<MetricReport> {
    Ok(MetricReport {
        snr_db: snr(target, output).ok(),
        mse: mse(target, output)?,
        ..MetricReport::default()
    })
}
